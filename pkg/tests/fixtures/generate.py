"""Regenerate the curated CSV fixtures in this directory.

    python tests/fixtures/generate.py

The linkage corpus has 200 meter addresses with labelled perturbations and
expected outcomes. Expected fuzzy scores come from a full-matrix edit distance
written here, independent of the library.
"""
import csv
import json
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

HERE = Path(__file__).parent

# building-side street spellings per ZIP; normalized forms are pairwise far apart
STREETS = {
    "02101": ["Washington Avenue", "Elm Street", "Ash Lane", "Commonwealth Ave", "Beacon Court"],
    "02102": ["Oak Ridge Road", "Pine Street", "Huntington Avenue", "Fox Ter", "Massachusetts Ave"],
    "02103": ["North Harbor Drive", "Birch Pl", "Cambridge Parkway", "Lee Cir", "Tremont Street"],
    "02104": ["Summer Street", "Dorchester Boulevard", "Kent Ln", "Quincy Highway", "Garden Court"],
    "02105": ["West Newton Street", "Ivy Rd", "Charlesgate Road", "Lowell Place", "May St"],
}
NUMBERS = [10, 12, 14, 16, 18, 20]


def edit_distance(a, b):
    d = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        d[i][0] = i
    for j in range(len(b) + 1):
        d[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[-1][-1]


def score(a, b):
    m = max(len(a), len(b))
    ratio = Decimal(100) * (1 - Decimal(edit_distance(a, b)) / Decimal(m))
    return int(ratio.quantize(Decimal(1), rounding=ROUND_HALF_UP))


# a hand-written normal form for the fixture's own spellings
CANON = {
    "Washington Avenue": "WASHINGTON AVE", "Elm Street": "ELM ST", "Ash Lane": "ASH LN",
    "Commonwealth Ave": "COMMONWEALTH AVE", "Beacon Court": "BEACON CT", "Oak Ridge Road": "OAK RIDGE RD",
    "Pine Street": "PINE ST", "Huntington Avenue": "HUNTINGTON AVE", "Fox Ter": "FOX TER",
    "Massachusetts Ave": "MASSACHUSETTS AVE", "North Harbor Drive": "N HARBOR DR", "Birch Pl": "BIRCH PL",
    "Cambridge Parkway": "CAMBRIDGE PKWY", "Lee Cir": "LEE CIR", "Tremont Street": "TREMONT ST",
    "Summer Street": "SUMMER ST", "Dorchester Boulevard": "DORCHESTER BLVD", "Kent Ln": "KENT LN",
    "Quincy Highway": "QUINCY HWY", "Garden Court": "GARDEN CT", "West Newton Street": "W NEWTON ST",
    "Ivy Rd": "IVY RD", "Charlesgate Road": "CHARLESGATE RD", "Lowell Place": "LOWELL PL", "May St": "MAY ST",
}

# (zip, building street, AMI spelling) with the canonical AMI form
FORMAT_VARIANTS = [
    ("02101", "Washington Avenue", "washington ave."), ("02101", "Elm Street", "ELM STR"),
    ("02101", "Commonwealth Ave", "Commonwealth Avenue"), ("02102", "Pine Street", "pine st"),
    ("02102", "Huntington Avenue", "HUNTINGTON AVE"), ("02102", "Fox Ter", "Fox Terrace"),
    ("02103", "North Harbor Drive", "N. Harbor Dr"), ("02103", "Cambridge Parkway", "Cambridge Pkwy"),
    ("02103", "Lee Cir", "Lee Circle"), ("02104", "Dorchester Boulevard", "Dorchester Blvd."),
    ("02104", "Quincy Highway", "quincy hwy"), ("02104", "Garden Court", "GARDEN CT."),
    ("02105", "West Newton Street", "W Newton St"), ("02105", "Lowell Place", "lowell pl"),
    ("02105", "Charlesgate Road", "Charlesgate Rd."),
]
FORMAT_CANON = {
    "washington ave.": "WASHINGTON AVE", "ELM STR": "ELM ST", "Commonwealth Avenue": "COMMONWEALTH AVE",
    "pine st": "PINE ST", "HUNTINGTON AVE": "HUNTINGTON AVE", "Fox Terrace": "FOX TER",
    "N. Harbor Dr": "N HARBOR DR", "Cambridge Pkwy": "CAMBRIDGE PKWY", "Lee Circle": "LEE CIR",
    "Dorchester Blvd.": "DORCHESTER BLVD", "quincy hwy": "QUINCY HWY", "GARDEN CT.": "GARDEN CT",
    "W Newton St": "W NEWTON ST", "lowell pl": "LOWELL PL", "Charlesgate Rd.": "CHARLESGATE RD",
}
# single-character typos on long names (accepted) and short names (rejected)
LONG_TYPOS = [
    ("02101", "Washington Avenue", "Washingtan Avenue"), ("02101", "Commonwealth Ave", "Commonwelth Ave"),
    ("02102", "Huntington Avenue", "Huntingdon Avenue"), ("02102", "Massachusetts Ave", "Massachusets Ave"),
    ("02103", "Cambridge Parkway", "Cambrige Parkway"), ("02103", "Tremont Street", "Tremount Street"),
    ("02104", "Dorchester Boulevard", "Dorchestor Boulevard"), ("02104", "Quincy Highway", "Quincey Highway"),
    ("02105", "Charlesgate Road", "Charlesgat Road"), ("02105", "West Newton Street", "West Newtown Street"),
]
LONG_TYPO_CANON = {
    "Washingtan Avenue": "WASHINGTAN AVE", "Commonwelth Ave": "COMMONWELTH AVE",
    "Huntingdon Avenue": "HUNTINGDON AVE", "Massachusets Ave": "MASSACHUSETS AVE",
    "Cambrige Parkway": "CAMBRIGE PKWY", "Tremount Street": "TREMOUNT ST",
    "Dorchestor Boulevard": "DORCHESTOR BLVD", "Quincey Highway": "QUINCEY HWY",
    "Charlesgat Road": "CHARLESGAT RD", "West Newtown Street": "W NEWTOWN ST",
}
SHORT_TYPOS = [
    ("02101", "Ash Lane", "Asp Lane"), ("02102", "Fox Ter", "Fix Ter"), ("02103", "Lee Cir", "Lea Cir"),
    ("02101", "Elm Street", "Elk Street"), ("02104", "Kent Ln", "Kant Ln"), ("02105", "Ivy Rd", "Ivo Rd"),
    ("02105", "May St", "Mat St"), ("02102", "Pine Street", "Pune Street"),
]
SHORT_TYPO_CANON = {
    "Asp Lane": "ASP LN", "Fix Ter": "FIX TER", "Lea Cir": "LEA CIR", "Elk Street": "ELK ST",
    "Kant Ln": "KANT LN", "Ivo Rd": "IVO RD", "Mat St": "MAT ST", "Pune Street": "PUNE ST",
}


def buildings():
    rows = []
    for z, streets in STREETS.items():
        for si, street in enumerate(streets):
            for number in NUMBERS:
                rows.append({
                    "building_id": f"BLD-{z}-{si}-{number}", "lat": 42.35 + 0.001 * si,
                    "lon": -71.06 + 0.0001 * number, "footprint_area": 100 + number,
                    "height": 7.0, "street_number": str(number), "street_name": street, "zip": z,
                })
    return rows


def best_street(zip_code, canon_ami):
    scored = sorted((-score(canon_ami, CANON[s]), CANON[s], s) for s in STREETS[zip_code])
    top = scored[0]
    assert scored[1][0] > top[0], f"ambiguous fixture street {canon_ami}"
    return top[2], -top[0]


def ami_rows():
    rows = []

    def add(kind, z, number, spelled, exp_bid, stage, match_kind, sim):
        rows.append({"ami_key": f"M{len(rows):04d}", "street_number": number, "street_name": spelled, "zip": z,
                     "perturbation": kind, "expected_building_id": exp_bid or "", "expected_stage": stage,
                     "expected_kind": match_kind or "", "expected_similarity": sim})

    bid = lambda z, s, n: f"BLD-{z}-{STREETS[z].index(s)}-{n}"
    # 140 unperturbed rows: same spelling, number and ZIP
    count = 0
    for z, streets in STREETS.items():
        for s in streets:
            for number in NUMBERS[:6]:
                if count == 140:
                    break
                add("none", z, str(number), s, bid(z, s, number), "linked", "exact", 100)
                count += 1
    for z, s, spelled in FORMAT_VARIANTS:
        assert FORMAT_CANON[spelled] == CANON[s]
        add("format", z, "12", spelled, bid(z, s, 12), "linked", "exact", 100)
    for i, (z, s) in enumerate([("02101", "Elm Street"), ("02102", "Oak Ridge Road"), ("02103", "Tremont Street"),
                                ("02104", "Summer Street"), ("02105", "Ivy Rd")]):
        add("leading-zero", z, "0014", s, bid(z, s, 14), "linked", "exact", 100)
        add("unit-suffix", z, f"16{'ABCDE'[i]}", s, bid(z, s, 16), "linked", "exact", 100)
    for z, s, spelled in LONG_TYPOS:
        target, sim = best_street(z, LONG_TYPO_CANON[spelled])
        assert target == s and sim >= 88, (spelled, sim)
        add("typo-long", z, "18", spelled, bid(z, s, 18), "linked", "fuzzy", sim)
    for z, s, spelled in SHORT_TYPOS:
        _, sim = best_street(z, SHORT_TYPO_CANON[spelled])
        assert sim < 88, (spelled, sim)
        add("typo-short", z, "18", spelled, None, "fuzzy-below-threshold", None, sim)
    for i, (z, s) in enumerate(list((z, ss[0]) for z, ss in STREETS.items())):
        add("unknown-zip", f"9990{i}", "10", s, None, "zip-not-found", None, 0)
    for z, ss in STREETS.items():
        add("bad-number", z, "11", ss[1], None, "house-number", None, 100)
        add("bad-number", z, "999", ss[2], None, "house-number", None, 100)
    elm = score("ELMS ST", "ELM ST")
    add("elms", "02101", "20", "Elms St", None, "fuzzy-below-threshold", None, elm)
    oak = score("OAKRIDGE RD", "OAK RIDGE RD")
    add("oakridge", "02102", "20", "Oakridge Rd", bid("02102", "Oak Ridge Road", 20), "linked", "fuzzy", oak)
    assert (elm, oak) == (86, 92)
    assert len(rows) == 200, len(rows)
    return rows


def archetype_fixture():
    """Targets with known best candidates; one PUMA square, two-floor buildings."""
    puma = {"type": "FeatureCollection", "features": [
        {"type": "Feature", "properties": {"puma_id": "P1"},
         "geometry": {"type": "Polygon", "coordinates": [[[-71.1, 42.3], [-71.0, 42.3], [-71.0, 42.4],
                                                          [-71.1, 42.4], [-71.1, 42.3]]]}},
        {"type": "Feature", "properties": {"puma_id": "P2"},
         "geometry": {"type": "Polygon", "coordinates": [[[-71.0, 42.3], [-70.9, 42.3], [-70.9, 42.4],
                                                          [-71.0, 42.4], [-71.0, 42.3]]]}},
    ]}
    # footprint 100 m2 x 2 floors (height 7 m) = 200 m2 target floor area
    blds = [
        {"building_id": "T-select", "lat": 42.35, "lon": -71.05, "footprint_area": 100.0, "height": 7.0,
         "expected_archetype": "A-190", "expected_reason": "", "expected_error": 0.05},
        {"building_id": "T-exclude", "lat": 42.35, "lon": -70.95, "footprint_area": 100.0, "height": 7.0,
         "expected_archetype": "", "expected_reason": "floor-area-error", "expected_error": 0.25},
        {"building_id": "T-exact", "lat": 42.36, "lon": -71.04, "footprint_area": 125.0, "height": 7.0,
         "expected_archetype": "A-250", "expected_reason": "", "expected_error": 0.0},
        {"building_id": "T-tie", "lat": 42.37, "lon": -71.03, "footprint_area": 110.0, "height": 7.0,
         "expected_archetype": "A-210a", "expected_reason": "", "expected_error": 10 / 220},
        {"building_id": "T-outside", "lat": 42.5, "lon": -71.05, "footprint_area": 100.0, "height": 7.0,
         "expected_archetype": "", "expected_reason": "unassigned-puma", "expected_error": ""},
        {"building_id": "T-floors", "lat": 42.35, "lon": -71.05, "footprint_area": 100.0, "height": 17.0,
         "expected_archetype": "", "expected_reason": "no-candidates-with-floors", "expected_error": ""},
    ]
    archetypes = [
        ("A-250", "P1", 2, 250.0), ("A-190", "P1", 2, 190.0), ("A-230", "P1", 2, 230.0),
        ("A-210b", "P1", 2, 210.0), ("A-210a", "P1", 2, 210.0), ("A-200-1f", "P1", 1, 200.0),
        ("B-250", "P2", 2, 250.0), ("B-260", "P2", 2, 260.0), ("B-100", "P2", 2, 100.0),
    ]
    return puma, blds, archetypes


def write_csv(path, rows, fields=None):
    fields = fields or list(rows[0])
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def main():
    write_csv(HERE / "linkage_buildings.csv", buildings())
    write_csv(HERE / "linkage_ami.csv", ami_rows())
    puma, blds, archetypes = archetype_fixture()
    (HERE / "archetype_puma.geojson").write_text(json.dumps(puma, indent=1) + "\n")
    write_csv(HERE / "archetype_buildings.csv", blds)
    write_csv(HERE / "archetype_meta.csv",
              [{"archetype_id": a, "puma_id": p, "floors": f, "floor_area": fa} for a, p, f, fa in archetypes])
    prof = []
    for a, *_ in archetypes:
        for h in range(48):
            prof.append({"archetype_id": a, "timestamp": f"2023-01-{1 + h // 24:02d}T{h % 24:02d}:00:00Z",
                         "heating_value": round(0.5 + 0.01 * h, 4), "electricity_value": round(1.0 + 0.02 * h, 4)})
    write_csv(HERE / "archetype_profiles.csv", prof)


if __name__ == "__main__":
    main()
