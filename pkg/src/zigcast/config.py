"""Run configuration: YAML file, then command-line overrides."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError, InvalidInputError
from .features import DEFAULT_LANDCOVER_CLASSES, DENSITY_RADIUS_M, INTERNET_METRICS
from .linkage import DEFAULT_THRESHOLD
from .nn import TrainConfig
from .synth import TARGETS, SyntheticSpec

DATA_KEYS = ("buildings", "weather", "landcover", "nightlight", "ami_addresses", "consumption",
             "archetypes", "profiles", "puma", "eta_input", "truth")


@dataclass
class DataPaths:
    buildings: Path | None = None
    weather: Path | None = None
    landcover: Path | None = None
    nightlight: Path | None = None
    internet: dict[str, Path] = field(default_factory=dict)
    ami_addresses: Path | None = None
    consumption: Path | None = None
    archetypes: Path | None = None
    profiles: Path | None = None
    puma: Path | None = None
    eta_input: Path | None = None
    truth: Path | None = None

    def to_dict(self):
        d = {k: (str(getattr(self, k)) if getattr(self, k) is not None else None) for k in DATA_KEYS}
        d["internet"] = {k: str(v) for k, v in sorted(self.internet.items())}
        return d


@dataclass
class RunConfig:
    seed: int = 0
    target: str = "heating"
    out: Path = Path("run")
    timezone: str = "UTC"
    data: DataPaths = field(default_factory=DataPaths)
    landcover_classes: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_LANDCOVER_CLASSES))
    radius_m: float = DENSITY_RADIUS_M
    splits: dict[str, float] = field(default_factory=lambda: {"train": 0.6, "val": 0.2, "test": 0.2})
    threshold: int = DEFAULT_THRESHOLD
    eta: float | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: dict = field(default_factory=dict)

    def synthetic_spec(self) -> SyntheticSpec:
        d = dict(self.synth)
        d.setdefault("seed", self.seed)
        try:
            return SyntheticSpec.from_dict(d)
        except (InvalidInputError, TypeError) as exc:
            raise ConfigError("synth", str(exc)) from None

    def to_dict(self):
        return {
            "seed": self.seed, "target": self.target, "out": str(self.out), "timezone": self.timezone,
            "data": self.data.to_dict(), "landcover_classes": dict(self.landcover_classes),
            "radius_m": self.radius_m, "splits": dict(self.splits), "threshold": self.threshold,
            "eta": self.eta, "train": asdict(self.train), "synth": self.synth,
        }


_TOP_KEYS = {"seed", "target", "out", "timezone", "data", "features", "splits", "linkage", "eta",
             "train", "synth"}


def _resolve(base: Path, value):
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a YAML config (optional) and apply ``overrides`` (flag values, ``None`` = unset).

    Relative paths resolve against the config file's directory. Errors name the
    offending field.
    """
    raw = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError("--config", f"file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(str(path), f"invalid YAML: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(str(path), "top level must be a mapping")
        base = path.parent
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    cfg = RunConfig()
    cfg.seed = _int(overrides.get("seed", raw.get("seed", cfg.seed)), "seed")
    cfg.target = overrides.get("target", raw.get("target", cfg.target))
    if cfg.target not in TARGETS:
        raise ConfigError("target", f"must be one of {TARGETS}, got {cfg.target!r}")
    out = overrides.get("out", raw.get("out"))
    cfg.out = Path(out) if out is not None and "out" in overrides else (_resolve(base, out) or base / "run")
    cfg.timezone = str(raw.get("timezone", cfg.timezone))

    data = raw.get("data") or {}
    if not isinstance(data, dict):
        raise ConfigError("data", "must be a mapping")
    for key in data:
        if key not in DATA_KEYS and key != "internet":
            raise ConfigError(f"data.{key}", "unknown field")
    cfg.data = DataPaths(**{k: _resolve(base, data.get(k)) for k in DATA_KEYS})
    internet = data.get("internet") or {}
    for metric in internet:
        if metric not in INTERNET_METRICS:
            raise ConfigError(f"data.internet.{metric}", "unknown internet metric")
    cfg.data.internet = {m: _resolve(base, p) for m, p in internet.items()}

    feats = raw.get("features") or {}
    cfg.landcover_classes = {k: _int(v, f"features.landcover_classes.{k}")
                             for k, v in (feats.get("landcover_classes") or DEFAULT_LANDCOVER_CLASSES).items()}
    cfg.radius_m = float(feats.get("radius_m", cfg.radius_m))

    splits = raw.get("splits") or cfg.splits
    if set(splits) != {"train", "val", "test"}:
        raise ConfigError("splits", "needs exactly train, val and test fractions")
    if any(not float(v) > 0 for v in splits.values()) or abs(sum(map(float, splits.values())) - 1.0) > 1e-9:
        raise ConfigError("splits", "fractions must be positive and sum to 1")
    cfg.splits = {k: float(splits[k]) for k in ("train", "val", "test")}

    linkage = raw.get("linkage") or {}
    cfg.threshold = _int(overrides.get("threshold", linkage.get("threshold", cfg.threshold)), "linkage.threshold")
    if not 0 <= cfg.threshold <= 100:
        raise ConfigError("linkage.threshold", "must lie in [0, 100]")

    eta = overrides.get("eta", raw.get("eta"))
    if eta is not None:
        eta = float(eta)
        if not eta > 0:
            raise ConfigError("eta", "must be positive")
    cfg.eta = eta

    tdict = dict(raw.get("train") or {})
    tdict.setdefault("seed", cfg.seed)
    if "seed" in overrides:
        tdict["seed"] = cfg.seed
    for f in fields(TrainConfig):
        if overrides.get(f.name) is not None:
            tdict[f.name] = overrides[f.name]
    try:
        cfg.train = TrainConfig.from_dict(tdict)
    except (InvalidInputError, TypeError) as exc:
        raise ConfigError("train", str(exc)) from None

    synth = raw.get("synth") or {}
    if not isinstance(synth, dict):
        raise ConfigError("synth", "must be a mapping")
    cfg.synth = dict(synth)
    if "seed" in overrides:
        cfg.synth["seed"] = cfg.seed
    return cfg


def _int(v, path):
    try:
        return int(v)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected an integer, got {v!r}") from None


REQUIRED = {
    "train": ("buildings", "weather", "consumption"),
    "predict": ("buildings", "weather"),
    "evaluate": ("buildings", "weather", "consumption"),
    "calibrate": ("buildings", "weather", "consumption"),
    "importance": ("buildings", "weather", "consumption"),
    "match-addresses": ("buildings", "ami_addresses"),
    "match-baseline": ("buildings", "puma", "archetypes"),
    "fit-eta": ("eta_input",),
    "synth": (),
}


def check_paths(cfg: RunConfig, subcommand: str):
    """Every configured input must exist; the subcommand's required ones must be set."""
    if subcommand == "synth":
        missing = [k for k in ("buildings", "weather", "consumption") if getattr(cfg.data, k) is None]
        if missing:
            raise ConfigError(f"data.{missing[0]}", "synth needs an output path")
        return
    for key in REQUIRED.get(subcommand, ()):
        if getattr(cfg.data, key) is None:
            raise ConfigError(f"data.{key}", f"required by {subcommand}")
    for key in DATA_KEYS:
        p = getattr(cfg.data, key)
        if p is not None and key != "truth" and not p.exists():
            raise ConfigError(f"data.{key}", f"file not found: {p}")
    for metric, p in cfg.data.internet.items():
        if not p.exists():
            raise ConfigError(f"data.internet.{metric}", f"file not found: {p}")
