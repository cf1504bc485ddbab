"""Experiment configuration: defaults, file parsing, and serialization.

The config file is a flat ``key = value`` text format. Blank lines and
lines starting with ``#`` are ignored; every other line must be a known
key. Unknown keys are hard errors so sweep typos fail loudly instead of
silently running defaults. Precedence (applied by the CLI): built-in
defaults < file values < command-line flags.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError

OPTIMIZERS = ("adam", "sgd_momentum")
PSEUDO_SCHEMES = ("k_plus_k", "k_plus_one", "none")


@dataclass(frozen=True)
class TrainConfig:
    """Every tunable of the pipeline, in file-key order."""

    # data
    class_count: int = 10
    per_class: int = 150
    dim: int = 8
    spread: float = 1.0
    known_count: int = 6
    test_fraction: float = 0.3
    data_dir: str = ""
    # universum
    lam: float = 0.5
    pseudo_scheme: str = "k_plus_k"
    # loss
    temperature: float = 0.1
    gamma: float = 1.0
    include_universum_term: bool = True
    # model
    hidden: tuple[int, ...] = (64, 64)
    proj_dim: int = 16
    classifier_hidden: int = 0
    # training
    contrastive_epochs: int = 600
    classifier_epochs: int = 20
    batch_size: int = 128
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    warmup_epochs: int = 10
    sigma: float = 0.1
    two_views: bool = False
    unfreeze_encoder: bool = False
    resume_from: str = ""
    # rejection
    percentile: float = 5.0
    per_class_thresholds: bool = True
    thresholds_on_correct_only: bool = True
    # reproducibility
    seed: int = 0

    def __post_init__(self):
        checks = [
            (self.class_count >= 2, "class_count must be >= 2"),
            (self.per_class >= 1, "per_class must be >= 1"),
            (self.dim >= 2, "dim must be >= 2"),
            (self.spread >= 0, "spread must be >= 0"),
            (1 <= self.known_count < self.class_count,
             "known_count must be in 1..class_count-1"),
            (0.0 < self.test_fraction < 1.0, "test_fraction must lie in (0, 1)"),
            (0.0 <= self.lam <= 1.0, "lam must lie in [0, 1]"),
            (self.pseudo_scheme in PSEUDO_SCHEMES,
             f"pseudo_scheme must be one of {PSEUDO_SCHEMES}"),
            (self.temperature > 0, "temperature must be > 0"),
            (self.gamma >= 0, "gamma must be >= 0"),
            (all(h >= 1 for h in self.hidden), "hidden widths must be >= 1"),
            (self.proj_dim >= 1, "proj_dim must be >= 1"),
            (self.classifier_hidden >= 0, "classifier_hidden must be >= 0"),
            (self.contrastive_epochs >= 0, "contrastive_epochs must be >= 0"),
            (self.classifier_epochs >= 0, "classifier_epochs must be >= 0"),
            (self.batch_size >= 2, "batch_size must be >= 2"),
            (self.optimizer in OPTIMIZERS, f"optimizer must be one of {OPTIMIZERS}"),
            (self.learning_rate > 0, "learning_rate must be > 0"),
            (self.weight_decay >= 0, "weight_decay must be >= 0"),
            (self.warmup_epochs >= 0, "warmup_epochs must be >= 0"),
            (self.sigma >= 0, "sigma must be >= 0"),
            (0.0 < self.percentile < 100.0, "percentile must lie in (0, 100)"),
            (self.seed >= 0, "seed must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)


CONFIG_DOC = {
    "class_count": "total number of blob classes in the synthetic dataset",
    "per_class": "rows generated per class",
    "dim": "feature dimensionality of the blobs",
    "spread": "standard deviation of each class blob (controls overlap)",
    "known_count": "how many classes are treated as known (the rest are unknown)",
    "test_fraction": "fraction of each known class held out as test rows",
    "data_dir": "directory with train/test_known/test_unknown CSVs; empty = synthesize",
    "lam": "universum blend weight on the targeted anchor, in [0, 1]",
    "pseudo_scheme": "universum labeling: k_plus_k (per-class), k_plus_one (single class), none (no universum)",
    "temperature": "contrastive temperature, > 0",
    "gamma": "weight of the universum-anchored loss term, >= 0",
    "include_universum_term": "false drops the universum-anchored term from the loss",
    "hidden": "comma-separated encoder widths, e.g. 64,64 (empty = identity encoder)",
    "proj_dim": "projection head output dimensionality",
    "classifier_hidden": "hidden width of the classifier head; 0 = linear probe",
    "contrastive_epochs": "epochs of representation training (step one)",
    "classifier_epochs": "epochs of classifier training (step two)",
    "batch_size": "training batch size",
    "optimizer": "adam or sgd_momentum",
    "learning_rate": "base learning rate",
    "weight_decay": "decoupled weight decay coefficient",
    "warmup_epochs": "linear warmup epochs before cosine decay (step one)",
    "sigma": "Gaussian augmentation noise std; 0 disables augmentation",
    "two_views": "true trains on two augmented views of each batch row",
    "unfreeze_encoder": "true lets step two update the encoder as well",
    "resume_from": "checkpoint path to initialize step-one training from",
    "percentile": "rejection threshold percentile in (0, 100)",
    "per_class_thresholds": "false uses one global threshold instead of per-class",
    "thresholds_on_correct_only": "false fits thresholds on all rows, not just correct ones",
    "seed": "master seed; every random draw derives from it",
}

_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}
assert set(CONFIG_DOC) == set(_FIELDS)


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _parse_hidden(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    try:
        return tuple(int(part) for part in raw.split(","))
    except ValueError as exc:
        raise ConfigError(f"hidden: expected comma-separated integers, got {raw!r}") from exc


def coerce_value(key: str, raw: str):
    """Convert one raw string to the field's declared type."""
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    if key == "hidden":
        return _parse_hidden(raw)
    kind = _FIELDS[key].type
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            return _parse_bool(key, raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: expected {kind}, got {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    """Read ``key = value`` lines into a typed dict (not yet validated)."""
    values = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {ln}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        values[key] = coerce_value(key, raw.strip())
    return values


def load_config(path=None, overrides: dict | None = None) -> TrainConfig:
    """Defaults, overlaid with file values, overlaid with overrides."""
    values: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read()))
        except OSError:
            raise
    if overrides:
        for key, val in overrides.items():
            if key not in _FIELDS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = coerce_value(key, val) if isinstance(val, str) else val
    try:
        return TrainConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def serialize_config(cfg: TrainConfig) -> str:
    """Emit every key in declaration order; parse(serialize(c)) == c."""
    lines = []
    for f in dataclasses.fields(TrainConfig):
        val = getattr(cfg, f.name)
        if f.name == "hidden":
            rendered = ",".join(str(h) for h in val)
        elif isinstance(val, bool):
            rendered = "true" if val else "false"
        else:
            rendered = repr(val) if isinstance(val, float) else str(val)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> TrainConfig:
    return TrainConfig(**parse_config_text(text))
