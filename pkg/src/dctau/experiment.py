"""End-to-end experiment plumbing: split, train, evaluate, sweep.

Everything here is a deterministic function of the config. The master
seed is split into independent sub-seeds (data, class selection, split,
training) in a fixed order, so changing one stage's consumption pattern
never silently reshuffles another stage.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from .checkpoint import load_checkpoint
from .config import TrainConfig
from .data import (
    UNKNOWN_LABEL,
    Dataset,
    OpenSplit,
    generate_blobs,
    read_dataset_csv,
    split_open_set,
)
from .errors import ConfigError, InvalidArgumentError
from .metrics import auroc, closed_accuracy, macro_f1, oscr
from .model import ModelParams, posteriors, train_classifier, train_contrastive
from .openset import ThresholdTable, fit_thresholds, predict_open_many

SWEEP_KEYS = ("lambda", "gamma", "scheme", "percentile")

DEFAULT_GRIDS = {
    "lambda": (0.1, 0.3, 0.5, 0.7, 0.9),
    "gamma": (0.0, 0.5, 1.0, 2.0),
    "scheme": ("k_plus_k", "k_plus_one", "none"),
    "percentile": (1.0, 2.0, 5.0, 10.0, 20.0),
}

_SWEEP_FIELD = {
    "lambda": "lam",
    "gamma": "gamma",
    "scheme": "pseudo_scheme",
    "percentile": "percentile",
}

TRAIN_CSV = "train.csv"
TEST_KNOWN_CSV = "test_known.csv"
TEST_UNKNOWN_CSV = "test_unknown.csv"
MANIFEST_JSON = "manifest.json"


@dataclass(frozen=True)
class EvalReport:
    """Metrics of one trained model on one open split."""

    auroc: float
    oscr: float
    macro_f1: float
    closed_accuracy: float
    thresholds: ThresholdTable
    config: TrainConfig
    wall_seconds: float

    def __post_init__(self):
        for name in ("auroc", "oscr", "macro_f1", "closed_accuracy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidArgumentError(f"{name} out of [0, 1]: {v}")

    def to_json(self) -> str:
        payload = {
            "auroc": self.auroc,
            "oscr": self.oscr,
            "macro_f1": self.macro_f1,
            "closed_accuracy": self.closed_accuracy,
            "percentile": self.thresholds.percentile,
            "thresholds": [float(t) for t in self.thresholds.thresholds],
            "wall_seconds": self.wall_seconds,
            "config": dataclasses.asdict(self.config),
        }
        return json.dumps(payload, indent=2, sort_keys=True)


@dataclass(frozen=True)
class SweepRow:
    """One sweep table entry: metric means over the row's seeds."""

    key: str
    value: object
    auroc: float
    oscr: float
    macro_f1: float
    closed_accuracy: float
    wall_seconds: float
    n_seeds: int


def derive_seeds(seed: int) -> dict[str, int]:
    """Named sub-seeds drawn in a fixed order from the master seed."""
    rng = np.random.default_rng(seed)
    names = ("data", "known_choice", "split", "train")
    return {name: int(rng.integers(2**63)) for name in names}


def make_split(cfg: TrainConfig) -> OpenSplit:
    """Synthesize blobs and split them, or load CSVs from cfg.data_dir."""
    if cfg.data_dir:
        return load_split(cfg.data_dir)
    seeds = derive_seeds(cfg.seed)
    ds = generate_blobs(cfg.class_count, cfg.per_class, cfg.dim, cfg.spread, seeds["data"])
    chooser = np.random.default_rng(seeds["known_choice"])
    known_ids = chooser.choice(
        np.arange(1, cfg.class_count + 1), size=cfg.known_count, replace=False
    )
    return split_open_set(ds, known_ids, cfg.test_fraction, seeds["split"])


def save_split(split: OpenSplit, out_dir) -> dict:
    """Write the three CSVs plus a manifest; returns the manifest dict."""
    from .data import write_dataset_csv

    os.makedirs(out_dir, exist_ok=True)
    write_dataset_csv(split.train, os.path.join(out_dir, TRAIN_CSV))
    write_dataset_csv(split.test_known, os.path.join(out_dir, TEST_KNOWN_CSV))
    write_dataset_csv(split.test_unknown, os.path.join(out_dir, TEST_UNKNOWN_CSV))
    manifest = {
        "original_known_ids": list(split.original_known_ids),
        "num_known": split.num_known,
        "dim": split.train.dim,
        "rows": {
            "train": split.train.n_rows,
            "test_known": split.test_known.n_rows,
            "test_unknown": split.test_unknown.n_rows,
        },
    }
    with open(os.path.join(out_dir, MANIFEST_JSON), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_split(data_dir) -> OpenSplit:
    """Read the CSVs written by save_split (manifest optional)."""
    train = read_dataset_csv(os.path.join(data_dir, TRAIN_CSV))
    test_known = read_dataset_csv(os.path.join(data_dir, TEST_KNOWN_CSV))
    test_unknown = read_dataset_csv(os.path.join(data_dir, TEST_UNKNOWN_CSV))
    if train.class_count < 1:
        raise InvalidArgumentError(f"{data_dir}/{TRAIN_CSV} has no known classes")
    k = max(train.class_count, test_known.class_count)
    train = Dataset(train.features, train.labels, k)
    test_known = Dataset(test_known.features, test_known.labels, k)
    original = tuple(range(1, k + 1))
    manifest_path = os.path.join(data_dir, MANIFEST_JSON)
    if os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        original = tuple(int(c) for c in manifest.get("original_known_ids", original))
    return OpenSplit(train, test_known, test_unknown, original)


def run_training(
    split: OpenSplit, cfg: TrainConfig
) -> tuple[ModelParams, list[float], list[float]]:
    """Both training steps; returns (params, step-one history, step-two history)."""
    rng = np.random.default_rng(derive_seeds(cfg.seed)["train"])
    initial = None
    if cfg.resume_from:
        initial, _, _ = load_checkpoint(cfg.resume_from)
    params, history = train_contrastive(split, cfg, rng, initial=initial)
    cls_history: list[float] = []
    params = train_classifier(params, split, cfg, rng, history_out=cls_history)
    return params, history, cls_history


def evaluate_params(params: ModelParams, split: OpenSplit, cfg: TrainConfig) -> EvalReport:
    """Fit thresholds on training rows, score the two test sets."""
    start = time.perf_counter()
    train_post = posteriors(params, split.train.features)
    table = fit_thresholds(
        train_post,
        split.train.labels,
        cfg.percentile,
        correct_only=cfg.thresholds_on_correct_only,
        per_class=cfg.per_class_thresholds,
    )
    known_post = posteriors(params, split.test_known.features)
    unknown_post = posteriors(params, split.test_unknown.features)

    auroc_val = auroc(known_post.max(axis=1), unknown_post.max(axis=1))
    oscr_val = oscr(known_post, split.test_known.labels, unknown_post)
    closed = closed_accuracy(known_post.argmax(axis=1) + 1, split.test_known.labels)

    all_post = np.vstack([known_post, unknown_post])
    predicted, _ = predict_open_many(all_post, table)
    truth = np.concatenate(
        [split.test_known.labels, np.full(split.test_unknown.n_rows, UNKNOWN_LABEL)]
    )
    f1 = macro_f1(predicted, truth, split.num_known)

    return EvalReport(
        auroc=auroc_val,
        oscr=oscr_val,
        macro_f1=f1,
        closed_accuracy=closed,
        thresholds=table,
        config=cfg,
        wall_seconds=time.perf_counter() - start,
    )


def run_experiment(cfg: TrainConfig) -> tuple[ModelParams, OpenSplit, EvalReport, dict]:
    """Split + train + evaluate; wall_seconds covers the whole run."""
    start = time.perf_counter()
    split = make_split(cfg)
    params, history, cls_history = run_training(split, cfg)
    report = evaluate_params(params, split, cfg)
    report = replace(report, wall_seconds=time.perf_counter() - start)
    histories = {"contrastive": history, "classifier": cls_history}
    return params, split, report, histories


def run_sweep(
    cfg: TrainConfig,
    key: str,
    values=None,
    seeds=None,
) -> list[SweepRow]:
    """One SweepRow per value, metrics averaged over the given seeds.

    Rows keep the input value order. The percentile sweep trains once
    per seed and refits only the thresholds, since training never sees
    the percentile.
    """
    if key not in SWEEP_KEYS:
        raise ConfigError(f"sweep key must be one of {SWEEP_KEYS}, got {key!r}")
    values = tuple(values) if values is not None else DEFAULT_GRIDS[key]
    if not values:
        raise ConfigError("sweep values must be non-empty")
    seeds = tuple(seeds) if seeds is not None else (cfg.seed,)
    field = _SWEEP_FIELD[key]

    rows = []
    if key == "percentile":
        reports_per_value: dict[object, list[EvalReport]] = {v: [] for v in values}
        for seed in seeds:
            base = replace(cfg, seed=seed)
            split = make_split(base)
            start = time.perf_counter()
            params, _, _ = run_training(split, base)
            train_time = time.perf_counter() - start
            for v in values:
                report = evaluate_params(params, split, replace(base, percentile=float(v)))
                report = replace(report, wall_seconds=report.wall_seconds + train_time)
                reports_per_value[v].append(report)
        for v in values:
            rows.append(_mean_row(key, v, reports_per_value[v]))
        return rows

    for v in values:
        reports = []
        for seed in seeds:
            run_cfg = replace(cfg, **{field: v, "seed": seed})
            _, _, report, _ = run_experiment(run_cfg)
            reports.append(report)
        rows.append(_mean_row(key, v, reports))
    return rows


def _mean_row(key: str, value, reports: list[EvalReport]) -> SweepRow:
    return SweepRow(
        key=key,
        value=value,
        auroc=float(np.mean([r.auroc for r in reports])),
        oscr=float(np.mean([r.oscr for r in reports])),
        macro_f1=float(np.mean([r.macro_f1 for r in reports])),
        closed_accuracy=float(np.mean([r.closed_accuracy for r in reports])),
        wall_seconds=float(np.sum([r.wall_seconds for r in reports])),
        n_seeds=len(reports),
    )


def write_sweep_csv(rows: list[SweepRow], path) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["sweep", "value", "auroc", "oscr", "macro_f1", "closed_accuracy",
             "wall_seconds", "n_seeds"]
        )
        for row in rows:
            writer.writerow(
                [
                    row.key,
                    row.value,
                    repr(row.auroc),
                    repr(row.oscr),
                    repr(row.macro_f1),
                    repr(row.closed_accuracy),
                    repr(row.wall_seconds),
                    row.n_seeds,
                ]
            )
