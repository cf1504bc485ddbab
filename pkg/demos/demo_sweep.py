"""Sweep one knob at a time and print the resulting tables.

Run: python3 demos/demo_sweep.py
Uses deliberately small models so the whole script stays under a minute.
"""

from dctau.config import TrainConfig
from dctau.experiment import run_sweep


def _print_rows(rows) -> None:
    print(f"{'value':>10}  {'auroc':>7}  {'oscr':>7}  {'macro_f1':>8}  {'closed':>7}")
    for row in rows:
        print(
            f"{row.value!s:>10}  {row.auroc:7.4f}  {row.oscr:7.4f}  "
            f"{row.macro_f1:8.4f}  {row.closed_accuracy:7.4f}"
        )


def main() -> None:
    cfg = TrainConfig(
        class_count=6,
        per_class=60,
        dim=6,
        spread=0.45,
        known_count=4,
        hidden=(32,),
        proj_dim=8,
        contrastive_epochs=120,
        classifier_epochs=150,
        batch_size=64,
        warmup_epochs=5,
        temperature=0.2,
        seed=1,
    )

    print("blend weight sweep (one run per value):")
    _print_rows(run_sweep(cfg, "lambda"))

    print("\npseudo-label scheme sweep:")
    _print_rows(run_sweep(cfg, "scheme"))

    print("\nrejection percentile sweep (training shared across rows,")
    print("so only the threshold-dependent macro f1 moves):")
    _print_rows(run_sweep(cfg, "percentile", values=(1.0, 5.0, 10.0, 20.0)))


if __name__ == "__main__":
    main()
