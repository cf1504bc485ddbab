"""Train a small model end to end and print its open-set report.

Run: python3 demos/demo_training.py
Takes a few seconds; shrink the epochs below to go faster.
"""

from dctau.config import TrainConfig
from dctau.experiment import run_experiment


def main() -> None:
    cfg = TrainConfig(
        class_count=6,
        per_class=60,
        dim=6,
        spread=0.45,
        known_count=4,
        hidden=(32,),
        proj_dim=8,
        contrastive_epochs=250,
        classifier_epochs=250,
        batch_size=64,
        warmup_epochs=5,
        temperature=0.2,
        seed=1,
    )

    print("training: embedding phase then a frozen-encoder classifier probe")
    params, split, report, histories = run_experiment(cfg)

    contrastive = histories["contrastive"]
    classifier = histories["classifier"]
    print(f"\ncontrastive loss per row: first {contrastive[0]:.4f} "
          f"last {contrastive[-1]:.4f}")
    print(f"classifier loss:          first {classifier[0]:.4f} "
          f"last {classifier[-1]:.4f}")

    print(f"\nsplit: {split.num_known} known classes, "
          f"{split.test_known.n_rows} known test rows, "
          f"{split.test_unknown.n_rows} unknown test rows")
    print(f"\nauroc            {report.auroc:.4f}")
    print(f"oscr             {report.oscr:.4f}")
    print(f"macro f1         {report.macro_f1:.4f}")
    print(f"closed accuracy  {report.closed_accuracy:.4f}")
    print(f"\nper-class rejection thresholds at the "
          f"{report.thresholds.percentile:.0f}th percentile:")
    for c, eps in enumerate(report.thresholds.thresholds, start=1):
        print(f"  class {c}: accept when max posterior >= {eps:.4f}")


if __name__ == "__main__":
    main()
