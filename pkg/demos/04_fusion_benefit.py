"""Head-to-head: parallel fusion vs concatenation vs single branches.

Runs a small cross-validated benchmark on the complementary synthetic
dataset. The acceptance suite runs the same experiment with five folds; two
folds keep this demo under a minute while telling the same story.
"""

import time

import numpy as np

from parrot import data as datamod
from parrot import train


def main():
    spec = datamod.SynthSpec(num_classes=6, per_class=100, dim_a=64,
                             dim_b=96, product_slots=8)
    dataset = datamod.pair(*datamod.synth_generate(spec, seed=11))
    print(f"dataset: {len(dataset.ids)} utterances, "
          f"{dataset.num_classes} classes, dims "
          f"({dataset.dim_a}, {dataset.dim_b})")
    print("two-fold cross-validation, identical seeds and schedules; only "
          "the fusion wiring differs\n")

    results = {}
    for kind in ("parrot", "concat", "single_a", "single_b"):
        config = train.TrainConfig(fusion_kind=kind, epochs=50, folds=2,
                                   seed=11)
        t0 = time.perf_counter()
        report = train.cross_validate(dataset, config)
        took = time.perf_counter() - t0
        acc = float(np.mean(report.accuracies))
        f1 = float(np.mean(report.macro_f1s))
        results[kind] = acc
        print(f"  {kind:<10} accuracy {acc:6.1%}   macro-F1 {f1:6.1%}   "
              f"({took:.0f}s)")

    print("\nWhy the ordering comes out this way:")
    print("  * single branches see the group cue but neither the carrier "
          "cancellation nor the sign products;")
    print("  * concatenation adds the carrier cancellation (a linear "
          "combination across streams);")
    print("  * the parallel model also reads the sign products through "
          "its elementwise branch, and the transport block aligns the "
          "batch geometry for the rest.")
    margin = results["parrot"] - results["concat"]
    print(f"\nfusion margin over concatenation: {margin * 100:+.1f} points")


if __name__ == "__main__":
    main()
