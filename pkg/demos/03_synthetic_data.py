"""Tour of the synthetic two-stream dataset and its three planted cues.

The generator is built so that no single stream, and no purely additive
combination of the two, carries the whole label:

  * group cue: a linear bump in both streams narrows each label to a pair
    of candidate classes. Any model can read it.
  * pair-splitting cue: a shared noise carrier rides on one coordinate of
    each stream, with the class bit encoded in their difference. A model
    that sees both streams can cancel the carrier; a single stream sees
    mostly carrier.
  * product cue: matched coordinates carry random signs whose product is
    the class bit. Elementwise multiplication reads it directly; additive
    models have to learn a parity, which usually fails at this scale.

This script measures each effect directly on the arrays, without training.
"""

import numpy as np

from parrot import data as datamod


def main():
    spec = datamod.SynthSpec(num_classes=4, per_class=400)
    table_a, table_b = datamod.synth_generate(spec, seed=0)
    dataset = datamod.pair(table_a, table_b)
    print(f"{len(dataset.ids)} utterances, {dataset.num_classes} classes, "
          f"streams {dataset.dim_a}-d and {dataset.dim_b}-d")

    y = dataset.y
    num_groups = (spec.num_classes + 1) // 2
    group_base = 6 * num_groups
    pair_pos = group_base + 3
    slot = group_base + 9  # first product coordinate

    print("\n1. Group cue: per-class mean of the bump coordinate in "
          "stream A")
    for g in range(num_groups):
        col = dataset.x_a[:, 6 * g + 1]
        means = [col[y == c].mean() for c in range(spec.num_classes)]
        line = "  ".join(f"c{c}:{m:+.2f}" for c, m in enumerate(means))
        print(f"   coord {6 * g + 1:<3} {line}")
    print("   Classes sharing a group share a bump: the cue narrows the "
          "label to two candidates.")

    print("\n2. Pair-splitting cue: the carrier hides the bit from either "
          "stream alone")
    bit = np.where(y % 2 == 0, 1.0, -1.0)
    ca = dataset.x_a[:, pair_pos]
    cb = dataset.x_b[:, pair_pos]
    print(f"   std of the coordinate in A alone:    {ca.std():.3f}")
    print(f"   std of the coordinate in B alone:    {cb.std():.3f}")
    print(f"   std of the difference A-B:           {(ca - cb).std():.3f}")
    print(f"   mean of bit * (A-B) (the signal):    "
          f"{(bit * (ca - cb)).mean():+.3f}")
    print("   The difference strips the carrier and leaves a clean bit; "
          "each stream alone is mostly carrier noise.")

    print("\n3. Product cue: the bit lives in the sign product of matched "
          "coordinates")
    pa = dataset.x_a[:, slot]
    pb = dataset.x_b[:, slot]
    print(f"   corr(bit, A coordinate):       {np.corrcoef(bit, pa)[0, 1]:+.3f}")
    print(f"   corr(bit, B coordinate):       {np.corrcoef(bit, pb)[0, 1]:+.3f}")
    print(f"   corr(bit, A*B):                "
          f"{np.corrcoef(bit, pa * pb)[0, 1]:+.3f}")
    print("   Marginally both coordinates are centered noise; only their "
          "product correlates with the label, which is exactly what the "
          "Hadamard branch computes.")

    print("\nSetting every scale to zero produces pure noise for "
          "chance-level controls:")
    null_spec = datamod.SynthSpec(num_classes=4, per_class=50,
                                  group_scale=0.0, pair_scale=0.0,
                                  product_scale=0.0)
    na, _ = datamod.synth_generate(null_spec, seed=0)
    print(f"   null stream A: mean {na.features.mean():+.3f}, "
          f"std {na.features.std():.3f} (no structure)")

    print("\nThe tables round-trip through the PFV interchange format "
          "bit for bit:")
    datamod.write_pfv(table_a, "/tmp/demo_a.pfv")
    again = datamod.load_pfv("/tmp/demo_a.pfv")
    same = np.array_equal(again.features, table_a.features)
    print(f"   reloaded equals original: {same}")


if __name__ == "__main__":
    main()
