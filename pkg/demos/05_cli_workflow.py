"""The command-line workflow end to end, in a temp directory.

synth writes a paired dataset as two PFV files; cv trains with k-fold
cross-validation and leaves a JSON report, confusion/fold CSVs, and one
checkpoint per fold; inspect summarizes artifacts; eval reloads a
checkpoint and scores any PFV pair, optionally exporting penultimate
features as a new PFV. Everything here shells through the same entry
point the installed `parrot` command uses.
"""

import json
import tempfile
from pathlib import Path

from parrot import cli


def run(*argv):
    print(f"$ parrot {' '.join(argv)}")
    code = cli.main(list(argv))
    print(f"(exit {code})\n")
    assert code == 0


def main():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        a, b = tmp / "a.pfv", tmp / "b.pfv"
        out = tmp / "cv"

        run("synth", "--out-a", str(a), "--out-b", str(b),
            "--classes", "4", "--per-class", "12",
            "--dim-a", "72", "--dim-b", "72", "--seed", "5")

        run("cv", "--ptm-a", str(a), "--ptm-b", str(b),
            "--out", str(out), "--epochs", "3", "--folds", "2",
            "--batch", "16", "--seed", "5")

        print("artifacts:")
        for path in sorted(out.iterdir()):
            print(f"  {path.name:<16} {path.stat().st_size:>7} bytes")
        report = json.loads((out / "report.json").read_text())
        agg = report["aggregate"]
        print(f"\nreport aggregate: accuracy "
              f"{agg['accuracy_mean']:.3f} +/- {agg['accuracy_std']:.3f} "
              f"over {len(report['folds'])} folds\n")

        run("inspect", "--checkpoint", str(out / "fold_0.ckpt"))

        run("eval", "--checkpoint", str(out / "fold_0.ckpt"),
            "--ptm-a", str(a), "--ptm-b", str(b),
            "--out", str(tmp / "preds.csv"),
            "--export-penultimate", str(tmp / "penult.pfv"))

        print("eval wrote per-utterance predictions and a 128-d "
              "penultimate-feature PFV that itself loads like any other "
              "feature table:")
        head = (tmp / "preds.csv").read_text().splitlines()[:3]
        for line in head:
            print(f"  {line}")
        penult = (tmp / "penult.pfv").read_text().splitlines()[0]
        print(f"  {penult[:72]}...")


if __name__ == "__main__":
    main()
