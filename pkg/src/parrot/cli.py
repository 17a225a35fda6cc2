"""Command-line front end.

Subcommands: ``synth`` (write a complementary two-stream benchmark),
``cv`` (cross-validate a fusion model over two PFV files), ``eval``
(score a saved checkpoint on new tables, optionally exporting penultimate
activations), ``sinkhorn`` (transport-plan diagnostics), and ``inspect``
(describe a checkpoint).

Exit codes: 0 success, 2 usage, 3 bad data or files, 4 numerical failure
(divergence or a transport plan that never converged). ``--seed`` falls back
to the PARROT_SEED environment variable, then 0.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from parrot import data as datamod
from parrot import fusion, train
from parrot.errors import DataError, NumericsError, ParrotError


class _UsageError(Exception):
    pass


def _resolve_seed(value) -> int:
    if value is not None:
        return value
    raw = os.environ.get("PARROT_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise _UsageError(f"PARROT_SEED must be an integer, got {raw!r}") from None


def _pct(x: float) -> str:
    return f"{100.0 * x:.2f}%"


def _load_pair(path_a, path_b) -> datamod.PairedDataset:
    table_a = datamod.load_pfv(path_a)
    table_b = datamod.load_pfv(path_b)
    return datamod.pair(table_a, table_b)


def _forward_all(model, dataset: datamod.PairedDataset, batch_size: int):
    """Predictions and penultimate activations in canonical order."""
    preds = np.empty(len(dataset), dtype=np.int64)
    pen_blocks = []
    for block in datamod.batches(len(dataset), batch_size):
        logits, pen = model.forward(dataset.x_a[block], dataset.x_b[block],
                                    training=False)
        preds[block] = np.argmax(logits.data, axis=1)
        pen_blocks.append(pen.data)
    return preds, np.vstack(pen_blocks)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    seed = _resolve_seed(args.seed)
    spec = datamod.SynthSpec(
        num_classes=args.classes, per_class=args.per_class,
        dim_a=args.dim_a, dim_b=args.dim_b, noise=args.noise,
        group_scale=args.group_scale, pair_scale=args.pair_scale,
        pair_carrier=args.pair_carrier, product_scale=args.product_scale,
        product_slots=args.product_slots,
    )
    table_a, table_b = datamod.synth_generate(spec, seed)
    datamod.write_pfv(table_a, args.out_a)
    datamod.write_pfv(table_b, args.out_b)
    print(f"wrote {len(table_a)} rows x {table_a.dim} dims to {args.out_a}")
    print(f"wrote {len(table_b)} rows x {table_b.dim} dims to {args.out_b}")
    print(f"classes: {';'.join(table_a.label_names)}  seed: {seed}")
    return 0


def _train_config(args, seed: int) -> train.TrainConfig:
    try:
        return train.TrainConfig(
            fusion_kind=args.fusion, epochs=args.epochs, lr=args.lr,
            batch_size=args.batch, seed=seed, folds=args.folds,
            patience=args.patience, dropout=args.dropout,
            epsilon=args.epsilon, sinkhorn_iters=args.sinkhorn_iters,
        )
    except DataError as exc:
        raise _UsageError(str(exc)) from None


def cmd_cv(args) -> int:
    config = _train_config(args, _resolve_seed(args.seed))
    dataset = _load_pair(args.ptm_a, args.ptm_b)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    report, models = train.cross_validate(dataset, config, keep_models=True)
    for fold in report.fold_reports:
        m = fold.test_metrics
        print(f"fold {fold.fold_index}: accuracy {_pct(m.accuracy)}  "
              f"macro-F1 {_pct(m.macro_f1)}  "
              f"epochs {fold.epochs_run} (best {fold.best_epoch})")
    acc = report.accuracies
    f1s = report.macro_f1s
    print(f"aggregate: accuracy {_pct(acc.mean())} +/- {_pct(acc.std())}  "
          f"macro-F1 {_pct(f1s.mean())} +/- {_pct(f1s.std())}")

    report_path = out_dir / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_confusion_csv(out_dir / "confusion.csv", report.pooled_confusion(),
                         report.label_names)
    _write_folds_csv(out_dir / "folds.csv", report.fold_reports)
    for fold_index, model in sorted(models.items()):
        fusion.save_checkpoint(model, out_dir / f"fold_{fold_index}.ckpt", extra={
            "label_names": report.label_names,
            "batch_size": config.batch_size,
            "fold_index": fold_index,
            "ptm_a": report.ptm_a,
            "ptm_b": report.ptm_b,
        })
    print(f"report: {report_path}")
    return 0


def _write_confusion_csv(path, confusion: np.ndarray, label_names):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("true\\pred," + ",".join(label_names) + "\n")
        for i, name in enumerate(label_names):
            fh.write(name + "," + ",".join(str(int(v)) for v in confusion[i]) + "\n")


def _write_folds_csv(path, fold_reports):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fold,accuracy,macro_f1,epochs_run,best_epoch\n")
        for r in fold_reports:
            fh.write(f"{r.fold_index},{r.test_metrics.accuracy!r},"
                     f"{r.test_metrics.macro_f1!r},{r.epochs_run},{r.best_epoch}\n")


def cmd_eval(args) -> int:
    model, extra = fusion.load_checkpoint(args.checkpoint)
    dataset = _load_pair(args.ptm_a, args.ptm_b)
    saved_labels = extra.get("label_names")
    if saved_labels is not None and saved_labels != dataset.label_names:
        raise DataError(
            f"checkpoint was trained on classes {saved_labels}, "
            f"tables carry {dataset.label_names}"
        )
    batch_size = args.batch if args.batch is not None else extra.get("batch_size", 32)
    if batch_size < 1:
        raise _UsageError(f"batch size must be positive, got {batch_size}")

    preds, penultimate = _forward_all(model, dataset, batch_size)
    scored = train.metrics(dataset.y, preds, dataset.num_classes)
    print(f"evaluated {len(dataset)} utterances: "
          f"accuracy {_pct(scored.accuracy)}  macro-F1 {_pct(scored.macro_f1)}")

    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("utterance_id,true_label,predicted_label\n")
            for i, utt_id in enumerate(dataset.ids):
                fh.write(f"{utt_id},{dataset.label_names[dataset.y[i]]},"
                         f"{dataset.label_names[preds[i]]}\n")
        print(f"predictions: {args.out}")
    if args.export_penultimate:
        pen_table = datamod.FeatureTable(
            ptm_name=f"penultimate-{model.fusion_kind}",
            dim=penultimate.shape[1],
            label_names=dataset.label_names,
            ids=dataset.ids,
            labels=dataset.y,
            features=penultimate,
        )
        datamod.write_pfv(pen_table, args.export_penultimate)
        print(f"penultimate features: {args.export_penultimate}")
    return 0


def cmd_sinkhorn(args) -> int:
    from parrot import ot

    dataset = _load_pair(args.ptm_a, args.ptm_b)
    rows = min(args.rows, len(dataset))
    cost = ot.cost_matrix(dataset.x_a[:rows], dataset.x_b[:rows])
    if args.epsilon <= 0:
        raise _UsageError(f"epsilon must be positive, got {args.epsilon}")
    plan = ot.sinkhorn(cost, epsilon=args.epsilon, max_iters=args.iters,
                       tol=args.tol)
    print(f"plan {plan.n}x{plan.m}  epsilon {plan.epsilon}  "
          f"sweeps {plan.iterations_used}  "
          f"marginal violation {plan.marginal_violation():.3e}")
    if not plan.converged:
        raise NumericsError(
            f"no convergence within {args.iters} sweeps "
            f"(violation {plan.marginal_violation():.3e} > {args.tol})"
        )
    print("converged")
    return 0


def cmd_inspect(args) -> int:
    model, extra = fusion.load_checkpoint(args.checkpoint)
    arch = model.config()
    print(f"fusion kind: {arch['fusion_kind']}")
    print(f"streams: dim_a {arch['dim_a']}  dim_b {arch['dim_b']}  "
          f"classes {arch['num_classes']}")
    print(f"parameters: {model.params.count()}")
    if extra:
        print("metadata: " + json.dumps(extra, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_train_flags(sub: argparse.ArgumentParser):
    sub.add_argument("--fusion", default="parrot", choices=fusion.FUSION_KINDS)
    sub.add_argument("--epochs", type=int, default=50)
    sub.add_argument("--lr", type=float, default=1e-3)
    sub.add_argument("--batch", type=int, default=32)
    sub.add_argument("--folds", type=int, default=5)
    sub.add_argument("--patience", type=int, default=7)
    sub.add_argument("--dropout", type=float, default=0.2)
    sub.add_argument("--epsilon", type=float, default=0.1)
    sub.add_argument("--sinkhorn-iters", type=int, default=100)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parrot",
        description="two-stream embedding fusion with transport and Hadamard branches",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="write a synthetic two-stream benchmark")
    synth.add_argument("--out-a", required=True)
    synth.add_argument("--out-b", required=True)
    synth.add_argument("--classes", type=int, default=4)
    synth.add_argument("--per-class", type=int, default=150)
    synth.add_argument("--dim-a", type=int, default=96)
    synth.add_argument("--dim-b", type=int, default=96)
    synth.add_argument("--noise", type=float, default=0.4)
    synth.add_argument("--group-scale", type=float, default=1.5)
    synth.add_argument("--pair-scale", type=float, default=0.3)
    synth.add_argument("--pair-carrier", type=float, default=2.0)
    synth.add_argument("--product-scale", type=float, default=1.2)
    synth.add_argument("--product-slots", type=int, default=10)
    synth.add_argument("--seed", type=int, default=None)
    synth.set_defaults(func=cmd_synth)

    cv = commands.add_parser("cv", help="cross-validate a fusion model")
    cv.add_argument("--ptm-a", required=True, help="PFV file for stream A")
    cv.add_argument("--ptm-b", required=True, help="PFV file for stream B")
    cv.add_argument("--out", required=True, help="output directory")
    cv.add_argument("--seed", type=int, default=None)
    _add_train_flags(cv)
    cv.set_defaults(func=cmd_cv)

    ev = commands.add_parser("eval", help="score a checkpoint on PFV tables")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--ptm-a", required=True)
    ev.add_argument("--ptm-b", required=True)
    ev.add_argument("--out", default=None, help="predictions CSV")
    ev.add_argument("--export-penultimate", default=None,
                    help="write penultimate activations as a PFV file")
    ev.add_argument("--batch", type=int, default=None)
    ev.set_defaults(func=cmd_eval)

    sk = commands.add_parser("sinkhorn", help="transport plan diagnostics")
    sk.add_argument("--ptm-a", required=True)
    sk.add_argument("--ptm-b", required=True)
    sk.add_argument("--rows", type=int, default=32)
    sk.add_argument("--epsilon", type=float, default=0.1)
    sk.add_argument("--iters", type=int, default=100)
    sk.add_argument("--tol", type=float, default=1e-6)
    sk.set_defaults(func=cmd_sinkhorn)

    ins = commands.add_parser("inspect", help="describe a checkpoint")
    ins.add_argument("--checkpoint", required=True)
    ins.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else (0 if code is None else 2)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    except (ParrotError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


def console_main():
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    console_main()
