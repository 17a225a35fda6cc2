"""Fold training, early stopping, metrics, and five-fold cross-validation.

Each fold carves a stratified tenth of its training split into a validation
set, trains with Adam on shuffled batches, watches validation loss with a
patience counter, and restores the best-epoch parameters before scoring the
held-out test split. All randomness (fold cuts, batch order, dropout,
initialization) derives from one experiment seed, so a report is a pure
function of inputs and flags; serialized reports exclude wall-clock time for
that reason.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from parrot import data as datamod
from parrot import fusion, nn
from parrot.errors import DataError, FoldError, NumericsError, TrainingDivergedError


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass
class ClassificationMetrics:
    """Accuracy, macro-F1, confusion counts, and per-class diagnostics.

    A class with no true and no predicted samples is left out of the macro
    average (its F1 is undefined); any other class contributes
    ``2*TP / (2*TP + FP + FN)``, which is 0 for a class that was only ever
    missed or only ever falsely predicted.
    """

    accuracy: float
    macro_f1: float
    confusion: np.ndarray
    per_class: list

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "confusion": self.confusion.tolist(),
            "per_class": self.per_class,
        }


def metrics(y_true, y_pred, num_classes: int) -> ClassificationMetrics:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise DataError(
            f"label vectors must be 1-D and aligned, got {y_true.shape} vs {y_pred.shape}"
        )
    if y_true.size == 0:
        raise DataError("cannot score an empty prediction set")
    for name, arr in (("true", y_true), ("predicted", y_pred)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise DataError(f"{name} labels fall outside 0..{num_classes - 1}")

    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    assert confusion.sum() == y_true.size

    per_class = []
    f1_values = []
    for c in range(num_classes):
        tp = int(confusion[c, c])
        fp = int(confusion[:, c].sum()) - tp
        fn = int(confusion[c, :].sum()) - tp
        support = tp + fn
        if tp + fp + fn == 0:
            per_class.append({"class_id": c, "precision": None, "recall": None,
                              "f1": None, "support": 0})
            continue
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2.0 * tp / (2.0 * tp + fp + fn)
        f1_values.append(f1)
        per_class.append({"class_id": c, "precision": precision, "recall": recall,
                          "f1": f1, "support": support})
    accuracy = float(np.trace(confusion)) / float(y_true.size)
    macro_f1 = float(np.mean(f1_values))
    assert 0.0 <= accuracy <= 1.0 and 0.0 <= macro_f1 <= 1.0
    return ClassificationMetrics(accuracy, macro_f1, confusion, per_class)


# ---------------------------------------------------------------------------
# configuration and early stopping
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    fusion_kind: str = "parrot"
    epochs: int = 50
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    folds: int = 5
    patience: int = 7
    min_delta: float = 1e-4
    dropout: float = 0.2
    epsilon: float = 0.1
    sinkhorn_iters: int = 100
    sinkhorn_tol: float = 1e-6
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.fusion_kind not in fusion.FUSION_KINDS:
            raise DataError(f"unknown fusion kind {self.fusion_kind!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise DataError("epochs, batch size and patience must be positive")
        if self.folds < 2:
            raise DataError("need at least 2 folds")
        if not (self.lr > 0.0 and self.epsilon > 0.0 and self.sinkhorn_iters >= 1):
            raise DataError("lr, epsilon and sinkhorn iterations must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise DataError(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0.0 < self.val_fraction < 0.5:
            raise DataError("validation fraction must be in (0, 0.5)")

    def ot_config(self) -> fusion.OtConfig:
        return fusion.OtConfig(self.epsilon, self.sinkhorn_iters, self.sinkhorn_tol)

    def to_dict(self) -> dict:
        return {
            "fusion_kind": self.fusion_kind,
            "epochs": self.epochs,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "folds": self.folds,
            "patience": self.patience,
            "min_delta": self.min_delta,
            "dropout": self.dropout,
            "epsilon": self.epsilon,
            "sinkhorn_iters": self.sinkhorn_iters,
            "sinkhorn_tol": self.sinkhorn_tol,
            "val_fraction": self.val_fraction,
        }


class EarlyStopper:
    """Patience counter over a loss-like quantity (lower is better)."""

    def __init__(self, patience: int, min_delta: float):
        self.patience = patience
        self.min_delta = min_delta
        self.best = None
        self.best_epoch = -1
        self.stale = 0

    def update(self, value: float, epoch: int) -> bool:
        """Record one epoch's value; True when it's a new best."""
        if self.best is None or value < self.best - self.min_delta:
            self.best = value
            self.best_epoch = epoch
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


# ---------------------------------------------------------------------------
# fold training
# ---------------------------------------------------------------------------

def _fold_seed(seed: int, fold_index: int) -> int:
    # one well-mixed integer per (experiment, fold), stable across runs
    return int(np.random.SeedSequence([seed, fold_index]).generate_state(1)[0])


def _carve_validation(y_train: np.ndarray, fraction: float, seed: int):
    """Split train-local indices into (fit, val), stratified when possible."""
    k = max(2, int(round(1.0 / fraction)))
    counts = np.bincount(y_train)
    counts = counts[counts > 0]
    if counts.min() >= k:
        split = datamod.stratified_kfold(y_train, k, seed)[0]
        return split.train_indices, split.test_indices
    # tiny classes: fall back to a plain shuffled cut, keeping at least one
    # sample on each side
    rng = np.random.default_rng([seed, 0xA11])
    order = rng.permutation(y_train.shape[0])
    n_val = min(max(1, int(round(fraction * order.size))), order.size - 1)
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def evaluate(model, dataset: datamod.PairedDataset, indices, batch_size: int):
    """Mean loss and predictions over ``indices`` in canonical batch order."""
    indices = np.asarray(indices, dtype=np.int64)
    total_loss = 0.0
    preds = np.empty(indices.size, dtype=np.int64)
    for block in datamod.batches(indices.size, batch_size):
        rows = indices[block]
        logits, _ = model.forward(dataset.x_a[rows], dataset.x_b[rows],
                                  training=False)
        loss, probs = nn.softmax_xent(logits, dataset.y[rows])
        total_loss += float(loss.data) * rows.size
        preds[block] = np.argmax(probs, axis=1)
    return total_loss / indices.size, preds


@dataclass
class FoldReport:
    fold_index: int
    epochs_run: int
    best_epoch: int
    stopped_early: bool
    train_loss: list
    val_loss: list
    val_accuracy: list
    test_metrics: ClassificationMetrics
    num_fit: int
    num_val: int
    num_test: int
    wall_seconds: float = 0.0

    def to_dict(self) -> dict:
        # wall_seconds stays out: serialized reports must be run-invariant
        return {
            "fold_index": self.fold_index,
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_accuracy": self.val_accuracy,
            "test": self.test_metrics.to_dict(),
            "num_fit": self.num_fit,
            "num_val": self.num_val,
            "num_test": self.num_test,
        }


def train_one_fold(dataset: datamod.PairedDataset, split: datamod.FoldSplit,
                   config: TrainConfig) -> tuple[FoldReport, fusion._ModelBase]:
    """Train one model on one fold and score it on the fold's test split."""
    started = time.perf_counter()
    fold_seed = _fold_seed(config.seed, split.index)
    train_idx = np.asarray(split.train_indices, dtype=np.int64)
    test_idx = np.asarray(split.test_indices, dtype=np.int64)
    if train_idx.size == 0 or test_idx.size == 0:
        raise FoldError(f"fold {split.index} has an empty split")

    fit_local, val_local = _carve_validation(dataset.y[train_idx],
                                             config.val_fraction, fold_seed)
    fit_idx = train_idx[fit_local]
    val_idx = train_idx[val_local]

    model = fusion.build_model(config.fusion_kind, dataset.dim_a, dataset.dim_b,
                               dataset.num_classes, seed=fold_seed,
                               dropout_rate=config.dropout,
                               ot_config=config.ot_config())
    rng_batches = np.random.default_rng([fold_seed, 1])
    rng_dropout = np.random.default_rng([fold_seed, 2])
    stopper = EarlyStopper(config.patience, config.min_delta)
    best_params = model.params.snapshot()

    train_curve, val_curve, val_acc_curve = [], [], []
    epochs_run = 0
    stopped_early = False
    for epoch in range(config.epochs):
        epochs_run = epoch + 1
        epoch_loss = 0.0
        for batch_no, block in enumerate(
                datamod.batches(fit_idx.size, config.batch_size, rng_batches)):
            rows = fit_idx[block]
            try:
                logits, _ = model.forward(dataset.x_a[rows], dataset.x_b[rows],
                                          training=True, rng=rng_dropout)
                loss, _ = nn.softmax_xent(logits, dataset.y[rows])
                nn.backward(loss)
                grad_peak = model.params.max_abs_grad()
                nn.adam_step(model.params, lr=config.lr)
            except TrainingDivergedError:
                raise
            except NumericsError as exc:
                raise TrainingDivergedError(
                    f"fold {split.index} diverged at epoch {epoch}, "
                    f"batch {batch_no}: {exc}",
                    epoch=epoch, batch=batch_no,
                    max_abs_grad=model.params.max_abs_grad(),
                ) from exc
            if not np.isfinite(grad_peak):
                raise TrainingDivergedError(
                    f"fold {split.index} diverged at epoch {epoch}, "
                    f"batch {batch_no}: non-finite gradient",
                    epoch=epoch, batch=batch_no, max_abs_grad=grad_peak,
                )
            epoch_loss += float(loss.data) * rows.size
        train_curve.append(epoch_loss / fit_idx.size)

        val_loss, val_pred = evaluate(model, dataset, val_idx, config.batch_size)
        val_curve.append(val_loss)
        val_acc_curve.append(float(np.mean(val_pred == dataset.y[val_idx])))
        if stopper.update(val_loss, epoch):
            best_params = model.params.snapshot()
        if stopper.should_stop:
            stopped_early = True
            break

    model.params.restore(best_params)
    _, test_pred = evaluate(model, dataset, test_idx, config.batch_size)
    test_metrics = metrics(dataset.y[test_idx], test_pred, dataset.num_classes)
    assert int(test_metrics.confusion.sum()) == test_idx.size

    report = FoldReport(
        fold_index=split.index,
        epochs_run=epochs_run,
        best_epoch=stopper.best_epoch,
        stopped_early=stopped_early,
        train_loss=train_curve,
        val_loss=val_curve,
        val_accuracy=val_acc_curve,
        test_metrics=test_metrics,
        num_fit=int(fit_idx.size),
        num_val=int(val_idx.size),
        num_test=int(test_idx.size),
        wall_seconds=time.perf_counter() - started,
    )
    return report, model


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

@dataclass
class ExperimentReport:
    config: TrainConfig
    label_names: list
    dim_a: int
    dim_b: int
    ptm_a: str
    ptm_b: str
    num_samples: int
    fold_reports: list = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([r.test_metrics.accuracy for r in self.fold_reports])

    @property
    def macro_f1s(self) -> np.ndarray:
        return np.array([r.test_metrics.macro_f1 for r in self.fold_reports])

    def pooled_confusion(self) -> np.ndarray:
        k = len(self.label_names)
        pooled = np.zeros((k, k), dtype=np.int64)
        for r in self.fold_reports:
            pooled += r.test_metrics.confusion
        return pooled

    def to_dict(self) -> dict:
        # std over folds is the population one: the five folds are the whole
        # population being summarized, not a sample from a larger one
        return {
            "format": "parrot-report-v1",
            "config": self.config.to_dict(),
            "data": {
                "ptm_a": self.ptm_a,
                "ptm_b": self.ptm_b,
                "dim_a": self.dim_a,
                "dim_b": self.dim_b,
                "label_names": self.label_names,
                "num_samples": self.num_samples,
            },
            "folds": [r.to_dict() for r in sorted(self.fold_reports,
                                                  key=lambda r: r.fold_index)],
            "aggregate": {
                "accuracy_mean": float(self.accuracies.mean()),
                "accuracy_std": float(self.accuracies.std()),
                "macro_f1_mean": float(self.macro_f1s.mean()),
                "macro_f1_std": float(self.macro_f1s.std()),
                "pooled_confusion": self.pooled_confusion().tolist(),
            },
        }


def cross_validate(dataset: datamod.PairedDataset, config: TrainConfig,
                   fold_order=None, keep_models: bool = False):
    """Run stratified k-fold cross-validation.

    ``fold_order`` permutes execution order only; every fold derives its own
    seed from (experiment seed, fold index), so results do not depend on
    when a fold runs. Returns the report, plus the per-fold models when
    ``keep_models`` is set (indexed by fold).
    """
    started = time.perf_counter()
    splits = datamod.stratified_kfold(dataset.y, config.folds, config.seed)
    order = list(range(config.folds)) if fold_order is None else list(fold_order)
    if sorted(order) != list(range(config.folds)):
        raise FoldError(f"fold order {order} is not a permutation of the folds")
    report = ExperimentReport(
        config=config,
        label_names=list(dataset.label_names),
        dim_a=dataset.dim_a,
        dim_b=dataset.dim_b,
        ptm_a=dataset.ptm_a,
        ptm_b=dataset.ptm_b,
        num_samples=len(dataset),
    )
    models = {}
    for fold_index in order:
        fold_report, model = train_one_fold(dataset, splits[fold_index], config)
        report.fold_reports.append(fold_report)
        if keep_models:
            models[fold_index] = model
    report.fold_reports.sort(key=lambda r: r.fold_index)
    report.wall_seconds = time.perf_counter() - started
    if keep_models:
        return report, models
    return report
