"""Feature tables, the PFV interchange format, pairing, folds, synthesis.

A feature table holds pooled embeddings from one pre-trained model: one row
per utterance, a class vocabulary, and integer labels into it. Tables move
between tools as PFV text files:

    #PFV1,ptm=<model name>,dim=<D>,labels=<name;name;...>
    <utterance id>,<label name>,<v0>,<v1>,...,<v D-1>

Values are written with ``repr(float(v))`` so a write/load round trip is
bit-exact for float64. Parsing is strict; each malformed input raises a
distinct error type so callers can map problems to exit codes without
string-matching messages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from parrot.errors import (
    CellParseError,
    DataError,
    DuplicateIdError,
    EmptyTableError,
    FoldError,
    HeaderError,
    NonFiniteValueError,
    PairingError,
    RowFormatError,
    UnknownLabelError,
)

PFV_MAGIC = "#PFV1"
_FORBIDDEN = set(",;\n\r")


def _clean_token(value: str, what: str) -> str:
    if not value or _FORBIDDEN & set(value):
        raise DataError(f"{what} {value!r} is empty or contains ',', ';' or newlines")
    return value


@dataclass
class FeatureTable:
    """Embeddings from one model: aligned ids, labels, and feature rows."""

    ptm_name: str
    dim: int
    label_names: list[str]
    ids: list[str]
    labels: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)
        n = len(self.ids)
        if self.features.shape != (n, self.dim):
            raise DataError(
                f"feature block is {self.features.shape}, expected ({n}, {self.dim})"
            )
        if self.labels.shape != (n,):
            raise DataError(f"label block is {self.labels.shape}, expected ({n},)")
        if len(set(self.ids)) != n:
            raise DuplicateIdError("utterance ids are not unique")
        if self.labels.size and not (
            (self.labels >= 0) & (self.labels < len(self.label_names))
        ).all():
            raise DataError("label id outside the class vocabulary")
        if not np.isfinite(self.features).all():
            raise NonFiniteValueError("feature block contains non-finite values")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def num_classes(self) -> int:
        return len(self.label_names)


def load_pfv(path) -> FeatureTable:
    """Parse one PFV file into a table, failing loudly on any defect."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or not lines[0].startswith(PFV_MAGIC + ","):
        raise HeaderError(f"{path}: first line is not a {PFV_MAGIC} header")
    fields = lines[0].split(",", 3)
    if len(fields) != 4:
        raise HeaderError(f"{path}: header needs ptm=, dim= and labels= fields")
    _, ptm_field, dim_field, labels_field = fields
    if not ptm_field.startswith("ptm=") or not dim_field.startswith("dim=") \
            or not labels_field.startswith("labels="):
        raise HeaderError(f"{path}: header fields must be ptm=, dim=, labels= in order")
    ptm_name = ptm_field[4:]
    if not ptm_name:
        raise HeaderError(f"{path}: empty ptm name")
    try:
        dim = int(dim_field[4:])
    except ValueError:
        raise HeaderError(f"{path}: dim is not an integer: {dim_field[4:]!r}") from None
    if dim < 1:
        raise HeaderError(f"{path}: dim must be positive, got {dim}")
    label_names = labels_field[7:].split(";")
    if any(not name for name in label_names):
        raise HeaderError(f"{path}: empty label name in vocabulary")
    if len(set(label_names)) != len(label_names):
        raise HeaderError(f"{path}: duplicate label name in vocabulary")
    label_index = {name: i for i, name in enumerate(label_names)}

    ids: list[str] = []
    seen: set[str] = set()
    labels: list[int] = []
    rows: list[np.ndarray] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 2 + dim:
            raise RowFormatError(
                f"{path}:{lineno}: expected {2 + dim} cells, found {len(cells)}"
            )
        utt_id, label_name = cells[0], cells[1]
        if utt_id in seen:
            raise DuplicateIdError(f"{path}:{lineno}: duplicate utterance id {utt_id!r}")
        if label_name not in label_index:
            raise UnknownLabelError(
                f"{path}:{lineno}: label {label_name!r} not in header vocabulary"
            )
        try:
            row = np.array([float(cell) for cell in cells[2:]], dtype=np.float64)
        except ValueError as exc:
            raise CellParseError(f"{path}:{lineno}: unparsable value ({exc})") from None
        if not np.isfinite(row).all():
            raise NonFiniteValueError(f"{path}:{lineno}: non-finite feature value")
        seen.add(utt_id)
        ids.append(utt_id)
        labels.append(label_index[label_name])
        rows.append(row)
    if not rows:
        raise EmptyTableError(f"{path}: no data rows")
    return FeatureTable(ptm_name, dim, label_names, ids,
                        np.array(labels, dtype=np.int64), np.vstack(rows))


def write_pfv(table: FeatureTable, path):
    """Serialize a table; floats keep full precision for exact round trips."""
    _clean_token(table.ptm_name, "ptm name")
    for name in table.label_names:
        _clean_token(name, "label name")
    for utt_id in table.ids:
        _clean_token(utt_id, "utterance id")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{PFV_MAGIC},ptm={table.ptm_name},dim={table.dim},"
                 f"labels={';'.join(table.label_names)}\n")
        for i, utt_id in enumerate(table.ids):
            cells = ",".join(repr(float(v)) for v in table.features[i])
            fh.write(f"{utt_id},{table.label_names[table.labels[i]]},{cells}\n")


# ---------------------------------------------------------------------------
# pairing
# ---------------------------------------------------------------------------

@dataclass
class PairedDataset:
    """Two aligned feature streams over the same utterances and labels."""

    ids: list[str]
    x_a: np.ndarray
    x_b: np.ndarray
    y: np.ndarray
    label_names: list[str]
    ptm_a: str
    ptm_b: str

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim_a(self) -> int:
        return self.x_a.shape[1]

    @property
    def dim_b(self) -> int:
        return self.x_b.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.label_names)

    def subset(self, indices) -> "PairedDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return PairedDataset(
            ids=[self.ids[i] for i in indices],
            x_a=self.x_a[indices],
            x_b=self.x_b[indices],
            y=self.y[indices],
            label_names=self.label_names,
            ptm_a=self.ptm_a,
            ptm_b=self.ptm_b,
        )


def pair(table_a: FeatureTable, table_b: FeatureTable) -> PairedDataset:
    """Join two tables on utterance id, in table A's row order.

    The class vocabularies must be identical (same names, same order), and a
    shared utterance must carry the same label on both sides. Utterances
    present in only one table are dropped; an empty intersection fails.
    """
    if table_a.label_names != table_b.label_names:
        raise PairingError(
            f"class vocabularies differ: {table_a.label_names} vs {table_b.label_names}"
        )
    index_b = {utt_id: i for i, utt_id in enumerate(table_b.ids)}
    rows_a, rows_b = [], []
    ids, labels = [], []
    for i, utt_id in enumerate(table_a.ids):
        j = index_b.get(utt_id)
        if j is None:
            continue
        if table_a.labels[i] != table_b.labels[j]:
            raise PairingError(
                f"utterance {utt_id!r} is labelled "
                f"{table_a.label_names[table_a.labels[i]]!r} in one stream and "
                f"{table_b.label_names[table_b.labels[j]]!r} in the other"
            )
        ids.append(utt_id)
        labels.append(table_a.labels[i])
        rows_a.append(i)
        rows_b.append(j)
    if not ids:
        raise PairingError("no shared utterance ids between the two streams")
    return PairedDataset(
        ids=ids,
        x_a=table_a.features[rows_a],
        x_b=table_b.features[rows_b],
        y=np.array(labels, dtype=np.int64),
        label_names=list(table_a.label_names),
        ptm_a=table_a.ptm_name,
        ptm_b=table_b.ptm_name,
    )


# ---------------------------------------------------------------------------
# folds and batches
# ---------------------------------------------------------------------------

@dataclass
class FoldSplit:
    index: int
    train_indices: np.ndarray
    test_indices: np.ndarray


def stratified_kfold(labels, num_folds: int, seed: int = 0) -> list[FoldSplit]:
    """Deterministic stratified folds; per-class test counts differ by <= 1.

    Each class's members are shuffled once, chopped into ``num_folds`` chunks
    (the first ``n mod k`` chunks one larger), and dealt to folds with a
    per-class rotation so the oversized chunks do not pile onto fold 0.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.shape[0]
    if num_folds < 2:
        raise FoldError(f"need at least 2 folds, got {num_folds}")
    if n < num_folds:
        raise FoldError(f"cannot cut {n} samples into {num_folds} folds")
    rng = np.random.default_rng([seed, 0xF01D])
    test_members: list[list[int]] = [[] for _ in range(num_folds)]
    for class_offset, class_id in enumerate(np.unique(labels)):
        members = np.flatnonzero(labels == class_id)
        if members.size < num_folds:
            raise FoldError(
                f"class id {class_id} has {members.size} samples, "
                f"fewer than {num_folds} folds"
            )
        members = rng.permutation(members)
        for chunk_no, chunk in enumerate(np.array_split(members, num_folds)):
            test_members[(chunk_no + class_offset) % num_folds].extend(chunk.tolist())
    splits = []
    everything = np.arange(n)
    for fold_index in range(num_folds):
        test_idx = np.sort(np.array(test_members[fold_index], dtype=np.int64))
        train_idx = np.setdiff1d(everything, test_idx)
        splits.append(FoldSplit(fold_index, train_idx, test_idx))
    return splits


def batches(n: int, batch_size: int, rng: np.random.Generator | None = None):
    """Index blocks covering 0..n-1; shuffled when an rng is given.

    The final block may be short. With ``rng=None`` the order is the
    canonical ascending one, which is what deterministic evaluation uses.
    """
    if batch_size < 1:
        raise DataError(f"batch size must be positive, got {batch_size}")
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


# ---------------------------------------------------------------------------
# synthetic complementary data
# ---------------------------------------------------------------------------

@dataclass
class SynthSpec:
    """Knobs for the two-stream synthetic benchmark.

    Classes factor into a group (c // 2) and a bit (c % 2). The group is
    easy: a linear bump each stream carries on its own. The bit is planted
    so that it is invisible to either stream alone:

    * ``pair_scale``: a shared Gaussian carrier is added to one coordinate
      of each stream, with the bit riding on their difference. Any model
      that sees both streams can cancel the carrier linearly; one stream
      alone sees mostly carrier.
    * ``product_scale``: per-sample random signs fill matched coordinate
      slots, with the bit encoded in the sign product. A multiplicative
      route reads this directly; an additive one has to learn a parity.

    Zeroing every scale leaves pure noise, so any classifier sits at chance.
    """

    num_classes: int = 4
    per_class: int = 150
    dim_a: int = 96
    dim_b: int = 96
    noise: float = 0.4
    group_scale: float = 1.5
    pair_scale: float = 0.6
    pair_carrier: float = 3.0
    product_scale: float = 1.6
    product_slots: int = 10
    ptm_a: str = "synth-a"
    ptm_b: str = "synth-b"


def synth_generate(spec: SynthSpec, seed: int = 0):
    """Build the two synthetic streams; returns (table_a, table_b)."""
    k = spec.num_classes
    if k < 2:
        raise DataError(f"need at least 2 classes, got {k}")
    if spec.per_class < 1:
        raise DataError(f"per_class must be positive, got {spec.per_class}")
    num_groups = (k + 1) // 2
    group_base = 6 * num_groups
    pair_pos = group_base + 3
    slot_base = group_base + 9
    needed = slot_base + 5 * max(spec.product_slots - 1, 0) + 1
    if min(spec.dim_a, spec.dim_b) < needed:
        raise DataError(
            f"dims ({spec.dim_a}, {spec.dim_b}) too small for the cue layout; "
            f"need at least {needed}"
        )

    n = k * spec.per_class
    rng = np.random.default_rng([seed, 0xDA7A])
    y = np.repeat(np.arange(k, dtype=np.int64), spec.per_class)
    x_a = rng.normal(0.0, spec.noise, size=(n, spec.dim_a))
    x_b = rng.normal(0.0, spec.noise, size=(n, spec.dim_b))
    group = y // 2
    bit_sign = 2.0 * (y % 2) - 1.0

    rows = np.arange(n)
    x_a[rows, 6 * group + 1] += spec.group_scale
    x_b[rows, 6 * group + 4] += spec.group_scale

    if spec.pair_scale != 0.0:
        carrier = rng.normal(0.0, spec.pair_carrier, size=n)
        x_a[:, pair_pos] += carrier
        x_b[:, pair_pos] += carrier - bit_sign * spec.pair_scale

    if spec.product_scale != 0.0:
        for j in range(spec.product_slots):
            slot = slot_base + 5 * j
            r = rng.choice([-1.0, 1.0], size=n)
            x_a[:, slot] += r * spec.product_scale
            x_b[:, slot] += r * bit_sign * spec.product_scale

    order = rng.permutation(n)
    y = y[order]
    x_a = x_a[order]
    x_b = x_b[order]
    width = max(5, len(str(n - 1)))
    ids = [f"utt_{i:0{width}d}" for i in range(n)]
    label_names = [f"class_{c}" for c in range(k)]
    table_a = FeatureTable(spec.ptm_a, spec.dim_a, label_names, ids, y, x_a)
    table_b = FeatureTable(spec.ptm_b, spec.dim_b, label_names, list(ids), y.copy(),
                           x_b)
    return table_a, table_b
