"""Model architectures: branch encoders, the two fusion branches, and heads.

A branch encoder turns one stream of pooled embeddings (one row per
utterance) into a 120-dimensional latent batch: each row is treated as a
single-channel signal, passed through two conv+ReLU+maxpool blocks, then
flattened and linearly projected. Two encoders never share parameters.

Fusion combines the two latent batches three ways:

* Hadamard branch: elementwise product of the latents (local interactions).
* Transport branch: a batch-level optimal-transport plan maps each latent
  batch toward the other, and the two mapped batches are concatenated with
  the originals, in the fixed column order
  ``[plan @ A | B | plan.T @ B | A]``.
* The plain concatenation baseline uses ``[A | B]`` and nothing else.

The plan is recomputed per batch from the current latents and is a constant
to the backward pass: gradients reach the encoders through the transport
products and every other path, never through the Sinkhorn iteration itself.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from parrot import nn, ot
from parrot.errors import CheckpointError, NumericsError, ShapeError

LATENT_DIM = 120
HIDDEN_DIM = 128
CONV1_FILTERS = 64
CONV2_FILTERS = 128
KERNEL_SIZE = 3

CHECKPOINT_MAGIC = b"PRRT"
CHECKPOINT_VERSION = 1

FUSION_KINDS = ("parrot", "concat", "single_a", "single_b")


@dataclass
class OtConfig:
    """Sinkhorn settings used when fusing a batch."""

    epsilon: float = 0.1
    max_iters: int = 100
    tol: float = 1e-6


def _as_tensor(x) -> nn.Tensor:
    return x if isinstance(x, nn.Tensor) else nn.Tensor(x)


def conv_stack_length(embed_dim: int) -> tuple[int, int]:
    """Length after the two conv+pool stages and the resulting flat width."""
    length = embed_dim
    for stage in (1, 2):
        if length < KERNEL_SIZE:
            raise ShapeError(
                f"embedding dim {embed_dim} too small for conv stage {stage}"
            )
        length = length - KERNEL_SIZE + 1
        if length < 2:
            raise ShapeError(
                f"embedding dim {embed_dim} too small for pool stage {stage}"
            )
        length = length // 2
    return length, CONV2_FILTERS * length


class BranchEncoder:
    """conv(1->64) -> pool -> conv(64->128) -> pool -> flatten -> dense(->120)."""

    def __init__(self, embed_dim: int, rng: np.random.Generator,
                 latent_dim: int = LATENT_DIM, dropout_rate: float = 0.2):
        self.embed_dim = embed_dim
        self.latent_dim = latent_dim
        self.dropout_rate = dropout_rate
        self.final_length, self.flat_dim = conv_stack_length(embed_dim)
        self.conv1 = nn.Conv1DLayer(1, CONV1_FILTERS, KERNEL_SIZE, rng)
        self.conv2 = nn.Conv1DLayer(CONV1_FILTERS, CONV2_FILTERS, KERNEL_SIZE, rng)
        self.proj = nn.DenseLayer(self.flat_dim, latent_dim, rng)

    def encode(self, x, training: bool = False,
               rng: np.random.Generator | None = None) -> nn.Tensor:
        x = _as_tensor(x)
        if x.data.ndim != 2 or x.data.shape[1] != self.embed_dim:
            raise ShapeError(
                f"encoder expects (batch, {self.embed_dim}), got {x.data.shape}"
            )
        batch = x.data.shape[0]
        h = nn.reshape(x, (batch, 1, self.embed_dim))
        h = nn.conv1d(h, self.conv1.weights, self.conv1.bias)
        h = nn.relu(h)
        h, _ = nn.maxpool1d(h)
        h = nn.conv1d(h, self.conv2.weights, self.conv2.bias)
        h = nn.relu(h)
        h, _ = nn.maxpool1d(h)
        h = nn.reshape(h, (batch, self.flat_dim))
        h = self.proj.forward(h)
        if training:
            if rng is None:
                raise ShapeError("training-mode encode needs an rng for dropout")
            h = nn.dropout(h, self.dropout_rate, rng, training=True)
        return h

    def register(self, params: nn.ParamSet, prefix: str):
        params.register(f"{prefix}.conv1.weights", self.conv1.weights)
        params.register(f"{prefix}.conv1.bias", self.conv1.bias)
        params.register(f"{prefix}.conv2.weights", self.conv2.weights)
        params.register(f"{prefix}.conv2.bias", self.conv2.bias)
        params.register(f"{prefix}.proj.weights", self.proj.weights)
        params.register(f"{prefix}.proj.bias", self.proj.bias)


class ClassifierHead:
    """dense(fused -> 128) + ReLU + dropout, then dense(128 -> classes)."""

    def __init__(self, fused_dim: int, num_classes: int, rng: np.random.Generator,
                 hidden_dim: int = HIDDEN_DIM, dropout_rate: float = 0.2):
        self.fused_dim = fused_dim
        self.hidden_dim = hidden_dim
        self.num_classes = num_classes
        self.dropout_rate = dropout_rate
        self.hidden = nn.DenseLayer(fused_dim, hidden_dim, rng)
        self.out = nn.DenseLayer(hidden_dim, num_classes, rng)

    def forward(self, fused: nn.Tensor, training: bool = False,
                rng: np.random.Generator | None = None):
        h = nn.relu(self.hidden.forward(fused))
        if training:
            h = nn.dropout(h, self.dropout_rate, rng, training=True)
        logits = self.out.forward(h)
        return logits, h

    def register(self, params: nn.ParamSet, prefix: str = "head"):
        params.register(f"{prefix}.hidden.weights", self.hidden.weights)
        params.register(f"{prefix}.hidden.bias", self.hidden.bias)
        params.register(f"{prefix}.out.weights", self.out.weights)
        params.register(f"{prefix}.out.bias", self.out.bias)


def hadamard_fuse(lat_a: nn.Tensor, lat_b: nn.Tensor) -> nn.Tensor:
    """Elementwise product of the two latent batches."""
    return nn.mul(lat_a, lat_b)


def ot_fuse(lat_a: nn.Tensor, lat_b: nn.Tensor, config: OtConfig,
            plan: ot.TransportPlan | None = None):
    """Transport branch output: ``[plan @ A | B | plan.T @ B | A]``.

    The plan is computed from the current latent values unless one is
    injected, and enters the graph as a constant. Returns the fused tensor
    together with the plan that produced it.
    """
    if lat_a.data.shape != lat_b.data.shape:
        raise ShapeError(
            f"ot_fuse shapes differ: {lat_a.data.shape} vs {lat_b.data.shape}"
        )
    if plan is None:
        cost = ot.cost_matrix(lat_a.data, lat_b.data)
        plan = ot.sinkhorn(cost, epsilon=config.epsilon,
                           max_iters=config.max_iters, tol=config.tol)
    if not plan.converged:
        raise NumericsError(
            f"transport plan did not converge ({plan.iterations_used} sweeps, "
            f"marginal violation {plan.marginal_violation():.3e})"
        )
    gamma = nn.Tensor(plan.gamma)
    gamma_t = nn.Tensor(plan.gamma.T)
    a_to_b = nn.matmul(gamma, lat_a)
    b_to_a = nn.matmul(gamma_t, lat_b)
    fused = nn.concat_cols([a_to_b, lat_b, b_to_a, lat_a])
    return fused, plan


class _ModelBase:
    fusion_kind: str

    def __init__(self):
        self.params = nn.ParamSet()

    def config(self) -> dict:
        raise NotImplementedError

    def forward(self, x_a, x_b, training=False, rng=None, plan=None):
        raise NotImplementedError

    def predict(self, x_a, x_b):
        """Class ids for a batch, inference mode."""
        logits, _ = self.forward(x_a, x_b, training=False)
        return np.argmax(logits.data, axis=1)

    @staticmethod
    def _check_aligned(x_a, x_b):
        if x_a.shape[0] != x_b.shape[0]:
            raise ShapeError(
                f"stream batches are misaligned: {x_a.shape[0]} vs {x_b.shape[0]} rows"
            )


class ParrotModel(_ModelBase):
    """Two branch encoders fused through the transport and Hadamard branches.

    Head input width is 4 x latent (transport block) + latent (Hadamard
    block); the constructor asserts this ledger so a misconfigured variant
    cannot train silently.
    """

    fusion_kind = "parrot"

    def __init__(self, dim_a: int, dim_b: int, num_classes: int, seed: int = 0,
                 dropout_rate: float = 0.2, ot_config: OtConfig | None = None,
                 latent_dim: int = LATENT_DIM):
        super().__init__()
        self.dim_a = dim_a
        self.dim_b = dim_b
        self.num_classes = num_classes
        self.seed = seed
        self.dropout_rate = dropout_rate
        self.latent_dim = latent_dim
        self.ot_config = ot_config if ot_config is not None else OtConfig()
        rng = np.random.default_rng([seed, 0x5EED])
        self.encoder_a = BranchEncoder(dim_a, rng, latent_dim, dropout_rate)
        self.encoder_b = BranchEncoder(dim_b, rng, latent_dim, dropout_rate)
        self.ot_width = 4 * latent_dim
        self.hp_width = latent_dim
        fused_dim = self.ot_width + self.hp_width
        assert self.ot_width == 4 * latent_dim and fused_dim == 5 * latent_dim
        self.head = ClassifierHead(fused_dim, num_classes, rng,
                                   dropout_rate=dropout_rate)
        self.encoder_a.register(self.params, "encoder_a")
        self.encoder_b.register(self.params, "encoder_b")
        self.head.register(self.params)

    def forward(self, x_a, x_b, training: bool = False,
                rng: np.random.Generator | None = None,
                plan: ot.TransportPlan | None = None):
        """Logits for a batch pair; also returns the penultimate activations."""
        x_a = np.asarray(x_a, dtype=np.float64)
        x_b = np.asarray(x_b, dtype=np.float64)
        self._check_aligned(x_a, x_b)
        lat_a = self.encoder_a.encode(x_a, training, rng)
        lat_b = self.encoder_b.encode(x_b, training, rng)
        transported, used_plan = ot_fuse(lat_a, lat_b, self.ot_config, plan)
        local = hadamard_fuse(lat_a, lat_b)
        assert transported.data.shape[1] == self.ot_width
        assert local.data.shape[1] == self.hp_width
        fused = nn.concat_cols([transported, local])
        assert fused.data.shape[1] == self.head.fused_dim
        logits, penultimate = self.head.forward(fused, training, rng)
        self.last_plan = used_plan
        return logits, penultimate

    def config(self) -> dict:
        return {
            "fusion_kind": self.fusion_kind,
            "dim_a": self.dim_a,
            "dim_b": self.dim_b,
            "num_classes": self.num_classes,
            "seed": self.seed,
            "dropout_rate": self.dropout_rate,
            "latent_dim": self.latent_dim,
            "ot": {
                "epsilon": self.ot_config.epsilon,
                "max_iters": self.ot_config.max_iters,
                "tol": self.ot_config.tol,
            },
        }


class ConcatBaselineModel(_ModelBase):
    """Same encoders, head fed with the plain ``[A | B]`` concatenation."""

    fusion_kind = "concat"

    def __init__(self, dim_a: int, dim_b: int, num_classes: int, seed: int = 0,
                 dropout_rate: float = 0.2, ot_config: OtConfig | None = None,
                 latent_dim: int = LATENT_DIM):
        super().__init__()
        self.dim_a = dim_a
        self.dim_b = dim_b
        self.num_classes = num_classes
        self.seed = seed
        self.dropout_rate = dropout_rate
        self.latent_dim = latent_dim
        self.ot_config = ot_config if ot_config is not None else OtConfig()
        rng = np.random.default_rng([seed, 0x5EED])
        self.encoder_a = BranchEncoder(dim_a, rng, latent_dim, dropout_rate)
        self.encoder_b = BranchEncoder(dim_b, rng, latent_dim, dropout_rate)
        fused_dim = 2 * latent_dim
        self.head = ClassifierHead(fused_dim, num_classes, rng,
                                   dropout_rate=dropout_rate)
        self.encoder_a.register(self.params, "encoder_a")
        self.encoder_b.register(self.params, "encoder_b")
        self.head.register(self.params)

    def forward(self, x_a, x_b, training: bool = False,
                rng: np.random.Generator | None = None, plan=None):
        x_a = np.asarray(x_a, dtype=np.float64)
        x_b = np.asarray(x_b, dtype=np.float64)
        self._check_aligned(x_a, x_b)
        lat_a = self.encoder_a.encode(x_a, training, rng)
        lat_b = self.encoder_b.encode(x_b, training, rng)
        fused = nn.concat_cols([lat_a, lat_b])
        assert fused.data.shape[1] == 2 * self.latent_dim
        logits, penultimate = self.head.forward(fused, training, rng)
        return logits, penultimate

    def config(self) -> dict:
        return {
            "fusion_kind": self.fusion_kind,
            "dim_a": self.dim_a,
            "dim_b": self.dim_b,
            "num_classes": self.num_classes,
            "seed": self.seed,
            "dropout_rate": self.dropout_rate,
            "latent_dim": self.latent_dim,
        }


class SingleBranchModel(_ModelBase):
    """Ablation: one branch encoder feeding the head directly."""

    def __init__(self, dim_a: int, dim_b: int, num_classes: int, seed: int = 0,
                 dropout_rate: float = 0.2, which: str = "a",
                 ot_config: OtConfig | None = None, latent_dim: int = LATENT_DIM):
        super().__init__()
        if which not in ("a", "b"):
            raise ShapeError(f"single-branch stream must be 'a' or 'b', got {which!r}")
        self.which = which
        self.fusion_kind = f"single_{which}"
        self.dim_a = dim_a
        self.dim_b = dim_b
        self.num_classes = num_classes
        self.seed = seed
        self.dropout_rate = dropout_rate
        self.latent_dim = latent_dim
        rng = np.random.default_rng([seed, 0x5EED])
        embed_dim = dim_a if which == "a" else dim_b
        self.encoder = BranchEncoder(embed_dim, rng, latent_dim, dropout_rate)
        self.head = ClassifierHead(latent_dim, num_classes, rng,
                                   dropout_rate=dropout_rate)
        self.encoder.register(self.params, f"encoder_{which}")
        self.head.register(self.params)

    def forward(self, x_a, x_b, training: bool = False,
                rng: np.random.Generator | None = None, plan=None):
        x_a = np.asarray(x_a, dtype=np.float64)
        x_b = np.asarray(x_b, dtype=np.float64)
        self._check_aligned(x_a, x_b)
        lat = self.encoder.encode(x_a if self.which == "a" else x_b, training, rng)
        logits, penultimate = self.head.forward(lat, training, rng)
        return logits, penultimate

    def config(self) -> dict:
        return {
            "fusion_kind": self.fusion_kind,
            "dim_a": self.dim_a,
            "dim_b": self.dim_b,
            "num_classes": self.num_classes,
            "seed": self.seed,
            "dropout_rate": self.dropout_rate,
            "latent_dim": self.latent_dim,
        }


def build_model(fusion_kind: str, dim_a: int, dim_b: int, num_classes: int,
                seed: int = 0, dropout_rate: float = 0.2,
                ot_config: OtConfig | None = None) -> _ModelBase:
    if fusion_kind == "parrot":
        return ParrotModel(dim_a, dim_b, num_classes, seed, dropout_rate, ot_config)
    if fusion_kind == "concat":
        return ConcatBaselineModel(dim_a, dim_b, num_classes, seed, dropout_rate,
                                   ot_config)
    if fusion_kind == "single_a":
        return SingleBranchModel(dim_a, dim_b, num_classes, seed, dropout_rate, "a")
    if fusion_kind == "single_b":
        return SingleBranchModel(dim_a, dim_b, num_classes, seed, dropout_rate, "b")
    raise ShapeError(f"unknown fusion kind {fusion_kind!r}; expected one of {FUSION_KINDS}")


# ---------------------------------------------------------------------------
# parameter arithmetic
# ---------------------------------------------------------------------------

def encoder_parameter_count(embed_dim: int, latent_dim: int = LATENT_DIM) -> int:
    """Trainable parameters of one branch encoder, computed without building it."""
    _, flat_dim = conv_stack_length(embed_dim)
    conv1 = CONV1_FILTERS * 1 * KERNEL_SIZE + CONV1_FILTERS
    conv2 = CONV2_FILTERS * CONV1_FILTERS * KERNEL_SIZE + CONV2_FILTERS
    proj = flat_dim * latent_dim + latent_dim
    return conv1 + conv2 + proj


def parrot_parameter_count(dim_a: int, dim_b: int, num_classes: int,
                           latent_dim: int = LATENT_DIM,
                           hidden_dim: int = HIDDEN_DIM) -> int:
    """Trainable parameters of the full two-branch fusion model."""
    fused_dim = 5 * latent_dim
    head = fused_dim * hidden_dim + hidden_dim + hidden_dim * num_classes + num_classes
    return (encoder_parameter_count(dim_a, latent_dim)
            + encoder_parameter_count(dim_b, latent_dim) + head)


# ---------------------------------------------------------------------------
# checkpoint container
# ---------------------------------------------------------------------------
# Layout (all integers little-endian):
#   bytes 0..3   magic "PRRT"
#   bytes 4..7   u32 format version (currently 1)
#   bytes 8..11  u32 length of the JSON header in bytes
#   header       UTF-8 JSON: architecture config, extra metadata, and the
#                parameter manifest [{"name", "shape"}, ...] in order
#   payload      each parameter's float64 values, C order, little-endian,
#                concatenated in manifest order

def save_checkpoint(model: _ModelBase, path, extra: dict | None = None):
    manifest = [
        {"name": name, "shape": list(tensor.data.shape)}
        for name, tensor in model.params
    ]
    header = {
        "format_version": CHECKPOINT_VERSION,
        "architecture": model.config(),
        "extra": extra or {},
        "parameters": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for _, tensor in model.params:
            fh.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Rebuild a model from a checkpoint; returns (model, extra metadata)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad checkpoint magic")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header_len = struct.unpack("<I", blob[8:12])[0]
    if len(blob) < 12 + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[12:12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from exc

    arch = header.get("architecture", {})
    kind = arch.get("fusion_kind")
    try:
        if kind == "parrot":
            ot_cfg = OtConfig(**arch["ot"])
            model = ParrotModel(arch["dim_a"], arch["dim_b"], arch["num_classes"],
                                arch["seed"], arch["dropout_rate"], ot_cfg,
                                arch["latent_dim"])
        elif kind == "concat":
            model = ConcatBaselineModel(arch["dim_a"], arch["dim_b"],
                                        arch["num_classes"], arch["seed"],
                                        arch["dropout_rate"],
                                        latent_dim=arch["latent_dim"])
        elif kind in ("single_a", "single_b"):
            model = SingleBranchModel(arch["dim_a"], arch["dim_b"],
                                      arch["num_classes"], arch["seed"],
                                      arch["dropout_rate"], kind[-1],
                                      latent_dim=arch["latent_dim"])
        else:
            raise CheckpointError(f"{path}: unknown fusion kind {kind!r}")
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: incomplete architecture header ({exc})") from exc

    manifest = header.get("parameters", [])
    names = model.params.names()
    if [entry.get("name") for entry in manifest] != names:
        raise CheckpointError(f"{path}: parameter manifest does not match architecture")

    offset = 12 + header_len
    for entry in manifest:
        shape = tuple(entry["shape"])
        tensor = model.params[entry["name"]]
        if tuple(tensor.data.shape) != shape:
            raise CheckpointError(
                f"{path}: parameter {entry['name']} has shape {shape}, "
                f"expected {tuple(tensor.data.shape)}"
            )
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8 if shape else 8
        chunk = blob[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated payload at {entry['name']}")
        tensor.data[...] = np.frombuffer(chunk, dtype="<f8").reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    return model, header.get("extra", {})
