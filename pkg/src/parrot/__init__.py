"""Two-stream embedding fusion with transport and Hadamard branches.

The package trains, from scratch in float64 NumPy, a classifier over paired
utterance embeddings produced by two different pre-trained models. The two
streams are each encoded to a 120-dimensional latent; a batch-level
entropic optimal-transport plan aligns them globally while an elementwise
product captures local interactions, and a small head classifies the fused
vector. Everything is seeded and reproducible; evaluation is stratified
k-fold cross-validation with accuracy, macro-F1, and confusion matrices.
"""

from parrot import cli, data, errors, fusion, nn, ot, train
from parrot.data import (
    FeatureTable,
    PairedDataset,
    SynthSpec,
    load_pfv,
    pair,
    stratified_kfold,
    synth_generate,
    write_pfv,
)
from parrot.errors import ParrotError
from parrot.fusion import (
    ConcatBaselineModel,
    OtConfig,
    ParrotModel,
    SingleBranchModel,
    build_model,
    load_checkpoint,
    parrot_parameter_count,
    save_checkpoint,
)
from parrot.ot import cost_matrix, sinkhorn, transport, uniform_plan
from parrot.train import TrainConfig, cross_validate, metrics, train_one_fold

__version__ = "0.1.0"

__all__ = [
    "FeatureTable",
    "PairedDataset",
    "SynthSpec",
    "ParrotError",
    "ConcatBaselineModel",
    "OtConfig",
    "ParrotModel",
    "SingleBranchModel",
    "TrainConfig",
    "build_model",
    "cli",
    "cost_matrix",
    "cross_validate",
    "data",
    "errors",
    "fusion",
    "load_checkpoint",
    "load_pfv",
    "metrics",
    "nn",
    "ot",
    "pair",
    "parrot_parameter_count",
    "save_checkpoint",
    "sinkhorn",
    "stratified_kfold",
    "synth_generate",
    "train",
    "train_one_fold",
    "transport",
    "uniform_plan",
    "write_pfv",
]
