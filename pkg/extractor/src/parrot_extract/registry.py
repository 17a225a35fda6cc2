"""Catalog of supported frozen speech encoders and their embedding widths.

The declared `dim` is a contract: extraction aborts if a backend emits any
other width, so a PFV header can always be trusted downstream.
"""

from dataclasses import dataclass

from .errors import RegistryError


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    checkpoint: str  # weight location understood by the family's loader
    dim: int  # width of the final hidden state
    family: str  # "transformers" or "mamba"


_BUILTIN = (
    ModelSpec("wavlm-base", "microsoft/wavlm-base", 768, "transformers"),
    ModelSpec("hubert-base", "facebook/hubert-base-ls960", 768, "transformers"),
    ModelSpec("wav2vec2-base", "facebook/wav2vec2-base", 768, "transformers"),
    ModelSpec("unispeech-sat-base", "microsoft/unispeech-sat-base", 768,
              "transformers"),
    ModelSpec("mms-1b", "facebook/mms-1b", 1280, "transformers"),
    ModelSpec("audio-mamba-tiny", "audio-mamba/tiny", 960, "mamba"),
    ModelSpec("audio-mamba-small", "audio-mamba/small", 1920, "mamba"),
    ModelSpec("audio-mamba-base", "audio-mamba/base", 3840, "mamba"),
)

MODEL_TABLE: dict[str, ModelSpec] = {spec.model_id: spec for spec in _BUILTIN}


def lookup(model_id: str) -> ModelSpec:
    try:
        return MODEL_TABLE[model_id]
    except KeyError:
        known = ", ".join(sorted(MODEL_TABLE))
        raise RegistryError(
            f"unknown model {model_id!r}; known ids: {known}") from None


def register_model(spec: ModelSpec, replace: bool = False) -> None:
    """Add a custom checkpoint (e.g., a locally fine-tuned or tiny model)."""
    if spec.dim < 1:
        raise RegistryError(f"dim must be positive, got {spec.dim}")
    if spec.model_id in MODEL_TABLE and not replace:
        raise RegistryError(f"model {spec.model_id!r} already registered")
    MODEL_TABLE[spec.model_id] = spec
