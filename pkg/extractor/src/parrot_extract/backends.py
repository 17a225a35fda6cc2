"""Hidden-state backends. A backend turns a waveform into (frames, dim).

Pooling stays out of the backend on purpose: the pipeline owns the mean so
every model family is pooled identically.
"""

from typing import Protocol

import numpy as np

from .errors import RegistryError
from .registry import ModelSpec


class HiddenStateBackend(Protocol):
    dim: int

    def frames(self, wave: np.ndarray, sample_rate: int) -> np.ndarray:
        """Final hidden states, shape (T, dim), for a mono waveform."""
        ...


class TransformersBackend:
    """Final hidden states from a frozen transformers speech encoder.

    Pass `model` to reuse an already-constructed module (local checkpoints,
    tiny test models); otherwise `spec.checkpoint` is loaded via AutoModel.
    Weights are frozen and the module is switched to eval mode either way.
    """

    def __init__(self, spec: ModelSpec, model=None):
        import torch  # deferred so the package imports without torch

        self._torch = torch
        if model is None:
            from transformers import AutoModel

            model = AutoModel.from_pretrained(spec.checkpoint)
        model.eval()
        for p in model.parameters():
            p.requires_grad_(False)
        self._model = model
        self.dim = spec.dim

    def frames(self, wave: np.ndarray, sample_rate: int) -> np.ndarray:
        # sample_rate is advisory: these encoders are trained at 16 kHz and
        # the pipeline resamples before calling.
        torch = self._torch
        x = torch.from_numpy(np.asarray(wave, dtype=np.float32))[None, :]
        with torch.no_grad():
            hidden = self._model(x).last_hidden_state
        return hidden[0].to(torch.float64).cpu().numpy()


def default_backend(spec: ModelSpec) -> HiddenStateBackend:
    if spec.family == "transformers":
        return TransformersBackend(spec)
    raise RegistryError(
        f"no bundled loader for family {spec.family!r} ({spec.model_id}); "
        f"construct a backend for it and pass it to run_extraction")
