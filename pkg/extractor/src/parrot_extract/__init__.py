"""Pooled-embedding extraction from frozen speech encoders into PFV files."""

from . import audio, backends, cli, extract, pfv, registry
from .errors import (AudioError, DimMismatchError, ExtractError,
                     ManifestError, RegistryError)
from .extract import (ExtractionJob, ExtractionResult, ManifestEntry,
                      read_manifest, run_extraction)
from .registry import MODEL_TABLE, ModelSpec, lookup, register_model

__version__ = "0.1.0"

__all__ = [
    "audio", "backends", "cli", "extract", "pfv", "registry",
    "ExtractError", "RegistryError", "AudioError", "ManifestError",
    "DimMismatchError",
    "ExtractionJob", "ExtractionResult", "ManifestEntry",
    "read_manifest", "run_extraction",
    "MODEL_TABLE", "ModelSpec", "lookup", "register_model",
]
