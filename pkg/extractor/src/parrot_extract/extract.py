"""Extraction pipeline: manifest in, one pooled embedding per utterance out.

The embedding is the unweighted mean over time of the encoder's final
hidden states. Undecodable audio is either skipped with a log line or
aborts the run, per flag; a width mismatch against the registry always
aborts because it poisons every downstream consumer of the header.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import load_waveform
from .backends import HiddenStateBackend, default_backend
from .errors import AudioError, DimMismatchError, ExtractError, ManifestError
from .pfv import write_pfv
from .registry import lookup

log = logging.getLogger("parrot_extract")

_HEADER = ["utterance_id", "relative_path", "label_name"]


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    relative_path: str
    label_name: str


@dataclass(frozen=True)
class ExtractionJob:
    model_id: str
    audio_dir: str
    manifest: str
    out: str
    sample_rate: int = 16000


@dataclass
class ExtractionResult:
    written: int
    skipped: list = field(default_factory=list)  # (utterance_id, reason)


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"no such manifest: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows or rows[0] != _HEADER:
        raise ManifestError(
            f"manifest must start with header {','.join(_HEADER)!r}")
    entries = []
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise ManifestError(f"line {lineno}: expected 3 columns, "
                                f"got {len(row)}")
        utt_id, rel, label = (cell.strip() for cell in row)
        if not utt_id or not rel or not label:
            raise ManifestError(f"line {lineno}: empty field")
        if utt_id in seen:
            raise ManifestError(f"line {lineno}: duplicate id {utt_id!r}")
        seen.add(utt_id)
        entries.append(ManifestEntry(utt_id, rel, label))
    if not entries:
        raise ManifestError(f"manifest {path} has no entries")
    return entries


def run_extraction(job: ExtractionJob,
                   backend: HiddenStateBackend | None = None,
                   on_error: str = "abort") -> ExtractionResult:
    """Embed every manifest entry and write one PFV file.

    `on_error` is "abort" (default) or "skip"; skipping logs a warning per
    failed file and keeps going. Width mismatches abort regardless.
    """
    if on_error not in ("abort", "skip"):
        raise ExtractError(f"on_error must be 'abort' or 'skip', "
                           f"got {on_error!r}")
    spec = lookup(job.model_id)
    if backend is None:
        backend = default_backend(spec)
    entries = read_manifest(job.manifest)
    label_names = sorted({e.label_name for e in entries})
    label_index = {name: i for i, name in enumerate(label_names)}
    audio_dir = Path(job.audio_dir)

    ids, labels, vectors = [], [], []
    skipped = []
    for entry in entries:
        try:
            wave = load_waveform(audio_dir / entry.relative_path,
                                 job.sample_rate)
        except AudioError as exc:
            if on_error == "abort":
                raise
            log.warning("skipping %s: %s", entry.utterance_id, exc)
            skipped.append((entry.utterance_id, str(exc)))
            continue
        frames = np.asarray(backend.frames(wave, job.sample_rate),
                            dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] == 0:
            raise ExtractError(f"backend returned shape {frames.shape} for "
                               f"{entry.utterance_id}, expected (T, dim)")
        if frames.shape[1] != spec.dim:
            raise DimMismatchError(
                f"{entry.utterance_id}: backend width {frames.shape[1]} != "
                f"declared dim {spec.dim} for {spec.model_id}")
        pooled = frames.mean(axis=0)
        if not np.all(np.isfinite(pooled)):
            raise ExtractError(f"non-finite embedding for "
                               f"{entry.utterance_id}")
        ids.append(entry.utterance_id)
        labels.append(label_index[entry.label_name])
        vectors.append(pooled)

    if not ids:
        raise ExtractError("every entry failed; nothing to write")
    write_pfv(job.out, spec.model_id, label_names, ids, labels,
              np.vstack(vectors))
    log.info("wrote %d rows (dim %d) to %s, skipped %d",
             len(ids), spec.dim, job.out, len(skipped))
    return ExtractionResult(written=len(ids), skipped=skipped)
