"""WAV loading: decode, collapse to mono, resample to the target rate."""

import math
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import AudioError

# integer PCM full-scale divisors per dtype
_PCM_SCALE = {np.dtype(np.int16): 32768.0, np.dtype(np.int32): 2147483648.0}


def load_waveform(path, target_rate: int = 16000) -> np.ndarray:
    """Return a mono float64 waveform at `target_rate` samples/s."""
    path = Path(path)
    if not path.is_file():
        raise AudioError(f"no such audio file: {path}")
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise AudioError(f"cannot decode {path}: {exc}") from exc
    if data.size == 0:
        raise AudioError(f"empty audio file: {path}")

    if data.dtype in _PCM_SCALE:
        wave = data.astype(np.float64) / _PCM_SCALE[data.dtype]
    elif data.dtype == np.uint8:  # 8-bit WAV is unsigned, midpoint 128
        wave = (data.astype(np.float64) - 128.0) / 128.0
    else:
        wave = data.astype(np.float64)
    if wave.ndim == 2:
        wave = wave.mean(axis=1)
    elif wave.ndim != 1:
        raise AudioError(f"unsupported channel layout {data.shape} in {path}")
    if not np.all(np.isfinite(wave)):
        raise AudioError(f"non-finite samples in {path}")

    if rate != target_rate:
        if rate < 1:
            raise AudioError(f"invalid sample rate {rate} in {path}")
        g = math.gcd(int(rate), int(target_rate))
        wave = resample_poly(wave, target_rate // g, rate // g)
    return np.ascontiguousarray(wave, dtype=np.float64)
