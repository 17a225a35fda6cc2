"""Writer for the PFV v1 feature interchange format.

Layout (one line per record, UTF-8):

    #PFV1,ptm=<name>,dim=<D>,labels=<name0>;<name1>;...
    <utterance_id>,<label_name>,<v0>,<v1>,...

Floats are serialized with repr() so consumers reparse them bit-exactly.
This is an independent implementation of the format; the training side
ships its own reader and the two only meet at this file layout.
"""

import numpy as np

from .errors import ManifestError

MAGIC = "#PFV1"
_FORBIDDEN = set(",;\n\r")


def _clean(token: str, what: str) -> str:
    if not token or set(token) & _FORBIDDEN:
        raise ManifestError(f"{what} {token!r} is empty or contains ,;CR/LF")
    return token


def write_pfv(path, ptm_name: str, label_names: list[str],
              ids: list[str], labels: list[int],
              features: np.ndarray) -> None:
    features = np.asarray(features, dtype=np.float64)
    dim = features.shape[1]
    _clean(ptm_name, "ptm name")
    for name in label_names:
        _clean(name, "label name")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{MAGIC},ptm={ptm_name},dim={dim},"
                 f"labels={';'.join(label_names)}\n")
        for utt_id, label, row in zip(ids, labels, features):
            _clean(utt_id, "utterance id")
            cells = ",".join(repr(float(v)) for v in row)
            fh.write(f"{utt_id},{label_names[label]},{cells}\n")
