"""LIBSVM text format: ``<label> <index>:<value> ...`` with 1-based feature indices."""
from __future__ import annotations

import json

import numpy as np
import scipy.sparse as sp

from .exceptions import ParameterError, ParseError
from .problems import Dataset


def _parse_line(text, lineno):
    body = text.split("#", 1)[0]
    tokens = []
    pos = 0
    for tok in body.split():
        pos = body.index(tok, pos)
        tokens.append((tok, pos + 1))
        pos += len(tok)
    if not tokens:
        return None
    label_tok, col = tokens[0]
    try:
        label = float(label_tok)
    except ValueError:
        raise ParseError(f"bad label {label_tok!r}", lineno, col) from None
    indices, values = [], []
    seen = set()
    for tok, col in tokens[1:]:
        idx_s, sep, val_s = tok.partition(":")
        if not sep:
            raise ParseError(f"expected <index>:<value>, got {tok!r}", lineno, col)
        try:
            idx = int(idx_s)
            val = float(val_s)
        except ValueError:
            raise ParseError(f"bad feature token {tok!r}", lineno, col) from None
        if idx < 1:
            raise ParseError(f"feature indices are 1-based, got {idx}", lineno, col)
        if idx in seen:
            raise ParseError(f"duplicate feature index {idx}", lineno, col)
        if not np.isfinite(val):
            raise ParseError(f"non-finite value in {tok!r}", lineno, col)
        seen.add(idx)
        indices.append(idx - 1)
        values.append(val)
    return label, indices, values


def load_libsvm(path, task="classification", n_features=None, map_labels=True):
    """Read a LIBSVM file into a :class:`Dataset` with CSR features.

    The feature count is the largest index seen unless ``n_features`` is
    given. For classification, ``{0, 1}`` labels are mapped to ``{-1, +1}``
    when ``map_labels`` is set and rejected otherwise.
    """
    labels, rows, cols, vals = [], [], [], []
    with open(path) as fh:
        for lineno, text in enumerate(fh, start=1):
            parsed = _parse_line(text, lineno)
            if parsed is None:
                continue
            label, idx, v = parsed
            rows.extend([len(labels)] * len(idx))
            cols.extend(idx)
            vals.extend(v)
            labels.append(label)
    if not labels:
        raise ParseError("file contains no samples", line=1)
    q = (max(cols) + 1) if cols else 0
    if n_features is not None:
        if n_features < q:
            raise ParameterError(f"n_features={n_features} but index {q} appears in the file")
        q = n_features
    labels = np.asarray(labels)
    if task == "classification" and not map_labels and np.any(labels == 0):
        raise ParameterError("found label 0; pass map_labels=True to map {0, 1} to {-1, +1}")
    features = sp.csr_matrix((vals, (rows, cols)), shape=(len(labels), q), dtype=float)
    return Dataset(features, labels, task=task)


def dump_libsvm(path, data: Dataset):
    """Write nonzero entries with ``repr`` precision so that reloading is exact."""
    X = sp.csr_matrix(data.features)
    X.sort_indices()
    with open(path, "w") as fh:
        for i in range(X.shape[0]):
            start, end = X.indptr[i], X.indptr[i + 1]
            parts = [repr(float(data.labels[i]))]
            parts += [f"{j + 1}:{float(v)!r}" for j, v in zip(X.indices[start:end], X.data[start:end]) if v != 0]
            fh.write(" ".join(parts) + "\n")


def write_sidecar(path, **meta):
    """JSON metadata next to a generated dataset (seed, sizes, ground truth)."""
    clean = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in meta.items()}
    with open(path, "w") as fh:
        json.dump(clean, fh, indent=2, sort_keys=True)
        fh.write("\n")
