"""LIBSVM text I/O, row normalization and synthetic instance generation."""
from __future__ import annotations

import io
import math

import numpy as np
from scipy import sparse

from .objective import Dataset


class LibsvmParseError(ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def _parse_float(token, lineno, what):
    try:
        value = float(token)
    except ValueError:
        raise LibsvmParseError(lineno, f"malformed {what} {token!r}") from None
    if not math.isfinite(value):
        raise LibsvmParseError(lineno, f"non-finite {what} {token!r}")
    return value


def parse_libsvm(stream, n_features=None):
    """Read ``label idx:val ...`` lines into a CSR-backed :class:`Dataset`.

    Indices are 1-based in the file and 0-based in the result.  ``d`` is the
    largest index seen unless ``n_features`` asks for more columns.  Stored
    entries are kept verbatim, explicit zeros included.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    labels, data, indices, indptr = [], [], [], [0]
    max_index = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_parse_float(tokens[0], lineno, "label"))
        last = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibsvmParseError(lineno, f"malformed token {tok!r}")
            try:
                idx = int(idx_s)
            except ValueError:
                raise LibsvmParseError(lineno, f"malformed index in {tok!r}") from None
            if idx < 1:
                raise LibsvmParseError(lineno, f"index {idx} < 1")
            if idx <= last:
                raise LibsvmParseError(lineno, f"index {idx} not increasing (after {last})")
            last = idx
            indices.append(idx - 1)
            data.append(_parse_float(val_s, lineno, "value"))
        max_index = max(max_index, last)
        indptr.append(len(indices))
    if not labels:
        raise ValueError("empty dataset: no records found")
    d = max(max_index, n_features or 0, 1)
    feats = sparse.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64),
         np.asarray(indptr, dtype=np.int64)),
        shape=(len(labels), d))
    return Dataset(feats, np.asarray(labels))


def load_libsvm(path, n_features=None):
    with open(path) as fh:
        return parse_libsvm(fh, n_features=n_features)


def _fmt(v):
    return format(float(v), ".17g")


def serialize_libsvm(ds):
    """Inverse of :func:`parse_libsvm` (stored entries, 17 significant digits)."""
    feats = sparse.csr_matrix(ds.features)
    out = []
    for i in range(ds.n):
        lo, hi = feats.indptr[i], feats.indptr[i + 1]
        parts = [_fmt(ds.labels[i])]
        parts += [f"{j + 1}:{_fmt(v)}" for j, v in zip(feats.indices[lo:hi], feats.data[lo:hi])]
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


def save_libsvm(ds, path):
    with open(path, "w") as fh:
        fh.write(serialize_libsvm(ds))


def normalize_rows(ds):
    """Scale every nonzero row to unit Euclidean norm; zero rows stay zero."""
    norms = np.sqrt(ds.row_sq_norms())
    scale = np.divide(1.0, norms, out=np.ones_like(norms), where=norms > 0)
    if ds.is_sparse:
        feats = sparse.diags(scale) @ ds.features
    else:
        feats = ds.features * scale[:, None]
    return Dataset(feats, ds.labels.copy())


def binary_labels(ds):
    """Map labels to +-1 by sign; a zero label is an error."""
    if np.any(ds.labels == 0):
        raise ValueError("classification labels must be nonzero")
    return Dataset(ds.features, np.sign(ds.labels))


def synth_instance(kind, n, d, seed, correlation=0.0, sparsity=0.1, noise=0.1, flip=0.05,
                   return_model=False):
    """Deterministic synthetic dataset with normalized rows.

    Features are Gaussian with AR(1) column correlation ``correlation``
    (larger values give worse conditioning).  A planted model with a
    ``sparsity`` fraction of nonzero coefficients produces the labels:
    ``A x* + noise`` for regression, ``sign(A x*)`` with label-flip
    probability ``flip`` for classification.  With ``return_model`` the
    planted coefficient vector is returned as well.
    """
    if kind not in ("classification", "regression"):
        raise ValueError(f"unknown kind {kind!r}")
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    if not 0.0 <= correlation < 1.0:
        raise ValueError("correlation must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n, d))
    feats = np.empty_like(raw)
    feats[:, 0] = raw[:, 0]
    innov = math.sqrt(1.0 - correlation ** 2)
    for j in range(1, d):
        feats[:, j] = correlation * feats[:, j - 1] + innov * raw[:, j]
    norms = np.linalg.norm(feats, axis=1)
    feats /= np.where(norms > 0, norms, 1.0)[:, None]

    k = max(1, int(round(sparsity * d)))
    support = rng.choice(d, size=k, replace=False)
    x_star = np.zeros(d)
    x_star[support] = rng.choice([-1.0, 1.0], size=k) * rng.uniform(1.0, 2.0, size=k)
    # unit rows have entries of size ~1/sqrt(d); rescale so margins are O(1)
    x_star *= math.sqrt(d / k)
    signal = feats @ x_star
    if kind == "regression":
        labels = signal + noise * rng.standard_normal(n)
    else:
        labels = np.where(signal >= 0, 1.0, -1.0)
        labels[rng.random(n) < flip] *= -1.0
    ds = Dataset(feats, labels)
    return (ds, x_star) if return_model else ds

