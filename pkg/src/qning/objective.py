"""Losses, regularizers, proximal operators and optimality certificates.

The smooth part of every objective is an average of per-sample losses over a
linear model, ``f0(x) = (1/n) sum_i loss(a_i^T x, b_i)``.  The regularizer
``psi`` (including the l2 term) is only ever touched through its value, its
proximal operator and its subdifferential.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import expit

LOSSES = ("logistic", "squared")

# Curvature bound of each loss in its margin argument.
_LOSS_CURVATURE = {"logistic": 0.25, "squared": 1.0}


class NoCertificateError(ValueError):
    """Raised when no optimality-gap bound can be computed."""


class EvalCounter:
    """Counts component-gradient and value evaluations of one solver run.

    A full gradient costs ``n`` component evaluations; one pass over the
    data is ``n`` of them.  Value-only evaluations (needed e.g. for
    line searches) are tracked separately and do not count as passes.
    """

    def __init__(self, n):
        self.n = int(n)
        self.grad_components = 0
        self.value_components = 0

    @property
    def passes(self):
        return self.grad_components / self.n

    def add_grads(self, count):
        self.grad_components += int(count)

    def add_values(self, count):
        self.value_components += int(count)

    def __repr__(self):
        return (f"EvalCounter(n={self.n}, grad_components={self.grad_components}, "
                f"value_components={self.value_components})")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix (dense ndarray or CSR matrix) and label vector."""

    features: object
    labels: np.ndarray

    def __post_init__(self):
        feats = self.features
        if sparse.issparse(feats):
            feats = sparse.csr_matrix(feats, dtype=np.float64)
            finite = np.all(np.isfinite(feats.data))
        else:
            feats = np.ascontiguousarray(feats, dtype=np.float64)
            if feats.ndim != 2:
                raise ValueError("features must be a 2-D array")
            finite = np.all(np.isfinite(feats))
        labels = np.ascontiguousarray(self.labels, dtype=np.float64).ravel()
        n, d = feats.shape
        if n < 1 or d < 1:
            raise ValueError(f"dataset must have n >= 1 and d >= 1, got {n}x{d}")
        if labels.shape[0] != n:
            raise ValueError(f"{labels.shape[0]} labels for {n} rows")
        if not finite or not np.all(np.isfinite(labels)):
            raise ValueError("dataset contains non-finite entries")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def is_sparse(self):
        return sparse.issparse(self.features)

    def row_sq_norms(self):
        if self.is_sparse:
            return np.asarray(self.features.multiply(self.features).sum(axis=1)).ravel()
        return np.einsum("ij,ij->i", self.features, self.features)

    def dense_features(self):
        return self.features.toarray() if self.is_sparse else self.features

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if self.features.shape != other.features.shape:
            return False
        return (np.array_equal(self.dense_features(), other.dense_features())
                and np.array_equal(self.labels, other.labels))

    __hash__ = None


@dataclass(frozen=True)
class Regularizer:
    """``psi(x) = lam * ||x||_1 + (mu / 2) * ||x||^2``.

    ``kind`` is one of ``none``, ``l1``, ``l2``, ``elastic_net``; it only
    decides which of the two weights are allowed to be nonzero.
    """

    kind: str = "none"
    lam: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        allowed = {"none": (False, False), "l1": (True, False),
                   "l2": (False, True), "elastic_net": (True, True)}
        if self.kind not in allowed:
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.lam < 0 or self.mu < 0:
            raise ValueError("regularization weights must be nonnegative")
        has_lam, has_mu = allowed[self.kind]
        if (self.lam and not has_lam) or (self.mu and not has_mu):
            raise ValueError(f"{self.kind} regularizer got lam={self.lam}, mu={self.mu}")

    @property
    def smooth(self):
        return self.lam == 0.0

    def value(self, x):
        out = 0.0
        if self.lam:
            out += self.lam * np.abs(x).sum()
        if self.mu:
            out += 0.5 * self.mu * float(x @ x)
        return out

    def prox(self, y, step):
        """argmin_x step * psi(x) + 0.5 * ||x - y||^2."""
        return prox(self, y, step)

    def min_norm_subgrad(self, x, grad):
        """Minimal-norm element of ``grad + subdiff psi(x)``."""
        out = grad + self.mu * x if self.mu else np.array(grad, dtype=np.float64)
        if self.lam:
            nz = x != 0
            out[nz] += self.lam * np.sign(x[nz])
            zero = ~nz
            out[zero] = np.sign(out[zero]) * np.maximum(np.abs(out[zero]) - self.lam, 0.0)
        return out


def no_reg():
    return Regularizer("none")


def l1(lam):
    return Regularizer("l1", lam=float(lam))


def l2(mu):
    return Regularizer("l2", mu=float(mu))


def elastic_net(lam, mu):
    return Regularizer("elastic_net", lam=float(lam), mu=float(mu))


def prox(reg, y, step):
    """Proximal operator of ``step * psi`` at ``y``.

    Soft-thresholding at ``lam * step`` followed by the l2 shrinkage
    ``1 / (1 + mu * step)``; either stage is skipped when its weight is 0.
    """
    if step <= 0:
        raise ValueError("prox step must be positive")
    y = np.asarray(y, dtype=np.float64)
    if reg.lam:
        out = np.sign(y) * np.maximum(np.abs(y) - reg.lam * step, 0.0)
    else:
        out = y.copy()
    if reg.mu:
        out = out / (1.0 + reg.mu * step)
    return out


@dataclass(frozen=True, eq=False)
class CompositeObjective:
    """``f(x) = (1/n) sum_i loss(a_i^T x, b_i) + psi(x)``.

    ``L`` bounds the gradient Lipschitz constant of the smooth part of
    ``f`` (the loss average plus the l2 term), ``mu`` is the strong
    convexity supplied by the regularizer.
    """

    dataset: Dataset
    loss: str
    reg: Regularizer = field(default_factory=no_reg)
    L: float = field(init=False)

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        row_max = float(self.dataset.row_sq_norms().max())
        object.__setattr__(self, "L", _LOSS_CURVATURE[self.loss] * row_max + self.reg.mu)

    @property
    def n(self):
        return self.dataset.n

    @property
    def d(self):
        return self.dataset.d

    @property
    def mu(self):
        return self.reg.mu

    @property
    def L_loss(self):
        return self.L - self.reg.mu

    @property
    def smooth(self):
        return self.reg.smooth

    def margins(self, x):
        return np.asarray(self.dataset.features @ x).ravel()

    def loss_values(self, m):
        b = self.dataset.labels
        if self.loss == "logistic":
            return np.logaddexp(0.0, -b * m)
        return 0.5 * (m - b) ** 2

    def loss_derivs(self, m):
        b = self.dataset.labels
        if self.loss == "logistic":
            return -b * expit(-b * m)
        return m - b

    def smooth_value_grad(self, x, counter=None):
        """Value and gradient of the loss average (one pass)."""
        m = self.margins(x)
        value = float(np.mean(self.loss_values(m)))
        grad = np.asarray(self.dataset.features.T @ self.loss_derivs(m)).ravel() / self.n
        if counter is not None:
            counter.add_grads(self.n)
        return value, grad

    def smooth_value(self, x, counter=None):
        if counter is not None:
            counter.add_values(self.n)
        return float(np.mean(self.loss_values(self.margins(x))))

    def component_grad(self, i, x, counter=None):
        if not 0 <= i < self.n:
            raise IndexError(f"component index {i} out of range for n={self.n}")
        row = self.dataset.features[i]
        if sparse.issparse(row):
            row = row.toarray().ravel()
        m = float(row @ x)
        b = self.dataset.labels[i]
        if self.loss == "logistic":
            deriv = -b * expit(-b * m)
        else:
            deriv = m - b
        if counter is not None:
            counter.add_grads(1)
        return deriv * row

    def value(self, x):
        """Full objective ``f(x)``; not counted as an evaluation."""
        return float(np.mean(self.loss_values(self.margins(x)))) + self.reg.value(x)


def full_value_grad(obj, x, counter=None):
    return obj.smooth_value_grad(x, counter)


def component_grad(obj, i, x, counter=None):
    return obj.component_grad(i, x, counter)


def subgradient_certificate(subgrad, strong_convexity):
    """``h(w) - h* <= dist(0, subdiff h(w))^2 / (2 sigma)`` for sigma-strongly convex h."""
    if strong_convexity <= 0:
        raise NoCertificateError("certificate needs positive strong convexity")
    return float(subgrad @ subgrad) / (2.0 * strong_convexity)


def optimality_gap_certificate(obj, x, kappa=0.0, prox_center=None, smooth_grad=None):
    """Certified upper bound on ``h(x) - min h`` with ``h = f + (kappa/2)||. - center||^2``.

    Smooth objectives use the gradient-norm bound; for composite ones the
    minimal-norm subgradient of ``h`` at ``x`` replaces the gradient, which
    is the same bound read off the subdifferential.  ``smooth_grad`` may
    pass a precomputed loss gradient at ``x``.
    """
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    if kappa > 0 and prox_center is None:
        raise ValueError("prox_center is required when kappa > 0")
    sigma = obj.mu + kappa
    if sigma <= 0:
        raise NoCertificateError("mu + kappa = 0: no certificate available")
    x = np.asarray(x, dtype=np.float64)
    if smooth_grad is None:
        _, smooth_grad = obj.smooth_value_grad(x)
    grad = smooth_grad + kappa * (x - prox_center) if kappa else smooth_grad
    return subgradient_certificate(obj.reg.min_norm_subgrad(x, grad), sigma)
