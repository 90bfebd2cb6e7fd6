"""Linearly convergent solvers for the kappa-augmented subproblems.

A subproblem is ``h(w) = f(w) + (kappa/2) ||w - x||^2``.  Its smooth part
``phi(w) = f0(w) + (kappa/2) ||w - x||^2`` has gradient Lipschitz constant
``L + kappa``; the l1/l2 regularizer stays in the proximal step.  With
``kappa = 0`` the same solvers run directly on ``f`` (the benchmark
baselines).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .objective import EvalCounter, subgradient_certificate

ADAPTIVE_FACTOR = 1.0 / 72.0

_LOSS_CODES = {"logistic": 0, "squared": 1}


@dataclass(frozen=True)
class StopRule:
    """Either the adaptive gap rule ``h(z) - h* <= (kappa/72) ||z - x||^2``
    or a fixed budget of ``budget`` iterations (ISTA steps or SVRG stages)."""

    kind: str = "adaptive"
    budget: int = 1
    max_iter: int = 10_000

    def __post_init__(self):
        if self.kind not in ("adaptive", "budget"):
            raise ValueError(f"unknown stop rule {self.kind!r}")
        if self.budget < 1 or self.max_iter < 1:
            raise ValueError("budget and max_iter must be >= 1")

    @classmethod
    def adaptive(cls, max_iter=10_000):
        return cls("adaptive", 1, max_iter)

    @classmethod
    def fixed(cls, budget=1):
        return cls("budget", budget, max(budget, 1))

    @property
    def factor(self):
        return ADAPTIVE_FACTOR

    @property
    def limit(self):
        return self.budget if self.kind == "budget" else self.max_iter


@dataclass(frozen=True, eq=False)
class SubProblem:
    objective: object
    center: np.ndarray
    kappa: float

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))

    @classmethod
    def plain(cls, objective):
        """The objective itself, with no proximal term."""
        return cls(objective, np.zeros(objective.d), 0.0)

    @property
    def lipschitz(self):
        return self.objective.L + self.kappa

    @property
    def strong_convexity(self):
        return self.objective.mu + self.kappa

    def _prox_term(self, w):
        r = w - self.center
        return 0.5 * self.kappa * float(r @ r)

    def smooth_value_grad(self, w, counter=None):
        value, grad = self.objective.smooth_value_grad(w, counter)
        if self.kappa:
            value += self._prox_term(w)
            grad = grad + self.kappa * (w - self.center)
        return value, grad

    def smooth_value(self, w, counter=None):
        value = self.objective.smooth_value(w, counter)
        return value + self._prox_term(w) if self.kappa else value

    def value(self, w):
        return self.objective.value(w) + (self._prox_term(w) if self.kappa else 0.0)

    def certificate(self, w, smooth_grad):
        """Gap bound at ``w`` given ``grad phi(w)``; inf when mu + kappa = 0."""
        sigma = self.strong_convexity
        if sigma <= 0:
            return math.inf
        return subgradient_certificate(self.objective.reg.min_norm_subgrad(w, smooth_grad), sigma)

    def adaptive_threshold(self, z):
        """Right-hand side of the adaptive rule, floored at machine precision."""
        r = z - self.center
        floor = self.kappa * np.finfo(float).eps * max(1.0, float(self.center @ self.center))
        return max(ADAPTIVE_FACTOR * self.kappa * float(r @ r), floor)


@dataclass
class SolverReport:
    z: np.ndarray
    iterations: int
    grad_evals: int
    certificate: float
    value: float
    certified: bool = False
    capped: bool = False


def _prox_step(reg, v, eta):
    return reg.prox(v, eta)


def run_proxgrad(sub, w0, stop, counter=None, callback=None):
    """Proximal gradient (ISTA) with backtracking from ``eta = 1/(L + kappa)``.

    The stepsize is halved whenever the quadratic upper bound fails and
    never increased again.  ``budget(T)`` performs ``T`` steps and costs
    exactly ``T`` gradient passes (the last iterate is only evaluated).
    With the adaptive rule every iterate gets a gradient and a certificate.
    ``callback(w)`` is called after each step and may return True to stop.
    """
    obj = sub.objective
    reg = obj.reg
    counter = counter if counter is not None else EvalCounter(obj.n)
    start = counter.grad_components
    adaptive = stop.kind == "adaptive"
    eta = 1.0 / sub.lipschitz
    w = np.array(w0, dtype=np.float64)
    val, grad = sub.smooth_value_grad(w, counter)
    cert = math.inf
    certified = False
    t = 0
    while True:
        if adaptive:
            cert = sub.certificate(w, grad)
            if cert <= sub.adaptive_threshold(w):
                certified = True
                break
        if t >= stop.limit:
            break
        need_grad = adaptive or t + 1 < stop.limit
        while True:
            w_new = _prox_step(reg, w - eta * grad, eta)
            if need_grad:
                val_new, grad_new = sub.smooth_value_grad(w_new, counter)
            else:
                val_new, grad_new = sub.smooth_value(w_new, counter), None
            step = w_new - w
            bound = val + float(grad @ step) + float(step @ step) / (2.0 * eta)
            if val_new <= bound + 1e-14 * max(1.0, abs(val)):
                break
            eta *= 0.5
        w, val, grad = w_new, val_new, grad_new
        t += 1
        if callback is not None and callback(w):
            break
    value = val + reg.value(w)
    capped = adaptive and not certified
    return SolverReport(w, t, counter.grad_components - start, cert, value, certified, capped)


def run_fista(obj, x0, budget, counter=None, callback=None):
    """Accelerated proximal gradient (FISTA) with backtracking on ``f``.

    One iteration costs one gradient pass at the extrapolated point.
    """
    reg = obj.reg
    counter = counter if counter is not None else EvalCounter(obj.n)
    start = counter.grad_components
    eta = 1.0 / obj.L if obj.L > 0 else 1.0
    x = np.array(x0, dtype=np.float64)
    y = x.copy()
    t_mom = 1.0
    it = 0
    for it in range(1, budget + 1):
        val_y, grad_y = obj.smooth_value_grad(y, counter)
        while True:
            x_new = reg.prox(y - eta * grad_y, eta)
            step = x_new - y
            bound = val_y + float(grad_y @ step) + float(step @ step) / (2.0 * eta)
            if obj.smooth_value(x_new, counter) <= bound + 1e-14 * max(1.0, abs(val_y)):
                break
            eta *= 0.5
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom * t_mom))
        y = x_new + ((t_mom - 1.0) / t_next) * (x_new - x)
        x, t_mom = x_new, t_next
        if callback is not None and callback(x):
            break
    return SolverReport(x, it, counter.grad_components - start, math.inf, obj.value(x))


# ---------------------------------------------------------------------------
# prox-SVRG


@numba.njit(cache=True)
def _deriv(code, m, b):
    if code == 0:
        return -b / (1.0 + math.exp(b * m))
    return m - b


@numba.njit(cache=True)
def _soft_shrink(v, tau, shrink):
    if tau > 0.0:
        a = abs(v) - tau
        if a <= 0.0:
            v = 0.0
        elif v < 0.0:
            v = -a
        else:
            v = a
    if shrink != 1.0:
        v = v / shrink
    return v


@numba.njit(cache=True)
def _snapshot_dense(A, b, code, w):
    n, d = A.shape
    out = np.empty(n)
    for i in range(n):
        m = 0.0
        for j in range(d):
            m += A[i, j] * w[j]
        out[i] = _deriv(code, m, b[i])
    return out


@numba.njit(cache=True)
def _snapshot_csr(data, indices, indptr, b, code, w):
    n = indptr.shape[0] - 1
    out = np.empty(n)
    for i in range(n):
        m = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            m += data[p] * w[indices[p]]
        out[i] = _deriv(code, m, b[i])
    return out


@numba.njit(cache=True)
def _epoch_dense(A, b, code, w, snap, gbar, center, kappa, eta, lam, mu, idx):
    d = w.shape[0]
    tau = lam * eta
    shrink = 1.0 + mu * eta
    for i in idx:
        m = 0.0
        for j in range(d):
            m += A[i, j] * w[j]
        coef = _deriv(code, m, b[i]) - snap[i]
        for j in range(d):
            direction = (coef * A[i, j] + gbar[j]) + kappa * (w[j] - center[j])
            w[j] = _soft_shrink(w[j] - eta * direction, tau, shrink)


@numba.njit(cache=True)
def _epoch_csr(data, indices, indptr, b, code, w, snap, gbar, center, kappa, eta, lam, mu,
               idx, rowbuf):
    d = w.shape[0]
    tau = lam * eta
    shrink = 1.0 + mu * eta
    for i in idx:
        m = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            m += data[p] * w[indices[p]]
        coef = _deriv(code, m, b[i]) - snap[i]
        for p in range(indptr[i], indptr[i + 1]):
            rowbuf[indices[p]] = data[p]
        for j in range(d):
            direction = (coef * rowbuf[j] + gbar[j]) + kappa * (w[j] - center[j])
            w[j] = _soft_shrink(w[j] - eta * direction, tau, shrink)
        for p in range(indptr[i], indptr[i + 1]):
            rowbuf[indices[p]] = 0.0


def _as_rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def run_prox_svrg(sub, w0, stop, rng=None, counter=None, callback=None, stage_length=None,
                  warm_start=False):
    """Prox-SVRG with one data pass per stage and stepsize ``1/(L + kappa)``.

    Each stage takes a full-gradient snapshot at the current point, then
    ``n`` uniformly sampled variance-reduced proximal steps; a stage costs
    ``2n`` component-gradient evaluations.  The adaptive rule is checked on
    the snapshot gradient at stage boundaries, so certifying the final point
    costs one extra snapshot pass.  ``warm_start`` replaces the starting
    point by a proximal-gradient step from it before the first stage; the
    step reuses the first snapshot gradient and costs nothing extra.
    """
    obj = sub.objective
    ds = obj.dataset
    reg = obj.reg
    n = obj.n
    stage_length = n if stage_length is None else int(stage_length)
    rng = _as_rng(rng)
    counter = counter if counter is not None else EvalCounter(n)
    start = counter.grad_components
    adaptive = stop.kind == "adaptive"
    code = _LOSS_CODES[obj.loss]
    eta = 1.0 / sub.lipschitz
    if ds.is_sparse:
        feats = ds.features
        rowbuf = np.zeros(obj.d)
    w = np.array(w0, dtype=np.float64)
    center = sub.center
    cert = math.inf
    certified = False
    stages = 0
    val = None
    while True:
        val, gbar = obj.smooth_value_grad(w, counter)
        if adaptive:
            cert = sub.certificate(w, gbar + sub.kappa * (w - center) if sub.kappa else gbar)
            if cert <= sub.adaptive_threshold(w):
                certified = True
                break
        if stages >= stop.limit:
            break
        # snapshot derivatives use the same kernel dot products as the steps
        if ds.is_sparse:
            snap = _snapshot_csr(feats.data, feats.indices, feats.indptr, ds.labels, code, w)
        else:
            snap = _snapshot_dense(ds.features, ds.labels, code, w)
        if warm_start and stages == 0 and not reg.smooth:
            g0 = gbar + sub.kappa * (w - center) if sub.kappa else gbar
            w = reg.prox(w - eta * g0, eta)
        idx = rng.integers(0, n, size=stage_length)
        if ds.is_sparse:
            _epoch_csr(feats.data, feats.indices, feats.indptr, ds.labels, code, w, snap, gbar,
                       center, float(sub.kappa), eta, reg.lam, reg.mu, idx, rowbuf)
        else:
            _epoch_dense(ds.features, ds.labels, code, w, snap, gbar, center,
                         float(sub.kappa), eta, reg.lam, reg.mu, idx)
        counter.add_grads(stage_length)
        stages += 1
        val = None
        if callback is not None and callback(w):
            break
        if not adaptive and stages >= stop.limit:
            break
    if val is None:
        val = obj.smooth_value(w, counter)
    value = val + reg.value(w) + sub._prox_term(w)
    return SolverReport(w, stages, counter.grad_components - start, cert, value, certified,
                        adaptive and not certified)


SOLVERS = {"ista": run_proxgrad, "svrg": run_prox_svrg}
