"""Approximate Moreau-Yosida envelope oracle.

For a prox center ``x`` the oracle minimizes ``h(w) = f(w) + (kappa/2)||w - x||^2``
approximately and returns ``g = kappa (x - z)``, ``F_a = h(z)`` and ``z``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .inner import SOLVERS, StopRule, SubProblem
from .objective import EvalCounter


@dataclass
class GradientEstimate:
    g: np.ndarray
    value: float
    z: np.ndarray
    grad_evals: int
    iterations: int
    certificate: float
    certified: bool
    kappa: float

    @property
    def f_z(self):
        """``f(z) = F_a - ||g||^2 / (2 kappa)``."""
        return self.value - float(self.g @ self.g) / (2.0 * self.kappa)


def warm_start(sub, counter=None):
    """Initial point for the subproblem solver.

    Smooth ``f``: the prox center itself.  Composite ``f``: one proximal
    gradient step from the center with step ``1/(L + kappa)``, which gives
    ``h(w0) - h* <= (L + kappa) / (2 kappa^2) ||grad F(x)||^2``.
    """
    obj = sub.objective
    x = sub.center
    if obj.smooth:
        return x.copy()
    _, grad = obj.smooth_value_grad(x, counter)
    step = 1.0 / sub.lipschitz
    return obj.reg.prox(x - step * grad, step)


def approx_gradient(obj, x, kappa, method="ista", stop=None, counter=None, rng=None):
    """One call of the envelope oracle at ``x``.

    The inner solver is started at ``x``.  For smooth ``f`` that is the
    warm start itself.  For composite ``f``, ISTA's first step from ``x`` is
    exactly the proximal-gradient warm start, and SVRG takes the same step
    with its first snapshot gradient, so no gradient pass is spent twice.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    stop = stop if stop is not None else StopRule.adaptive()
    counter = counter if counter is not None else EvalCounter(obj.n)
    x = np.asarray(x, dtype=np.float64)
    sub = SubProblem(obj, x, kappa)
    if method == "svrg":
        report = SOLVERS["svrg"](sub, x, stop, rng=rng, counter=counter, warm_start=True)
    elif method == "ista":
        report = SOLVERS["ista"](sub, x, stop, counter=counter)
    else:
        raise ValueError(f"unknown inner method {method!r}")
    z = report.z
    return GradientEstimate(kappa * (x - z), report.value, z, report.grad_evals,
                            report.iterations, report.certificate, report.certified, kappa)


def inner_budget(c_m, tau_m, L, kappa):
    """Iterations guaranteeing the adaptive rule: ``log(74 C (L + kappa)/kappa) / tau``."""
    if c_m <= 0 or not 0 < tau_m < 1:
        raise ValueError("need C_M > 0 and 0 < tau_M < 1")
    if L < 0 or kappa <= 0:
        raise ValueError("need L >= 0 and kappa > 0")
    t = math.log(74.0 * c_m * (L + kappa) / kappa) / tau_m
    # absorb round-off in log/exp before taking the ceiling
    return max(1, math.ceil(t - 1e-9 * max(1.0, abs(t))))
