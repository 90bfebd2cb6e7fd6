"""Quasi-Newton outer loop on the approximate Moreau envelope.

Each iteration proposes ``x_test = x_k - (eta H_k + (1 - eta) I/kappa) g_k``
for ``eta`` walking down a fixed ladder, evaluates the envelope oracle at
``x_test`` and accepts the first candidate with
``F_test <= F_k - ||g_k||^2 / (4 kappa)``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .inner import StopRule
from .metric import LbfgsMemory
from .moreau import approx_gradient
from .objective import EvalCounter
from .traces import SolverTrace, TraceRecord

DEFAULT_LADDER = (1.0, 0.5, 0.25, 0.125, 0.0)
_EPS = np.finfo(float).eps


def default_kappa(inner, L, n):
    """``L`` for (proximal) gradient descent, ``L / (2n)`` for SVRG."""
    if L <= 0 or n < 1:
        raise ValueError("need L > 0 and n >= 1")
    if inner in ("ista", "gd"):
        return float(L)
    if inner == "svrg":
        return L / (2.0 * n)
    raise ValueError(f"unknown inner method {inner!r}")


@dataclass
class QningConfig:
    kappa: float
    memory: int = 100
    inner: str = "ista"
    stop: StopRule = field(default_factory=StopRule.adaptive)
    ladder: tuple = DEFAULT_LADDER
    max_iter: int = 100
    target: float | None = None
    f_star: float | None = None
    max_passes: float | None = None
    gtol: float = 0.0
    seed: int = 0
    metric_seed: str = "kappa"
    keep_iterates: bool = False
    record_time: bool = False

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        ladder = tuple(float(e) for e in self.ladder)
        if (not ladder or ladder[-1] != 0.0 or any(a <= b for a, b in zip(ladder, ladder[1:]))
                or not all(0.0 <= e <= 1.0 for e in ladder)):
            raise ValueError("ladder must be strictly decreasing in [0, 1] and end with 0")
        self.ladder = ladder


@dataclass
class QningState:
    x: np.ndarray
    g: np.ndarray
    F: float
    z: np.ndarray
    memory: LbfgsMemory
    counter: EvalCounter
    rng: np.random.Generator
    certified: bool
    k: int = 0


@dataclass
class StepInfo:
    eta: float
    attempts: int
    inner_iterations: int
    fallback: bool
    certified: bool


def _oracle(obj, x, config, state_counter, rng):
    return approx_gradient(obj, x, config.kappa, method=config.inner, stop=config.stop,
                           counter=state_counter, rng=rng)


def init_state(obj, x0, config):
    counter = EvalCounter(obj.n)
    rng = np.random.default_rng(config.seed)
    x0 = np.array(x0, dtype=np.float64)
    est = _oracle(obj, x0, config, counter, rng)
    memory = LbfgsMemory(config.kappa, config.memory, seed=config.metric_seed)
    return QningState(x0, est.g, est.value, est.z, memory, counter, rng, est.certified), est


def qning_step(obj, state, config):
    """One outer iteration; mutates ``state`` and returns a :class:`StepInfo`.

    The ``eta = 0`` candidate is ``z_k`` itself.  If no candidate passes the
    descent test (possible only with uncertified inner solves) the
    ``eta = 0`` candidate is accepted and the step is flagged.
    """
    kappa = config.kappa
    g = state.g
    threshold = state.F - float(g @ g) / (4.0 * kappa)
    hg = state.memory.two_loop(g)
    inner_its = 0
    est = x_test = None
    fallback = True
    attempts = 0
    for eta in config.ladder:
        attempts += 1
        if eta == 0.0:
            x_test = state.z.copy()
        else:
            x_test = state.x - state.memory.blend(hg, g, eta)
        est = _oracle(obj, x_test, config, state.counter, state.rng)
        inner_its += est.iterations
        if est.value <= threshold:
            fallback = False
            break
    state.memory.update(x_test - state.x, est.g - g)
    state.x, state.g, state.F, state.z = x_test, est.g, est.value, est.z
    state.certified = est.certified
    state.k += 1
    return StepInfo(eta, attempts, inner_its, fallback, est.certified)


@dataclass
class QningResult:
    z: np.ndarray
    x: np.ndarray
    trace: SolverTrace
    iterates: list
    prox_points: list
    converged: bool
    capped: bool

    @property
    def any_fallback(self):
        return any(r.fallback for r in self.trace.records)


def _relative_gap(value, f_star):
    return (value - f_star) / max(abs(f_star), 1e-300)


def run_qning(obj, x0, config, method_name="QNing"):
    """Run the outer loop; the solution is the last inexact proximal point ``z_K``.

    Stops when ``(f(z_k) - f*) / |f*| <= target`` (if both are given), when
    ``||g_k|| <= gtol`` or ``||x_k - z_k||`` is below rounding level, after ``max_iter`` outer
    iterations or once ``max_passes`` gradient passes are used.  The last two
    leave the result flagged as capped.
    """
    t0 = time.perf_counter()
    state, est = init_state(obj, x0, config)
    trace = SolverTrace(method_name)
    iterates = [state.x.copy()] if config.keep_iterates else []
    prox_points = [state.z.copy()] if config.keep_iterates else []

    def record(info):
        g2 = float(state.g @ state.g)
        trace.append(TraceRecord(
            iteration=state.k,
            passes=state.counter.passes,
            objective=state.F - g2 / (2.0 * config.kappa),
            envelope=float(state.F),
            grad_norm=math.sqrt(g2),
            stepsize=float(info.eta) if info else math.nan,
            attempts=info.attempts if info else 0,
            inner_iterations=info.inner_iterations if info else est.iterations,
            fallback=int(info.fallback) if info else 0,
            certified=int(state.certified),
            wall_time=time.perf_counter() - t0 if config.record_time else math.nan,
        ))

    def stop_reason():
        last = trace.records[-1]
        # a prox step below rounding level of x counts as g = 0
        if (last.grad_norm <= config.gtol
                or last.grad_norm / config.kappa <= _EPS * max(1.0, float(np.linalg.norm(state.x)))):
            return "gradient"
        if config.target is not None and config.f_star is not None:
            if _relative_gap(last.objective, config.f_star) <= config.target:
                return "target"
        if config.max_passes is not None and state.counter.passes >= config.max_passes:
            return "passes"
        return "iterations" if state.k >= config.max_iter else None

    record(None)
    reason = stop_reason()
    while reason is None:
        info = qning_step(obj, state, config)
        record(info)
        if config.keep_iterates:
            iterates.append(state.x.copy())
            prox_points.append(state.z.copy())
        reason = stop_reason()
    converged = reason in ("gradient", "target")
    trace.meta.update(kappa=float(config.kappa), memory=int(config.memory),
                      inner=config.inner, stop=config.stop.kind, n=int(obj.n), d=int(obj.d),
                      stop_reason=reason)
    return QningResult(state.z.copy(), state.x.copy(), trace, iterates, prox_points,
                       converged, not converged)
