"""Benchmark harness: method comparison, sweeps and trace persistence.

All methods of one experiment share the dataset, the formulation and the
reference value ``f*_est``.  Progress is measured in passes over the data
(``n`` component-gradient evaluations) so full-gradient and incremental
methods are on one axis.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import data_io
from .inner import StopRule, SubProblem, run_fista, run_prox_svrg, run_proxgrad
from .objective import CompositeObjective, EvalCounter, elastic_net, l1, l2
from .outer import QningConfig, default_kappa, init_state, qning_step, run_qning
from .traces import SolverTrace, TraceRecord, emit_csv, emit_json

METHODS = ("ISTA", "FISTA", "SVRG", "QNing-ISTA", "QNing-ISTA1", "QNing-SVRG", "QNing-SVRG1")
FORMULATIONS = ("logistic_l2", "elastic_net", "lasso")
KAPPA_GRID = tuple(range(-3, 4))
MEMORY_GRID = (1, 2, 5, 10, 20, 100)
LASSO_GRID = tuple(range(-3, 4))
LASSO_TARGET_DENSITY = 0.1
REFERENCE_FACTOR = 5
REFERENCE_TOL = 1e-12

_QNING = {
    "QNing-ISTA": ("ista", False),
    "QNing-ISTA1": ("ista", True),
    "QNing-SVRG": ("svrg", False),
    "QNing-SVRG1": ("svrg", True),
}


@dataclass
class ExperimentConfig:
    """One benchmark experiment.

    ``dataset`` is either a LIBSVM path or a mapping with the keyword
    arguments of :func:`qning.data_io.synth_instance` (``kind``, ``n``,
    ``d`` and optional generator knobs; the seed is ``seed``).
    """

    dataset: object
    formulation: str = "logistic_l2"
    methods: list = field(default_factory=lambda: ["QNing-ISTA", "ISTA"])
    kappa: float | None = None
    memory: int = 100
    budget: float = 50
    seed: int = 0
    output: str = "results"
    name: str = "experiment"
    lam: float | None = None
    mu: float | None = None
    target: float | None = None

    def __post_init__(self):
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"unknown formulation {self.formulation!r}; expected {FORMULATIONS}")
        self.methods = list(self.methods)
        if not self.methods:
            raise ValueError("method list is empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; expected a subset of {METHODS}")
        if not self.budget >= 1:
            raise ValueError("budget must be >= 1 pass")
        if self.kappa is not None and not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.lam is not None and self.lam < 0 or self.mu is not None and self.mu < 0:
            raise ValueError("regularization parameters must be nonnegative")

    @classmethod
    def from_dict(cls, doc):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**doc)

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# problem construction


def load_dataset(cfg):
    src = cfg.dataset
    if isinstance(src, (str, os.PathLike)):
        try:
            ds = data_io.load_libsvm(src)
        except OSError as exc:
            raise OSError(f"cannot read dataset {src}: {exc}") from exc
        ds = data_io.normalize_rows(ds)
    elif isinstance(src, dict):
        params = dict(src)
        if "kind" not in params:
            params["kind"] = "classification" if cfg.formulation == "logistic_l2" else "regression"
        ds = data_io.synth_instance(seed=cfg.seed, **params)
    else:
        raise TypeError("dataset must be a LIBSVM path or a synthetic parameter mapping")
    if cfg.formulation == "logistic_l2":
        ds = data_io.binary_labels(ds)
    return ds


def build_objective(ds, formulation, lam=None, mu=None):
    """The three benchmark formulations with ``mu = 1/(100 n)``, ``lam = 1/n`` defaults."""
    n = ds.n
    mu = 1.0 / (100.0 * n) if mu is None else mu
    if formulation == "logistic_l2":
        return CompositeObjective(ds, "logistic", l2(mu))
    if formulation == "elastic_net":
        return CompositeObjective(ds, "squared", elastic_net(1.0 / n if lam is None else lam, mu))
    if formulation == "lasso":
        if lam is None:
            raise ValueError("lasso needs lam; use select_lasso_lambda")
        return CompositeObjective(ds, "squared", l1(lam))
    raise ValueError(f"unknown formulation {formulation!r}")


def density(x):
    return float(np.count_nonzero(x)) / x.size


def select_lasso_lambda(ds, passes=300, grid=LASSO_GRID):
    """Pick ``lam`` in ``{10^i / n}`` whose solution is closest to 10% nonzeros.

    Returns ``(lam, table)`` with ``table`` the list of ``(lam, density)``.
    Ties go to the larger ``lam``.
    """
    table = []
    for i in grid:
        lam = 10.0 ** i / ds.n
        obj = CompositeObjective(ds, "squared", l1(lam))
        cfg = QningConfig(kappa=obj.L, max_iter=10 ** 6, max_passes=passes)
        res = run_qning(obj, np.zeros(ds.d), cfg)
        table.append((lam, density(res.z)))
    best = min(reversed(table), key=lambda t: abs(t[1] - LASSO_TARGET_DENSITY))
    return best[0], table


def prepare(cfg):
    """Dataset and objective shared by all methods of an experiment."""
    ds = load_dataset(cfg)
    lam = cfg.lam
    if cfg.formulation == "lasso" and lam is None:
        lam, _ = select_lasso_lambda(ds)
    return ds, build_objective(ds, cfg.formulation, lam, cfg.mu)


# ---------------------------------------------------------------------------
# running methods


def _rel_gap(value, f_star):
    return (value - f_star) / max(abs(f_star), 1e-300)


def run_baseline(obj, method, budget, seed=0, f_star=None, target=None):
    """ISTA, FISTA or SVRG on ``f`` itself, one record per iteration/stage."""
    counter = EvalCounter(obj.n)
    trace = SolverTrace(method)
    x0 = np.zeros(obj.d)

    def push(w, it):
        value = obj.value(w)
        trace.append(TraceRecord(iteration=it, passes=counter.passes, objective=value))
        if counter.passes >= budget:
            return True
        return target is not None and f_star is not None and _rel_gap(value, f_star) <= target

    push(x0, 0)
    state = {"it": 0}

    def callback(w):
        state["it"] += 1
        return push(w, state["it"])

    limit = int(math.ceil(budget)) + 1
    sub = SubProblem.plain(obj)
    if method == "ISTA":
        run_proxgrad(sub, x0, StopRule("budget", limit, limit), counter, callback)
    elif method == "FISTA":
        run_fista(obj, x0, limit, counter, callback)
    elif method == "SVRG":
        run_prox_svrg(sub, x0, StopRule("budget", limit, limit), rng=np.random.default_rng(seed),
                      counter=counter, callback=callback)
    else:
        raise ValueError(f"unknown baseline {method!r}")
    return trace


def qning_config(obj, method, budget, kappa=None, memory=100, seed=0, f_star=None, target=None,
                 **extra):
    inner, one_pass = _QNING[method]
    kappa = default_kappa(inner, obj.L, obj.n) if kappa is None else kappa
    stop = StopRule.fixed(1) if one_pass else StopRule.adaptive()
    return QningConfig(kappa=kappa, memory=memory, inner=inner, stop=stop, max_iter=10 ** 7,
                       max_passes=budget, seed=seed, f_star=f_star, target=target, **extra)


def run_method(obj, method, budget, kappa=None, memory=100, seed=0, f_star=None, target=None):
    if method in _QNING:
        cfg = qning_config(obj, method, budget, kappa, memory, seed, f_star, target)
        return run_qning(obj, np.zeros(obj.d), cfg, method_name=method).trace
    return run_baseline(obj, method, budget, seed, f_star, target)


# ---------------------------------------------------------------------------
# reference value


def _dataset_digest(cfg):
    if isinstance(cfg.dataset, (str, os.PathLike)):
        with open(cfg.dataset, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()
    return json.dumps(cfg.dataset, sort_keys=True)


def config_digest(cfg):
    doc = {"dataset": _dataset_digest(cfg), "formulation": cfg.formulation, "lam": cfg.lam,
           "mu": cfg.mu, "seed": cfg.seed, "budget": cfg.budget}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def reference_value(obj, budget, seed=0):
    """Minimum ``f(z_k)`` over a QNing-ISTA1 run of ``5x`` the budget.

    Every ``f(z_k)`` is an upper bound on ``f*``, so the minimum is the
    tightest bound the run provides.  The run ends early only once the
    envelope decrease ``||g_k||^2 / (2 kappa)`` falls below ``1e-12 |f|``
    for ``patience`` consecutive iterations.
    """
    cfg = qning_config(obj, "QNing-ISTA1", REFERENCE_FACTOR * budget, seed=seed)
    state, _ = init_state(obj, np.zeros(obj.d), cfg)
    best = math.inf
    quiet = 0
    patience = 20
    while state.counter.passes < cfg.max_passes and np.any(state.g):
        best = min(best, obj.value(state.z))
        g2 = float(state.g @ state.g)
        quiet = quiet + 1 if g2 / (2.0 * cfg.kappa) <= REFERENCE_TOL * max(1.0, abs(best)) else 0
        if quiet >= patience:
            break
        qning_step(obj, state, cfg)
    return min(best, obj.value(state.z))


def cached_reference(cfg, obj):
    out = Path(cfg.output)
    cache = out / ".fstar"
    path = cache / f"{config_digest(cfg)}.json"
    if path.exists():
        return float.fromhex(json.loads(path.read_text())["f_star"])
    f_star = reference_value(obj, cfg.budget, cfg.seed)
    cache.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"f_star": float(f_star).hex()}) + "\n")
    return f_star


# ---------------------------------------------------------------------------
# experiments


def _meta(cfg, obj, method, f_star, kappa):
    return {"name": cfg.name, "method": method, "formulation": cfg.formulation, "n": obj.n,
            "d": obj.d, "lam": float(obj.reg.lam), "mu": float(obj.reg.mu), "L": float(obj.L),
            "kappa": float(kappa) if kappa is not None else float("nan"),
            "memory": int(cfg.memory), "seed": int(cfg.seed), "budget": float(cfg.budget),
            "f_star": float(f_star)}


def _write(trace, out, stem):
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(trace, out / f"{stem}.csv")
    emit_json(trace, out / f"{stem}.json")
    return [out / f"{stem}.csv", out / f"{stem}.json"]


def _kappa_for(cfg, obj, method):
    if method in _QNING:
        return cfg.kappa if cfg.kappa is not None else default_kappa(_QNING[method][0], obj.L, obj.n)
    return None


def run_experiment(cfg, problem=None):
    """Run every method of ``cfg``; returns ``{method: [csv path, json path]}``."""
    ds, obj = problem if problem is not None else prepare(cfg)
    f_star = cached_reference(cfg, obj)
    out = Path(cfg.output)
    files = {}
    for method in cfg.methods:
        kappa = _kappa_for(cfg, obj, method)
        trace = run_method(obj, method, cfg.budget, kappa, cfg.memory, cfg.seed, f_star,
                           cfg.target)
        trace.meta = {**trace.meta, **_meta(cfg, obj, method, f_star, kappa)}
        files[method] = _write(trace, out, f"{cfg.name}__{method}")
    return files


def _qning_methods(cfg):
    methods = [m for m in cfg.methods if m in _QNING]
    if not methods:
        raise ValueError("sweeps need at least one QNing method")
    return methods


def sweep_kappa(cfg, grid=KAPPA_GRID):
    """Each QNing method at ``kappa = 10^i kappa_0`` (``kappa_0`` the default)."""
    ds, obj = prepare(cfg)
    f_star = cached_reference(cfg, obj)
    out = Path(cfg.output)
    files = {}
    for method in _qning_methods(cfg):
        kappa0 = _kappa_for(cfg, obj, method)
        for i in grid:
            kappa = kappa0 * 10.0 ** i
            trace = run_method(obj, method, cfg.budget, kappa, cfg.memory, cfg.seed, f_star,
                               cfg.target)
            trace.meta = {**trace.meta, **_meta(cfg, obj, method, f_star, kappa)}
            trace.meta["kappa_exponent"] = i
            files[(method, i)] = _write(trace, out, f"{cfg.name}__{method}__kappa{i:+d}")
    return files


def sweep_memory(cfg, grid=MEMORY_GRID):
    ds, obj = prepare(cfg)
    f_star = cached_reference(cfg, obj)
    out = Path(cfg.output)
    files = {}
    for method in _qning_methods(cfg):
        kappa = _kappa_for(cfg, obj, method)
        for mem in grid:
            sub = replace(cfg, memory=mem)
            trace = run_method(obj, method, cfg.budget, kappa, mem, cfg.seed, f_star, cfg.target)
            trace.meta = {**trace.meta, **_meta(sub, obj, method, f_star, kappa)}
            files[(method, mem)] = _write(trace, out, f"{cfg.name}__{method}__l{mem}")
    return files


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class StepsizeFrequency:
    unit: int
    total: int

    @property
    def ratio(self):
        return self.unit / self.total if self.total else float("nan")

    def __str__(self):
        if not self.total:
            return "0/0 -"
        return f"{self.unit}/{self.total} {100.0 * self.ratio:.0f}%"


def is_qning_trace(trace):
    return trace.method.startswith("QNing") or trace.meta.get("method", "").startswith("QNing")


def report_stepsize_frequency(trace):
    """How often the unit stepsize was accepted, e.g. ``24/27 89%``."""
    if not is_qning_trace(trace):
        raise ValueError(f"stepsize frequency needs a QNing trace, got {trace.method!r}")
    etas = [r.stepsize for r in trace.records if r.iteration > 0]
    return StepsizeFrequency(sum(1 for e in etas if e == 1.0), len(etas))


def passes_to_target(trace, f_star, target):
    """First pass count at which ``(f - f*) / |f*| <= target``; inf if never."""
    for rec in trace.records:
        if _rel_gap(rec.objective, f_star) <= target:
            return rec.passes
    return math.inf


def summarize(trace):
    last = trace.records[-1] if trace.records else None
    row = {"method": trace.method or trace.meta.get("method", ""),
           "iterations": last.iteration if last else 0,
           "passes": last.passes if last else 0.0,
           "objective": last.objective if last else float("nan")}
    f_star = trace.meta.get("f_star")
    if last and f_star is not None:
        row["rel_gap"] = _rel_gap(last.objective, f_star)
    if is_qning_trace(trace):
        row["unit_stepsize"] = str(report_stepsize_frequency(trace))
    return row
