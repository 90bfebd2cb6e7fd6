"""Quasi-Newton acceleration of first-order composite solvers through the Moreau envelope."""
from .inner import StopRule, SubProblem, run_fista, run_prox_svrg, run_proxgrad
from .metric import LbfgsMemory
from .moreau import GradientEstimate, approx_gradient, inner_budget, warm_start
from .objective import (CompositeObjective, Dataset, EvalCounter, NoCertificateError,
                        Regularizer, component_grad, elastic_net, full_value_grad, l1, l2,
                        no_reg, optimality_gap_certificate, prox)
from .outer import QningConfig, QningState, default_kappa, qning_step, run_qning
from .traces import SolverTrace, TraceRecord, emit_csv, emit_json, read_csv, read_json

__version__ = "0.1.0"

__all__ = [
    "StopRule", "SubProblem", "run_fista", "run_prox_svrg", "run_proxgrad",
    "LbfgsMemory",
    "GradientEstimate", "approx_gradient", "inner_budget", "warm_start",
    "CompositeObjective", "Dataset", "EvalCounter", "NoCertificateError", "Regularizer",
    "component_grad", "elastic_net", "full_value_grad", "l1", "l2", "no_reg",
    "optimality_gap_certificate", "prox",
    "QningConfig", "QningState", "default_kappa", "qning_step", "run_qning",
    "SolverTrace", "TraceRecord", "emit_csv", "emit_json", "read_csv", "read_json",
]
