"""Epoch-based improper active learning via surrogate regression, with a
desk-scale verification harness for the underlying surrogate-loss bounds.

Class labels are 0-based everywhere; argmax ties break to the lowest index.
Set ``EPOCH_ACTIVE_BACKEND=numpy`` to run the numeric kernels without numba.
"""

from ._backend import BACKEND
from .distributions import (InstanceSpec, QueryRegion, example1, example2,
                            example2_class, linf_approx_realizable,
                            massart_linear, table_instance, tsybakov_linear,
                            verify_assumption)
from .evaluation import (RiskReport, ThetaEstimate, check_passive_bound,
                         estimate_theta, excess_class_risk, passive_baseline,
                         rate_fit)
from .funcclass import ClassSpec, evaluate, param_distance_sq, project
from .learner import (EpochRecord, LearnerConfig, RunTrace,
                      StitchedClassifier, predict, predict_batch, query_mass,
                      run)
from .oracle import CompFormula, OracleConfig, comp_value, excess_surrogate_risk, fit
from .surrogate import (SurrogateSpec, classify, gap, link, margin, potential,
                        surrogate_loss)
from .version_space import (DisagreeConfig, VersionSpace,
                            certify_margin_bound, disagrees_at)

__all__ = [
    "BACKEND",
    "ClassSpec",
    "CompFormula",
    "DisagreeConfig",
    "EpochRecord",
    "InstanceSpec",
    "LearnerConfig",
    "OracleConfig",
    "QueryRegion",
    "RiskReport",
    "RunTrace",
    "StitchedClassifier",
    "SurrogateSpec",
    "ThetaEstimate",
    "VersionSpace",
    "certify_margin_bound",
    "check_passive_bound",
    "classify",
    "comp_value",
    "disagrees_at",
    "estimate_theta",
    "evaluate",
    "example1",
    "example2",
    "example2_class",
    "excess_class_risk",
    "excess_surrogate_risk",
    "fit",
    "gap",
    "linf_approx_realizable",
    "link",
    "margin",
    "massart_linear",
    "param_distance_sq",
    "passive_baseline",
    "potential",
    "predict",
    "predict_batch",
    "project",
    "query_mass",
    "rate_fit",
    "run",
    "surrogate_loss",
    "table_instance",
    "tsybakov_linear",
    "verify_assumption",
]

__version__ = "0.1.0"
