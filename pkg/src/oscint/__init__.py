"""Fast oscillatory integral transforms from indirect kernel access.

``K = A exp(2 pi i Phi)`` is recovered as a low-rank amplitude and a
low-rank phase, then applied either as a dimension-lifted type-3 NUFFT or
through a butterfly factorization.
"""

from ._validation import ParameterError
from ._version import __version__
from .butterfly import ButterflyFactorization, butterfly_apply, butterfly_factorize, direct_apply
from .kernels import FIO1D, FIOSmooth, FIOSplit, Hankel, make_kernel, synthetic_phase
from .lowrank import LowRankFactor, MatrixSampler, pivoted_qr, randomized_svd
from .nufft import NufftDecision, NufftPlan, decide_nufft, nufft_evaluate, nufft_type3, split_evaluate
from .phase_recovery import EntryOracle, MatvecOracle, SampleOracle, recover_amplitude, recover_phase_factor
from .pipeline import (
    OscillatoryTransform,
    PlanningError,
    PlanParams,
    RecoveryParams,
    TransformPlan,
    apply_transform,
    plan_transform,
    recover_kernel,
    relative_error,
)

__all__ = [
    "ButterflyFactorization", "EntryOracle", "FIO1D", "FIOSmooth", "FIOSplit", "Hankel", "LowRankFactor",
    "MatrixSampler", "MatvecOracle", "NufftDecision", "NufftPlan", "OscillatoryTransform", "ParameterError",
    "PlanParams", "PlanningError", "RecoveryParams", "SampleOracle", "TransformPlan", "__version__",
    "apply_transform", "butterfly_apply", "butterfly_factorize", "decide_nufft", "direct_apply",
    "make_kernel", "nufft_evaluate", "nufft_type3", "pivoted_qr", "plan_transform", "randomized_svd",
    "recover_amplitude", "recover_kernel", "recover_phase_factor", "relative_error", "split_evaluate",
    "synthetic_phase",
]
