"""Recover, decide, plan and apply: the full oscillatory transform.

``g(x) = sum_xi A(x, xi) exp(2 pi i Phi(x, xi)) f(xi)`` is evaluated by
splitting the amplitude into ``sum_k a_k(x) conj(b_k(xi))`` and pushing each
``conj(b_k) * f`` through one fast transform of the pure phase kernel,
either a dimension-lifted NUFFT or a butterfly factorization.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ParameterError, check_positive_int, check_vector, probe_random_state
from ._version import __version__
from .butterfly import ButterflyFactorization, DegenerateBlockError, butterfly_factorize
from .interp import expi
from .kernels import Kernel, make_kernel
from .lowrank import LowRankFactor
from .nufft import MAX_DIM, NufftDecision, NufftPlan, decide_nufft, lifted_apply, residual_terms
from .phase_recovery import DEFAULT_TAU, KernelAccess, SampleOracle, recover_amplitude, recover_phase_factor

PATHS = ("auto", "nufft", "bf")
SCENARIOS = ("entry", "matvec", "samples")
# amplitude terms below this fraction of the leading singular value are dropped;
# a unimodular kernel keeps a single term
AMP_RTOL = 1e-13
PROBE_SIZE = 256


class PlanningError(ValueError):
    """Neither the NUFFT nor the butterfly path can be built."""


class DegenerateReferenceError(ZeroDivisionError):
    """The reference output on the probe rows is identically zero."""


@dataclass(frozen=True)
class RecoveryParams:
    rank: int = 20
    oversampling: int = 5
    tau: float = DEFAULT_TAU
    seed: int = 0

    def __post_init__(self):
        check_positive_int(self.rank, "rank")
        check_positive_int(self.oversampling, "oversampling")
        if not np.isfinite(self.tau) or self.tau <= 0:
            raise ParameterError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class PlanParams:
    r_eps: int = 8
    oversampling: int = 5
    eps: float = 1e-12
    tol: float = 1e-12
    leaf_size: int = 1
    force_path: str = "auto"
    seed: int = 0
    fault: str | None = None

    def __post_init__(self):
        check_positive_int(self.r_eps, "r_eps")
        check_positive_int(self.oversampling, "oversampling")
        if self.force_path not in PATHS:
            raise ParameterError(f"force_path must be one of {PATHS}, got {self.force_path!r}")
        if not 0 < self.eps < 1:
            raise ParameterError(f"eps must lie in (0, 1), got {self.eps}")


@dataclass
class TransformPlan:
    """Amplitude terms plus exactly one fast phase transform."""

    amp: LowRankFactor
    path: str
    decision: NufftDecision | None = None
    nufft: NufftPlan | None = field(default=None, repr=False)
    residual: LowRankFactor | None = field(default=None, repr=False)
    butterfly: ButterflyFactorization | None = field(default=None, repr=False)
    provenance: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.decision is None) == (self.butterfly is None):
            raise ValueError("a plan holds exactly one of a NUFFT decision and a butterfly factorization")
        if self.path not in ("nufft", "bf"):
            raise ValueError(f"unknown path {self.path!r}")

    @property
    def n(self):
        return self.amp.shape[1]

    @property
    def amp_terms(self):
        return self.amp.rank

    def provenance_json(self):
        return json.dumps(self.provenance, sort_keys=True)


def recover_kernel(access, params=None):
    """Amplitude and phase factors of ``K`` from any access scenario."""
    params = params or RecoveryParams()
    if not isinstance(access, KernelAccess):
        raise TypeError(f"expected a KernelAccess, got {type(access).__name__}")
    amp = recover_amplitude(access, params.rank, params.oversampling, params.seed)
    if amp.sigma is not None and amp.sigma[0] > 0:
        amp = amp.truncate(AMP_RTOL)
    phase = recover_phase_factor(access, amp, params.rank, params.oversampling, params.tau, params.seed)
    return amp, phase


def _decision_record(d):
    return {
        "r": d.r,
        "applicable": bool(d.applicable),
        "pivot_count": d.pivot_count,
        "eps_effective": float(d.eps_effective),
    }


def choose_lift(amp, phase, params=None):
    """First applicable NUFFT decision for ``r = 1, 2``.

    Returns ``(decision or None, decision records, seconds spent)``.
    """
    params = params or PlanParams()
    records = []
    spent = 0.0
    for r in range(1, min(MAX_DIM, phase.rank) + 1):
        t0 = time.perf_counter()
        d = decide_nufft(phase, amp, r, params.r_eps, params.oversampling, params.eps, params.seed)
        spent += time.perf_counter() - t0
        records.append(_decision_record(d))
        if d.applicable:
            return d, records, spent
    return None, records, spent


def plan_transform(amp, phase, params=None, provenance=None):
    """Try the NUFFT at ``r = 1`` then ``r = 2``; fall back to the butterfly.

    ``params.force_path`` overrides the choice: ``"nufft"`` fails when no
    lift is applicable, ``"bf"`` skips the decision.
    """
    params = params or PlanParams()
    if amp.shape != phase.shape:
        raise ParameterError(f"amplitude {amp.shape} and phase {phase.shape} shapes differ")
    prov = dict(provenance or {})
    prov.update(
        r_eps=params.r_eps, eps=params.eps, tol=params.tol, leaf_size=params.leaf_size,
        force_path=params.force_path, plan_seed=params.seed, amp_terms=amp.rank,
        phase_rank=phase.rank, version=__version__,
    )
    timings = {"T_dec": 0.0, "T_fac": 0.0}
    decisions = []
    if params.force_path != "bf":
        d, decisions, timings["T_dec"] = choose_lift(amp, phase, params)
        if d is not None:
            t0 = time.perf_counter()
            nplan = NufftPlan(d.q.T, d.p.T, tolerance=params.tol)
            res = residual_terms(d)
            timings["T_fac"] = time.perf_counter() - t0
            prov.update(path="nufft", reason=f"residual rank {d.pivot_count} < {params.r_eps} at r={d.r}",
                        decisions=decisions)
            return TransformPlan(amp, "nufft", decision=d, nufft=nplan, residual=res,
                                 provenance=prov, timings=timings)
        if params.force_path == "nufft":
            raise PlanningError(f"NUFFT path forced but no lift up to r={MAX_DIM} is applicable")
        reason = "no NUFFT lift applicable"
    else:
        reason = "forced"
    t0 = time.perf_counter()
    try:
        bf = butterfly_factorize(phase, params.r_eps, params.leaf_size, params.seed, params.fault)
    except (DegenerateBlockError, ParameterError) as exc:
        raise PlanningError(f"butterfly path failed: {exc}") from exc
    timings["T_fac"] = time.perf_counter() - t0
    prov.update(path="bf", reason=reason, decisions=decisions)
    return TransformPlan(amp, "bf", butterfly=bf, provenance=prov, timings=timings)


def _amp_split(apply_phase, amp, f):
    a, b = amp.left(), amp.v
    flat = f.ndim == 1
    f2 = f.reshape(f.shape[0], -1)
    k = f2.shape[1]
    src = (b.conj()[:, :, None] * f2[:, None, :]).reshape(f2.shape[0], -1)
    out = apply_phase(src).reshape(-1, a.shape[1], k)
    g = np.einsum("xr,xrk->xk", a, out)
    return g[:, 0] if flat else g


def apply_transform(plan, f):
    """``g = K f`` through the plan; ``f`` is a vector or an ``N x k`` block."""
    f = check_vector(f, plan.n, "f", allow_batch=True)
    if plan.path == "bf":
        return _amp_split(plan.butterfly.apply, plan.amp, f)
    # the residual factor already carries the amplitude
    return lifted_apply(plan.nufft, plan.residual, f)


# ---------------------------------------------------------------------------
# error metrics on random probes


def probe_indices(n, count=PROBE_SIZE, seed=0, stream=1):
    """Sorted random indices from a stream independent of the recovery samples."""
    rng = probe_random_state(seed, stream)
    return np.sort(rng.choice(n, min(count, n), replace=False))


def relative_error(g_approx, access, f, sample_count=PROBE_SIZE, seed=0, rows=None):
    """Relative l2 error of ``g_approx`` against ``K f`` on sampled rows.

    ``g_approx`` is either the full output or already restricted to ``rows``.
    """
    n = access.n
    f = check_vector(f, n, "f", allow_batch=True)
    if rows is None:
        rows = probe_indices(n, sample_count, seed)
    rows = np.asarray(rows, dtype=np.int64)
    g = np.asarray(g_approx)
    if g.shape[0] == n and rows.size != n:
        g = g[rows]
    if g.shape[0] != rows.size:
        raise ValueError(f"g_approx has {g.shape[0]} rows, expected {n} or {rows.size}")
    ref = access.rows(rows) @ f
    den = np.linalg.norm(ref)
    if den == 0:
        raise DegenerateReferenceError("reference output vanishes on the sampled rows")
    return float(np.linalg.norm(g - ref) / den)


def _probe(reference, seed, count):
    n = reference.n
    rows = probe_indices(n, count, seed, stream=2)
    cols = probe_indices(n, count, seed, stream=3)
    return rows, cols, reference.sample(rows, cols)


def _rel(a, b):
    den = np.linalg.norm(b)
    if den == 0:
        raise DegenerateReferenceError("reference block vanishes")
    return float(np.linalg.norm(a - b) / den)


def factor_errors(amp, phase, reference, seed=0, count=PROBE_SIZE):
    """``(eps_amp, eps_pha, eps_K)`` on a random ``count x count`` probe block.

    The true phase is only known modulo 1, so the recovered phase is
    compared with the observed phase shifted by the nearest integers.
    """
    rows, cols, k = _probe(reference, seed, count)
    a = amp.reconstruct(rows, cols).real
    p = phase.reconstruct(rows, cols).real
    obs = np.angle(k) / (2 * np.pi)
    t = obs + np.rint(p - obs)
    return _rel(a, np.abs(k)), _rel(p, t), _rel(a * expi(p), k)


# ---------------------------------------------------------------------------
# estimator


def resolve_kernel(kernel, n=None):
    if isinstance(kernel, str):
        if n is None:
            raise ParameterError("a kernel name needs n")
        return make_kernel(kernel, check_positive_int(n, "n"))
    return kernel


class OscillatoryTransform(TransformerMixin, BaseEstimator):
    """Fast ``g = K f`` for an oscillatory kernel ``K = A exp(2 pi i Phi)``.

    ``fit`` recovers the factors from the chosen kernel access and builds a
    plan; ``transform`` applies it to one signal per row of ``X``.

    Parameters
    ----------
    kernel : str, Kernel or KernelAccess
        Kernel name (``fio1d``, ``fio-split``, ``fio-smooth``, ``hankel``,
        ``synthetic:<kind>``), a kernel object, or a bare access oracle.
    n : int
        Problem size when ``kernel`` is a name.
    scenario : {"entry", "matvec", "samples"}
        How a kernel object is accessed.
    """

    def __init__(self, kernel="fio1d", n=1024, scenario="entry", rank=20, oversampling=5,
                 tau=DEFAULT_TAU, r_eps=8, eps=1e-12, tol=1e-12, leaf_size=1,
                 force_path="auto", seed=0):
        self.kernel = kernel
        self.n = n
        self.scenario = scenario
        self.rank = rank
        self.oversampling = oversampling
        self.tau = tau
        self.r_eps = r_eps
        self.eps = eps
        self.tol = tol
        self.leaf_size = leaf_size
        self.force_path = force_path
        self.seed = seed

    def _access(self):
        k = resolve_kernel(self.kernel, self.n)
        if isinstance(k, KernelAccess):
            return None, k
        if not isinstance(k, Kernel):
            raise TypeError(f"unsupported kernel {type(k).__name__}")
        if self.scenario not in SCENARIOS:
            raise ParameterError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        return k, k.access(self.scenario, self.rank, self.oversampling, self.seed)

    def fit(self, X=None, y=None):
        kern, access = self._access()
        rp = RecoveryParams(self.rank, self.oversampling, self.tau, self.seed)
        pp = PlanParams(self.r_eps, self.oversampling, self.eps, self.tol, self.leaf_size,
                        self.force_path, self.seed)
        t0 = time.perf_counter()
        self.amp_, self.phase_ = recover_kernel(access, rp)
        t_rec = time.perf_counter() - t0
        scenario = "samples" if isinstance(access, SampleOracle) else self.scenario
        prov = {
            "kernel": getattr(kern, "name", type(access).__name__), "N": access.n,
            "scenario": scenario if kern is not None else type(access).__name__,
            "seed": self.seed, "rank": self.rank, "oversampling": self.oversampling, "tau": self.tau,
        }
        self.plan_ = plan_transform(self.amp_, self.phase_, pp, prov)
        self.timings_ = dict(self.plan_.timings, T_rec=t_rec)
        self.kernel_ = kern
        self.access_ = access
        self.path_ = self.plan_.path
        self.n_features_in_ = access.n
        return self

    def transform(self, X):
        check_is_fitted(self, "plan_")
        x = np.asarray(X)
        if x.ndim == 1:
            return apply_transform(self.plan_, x)
        if x.ndim != 2 or x.shape[1] != self.n_features_in_:
            raise ValueError(f"X must have shape (n_samples, {self.n_features_in_})")
        return apply_transform(self.plan_, x.T).T

    def errors(self, f=None, seed=None, reference=None):
        """Dict of ``eps_amp``, ``eps_pha``, ``eps_K`` and the path error on probes.

        ``reference`` defaults to entry access of the fitted kernel.
        """
        check_is_fitted(self, "plan_")
        seed = self.seed if seed is None else seed
        if reference is None:
            if self.kernel_ is None:
                reference = self.access_
            else:
                reference = self.kernel_.access("entry")
        ea, ep, ek = factor_errors(self.amp_, self.phase_, reference, seed)
        if f is None:
            f = default_signal(self.n_features_in_, seed)
        err = relative_error(self.transform(f), reference, f, seed=seed)
        return {"eps_amp": ea, "eps_pha": ep, "eps_K": ek, "eps_path": err}


def default_signal(n, seed=0):
    """Complex Gaussian test input, independent of all sampling streams."""
    rng = probe_random_state(seed, stream=4)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)
