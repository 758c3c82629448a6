"""Benchmark records: errors and timings of recover -> plan -> apply."""

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from ._version import __version__
from .butterfly import butterfly_factorize, direct_apply
from .kernels import make_kernel
from .nufft import NufftPlan, lifted_apply, residual_terms
from .pipeline import (
    PlanParams,
    PlanningError,
    RecoveryParams,
    TransformPlan,
    apply_transform,
    choose_lift,
    default_signal,
    factor_errors,
    probe_indices,
    recover_kernel,
    relative_error,
)

COLUMNS = ["kernel", "N", "r_eps", "scenario", "seed", "path", "eps_b", "eps_n", "eps_K", "eps_pha",
           "eps_amp", "T_rec", "T_fac", "T_app", "T_d", "T_dec"]
TIMINGS = ("T_rec", "T_fac", "T_app", "T_dec")
# full dense reference only up to this size; above it only the probe rows
DIRECT_MAX = 16384
# default error budgets checked by the bench command
MAX_EPS_N = 1e-9
MAX_EPS_AMP = 1e-10
MAX_EPS_PHA = 1e-7


def bf_budget(r_eps):
    """Expected butterfly error at rank ``r_eps``, with a factor 10 margin.

    Each extra pair of interpolation nodes gains roughly two digits on the
    smooth test kernels.
    """
    return 5e-3 * 10.0 ** (-(r_eps - 6))


@dataclass
class BenchRecord:
    kernel: str
    N: int
    r_eps: int
    scenario: str
    seed: int
    path: str
    eps_b: float | None = None
    eps_n: float | None = None
    eps_K: float | None = None
    eps_pha: float | None = None
    eps_amp: float | None = None
    T_rec: float | None = None
    T_fac: float | None = None
    T_app: float | None = None
    T_d: float | None = None
    T_dec: float | None = None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        kw = {}
        for f in fields(cls):
            v = d.get(f.name)
            if v in (None, ""):
                kw[f.name] = None
            elif f.name in ("N", "r_eps", "seed"):
                kw[f.name] = int(v)
            elif f.name in ("kernel", "scenario", "path"):
                kw[f.name] = str(v)
            else:
                kw[f.name] = float(v)
        return cls(**kw)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        d = r.to_dict()
        w.writerow([_cell(d[c]) for c in COLUMNS])
    return buf.getvalue()


def from_csv(text):
    return [BenchRecord.from_dict(row) for row in csv.DictReader(io.StringIO(text))]


def to_json(records):
    return json.dumps([r.to_dict() for r in records], indent=1) + "\n"


def from_json(text):
    return [BenchRecord.from_dict(d) for d in json.loads(text)]


def timed(fn, repeat=3):
    """Median wall time of ``repeat`` calls and the last result."""
    ts = []
    out = None
    for _ in range(max(1, repeat)):
        t0 = time.perf_counter()
        out = fn()
        ts.append(time.perf_counter() - t0)
    return float(np.median(ts)), out


def run_bench(kernel, n, r_eps_list, rank=20, oversampling=5, tau=np.pi / 2, tol=1e-12, seed=0,
              scenario="entry", force_path="auto", repeat=3, direct=True, measure=TIMINGS, log=None):
    """One record per ``r_eps`` at size ``n``; recovery is shared between them.

    ``eps_b`` is always measured on the butterfly (unless the NUFFT is
    forced) and ``eps_n`` whenever a lift is applicable (unless the
    butterfly is forced); ``T_fac`` and ``T_app`` belong to ``path``.
    """
    kern = make_kernel(kernel, n)
    acc = kern.access(scenario, rank, oversampling, seed)
    ref = kern.access("entry")
    rp = RecoveryParams(rank, oversampling, tau, seed)
    t_rec, (amp, phase) = timed(lambda: recover_kernel(acc, rp), repeat if "T_rec" in measure else 1)
    eps_amp, eps_pha, eps_k = factor_errors(amp, phase, ref, seed)
    f = default_signal(n, seed)
    rows = probe_indices(n, seed=seed)
    t_d = None
    if direct:
        full = None if n <= DIRECT_MAX else rows
        t_d, _ = timed(lambda: direct_apply(ref, f, rows=full), repeat)
    apply_paths = "T_fac" in measure or "T_app" in measure

    out = []
    for r_eps in r_eps_list:
        pp = PlanParams(r_eps, oversampling, tol, tol, 1, force_path, seed)
        rec = BenchRecord(kern.name, n, r_eps, scenario, seed, force_path, eps_K=eps_k, eps_pha=eps_pha,
                          eps_amp=eps_amp, T_rec=t_rec if "T_rec" in measure else None, T_d=t_d)
        t_dec, (lift, _, _) = timed(lambda: choose_lift(amp, phase, pp), repeat if "T_dec" in measure else 1)
        if "T_dec" in measure:
            rec.T_dec = t_dec
        if force_path == "nufft" and lift is None:
            raise PlanningError(f"{kern.name} N={n}: NUFFT forced but not applicable")
        rec.path = force_path if force_path != "auto" else ("nufft" if lift is not None else "bf")
        tm = {}
        if apply_paths and lift is not None and force_path != "bf":
            t_fac, (nplan, res) = timed(lambda: (NufftPlan(lift.q.T, lift.p.T, tolerance=tol),
                                                 residual_terms(lift)), repeat)
            t_app, g = timed(lambda: lifted_apply(nplan, res, f), repeat)
            rec.eps_n = relative_error(g, ref, f, rows=rows)
            tm["nufft"] = (t_fac, t_app)
        if apply_paths and force_path != "nufft":
            t_fac, bf = timed(lambda: butterfly_factorize(phase, r_eps, 1, seed), repeat)
            plan = TransformPlan(amp, "bf", butterfly=bf)
            t_app, g = timed(lambda: apply_transform(plan, f), repeat)
            rec.eps_b = relative_error(g, ref, f, rows=rows)
            tm["bf"] = (t_fac, t_app)
        if rec.path in tm and "T_fac" in measure:
            rec.T_fac = tm[rec.path][0]
        if rec.path in tm and "T_app" in measure:
            rec.T_app = tm[rec.path][1]
        if log:
            log(summary_line(rec))
        out.append(rec)
    return out


def summary_line(rec):
    def g(v):
        return "-" if v is None else f"{v:.2e}"
    return (f"{rec.kernel} N={rec.N} r_eps={rec.r_eps} path={rec.path} eps_b={g(rec.eps_b)} "
            f"eps_n={g(rec.eps_n)} eps_K={g(rec.eps_K)} eps_pha={g(rec.eps_pha)} eps_amp={g(rec.eps_amp)} "
            f"T_rec={g(rec.T_rec)} T_fac={g(rec.T_fac)} T_app={g(rec.T_app)} T_d={g(rec.T_d)} T_dec={g(rec.T_dec)}")


def breaches(rec, max_eps_b=None, max_eps_n=MAX_EPS_N, max_eps_amp=MAX_EPS_AMP, max_eps_pha=MAX_EPS_PHA):
    """Descriptions of every error budget the record exceeds."""
    limits = {
        "eps_b": bf_budget(rec.r_eps) if max_eps_b is None else max_eps_b,
        "eps_n": max_eps_n,
        "eps_amp": max_eps_amp,
        "eps_pha": max_eps_pha,
    }
    bad = []
    for key, lim in limits.items():
        v = getattr(rec, key)
        if v is not None and not (math.isfinite(v) and v <= lim):
            bad.append(f"{rec.kernel} N={rec.N} r_eps={rec.r_eps}: {key}={v:.3e} > {lim:.1e}")
    return bad


def growth_factors(records, key):
    """Per-quadrupling growth of ``key`` between consecutive sizes."""
    recs = sorted((r for r in records if getattr(r, key) is not None), key=lambda r: r.N)
    out = []
    for a, b in zip(recs, recs[1:]):
        ratio = getattr(b, key) / getattr(a, key)
        out.append((a.N, b.N, ratio ** (math.log(4) / math.log(b.N / a.N))))
    return out


def provenance(args_dict):
    return {"version": __version__, **args_dict}
