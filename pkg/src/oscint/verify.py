"""Property suites run by ``oscint verify``.

Each suite returns a list of ``Check`` results; all sizes stay at
``N <= 512`` so that the full run finishes well within a minute.
"""

import time
from dataclasses import dataclass

import numpy as np

from .butterfly import ButterflyFactorization, butterfly_apply, butterfly_factorize
from .interp import expi, lagrange_matrix, mock_chebyshev_grid
from .kernels import GridSpec, make_kernel, synthetic_phase
from .lowrank import LowRankFactor, MatrixSampler, randomized_svd
from .nufft import NufftPlan, direct_type3
from .phase_recovery import frac, recover_amplitude, recover_phase_factor
from .pipeline import PlanParams, default_signal, plan_transform, apply_transform, probe_indices, recover_kernel

N_VERIFY = 512


@dataclass
class Check:
    suite: str
    name: str
    ok: bool
    value: float
    limit: float

    def line(self):
        tag = "ok  " if self.ok else "FAIL"
        return f"{tag} [{self.suite}] {self.name}: {self.value:.3e} (limit {self.limit:.1e})"


def _check(suite, name, value, limit):
    value = float(value)
    return Check(suite, name, bool(np.isfinite(value) and value <= limit), value, limit)


def _int_dist(d):
    return np.max(np.abs(d - np.rint(d)))


def suite_unwrap(seed=0, **_):
    """Recovered phase samples agree with the observed phase modulo 1."""
    out = []
    cases = [("fio1d", "entry"), ("fio1d", "samples"), ("fio-smooth", "entry"), ("hankel", "entry"),
             ("hankel", "samples"), ("synthetic:planted-breaks", "entry"),
             ("synthetic:smooth-low-rank", "entry"), ("fio1d", "matvec")]
    for name, scenario in cases:
        k = make_kernel(name, N_VERIFY)
        acc = k.access(scenario, seed=seed)
        amp = recover_amplitude(acc, seed=seed)
        _, rec = recover_phase_factor(acc, amp, seed=seed, return_samples=True)
        full = np.arange(k.n)
        obs_r = np.angle(k.entries(rec.row_idx, full) / amp.reconstruct(rows=rec.row_idx)) / (2 * np.pi)
        obs_c = np.angle(k.entries(full, rec.col_idx) / amp.reconstruct(cols=rec.col_idx)) / (2 * np.pi)
        err = max(_int_dist(rec.row_samples - obs_r), _int_dist(rec.col_samples - obs_c))
        out.append(_check("unwrap", f"{name}/{scenario} frac consistency", err, 1e-10))
    return out


def suite_offsets(seed=0, **_):
    """Recovery of 20 smooth synthetic phases up to piecewise integer offsets."""
    out = []
    worst_int = worst_rank = 0.0
    for s in range(20):
        k = synthetic_phase("smooth-low-rank", 256, rank=2 + s % 3, seed=seed + s)
        amp, phase = recover_kernel(k.access("entry"))
        d = phase.reconstruct().real - k.truth.reconstruct().real
        worst_int = max(worst_int, _int_dist(d))
        # the offsets must themselves be a low-rank (block constant) pattern
        sv = np.linalg.svd(np.rint(d), compute_uv=False)
        worst_rank = max(worst_rank, int(np.sum(sv > 1e-8 * max(sv[0], 1.0))))
    out.append(_check("offsets", "20 smooth phases: distance of offsets to integers", worst_int, 1e-8))
    out.append(_check("offsets", "20 smooth phases: rank of integer offsets", worst_rank, 2))
    return out


def suite_interp(**_):
    """Lagrange interpolation on Mock-Chebyshev grids."""
    node = unity = 0.0
    for n in (16, 64, 256, 512):
        for r in (4, 6, 8, 10, 12):
            g = mock_chebyshev_grid(n, r, ascending=True)
            m = lagrange_matrix(g.indices, g.indices)
            node = max(node, np.max(np.abs(m - np.eye(g.indices.size))))
            q = lagrange_matrix(g.indices, np.arange(n))
            unity = max(unity, np.max(np.abs(q.sum(axis=1) - 1)))
    return [_check("interp", "node exactness", node, 1e-12),
            _check("interp", "partition of unity", unity, 1e-12)]


def suite_butterfly(seed=0, fault=None, **_):
    """Butterfly recursion reproduces the DFT and round-trips through storage."""
    n = N_VERIFY
    g = GridSpec(n)
    phase = LowRankFactor(g.x[:, None], g.xi[:, None].astype(float))
    dft = expi(np.outer(g.x, g.xi))
    f = default_signal(n, seed)
    ref = dft @ f
    u = butterfly_apply(phase, f, r_eps=12, fault=fault)
    out = [_check("butterfly", "butterfly recursion equals DFT (on the fly)",
                  np.linalg.norm(u - ref) / np.linalg.norm(ref), 1e-8)]
    bf = butterfly_factorize(phase, r_eps=12, fault=fault)
    v = bf.apply(f)
    out.append(_check("butterfly", "butterfly recursion equals DFT (stored)",
                      np.linalg.norm(v - ref) / np.linalg.norm(ref), 1e-8))
    back = ButterflyFactorization.from_bytes(bf.to_bytes())
    out.append(_check("butterfly", "stored factors round-trip bitwise",
                      float(not np.array_equal(back.apply(f), v)), 0))
    return out


def suite_lowrank(**_):
    """Complementary low rank of the 1-D FIO kernel and exact low-rank recovery."""
    n = N_VERIFY
    k = make_kernel("fio1d", n)
    r_eps = 10
    worst = 0
    level = 1
    while level <= n:
        a, b = level, n // level
        for i in range(0, n, a):
            for j in range(0, n, b):
                s = np.linalg.svd(k.entries(np.arange(i, i + a), np.arange(j, j + b)), compute_uv=False)
                worst = max(worst, int(np.sum(s > 1e-8 * s[0])))
        level *= 2
    out = [_check("lowrank", f"complementary block rank at 1e-8 (r_eps={r_eps})", worst, r_eps)]
    rng = np.random.default_rng(0)
    m = rng.standard_normal((n, 7)) @ rng.standard_normal((7, n))
    f = randomized_svd(MatrixSampler.from_dense(m), r=7, q=5)
    out.append(_check("lowrank", "randomized SVD of an exact rank-7 matrix",
                      np.linalg.norm(f.reconstruct() - m) / np.linalg.norm(m), 1e-10))
    return out


def suite_nufft(seed=0, **_):
    """Type-3 NUFFT accuracy contract on 100 random plans."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        dim = int(rng.integers(1, 3))
        ns, nt = rng.integers(20, 200, size=2)
        tol = 10 ** rng.uniform(-12, -3)
        span = rng.uniform(1, 60 if dim == 1 else 12, size=2)
        s = rng.uniform(-span[0], span[0], size=(dim, ns)) + rng.uniform(-5, 5, size=(dim, 1))
        t = rng.uniform(-span[1], span[1], size=(dim, nt)) + rng.uniform(-5, 5, size=(dim, 1))
        c = rng.standard_normal(ns) + 1j * rng.standard_normal(ns)
        ref = direct_type3(s, t, c)
        got = NufftPlan(s, t, tolerance=tol).execute(c)
        worst = max(worst, np.linalg.norm(got - ref) / np.linalg.norm(ref) / tol)
    return [_check("nufft", "100 random plans: error / tolerance", worst, 10)]


def suite_scenarios(seed=0, **_):
    """Entry access and matvec access give the same recovery under one seed."""
    out = []
    for name in ("fio1d", "hankel"):
        k = make_kernel(name, N_VERIFY)
        a1, p1 = recover_kernel(k.access("entry"))
        a2, p2 = recover_kernel(k.access("matvec"))
        pa, pb = p1.reconstruct().real, p2.reconstruct().real
        aa, ab = a1.reconstruct().real, a2.reconstruct().real
        err = max(np.max(np.abs(pa - pb)) / np.max(np.abs(pa)), np.max(np.abs(aa - ab)) / np.max(np.abs(aa)))
        out.append(_check("scenarios", f"{name}: entry vs matvec recovery", err, 1e-10))
    return out


def suite_paths(seed=0, **_):
    """NUFFT and butterfly paths agree wherever both exist."""
    k = make_kernel("fio1d", N_VERIFY)
    acc = k.access("entry")
    amp, phase = recover_kernel(acc)
    f = default_signal(k.n, seed)
    rows = probe_indices(k.n, 256, seed)
    ref = acc.rows(rows) @ f
    gs = {}
    for path in ("nufft", "bf"):
        plan = plan_transform(amp, phase, PlanParams(r_eps=10, force_path=path))
        gs[path] = apply_transform(plan, f)[rows]
    e_n = np.linalg.norm(gs["nufft"] - ref) / np.linalg.norm(ref)
    e_b = np.linalg.norm(gs["bf"] - ref) / np.linalg.norm(ref)
    mutual = np.linalg.norm(gs["nufft"] - gs["bf"]) / np.linalg.norm(ref)
    return [_check("paths", "fio1d NUFFT vs butterfly", mutual, 10 * max(e_n, e_b))]


SUITES = {
    "unwrap": suite_unwrap,
    "offsets": suite_offsets,
    "interp": suite_interp,
    "butterfly": suite_butterfly,
    "lowrank": suite_lowrank,
    "nufft": suite_nufft,
    "scenarios": suite_scenarios,
    "paths": suite_paths,
}


def run_suites(names=None, seed=0, fault=None, log=print):
    """Run the selected suites; returns ``(checks, seconds)``."""
    names = list(SUITES) if not names else list(names)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s) {unknown}; choose from {list(SUITES)}")
    t0 = time.perf_counter()
    checks = []
    for name in names:
        res = SUITES[name](seed=seed, fault=fault)
        for c in res:
            log(c.line())
        checks.extend(res)
    return checks, time.perf_counter() - t0
