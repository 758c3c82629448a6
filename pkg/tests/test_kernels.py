import numpy as np
import pytest
import scipy.special as sp

from oscint._validation import ParameterError
from oscint.kernels import (
    FIO1D,
    FIOSmooth,
    GridSpec,
    Hankel,
    c_speed,
    hankel1_01,
    hankel1_table,
    hankel_entry,
    make_kernel,
    split_phase_pieces,
    synthetic_phase,
)
from oscint.lowrank import LowRankFactor
from oscint.nufft import decide_nufft, split_evaluate
from oscint.phase_recovery import frac, recover_amplitude, recover_phase_factor, recover_vector


def rank(m, tol=1e-12):
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s > tol * s[0]))


def test_grid():
    g = GridSpec(8)
    assert np.allclose(g.x, np.arange(8) / 8) and g.xi.tolist() == list(range(-4, 4))
    assert np.all(np.diff(g.x) > 0) and g.x[-1] < 1
    assert np.array_equal(g.x_index(g.x), np.arange(8)) and np.array_equal(g.xi_index(g.xi), np.arange(8))


# ---- fio1d


def test_fio_xi_zero_column():
    k = FIO1D(64)
    assert np.allclose(k.entries(np.arange(64), [32]), 1, atol=1e-15)


def test_fio_hand_value():
    k = FIO1D(64)
    assert c_speed(0.0) == pytest.approx(0.125)
    assert k.entry(0, 32 + 4) == pytest.approx(-1, abs=1e-14)


@pytest.mark.parametrize("cls", [FIO1D, FIOSmooth])
def test_unimodular(cls):
    k = cls(256)
    a = np.arange(256)
    assert np.max(np.abs(np.abs(k.entries(a, a)) - 1)) <= 1e-14


def test_out_of_range():
    with pytest.raises(ParameterError):
        FIO1D(16).entries([16], [0])


def test_exact_factor_matches_phase():
    k = FIO1D(128)
    a = np.arange(128)
    assert np.allclose(k.exact_phase_factor().reconstruct(), k.phase(a, a), atol=1e-12)


# ---- fio-smooth


def test_smooth_rank_one():
    k = FIOSmooth(128)
    a = np.arange(128)
    assert rank(k.phase(a, a)) == 1
    assert np.allclose(k.entries(a, [64]), 1)


def test_smooth_decision():
    k = FIOSmooth(512)
    amp = LowRankFactor(np.ones((512, 1)), np.ones((512, 1)), np.array([1.0]))
    assert decide_nufft(k.exact_phase_factor(), amp, r=1, r_eps=8).applicable


# ---- hankel


def test_hankel_asymptotic_magnitude():
    h0, _ = hankel1_01(np.array([1024.0]))
    assert abs(abs(h0[0]) / np.sqrt(2 / (np.pi * 1024)) - 1) <= 1e-3


def test_hankel_wronskian():
    rng = np.random.default_rng(0)
    x = 1024 + rng.uniform(0, 2000, 10)
    h = hankel1_table(x, 1000)
    j, y = h.real, h.imag
    for m in rng.integers(0, 999, 10):
        w = j[:, m + 1] * y[:, m] - j[:, m] * y[:, m + 1]
        assert np.max(np.abs(w * np.pi * x / 2 - 1)) <= 1e-10


def test_hankel_recurrence():
    x = np.array([1100.0, 1500.0, 3000.0])
    h = hankel1_table(x, 900)
    for m in (1, 10, 500, 899):
        lhs = h[:, m + 1]
        rhs = (2 * m / x) * h[:, m] - h[:, m - 1]
        assert np.max(np.abs(lhs - rhs) / np.abs(lhs)) <= 1e-9


def test_hankel_order_zero_vs_series():
    x = np.linspace(1024, 4096, 10)
    h0, h1 = hankel1_01(x)
    assert np.max(np.abs(h0 - sp.hankel1(0, x)) / np.abs(sp.hankel1(0, x))) <= 1e-9
    assert np.max(np.abs(h1 - sp.hankel1(1, x)) / np.abs(sp.hankel1(1, x))) <= 1e-9


def test_hankel_entries_vs_scipy():
    n = 1024
    k = Hankel(n)
    i = np.array([0, 3, 500, 1023])
    j = np.array([0, 1, 700, 1023])
    ref = sp.hankel1(j[None, :], k.points()[i][:, None])
    assert np.max(np.abs(k.entries(i, j) - ref) / np.abs(ref)) <= 1e-10
    assert hankel_entry(3, 700, n) == pytest.approx(ref[1, 2], rel=1e-10)


def test_hankel_regime_guard():
    with pytest.raises(ParameterError):
        hankel1_table([30.0], 40)
    with pytest.raises(ParameterError):
        hankel1_01([5.0])


# ---- split pieces


def test_split_pieces_identity():
    n = 128
    g = GridSpec(n)
    k = FIO1D(n)
    full = np.empty((n, n))
    for cols, fac in split_phase_pieces(g):
        assert fac.rank == 1
        full[:, cols] = fac.reconstruct().real
        assert rank(fac.reconstruct().real) == 1
    a = np.arange(n)
    assert np.max(np.abs(np.exp(2j * np.pi * full) - k.entries(a, a))) <= 1e-12


def test_split_nufft_vs_direct():
    n = 4096
    k = FIO1D(n)
    rng = np.random.default_rng(0)
    f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    g = split_evaluate(k.split_phase_pieces(), f)
    rows = np.sort(rng.choice(n, 256, replace=False))
    ref = k.entries(rows, np.arange(n)) @ f
    assert np.linalg.norm(g[rows] - ref) / np.linalg.norm(ref) <= 1e-10


# ---- synthetic


def test_synthetic_separable_rank_one():
    k = synthetic_phase("separable", 256)
    acc = k.access("entry")
    f = recover_phase_factor(acc, recover_amplitude(acc))
    p = f.reconstruct().real
    # recovered phase equals the truth up to integer offsets; the smooth part has rank 1
    d = p - k.truth.reconstruct().real
    assert np.max(np.abs(d - np.rint(d))) <= 1e-8
    assert rank(p - np.rint(d), 1e-10) == 1


def test_synthetic_planted_break():
    n = 256
    k = synthetic_phase("planted-breaks", n)
    row = k.phase([0], np.arange(n))[0]
    r = recover_vector(frac(row), tau=0.2)
    assert n // 2 in r.breaks.tolist()
    assert k.true_breaks.tolist() == [0, n // 2]


def test_synthetic_smooth_low_rank():
    n = 256
    k = synthetic_phase("smooth-low-rank", n, rank=3)
    acc = k.access("entry")
    amp = recover_amplitude(acc)
    f = recover_phase_factor(acc, amp)
    a = np.arange(n)
    kk = amp.reconstruct().real * np.exp(2j * np.pi * f.reconstruct().real)
    assert np.max(np.abs(kk - k.entries(a, a))) <= 1e-8


def test_synthetic_deterministic_and_unknown():
    a = synthetic_phase("smooth-low-rank", 64, seed=3).truth
    b = synthetic_phase("smooth-low-rank", 64, seed=3).truth
    assert np.array_equal(a.u, b.u)
    with pytest.raises(ParameterError):
        synthetic_phase("spiral", 64)


def test_make_kernel():
    assert make_kernel("fio-split", 64).name == "fio-split"
    assert make_kernel("synthetic:separable", 64).name == "synthetic:separable"
    with pytest.raises(ParameterError):
        make_kernel("nope", 64)
