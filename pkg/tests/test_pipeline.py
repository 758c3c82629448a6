import json

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from oscint._validation import ParameterError
from oscint.butterfly import direct_apply
from oscint.kernels import FIO1D, Hankel, make_kernel, synthetic_phase
from oscint.lowrank import LowRankFactor
from oscint.phase_recovery import EntryOracle
from oscint.pipeline import (
    DegenerateReferenceError,
    OscillatoryTransform,
    PlanningError,
    PlanParams,
    RecoveryParams,
    TransformPlan,
    apply_transform,
    factor_errors,
    plan_transform,
    probe_indices,
    recover_kernel,
    relative_error,
)


def signal(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


@pytest.fixture(scope="module")
def fio():
    k = FIO1D(1024)
    acc = k.access("entry")
    amp, phase = recover_kernel(acc)
    return k, acc, amp, phase


# ---- recovery


def test_recover_fio(fio):
    k, acc, amp, phase = fio
    ea, ep, ek = factor_errors(amp, phase, acc)
    assert ea <= 1e-12 and ep <= 1e-9
    assert amp.rank == 1


def test_recover_hankel():
    k = Hankel(1024)
    acc = k.access("entry")
    amp, phase = recover_kernel(acc)
    _, ep, _ = factor_errors(amp, phase, acc)
    assert ep <= 1e-7


def test_recover_separable_rank_one():
    k = synthetic_phase("separable", 256)
    amp, phase = recover_kernel(k.access("entry"))
    d = phase.reconstruct().real - k.truth.reconstruct().real
    smooth = phase.reconstruct().real - np.rint(d)
    s = np.linalg.svd(smooth, compute_uv=False)
    assert s[1] <= 1e-10 * s[0]


def test_recover_rejects_non_access():
    with pytest.raises(TypeError):
        recover_kernel(np.ones((4, 4)))
    with pytest.raises(ParameterError):
        RecoveryParams(rank=0)


def test_phase_error_ignores_integer_offsets(fio):
    k, acc, amp, phase = fio
    shifted = LowRankFactor(np.column_stack([phase.left(), np.full(1024, 3.0)]),
                            np.column_stack([phase.v, np.ones(1024)]))
    assert factor_errors(amp, shifted, acc)[1] == pytest.approx(factor_errors(amp, phase, acc)[1], abs=1e-14)


# ---- planning


def test_plan_smooth_takes_nufft_r1():
    k = make_kernel("fio-smooth", 1024)
    amp, phase = recover_kernel(k.access("entry"))
    plan = plan_transform(amp, phase)
    assert plan.path == "nufft" and plan.decision.r == 1


def test_plan_fio_takes_nufft_r2(fio):
    _, _, amp, phase = fio
    plan = plan_transform(amp, phase)
    assert plan.path == "nufft" and plan.decision.r == 2
    assert [d["applicable"] for d in plan.provenance["decisions"]] == [False, True]


def test_plan_smooth_low_rank_takes_butterfly():
    k = synthetic_phase("smooth-low-rank", 512, rank=8)
    amp, phase = recover_kernel(k.access("entry"))
    plan = plan_transform(amp, phase)
    assert plan.path == "bf" and plan.decision is None
    assert plan.provenance["reason"] == "no NUFFT lift applicable"


def test_force_paths(fio):
    _, _, amp, phase = fio
    assert plan_transform(amp, phase, PlanParams(force_path="bf")).path == "bf"
    k = synthetic_phase("smooth-low-rank", 512, rank=8)
    a2, p2 = recover_kernel(k.access("entry"))
    with pytest.raises(PlanningError):
        plan_transform(a2, p2, PlanParams(force_path="nufft"))
    with pytest.raises(ParameterError):
        PlanParams(force_path="fast")


def test_plan_invariants(fio):
    _, _, amp, phase = fio
    plan = plan_transform(amp, phase)
    assert plan.amp_terms == amp.rank
    with pytest.raises(ValueError):
        TransformPlan(amp, "bf")
    json.loads(plan.provenance_json())


def test_plan_shape_mismatch(fio):
    _, _, amp, _ = fio
    other = FIO1D(512).exact_phase_factor()
    with pytest.raises(ParameterError):
        plan_transform(amp, other)


def test_butterfly_failure_is_planning_error(fio):
    _, _, amp, phase = fio
    with pytest.raises(PlanningError):
        plan_transform(amp, phase, PlanParams(force_path="bf", r_eps=2))


# ---- apply


def test_zero_input(fio):
    _, _, amp, phase = fio
    for path in ("nufft", "bf"):
        plan = plan_transform(amp, phase, PlanParams(force_path=path))
        assert np.all(apply_transform(plan, np.zeros(1024)) == 0)


def test_size_mismatch(fio):
    _, _, amp, phase = fio
    plan = plan_transform(amp, phase)
    with pytest.raises(ValueError):
        apply_transform(plan, np.ones(1000))


def test_butterfly_path_accuracy(fio):
    k, acc, amp, phase = fio
    plan = plan_transform(amp, phase, PlanParams(r_eps=8, force_path="bf"))
    f = signal(1024)
    assert relative_error(apply_transform(plan, f), acc, f) <= 2.6e-5


def test_path_equivalence(fio):
    k, acc, amp, phase = fio
    f = signal(1024)
    rows = probe_indices(1024)
    gn = apply_transform(plan_transform(amp, phase, PlanParams(force_path="nufft")), f)
    gb = apply_transform(plan_transform(amp, phase, PlanParams(force_path="bf")), f)
    en = relative_error(gn, acc, f, rows=rows)
    eb = relative_error(gb, acc, f, rows=rows)
    mutual = np.linalg.norm(gn[rows] - gb[rows]) / np.linalg.norm(gb[rows])
    assert mutual <= 1e-5
    assert mutual <= 10 * max(en, eb)


@pytest.mark.parametrize("path", ["nufft", "bf"])
def test_linearity(fio, path):
    _, _, amp, phase = fio
    plan = plan_transform(amp, phase, PlanParams(force_path=path))
    rng = np.random.default_rng(7)
    for _ in range(3):
        f, g = signal(1024, rng.integers(1000)), signal(1024, rng.integers(1000))
        a, b = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        lhs = apply_transform(plan, a * f + b * g)
        rhs = a * apply_transform(plan, f) + b * apply_transform(plan, g)
        assert np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs) <= 1e-12


def test_hankel_butterfly_amplitude_split():
    k = Hankel(1024)
    acc = k.access("entry")
    amp, phase = recover_kernel(acc)
    assert amp.rank > 1
    plan = plan_transform(amp, phase, PlanParams(r_eps=8))
    assert plan.path == "bf"
    f = signal(1024)
    assert relative_error(apply_transform(plan, f), acc, f) <= 2.4e-5


def test_batch_apply(fio):
    _, _, amp, phase = fio
    plan = plan_transform(amp, phase)
    fs = np.column_stack([signal(1024, s) for s in range(2)])
    out = apply_transform(plan, fs)
    assert np.allclose(out[:, 1], apply_transform(plan, fs[:, 1]), atol=1e-10)


# ---- relative error


def test_relative_error_examples(fio):
    k, acc, _, _ = fio
    f = signal(1024)
    g = direct_apply(acc, f)
    assert relative_error(g, acc, f) == 0
    assert relative_error(1.01 * g, acc, f) == pytest.approx(0.01, abs=1e-12)
    rows = probe_indices(1024, 256, 0)
    assert relative_error(g[rows], acc, f, rows=rows) == 0


def test_relative_error_degenerate():
    acc = EntryOracle(16, lambda i, j: np.zeros((len(i), len(j)), dtype=complex))
    with pytest.raises(DegenerateReferenceError):
        relative_error(np.zeros(16), acc, np.ones(16))


def test_probe_stream_independent_of_recovery():
    from oscint._validation import check_random_state

    rec = np.sort(check_random_state(0).choice(1024, 256, replace=False))
    assert not np.array_equal(probe_indices(1024, 256, 0), rec)


# ---- estimator


def test_estimator_fit_transform():
    est = OscillatoryTransform("fio1d", n=512)
    with pytest.raises(NotFittedError):
        est.transform(np.ones(512))
    est.fit()
    assert est.path_ == "nufft" and est.n_features_in_ == 512
    f = signal(512)
    g = est.transform(f)
    rows = probe_indices(512)
    ref = est.kernel_.access("entry").rows(rows) @ f
    assert np.linalg.norm(g[rows] - ref) / np.linalg.norm(ref) <= 1e-9
    x = np.vstack([f, 2 * f])
    out = est.transform(x)
    assert out.shape == (2, 512) and np.allclose(out[1], 2 * g)
    with pytest.raises(ValueError):
        est.transform(np.ones((2, 100)))


def test_estimator_params_and_clone():
    est = OscillatoryTransform("hankel", n=256, r_eps=6, force_path="bf")
    p = clone(est).get_params()
    assert p["kernel"] == "hankel" and p["r_eps"] == 6 and p["force_path"] == "bf"


def test_estimator_errors_and_provenance():
    est = OscillatoryTransform("fio1d", n=512, r_eps=8, force_path="bf").fit()
    errs = est.errors()
    assert set(errs) == {"eps_amp", "eps_pha", "eps_K", "eps_path"}
    assert errs["eps_path"] <= 2.6e-5
    prov = json.loads(est.plan_.provenance_json())
    assert prov["kernel"] == "fio1d" and prov["seed"] == 0 and prov["path"] == "bf"


def test_estimator_accepts_access_and_kernel():
    k = FIO1D(256)
    a = OscillatoryTransform(k).fit()
    b = OscillatoryTransform(k.access("entry")).fit()
    f = signal(256)
    assert np.array_equal(a.transform(f), b.transform(f))


def test_estimator_scenarios():
    f = signal(512)
    outs = [OscillatoryTransform("fio1d", n=512, scenario=s).fit().transform(f) for s in ("entry", "matvec")]
    assert np.linalg.norm(outs[0] - outs[1]) / np.linalg.norm(outs[0]) <= 1e-10
    with pytest.raises(ParameterError):
        OscillatoryTransform("fio1d", n=512, scenario="psychic").fit()


def test_determinism():
    f = signal(512)
    runs = [OscillatoryTransform("hankel", n=512).fit() for _ in range(2)]
    assert runs[0].plan_.provenance_json() == runs[1].plan_.provenance_json()
    assert np.array_equal(runs[0].transform(f), runs[1].transform(f))
