import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irsnoma.beamforming import noma_power
from irsnoma.channel_model import ChannelSet, PhaseVector, QosSpec, build_lifted, lift, random_phases
from irsnoma.exceptions import Infeasible, NoFeasibleCandidate
from irsnoma.noma_phase import (PhaseOptions, bound_objective, exact_gradient, exact_objective,
                                f_objective, minimize_ratio_sum, noma_power_batch, optimize_phases_noma,
                                qd_batch, qd_margin_and_gradient, qd_margin_batch, restore_feasibility, sdr_step, update_y)
from irsnoma.quasi_degradation import qd_holds
from irsnoma.sdp import SolverOptions

from conftest import crandn, random_channels


def _direct_only(h1, h2, n=1):
    m = len(h1)
    return build_lifted(ChannelSet(np.zeros((n, m)), np.zeros(n), np.zeros(n), np.asarray(h1, complex),
                                   np.asarray(h2, complex)))


def _strong_user1(rng, m=2, n=3, boost=3.0):
    ch = random_channels(rng, m, n)
    return build_lifted(ChannelSet(ch.G, boost * ch.h_r1, ch.h_r2, boost * ch.h_d1, ch.h_d2))


def _random_psd(rng, n):
    A = crandn(rng, n, n)
    Q = A @ A.conj().T
    d = np.sqrt(np.real(np.diag(Q)))
    return Q / np.outer(d, d)


def test_bound_on_unit_example(unit_qos):
    data = _direct_only([1.0, 0.0], [1.0, 0.0])
    Q = lift(PhaseVector([0.3])).Q
    # weights sigma^2 r1 (1 + r2) = 2 and sigma^2 r2 = 1 over unit gains
    assert bound_objective(Q, data, unit_qos) == pytest.approx(3.0)


def test_update_y_example():
    data = _direct_only([np.sqrt(2), 0.0], [1.0, 0.0])
    qos = QosSpec(2.0, 2.0, 1.0)
    y1, y2 = update_y(lift(PhaseVector([0.0])).Q, data, qos)
    assert y1 == pytest.approx(np.sqrt(6) / 2) and y2 == pytest.approx(np.sqrt(2))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_surrogate_identities(seed):
    rng = np.random.default_rng(seed)
    data = _strong_user1(rng)
    qos = QosSpec(*rng.uniform(0.2, 3, 2), rng.uniform(0.2, 2))
    Q = _random_psd(rng, data.size)
    y = update_y(Q, data, qos)
    f_star = f_objective(Q, y, data, qos)
    assert f_star == pytest.approx(-bound_objective(Q, data, qos), rel=1e-10)
    # y* minimizes the surrogate in y
    for _ in range(10):
        y_other = (y[0] * rng.uniform(0.2, 3), y[1] * rng.uniform(0.2, 3))
        assert f_objective(Q, y_other, data, qos) >= f_star - 1e-12 * abs(f_star)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_exact_below_bound_and_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    data = _strong_user1(rng)
    qos = QosSpec(*rng.uniform(0.2, 3, 2), rng.uniform(0.2, 2))
    Q = _random_psd(rng, data.size)
    assert exact_objective(Q, data, qos) <= bound_objective(Q, data, qos) * (1 + 1e-12)
    theta = random_phases(data.size - 1, rng)
    h1, h2 = data.composite(theta)
    exact = exact_objective(lift(theta).Q, data, qos)
    assert exact == pytest.approx(noma_power(h1, h2, qos), rel=1e-10)
    assert noma_power_batch(data, qos, theta.theta[None, :])[0] == pytest.approx(exact, rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(0.05, 0.95))
def test_exact_power_convex_on_psd_cone(seed, t):
    rng = np.random.default_rng(seed)
    data = _strong_user1(rng)
    qos = QosSpec(*rng.uniform(0.2, 3, 2), rng.uniform(0.2, 2))
    A, B = _random_psd(rng, data.size), _random_psd(rng, data.size)
    mid = exact_objective(t * A + (1 - t) * B, data, qos)
    chord = t * exact_objective(A, data, qos) + (1 - t) * exact_objective(B, data, qos)
    assert mid <= chord * (1 + 1e-10)


def test_exact_gradient_finite_difference(rng):
    qos = QosSpec(1.5, 0.7, 0.4)
    for _ in range(10):
        data = _strong_user1(rng)
        Q = _random_psd(rng, data.size)
        D = crandn(rng, data.size, data.size)
        D = 0.5 * (D + D.conj().T)
        grad = exact_gradient(Q, data, qos)
        h = 1e-6
        fd = (exact_objective(Q + h * D, data, qos) - exact_objective(Q - h * D, data, qos)) / (2 * h)
        assert np.real(np.vdot(grad, D)) == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_sdr_step_returns_unit_diagonal(rng, unit_qos):
    data = _strong_user1(rng)
    lm = sdr_step(0.5, 1.0, data, unit_qos, use_lmi=False)
    assert np.allclose(np.diag(lm.Q).real, 1.0)
    assert np.linalg.eigvalsh(lm.Q)[0] >= -1e-7
    with pytest.raises(ValueError):
        sdr_step(np.nan, 1.0, data, unit_qos)


def test_strict_lmi_infeasible_toy(rng, unit_qos):
    # weak user's lifted channel is square and invertible while the strong
    # user's is rank one, so no unit-diagonal Q satisfies the LMI
    n, m = 2, 3
    G = crandn(rng, n, m)
    ch = ChannelSet(G, np.zeros(n), crandn(rng, n), crandn(rng, m), crandn(rng, m))
    data = build_lifted(ch)
    assert np.linalg.matrix_rank(data.chi2) == 3 and np.linalg.matrix_rank(data.chi1) == 1
    with pytest.raises(Infeasible):
        optimize_phases_noma(data, unit_qos, PhaseOptions(lmi="strict"))
    # the default mode drops the constraint and leaves feasibility to the extraction
    try:
        res = optimize_phases_noma(data, unit_qos)
        assert not res.trace.lmi_used
    except NoFeasibleCandidate:
        pass


def test_ratio_sum_trace_monotone(rng):
    qos = QosSpec(1.0, 1.0, 0.5)
    for _ in range(8):
        data = _strong_user1(rng, m=3, n=5)
        a = (qos.sigma2 * qos.r1_min * (1 + qos.r2_min), qos.sigma2 * qos.r2_min)
        _, trace = minimize_ratio_sum(a, data, qos, PhaseOptions(lmi="off"))
        f = np.array(trace.f_values)
        assert np.all(np.diff(f) >= -1e-9 * np.abs(f).max())
        assert np.allclose(f, -np.array(trace.bound_values))
        assert trace.converged


def test_optimizer_outputs(rng):
    qos = QosSpec(1.0, 1.0, 0.5)
    done = 0
    for _ in range(12):
        data = _strong_user1(rng, m=3, n=4)
        try:
            res = optimize_phases_noma(data, qos)
        except NoFeasibleCandidate:
            continue
        done += 1
        h1, h2 = data.composite(res.theta)
        assert qd_holds(h1, h2, qos).holds
        assert qd_batch(data, qos, res.theta.theta[None, :])[0]
        assert res.power == pytest.approx(noma_power(h1, h2, qos), rel=1e-10)
        f = np.array(res.trace.f_values)
        assert np.all(np.diff(f) >= -1e-9 * np.abs(f).max())
        ex = np.array(res.trace.exact_values)
        if len(ex) > 1:
            assert np.all(np.diff(ex) <= 1e-9 * ex.max())
        assert np.all((res.theta.theta >= 0) & (res.theta.theta < 2 * np.pi))
    assert done >= 6


def test_unconstrained_relaxation_lower_bounds_extraction(rng):
    qos = QosSpec(1.0, 1.0, 0.5)
    for _ in range(6):
        data = _strong_user1(rng, m=3, n=4)
        try:
            res = optimize_phases_noma(data, qos, PhaseOptions(lmi="off"))
        except NoFeasibleCandidate:
            continue
        assert exact_objective(res.relaxed_Q, data, qos) <= res.power * (1 + 1e-6)


def test_auto_mode_survives_lmi_solver_trouble():
    # the constrained relaxation is numerically unsolvable on this draw
    rng = np.random.default_rng(1)
    qos = QosSpec(1.0, 1.0, 0.5)
    for _ in range(3):
        data = _strong_user1(rng, m=3, n=4, boost=rng.uniform(1.5, 4))
    res = optimize_phases_noma(data, qos)
    assert not res.trace.lmi_used
    assert qd_holds(*data.composite(res.theta), qos).holds


def test_optimizer_is_seeded(rng):
    qos = QosSpec(1.0, 1.0, 0.5)
    data = _strong_user1(rng, m=2, n=4)
    opts = PhaseOptions(sdp=SolverOptions(randomization_count=200), seed=7)
    a = optimize_phases_noma(data, qos, opts)
    b = optimize_phases_noma(data, qos, opts)
    assert np.array_equal(a.theta.theta, b.theta.theta)


def test_options_validation():
    with pytest.raises(ValueError):
        PhaseOptions(lmi="maybe")
    with pytest.raises(ValueError):
        PhaseOptions(max_outer=0)


def test_sdr_step_infeasible_without_strong_user(rng, unit_qos):
    # chi1 = 0 turns the LMI into -2 chi2 Q chi2^H >= 0, impossible for a square invertible chi2
    n, m = 2, 3
    ch = ChannelSet(crandn(rng, n, m), np.zeros(n), crandn(rng, n), np.zeros(m), crandn(rng, m))
    data = build_lifted(ch)
    with pytest.raises(Infeasible):
        sdr_step(1.0, 1.0, data, unit_qos, use_lmi=True)
    assert np.allclose(np.diag(sdr_step(1.0, 1.0, data, unit_qos, use_lmi=False).Q), 1.0)


def test_margin_batch_agrees_with_scalar_test(rng):
    qos = QosSpec(1.0, 2.0, 0.5)
    data = _strong_user1(rng, m=2, n=3, boost=1.5)
    thetas = rng.uniform(0, 2 * np.pi, (200, 3))
    margins = qd_margin_batch(data, qos, thetas)
    for th, m in zip(thetas, margins):
        verdict = qd_holds(*data.composite(PhaseVector(th)), qos)
        assert (m >= 0) == (verdict.margin >= 0)
        assert m == pytest.approx(verdict.margin, rel=1e-9, abs=1e-12)


def test_margin_gradient_finite_difference(rng):
    qos = QosSpec(1.0, 2.0, 0.5)
    data = _strong_user1(rng, m=3, n=4, boost=1.5)
    h = 1e-6
    for _ in range(5):
        th = rng.uniform(0, 2 * np.pi, 4)
        m, g = qd_margin_and_gradient(data, qos, th)
        assert m == pytest.approx(qd_margin_batch(data, qos, th[None, :])[0], rel=1e-10, abs=1e-12)
        fd = np.array([(qd_margin_batch(data, qos, (th + h * e)[None, :])[0]
                        - qd_margin_batch(data, qos, (th - h * e)[None, :])[0]) / (2 * h) for e in np.eye(4)])
        assert np.allclose(g, fd, rtol=1e-5, atol=1e-6 * np.abs(fd).max())


def test_restore_feasibility_finds_quasi_degraded_point(rng):
    qos = QosSpec(1.0, 1.0, 0.5)
    hits = 0
    for _ in range(20):
        data = _strong_user1(rng, m=2, n=2, boost=1.2)
        grid = np.stack(np.meshgrid(*[np.linspace(0, 2 * np.pi, 64, endpoint=False)] * 2), -1).reshape(-1, 2)
        ok = qd_batch(data, qos, grid)
        if ok.all() or not ok.any():
            continue
        start = grid[np.argmin(np.where(ok, np.inf, qd_margin_batch(data, qos, grid)))]
        found = restore_feasibility(data, qos, [start])
        if found is not None:
            hits += 1
            assert qd_batch(data, qos, found[None, :], 0.0)[0]
    assert hits > 0


def test_restoration_used_when_candidates_all_fail():
    # an N = 1 draw whose relaxed candidates all miss the quasi-degraded arc
    from irsnoma.channel_model import ScenarioConfig, synthesize_channels
    cfg = ScenarioConfig(num_antennas=2, num_elements=1)
    qos = QosSpec.from_config(cfg)
    data = build_lifted(synthesize_channels(cfg, 40), qos)
    res = optimize_phases_noma(data, qos)
    assert res.extraction.get("restored")
    assert qd_holds(*data.composite(res.theta), qos).holds
    grid = np.linspace(0, 2 * np.pi, 4096, endpoint=False)[:, None]
    ok = qd_batch(data, qos, grid)
    assert res.power <= noma_power_batch(data, qos, grid)[ok].min() * (1 + 1e-4)
