import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irsnoma.channel_model import (ChannelSet, LiftedProblemData, QosSpec, ScenarioConfig,
                                   build_lifted, lift, random_phases)
from irsnoma.exceptions import ZeroChannel
from irsnoma.noma_phase import qd_batch
from irsnoma.quasi_degradation import (RegionGrid, improved_qd, lmi_qd_holds, orthogonality_feasible,
                                       qd_holds, qd_lhs, region_map, write_region_csv)
from irsnoma.tolerances import TOL

from conftest import crandn, random_channels


def _collinear(ratio):
    h1 = np.array([1.0, 0.0])
    return h1, h1 / np.sqrt(ratio)


def test_qd_collinear_holds(unit_qos):
    v = qd_holds(*_collinear(4.0), unit_qos)
    assert v.holds and v.lhs == pytest.approx(1.0) and v.rhs == pytest.approx(4.0)


def test_qd_collinear_fails(unit_qos):
    v = qd_holds(*_collinear(0.5), unit_qos)
    assert not v.holds and v.lhs == pytest.approx(1.0)


def test_qd_orthogonal_fails(unit_qos):
    v = qd_holds([3.0, 0.0], [0.0, 1.0], unit_qos)
    assert not v.holds and np.isinf(v.lhs)


def test_qd_zero_channel(unit_qos):
    with pytest.raises(ZeroChannel):
        qd_holds([0, 0], [1, 0], unit_qos)


def test_qd_same_channel_boundary(unit_qos):
    # user 2 co-located with identical fading: LHS = 1 + r1 - r1 = 1 = ratio
    h = np.array([1 + 1j, 2 - 0.5j])
    v = qd_holds(h, h, QosSpec(2.5, 0.7, 1.0))
    assert v.holds and v.lhs == pytest.approx(1.0)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_verdict_invariant(seed):
    rng = np.random.default_rng(seed)
    h1, h2 = 3 * crandn(rng, 3), crandn(rng, 3)
    v = qd_holds(h1, h2, QosSpec(*rng.uniform(0.1, 3, 2), 1.0))
    assert v.holds == (v.margin >= -TOL.qd_margin)
    assert v.margin == pytest.approx(v.rhs - v.lhs)


def test_lhs_strictly_decreasing():
    rng = np.random.default_rng(0)
    r1, r2 = rng.uniform(0.01, 10, 1000), rng.uniform(0.01, 10, 1000)
    c = rng.uniform(1e-3, 1 - 1e-3, 1000)
    h = 1e-6
    for a, b, x in zip(r1, r2, c):
        assert qd_lhs(x + h, a, b) < qd_lhs(x - h, a, b)


def test_lhs_at_least_one():
    # the minimum over c is attained at c = 1, where the LHS equals 1
    rng = np.random.default_rng(1)
    for _ in range(1000):
        r1, r2, c = rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(1e-6, 1)
        assert qd_lhs(c, r1, r2) >= 1 - 1e-12


def _data_from(u1, u2, chi1=None, chi2=None):
    n = u1.shape[0]
    chi1 = np.zeros((1, n)) if chi1 is None else chi1
    chi2 = np.zeros((1, n)) if chi2 is None else chi2
    return LiftedProblemData(u1, u2, np.zeros((n, n), complex), chi1, chi2)


def test_improved_equal_matrices(rng):
    A = crandn(rng, 4, 4)
    U = A.conj().T @ A
    holds, lam = improved_qd(_data_from(U, U))
    assert holds and lam == 0.0


def test_improved_doubled(rng):
    A = crandn(rng, 5, 5)
    U = A.conj().T @ A + np.eye(5)
    holds, lam = improved_qd(_data_from(2 * U, U))
    assert holds and lam > 0


def test_improved_fails_when_dominated(rng):
    A = crandn(rng, 4, 4)
    U = A.conj().T @ A + np.eye(4)
    holds, lam = improved_qd(_data_from(U, 2 * U))
    assert not holds and lam < 0


def test_improved_is_implied_by_sampled_qd():
    """If any sampled phase makes the channels quasi-degraded, the eigenvalue test passes."""
    rng = np.random.default_rng(2)
    seen = 0
    for _ in range(40):
        ch = random_channels(rng, 2, 3)
        ch = ChannelSet(ch.G, ch.h_r1 * rng.uniform(0.2, 3), ch.h_r2, ch.h_d1 * rng.uniform(0.2, 3), ch.h_d2)
        qos = QosSpec(*rng.uniform(0.2, 2, 2), 1.0)
        data = build_lifted(ch, qos)
        thetas = rng.uniform(0, 2 * np.pi, (10_000, 3))
        if qd_batch(data, qos, thetas).any():
            seen += 1
            assert improved_qd(data)[0]
    assert seen > 5


def test_lmi_without_second_user(rng):
    ch = random_channels(rng, 3, 4)
    data = build_lifted(ChannelSet(ch.G, ch.h_r1, np.zeros(4), ch.h_d1, np.zeros(3)))
    assert lmi_qd_holds(lift(random_phases(4, rng)), data, QosSpec(5.0, 1.0, 1.0))


def test_lmi_fails_for_huge_target(rng):
    ch = random_channels(rng, 3, 4)
    data = build_lifted(ch)
    assert not lmi_qd_holds(lift(random_phases(4, rng)), data, QosSpec(1e9, 1.0, 1.0))


def test_lmi_soundness_on_collinear_family(rng):
    """Rank-one LMI feasibility implies quasi-degradation of the composite channels."""
    hits = 0
    for _ in range(300):
        m, n = 2, 3
        chi1 = crandn(rng, m, n + 1)
        c = rng.uniform(0.05, 1.2) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        chi2 = c * chi1
        data = LiftedProblemData(chi1.conj().T @ chi1, chi2.conj().T @ chi2, chi1.conj().T @ chi2, chi1, chi2)
        qos = QosSpec(rng.uniform(0.1, 3), rng.uniform(0.1, 3), 1.0)
        th = random_phases(n, rng)
        if lmi_qd_holds(lift(th), data, qos):
            hits += 1
            h1, h2 = data.composite(th)
            assert qd_holds(h1, h2, qos).holds
    assert hits > 20


def test_lmi_soundness_random_instances(rng):
    for _ in range(300):
        ch = random_channels(rng, 2, 3)
        qos = QosSpec(*rng.uniform(0.1, 2, 2), 1.0)
        data = build_lifted(ch, qos)
        th = random_phases(3, rng)
        if lmi_qd_holds(lift(th), data, qos):
            assert qd_holds(*data.composite(th), qos).holds


def test_lmi_on_rank_one_needs_collinear_channels(rng):
    """On a lifted phase vector the LMI reads h1 h1^H >= (1 + r1) h2 h2^H, which
    generic (non-collinear) channels never satisfy."""
    passed = 0
    for _ in range(500):
        data = build_lifted(random_channels(rng, 3, 5))
        passed += lmi_qd_holds(lift(random_phases(5, rng)), data, QosSpec(1.0, 1.0, 1.0))
    assert passed == 0


def _orthogonal_instance(rng, m=3, n=4):
    d1 = crandn(rng, m)
    d2 = crandn(rng, m)
    d2 -= np.vdot(d1, d2) / np.vdot(d1, d1) * d1
    return ChannelSet(crandn(rng, n, m), np.zeros(n), np.zeros(n), d1, d2)


def test_orthogonality_trivial_case(rng):
    ch = _orthogonal_instance(rng)
    data = build_lifted(ch)
    assert orthogonality_feasible(data)
    for _ in range(100):
        h1, h2 = data.composite(random_phases(4, rng))
        assert abs(np.vdot(h1, h2)) <= 1e-10


def test_orthogonality_fails_with_direct_overlap(rng):
    ch = random_channels(rng, 3, 4)
    assert not orthogonality_feasible(build_lifted(ch))


def test_orthogonality_rules_out_qd(rng):
    ch = _orthogonal_instance(rng)
    data = build_lifted(ch)
    qos = QosSpec(1.0, 1.0, 1.0)
    for _ in range(100):
        assert not qd_holds(*data.composite(random_phases(4, rng)), qos).holds


def test_strong_reflection_makes_qd_hold(rng):
    """A very strong user-1 reflected path yields quasi-degradation whenever the
    channels are not nearly orthogonal."""
    qos = QosSpec(1.0, 1.0, 1.0)
    checked = 0
    for _ in range(200):
        ch = random_channels(rng, 3, 4)
        th = random_phases(4, rng)
        strong = ChannelSet(ch.G, 1e3 * ch.h_r1, ch.h_r2, ch.h_d1, ch.h_d2)
        data = build_lifted(strong)
        h1, h2 = data.composite(th)
        c2 = abs(np.vdot(h1, h2)) ** 2 / (np.vdot(h1, h1).real * np.vdot(h2, h2).real)
        if c2 >= 0.01:
            checked += 1
            assert qd_holds(h1, h2, qos).holds
    assert checked > 50


def test_region_map_empty_grid():
    assert region_map(ScenarioConfig(), RegionGrid(nx=0, ny=0)) == []


def test_region_map_improved_contains_no_irs():
    cfg = ScenarioConfig(irs_pos=(5, 5), user1_pos=(5, 5.5), num_elements=4)
    grid = RegionGrid(nx=7, ny=7)
    for seed in range(4):
        c = cfg.with_(seed=seed)
        base = region_map(c, grid, "no_irs")
        imp = region_map(c, grid, "improved")
        for a, b in zip(base, imp):
            assert (a.x, a.y) == (b.x, b.y)
            assert b.holds or not a.holds


def test_region_map_unknown_mode():
    with pytest.raises(ValueError):
        region_map(ScenarioConfig(), RegionGrid(nx=2, ny=2), "other")


def test_region_csv(tmp_path):
    cells = region_map(ScenarioConfig(num_elements=2), RegionGrid(nx=3, ny=2), "no_irs")
    path = tmp_path / "r.csv"
    write_region_csv(cells, path)
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "x,y,holds,margin" and len(lines) == 7
