import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irsnoma.channel_model import ChannelSet, QosSpec, build_lifted
from irsnoma.exceptions import DimensionMismatch, NoFeasibleCandidate
from irsnoma.noma_phase import lmi_terms
from irsnoma.quasi_degradation import lmi_qd_holds
from irsnoma.sdp import (INFEASIBLE, OPTIMAL, SdpProblem, SolverOptions, add_lmi_as_block, complexify,
                         extract_rank_one, is_rank_one, lifted_problem, lifted_solution,
                         principal_phases, realify, solve)

from conftest import crandn, random_channels
from sdp_cases import analytic_2x2, complementary_pair, library, trace_pinned


def _herm(rng, n):
    a = crandn(rng, n, n)
    return 0.5 * (a + a.conj().T)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6))
def test_realify_roundtrip_and_spectrum(seed, n):
    rng = np.random.default_rng(seed)
    H = _herm(rng, n)
    X = realify(H)
    assert np.allclose(X, X.T)
    assert np.allclose(complexify(X), H)
    ev = np.sort(np.linalg.eigvalsh(H))
    assert np.allclose(np.sort(np.linalg.eigvalsh(X)), np.sort(np.repeat(ev, 2)))
    G = _herm(rng, n)
    assert np.trace(H @ G).real == pytest.approx(0.5 * np.vdot(realify(H), realify(G)), abs=1e-10)


def test_realify_rejects_nonhermitian():
    with pytest.raises(ValueError):
        realify(np.array([[0, 1], [0, 0]], complex))


@pytest.mark.parametrize("name,problem,value", library(), ids=lambda x: x if isinstance(x, str) else "")
def test_library_problem(name, problem, value):
    sol = solve(problem)
    assert sol.status == OPTIMAL, sol.message
    assert sol.value == pytest.approx(value, rel=1e-6, abs=1e-6)
    assert sol.gap <= 1e-6 and sol.primal_residual <= 1e-7 and sol.dual_residual <= 1e-7
    for X in sol.blocks:
        assert np.linalg.eigvalsh(X)[0] >= -1e-7 * max(1.0, np.abs(X).max())


def test_analytic_offdiagonal_pair():
    p, v = analytic_2x2(0, 1, 0, True)
    sol = solve(p)
    assert v == 2.0 and sol.value == pytest.approx(2.0, rel=1e-6)
    assert np.allclose(sol.blocks[0], np.ones((2, 2)), atol=1e-5)


def test_inconsistent_equalities_are_infeasible():
    eqs = [([np.eye(2)], 1.0), ([2 * np.eye(2)], 3.0)]
    assert solve(SdpProblem([2], [np.eye(2)], eqs)).status == INFEASIBLE


def test_psd_infeasibility_detected():
    # Tr X = -1 has no PSD solution
    sol = solve(SdpProblem([3], [np.eye(3)], [([np.eye(3)], -1.0)], False))
    assert sol.status == INFEASIBLE and not sol.optimal


def test_no_equalities_is_refused():
    sol = solve(SdpProblem([2], [np.eye(2)], []))
    assert sol.status != OPTIMAL


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        SdpProblem([2], [np.eye(3)])
    with pytest.raises(DimensionMismatch):
        SdpProblem([2, 2], [np.eye(2)])
    with pytest.raises(ValueError):
        SdpProblem([2], [np.array([[0, 1], [0, 0]])], [([np.eye(2)], 1.0)])
    with pytest.raises(ValueError):
        SolverOptions(tol=0)


def test_certificate_downgrades_when_starved():
    p, _ = complementary_pair(np.random.default_rng(3), (6,), 8, 2)
    sol = solve(p, SolverOptions(max_iter=3))
    assert sol.status != OPTIMAL


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 7))
def test_trace_pinned_family(seed, n):
    p, v = trace_pinned(np.random.default_rng(seed), n)
    sol = solve(p)
    assert sol.optimal and sol.value == pytest.approx(v, rel=1e-6, abs=1e-7)


def test_lifted_problem_matches_cvxpy_oracle(rng):
    cp = pytest.importorskip("cvxpy")
    for n in (2, 3, 5):
        C = _herm(rng, n)
        sol = solve(lifted_problem(C, maximize=True))
        Q = lifted_solution(sol)
        X = cp.Variable((n, n), hermitian=True)
        prob = cp.Problem(cp.Maximize(cp.real(cp.trace(C @ X))), [X >> 0, cp.diag(X) == 1])
        prob.solve(solver=cp.CLARABEL)
        assert sol.optimal
        assert np.trace(C @ Q).real == pytest.approx(prob.value, rel=1e-5)
        assert np.allclose(np.diag(Q).real, 1.0)


def test_lmi_block_solution_satisfies_lmi(rng):
    ch = random_channels(rng, 2, 3)
    ch = ChannelSet(ch.G, 4 * ch.h_r1, ch.h_r2, 4 * ch.h_d1, ch.h_d2)
    data = build_lifted(ch)
    qos = QosSpec(1.0, 1.0, 1.0)
    problem = add_lmi_as_block(lifted_problem(data.upsilon2, maximize=True), lmi_terms(data, qos.r1_min))
    sol = solve(problem)
    assert sol.optimal
    Q = lifted_solution(sol)
    assert lmi_qd_holds(Q, data, qos)
    assert np.linalg.eigvalsh(sol.blocks[1])[0] >= -1e-7


def test_lmi_block_infeasible_when_strong_user_is_silent(rng):
    # chi1 = 0 with a square full-rank chi2 leaves only Q = 0, which breaks the unit diagonal
    n = 2
    G, h_r2 = crandn(rng, n, n + 1), crandn(rng, n)
    ch = ChannelSet(G, np.zeros(n), h_r2, np.zeros(n + 1), crandn(rng, n + 1))
    data = build_lifted(ch)
    problem = add_lmi_as_block(lifted_problem(data.upsilon2, True), lmi_terms(data, 1.0))
    assert solve(problem).status == INFEASIBLE


def test_lmi_block_shape_checks():
    base = lifted_problem(np.eye(3), True)
    with pytest.raises(DimensionMismatch):
        add_lmi_as_block(base, [(1.0, np.ones((2, 4)))])
    with pytest.raises(DimensionMismatch):
        add_lmi_as_block(base, [])


def test_rank_one_recovery(rng):
    for n in (1, 3, 6):
        theta = rng.uniform(0, 2 * np.pi, n)
        vt = np.append(np.exp(-1j * theta), 1.0)
        Q = np.outer(vt, vt.conj())
        assert is_rank_one(Q)
        assert np.allclose(np.exp(1j * principal_phases(Q)), np.exp(1j * theta))
        got, info = extract_rank_one(Q, lambda c: np.ones(len(c), bool), lambda c: np.zeros(len(c)))
        assert info["rank_one"] and info["candidates"] == 1
        assert np.allclose(np.exp(1j * got), np.exp(1j * theta))


def test_rejecting_everything_raises(rng):
    with pytest.raises(NoFeasibleCandidate):
        extract_rank_one(np.eye(4), lambda c: np.zeros(len(c), bool), lambda c: np.zeros(len(c)),
                         SolverOptions(randomization_count=50), rng)


def test_identity_gives_random_unit_modulus_candidates(rng):
    got, info = extract_rank_one(np.eye(2), lambda c: np.ones(len(c), bool), lambda c: c[:, 0],
                                 SolverOptions(randomization_count=200), rng)
    assert not info["rank_one"] and info["candidates"] == 201
    assert got.shape == (1,) and 0 <= got[0] < 2 * np.pi


def test_extraction_prefers_best_and_reports_rejected(rng):
    extra = np.array([[0.1], [0.2], [0.3]])
    accept = lambda c: c[:, 0] > 0.15
    got, info = extract_rank_one(np.eye(2), accept, lambda c: c[:, 0], SolverOptions(randomization_count=1),
                                 rng, extra=extra)
    assert got[0] > 0.15
    assert "best_rejected" in info and info["best_rejected"][0] <= 0.15
    got_max, _ = extract_rank_one(np.eye(2), accept, lambda c: c[:, 0], SolverOptions(randomization_count=1),
                                  np.random.default_rng(0), minimize=False, extra=extra)
    assert got_max[0] >= 0.3
