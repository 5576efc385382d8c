"""Surface phase design for zero-forcing: Dinkelbach outer loop, SCA inner loop.

The zero-forcing power is a single ratio ``W = G1 / G2`` of lifted traces with
``G1`` linear and ``G2 = Tr(Q Y1) Tr(Q Y2) - |Tr(Q R)|^2``.  For a parameter
``eta`` the inner loop decreases ``G1 - eta G2`` by linearizing ``G2`` and
solving the resulting linear SDP.  ``G2`` is not convex in general, so its
linearization is not a global under-estimator; instead each new iterate is
taken on the segment towards the SDP solution, where ``G`` is an explicit
quadratic and can be minimized exactly.  That keeps the true ``G`` monotone.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .beamforming import BeamformerPair, zf_beamformers
from .channel_model import LiftedMatrix, LiftedProblemData, PhaseVector, QosSpec, lift
from .exceptions import Infeasible, MaxOuterIter, OrthDegenerate, SolverFailure
from .sdp import (INFEASIBLE, OPTIMAL, SolverOptions, extract_rank_one, is_rank_one,
                  lifted_problem, lifted_solution, principal_phases, solve)
from .tolerances import TOL

logger = logging.getLogger(__name__)


@dataclass
class ZfOptions:
    max_outer: int = 30
    max_inner: int = 50
    inner_tol: float = 1e-7
    delta_rel: float = 1e-6
    raise_on_max_outer: bool = False
    sdp: SolverOptions = field(default_factory=SolverOptions)
    seed: int = 0

    def __post_init__(self):
        if self.max_outer < 1 or self.max_inner < 1 or self.inner_tol <= 0 or self.delta_rel <= 0:
            raise ValueError("iteration limits and tolerances must be positive")


@dataclass
class InnerRecord:
    surrogate: float
    g_value: float
    sdp_status: str
    step: float


@dataclass
class OuterRecord:
    eta: float
    g_star: float
    w_value: float
    inner: list = field(default_factory=list)


@dataclass
class ZfIterTrace:
    outer: list = field(default_factory=list)
    converged: bool = False
    iterate_phases: list = field(default_factory=list)

    @property
    def etas(self):
        return np.array([r.eta for r in self.outer])

    @property
    def g_stars(self):
        return np.array([r.g_star for r in self.outer])


@dataclass
class ZfResult:
    theta: PhaseVector
    beamformers: BeamformerPair
    trace: ZfIterTrace
    relaxed_Q: np.ndarray
    relaxed_w: float
    power: float
    extraction: dict


def _qmat(Q):
    return Q.Q if isinstance(Q, LiftedMatrix) else np.asarray(Q, complex)


def g_split(Q, data: LiftedProblemData, qos: QosSpec, eta: float = 0.0):
    """``(G1, G2, G1 - eta G2)`` at ``Q``."""
    t1, t2, tqr = data.traces(_qmat(Q))
    g1 = qos.sigma2 * (qos.r1_min * t2 + qos.r2_min * t1)
    g2 = t1 * t2 - abs(tqr) ** 2
    return float(g1), float(g2), float(g1 - eta * g2)


def w_objective(Q, data: LiftedProblemData, qos: QosSpec) -> float:
    """Zero-forcing power written as a single ratio of lifted traces."""
    g1, g2, _ = g_split(Q, data, qos)
    t1, t2, _ = data.traces(_qmat(Q))
    if g2 <= TOL.zero_norm * max(t1 * t2, 1.0) or g2 <= 0.0:
        raise OrthDegenerate(f"G2 = {g2:.3e}: composite channels are collinear")
    return g1 / g2


def g2_gradient(Q, data: LiftedProblemData) -> np.ndarray:
    """Hermitian gradient of ``G2`` w.r.t. the real inner product ``Re Tr(X^H dQ)``."""
    t1, t2, tqr = data.traces(_qmat(Q))
    cross = tqr * data.cross_R.conj().T
    grad = data.upsilon1 * t2 + data.upsilon2 * t1 - (cross + cross.conj().T)
    return 0.5 * (grad + grad.conj().T)


def g2_linearized(Q, Q_ref, data: LiftedProblemData) -> float:
    """First-order model of ``G2`` around ``Q_ref`` evaluated at ``Q``."""
    _, g2_ref, _ = g_split(Q_ref, data, _unit_qos())
    grad = g2_gradient(Q_ref, data)
    return float(g2_ref + np.real(np.vdot(grad, _qmat(Q) - _qmat(Q_ref))))


def _unit_qos():
    return QosSpec(1.0, 1.0, 1.0)


def _normalized(mat):
    scale = np.linalg.norm(mat)
    return mat / scale if scale > 0 else mat


def _minimize_sdp(C, opts: SolverOptions):
    sol = solve(lifted_problem(-_normalized(C), maximize=True), opts)
    if sol.status == INFEASIBLE:
        raise Infeasible("relaxed problem is infeasible", {"message": sol.message})
    if sol.status != OPTIMAL:
        raise SolverFailure(f"SCA step ended with status {sol.status}: {sol.message}", sol.status)
    return lifted_solution(sol)


def _segment_quadratic(Q, D, data, qos, eta):
    """Coefficients of ``G(Q + g D) = c0 + c1 g + c2 g^2``."""
    t1, t2, tq = data.traces(Q)
    d1, d2, dq = data.traces(D)
    s2, r1, r2 = qos.sigma2, qos.r1_min, qos.r2_min
    g1_lin = s2 * (r1 * d2 + r2 * d1)
    g2_lin = t1 * d2 + t2 * d1 - 2 * np.real(np.conj(tq) * dq)
    g2_quad = d1 * d2 - abs(dq) ** 2
    _, _, c0 = g_split(Q, data, qos, eta)
    return c0, g1_lin - eta * g2_lin, -eta * g2_quad


def _minimize_quadratic_unit(c0, c1, c2):
    cands = [0.0, 1.0]
    if c2 > 0:
        g = -c1 / (2 * c2)
        if 0.0 < g < 1.0:
            cands.append(g)
    vals = [c0 + c1 * g + c2 * g * g for g in cands]
    k = int(np.argmin(vals))
    return cands[k], vals[k]


def sca_solve(eta: float, Q_init, data: LiftedProblemData, qos: QosSpec,
              opts: ZfOptions | None = None, record: OuterRecord | None = None,
              phases: list | None = None):
    """Decrease ``G1 - eta G2`` from ``Q_init`` by successive linear SDPs.

    Returns the final relaxed lifted matrix.  True ``G`` is nonincreasing
    along the iterates.
    """
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    opts = opts or ZfOptions()
    Q = _qmat(Q_init)
    s2, r1, r2 = qos.sigma2, qos.r1_min, qos.r2_min
    g1_mat = s2 * (r1 * data.upsilon2 + r2 * data.upsilon1)
    _, _, g = g_split(Q, data, qos, eta)
    for _ in range(opts.max_inner):
        C = g1_mat - eta * g2_gradient(Q, data) if eta > 0 else g1_mat
        Qhat = _minimize_sdp(C, opts.sdp)
        D = Qhat - Q
        g1_hat, _, _ = g_split(Qhat, data, qos)
        surrogate = g1_hat - eta * g2_linearized(Qhat, Q, data) if eta > 0 else g1_hat
        c0, c1, c2 = _segment_quadratic(Q, D, data, qos, eta)
        step, g_new = _minimize_quadratic_unit(c0, c1, c2)
        scale = g_split(Q, data, qos)[0]
        predicted = -c1
        if step > 0.0:
            Q = 0.5 * (Q + step * D + (Q + step * D).conj().T)
            _, _, g_new = g_split(Q, data, qos, eta)
        if record is not None:
            record.inner.append(InnerRecord(float(surrogate), float(g_new), OPTIMAL, float(step)))
        if phases is not None and step > 0.0:
            phases.append(principal_phases(Q))
        done = step == 0.0 or predicted <= opts.inner_tol * scale or abs(g - g_new) <= opts.inner_tol * 1e-3 * scale
        g = g_new
        if done:
            break
    return Q


def _zf_candidates(data: LiftedProblemData, qos: QosSpec, thetas):
    Vt = np.vstack([np.exp(-1j * thetas.T), np.ones((1, thetas.shape[0]))])
    H1 = data.chi1 @ Vt
    H2 = data.chi2 @ Vt
    n1 = np.sum(np.abs(H1) ** 2, axis=0)
    n2 = np.sum(np.abs(H2) ** 2, axis=0)
    inner = np.sum(H1.conj() * H2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        sin2 = 1.0 - np.clip(np.abs(inner) ** 2 / (n1 * n2), 0.0, 1.0)
        power = qos.sigma2 / sin2 * (qos.r1_min / n1 + qos.r2_min / n2)
    ok = (n1 > TOL.zero_norm) & (n2 > TOL.zero_norm) & (sin2 > TOL.collinear_sin2)
    return ok, np.where(ok, power, np.inf)


def zf_power_batch(data: LiftedProblemData, qos: QosSpec, thetas):
    return _zf_candidates(data, qos, thetas)[1]


def optimize_phases_zfbf(data: LiftedProblemData, qos: QosSpec | None = None,
                         opts: ZfOptions | None = None) -> ZfResult:
    """Design surface phases and zero-forcing beamformers for one realization.

    The outer loop stops once ``|G*(eta)|`` falls below ``delta_rel`` times the
    current ``G1``; the parameter then equals the relaxed power ratio.
    """
    qos = qos or data.qos
    if qos is None:
        raise ValueError("QoS targets are required")
    opts = opts or ZfOptions()
    Q = lift(PhaseVector(np.zeros(data.size - 1))).Q
    trace = ZfIterTrace()
    trace.iterate_phases.append(np.zeros(data.size - 1))
    eta = 0.0
    for _ in range(opts.max_outer):
        record = OuterRecord(eta, float("nan"), float("nan"))
        Q = sca_solve(eta, Q, data, qos, opts, record, trace.iterate_phases)
        g1, g2, g_star = g_split(Q, data, qos, eta)
        record.g_star = g_star
        record.w_value = g1 / g2 if g2 > 0 else float("inf")
        trace.outer.append(record)
        if abs(g_star) <= opts.delta_rel * g1:
            trace.converged = True
            break
        if g2 <= 0:
            raise OrthDegenerate("G2 vanished on the relaxed iterate")
        eta = g1 / g2
    if not trace.converged:
        msg = f"Dinkelbach loop did not reach |G*| <= delta in {opts.max_outer} iterations"
        if opts.raise_on_max_outer:
            raise MaxOuterIter(msg)
        logger.warning(msg)
    rng = np.random.default_rng(np.random.SeedSequence([opts.seed, 2]))
    theta, info = extract_rank_one(
        Q,
        accept=lambda th: _zf_candidates(data, qos, th)[0],
        score=lambda th: zf_power_batch(data, qos, th),
        opts=opts.sdp,
        rng=rng,
        extra=np.array(trace.iterate_phases),
    )
    phases = PhaseVector(theta)
    h1, h2 = data.composite(phases)
    pair = zf_beamformers(h1, h2, qos)
    g1, g2, _ = g_split(Q, data, qos)
    return ZfResult(
        theta=phases,
        beamformers=pair,
        trace=trace,
        relaxed_Q=Q,
        relaxed_w=g1 / g2 if g2 > 0 else float("inf"),
        power=pair.power,
        extraction=info,
    )
