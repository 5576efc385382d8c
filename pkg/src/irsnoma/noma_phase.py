"""Surface phase design for NOMA: quadratic transform + semidefinite relaxation.

The transmit power of the closed-form NOMA beamformers is upper-bounded by the
two-ratio expression :func:`bound_objective`.  Each outer step fixes the
auxiliary weights ``y`` and solves the relaxed linear SDP
``max y1^2 Tr(Q Y1) + y2^2 Tr(Q Y2)``; the weights are then refreshed in
closed form.  Because the refreshed ``y`` minimizes ``f(Q, .)``, the plain
alternation is a conditional-gradient step on the (convex) bound and can
overshoot, so the new iterate is taken on the segment towards the SDP solution
with an exact line search.  That keeps ``f(Q_t, y_t) = -bound(Q_t)``
nondecreasing.

The lifted exact power ``a1 / D1(Q) + a2 / Tr(Q Y2)`` with
``D1 = (1 + r2) Tr(Q Y1) - r2 |Tr(Q R)|^2 / Tr(Q Y2)`` is itself convex on the
PSD cone (``D1`` is concave, being linear minus a quadratic-over-linear term),
so an optional second stage continues the same conditional-gradient iteration
on it, starting from the bound minimizer.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .beamforming import BeamformerPair, noma_beamformers
from .channel_model import LiftedMatrix, LiftedProblemData, PhaseVector, QosSpec, lift
from .exceptions import DegenerateTrace, Infeasible, NoFeasibleCandidate, SolverFailure
from .quasi_degradation import improved_qd
from .sdp import (INFEASIBLE, OPTIMAL, SolverOptions, add_lmi_as_block, extract_rank_one,
                  is_rank_one, lifted_problem, lifted_solution, principal_phases, solve)
from .tolerances import TOL

logger = logging.getLogger(__name__)

LMI_MODES = ("auto", "strict", "off")


@dataclass
class PhaseOptions:
    """Outer-loop settings shared by the ratio-minimizing phase designs.

    ``lmi`` controls the convex quasi-degradation constraint inside the SDR:
    ``"strict"`` raises :class:`Infeasible` when it excludes every lifted
    matrix, ``"auto"`` drops it when it makes the relaxation infeasible or
    numerically unsolvable (quasi-degradation is then enforced only on the
    extracted phases), ``"off"`` never adds it.
    """

    max_outer: int = 50
    outer_tol: float = 1e-6
    lmi: str = "auto"
    refine_exact: bool = True
    max_refine: int = 100
    refine_tol: float = 1e-7
    restarts: int = 8
    sdp: SolverOptions = field(default_factory=SolverOptions)
    seed: int = 0

    def __post_init__(self):
        if self.lmi not in LMI_MODES:
            raise ValueError(f"lmi must be one of {LMI_MODES}")
        if self.restarts < 0:
            raise ValueError("restarts must be nonnegative")
        if self.max_outer < 1 or self.max_refine < 0 or self.outer_tol <= 0 or self.refine_tol <= 0:
            raise ValueError("iteration limits and tolerances must be positive")


@dataclass
class NomaIterRecord:
    y1: float
    y2: float
    f_value: float
    bound_value: float
    sdp_status: str
    step: float
    fw_gap: float


@dataclass
class RefineRecord:
    exact_value: float
    step: float
    fw_gap: float


@dataclass
class NomaIterTrace:
    records: list = field(default_factory=list)
    converged: bool = False
    lmi_used: bool = True
    refine: list = field(default_factory=list)
    refine_converged: bool = False
    iterate_phases: list = field(default_factory=list)

    @property
    def exact_values(self):
        return np.array([r.exact_value for r in self.refine])

    @property
    def f_values(self):
        return np.array([r.f_value for r in self.records])

    @property
    def bound_values(self):
        return np.array([r.bound_value for r in self.records])


@dataclass
class NomaResult:
    theta: PhaseVector
    beamformers: BeamformerPair
    trace: NomaIterTrace
    relaxed_Q: np.ndarray
    relaxed_bound: float
    bound_at_theta: float
    power: float
    extraction: dict


def _weights(qos: QosSpec):
    s2, r1, r2 = qos.sigma2, qos.r1_min, qos.r2_min
    return s2 * r1 * (1 + r2), s2 * r2


def _qmat(Q):
    return Q.Q if isinstance(Q, LiftedMatrix) else np.asarray(Q, complex)


def _positive_traces(Q, data):
    t1, t2, tqr = data.traces(_qmat(Q))
    if t1 <= TOL.zero_norm or t2 <= TOL.zero_norm:
        raise DegenerateTrace(f"Tr(Q Y1) = {t1:.3e}, Tr(Q Y2) = {t2:.3e}")
    return t1, t2, tqr


def bound_objective(Q, data: LiftedProblemData, qos: QosSpec) -> float:
    """Upper bound on the NOMA power obtained by dropping the angle coupling."""
    t1, t2, _ = _positive_traces(Q, data)
    a1, a2 = _weights(qos)
    return float(a1 / t1 + a2 / t2)


def exact_objective(Q, data: LiftedProblemData, qos: QosSpec) -> float:
    """NOMA power written through lifted traces (exact for rank-one ``Q``)."""
    t1, t2, tqr = _positive_traces(Q, data)
    r1, r2, s2 = qos.r1_min, qos.r2_min, qos.sigma2
    cos2 = min(max(abs(tqr) ** 2 / (t1 * t2), 0.0), 1.0)
    sin2 = 1.0 - cos2
    phi1_sq = r1 * s2 / t1 / (1 + r2 * sin2) ** 2
    phi2_sq = r2 * s2 / t2 + r1 * s2 / t1 * r2 * cos2 / (1 + r2 * sin2) ** 2
    return float(phi1_sq * ((1 + r2) ** 2 - (2 + r2) * r2 * cos2) + phi2_sq)


def update_y(Q, data: LiftedProblemData, qos: QosSpec):
    t1, t2, _ = _positive_traces(Q, data)
    a1, a2 = _weights(qos)
    return float(np.sqrt(a1) / t1), float(np.sqrt(a2) / t2)


def f_objective(Q, y, data: LiftedProblemData, qos: QosSpec, weights=None) -> float:
    """Quadratic-transform surrogate ``f(Q, y)``; equals ``-bound`` at the optimal ``y``."""
    t1, t2, _ = data.traces(_qmat(Q))
    a1, a2 = weights if weights is not None else _weights(qos)
    y1, y2 = y
    return float(-2 * y1 * np.sqrt(a1) + y1 ** 2 * t1 - 2 * y2 * np.sqrt(a2) + y2 ** 2 * t2)


def _normalized(mat):
    scale = np.linalg.norm(mat)
    return mat / scale if scale > 0 else mat


def lmi_terms(data: LiftedProblemData, r1: float):
    rho = max(np.linalg.norm(data.chi1), np.linalg.norm(data.chi2), TOL.zero_norm)
    return [(1.0, data.chi1 / rho), (-(1.0 + r1), data.chi2 / rho)]


def _linear_sdr(C, data, qos, opts, use_lmi):
    """``max Re Tr(C Q)`` over unit-diagonal PSD ``Q`` (optionally with the LMI)."""
    problem = lifted_problem(_normalized(C), maximize=True)
    if use_lmi:
        problem = add_lmi_as_block(problem, lmi_terms(data, qos.r1_min))
    sol = solve(problem, opts)
    if sol.status == INFEASIBLE:
        raise Infeasible("relaxed problem is infeasible", {"message": sol.message})
    if sol.status != OPTIMAL:
        raise SolverFailure(f"SDR step ended with status {sol.status}: {sol.message}", sol.status)
    Q = lifted_solution(sol)
    return LiftedMatrix(Q, rank_one=is_rank_one(Q))


def sdr_step(y1, y2, data: LiftedProblemData, qos: QosSpec, opts: SolverOptions | None = None,
             use_lmi: bool = True) -> LiftedMatrix:
    """Relaxed ``max y1^2 Tr(Q Y1) + y2^2 Tr(Q Y2)`` over unit-diagonal PSD ``Q``.

    The objective is rescaled before the solve; with ``use_lmi`` the convex
    quasi-degradation constraint is attached as a slack PSD block.
    """
    if not (np.isfinite(y1) and np.isfinite(y2)):
        raise ValueError("y must be finite")
    return _linear_sdr(y1 ** 2 * data.upsilon1 + y2 ** 2 * data.upsilon2, data, qos, opts, use_lmi)


def _ratio_line_search(a, t, d):
    """Minimize ``sum_k a_k / (t_k + g d_k)`` over ``g`` in [0, 1] (a convex function)."""
    def deriv(g):
        return -sum(ak * dk / (tk + g * dk) ** 2 for ak, tk, dk in zip(a, t, d))

    if deriv(0.0) >= 0:
        return 0.0
    if deriv(1.0) <= 0:
        return 1.0
    return float(brentq(deriv, 0.0, 1.0, xtol=1e-14, rtol=1e-14))


def _hermitize(Q):
    return 0.5 * (Q + Q.conj().T)


def minimize_ratio_sum(weights, data: LiftedProblemData, qos: QosSpec, opts: PhaseOptions,
                       use_lmi: bool | None = None):
    """Alternating quadratic-transform / SDR minimization of ``a1/Tr(Q Y1) + a2/Tr(Q Y2)``.

    Returns ``(Q, trace)`` with ``Q`` the final relaxed lifted matrix.  The
    trace records ``f(Q_t, y_t)`` with ``y_t`` refreshed at ``Q_t``.
    """
    a1, a2 = weights
    Q = lift(PhaseVector(np.zeros(data.size - 1))).Q
    t1, t2, _ = _positive_traces(Q, data)
    y = (np.sqrt(a1) / t1, np.sqrt(a2) / t2)
    if use_lmi is None:
        use_lmi = opts.lmi != "off"
    trace = NomaIterTrace(lmi_used=use_lmi)
    trace.iterate_phases.append(np.zeros(data.size - 1))
    for it in range(opts.max_outer):
        try:
            Qhat = sdr_step(y[0], y[1], data, qos, opts.sdp, use_lmi=use_lmi).Q
        except (Infeasible, SolverFailure) as exc:
            if not use_lmi or opts.lmi == "strict":
                raise
            logger.debug("LMI-constrained relaxation failed (%s); continuing without it", exc)
            use_lmi = trace.lmi_used = False
            Qhat = sdr_step(y[0], y[1], data, qos, opts.sdp, use_lmi=False).Q
        h1, h2, _ = data.traces(Qhat)
        if it == 0:
            # the all-zero start need not satisfy the LMI, so the first move is a full step
            step, gap = 1.0, float("nan")
        else:
            d = (h1 - t1, h2 - t2)
            gap = float(y[0] ** 2 * d[0] + y[1] ** 2 * d[1])
            step = _ratio_line_search((a1, a2), (t1, t2), d)
        Q = _hermitize(Q + step * (Qhat - Q))
        t1, t2, _ = _positive_traces(Q, data)
        y = (np.sqrt(a1) / t1, np.sqrt(a2) / t2)
        bound = a1 / t1 + a2 / t2
        trace.records.append(NomaIterRecord(y[0], y[1], -bound, bound, OPTIMAL, step, gap))
        trace.iterate_phases.append(principal_phases(Q))
        if it > 0 and (gap <= opts.outer_tol * bound or step == 0.0):
            trace.converged = True
            break
    return Q, trace


def _exact_parts(Q, data, qos):
    t1, t2, tqr = _positive_traces(Q, data)
    r2 = qos.r2_min
    d1 = (1 + r2) * t1 - r2 * abs(tqr) ** 2 / t2
    return t1, t2, tqr, d1


def exact_gradient(Q, data: LiftedProblemData, qos: QosSpec) -> np.ndarray:
    """Hermitian gradient of the lifted exact power w.r.t. ``Re Tr(X^H dQ)``."""
    t1, t2, tqr, d1 = _exact_parts(_qmat(Q), data, qos)
    a1, a2 = _weights(qos)
    r2 = qos.r2_min
    cross = tqr * data.cross_R.conj().T
    grad_d1 = (1 + r2) * data.upsilon1 - r2 * ((cross + cross.conj().T) / t2
                                               - abs(tqr) ** 2 / t2 ** 2 * data.upsilon2)
    return _hermitize(-a1 / d1 ** 2 * grad_d1 - a2 / t2 ** 2 * data.upsilon2)


def refine_exact(Q, data: LiftedProblemData, qos: QosSpec, opts: PhaseOptions, use_lmi: bool,
                 trace: NomaIterTrace | None = None):
    """Conditional-gradient minimization of the (convex) lifted exact power from ``Q``."""
    trace = trace if trace is not None else NomaIterTrace(lmi_used=use_lmi)
    Q = _qmat(Q)
    value = exact_objective(Q, data, qos)
    for _ in range(opts.max_refine):
        grad = exact_gradient(Q, data, qos)
        try:
            Qhat = _linear_sdr(-grad, data, qos, opts.sdp, use_lmi).Q
        except (Infeasible, SolverFailure):
            if not use_lmi or opts.lmi == "strict":
                raise
            # Q itself satisfies the LMI, so dropping it only enlarges the feasible set
            use_lmi = trace.lmi_used = False
            Qhat = _linear_sdr(-grad, data, qos, opts.sdp, False).Q
        D = Qhat - Q
        gap = -float(np.real(np.vdot(grad, D)))
        if gap <= opts.refine_tol * value:
            trace.refine_converged = True
            break
        res = minimize_scalar(lambda g: exact_objective(Q + g * D, data, qos), bounds=(0.0, 1.0),
                              method="bounded", options={"xatol": 1e-10})
        step = float(res.x)
        if res.fun > value:
            step = 0.0
        if step == 0.0:
            trace.refine_converged = True
            break
        Q = _hermitize(Q + step * D)
        value = exact_objective(Q, data, qos)
        trace.refine.append(RefineRecord(value, step, gap))
        trace.iterate_phases.append(principal_phases(Q))
    return Q, trace


def _candidate_channels(data: LiftedProblemData, thetas):
    Vt = np.vstack([np.exp(-1j * thetas.T), np.ones((1, thetas.shape[0]))])
    H1 = data.chi1 @ Vt
    H2 = data.chi2 @ Vt
    n1 = np.sum(np.abs(H1) ** 2, axis=0)
    n2 = np.sum(np.abs(H2) ** 2, axis=0)
    inner = np.sum(H1.conj() * H2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos2 = np.clip(np.abs(inner) ** 2 / (n1 * n2), 0.0, 1.0)
    return n1, n2, cos2


def noma_power_batch(data: LiftedProblemData, qos: QosSpec, thetas):
    n1, n2, cos2 = _candidate_channels(data, thetas)
    r1, r2, s2 = qos.r1_min, qos.r2_min, qos.sigma2
    return r1 * (1 + r2) * s2 / (n1 * (1 + r2 * (1 - cos2))) + r2 * s2 / n2


def qd_margin_batch(data: LiftedProblemData, qos: QosSpec, thetas):
    """``||h1||^2 / ||h2||^2 - L(cos^2)`` per row of ``thetas``; ``-inf`` where undefined."""
    n1, n2, cos2 = _candidate_channels(data, thetas)
    r1, r2 = qos.r1_min, qos.r2_min
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = np.where(cos2 > 0, (1 + r1) / cos2 - r1 * cos2 / (1 + r2 * (1 - cos2)) ** 2, np.inf)
        margin = n1 / n2 - lhs
    ok = (n1 > TOL.zero_norm) & (n2 > TOL.zero_norm) & np.isfinite(margin)
    return np.where(ok, margin, -np.inf)


def qd_batch(data: LiftedProblemData, qos: QosSpec, thetas, slack: float | None = None):
    slack = TOL.qd_margin if slack is None else slack
    return qd_margin_batch(data, qos, thetas) >= -slack


def qd_margin_and_gradient(data: LiftedProblemData, qos: QosSpec, theta):
    """Quasi-degradation margin at ``theta`` and its gradient in ``theta``."""
    theta = np.asarray(theta, float)
    vt = np.append(np.exp(-1j * theta), 1.0)
    h1, h2 = data.chi1 @ vt, data.chi2 @ vt
    n1, n2 = np.vdot(h1, h1).real, np.vdot(h2, h2).real
    p = np.vdot(h1, h2)
    c = abs(p) ** 2 / (n1 * n2)
    r1, r2 = qos.r1_min, qos.r2_min
    u = 1 + r2 * (1 - c)
    margin = n1 / n2 - (1 + r1) / c + r1 * c / u ** 2
    dv = -1j * vt[:-1]
    # derivatives of the norms and of h1^H h2 with respect to each phase
    dn1 = 2 * np.real(np.conj(data.chi1.conj().T @ h1)[:-1] * dv)
    dn2 = 2 * np.real(np.conj(data.chi2.conj().T @ h2)[:-1] * dv)
    dp = np.conj(dv) * (data.cross_R @ vt)[:-1] + dv * np.conj(data.cross_R.conj().T @ vt)[:-1]
    dc = 2 * np.real(np.conj(p) * dp) / (n1 * n2) - c * (dn1 / n1 + dn2 / n2)
    dL = -(1 + r1) / c ** 2 - r1 * (u + 2 * r2 * c) / u ** 3
    grad = (dn1 * n2 - n1 * dn2) / n2 ** 2 - dL * dc
    return float(margin), grad


def restore_feasibility(data: LiftedProblemData, qos: QosSpec, starts, max_iter: int = 200):
    """Search for a quasi-degraded phase vector by maximizing the margin from each start.

    Returns the first feasible point found, or ``None``.
    """
    def neg_margin(th):
        with np.errstate(divide="ignore", invalid="ignore"):
            m, g = qd_margin_and_gradient(data, qos, th)
        if not (np.isfinite(m) and np.all(np.isfinite(g))):
            return 1e300, np.zeros_like(th)
        return -m, -g

    for start in starts:
        start = np.asarray(start, float)
        if qd_batch(data, qos, start[None, :], 0.0)[0]:
            return np.mod(start, 2 * np.pi)
        res = minimize(neg_margin, start, jac=True, method="L-BFGS-B", options={"maxiter": max_iter})
        if qd_batch(data, qos, res.x[None, :], 0.0)[0]:
            return np.mod(res.x, 2 * np.pi)
    return None


def boundary_search(data: LiftedProblemData, qos: QosSpec, feasible, better,
                    scan: int = 256, steps: int = 50):
    """Move from a cheaper, non-degraded phase vector ``better`` towards the
    quasi-degraded ``feasible`` one and stop at the first quasi-degraded point.

    Both wrapped routes between the two points are scanned, the first feasible
    sample on each is refined by bisection, and the cheapest result (or
    ``feasible`` itself) is returned as ``(theta, moved)``.
    """
    feasible = np.asarray(feasible, float)
    better = np.asarray(better, float)
    delta = np.angle(np.exp(1j * (feasible - better)))
    other = delta - 2 * np.pi * np.sign(delta)
    best, best_power = feasible, noma_power_batch(data, qos, feasible[None, :])[0]
    moved = False
    s = np.linspace(0.0, 1.0, scan + 1)[1:]
    for route in (delta, other):
        pts = better[None, :] + s[:, None] * route[None, :]
        ok = qd_batch(data, qos, pts, 0.0)
        if not ok.any():
            continue
        k = int(np.argmax(ok))
        lo, hi = (s[k - 1] if k > 0 else 0.0), s[k]
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            if qd_batch(data, qos, (better + mid * route)[None, :], 0.0)[0]:
                hi = mid
            else:
                lo = mid
        cand = np.mod(better + hi * route, 2 * np.pi)
        power = noma_power_batch(data, qos, cand[None, :])[0]
        if qd_batch(data, qos, cand[None, :], 0.0)[0] and power < best_power:
            best, best_power, moved = cand, power, True
    return best, moved


def optimize_phases_noma(data: LiftedProblemData, qos: QosSpec | None = None,
                         opts: PhaseOptions | None = None) -> NomaResult:
    """Design surface phases and NOMA beamformers for one channel realization.

    Candidates drawn from the relaxed solution (plus the decoded iterates)
    are accepted only if the composite channels are quasi-degraded, and ranked
    by the exact NOMA power.  When a rejected candidate is cheaper than the
    best accepted one, the winner is pushed towards it up to the
    quasi-degradation boundary.  If no candidate is quasi-degraded, a margin
    ascent from the cheapest candidate (plus ``opts.restarts`` random starts)
    supplies the feasible end of that walk.
    """
    qos = qos or data.qos
    if qos is None:
        raise ValueError("QoS targets are required")
    opts = opts or PhaseOptions()
    holds, lam = improved_qd(data)
    if not holds:
        logger.warning("improved quasi-degradation test fails (lambda_max = %.3e)", lam)
    Q, trace = minimize_ratio_sum(_weights(qos), data, qos, opts)
    if opts.refine_exact:
        Q, trace = refine_exact(Q, data, qos, opts, trace.lmi_used, trace)
    extra = np.array(trace.iterate_phases)

    def extract(accept):
        rng = np.random.default_rng(np.random.SeedSequence([opts.seed, 1]))
        return extract_rank_one(Q, accept=accept, score=lambda th: noma_power_batch(data, qos, th),
                                opts=opts.sdp, rng=rng, extra=extra)

    try:
        theta, info = extract(lambda th: qd_batch(data, qos, th))
    except NoFeasibleCandidate:
        # every candidate sits outside the quasi-degraded set: climb the margin
        # from the cheapest one, then walk back towards it along the boundary
        cheapest, info = extract(lambda th: np.ones(len(th), bool))
        restarts = np.random.default_rng(np.random.SeedSequence([opts.seed, 4]))
        starts = [cheapest] + list(restarts.uniform(0, 2 * np.pi, (opts.restarts, data.size - 1)))
        feasible = restore_feasibility(data, qos, starts)
        if feasible is None:
            raise
        info = dict(info, accepted=0, restored=True, best_rejected=cheapest)
        theta = feasible
    if "best_rejected" in info:
        theta, moved = boundary_search(data, qos, theta, info["best_rejected"])
        info["boundary_search"] = moved
    phases = PhaseVector(theta)
    h1, h2 = data.composite(phases)
    pair = noma_beamformers(h1, h2, qos)
    return NomaResult(
        theta=phases,
        beamformers=pair,
        trace=trace,
        relaxed_Q=Q,
        relaxed_bound=bound_objective(Q, data, qos),
        bound_at_theta=bound_objective(lift(phases), data, qos),
        power=pair.power,
        extraction=info,
    )
