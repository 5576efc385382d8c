"""Scheme selection between NOMA and zero-forcing, and the end-to-end solve."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .beamforming import BeamformerPair, compare_schemes
from .channel_model import ChannelSet, PhaseVector, QosSpec, build_lifted
from .exceptions import (Infeasible, IrsNomaError, NoFeasibleCandidate, QdViolation, SolverFailure,
                         ZeroChannel)
from .noma_phase import PhaseOptions, optimize_phases_noma
from .quasi_degradation import improved_qd, orthogonality_feasible, qd_holds
from .tolerances import TOL
from .zf_phase import ZfOptions, optimize_phases_zfbf

logger = logging.getLogger(__name__)

CHOICES = ("noma", "zfbf", "zfbf_fallback")
REASONS = ("improved_qd_holds", "orthogonality_feasible", "neither")


@dataclass(frozen=True)
class SchemeDecision:
    chosen: str
    reason: str
    lambda_max: float
    cross_norm: float


@dataclass
class SolveReport:
    decision: SchemeDecision
    theta: PhaseVector
    beamformers: BeamformerPair
    power_w: float
    traces: dict = field(default_factory=dict)
    wall_time: float = 0.0
    noma_failure: str | None = None
    qd_at_theta: bool = False

    @property
    def scheme(self) -> str:
        return self.beamformers.scheme

    @property
    def iterations(self) -> int:
        total = 0
        for tr in self.traces.values():
            if hasattr(tr, "records"):
                total += len(tr.records) + len(tr.refine)
            elif hasattr(tr, "outer"):
                total += sum(max(len(o.inner), 1) for o in tr.outer)
        return total


@dataclass
class HybridOptions:
    noma: PhaseOptions = field(default_factory=PhaseOptions)
    zf: ZfOptions = field(default_factory=ZfOptions)


def select_scheme(data) -> SchemeDecision:
    """NOMA when the eigenvalue test passes, zero-forcing when every phase gives
    orthogonal channels, and zero-forcing as a fallback otherwise."""
    holds, lam = improved_qd(data)
    cross = float(np.linalg.norm(data.cross_R))
    if holds:
        return SchemeDecision("noma", "improved_qd_holds", lam, cross)
    if orthogonality_feasible(data):
        return SchemeDecision("zfbf", "orthogonality_feasible", lam, cross)
    return SchemeDecision("zfbf_fallback", "neither", lam, cross)


def _check_nonzero(ch: ChannelSet):
    for k in (1, 2):
        direct = np.linalg.norm(ch.h_d(k))
        reflected = np.linalg.norm(ch.h_r(k)) * np.linalg.norm(ch.G)
        if direct <= TOL.zero_norm and reflected <= TOL.zero_norm:
            raise ZeroChannel(f"user {k} has no nonzero channel path")


def solve_hybrid(ch: ChannelSet, qos: QosSpec, opts: HybridOptions | None = None) -> SolveReport:
    """Run the scheme chosen by :func:`select_scheme`.

    A NOMA run that ends without a quasi-degraded phase vector (or whose
    relaxation is infeasible or unsolvable) is replaced by the zero-forcing design; the
    failure is kept on the report.
    """
    opts = opts or HybridOptions()
    start = time.perf_counter()
    _check_nonzero(ch)
    data = build_lifted(ch, qos)
    decision = select_scheme(data)
    traces = {}
    failure = None
    if decision.chosen == "noma":
        try:
            res = optimize_phases_noma(data, qos, opts.noma)
            traces["noma"] = res.trace
            return _report(decision, res.theta, res.beamformers, traces, start, None, data, qos)
        except (Infeasible, NoFeasibleCandidate, QdViolation, SolverFailure) as exc:
            failure = f"{type(exc).__name__}: {exc}"
            logger.info("NOMA design failed (%s); using zero-forcing", failure)
            decision = SchemeDecision("zfbf_fallback", decision.reason, decision.lambda_max,
                                      decision.cross_norm)
    try:
        res = optimize_phases_zfbf(data, qos, opts.zf)
    except IrsNomaError as exc:
        if failure is not None:
            raise type(exc)(f"{exc} (after NOMA failure: {failure})") from exc
        raise
    traces["zfbf"] = res.trace
    return _report(decision, res.theta, res.beamformers, traces, start, failure, data, qos)


def _report(decision, theta, pair, traces, start, failure, data, qos):
    h1, h2 = data.composite(theta)
    try:
        qd = qd_holds(h1, h2, qos).holds
    except ZeroChannel:
        qd = False
    return SolveReport(
        decision=decision,
        theta=theta,
        beamformers=pair,
        power_w=pair.power,
        traces=traces,
        wall_time=time.perf_counter() - start,
        noma_failure=failure,
        qd_at_theta=qd,
    )


def dominance_audit(report: SolveReport, data, qos: QosSpec) -> bool:
    """True unless NOMA power at the returned phases exceeds zero-forcing power."""
    h1, h2 = data.composite(report.theta)
    try:
        p_noma, p_zf, _ = compare_schemes(h1, h2, qos)
    except IrsNomaError:
        return True
    return p_noma <= p_zf * (1 + 1e-12)
