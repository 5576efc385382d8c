"""Closed-form beamformers and transmit powers for a fixed surface configuration."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_complex_vector, check_channel_pair
from .channel_model import QosSpec, rate_from_snr
from .exceptions import CollinearChannels, QdViolation
from .tolerances import TOL

SCHEMES = ("noma", "zfbf", "ofdma")


@dataclass(frozen=True)
class BeamformerPair:
    w1: np.ndarray
    w2: np.ndarray
    scheme: str
    power: float

    @classmethod
    def from_vectors(cls, w1, w2, scheme):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        w1 = np.asarray(w1, complex)
        w2 = np.asarray(w2, complex)
        power = float(np.vdot(w1, w1).real + np.vdot(w2, w2).real)
        return cls(w1, w2, scheme, power)


@dataclass(frozen=True)
class SinrReport:
    snr1: float
    sinr21: float
    sinr22: float
    rate1: float
    rate2: float


def _angle_terms(h1, h2):
    h1, h2, n1, n2 = check_channel_pair(h1, h2)
    inner = np.vdot(h1, h2)
    cos2 = min(max(abs(inner) ** 2 / (n1 * n2), 0.0), 1.0)
    return h1, h2, n1, n2, cos2


def noma_power(h1, h2, qos: QosSpec) -> float:
    """Minimum NOMA transmit power under quasi-degradation with decoding order (2, 1)."""
    _, _, n1, n2, cos2 = _angle_terms(h1, h2)
    r1, r2, s2 = qos.r1_min, qos.r2_min, qos.sigma2
    sin2 = 1.0 - cos2
    return float(r1 * (1 + r2) * s2 / (n1 * (1 + r2 * sin2)) + r2 * s2 / n2)


def zf_power(h1, h2, qos: QosSpec) -> float:
    _, _, n1, n2, cos2 = _angle_terms(h1, h2)
    sin2 = 1.0 - cos2
    if sin2 <= TOL.collinear_sin2:
        raise CollinearChannels(f"sin^2 alpha = {sin2:.3e}; zero forcing is undefined")
    return float(qos.sigma2 / sin2 * (qos.r1_min / n1 + qos.r2_min / n2))


def noma_beamformers(h1, h2, qos: QosSpec, check_qd: bool = True) -> BeamformerPair:
    """Superposition beamformers that meet both QoS targets with equality.

    User 1 decodes and cancels user 2 first, so its beam is steered along a
    combination of both channel directions; user 2 uses matched filtering.
    Raises ``QdViolation`` when the channels are not quasi-degraded, since the
    closed form is not optimal (nor feasible for user 1's SIC) in that case.
    """
    h1, h2, n1, n2, cos2 = _angle_terms(h1, h2)
    if check_qd:
        from .quasi_degradation import qd_holds

        verdict = qd_holds(h1, h2, qos)
        if not verdict.holds:
            raise QdViolation(f"quasi-degradation fails (margin {verdict.margin:.3e})")
    r1, r2, s2 = qos.r1_min, qos.r2_min, qos.sigma2
    sin2 = 1.0 - cos2
    e1 = h1 / np.sqrt(n1)
    e2 = h2 / np.sqrt(n2)
    phi1_sq = r1 * s2 / n1 / (1 + r2 * sin2) ** 2
    phi2_sq = r2 * s2 / n2 + r1 * s2 / n1 * r2 * cos2 / (1 + r2 * sin2) ** 2
    w1 = np.sqrt(phi1_sq) * ((1 + r2) * e1 - r2 * np.vdot(e2, e1) * e2)
    w2 = np.sqrt(phi2_sq) * e2
    return BeamformerPair.from_vectors(w1, w2, "noma")


def zf_beamformers(h1, h2, qos: QosSpec) -> BeamformerPair:
    """Zero-forcing pair: each beam lies in the null space of the other user's channel."""
    h1, h2, n1, n2, cos2 = _angle_terms(h1, h2)
    sin2 = 1.0 - cos2
    if sin2 <= TOL.collinear_sin2:
        raise CollinearChannels(f"sin^2 alpha = {sin2:.3e}; zero forcing is undefined")
    a1 = n2 * h1 - np.vdot(h2, h1) * h2
    a2 = n1 * h2 - np.vdot(h1, h2) * h1
    denom = n1 * n2 * sin2
    w1 = np.sqrt(qos.r1_min * qos.sigma2) * a1 / denom
    w2 = np.sqrt(qos.r2_min * qos.sigma2) * a2 / denom
    return BeamformerPair.from_vectors(w1, w2, "zfbf")


def evaluate_sinr(h1, h2, pair: BeamformerPair, qos: QosSpec, convention: str = "bits") -> SinrReport:
    h1 = as_complex_vector(h1, "h1")
    h2 = as_complex_vector(h2, "h2", h1.shape[0])
    s2 = qos.sigma2
    g11 = abs(np.vdot(h1, pair.w1)) ** 2
    g12 = abs(np.vdot(h1, pair.w2)) ** 2
    g21 = abs(np.vdot(h2, pair.w1)) ** 2
    g22 = abs(np.vdot(h2, pair.w2)) ** 2
    snr1 = g11 / s2
    sinr21 = g12 / (g11 + s2)
    sinr22 = g22 / (g21 + s2)
    return SinrReport(
        snr1=float(snr1),
        sinr21=float(sinr21),
        sinr22=float(sinr22),
        rate1=rate_from_snr(snr1, convention),
        rate2=rate_from_snr(min(sinr21, sinr22), convention),
    )


def compare_schemes(h1, h2, qos: QosSpec):
    """Return ``(p_noma, p_zfbf, noma_wins)`` for the same composite channels."""
    p_zf = zf_power(h1, h2, qos)
    p_noma = noma_power(h1, h2, qos)
    return p_noma, p_zf, bool(p_noma <= p_zf)
