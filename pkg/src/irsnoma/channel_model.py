"""Scenario geometry, channel synthesis and the lifted composite-channel algebra.

Conventions
-----------
The reflected row channel of user ``k`` is ``h_rk^H Theta G`` and the composite
channel satisfies ``h_k^H = h_rk^H Theta G + h_dk^H``.  With the phase vector
``v = exp(-1j * theta)`` and ``v_tilde = [v; 1]`` the composite channel is
``h_k = chi_k @ v_tilde`` where ``chi_k = [Phi_k^H, h_dk]`` and
``Phi_k = diag(conj(h_rk)) G``.  Every lifted quantity below follows from that:
``Upsilon_k = chi_k^H chi_k`` and ``R = chi_1^H chi_2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ._validation import as_complex_matrix, as_complex_vector, check_channel_pair
from .exceptions import DimensionMismatch, ZeroChannel
from .tolerances import TOL

RATE_CONVENTIONS = ("bits", "nats")


@dataclass(frozen=True)
class ScenarioConfig:
    num_antennas: int = 4
    num_elements: int = 10
    bs_pos: tuple = (0.0, 0.0)
    irs_pos: tuple = (20.0, 20.0)
    user1_pos: tuple = (100.0, 100.0)
    user2_pos: tuple = (200.0, 150.0)
    path_loss_exponent: float = 3.0
    bandwidth_hz: float = 10e6
    noise_density_dbm_per_hz: float = -174.0
    target_rates: tuple = (1.0, 1.0)
    rate_convention: str = "bits"
    seed: int = 0
    pathloss_on_amplitude: bool = False
    distance_floor: float = 0.1

    def __post_init__(self):
        if int(self.num_antennas) < 2:
            raise ValueError("num_antennas must be >= 2")
        if int(self.num_elements) < 1:
            raise ValueError("num_elements must be >= 1")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        if len(self.target_rates) != 2 or min(self.target_rates) <= 0:
            raise ValueError("target_rates must be two positive numbers")
        if self.rate_convention not in RATE_CONVENTIONS:
            raise ValueError(f"rate_convention must be one of {RATE_CONVENTIONS}")
        if self.distance_floor <= 0:
            raise ValueError("distance_floor must be positive")

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    def distances(self):
        """Return ``(d_r, d_r1, d_r2, d_1, d_2)`` floored at ``distance_floor``."""
        def dist(a, b):
            return max(math.dist(a, b), self.distance_floor)

        return (
            dist(self.bs_pos, self.irs_pos),
            dist(self.irs_pos, self.user1_pos),
            dist(self.irs_pos, self.user2_pos),
            dist(self.bs_pos, self.user1_pos),
            dist(self.bs_pos, self.user2_pos),
        )


@dataclass(frozen=True)
class QosSpec:
    r1_min: float
    r2_min: float
    sigma2: float

    def __post_init__(self):
        if self.r1_min <= 0 or self.r2_min <= 0:
            raise ValueError("SNR targets must be positive")
        if self.sigma2 <= 0:
            raise ValueError("noise power must be positive")

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "QosSpec":
        r1 = snr_target(cfg.target_rates[0], cfg.rate_convention)
        r2 = snr_target(cfg.target_rates[1], cfg.rate_convention)
        return cls(r1, r2, noise_power(cfg))


@dataclass(frozen=True)
class ChannelSet:
    """Raw channels. ``G`` is N x M, ``h_r*`` are N-vectors, ``h_d*`` are M-vectors."""

    G: np.ndarray
    h_r1: np.ndarray
    h_r2: np.ndarray
    h_d1: np.ndarray
    h_d2: np.ndarray

    def __post_init__(self):
        G = as_complex_matrix(self.G, "G")
        n, m = G.shape
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h_r1", as_complex_vector(self.h_r1, "h_r1", n))
        object.__setattr__(self, "h_r2", as_complex_vector(self.h_r2, "h_r2", n))
        object.__setattr__(self, "h_d1", as_complex_vector(self.h_d1, "h_d1", m))
        object.__setattr__(self, "h_d2", as_complex_vector(self.h_d2, "h_d2", m))

    @property
    def num_antennas(self) -> int:
        return self.G.shape[1]

    @property
    def num_elements(self) -> int:
        return self.G.shape[0]

    def direct_only(self) -> "ChannelSet":
        """The same links with the reflecting path removed (N = 0)."""
        m = self.num_antennas
        return ChannelSet(np.zeros((0, m), complex), np.zeros(0, complex),
                          np.zeros(0, complex), self.h_d1, self.h_d2)

    def h_r(self, k):
        return self.h_r1 if k == 1 else self.h_r2

    def h_d(self, k):
        return self.h_d1 if k == 1 else self.h_d2


@dataclass(frozen=True)
class PhaseVector:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.mod(np.asarray(self.theta, dtype=float).reshape(-1), 2 * np.pi)
        object.__setattr__(self, "theta", theta)

    @property
    def v(self) -> np.ndarray:
        """``v = [e^{j theta_1}, ..., e^{j theta_N}]^H``."""
        return np.exp(-1j * self.theta)

    @property
    def v_tilde(self) -> np.ndarray:
        return np.append(self.v, 1.0)

    def __len__(self):
        return self.theta.shape[0]


@dataclass(frozen=True)
class LiftedMatrix:
    Q: np.ndarray
    rank_one: bool = False


@dataclass(frozen=True)
class LiftedProblemData:
    upsilon1: np.ndarray
    upsilon2: np.ndarray
    cross_R: np.ndarray
    chi1: np.ndarray
    chi2: np.ndarray
    qos: QosSpec | None = field(default=None)

    @property
    def size(self) -> int:
        return self.upsilon1.shape[0]

    @property
    def num_antennas(self) -> int:
        return self.chi1.shape[0]

    def traces(self, Q):
        """``(Tr(Q Y1), Tr(Q Y2), Tr(Q R))``."""
        t1 = float(np.real(np.vdot(self.upsilon1, Q)))
        t2 = float(np.real(np.vdot(self.upsilon2, Q)))
        # Tr(QR) = sum_ij Q_ij R_ji
        tqr = complex(np.sum(Q * self.cross_R.T))
        return t1, t2, tqr

    def composite(self, theta: PhaseVector):
        vt = theta.v_tilde
        return self.chi1 @ vt, self.chi2 @ vt


def snr_target(rate: float, convention: str = "bits") -> float:
    if rate <= 0:
        raise ValueError("rate must be positive")
    if convention == "bits":
        return float(2.0 ** rate - 1.0)
    if convention == "nats":
        return float(math.expm1(rate))
    raise ValueError(f"unknown rate convention {convention!r}")


def rate_from_snr(snr: float, convention: str = "bits") -> float:
    if convention == "bits":
        return float(np.log2(1.0 + snr))
    if convention == "nats":
        return float(np.log1p(snr))
    raise ValueError(f"unknown rate convention {convention!r}")


def noise_power(cfg: ScenarioConfig) -> float:
    """Thermal noise power in watts from bandwidth and density in dBm/Hz."""
    return float(cfg.bandwidth_hz * 10.0 ** ((cfg.noise_density_dbm_per_hz - 30.0) / 10.0))


def pathloss_amplitude(d: float, exponent: float, on_amplitude: bool = False) -> float:
    """Amplitude factor for distance ``d``; power law on power unless ``on_amplitude``."""
    if d <= 0:
        raise ValueError("distance must be positive")
    if on_amplitude:
        return float(d ** (-exponent))
    return float(math.sqrt(d ** (-exponent)))


def trial_rng(seed: int, *stream) -> np.random.Generator:
    """Independent generator keyed by the master seed and a stream path."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, stream)]))


def _cn_nested(key, length, row=None):
    """``length`` unit-variance complex normals; a shorter draw is a prefix of a longer one."""
    path = [int(key)] if row is None else [int(key), int(row)]
    z = np.random.default_rng(np.random.SeedSequence(path)).standard_normal((length, 2))
    return (z[:, 0] + 1j * z[:, 1]) / math.sqrt(2.0)


@dataclass(frozen=True)
class FadingDraw:
    """Unit-variance small-scale fading, independent of geometry.

    Draws are nested: for a fixed generator state the fading of a smaller
    array (fewer antennas or elements) is the leading block of a larger one,
    so sweeps over ``M`` or ``N`` compare like with like.
    """

    g_r: np.ndarray
    g_r1: np.ndarray
    g_r2: np.ndarray
    g_1: np.ndarray
    g_2: np.ndarray

    @classmethod
    def draw(cls, m, n, rng):
        keys = rng.integers(0, 2**63, size=5)
        g_r = np.array([_cn_nested(keys[0], m, i) for i in range(n)]).reshape(n, m)
        return cls(g_r, _cn_nested(keys[1], n), _cn_nested(keys[2], n),
                   _cn_nested(keys[3], m), _cn_nested(keys[4], m))


def apply_geometry(cfg: ScenarioConfig, fading: FadingDraw) -> ChannelSet:
    d_r, d_r1, d_r2, d_1, d_2 = cfg.distances()

    def amp(d):
        return pathloss_amplitude(d, cfg.path_loss_exponent, cfg.pathloss_on_amplitude)

    return ChannelSet(
        G=amp(d_r) * fading.g_r,
        h_r1=amp(d_r1) * fading.g_r1,
        h_r2=amp(d_r2) * fading.g_r2,
        h_d1=amp(d_1) * fading.g_1,
        h_d2=amp(d_2) * fading.g_2,
    )


def synthesize_channels(cfg: ScenarioConfig, stream: int | Sequence[int] = 0) -> ChannelSet:
    """Draw one Rayleigh-faded channel set; deterministic in ``(cfg.seed, stream)``."""
    stream = (stream,) if np.isscalar(stream) else tuple(stream)
    rng = trial_rng(cfg.seed, *stream)
    fading = FadingDraw.draw(cfg.num_antennas, cfg.num_elements, rng)
    return apply_geometry(cfg, fading)


def phi_matrix(ch: ChannelSet, k: int) -> np.ndarray:
    """``Phi_k`` with ``v^H Phi_k = h_rk^H Theta G``."""
    h_r = ch.h_r(k)
    if h_r.shape[0] != ch.G.shape[0]:
        raise DimensionMismatch("h_r and G disagree on the number of elements")
    return np.conj(h_r)[:, None] * ch.G


def chi_matrix(ch: ChannelSet, k: int) -> np.ndarray:
    """M x (N+1) matrix mapping ``v_tilde`` to the composite channel ``h_k``."""
    return np.column_stack([phi_matrix(ch, k).conj().T, ch.h_d(k)])


def composite_channel(ch: ChannelSet, theta: PhaseVector, k: int) -> np.ndarray:
    """Composite M-vector ``h_k`` with ``h_k^H = h_rk^H Theta G + h_dk^H``."""
    if len(theta) != ch.num_elements:
        raise DimensionMismatch(f"theta has {len(theta)} entries, surface has {ch.num_elements}")
    row = (np.conj(ch.h_r(k)) * np.exp(1j * theta.theta)) @ ch.G + np.conj(ch.h_d(k))
    return np.conj(row)


def build_lifted(ch: ChannelSet, qos: QosSpec | None = None) -> LiftedProblemData:
    chi1 = chi_matrix(ch, 1)
    chi2 = chi_matrix(ch, 2)
    y1 = chi1.conj().T @ chi1
    y2 = chi2.conj().T @ chi2
    return LiftedProblemData(
        upsilon1=0.5 * (y1 + y1.conj().T),
        upsilon2=0.5 * (y2 + y2.conj().T),
        cross_R=chi1.conj().T @ chi2,
        chi1=chi1,
        chi2=chi2,
        qos=qos,
    )


def cos2_alpha(h1, h2) -> float:
    """Squared cosine of the angle between two channels, clamped to [0, 1]."""
    h1, h2, n1, n2 = check_channel_pair(h1, h2)
    c = abs(np.vdot(h1, h2)) ** 2 / (n1 * n2)
    if c > 1.0 + 1e-6 or c < -TOL.cos2_clamp:
        raise ArithmeticError(f"cos^2 alpha out of range: {c}")
    return float(min(max(c, 0.0), 1.0))


def lift(theta: PhaseVector) -> LiftedMatrix:
    vt = theta.v_tilde
    return LiftedMatrix(np.outer(vt, vt.conj()), rank_one=True)


def random_phases(n: int, rng: np.random.Generator) -> PhaseVector:
    return PhaseVector(rng.uniform(0.0, 2 * np.pi, n))


__all__ = [
    "ChannelSet", "FadingDraw", "LiftedMatrix", "LiftedProblemData", "PhaseVector",
    "QosSpec", "ScenarioConfig", "ZeroChannel", "apply_geometry", "build_lifted",
    "chi_matrix", "composite_channel", "cos2_alpha", "lift", "noise_power",
    "pathloss_amplitude", "phi_matrix", "random_phases", "rate_from_snr", "snr_target",
    "synthesize_channels", "trial_rng",
]
