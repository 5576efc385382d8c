"""Feasibility predicates for NOMA with quasi-degraded channels."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ._validation import check_channel_pair
from .channel_model import (FadingDraw, LiftedMatrix, LiftedProblemData, QosSpec,
                            ScenarioConfig, apply_geometry, build_lifted, trial_rng)
from .tolerances import TOL


@dataclass(frozen=True)
class QdVerdict:
    holds: bool
    lhs: float
    rhs: float
    margin: float


def qd_lhs(cos2: float, r1: float, r2: float) -> float:
    """Left-hand side of the quasi-degradation inequality as a function of cos^2(alpha)."""
    if cos2 <= 0.0:
        return float("inf")
    return (1 + r1) / cos2 - r1 * cos2 / (1 + r2 * (1 - cos2)) ** 2


def qd_holds(h1, h2, qos: QosSpec) -> QdVerdict:
    h1, h2, n1, n2 = check_channel_pair(h1, h2)
    cos2 = min(max(abs(np.vdot(h1, h2)) ** 2 / (n1 * n2), 0.0), 1.0)
    lhs = qd_lhs(cos2, qos.r1_min, qos.r2_min)
    rhs = n1 / n2
    margin = rhs - lhs
    return QdVerdict(bool(margin >= -TOL.qd_margin), float(lhs), float(rhs), float(margin))


def improved_qd(data: LiftedProblemData):
    """``(holds, lambda_max)`` for the eigenvalue test on ``Upsilon_1 - Upsilon_2``."""
    diff = data.upsilon1 - data.upsilon2
    diff = 0.5 * (diff + diff.conj().T)
    lam = float(np.linalg.eigvalsh(diff)[-1])
    scale = float(np.linalg.norm(diff, 2)) if diff.size else 0.0
    return bool(lam >= -TOL.improved_qd_rel * scale), lam


def lmi_matrix(Q, data: LiftedProblemData, r1: float) -> np.ndarray:
    Q = Q.Q if isinstance(Q, LiftedMatrix) else np.asarray(Q, complex)
    L = data.chi1 @ Q @ data.chi1.conj().T - (1 + r1) * (data.chi2 @ Q @ data.chi2.conj().T)
    return 0.5 * (L + L.conj().T)


def lmi_qd_holds(Q, data: LiftedProblemData, qos: QosSpec) -> bool:
    """Convex sufficient condition: ``chi1 Q chi1^H - (1 + r1) chi2 Q chi2^H >= 0``."""
    Q = Q.Q if isinstance(Q, LiftedMatrix) else np.asarray(Q, complex)
    L = lmi_matrix(Q, data, qos.r1_min)
    a = data.chi1 @ Q @ data.chi1.conj().T
    b = data.chi2 @ Q @ data.chi2.conj().T
    scale = max(np.linalg.norm(a, 2), (1 + qos.r1_min) * np.linalg.norm(b, 2), TOL.zero_norm)
    return bool(np.linalg.eigvalsh(L)[0] >= -TOL.lmi_psd_rel * scale)


def orthogonality_feasible(data: LiftedProblemData) -> bool:
    """True when ``R = 0``, i.e. every phase choice yields orthogonal channels."""
    r = np.linalg.norm(data.cross_R)
    scale = np.sqrt(np.linalg.norm(data.upsilon1) * np.linalg.norm(data.upsilon2))
    return bool(r <= TOL.orthogonality_rel * scale)


@dataclass(frozen=True)
class RegionGrid:
    x_min: float = 0.0
    x_max: float = 10.0
    y_min: float = 0.0
    y_max: float = 10.0
    nx: int = 41
    ny: int = 41

    def points(self):
        if self.nx <= 0 or self.ny <= 0:
            return np.zeros((0, 2))
        xs = np.linspace(self.x_min, self.x_max, self.nx)
        ys = np.linspace(self.y_min, self.y_max, self.ny)
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])


@dataclass(frozen=True)
class RegionCell:
    x: float
    y: float
    holds: bool
    margin: float


def region_map(cfg: ScenarioConfig, grid: RegionGrid, mode: str = "improved",
               stream: int = 0) -> list[RegionCell]:
    """Evaluate a feasibility test for user 2 placed at every grid point.

    The base station, surface and user 1 keep one fading draw; user 2 gets an
    independent draw per cell that depends only on ``(cfg.seed, stream, cell)``,
    so both modes and any geometry change see identical small-scale fading.
    """
    if mode not in ("no_irs", "improved"):
        raise ValueError(f"unknown mode {mode!r}")
    qos = QosSpec.from_config(cfg)
    base = FadingDraw.draw(cfg.num_antennas, cfg.num_elements, trial_rng(cfg.seed, stream, 0))
    cells = []
    for idx, (x, y) in enumerate(grid.points()):
        user = FadingDraw.draw(cfg.num_antennas, cfg.num_elements, trial_rng(cfg.seed, stream, 1, idx))
        fading = FadingDraw(base.g_r, base.g_r1, user.g_r2, base.g_1, user.g_2)
        ch = apply_geometry(cfg.with_(user2_pos=(float(x), float(y))), fading)
        if mode == "no_irs":
            verdict = qd_holds(ch.h_d1, ch.h_d2, qos)
            margin = verdict.margin if np.isfinite(verdict.margin) else -np.inf
            cells.append(RegionCell(float(x), float(y), verdict.holds, float(margin)))
        else:
            holds, lam = improved_qd(build_lifted(ch, qos))
            cells.append(RegionCell(float(x), float(y), holds, lam))
    return cells


def write_region_csv(cells: Iterable[RegionCell], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "holds", "margin"])
        for c in cells:
            writer.writerow([repr(c.x), repr(c.y), int(c.holds), repr(c.margin)])
