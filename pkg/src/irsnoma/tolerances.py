"""Numerical thresholds shared by the feasibility tests and solvers.

Kept in one record so tests can tighten or loosen them in a single place.
"""
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    qd_margin: float = 1e-9
    improved_qd_rel: float = 1e-9
    lmi_psd_rel: float = 1e-8
    orthogonality_rel: float = 1e-10
    collinear_sin2: float = 1e-10
    zero_norm: float = 1e-30
    cos2_clamp: float = 1e-12
    rank_one_rel: float = 1e-6
    unit_modulus: float = 1e-12


TOL = Tolerances()
