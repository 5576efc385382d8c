"""Transmit beamforming and reflecting-surface phase design for a two-user downlink.

NOMA and zero-forcing closed forms, feasibility tests for quasi-degradation,
semidefinite-relaxation phase optimizers, a small SDP solver, and a
Monte-Carlo harness.
"""
from .beamforming import (BeamformerPair, SinrReport, compare_schemes, evaluate_sinr,
                          noma_beamformers, noma_power, zf_beamformers, zf_power)
from .channel_model import (ChannelSet, LiftedMatrix, LiftedProblemData, PhaseVector, QosSpec,
                            ScenarioConfig, build_lifted, chi_matrix, composite_channel, cos2_alpha,
                            lift, noise_power, phi_matrix, snr_target, synthesize_channels)
from .estimators import PhaseDesigner, QuasiDegradationClassifier
from .exceptions import (CollinearChannels, ConfigError, DegenerateTrace, DimensionMismatch,
                         Infeasible, IrsNomaError, MaxOuterIter, NoFeasibleCandidate,
                         OrthDegenerate, QdViolation, SolverFailure, ZeroChannel)
from .hybrid import SchemeDecision, SolveReport, select_scheme, solve_hybrid
from .noma_phase import (NomaIterTrace, PhaseOptions, bound_objective, exact_objective,
                         optimize_phases_noma, sdr_step, update_y)
from .quasi_degradation import (QdVerdict, RegionGrid, improved_qd, lmi_qd_holds,
                                orthogonality_feasible, qd_holds, region_map)
from .sdp import SdpProblem, SdpSolution, SolverOptions, extract_rank_one, realify, solve
from .tolerances import TOL, Tolerances
from .zf_phase import (ZfIterTrace, ZfOptions, g2_gradient, g_split, optimize_phases_zfbf,
                       sca_solve, w_objective)

__version__ = "0.1.0"
