"""Estimator-style wrappers around the functional solvers.

``fit`` takes one :class:`ChannelSet` (or a list of them) plus QoS targets and
stores the designed phases; ``transform`` maps channel sets to composite
channels under the fitted phases; ``predict`` returns transmit powers.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .beamforming import noma_power, zf_power
from .channel_model import ChannelSet, QosSpec, build_lifted, composite_channel
from .exceptions import IrsNomaError
from .hybrid import HybridOptions, solve_hybrid
from .noma_phase import PhaseOptions, optimize_phases_noma
from .quasi_degradation import improved_qd, qd_holds
from .sdp import SolverOptions
from .zf_phase import ZfOptions, optimize_phases_zfbf

_SCHEMES = ("hybrid", "noma", "zfbf")


def _as_channel_list(X):
    if isinstance(X, ChannelSet):
        return [X]
    items = list(X)
    for item in items:
        if not isinstance(item, ChannelSet):
            raise TypeError(f"expected ChannelSet, got {type(item).__name__}")
    return items


def _check_qos(qos):
    if not isinstance(qos, QosSpec):
        raise TypeError("qos must be a QosSpec")
    return qos


class PhaseDesigner(BaseEstimator):
    """Design surface phases and beamformers for one channel realization.

    Parameters
    ----------
    scheme : {"hybrid", "noma", "zfbf"}
    randomization_count : int
        Gaussian draws used when the relaxed solution is not rank one.
    sdp_tol : float
    seed : int
    """

    def __init__(self, scheme="hybrid", randomization_count=1000, sdp_tol=1e-8, seed=0):
        self.scheme = scheme
        self.randomization_count = randomization_count
        self.sdp_tol = sdp_tol
        self.seed = seed

    def _options(self):
        if self.scheme not in _SCHEMES:
            raise ValueError(f"scheme must be one of {_SCHEMES}")
        if int(self.randomization_count) < 1 or not self.sdp_tol > 0:
            raise ValueError("randomization_count and sdp_tol must be positive")
        sdp = SolverOptions(tol=self.sdp_tol, randomization_count=int(self.randomization_count))
        return PhaseOptions(sdp=sdp, seed=self.seed), ZfOptions(sdp=sdp, seed=self.seed)

    def fit(self, X, qos):
        chans = _as_channel_list(X)
        if len(chans) != 1:
            raise ValueError("fit expects a single channel realization")
        qos = _check_qos(qos)
        noma_opts, zf_opts = self._options()
        ch = chans[0]
        if self.scheme == "hybrid":
            rep = solve_hybrid(ch, qos, HybridOptions(noma_opts, zf_opts))
            self.theta_, self.beamformers_, self.report_ = rep.theta, rep.beamformers, rep
        else:
            data = build_lifted(ch, qos)
            solver = optimize_phases_noma if self.scheme == "noma" else optimize_phases_zfbf
            res = solver(data, qos, noma_opts if self.scheme == "noma" else zf_opts)
            self.theta_, self.beamformers_, self.report_ = res.theta, res.beamformers, res
        self.power_ = self.beamformers_.power
        self.scheme_ = self.beamformers_.scheme
        self.qos_ = qos
        self.n_elements_ = ch.num_elements
        return self

    def transform(self, X):
        """Composite channels ``(h1, h2)`` of each channel set under the fitted phases."""
        check_is_fitted(self, "theta_")
        out = []
        for ch in _as_channel_list(X):
            if ch.num_elements != self.n_elements_:
                raise ValueError("channel set has a different number of surface elements")
            out.append((composite_channel(ch, self.theta_, 1), composite_channel(ch, self.theta_, 2)))
        return out

    def predict(self, X):
        """Closed-form power of the fitted scheme for each channel set at the fitted phases.

        Entries are ``nan`` where the scheme is unavailable (e.g. NOMA on
        channels that are not quasi-degraded).
        """
        check_is_fitted(self, "theta_")
        powers = []
        for h1, h2 in self.transform(X):
            try:
                if self.scheme_ == "noma":
                    ok = qd_holds(h1, h2, self.qos_).holds
                    powers.append(noma_power(h1, h2, self.qos_) if ok else np.nan)
                else:
                    powers.append(zf_power(h1, h2, self.qos_))
            except IrsNomaError:
                powers.append(np.nan)
        return np.array(powers)


class QuasiDegradationClassifier(BaseEstimator):
    """Label channel sets by whether some phase choice can make them quasi-degraded.

    ``predict`` applies the eigenvalue test on the lifted matrices; nothing is
    learned, so ``fit`` only records the QoS targets.
    """

    def __init__(self, qos=None):
        self.qos = qos

    def fit(self, X=None, y=None):
        self.qos_ = self.qos
        return self

    def decision_function(self, X):
        check_is_fitted(self, "qos_")
        return np.array([improved_qd(build_lifted(ch, self.qos_))[1] for ch in _as_channel_list(X)])

    def predict(self, X):
        check_is_fitted(self, "qos_")
        return np.array([improved_qd(build_lifted(ch, self.qos_))[0] for ch in _as_channel_list(X)])
