"""Scenario files, baselines and Monte-Carlo sweeps written to CSV."""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .beamforming import BeamformerPair, noma_beamformers, noma_power, zf_beamformers
from .channel_model import ChannelSet, PhaseVector, QosSpec, ScenarioConfig, build_lifted, \
    synthesize_channels
from .exceptions import CollinearChannels, ConfigError, IrsNomaError, ZeroChannel
from .hybrid import HybridOptions, SchemeDecision, SolveReport, solve_hybrid
from .noma_phase import PhaseOptions, minimize_ratio_sum
from .quasi_degradation import qd_holds
from .sdp import SolverOptions, extract_rank_one
from .zf_phase import ZfOptions, optimize_phases_zfbf

logger = logging.getLogger(__name__)

BASELINES = ("hybrid", "zfbf", "ofdma", "no_irs", "dpc_proxy")
EXPERIMENTS = ("sweep_antennas", "sweep_distance", "sweep_elements", "region_map", "single")
DEFAULT_SWEEPS = {
    "sweep_antennas": (2, 4, 6, 8),
    "sweep_elements": (5, 10, 20),
    "sweep_distance": (150.0, 175.0, 200.0, 225.0, 250.0),
    "single": (0,),
}
CSV_HEADER = ("experiment", "sweep_value", "trial", "baseline", "power_w", "status", "scheme",
              "qd_flag", "iterations")
OFDMA_LABEL = "ofdma_proxy"

_FLOAT_KEYS = {
    "bs_x", "bs_y", "irs_x", "irs_y", "u1_x", "u1_y", "u2_x", "u2_y", "pathloss_exp",
    "bandwidth_hz", "noise_dbm_hz", "rate1_bps_hz", "rate2_bps_hz", "sdp_tol",
}
_INT_KEYS = {"m_antennas", "n_elements", "seed", "trials", "randomization_count"}
_STR_KEYS = {"rate_convention", "baselines"}
CONFIG_KEYS = _FLOAT_KEYS | _INT_KEYS | _STR_KEYS


@dataclass(frozen=True)
class RunSettings:
    trials: int = 1
    baselines: tuple = BASELINES
    randomization_count: int = 1000
    sdp_tol: float = 1e-8

    def solver_options(self) -> SolverOptions:
        return SolverOptions(tol=self.sdp_tol, randomization_count=self.randomization_count)

    def hybrid_options(self, seed: int = 0) -> HybridOptions:
        sdp = self.solver_options()
        return HybridOptions(noma=PhaseOptions(sdp=sdp, seed=seed), zf=ZfOptions(sdp=sdp, seed=seed))


def parse_baselines(text) -> tuple:
    items = [t.strip() for t in str(text).replace(";", ",").split(",") if t.strip()]
    out = []
    for item in items:
        name = "ofdma" if item == OFDMA_LABEL else item
        if name not in BASELINES:
            raise ConfigError(f"unknown baseline {item!r}; choose from {', '.join(BASELINES)}")
        if name not in out:
            out.append(name)
    if not out:
        raise ConfigError("at least one baseline is required")
    return tuple(out)


def parse_config_text(text: str):
    """Parse ``key = value`` lines into ``(ScenarioConfig, RunSettings)``.

    Blank lines and ``#`` comments are ignored; unknown keys and malformed
    values raise :class:`ConfigError`.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            if key in _FLOAT_KEYS:
                values[key] = float(value)
            elif key in _INT_KEYS:
                values[key] = int(value)
            else:
                values[key] = value
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
    return _build_from_values(values)


def _build_from_values(values: dict):
    base = ScenarioConfig()
    v = values.get

    def pos(kx, ky, default):
        return (float(v(kx, default[0])), float(v(ky, default[1])))

    try:
        cfg = ScenarioConfig(
            num_antennas=int(v("m_antennas", base.num_antennas)),
            num_elements=int(v("n_elements", base.num_elements)),
            bs_pos=pos("bs_x", "bs_y", base.bs_pos),
            irs_pos=pos("irs_x", "irs_y", base.irs_pos),
            user1_pos=pos("u1_x", "u1_y", base.user1_pos),
            user2_pos=pos("u2_x", "u2_y", base.user2_pos),
            path_loss_exponent=float(v("pathloss_exp", base.path_loss_exponent)),
            bandwidth_hz=float(v("bandwidth_hz", base.bandwidth_hz)),
            noise_density_dbm_per_hz=float(v("noise_dbm_hz", base.noise_density_dbm_per_hz)),
            target_rates=(float(v("rate1_bps_hz", base.target_rates[0])),
                          float(v("rate2_bps_hz", base.target_rates[1]))),
            rate_convention=str(v("rate_convention", base.rate_convention)),
            seed=int(v("seed", base.seed)),
        )
        settings = RunSettings(
            trials=int(v("trials", 1)),
            baselines=parse_baselines(v("baselines", ",".join(BASELINES))),
            randomization_count=int(v("randomization_count", 1000)),
            sdp_tol=float(v("sdp_tol", 1e-8)),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if settings.trials < 1:
        raise ConfigError("trials must be >= 1")
    if settings.randomization_count < 1:
        raise ConfigError("randomization_count must be >= 1")
    if not settings.sdp_tol > 0:
        raise ConfigError("sdp_tol must be positive")
    return cfg, settings


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


@dataclass
class ExperimentSpec:
    experiment: str
    sweep_values: tuple = ()
    trials: int = 1
    baselines: tuple = BASELINES
    out: str | None = None
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    settings: RunSettings = field(default_factory=RunSettings)
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not self.sweep_values:
            self.sweep_values = DEFAULT_SWEEPS.get(self.experiment, ())
        if not self.sweep_values:
            raise ConfigError("sweep values must be nonempty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        self.baselines = parse_baselines(",".join(self.baselines))
        self.scenario = self.scenario.with_(seed=self.seed)

    def point_config(self, value) -> ScenarioConfig:
        cfg = self.scenario
        if self.experiment == "sweep_antennas":
            return cfg.with_(num_antennas=int(value))
        if self.experiment == "sweep_elements":
            return cfg.with_(num_elements=int(value))
        if self.experiment == "sweep_distance":
            return cfg.with_(user2_pos=(float(value), cfg.user2_pos[1]))
        return cfg


# -- baselines ---------------------------------------------------------------

def ofdma_snr_targets(qos: QosSpec) -> tuple:
    """SNR needed on half of the resource to carry the same rate."""
    return (1 + qos.r1_min) ** 2 - 1, (1 + qos.r2_min) ** 2 - 1


def ofdma_power_batch(data, qos: QosSpec, thetas):
    r1, r2 = ofdma_snr_targets(qos)
    Vt = np.vstack([np.exp(-1j * thetas.T), np.ones((1, thetas.shape[0]))])
    n1 = np.sum(np.abs(data.chi1 @ Vt) ** 2, axis=0)
    n2 = np.sum(np.abs(data.chi2 @ Vt) ** 2, axis=0)
    with np.errstate(divide="ignore"):
        return 0.5 * qos.sigma2 * (r1 / n1 + r2 / n2)


def ofdma_pair(h1, h2, qos: QosSpec) -> BeamformerPair:
    """Matched-filter beams, each active on half of the resource.

    The vectors carry the time-averaged energy so that their squared norms add
    up to the average transmit power.
    """
    r1, r2 = ofdma_snr_targets(qos)
    beams = []
    for h, r in ((h1, r1), (h2, r2)):
        n = float(np.vdot(h, h).real)
        if n <= 0:
            raise ZeroChannel("zero composite channel")
        p = qos.sigma2 * r / n
        beams.append(np.sqrt(0.5 * p) * h / np.sqrt(n))
    return BeamformerPair.from_vectors(beams[0], beams[1], "ofdma")


def ofdma_baseline(ch: ChannelSet, qos: QosSpec, opts: PhaseOptions | None = None) -> SolveReport:
    """Orthogonal-resource reference: each user gets half of the band."""
    opts = opts or PhaseOptions()
    data = build_lifted(ch, qos)
    for k, h in ((1, data.chi1), (2, data.chi2)):
        if not np.any(h):
            raise ZeroChannel(f"user {k} has no nonzero channel path")
    r1, r2 = ofdma_snr_targets(qos)
    weights = (0.5 * qos.sigma2 * r1, 0.5 * qos.sigma2 * r2)
    Q, trace = minimize_ratio_sum(weights, data, qos, replace(opts, lmi="off"), use_lmi=False)
    rng = np.random.default_rng(np.random.SeedSequence([opts.seed, 3]))
    theta, _ = extract_rank_one(Q, accept=lambda th: np.isfinite(ofdma_power_batch(data, qos, th)),
                                score=lambda th: ofdma_power_batch(data, qos, th),
                                opts=opts.sdp, rng=rng, extra=np.array(trace.iterate_phases))
    phases = PhaseVector(theta)
    h1, h2 = data.composite(phases)
    pair = ofdma_pair(h1, h2, qos)
    decision = SchemeDecision("ofdma", "orthogonal_resources", float("nan"), float("nan"))
    return SolveReport(decision, phases, pair, pair.power, {"ofdma": trace},
                       qd_at_theta=_qd_flag(h1, h2, qos))


def no_irs_baseline(ch: ChannelSet, qos: QosSpec) -> SolveReport:
    """Direct links only: NOMA closed form when quasi-degraded, else zero-forcing."""
    h1, h2 = ch.h_d1, ch.h_d2
    if qd_holds(h1, h2, qos).holds:
        pair = noma_beamformers(h1, h2, qos)
        decision = SchemeDecision("noma", "direct_qd_holds", float("nan"), float("nan"))
    else:
        try:
            pair = zf_beamformers(h1, h2, qos)
        except CollinearChannels as exc:
            raise CollinearChannels(f"no-surface baseline unavailable: {exc}") from exc
        decision = SchemeDecision("zfbf", "direct_qd_fails", float("nan"), float("nan"))
    return SolveReport(decision, PhaseVector(np.zeros(0)), pair, pair.power,
                       qd_at_theta=decision.chosen == "noma")


def zfbf_baseline(ch: ChannelSet, qos: QosSpec, opts: ZfOptions | None = None) -> SolveReport:
    data = build_lifted(ch, qos)
    res = optimize_phases_zfbf(data, qos, opts)
    h1, h2 = data.composite(res.theta)
    decision = SchemeDecision("zfbf", "requested", float("nan"), float("nan"))
    return SolveReport(decision, res.theta, res.beamformers, res.power, {"zfbf": res.trace},
                       qd_at_theta=_qd_flag(h1, h2, qos))


def _qd_flag(h1, h2, qos) -> bool:
    try:
        return qd_holds(h1, h2, qos).holds
    except ZeroChannel:
        return False


# -- experiment runner -------------------------------------------------------

def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def _row(spec, value, trial, baseline, power, status, scheme, qd, iters):
    return (spec.experiment, str(value), str(trial), baseline, _fmt(power), status, scheme,
            str(int(bool(qd))), str(int(iters)))


def _report_row(spec, value, trial, name, rep: SolveReport):
    scheme = rep.decision.chosen if name == "hybrid" else rep.scheme
    return _row(spec, value, trial, name, rep.power_w, "ok", scheme, rep.qd_at_theta, rep.iterations)


def run_trial(spec: ExperimentSpec, value, trial: int):
    """Rows for one sweep point and trial; every baseline sees the same channels."""
    cfg = spec.point_config(value)
    qos = QosSpec.from_config(cfg)
    ch = synthesize_channels(cfg, stream=trial)
    hopts = spec.settings.hybrid_options(seed=trial)
    rows = []
    hybrid = None
    hybrid_error = None
    if "hybrid" in spec.baselines or "dpc_proxy" in spec.baselines:
        try:
            hybrid = solve_hybrid(ch, qos, hopts)
        except IrsNomaError as exc:
            hybrid_error = type(exc).__name__
    for name in spec.baselines:
        label = OFDMA_LABEL if name == "ofdma" else name
        try:
            if name == "hybrid":
                if hybrid is None:
                    rows.append(_row(spec, value, trial, label, None, hybrid_error, "", False, 0))
                    continue
                rep = hybrid
            elif name == "dpc_proxy":
                if hybrid is None:
                    rows.append(_row(spec, value, trial, label, None, hybrid_error, "", False, 0))
                elif hybrid.qd_at_theta:
                    data = build_lifted(ch, qos)
                    h1, h2 = data.composite(hybrid.theta)
                    rows.append(_row(spec, value, trial, label, noma_power(h1, h2, qos), "ok", "noma",
                                     True, 0))
                else:
                    rows.append(_row(spec, value, trial, label, None, "no_qd", "", False, 0))
                continue
            elif name == "zfbf":
                rep = zfbf_baseline(ch, qos, hopts.zf)
            elif name == "ofdma":
                rep = ofdma_baseline(ch, qos, hopts.noma)
            else:
                rep = no_irs_baseline(ch, qos)
            row = _report_row(spec, value, trial, label, rep)
        except IrsNomaError as exc:
            row = _row(spec, value, trial, label, None, type(exc).__name__, "", False, 0)
        rows.append(row)
    return rows


def _run_point(args):
    spec, value, trial = args
    return run_trial(spec, value, trial)


def run_experiment(spec: ExperimentSpec):
    """Run every sweep point and trial; write the CSV if ``spec.out`` is set.

    Rows are ordered by sweep point, then trial, then baseline, regardless of
    the number of workers.  Returns the list of row tuples.
    """
    jobs = [(spec, value, t) for value in spec.sweep_values for t in range(spec.trials)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            chunks = list(pool.map(_run_point, jobs))
    else:
        chunks = [_run_point(job) for job in jobs]
    rows = [row for chunk in chunks for row in chunk]
    if spec.out:
        write_rows(rows, spec.out)
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(rows)
    return buf.getvalue()


def write_rows(rows, path) -> None:
    Path(path).write_bytes(rows_to_csv(rows).encode("utf-8"))


def median_power(rows, baseline, value=None) -> float:
    label = OFDMA_LABEL if baseline == "ofdma" else baseline
    vals = [float(r[4]) for r in rows
            if r[3] == label and r[5] == "ok" and (value is None or r[1] == str(value))]
    return float(np.median(vals)) if vals else float("nan")
