"""Quick invariant checks runnable from the command line."""
from __future__ import annotations

import numpy as np

from .beamforming import evaluate_sinr, noma_beamformers, noma_power, zf_beamformers, zf_power
from .channel_model import (PhaseVector, QosSpec, ScenarioConfig, build_lifted, lift, random_phases,
                            synthesize_channels)
from .noma_phase import PhaseOptions, optimize_phases_noma
from .quasi_degradation import qd_holds
from .sdp import SdpProblem, complexify, realify, solve
from .zf_phase import optimize_phases_zfbf


def _random_pair(rng, m):
    h1 = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    h2 = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return h1, h2


def check_lifted_identities(rng):
    cfg = ScenarioConfig(num_antennas=3, num_elements=6)
    for t in range(20):
        ch = synthesize_channels(cfg.with_(seed=int(rng.integers(1 << 30))), t)
        data = build_lifted(ch, None)
        theta = random_phases(6, rng)
        h1, h2 = data.composite(theta)
        t1, t2, tqr = data.traces(lift(theta).Q)
        ref = abs(np.vdot(h1, h1))
        if abs(t1 - np.vdot(h1, h1).real) > 1e-10 * ref or abs(tqr - np.vdot(h1, h2)) > 1e-10 * ref:
            return False
    return True


def check_noma_tightness(rng):
    qos = QosSpec(1.0, 1.0, 1.0)
    for _ in range(200):
        h1, h2 = _random_pair(rng, 4)
        h1 = 4 * h1
        if not qd_holds(h1, h2, qos).holds:
            continue
        pair = noma_beamformers(h1, h2, qos)
        rep = evaluate_sinr(h1, h2, pair, qos)
        if abs(rep.snr1 - 1) > 1e-8 or abs(min(rep.sinr21, rep.sinr22) - 1) > 1e-8:
            return False
        if abs(pair.power - noma_power(h1, h2, qos)) > 1e-10 * pair.power:
            return False
    return True


def check_zf_exactness(rng):
    qos = QosSpec(1.0, 2.0, 0.5)
    for _ in range(200):
        h1, h2 = _random_pair(rng, 3)
        pair = zf_beamformers(h1, h2, qos)
        scale = np.linalg.norm(h1) * np.linalg.norm(pair.w2) + np.linalg.norm(h2) * np.linalg.norm(pair.w1)
        if abs(np.vdot(h2, pair.w1)) > 1e-10 * scale or abs(np.vdot(h1, pair.w2)) > 1e-10 * scale:
            return False
        if abs(pair.power - zf_power(h1, h2, qos)) > 1e-10 * pair.power:
            return False
    return True


def check_noma_beats_zf(rng):
    qos = QosSpec(3.0, 1.0, 1.0)
    for _ in range(2000):
        h1, h2 = _random_pair(rng, 2)
        if noma_power(h1, h2, qos) > zf_power(h1, h2, qos) * (1 + 1e-12):
            return False
    return True


def check_sdp_analytic(rng):
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    eqs = [([np.diag([1.0, 0.0])], 1.0), ([np.diag([0.0, 1.0])], 1.0)]
    sol = solve(SdpProblem([2], [C], eqs, True))
    if sol.status != "optimal" or abs(sol.value - 2.0) > 1e-6 * 2:
        return False
    H = np.array([[0, -1j], [1j, 0]])
    ev = np.sort(np.linalg.eigvalsh(realify(H)))
    return bool(np.allclose(ev, [-1, -1, 1, 1]) and np.allclose(complexify(realify(H)), H))


def check_algorithms(rng):
    cfg = ScenarioConfig(num_antennas=2, num_elements=3, seed=int(rng.integers(1 << 30)))
    qos = QosSpec.from_config(cfg)
    data = build_lifted(synthesize_channels(cfg, 0), qos)
    zf = optimize_phases_zfbf(data, qos)
    for outer in zf.trace.outer:
        g = [r.g_value for r in outer.inner]
        if np.any(np.diff(g) > 1e-9 * max(abs(x) for x in g)):
            return False
    if abs(zf.power - zf_power(*data.composite(zf.theta), qos)) > 1e-10 * zf.power:
        return False
    try:
        res = optimize_phases_noma(data, qos, PhaseOptions())
    except Exception:
        return True
    f = res.trace.f_values
    return bool(np.all(np.diff(f) >= -1e-9 * np.abs(f).max()))


CHECKS = (
    ("lifted identities", check_lifted_identities),
    ("NOMA QoS tightness", check_noma_tightness),
    ("zero-forcing exactness", check_zf_exactness),
    ("NOMA power <= ZF power", check_noma_beats_zf),
    ("SDP analytic cases", check_sdp_analytic),
    ("phase optimizer traces", check_algorithms),
)


def run_selftest(seed: int = 0, echo=print):
    """Run every check; returns ``(passed, failed)``."""
    rng = np.random.default_rng(seed)
    passed = failed = 0
    for name, fn in CHECKS:
        try:
            ok = bool(fn(rng))
        except Exception as exc:  # a crash counts as a failure, not an abort
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        echo(f"{'PASS' if ok else 'FAIL'}  {name}")
        passed += ok
        failed += not ok
    echo(f"{passed} passed, {failed} failed")
    return passed, failed
