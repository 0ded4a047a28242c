"""Discrete-time simulation of channel phase drift and two-phase-scan feedback.

Phase convention: with channel drift ``phi`` and modulator voltage ``V`` the
interference phase seen by the detectors is ``phi + pi * V / V_pi``. Detector
D0 ("left") records ``C0 cos(phi_eff) + C0 + Cd`` and D1 ("right") the same
with ``phi_eff + pi``. The zero-phase voltage ``V0`` is the voltage that makes
``phi_eff = 0 (mod 2 pi)``.

A two-phase scan probes at ``V_i`` and ``V_i + V_pi/2``. The first row of the
counting matrix gives ``cos`` of the probe offset and the second gives
``-sin``. From the two rows :func:`estimate_v0` builds the arccos candidate
``V'`` and the arcsin candidate ``V''`` and averages them on the circle of
period ``2 V_pi``. The background term is ignored during estimation.

The feedback loop runs once per 40 us frame: half a frame of drift, the scan
during the reference window, the voltage update, another half frame of drift,
then the quantum window. It is a numba kernel; the numpy backend runs an
equivalent Python loop.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _accel
from ._accel import njit
from .errors import EmptyMatrix

MAX_DURATION_S = 3600.0
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class FrameTiming:
    frame_us: float = 40.0
    reference_us: float = 19.6
    quantum_us: float = 20.0
    recovery_us: float = 0.4
    clock_hz: float = 1.25e9

    def __post_init__(self):
        total = self.reference_us + self.quantum_us + self.recovery_us
        if abs(total - self.frame_us) > 1e-9:
            raise ValueError(f"frame parts sum to {total} us, expected {self.frame_us}")

    @property
    def frame_s(self) -> float:
        return self.frame_us * 1e-6

    @property
    def half_reference_us(self) -> float:
        return self.reference_us / 2.0

    def slots(self, duration_us: float) -> int:
        """Clock slots in a segment of the given length."""
        return int(round(duration_us * 1e-6 * self.clock_hz))

    @property
    def duty_cycle(self) -> float:
        return self.quantum_us / self.frame_us


@dataclass(frozen=True)
class InterferenceModel:
    """Counts per reference half-window: amplitude ``C0`` and background ``Cd``.

    Defaults put the constructive port at ``2 C0 + Cd = 90000``.
    """

    C0: float = 44950.0
    Cd: float = 100.0
    V_pi: float = 4.0
    v_range: tuple[float, float] = (-15.54, 15.96)

    def __post_init__(self):
        if not self.C0 > 0.0:
            raise ValueError("C0 must be positive")
        if not self.Cd >= 0.0:
            raise ValueError("Cd must be non-negative")
        if not self.V_pi > 0.0:
            raise ValueError("V_pi must be positive")
        lo, hi = self.v_range
        if not hi - lo >= 2.0 * self.V_pi:
            raise ValueError("v_range must span at least one 2*V_pi period")

    @property
    def peak(self) -> float:
        return 2.0 * self.C0 + self.Cd


@dataclass(frozen=True)
class DriftModel:
    """Wiener-process phase drift of strength ``sigma`` rad/sqrt(s)."""

    sigma_rad_per_sqrt_s: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.sigma_rad_per_sqrt_s >= 0.0:
            raise ValueError("sigma must be non-negative")


@dataclass(frozen=True)
class CountingMatrix:
    N0: float
    M0: float
    N1: float
    M1: float


@dataclass(frozen=True)
class PhaseLockState:
    phi_true: float = 0.0
    V_current: float = 0.0
    counting_matrix: CountingMatrix | None = None
    V0_estimate: float | None = None


def zero_phase_voltage(phi_true: float, V_pi: float) -> float:
    """Voltage in ``[0, 2 V_pi)`` cancelling the drift ``phi_true``."""
    return (-phi_true * V_pi / math.pi) % (2.0 * V_pi)


def circular_voltage_distance(a: float, b: float, V_pi: float) -> float:
    """``|a - b|`` modulo ``2 V_pi``."""
    period = 2.0 * V_pi
    d = (a - b) % period
    return min(d, period - d)


# --- counts ----------------------------------------------------------------------------


def detector_counts(phi_eff: float, model: InterferenceModel, noisy: bool = False, seed=None):
    """Mean (or Poisson-sampled) counts ``(C_left, C_right)`` at interference phase ``phi_eff``."""
    left = model.C0 * math.cos(phi_eff) + model.C0 + model.Cd
    right = model.C0 * math.cos(phi_eff + math.pi) + model.C0 + model.Cd
    left, right = max(left, 0.0), max(right, 0.0)
    if not noisy:
        return left, right
    rng = np.random.default_rng(seed)
    sample = rng.poisson([left, right])
    return float(sample[0]), float(sample[1])


def two_phase_scan(
    state: PhaseLockState,
    model: InterferenceModel,
    timing: FrameTiming | None = None,
    seed=None,
    noisy: bool = True,
) -> CountingMatrix:
    """Counting matrix from probes at ``V_current`` and ``V_current + V_pi/2``.

    Each row is accumulated over one reference half-window; drift within the
    19.6 us reference window is neglected.
    """
    rng = np.random.default_rng(seed) if noisy else None
    phi0 = state.phi_true + math.pi * state.V_current / model.V_pi
    rows = []
    for phi in (phi0, phi0 + math.pi / 2.0):
        left, right = detector_counts(phi, model)
        if rng is not None:
            left, right = (float(v) for v in rng.poisson([left, right]))
        rows.extend([left, right])
    return CountingMatrix(*rows)


@njit(cache=True)
def _wrap_voltage(v, V_pi, lo, hi):
    period = 2.0 * V_pi
    while v > hi:
        v -= period
    while v < lo:
        v += period
    return v


@njit(cache=True)
def _estimate_v0_core(N0, M0, N1, M1, V_i, V_pi):
    r0 = (N0 - M0) / (N0 + M0)
    r1 = (N1 - M1) / (N1 + M1)
    r0 = min(1.0, max(-1.0, r0))
    r1 = min(1.0, max(-1.0, r1))
    V_c = V_pi / math.pi * math.acos(r0)
    V_s = V_pi / math.pi * math.asin(r1)
    # second row measures -sin of the probe offset
    if 1.0 - 2.0 * N1 / (N1 + M1) > 0.0:
        v1 = V_i - V_c
    else:
        v1 = V_i + V_c
    if 2.0 * N0 / (N0 + M0) - 1.0 > 0.0:
        v2 = V_i + V_s
    else:
        v2 = V_i - V_s - V_pi
    # average on the circle of period 2*V_pi
    period = 2.0 * V_pi
    diff = (v2 - v1) % period
    if diff > V_pi:
        diff -= period
    return v1 + 0.5 * diff


def estimate_v0(matrix: CountingMatrix, V_i: float, V_pi: float) -> float:
    """Zero-phase voltage from a two-phase-scan counting matrix.

    ``V'`` comes from the arccos of the first row with its sign taken from the
    second row; ``V''`` from the arcsin of the second row with its branch
    taken from the first. Ratios are clamped to ``[-1, 1]`` before inversion.
    The result is defined modulo ``2 V_pi``.
    """
    if matrix.N0 + matrix.M0 <= 0.0 or matrix.N1 + matrix.M1 <= 0.0:
        raise EmptyMatrix("counting matrix has an empty row")
    return float(_estimate_v0_core.py_func(matrix.N0, matrix.M0, matrix.N1, matrix.M1, V_i, V_pi))


# --- feedback loop ---------------------------------------------------------------------


@njit(cache=True)
def _feedback_numba(n_frames, frame_s, sigma, C0, Cd, V_pi, v_lo, v_hi, enabled, record_every, noisy, seed):
    np.random.seed(seed)
    n_rec = n_frames // record_every
    t_out = np.empty(n_rec)
    counts_out = np.empty(n_rec)
    res_out = np.empty(n_rec)
    v_out = np.empty(n_rec)
    err_out = np.empty(n_rec)
    step = sigma * math.sqrt(frame_s / 2.0)
    phi = 0.0
    V = 0.0
    err_acc = 0.0
    for k in range(n_frames):
        phi += step * np.random.standard_normal()
        p0 = phi + math.pi * V / V_pi
        lam = np.empty(4)
        lam[0] = C0 * math.cos(p0) + C0 + Cd
        lam[1] = C0 * math.cos(p0 + math.pi) + C0 + Cd
        lam[2] = C0 * math.cos(p0 + 0.5 * math.pi) + C0 + Cd
        lam[3] = C0 * math.cos(p0 + 1.5 * math.pi) + C0 + Cd
        for j in range(4):
            lam[j] = max(lam[j], 0.0)
            if noisy:
                lam[j] = float(np.random.poisson(lam[j]))
        N0 = lam[0]
        if enabled[k] and lam[0] + lam[1] > 0.0 and lam[2] + lam[3] > 0.0:
            V = _wrap_voltage(_estimate_v0_core(lam[0], lam[1], lam[2], lam[3], V, V_pi), V_pi, v_lo, v_hi)
        phi += step * np.random.standard_normal()
        res = (phi + math.pi * V / V_pi + math.pi) % (2.0 * math.pi) - math.pi
        err_acc += 0.5 * (1.0 - math.cos(res))
        if (k + 1) % record_every == 0:
            i = (k + 1) // record_every - 1
            t_out[i] = (k + 1) * frame_s
            counts_out[i] = N0
            res_out[i] = res
            v_out[i] = V
            err_out[i] = err_acc / record_every
            err_acc = 0.0
    return t_out, counts_out, res_out, v_out, err_out


def _feedback_numpy(n_frames, frame_s, sigma, C0, Cd, V_pi, v_lo, v_hi, enabled, record_every, noisy, seed):
    rng = np.random.default_rng(seed)
    n_rec = n_frames // record_every
    t_out, counts_out, res_out, v_out, err_out = (np.empty(n_rec) for _ in range(5))
    step = sigma * math.sqrt(frame_s / 2.0)
    estimate = _estimate_v0_core.py_func
    wrap = _wrap_voltage.py_func
    offsets = np.array([0.0, math.pi, 0.5 * math.pi, 1.5 * math.pi])
    phi = 0.0
    V = 0.0
    err_acc = 0.0
    block = 65536
    for start in range(0, n_frames, block):
        stop = min(start + block, n_frames)
        kicks = step * rng.standard_normal((stop - start, 2))
        for k in range(start, stop):
            phi += kicks[k - start, 0]
            p0 = phi + math.pi * V / V_pi
            lam = np.maximum(C0 * np.cos(p0 + offsets) + C0 + Cd, 0.0)
            if noisy:
                lam = rng.poisson(lam).astype(float)
            N0, M0, N1, M1 = lam
            if enabled[k] and N0 + M0 > 0.0 and N1 + M1 > 0.0:
                V = wrap(estimate(N0, M0, N1, M1, V, V_pi), V_pi, v_lo, v_hi)
            phi += kicks[k - start, 1]
            res = (phi + math.pi * V / V_pi + math.pi) % TWO_PI - math.pi
            err_acc += 0.5 * (1.0 - math.cos(res))
            if (k + 1) % record_every == 0:
                i = (k + 1) // record_every - 1
                t_out[i] = (k + 1) * frame_s
                counts_out[i] = N0
                res_out[i] = res
                v_out[i] = V
                err_out[i] = err_acc / record_every
                err_acc = 0.0
    return t_out, counts_out, res_out, v_out, err_out


@dataclass(frozen=True)
class FeedbackTrace:
    """Samples of the loop every ``sample_interval_s``.

    ``counts`` is D0's count at the applied voltage in the sampled frame,
    ``phi_residual`` the interference phase during its quantum window, and
    ``err_mean`` the mean of ``(1 - cos(residual)) / 2`` over all frames in
    the sampling interval.
    """

    time_s: np.ndarray
    counts: np.ndarray
    phi_residual: np.ndarray
    v_applied: np.ndarray
    enabled: np.ndarray
    err_mean: np.ndarray
    model: InterferenceModel = field(repr=False, default_factory=InterferenceModel)

    def __len__(self) -> int:
        return len(self.time_s)

    def visibility(self) -> float:
        """Mean ``cos(residual)`` over enabled samples: 1 for a perfect lock."""
        mask = self.enabled
        if not mask.any():
            return float("nan")
        return float(np.mean(1.0 - 2.0 * self.err_mean[mask]))

    def write_csv(self, path: str | Path, e_floor: float | None = None) -> None:
        write_trace_csv(path, self, e_floor)


def parse_pattern(pattern: str) -> list[tuple[bool, float]]:
    """``"on:60,off:60"`` -> ``[(True, 60.0), (False, 60.0)]``."""
    segments = []
    for part in pattern.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            state, seconds = part.split(":")
            seconds = float(seconds)
        except ValueError as exc:
            raise ValueError(f"bad pattern segment {part!r}") from exc
        state = state.strip().lower()
        if state not in ("on", "off") or not seconds >= 0.0 or not math.isfinite(seconds):
            raise ValueError(f"bad pattern segment {part!r}")
        segments.append((state == "on", seconds))
    if not segments:
        raise ValueError("empty pattern")
    return segments


def _enabled_mask(enabled, n_frames: int, frame_s: float) -> np.ndarray:
    if isinstance(enabled, (bool, np.bool_)):
        return np.full(n_frames, bool(enabled))
    mask = np.zeros(n_frames, dtype=np.bool_)
    start = 0
    for on, seconds in enabled:
        stop = min(n_frames, start + int(round(seconds / frame_s)))
        mask[start:stop] = on
        start = stop
    return mask


def run_feedback(
    duration_s: float,
    timing: FrameTiming | None = None,
    model: InterferenceModel | None = None,
    drift: DriftModel | None = None,
    enabled=True,
    seed: int | None = None,
    *,
    sample_interval_s: float = 0.1,
    noisy: bool = True,
) -> FeedbackTrace:
    """Simulate the loop for ``duration_s`` seconds.

    ``enabled`` is a bool or a list of ``(on, seconds)`` segments (see
    :func:`parse_pattern`); while off, the voltage is frozen. The loop starts
    locked (zero drift, zero voltage). ``seed`` defaults to ``drift.seed``.
    """
    timing = timing or FrameTiming()
    model = model or InterferenceModel()
    drift = drift or DriftModel()
    if not 0.0 <= duration_s <= MAX_DURATION_S:
        raise ValueError(f"duration must lie in [0, {MAX_DURATION_S}] s")
    seed = drift.seed if seed is None else seed
    frame_s = timing.frame_s
    n_frames = int(round(duration_s / frame_s))
    record_every = max(1, int(round(sample_interval_s / frame_s)))
    mask = _enabled_mask(enabled, n_frames, frame_s)
    kernel = _feedback_numba if _accel.backend() == "numba" else _feedback_numpy
    lo, hi = model.v_range
    t, counts, res, v, err = kernel(
        n_frames, frame_s, drift.sigma_rad_per_sqrt_s, model.C0, model.Cd, model.V_pi,
        lo, hi, mask, record_every, noisy, int(seed),
    )
    rec_enabled = mask[record_every - 1 :: record_every][: len(t)]
    return FeedbackTrace(t, counts, res, v, rec_enabled, err, model)


def qber_trace(
    duration_s: float,
    timing: FrameTiming | None = None,
    model: InterferenceModel | None = None,
    drift: DriftModel | None = None,
    e_floor: float = 0.0359,
    seed: int | None = None,
    *,
    bin_s: float = 10.0,
    clicks_per_bin: float | None = None,
):
    """QBER per ``bin_s`` bin with the loop enabled: ``e_floor`` plus the mean phase-error contribution.

    ``clicks_per_bin`` adds binomial counting noise to each bin.
    Returns ``(time_s, qber)`` arrays; ``time_s`` marks bin ends.
    """
    timing = timing or FrameTiming()
    frames_per_bin = int(round(bin_s / timing.frame_s))
    # sample on a divisor of the bin so bins hold whole samples
    sample_frames = math.gcd(frames_per_bin, 2500) or 1
    trace = run_feedback(
        duration_s, timing, model, drift, True, seed,
        sample_interval_s=sample_frames * timing.frame_s,
    )
    per_bin = frames_per_bin // sample_frames
    n_bins = len(trace) // per_bin
    err = trace.err_mean[: n_bins * per_bin].reshape(n_bins, per_bin).mean(axis=1)
    qber = e_floor + err
    if clicks_per_bin:
        rng = np.random.default_rng(None if seed is None else seed + 1)
        n = int(clicks_per_bin)
        qber = rng.binomial(n, np.clip(qber, 0.0, 1.0)) / n
    times = (np.arange(n_bins) + 1) * per_bin * sample_frames * timing.frame_s
    return times, qber


TRACE_COLUMNS = ["time_s", "counts", "phi_residual_rad", "v_applied", "qber"]


def write_trace_csv(path: str | Path, trace: FeedbackTrace, e_floor: float | None = None) -> None:
    """Write the trace as CSV; with ``e_floor`` a per-sample QBER column is added."""
    qber = None if e_floor is None else e_floor + trace.err_mean
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        cols = TRACE_COLUMNS if qber is not None else TRACE_COLUMNS[:-1]
        writer.writerow(cols)
        for i in range(len(trace)):
            row = [
                f"{trace.time_s[i]:.6f}",
                f"{trace.counts[i]:.0f}",
                f"{trace.phi_residual[i]:.6e}",
                f"{trace.v_applied[i]:.6f}",
            ]
            if qber is not None:
                row.append(f"{qber[i]:.6e}")
            writer.writerow(row)
