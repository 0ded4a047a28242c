"""Detection statistics from channel and protocol parameters.

Charlie sits midway, so each arm spans half the Alice-Bob distance. Effective
events are windows where only the right detector clicks. In a window where one
party sends, the pulse of intensity ``eta*mu`` is split evenly over the two
detectors. When both send, the combined ``2*eta*mu`` interferes onto the left
detector, except with probability ``e_d`` (misalignment), when it lands on the
right one. Dark counts fire independently in each detector with probability
``P_dc`` per window.

:func:`expected_counts` is the closed-form expectation of that model;
:func:`monte_carlo_counts` samples it window by window and acts as an
independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit
from .errors import AsymmetryError
from .model import ChannelParams, ObservedStatistics, ProtocolParams

SYMMETRY_TOL = 1e-12
MC_CHUNK = 1 << 20
MAX_MC_WINDOWS = 10**9

WINDOW_SAMPLE_DTYPE = np.dtype(
    [("alice_sent", "?"), ("bob_sent", "?"), ("left_click", "?"), ("right_click", "?")]
)


@dataclass(frozen=True)
class Transmittance:
    """Single-arm transmittance, detector efficiency included."""

    eta: float

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")


def arm_transmittance(channel: ChannelParams) -> Transmittance:
    arm_loss_db = 0.5 * (channel.atten_db_per_km * channel.distance_km + channel.extra_loss_db)
    return Transmittance(channel.det_efficiency * 10.0 ** (-arm_loss_db / 10.0))


def _symmetric_mu(params: ProtocolParams) -> float:
    if abs(params.mu_A - params.mu_B) > SYMMETRY_TOL:
        raise AsymmetryError(f"symmetric model needs mu_A == mu_B, got {params.mu_A} and {params.mu_B}")
    return params.mu_A


def count_arrays(mu, p_x, N, eta, P_dc, e_d):
    """Expected ``(n_Z, n_O, n_B)`` for array-valued ``mu`` and ``p_x``."""
    mu = np.asarray(mu, dtype=float)
    p_x = np.asarray(p_x, dtype=float)
    p_0 = 1.0 - p_x
    keep = 1.0 - P_dc
    half = np.exp(-eta * mu / 2.0)
    both = np.exp(-2.0 * eta * mu)
    n_Z = 2.0 * p_0 * p_x * keep * half * (1.0 - keep * half) * N
    n_O = p_0**2 * P_dc * keep * N
    n_B = p_x**2 * (e_d * keep * (1.0 - keep * both) + (1.0 - e_d) * P_dc * keep * both) * N
    return n_Z, n_O, n_B


def _assemble(n_Z, n_O, n_B) -> ObservedStatistics:
    M_S = n_Z + n_O + n_B
    # Z windows yield agreeing bits, O and B windows always disagree
    E_t = (n_O + n_B) / M_S if M_S > 0 else 0.0
    return ObservedStatistics(float(n_Z), float(n_O), float(n_B), float(M_S), float(E_t))


def expected_counts(params: ProtocolParams, eta: Transmittance | float, channel: ChannelParams) -> ObservedStatistics:
    mu = _symmetric_mu(params)
    eta = eta.eta if isinstance(eta, Transmittance) else float(eta)
    n_Z, n_O, n_B = count_arrays(mu, params.p_x, params.N, eta, channel.P_dc, channel.e_d)
    return _assemble(n_Z, n_O, n_B)


# --- Monte Carlo -----------------------------------------------------------------------


@dataclass(frozen=True)
class _ClickTable:
    p_x: float
    e_d: float
    # P(left silent), P(right clicks) per window type
    z_left_silent: float
    z_right_click: float
    o_left_silent: float
    o_right_click: float
    b_left_silent: float
    b_right_click: float
    bm_left_silent: float
    bm_right_click: float

    def as_array(self):
        return np.array(
            [
                self.p_x, self.e_d,
                self.z_left_silent, self.z_right_click,
                self.o_left_silent, self.o_right_click,
                self.b_left_silent, self.b_right_click,
                self.bm_left_silent, self.bm_right_click,
            ]
        )


def _click_table(params: ProtocolParams, eta: float, channel: ChannelParams) -> _ClickTable:
    mu = _symmetric_mu(params)
    keep = 1.0 - channel.P_dc
    half = keep * math.exp(-eta * mu / 2.0)
    both = keep * math.exp(-2.0 * eta * mu)
    return _ClickTable(
        p_x=params.p_x,
        e_d=channel.e_d,
        z_left_silent=half,
        z_right_click=1.0 - half,
        o_left_silent=keep,
        o_right_click=channel.P_dc,
        b_left_silent=both,
        b_right_click=channel.P_dc,
        bm_left_silent=keep,
        bm_right_click=1.0 - both,
    )


def _flags_numpy(u, t):
    alice = u[0] < t[0]
    bob = u[1] < t[0]
    n_sent = alice.astype(np.int8) + bob.astype(np.int8)
    misaligned = u[2] < t[1]
    left_silent = np.where(n_sent == 1, t[2], np.where(n_sent == 0, t[4], np.where(misaligned, t[8], t[6])))
    right_click = np.where(n_sent == 1, t[3], np.where(n_sent == 0, t[5], np.where(misaligned, t[9], t[7])))
    return alice, bob, u[3] >= left_silent, u[4] < right_click


def _tally_numpy(u, t):
    alice, bob, left, right = _flags_numpy(u, t)
    effective = right & ~left
    n_sent = alice.astype(np.int8) + bob.astype(np.int8)
    return np.array(
        [
            np.count_nonzero(effective & (n_sent == 1)),
            np.count_nonzero(effective & (n_sent == 0)),
            np.count_nonzero(effective & (n_sent == 2)),
        ],
        dtype=np.int64,
    )


@njit(cache=True)
def _tally_numba(u, t):
    out = np.zeros(3, dtype=np.int64)
    for i in range(u.shape[1]):
        n_sent = (u[0, i] < t[0]) + (u[1, i] < t[0])
        if n_sent == 1:
            ls, rc = t[2], t[3]
        elif n_sent == 0:
            ls, rc = t[4], t[5]
        elif u[2, i] < t[1]:
            ls, rc = t[8], t[9]
        else:
            ls, rc = t[6], t[7]
        if u[4, i] < rc and u[3, i] < ls:
            if n_sent == 1:
                out[0] += 1
            elif n_sent == 0:
                out[1] += 1
            else:
                out[2] += 1
    return out


def _chunk_uniforms(windows: int, seed: int):
    n_chunks = max(1, -(-windows // MC_CHUNK))
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    remaining = windows
    for child in children:
        m = min(MC_CHUNK, remaining)
        remaining -= m
        yield np.random.Generator(np.random.PCG64(child)).random((5, m))


def monte_carlo_counts(
    params: ProtocolParams,
    eta: Transmittance | float,
    channel: ChannelParams,
    windows: int,
    seed: int = 0,
) -> ObservedStatistics:
    """Sample ``windows`` time windows and count effective Z/O/B events.

    Five uniforms are drawn per window (two source choices, misalignment, left
    and right click) from per-chunk substreams spawned off ``seed``, so the
    result is identical for both kernel backends.
    """
    windows = int(windows)
    if not 0 <= windows <= MAX_MC_WINDOWS:
        raise ValueError(f"windows must lie in [0, {MAX_MC_WINDOWS}]")
    eta = eta.eta if isinstance(eta, Transmittance) else float(eta)
    table = _click_table(params, eta, channel).as_array()
    tally = _tally_numba if _accel.backend() == "numba" else _tally_numpy
    counts = np.zeros(3, dtype=np.int64)
    if windows:
        for u in _chunk_uniforms(windows, seed):
            counts += tally(u, table)
    return _assemble(*(float(c) for c in counts))


def sample_windows(
    params: ProtocolParams,
    eta: Transmittance | float,
    channel: ChannelParams,
    windows: int,
    seed: int = 0,
) -> np.ndarray:
    """Per-window outcomes as a structured array of :data:`WINDOW_SAMPLE_DTYPE`.

    Uses the same random stream as :func:`monte_carlo_counts`, so tallying
    these flags reproduces its counts. Meant for small runs.
    """
    eta = eta.eta if isinstance(eta, Transmittance) else float(eta)
    table = _click_table(params, eta, channel).as_array()
    parts = []
    for u in _chunk_uniforms(int(windows), seed):
        alice, bob, left, right = _flags_numpy(u, table)
        rec = np.empty(u.shape[1], dtype=WINDOW_SAMPLE_DTYPE)
        rec["alice_sent"], rec["bob_sent"] = alice, bob
        rec["left_click"], rec["right_click"] = left, right
        parts.append(rec)
    if not parts:
        return np.empty(0, dtype=WINDOW_SAMPLE_DTYPE)
    return np.concatenate(parts)
