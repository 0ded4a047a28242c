"""Phase-flip error bound and finite-key secret key rates.

The public step functions (:func:`phase_error_expectation`,
:func:`phase_error_rate`, :func:`key_rate_collective`,
:func:`key_rate_coherent`) work on records. :func:`evaluate` chains them for
one parameter point and :func:`rate_grid` does the same over arrays of
``(mu, p_x)`` for the optimizer. Both go through the same array cores below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import SYMMETRY_TOL, arm_transmittance, count_arrays
from .errors import AsymmetryError, ConfigError, DomainError, ZeroWindows
from .mapping import equivalent_intensity_from_extinction, equivalent_pair
from .model import (
    ChannelParams,
    EpsilonBudget,
    KeyRateReport,
    ObservedStatistics,
    ProtocolParams,
    SourceBounds,
    validate,
)
from .stats import LN2, binary_entropy, expected_upper_array, real_upper_array

EQ2_COSTS = ("error_correction", "correctness", "privacy_amplification", "smooth_min_entropy")


@dataclass(frozen=True)
class PhaseErrorTerms:
    c0: float
    c1: float
    c2_bar_sq: float
    n_O_exp_U: float
    n_B_exp_U: float
    N_ph_expected: float


# --- array cores ---------------------------------------------------------------------


def _c_terms(mu_A, mu_B):
    s = (np.asarray(mu_A, dtype=float) + np.asarray(mu_B, dtype=float)) / 4.0
    c0 = np.exp(-s)
    c1 = np.exp(s)
    c2_sq = (c0 + c1 - 2.0 * np.exp(-np.asarray(mu_A) / 2.0)) * (c0 + c1 - 2.0 * np.exp(-np.asarray(mu_B) / 2.0))
    return c0, c1, c2_sq


def _phase_error_arrays(mu_A, mu_B, p_x, N, n_O, n_B, log_eps):
    p_x = np.asarray(p_x, dtype=float)
    p_0 = 1.0 - p_x
    n_O = np.asarray(n_O, dtype=float)
    n_B = np.asarray(n_B, dtype=float)
    c0, c1, c2_sq = _c_terms(mu_A, mu_B)
    c2 = np.sqrt(np.maximum(c2_sq, 0.0))
    O_U, _ = expected_upper_array(n_O, log_eps)
    B_U, _ = expected_upper_array(n_B, log_eps)
    # a source that is never chosen contributes no windows to bound
    O_U = np.where((p_0 == 0.0) & (n_O == 0.0), 0.0, O_U)
    B_U = np.where((p_x == 0.0) & (n_B == 0.0), 0.0, B_U)
    with np.errstate(divide="ignore", invalid="ignore"):
        o_term = np.where(O_U > 0.0, p_x / p_0 * c0**2 * O_U, 0.0)
        b_term = np.where(B_U > 0.0, p_0 / p_x * c1**2 * B_U, 0.0)
    # (p0*px/2)[...] multiplied through so that p0 or px = 0 stays finite
    N_ph = 0.5 * (
        o_term
        + b_term
        + 2.0 * c0 * c1 * np.sqrt(O_U * B_U)
        + 2.0 * p_x * c0 * c2 * np.sqrt(N * O_U)
        + 2.0 * p_0 * c1 * c2 * np.sqrt(N * B_U)
        + p_0 * p_x * c2_sq * N
    )
    return c0, c1, c2_sq, O_U, B_U, N_ph


def _phase_error_rate_arrays(N_ph, n_Z, log_eps):
    n_Z = np.asarray(n_Z, dtype=float)
    N_ph_bar, _ = real_upper_array(N_ph, log_eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        e_ph = np.where(n_Z > 0.0, np.minimum(N_ph_bar / n_Z, 1.0), 1.0)
    return N_ph_bar, e_ph


def _collective_arrays(n_Z, M_S, E_t, e_ph, f_ec, budget: EpsilonBudget):
    n_Z = np.asarray(n_Z, dtype=float)
    # H is symmetric about 1/2; a phase error rate at or past 1/2 leaves no secrecy
    h_ph = binary_entropy(np.minimum(e_ph, 0.5))
    gain = n_Z * (1.0 - h_ph)
    costs = {
        "error_correction": f_ec * np.asarray(M_S) * binary_entropy(np.asarray(E_t, dtype=float)),
        "correctness": np.full_like(n_Z, (LN2 - budget.log_eps_cor) / LN2),
        "privacy_amplification": np.full_like(n_Z, -2.0 * budget.log_eps_PA / LN2),
        "smooth_min_entropy": 7.0 * np.sqrt(n_Z * (LN2 - budget.log_eps_bar) / LN2),
    }
    raw_bits = gain - sum(costs[k] for k in EQ2_COSTS)
    return gain, raw_bits, costs


def postselection_bits(N: float, d: int) -> float:
    """Key shortening ``2 (d^2-1) log2(N+1)`` that lifts the rate to coherent attacks."""
    return 2.0 * (d * d - 1) * math.log1p(N) / LN2


# --- record-level steps ------------------------------------------------------------


def phase_error_expectation(
    params: ProtocolParams,
    stats: ObservedStatistics,
    *,
    log_xi: float | None = None,
) -> PhaseErrorTerms:
    """Upper bound on the expected number of phase errors among effective Z windows.

    ``params.mu_A``/``mu_B`` must already be the equivalent intensities. The
    Chernoff failure probability defaults to ``eps`` from the budget.
    """
    if params.p_o == 0.0 and stats.n_O > 0.0:
        raise DomainError("n_O > 0 with p_o = 0")
    if params.p_x == 0.0 and stats.n_B > 0.0:
        raise DomainError("n_B > 0 with p_x = 0")
    if log_xi is None:
        log_xi = params.budget().log_eps
    c0, c1, c2_sq, O_U, B_U, N_ph = _phase_error_arrays(
        params.mu_A, params.mu_B, params.p_x, params.N, stats.n_O, stats.n_B, log_xi
    )
    return PhaseErrorTerms(float(c0), float(c1), float(c2_sq), float(O_U), float(B_U), float(N_ph))


def phase_error_rate(
    terms: PhaseErrorTerms,
    n_Z: float,
    eps: float | None = None,
    *,
    log_eps: float | None = None,
) -> float:
    """``real_upper(<N_ph>) / n_Z`` clamped to ``[0, 1]``."""
    if not n_Z > 0.0:
        raise ZeroWindows("no effective Z windows")
    if log_eps is None:
        if eps is None or not 0.0 < eps < 1.0:
            raise DomainError("give eps in (0, 1) or log_eps")
        log_eps = math.log(eps)
    _, e_ph = _phase_error_rate_arrays(np.array([terms.N_ph_expected]), np.array([n_Z]), log_eps)
    return float(e_ph[0])


def key_rate_collective(
    params: ProtocolParams,
    stats: ObservedStatistics,
    e_ph: float,
    terms: PhaseErrorTerms | None = None,
    *,
    N_ph_bar: float = float("nan"),
) -> KeyRateReport:
    """Collective-attack rate per window. ``R_coh`` and ``skr_bps`` are left at 0."""
    budget = params.budget()
    _, raw_bits, costs = _collective_arrays(
        np.array([stats.n_Z]), np.array([stats.M_S]), np.array([stats.E_t]), np.array([e_ph]), params.f_ec, budget
    )
    raw = float(raw_bits[0]) / params.N
    return KeyRateReport(
        R=max(0.0, raw) if stats.n_Z > 0.0 else 0.0,
        R_coh=0.0,
        skr_bps=0.0,
        e_ph=float(e_ph),
        N_ph_bar=N_ph_bar,
        N_ph_expected=terms.N_ph_expected if terms else float("nan"),
        n_O_exp_U=terms.n_O_exp_U if terms else float("nan"),
        n_B_exp_U=terms.n_B_exp_U if terms else float("nan"),
        R_raw=raw,
        stats=stats,
        mu_eq_A=params.mu_A,
        mu_eq_B=params.mu_B,
        log10_eps_coh=budget.log10_eps_coh,
        cost_breakdown={k: float(v[0]) for k, v in costs.items()},
    )


def key_rate_coherent(
    report: KeyRateReport,
    params: ProtocolParams,
    channel: ChannelParams | None = None,
) -> KeyRateReport:
    """Apply the postselection shortening and convert to bits per second."""
    channel = channel or ChannelParams()
    ps = postselection_bits(params.N, params.d)
    R_coh = max(0.0, report.R - ps / params.N)
    costs = dict(report.cost_breakdown, postselection=ps)
    return replace(
        report,
        R_coh=R_coh,
        skr_bps=R_coh * channel.clock_hz * channel.duty_cycle,
        log10_eps_coh=params.budget().log10_eps_coh,
        cost_breakdown=costs,
    )


# --- full pipeline ---------------------------------------------------------------------


def _equivalent_mu(mu, params: ProtocolParams, bounds: SourceBounds | None):
    if bounds is not None:
        mu_eq_A, mu_eq_B = equivalent_pair(bounds)
        shape = np.shape(mu)
        return np.full(shape, mu_eq_A), np.full(shape, mu_eq_B)
    mu_eq = equivalent_intensity_from_extinction(mu, params.extinction_db)
    return mu_eq, mu_eq


def _pipeline(mu, p_x, params: ProtocolParams, channel: ChannelParams, bounds: SourceBounds | None):
    """Every intermediate of the rate computation, elementwise over ``(mu, p_x)``."""
    budget = params.budget()
    eta = arm_transmittance(channel).eta
    mu_eq_A, mu_eq_B = _equivalent_mu(mu, params, bounds)
    n_Z, n_O, n_B = count_arrays(mu, p_x, params.N, eta, channel.P_dc, channel.e_d)
    M_S = n_Z + n_O + n_B
    with np.errstate(divide="ignore", invalid="ignore"):
        E_t = np.where(M_S > 0.0, (n_O + n_B) / M_S, 0.0)
    c0, c1, c2_sq, O_U, B_U, N_ph = _phase_error_arrays(mu_eq_A, mu_eq_B, p_x, params.N, n_O, n_B, budget.log_eps)
    N_ph_bar, e_ph = _phase_error_rate_arrays(N_ph, n_Z, budget.log_eps)
    _, raw_bits, costs = _collective_arrays(n_Z, M_S, E_t, e_ph, params.f_ec, budget)
    R_raw = raw_bits / params.N
    R = np.where(n_Z > 0.0, np.maximum(R_raw, 0.0), 0.0)
    R_coh = np.maximum(R - postselection_bits(params.N, params.d) / params.N, 0.0)
    return {
        "mu_eq_A": mu_eq_A, "mu_eq_B": mu_eq_B,
        "n_Z": n_Z, "n_O": n_O, "n_B": n_B, "M_S": M_S, "E_t": E_t,
        "c0": c0, "c1": c1, "c2_bar_sq": c2_sq,
        "n_O_exp_U": O_U, "n_B_exp_U": B_U, "N_ph_expected": N_ph, "N_ph_bar": N_ph_bar,
        "e_ph": e_ph, "R_raw": R_raw, "R": R, "R_coh": R_coh,
        **{f"cost_{k}": v for k, v in costs.items()},
    }


def _corners(mu, fluct: float):
    mu = np.asarray(mu, dtype=float)
    if fluct == 0.0:
        return mu[None, ...]
    return np.stack([mu * (1.0 - fluct), mu * (1.0 + fluct)])


def _worst_corner(mu, p_x, params, channel, bounds):
    mu_c = _corners(mu, params.intensity_fluct)
    px_c = np.broadcast_to(np.asarray(p_x, dtype=float), mu_c.shape)
    out = _pipeline(mu_c, px_c, params, channel, bounds)
    # first minimum wins, i.e. the lower-intensity corner on ties
    idx = np.argmin(out["R_coh"], axis=0)[None, ...]
    worst = {k: np.take_along_axis(np.broadcast_to(v, mu_c.shape), idx, axis=0)[0] for k, v in out.items()}
    worst["mu"] = np.take_along_axis(mu_c, idx, axis=0)[0]
    return worst


def rate_grid(mu, p_x, params: ProtocolParams, channel: ChannelParams, bounds: SourceBounds | None = None):
    """Worst-fluctuation-corner pipeline over broadcast arrays of ``mu`` and ``p_x``.

    Returns a dict of arrays (``R_coh``, ``R``, ``e_ph``, ``n_Z``, ...).
    """
    mu, p_x = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(p_x, dtype=float))
    return _worst_corner(mu, p_x, params, channel, bounds)


def evaluate(
    params: ProtocolParams,
    channel: ChannelParams,
    bounds: SourceBounds | None = None,
) -> KeyRateReport:
    """Full report for one configuration.

    The physical intensity ``params.mu_A`` (``== mu_B``) drives the detection
    model. The equivalent intensities used for the phase-error bound come
    from ``bounds`` when given, otherwise from ``params.extinction_db``
    (perfect vacuum when unset). The intensity is perturbed by
    ``+-intensity_fluct`` and the corner with the lower coherent rate is
    reported.
    """
    check = validate(params, channel, bounds)
    if not check.ok:
        raise ConfigError("invalid configuration: " + "; ".join(check.violations), check.violations)
    if abs(params.mu_A - params.mu_B) > SYMMETRY_TOL:
        raise AsymmetryError(f"symmetric model needs mu_A == mu_B, got {params.mu_A} and {params.mu_B}")
    w = _worst_corner(np.array([params.mu_A]), np.array([params.p_x]), params, channel, bounds)
    w = {k: float(v[0]) for k, v in w.items()}
    stats = ObservedStatistics(w["n_Z"], w["n_O"], w["n_B"], w["M_S"], w["E_t"])
    collective = KeyRateReport(
        R=w["R"],
        R_coh=0.0,
        skr_bps=0.0,
        e_ph=w["e_ph"],
        N_ph_bar=w["N_ph_bar"],
        N_ph_expected=w["N_ph_expected"],
        n_O_exp_U=w["n_O_exp_U"],
        n_B_exp_U=w["n_B_exp_U"],
        R_raw=w["R_raw"],
        stats=stats,
        mu_eq_A=w["mu_eq_A"],
        mu_eq_B=w["mu_eq_B"],
        log10_eps_coh=0.0,
        cost_breakdown={k: w[f"cost_{k}"] for k in EQ2_COSTS},
    )
    return key_rate_coherent(collective, params, channel)
