"""Maximise the coherent-attack key rate over ``(mu, p_x)``.

A coarse grid over ``mu in [mu_min, mu_max]`` and ``p_x in [px_min, px_max]``
is evaluated in one vectorised call, then Nelder-Mead refines from the best
cell. ``mu`` is gridded geometrically by default: at 200 km the optimum sits
near ``mu = 3e-3``, below the first non-zero node of any practical linear grid
on ``[0, 0.5]``. Refinement runs in ``(log mu, p_x)`` for the same reason.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .errors import NoPositiveRate
from .keyrate import evaluate, rate_grid
from .model import ChannelParams, KeyRateReport, OptimizerConfig, ProtocolParams, SourceBounds

logger = logging.getLogger(__name__)

GridSpec = OptimizerConfig


@dataclass(frozen=True)
class OptimizeResult:
    params: ProtocolParams
    report: KeyRateReport
    grid_mu: np.ndarray
    grid_px: np.ndarray
    grid_R_coh: np.ndarray
    grid_best: float
    refined: bool


def grid_axes(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    if grid.n_mu < 8 or grid.n_px < 8:
        raise ValueError("grid needs at least 8 points per axis")
    if grid.mu_spacing == "log":
        lo = max(grid.mu_min, 1e-12)
        mu = np.geomspace(lo, grid.mu_max, grid.n_mu)
    elif grid.mu_spacing == "linear":
        mu = np.linspace(grid.mu_min, grid.mu_max, grid.n_mu)
    else:
        raise ValueError(f"unknown mu_spacing {grid.mu_spacing!r}")
    px = np.linspace(grid.px_min, grid.px_max, grid.n_px)
    return mu, px


def _objective(params, channel, bounds, grid: GridSpec):
    lo_mu = max(grid.mu_min, 1e-12)

    def f(z):
        mu = min(max(math.exp(z[0]), lo_mu), grid.mu_max)
        px = min(max(z[1], grid.px_min), grid.px_max)
        r = rate_grid(np.array([mu]), np.array([px]), params, channel, bounds)["R_coh"][0]
        return -float(r)

    return f


def optimize(
    channel: ChannelParams,
    fixed: ProtocolParams,
    grid: GridSpec | None = None,
    bounds: SourceBounds | None = None,
) -> OptimizeResult:
    """Best ``(mu, p_x)`` for ``channel``; every other field comes from ``fixed``.

    Raises :class:`NoPositiveRate` when no grid point gives a positive rate.
    """
    grid = grid or GridSpec()
    mu_ax, px_ax = grid_axes(grid)
    MU, PX = np.meshgrid(mu_ax, px_ax, indexing="ij")
    values = rate_grid(MU, PX, fixed, channel, bounds)["R_coh"]
    # argmax returns the first maximum: lowest mu, then lowest p_x
    flat = int(np.argmax(values))
    i, j = np.unravel_index(flat, values.shape)
    best = float(values[i, j])
    if not best > 0.0:
        raise NoPositiveRate(f"no positive key rate at {channel.distance_km} km")
    mu0, px0 = float(mu_ax[i]), float(px_ax[j])
    mu_best, px_best, refined = mu0, px0, False

    if grid.refine:
        f = _objective(fixed, channel, bounds, grid)
        z0 = np.array([math.log(mu0), px0])
        # initial simplex spans about one grid cell
        step_mu = math.log(mu_ax[1] / mu_ax[0]) if grid.mu_spacing == "log" else math.log1p((mu_ax[1] - mu_ax[0]) / mu0)
        step_px = px_ax[1] - px_ax[0]
        simplex = np.array([z0, z0 + [0.5 * step_mu, 0.0], z0 + [0.0, 0.5 * step_px]])
        res = minimize(
            f,
            z0,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "xatol": grid.xrtol,
                "fatol": grid.xrtol * best,
                "maxiter": 2000,
            },
        )
        if -res.fun > best:
            mu_best = min(max(math.exp(res.x[0]), max(grid.mu_min, 1e-12)), grid.mu_max)
            px_best = float(min(max(res.x[1], grid.px_min), grid.px_max))
            refined = True
        logger.debug("refined %s -> %s (%d evals)", (mu0, px0), (mu_best, px_best), res.nfev)

    params = replace(fixed, mu_A=mu_best, mu_B=mu_best, p_x=px_best)
    report = evaluate(params, channel, bounds)
    return OptimizeResult(params, report, mu_ax, px_ax, values, best, refined)


@dataclass(frozen=True)
class SweepRow:
    distance_km: float
    mu: float
    p_x: float
    R: float
    R_coh: float
    skr_bps: float
    e_ph: float
    n_Z: float


def sweep(
    channel_template: ChannelParams,
    distances,
    fixed: ProtocolParams,
    grid: GridSpec | None = None,
    bounds: SourceBounds | None = None,
) -> list[SweepRow]:
    """One :func:`optimize` per distance; zero-rate distances give all-zero rows."""
    distances = [float(d) for d in distances]
    if any(b < a for a, b in zip(distances, distances[1:])):
        raise ValueError("distances must be sorted ascending")
    rows = []
    for dist in distances:
        channel = replace(channel_template, distance_km=dist)
        try:
            res = optimize(channel, fixed, grid, bounds)
        except NoPositiveRate:
            rows.append(SweepRow(dist, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0))
            continue
        r = res.report
        rows.append(SweepRow(dist, res.params.mu_A, res.params.p_x, r.R, r.R_coh, r.skr_bps, r.e_ph, r.stats.n_Z))
    return rows


def calibrate_misalignment(
    channel: ChannelParams,
    fixed: ProtocolParams,
    target_e_ph: float,
    grid: GridSpec | None = None,
    bounds: SourceBounds | None = None,
    *,
    e_d_max: float = 0.2,
    tol: float = 1e-5,
) -> tuple[float, OptimizeResult]:
    """Smallest misalignment error ``e_d`` whose optimised ``e_ph`` reaches ``target_e_ph``.

    Bisection on the predicate ``e_ph(e_d) >= target``; the returned ``e_d``
    is the upper end of the final bracket, so its optimum satisfies the
    predicate. Returns ``(e_d, optimize result at e_d)``.
    """

    def run(e_d):
        try:
            return optimize(replace(channel, e_d=e_d), fixed, grid, bounds)
        except NoPositiveRate:
            return None

    def reaches(res):
        return res is None or res.report.e_ph >= target_e_ph

    lo, hi = 0.0, e_d_max
    res_lo, res_hi = run(lo), run(hi)
    if reaches(res_lo):
        return lo, res_lo
    if not reaches(res_hi):
        raise ValueError(f"e_ph stays below {target_e_ph} up to e_d = {e_d_max}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        res = run(mid)
        if reaches(res):
            hi, res_hi = mid, res
        else:
            lo = mid
    if res_hi is None:
        raise NoPositiveRate(f"no positive key rate at calibrated e_d = {hi}")
    return hi, res_hi
