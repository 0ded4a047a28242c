"""Binary entropy and Chernoff-type fluctuation bounds.

Two directions are supported:

* observed -> expected: given an observed count ``X``, bound its expectation
  from above (:func:`expected_upper`) or below (:func:`expected_lower`);
* expected -> observed: given an expectation ``phi``, bound the value a
  realisation can take (:func:`real_upper`).

Each bound solves a transcendental equation of the form ``g(delta) = ln(xi/2)``.
Failure probabilities used in finite-key analysis routinely underflow a double
(``1e-800`` is typical once the postselection factor is applied), so every
function accepts ``log_xi`` as an alternative to ``xi``.

Root finding is plain bisection after an expanding bracket search. The scalar
kernels are numba-compiled; a vectorised numpy bisection replaces them when
the numpy backend is active.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit
from .errors import DomainError

LN2 = math.log(2.0)
RTOL = 1e-12
MAX_ITER = 200

# which transcendental equation a kernel solves
_UPPER, _LOWER, _REAL, _UPPER_D = 0, 1, 2, 3
# largest deviation tried before giving up
_T_MAX = 1e308


@dataclass(frozen=True)
class ChernoffBound:
    """A solved bound: the bounding count, its relative deviation and the failure probability.

    ``xi`` may underflow to 0.0 for very small failure probabilities;
    ``log_xi`` always carries the exact value.
    """

    value: float
    delta: float
    xi: float
    log_xi: float


def binary_entropy(x):
    """Binary Shannon entropy in bits, with ``H(0) = H(1) = 0``.

    Accepts scalars or arrays; raises :class:`DomainError` for any entry
    outside ``[0, 1]``.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(~((arr >= 0.0) & (arr <= 1.0))):
        raise DomainError(f"binary entropy argument outside [0, 1]: {x!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -arr * np.log2(arr) - (1.0 - arr) * np.log2(1.0 - arr)
    h = np.where((arr == 0.0) | (arr == 1.0), 0.0, h)
    if h.ndim == 0:
        return float(h)
    return h


def resolve_log_xi(xi: float | None, log_xi: float | None) -> float:
    if log_xi is not None:
        if not log_xi < 0.0:
            raise DomainError(f"log_xi must be negative, got {log_xi}")
        return float(log_xi)
    if xi is None:
        raise DomainError("one of xi or log_xi is required")
    if not 0.0 < xi < 1.0:
        raise DomainError(f"xi must lie in (0, 1), got {xi}")
    return math.log(xi)


# --- residual functions ------------------------------------------------------
#
# upper:  X * (-(1-u)/u - ln u),    u = 1 - delta2 in (0, 1], increasing in u
# upper:  X * (-d/(1-d) - ln(1-d)),  d = delta2 in [0, 1), decreasing in d
# lower:  X * (d/(1+d) - ln(1+d)),  d = delta1 > 0, decreasing in d
# real:   phi * (d - (1+d) ln(1+d)), d > 0, decreasing in d
#
# Each equals the natural log of the left-hand side of the corresponding
# Chernoff equation. The upper bound is solved in delta2 when the root lies in
# (0, 1/2] and in u otherwise, so both delta2 and X/u keep full relative
# precision at either end.


@njit(cache=True)
def _residual(kind, x, t):
    if kind == 0:
        return x * (-(1.0 - t) / t - math.log(t))
    if kind == 1:
        return x * (t / (1.0 + t) - math.log1p(t))
    if kind == 3:
        return x * (-t / (1.0 - t) - math.log1p(-t))
    return x * (t - (1.0 + t) * math.log1p(t))


@njit(cache=True)
def _solve_scalar(kind, x, target, rtol, max_iter):
    """Solve residual(kind, x, t) = target by bracketed bisection; returns (t, iterations).

    Brackets grow (or shrink) by squaring, and the bisection takes geometric
    midpoints while the bracket spans more than a factor of two, so roots far
    from 1 cost a few dozen steps.
    """
    it = 0
    if kind == 0:
        # root u in (0, 1/2): shrink lo toward 0
        hi = 1.0
        lo = 0.5
        while _residual(kind, x, lo) > target and it < max_iter:
            hi = lo
            lo *= lo
            it += 1
    elif kind == 3:
        # caller guarantees the root lies in (0, 1/2]
        lo = 0.0
        hi = 0.5
    else:
        lo = 0.0
        hi = 1.0
        while _residual(kind, x, hi) > target and it < max_iter:
            if hi >= _T_MAX:
                return math.inf, it
            lo = hi
            hi = min(max(2.0 * hi, hi * hi), _T_MAX)
            it += 1
    while it < max_iter:
        if lo > 0.0 and 0.5 * hi > lo:
            mid = math.sqrt(lo) * math.sqrt(hi)
        else:
            mid = 0.5 * (lo + hi)
        if hi - lo <= rtol * mid or mid == lo or mid == hi:
            break
        g = _residual(kind, x, mid)
        if kind == 0:
            if g > target:
                hi = mid
            else:
                lo = mid
        else:
            if g > target:
                lo = mid
            else:
                hi = mid
        it += 1
    return 0.5 * (lo + hi), it


@njit(cache=True)
def _solve_many_numba(kind, x, target, rtol, max_iter):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        if x[i] > 0.0:
            out[i] = _solve_scalar(kind, x[i], target[i], rtol, max_iter)[0]
        else:
            out[i] = np.nan
    return out


def _residual_np(kind, x, t):
    if kind == _UPPER:
        return x * (-(1.0 - t) / t - np.log(t))
    if kind == _LOWER:
        return x * (t / (1.0 + t) - np.log1p(t))
    if kind == _UPPER_D:
        return x * (-t / (1.0 - t) - np.log1p(-t))
    return x * (t - (1.0 + t) * np.log1p(t))


def _solve_many_numpy(kind, x, target, rtol, max_iter):
    n = x.shape[0]
    out = np.full(n, np.nan)
    live = x > 0.0
    if not live.any():
        return out
    xs, ts = x[live], target[live]
    it = np.zeros(xs.shape[0], dtype=np.int64)
    with np.errstate(over="ignore", invalid="ignore"):
        if kind == _UPPER:
            hi = np.ones_like(xs)
            lo = np.full_like(xs, 0.5)
            grow = _residual_np(kind, xs, lo) > ts
            while grow.any():
                hi = np.where(grow, lo, hi)
                lo = np.where(grow, lo * lo, lo)
                it += grow
                grow &= it < max_iter
                grow &= _residual_np(kind, xs, lo) > ts
        elif kind == _UPPER_D:
            lo = np.zeros_like(xs)
            hi = np.full_like(xs, 0.5)
        else:
            lo = np.zeros_like(xs)
            hi = np.ones_like(xs)
            grow = _residual_np(kind, xs, hi) > ts
            while grow.any():
                lo = np.where(grow, hi, lo)
                hi = np.where(grow, np.where(hi >= _T_MAX, np.inf, np.minimum(np.maximum(2.0 * hi, hi * hi), _T_MAX)), hi)
                it += grow
                grow &= (it < max_iter) & np.isfinite(hi)
                grow &= _residual_np(kind, xs, hi) > ts
    overflow = np.isinf(hi)
    active = (it < max_iter) & ~overflow
    while True:
        wide = (lo > 0.0) & (0.5 * hi > lo)
        mid = np.where(wide, np.sqrt(lo) * np.sqrt(hi), 0.5 * (lo + hi))
        active &= ~((hi - lo <= rtol * mid) | (mid == lo) | (mid == hi))
        if not active.any():
            break
        with np.errstate(invalid="ignore"):
            above = _residual_np(kind, xs, mid) > ts
        if kind == _UPPER:
            hi = np.where(active & above, mid, hi)
            lo = np.where(active & ~above, mid, lo)
        else:
            lo = np.where(active & above, mid, lo)
            hi = np.where(active & ~above, mid, hi)
        it += active
        active &= it < max_iter
    out[live] = np.where(overflow, np.inf, 0.5 * (lo + hi))
    return out


def _solve_many(kind, x, target):
    x = np.ascontiguousarray(x, dtype=float).ravel()
    target = np.ascontiguousarray(np.broadcast_to(target, x.shape), dtype=float)
    if _accel.backend() == "numba":
        return _solve_many_numba(kind, x, target, RTOL, MAX_ITER)
    return _solve_many_numpy(kind, x, target, RTOL, MAX_ITER)


def _solve_upper(x, target):
    """Root of the upper-bound equation as ``(delta2, u = 1 - delta2)`` arrays."""
    x = np.ascontiguousarray(x, dtype=float).ravel()
    target = np.ascontiguousarray(np.broadcast_to(target, x.shape), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        far = _residual_np(_UPPER, x, np.full_like(x, 0.5)) > target
    delta = np.full_like(x, np.nan)
    u = np.full_like(x, np.nan)
    if far.any():
        u[far] = _solve_many(_UPPER, x[far], target[far])
        delta[far] = 1.0 - u[far]
    near = ~far
    if near.any():
        delta[near] = _solve_many(_UPPER_D, x[near], target[near])
        u[near] = 1.0 - delta[near]
    return delta, u


def _check_counts(x, name):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr >= 0.0)) or np.any(~np.isfinite(arr)):
        raise DomainError(f"{name} must be finite and non-negative")
    return arr


# --- vectorised bounds ---------------------------------------------------------


def expected_upper_array(x, log_xi):
    """Upper bound on the expectation of each observed count in ``x``.

    ``log_xi`` is a scalar or an array broadcastable to ``x``. Returns
    ``(value, delta2)`` arrays; zero counts give ``ln(2/xi)`` with ``delta2 = 1``.
    """
    x = _check_counts(x, "observed count")
    shape = x.shape
    log_xi = np.broadcast_to(np.asarray(log_xi, dtype=float), shape).ravel()
    target = log_xi - LN2
    d, u = _solve_upper(x.ravel(), target)
    flat = x.ravel()
    value = np.where(flat > 0.0, flat / np.where(flat > 0.0, u, 1.0), LN2 - log_xi)
    delta = np.where(flat > 0.0, d, 1.0)
    return value.reshape(shape), delta.reshape(shape)


def expected_lower_array(x, log_xi):
    x = _check_counts(x, "observed count")
    shape = x.shape
    log_xi = np.broadcast_to(np.asarray(log_xi, dtype=float), shape).ravel()
    d = _solve_many(_LOWER, x.ravel(), log_xi - LN2)
    flat = x.ravel()
    # delta past the double range leaves nothing of the count
    value = np.where((flat > 0.0) & np.isfinite(d), flat / (1.0 + np.nan_to_num(d)), 0.0)
    delta = np.where(flat > 0.0, d, np.inf)
    return value.reshape(shape), delta.reshape(shape)


def real_upper_array(phi, log_xi):
    phi = _check_counts(phi, "expected count")
    shape = phi.shape
    log_xi = np.broadcast_to(np.asarray(log_xi, dtype=float), shape).ravel()
    d = _solve_many(_REAL, phi.ravel(), log_xi - LN2)
    flat = phi.ravel()
    value = np.where(flat > 0.0, (1.0 + np.nan_to_num(d)) * flat, LN2 - log_xi)
    delta = np.where(flat > 0.0, d, np.inf)
    return value.reshape(shape), delta.reshape(shape)


# --- scalar API ------------------------------------------------------------------


def _bound(fn, x, xi, log_xi):
    lx = resolve_log_xi(xi, log_xi)
    value, delta = fn(np.array([x], dtype=float), lx)
    return ChernoffBound(float(value[0]), float(delta[0]), math.exp(lx), lx)


def expected_upper(x: float, xi: float | None = None, *, log_xi: float | None = None) -> ChernoffBound:
    """Upper bound ``X / (1 - delta2)`` on the expectation behind an observed count.

    ``delta2`` solves ``[e^{-d}/(1-d)^{1-d}]^{X/(1-d)} = xi/2`` on ``(0, 1)``.
    """
    return _bound(expected_upper_array, x, xi, log_xi)


def expected_lower(x: float, xi: float | None = None, *, log_xi: float | None = None) -> ChernoffBound:
    """Lower bound ``X / (1 + delta1)`` on the expectation behind an observed count.

    ``delta1`` solves ``[e^{d}/(1+d)^{1+d}]^{X/(1+d)} = xi/2`` on ``(0, inf)``.
    """
    return _bound(expected_lower_array, x, xi, log_xi)


def real_upper(phi: float, xi: float | None = None, *, log_xi: float | None = None) -> float:
    """Upper bound ``(1 + delta) * phi`` on a realisation with expectation ``phi``.

    ``delta`` solves the multiplicative Chernoff tail
    ``[e^{d}/(1+d)^{1+d}]^{phi} = xi/2``; ``phi = 0`` gives ``ln(2/xi)``.
    """
    lx = resolve_log_xi(xi, log_xi)
    value, _ = real_upper_array(np.array([phi], dtype=float), lx)
    return float(value[0])


def real_upper_bound(phi: float, xi: float | None = None, *, log_xi: float | None = None) -> ChernoffBound:
    """Like :func:`real_upper` but also returns the solved deviation."""
    return _bound(real_upper_array, phi, xi, log_xi)


def log_residual(kind: str, x: float, delta: float) -> float:
    """Natural log of the left-hand side of a Chernoff equation at ``delta``.

    ``kind`` is ``"upper"``, ``"lower"`` or ``"real"``. Used to check solved
    roots: at the solution this equals ``ln(xi/2)``.
    """
    if kind == "upper":
        return x * (-delta / (1.0 - delta) - math.log1p(-delta))
    if kind == "lower":
        return x * (delta / (1.0 + delta) - math.log1p(delta))
    if kind == "real":
        return x * (delta - (1.0 + delta) * math.log1p(delta))
    raise ValueError(f"unknown kind {kind!r}")
