"""Equivalent perfect-source intensities from vacuum-projection bounds.

An imperfect source whose two states have vacuum projections at least
``v_strong`` and ``v_weak`` is treated as a perfect source emitting the
vacuum and a coherent state of intensity ``mu``, where

    exp(-mu) = |sqrt(v_strong * v_weak) - sqrt((1 - v_strong) * (1 - v_weak))|^2

The expression is symmetric in its two arguments and reduces to
``mu = -ln(v_strong)`` for a perfect vacuum (``v_weak = 1``).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateMapping, DomainError
from .model import SourceBounds


def equivalent_intensity(v_strong: float, v_weak: float) -> float:
    for name, v in (("v_strong", v_strong), ("v_weak", v_weak)):
        if not 0.5 <= v <= 1.0:
            raise DomainError(f"{name} must lie in [0.5, 1], got {v}")
    amplitude = math.sqrt(v_strong * v_weak) - math.sqrt((1.0 - v_strong) * (1.0 - v_weak))
    if amplitude <= 0.0:
        raise DegenerateMapping(f"vacuum overlap vanishes for ({v_strong}, {v_weak})")
    # -ln(|amp|^2); amp > 0 on the admissible domain
    return max(0.0, -2.0 * math.log(amplitude))


def equivalent_pair(bounds: SourceBounds) -> tuple[float, float]:
    """``(mu_A, mu_B)`` for Alice's ``(a0, a_o0)`` and Bob's ``(b0, b_o0)``."""
    return (
        equivalent_intensity(bounds.a0, bounds.a_o0),
        equivalent_intensity(bounds.b0, bounds.b_o0),
    )


def weak_vacuum_projection(mu: float, extinction_db: float) -> float:
    """Vacuum projection of the "not sending" state of an on-off modulator.

    A finite extinction ratio leaks ``mu * 10^(-ER/10)`` mean photons into the
    vacuum slot.
    """
    if extinction_db is None or math.isinf(extinction_db):
        return 1.0
    return math.exp(-mu * 10.0 ** (-extinction_db / 10.0))


def bounds_from_extinction(mu_A: float, mu_B: float, extinction_db: float | None) -> SourceBounds:
    """Source bounds for coherent strong states and leaky vacuum states."""
    return SourceBounds(
        a0=math.exp(-mu_A),
        a_o0=weak_vacuum_projection(mu_A, extinction_db),
        b0=math.exp(-mu_B),
        b_o0=weak_vacuum_projection(mu_B, extinction_db),
    )


def equivalent_intensity_from_extinction(mu, extinction_db: float | None):
    """Vectorised equivalent intensity for coherent strong states of intensity ``mu``.

    Same closed form as :func:`equivalent_intensity` with
    ``v_strong = exp(-mu)`` and ``v_weak = exp(-mu * 10^(-ER/10))``, written
    with ``expm1`` so it stays accurate for the very small intensities used
    at long distance.
    """
    mu = np.asarray(mu, dtype=float)
    if extinction_db is None or math.isinf(extinction_db):
        return mu.copy()
    leak = mu * 10.0 ** (-extinction_db / 10.0)
    amplitude = np.exp(-0.5 * (mu + leak)) - np.sqrt(np.expm1(-mu) * np.expm1(-leak))
    return -2.0 * np.log(amplitude)
