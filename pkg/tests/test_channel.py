import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scsqkd.channel import (
    Transmittance,
    arm_transmittance,
    count_arrays,
    expected_counts,
    monte_carlo_counts,
    sample_windows,
)
from scsqkd.errors import AsymmetryError
from scsqkd.model import ChannelParams, ProtocolParams


def test_arm_transmittance_halves_the_link():
    # 200 km at 0.18 dB/km: 18 dB per arm
    eta = arm_transmittance(ChannelParams(distance_km=200.0)).eta
    assert eta == pytest.approx(0.010935763027981683, rel=1e-12)
    eta_loss = arm_transmittance(ChannelParams(extra_loss_db=36.0)).eta
    assert eta_loss == pytest.approx(eta, rel=1e-12)


def test_transmittance_range():
    with pytest.raises(ValueError):
        Transmittance(1.5)


def test_closed_form_oracle():
    # mpmath, 50 digits
    p = ProtocolParams(mu_A=0.1, mu_B=0.1, p_x=0.5, N=1e12)
    stats = expected_counts(p, 0.01, ChannelParams())
    assert stats.n_Z == pytest.approx(249812612.83717444, rel=1e-10)


def test_statistics_are_consistent():
    p = ProtocolParams(mu_A=0.05, mu_B=0.05, p_x=0.3, N=1e10)
    s = expected_counts(p, 0.02, ChannelParams(e_d=0.03))
    assert s.M_S == pytest.approx(s.n_Z + s.n_O + s.n_B)
    assert s.E_t == pytest.approx((s.n_O + s.n_B) / s.M_S)
    assert s.violations() == []


def test_no_dark_counts_no_misalignment():
    p = ProtocolParams(mu_A=0.05, mu_B=0.05, p_x=0.3, N=1e10)
    s = expected_counts(p, 0.02, ChannelParams(P_dc=0.0, e_d=0.0))
    assert s.n_O == 0.0 and s.n_B == 0.0 and s.E_t == 0.0


def test_asymmetric_intensities_rejected():
    with pytest.raises(AsymmetryError):
        expected_counts(ProtocolParams(mu_A=0.1, mu_B=0.2), 0.01, ChannelParams())


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-4, 0.5), st.floats(0.01, 0.99), st.floats(1e-5, 1.0))
def test_counts_non_negative_and_bounded(mu, px, eta):
    n_Z, n_O, n_B = count_arrays(mu, px, 1e9, eta, 1e-8, 0.05)
    assert 0.0 <= n_Z <= 1e9
    assert n_O >= 0.0 and n_B >= 0.0


def test_more_loss_fewer_z_counts():
    etas = np.geomspace(1e-1, 1e-4, 20)
    n_Z, _, _ = count_arrays(0.01, 0.2, 1e12, etas, 1e-10, 0.0)
    assert np.all(np.diff(n_Z) < 0.0)


def test_monte_carlo_is_deterministic_and_backend_independent():
    from scsqkd import _accel

    p = ProtocolParams(mu_A=0.2, mu_B=0.2, p_x=0.4, N=1e6)
    ch = ChannelParams(P_dc=1e-3, e_d=0.05)
    runs = []
    for name in ("numba", "numpy"):
        with _accel.use_backend(name):
            runs.append(monte_carlo_counts(p, 0.1, ch, 300_000, seed=7))
    assert runs[0] == runs[1]
    assert monte_carlo_counts(p, 0.1, ch, 300_000, seed=8) != runs[0]


def test_sample_windows_match_tally():
    p = ProtocolParams(mu_A=0.2, mu_B=0.2, p_x=0.4, N=1e6)
    ch = ChannelParams(P_dc=1e-3, e_d=0.05)
    rec = sample_windows(p, 0.1, ch, 50_000, seed=3)
    eff = rec["right_click"] & ~rec["left_click"]
    n_sent = rec["alice_sent"].astype(int) + rec["bob_sent"].astype(int)
    tally = monte_carlo_counts(p, 0.1, ch, 50_000, seed=3)
    assert np.count_nonzero(eff & (n_sent == 1)) == tally.n_Z
    assert np.count_nonzero(eff & (n_sent == 0)) == tally.n_O
    assert np.count_nonzero(eff & (n_sent == 2)) == tally.n_B


def test_monte_carlo_agrees_with_closed_form(backend):
    p = ProtocolParams(mu_A=0.3, mu_B=0.3, p_x=0.5, N=2e6)
    ch = ChannelParams(P_dc=2e-3, e_d=0.1)
    eta = 0.2
    exp = expected_counts(p, eta, ch)
    mc = monte_carlo_counts(p, eta, ch, int(p.N), seed=11)
    for name in ("n_Z", "n_O", "n_B"):
        e = getattr(exp, name)
        assert abs(getattr(mc, name) - e) <= 5.0 * math.sqrt(e)


def test_monte_carlo_window_limits():
    p = ProtocolParams()
    assert monte_carlo_counts(p, 0.1, ChannelParams(), 0).M_S == 0.0
    with pytest.raises(ValueError):
        monte_carlo_counts(p, 0.1, ChannelParams(), -1)
