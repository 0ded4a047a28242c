import numpy as np
import pytest

from scsqkd.errors import NoPositiveRate
from scsqkd.model import ChannelParams, OptimizerConfig, ProtocolParams
from scsqkd.optimizer import calibrate_misalignment, grid_axes, optimize, sweep

FIXED = ProtocolParams(N=1e13, extinction_db=35.7)
LINK = ChannelParams(distance_km=150.0, e_d=0.03)


def test_optimum_beats_every_grid_point():
    res = optimize(LINK, FIXED)
    assert res.report.R_coh >= res.grid_R_coh.max() * (1 - 1e-12)
    assert 0.0 < res.params.mu_A <= 0.5
    assert 0.0 <= res.params.p_x <= 1.0
    assert res.params.mu_A == res.params.mu_B


def test_refinement_never_hurts():
    coarse = optimize(LINK, FIXED, OptimizerConfig(refine=False))
    fine = optimize(LINK, FIXED)
    assert fine.report.R_coh >= coarse.report.R_coh


def test_deterministic():
    a = optimize(LINK, FIXED)
    b = optimize(LINK, FIXED)
    assert a.params == b.params
    assert a.report == b.report


def test_no_positive_rate():
    with pytest.raises(NoPositiveRate):
        optimize(ChannelParams(extra_loss_db=300.0), FIXED)


def test_grid_axes():
    mu, px = grid_axes(OptimizerConfig())
    assert mu[0] == pytest.approx(1e-5) and mu[-1] == pytest.approx(0.5)
    assert np.all(np.diff(np.log(mu)) > 0)
    mu_lin, _ = grid_axes(OptimizerConfig(mu_spacing="linear", mu_min=0.0))
    assert mu_lin[0] == 0.0
    with pytest.raises(ValueError):
        grid_axes(OptimizerConfig(n_mu=4))
    with pytest.raises(ValueError):
        grid_axes(OptimizerConfig(mu_spacing="cubic"))


def test_sweep_monotone_and_zero_rows():
    template = ChannelParams(e_d=0.03)
    rows = sweep(template, np.arange(0.0, 401.0, 50.0), FIXED, OptimizerConfig(refine=False))
    rates = [r.R for r in rows]
    assert all(b <= a for a, b in zip(rates, rates[1:]))
    assert rows[-1].R_coh == 0.0 and rows[-1].n_Z == 0.0
    with pytest.raises(ValueError):
        sweep(template, [100.0, 50.0], FIXED)


def test_calibration_reaches_target():
    e_d, res = calibrate_misalignment(ChannelParams(distance_km=150.0), FIXED, 0.16, tol=1e-4)
    assert res.report.e_ph >= 0.16
    assert 0.0 < e_d < 0.2
