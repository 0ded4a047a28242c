"""The numpy fallback must give the same numbers as the numba kernels."""

import os
import subprocess
import sys

import numpy as np
import pytest

from scsqkd import _accel
from scsqkd.keyrate import rate_grid
from scsqkd.model import ChannelParams, ProtocolParams
from scsqkd.optimizer import optimize


def test_env_flag_selects_numpy():
    env = dict(os.environ, SCSQKD_DISABLE_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", "from scsqkd import _accel; print(_accel.backend())"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_use_backend_restores():
    before = _accel.backend()
    with _accel.use_backend("numpy"):
        assert _accel.backend() == "numpy"
    assert _accel.backend() == before
    with pytest.raises(ValueError):
        _accel.set_backend("fortran")


def test_rate_grid_identical():
    params = ProtocolParams(extinction_db=35.7)
    ch = ChannelParams(distance_km=150.0, e_d=0.03)
    mu, px = np.meshgrid(np.geomspace(1e-4, 0.5, 16), np.linspace(0, 1, 16))
    out = {}
    for name in ("numba", "numpy"):
        with _accel.use_backend(name):
            out[name] = rate_grid(mu, px, params, ch)["R_coh"]
    np.testing.assert_allclose(out["numba"], out["numpy"], rtol=1e-10, atol=0)


def test_optimizer_identical():
    params = ProtocolParams(extinction_db=35.7)
    ch = ChannelParams(distance_km=150.0, e_d=0.03)
    with _accel.use_backend("numpy"):
        a = optimize(ch, params)
    with _accel.use_backend("numba"):
        b = optimize(ch, params)
    assert a.report.skr_bps == pytest.approx(b.report.skr_bps, rel=1e-9)
