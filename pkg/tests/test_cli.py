import csv

import pytest

from scsqkd.cli import main


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_keyrate_preset(capsys):
    assert main(["keyrate", "--preset", "200km"]) == 0
    out = capsys.readouterr().out
    assert "skr_bps" in out and "cost_postselection" in out


def test_keyrate_csv(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["keyrate", "--preset", "150km", "--out", str(out)]) == 0
    (row,) = _rows(out)
    assert float(row["R_coh"]) <= float(row["R"])


def test_keyrate_zero_rate():
    assert main(["keyrate", "--preset", "200km", "--set", "channel.extra_loss_db=300"]) == 2


def test_keyrate_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[protocol\nmu_A = ", encoding="utf-8")
    assert main(["keyrate", "--config", str(bad)]) == 1
    bad.write_text("[protocol]\np_x = 1.7\n", encoding="utf-8")
    assert main(["keyrate", "--config", str(bad)]) == 1
    assert "p_x out of [0,1]" in capsys.readouterr().err


def test_override_errors():
    assert main(["keyrate", "--set", "channel.nope=1"]) == 1
    assert main(["keyrate", "--set", "garbage"]) == 1
    assert main(["keyrate", "--preset", "nowhere"]) == 1


def test_dark_rate_override(capsys):
    assert main(["keyrate", "--preset", "150km", "--set", "channel.dark_rate_hz=0.1"]) == 0


def test_optimize_deterministic(capsys):
    assert main(["optimize", "--preset", "100km"]) == 0
    first = capsys.readouterr().out
    assert main(["optimize", "--preset", "100km"]) == 0
    assert capsys.readouterr().out == first
    values = dict(line.split() for line in first.splitlines())
    assert 0.0 < float(values["mu"]) <= 0.5
    assert 0.0 <= float(values["p_x"]) <= 1.0


def test_optimize_infeasible(capsys):
    assert main(["optimize", "--preset", "200km", "--distance", "2000"]) == 2
    assert "no positive rate" in capsys.readouterr().out


def test_optimize_writes_config(tmp_path):
    out = tmp_path / "best.toml"
    assert main(["optimize", "--preset", "150km", "--out", str(out)]) == 0
    assert main(["keyrate", "--config", str(out)]) == 0


def test_sweep(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep", "--preset", "200km", "--dmin", "0", "--dmax", "400", "--step", "100", "--out", str(out)]) == 0
    rows = _rows(out)
    assert list(rows[0]) == ["distance_km", "mu", "p_x", "R", "R_coh", "skr_bps", "e_ph", "n_Z"]
    skr = [float(r["skr_bps"]) for r in rows]
    assert len(skr) == 5
    assert all(b <= a for a, b in zip(skr, skr[1:]))


@pytest.mark.parametrize("args", [["--step", "0"], ["--dmin", "10", "--dmax", "5"], ["--dmin", "-1"]])
def test_sweep_bad_range(args):
    assert main(["sweep", *args]) == 1


def test_phaselock(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert main(["phaselock", "--pattern", "on:2,off:2", "--out", str(out), "--seed", "3"]) == 0
    rows = _rows(out)
    assert len(rows) == 40
    assert "qber" in rows[0]


def test_phaselock_pattern_repeats(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["phaselock", "--pattern", "on:1,off:1", "--duration", "4", "--out", str(out)]) == 0
    assert len(_rows(out)) == 40


def test_phaselock_empty_and_bad(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["phaselock", "--pattern", "on:0", "--out", str(out)]) == 0
    assert _rows(out) == []
    assert main(["phaselock", "--pattern", "sideways:3"]) == 1
    assert main(["phaselock", "--duration", "5000"]) == 1


def test_backend_flag():
    assert main(["keyrate", "--preset", "150km", "--backend", "numpy"]) == 0
