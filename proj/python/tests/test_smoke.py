import math
import os
from pathlib import Path

import pytest

import tclreg

DATA = Path(os.environ.get("TCLREG_DATA_DIR", Path(__file__).resolve().parents[2] / "data"))


def test_version():
    assert tclreg.__version__ == "0.3.0"


def test_aging_rate_nominal():
    assert abs(tclreg.aging_rate(110.0) - 1.0) < 1e-12
    assert tclreg.aging_rate(120.0) > tclreg.aging_rate(110.0)


def test_distflow_closed_form():
    v = tclreg.distflow_voltage(1.0, 0.01, 0.01, 0.5, 0.1)
    assert v == pytest.approx(0.993955, abs=1e-6)
    s = tclreg.voltage_sensitivity(1.0, 0.01, 0.02, 0.4, 0.1, 1.0)
    assert s["q_term"] == 0.0
    assert s["total"] < 0.0


def test_duty_cycle_and_house_run():
    p = tclreg.HouseParams()
    d = tclreg.natural_duty_cycle(p, 32.0, 1.0)
    assert 0.0 < d["duty"] < 1.0
    air, on = tclreg.simulate_house(p, 22.0, 22.0, False, 32.0, 1.0, 1.0, 6 * 3600)
    measured = sum(on[2 * 3600:]) / len(on[2 * 3600:])
    assert measured == pytest.approx(d["duty"], abs=0.02)
    assert min(air) > p.t_low_c - 0.05


def test_switching_probabilities():
    p_on, p_off = tclreg.switching_probabilities(0.4, 900.0, 0.5, 1000.0, 2.0)
    assert p_on > p_off
    assert tclreg.bias_threshold(0.4, 900.0, 0.5, 1000.0, 2.0)


def test_feeder_checks():
    assert tclreg.validate_feeder(DATA / "synth-r1.json") == []
    assert tclreg.feeder_summary(DATA / "synth-r1.json")["houses"] == 120
    issues = tclreg.validate_feeder(DATA / "small" / "cycle3.json")
    assert issues
    with pytest.raises(tclreg.TclregError, match="topology"):
        tclreg.feeder_summary(DATA / "small" / "cycle3.json")


def test_run_case_tiny(tmp_path):
    r = tclreg.run_case(DATA / "small" / "scenario-tiny.json", out_dir=tmp_path)
    assert r["base"]["steps"] == 1800
    assert r["base"]["dispatch_commands"] == 0
    reg = r["regulation"]
    assert reg is not None and reg["dispatch_commands"] > 0
    assert all(math.isfinite(x) for x in reg["p_des_kw"])
    assert (tmp_path / "manifest.json").exists()
    again = tclreg.run_case(DATA / "small" / "scenario-tiny.json")
    assert again["regulation"]["p_ac_kw"] == reg["p_ac_kw"]
