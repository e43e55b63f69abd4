#!/usr/bin/env python3
"""Writes the shipped fixtures under data/.

synth-r1-skeleton.json is the 40-transformer network without houses; the
houses of synth-r1.json come from `tclreg populate` (see data/README.md).
"""
import json
import math
import random
from pathlib import Path

DATA = Path(__file__).resolve().parent.parent / "data"


def dump(path, doc):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1) + "\n")


def line(lid, a, b, r_per_km, x_per_km, km, amp, phases="ABC"):
    z = {p: [round(r_per_km * km, 6), round(x_per_km * km, 6)] for p in phases}
    return {"id": lid, "from": a, "to": b, "z_ohm": z, "ampacity_a": amp, "length_m": km * 1000.0}


def synth_skeleton():
    buses = [{"id": "head", "phases": "ABC"}]
    lines = []
    trunk = [f"t{i}" for i in range(1, 6)]
    prev = "head"
    for t in trunk:
        buses.append({"id": t, "phases": "ABC"})
        lines.append(line(f"{prev}-{t}", prev, t, 0.306, 0.627, 0.9, 400.0))
        prev = t
    primaries = list(trunk)
    for i, t in enumerate(trunk, start=1):
        for s in "ab":
            lb = f"l{i}{s}"
            buses.append({"id": lb, "phases": "ABC"})
            lines.append(line(f"{t}-{lb}", t, lb, 0.592, 0.795, 0.6, 200.0))
            primaries.append(lb)

    transformers = []
    ratings = [25.0, 25.0, 37.5, 25.0, 50.0]
    for k in range(40):
        pb = primaries[k % len(primaries)]
        ph = "ABC"[k % 3]
        sid = f"s{k + 1}"
        buses.append({"id": sid, "phases": ph, "service_node": True})
        rating = ratings[k % len(ratings)]
        transformers.append({
            "id": f"x{k + 1}",
            "primary": pb,
            "secondary": sid,
            "phase": ph,
            "rating_kva": rating,
            "z_pu": [0.011, 0.018],
            "tap": 0.9875 if k % 4 == 0 else 1.0,
            "secondary_voltage_v": 240.0,
            "planning_kva": round(rating * (0.5 + 0.05 * (k % 7)), 3),
        })

    return {
        "schema_version": 1,
        "name": "synth-r1",
        "nominal_voltage_v": 2400.0,
        "base_kva": 1000.0,
        "slack_bus": "head",
        "slack_voltage_pu": 1.045,
        "buses": buses,
        "lines": lines,
        "transformers": transformers,
        "capacitors": [{"id": "c1", "bus": "t4", "kvar": {"A": 100.0, "B": 100.0, "C": 100.0},
                        "control": {"mode": "fixed"}, "on": True}],
        "fuses": [{"id": "f1", "line": "t5-l5b", "current_limit_a": 150.0, "open": False}],
        "zip_loads": [{"id": "z1", "bus": "t3", "base_kva": {"A": 40.0, "B": 40.0, "C": 40.0},
                       "power_factor": 0.9, "real": [0.4, 0.3, 0.3], "reactive": [0.4, 0.3, 0.3]}],
        "houses": [],
    }


def weather():
    peaks = [34.0, 36.0, 33.0]
    rows = ["time_s,temp_c"]
    for h in range(73):
        day = min(h // 24, 2)
        lo, hi = 24.0, peaks[day]
        temp = lo + (hi - lo) * 0.5 * (1.0 + math.cos(2.0 * math.pi * (h % 24 - 16) / 24.0))
        rows.append(f"{h * 3600},{temp:.3f}")
    return "\n".join(rows) + "\n"


def regd_signal():
    rnd = random.Random(7)
    rows = ["time_s,signal_pu"]
    ar = 0.0
    for k in range(1800):
        t = 2.0 * k
        ar = 0.985 * ar + 0.17 * rnd.gauss(0.0, 1.0)
        slow = 0.55 * math.sin(2.0 * math.pi * t / 900.0) + 0.25 * math.sin(2.0 * math.pi * t / 340.0 + 1.0)
        v = max(-1.0, min(1.0, slow + 0.35 * ar))
        rows.append(f"{t:g},{v:.5f}")
    return "\n".join(rows) + "\n"


def hvac(t_low, t_high, q_ac, ua=0.3):
    return {"c_air_kj_per_c": 1500.0, "c_mass_kj_per_c": 10000.0, "ua_kw_per_c": ua,
            "hm_kw_per_c": 3.0, "r_gain": 0.5, "t_low_c": t_low, "t_high_c": t_high,
            "q_ac_kw": q_ac, "p_on_kw": round(q_ac / 3.0, 4), "power_factor": 0.97}


def house(hid, bus, ph, t_low, t_high, q_ac, ua=0.3):
    return {"id": hid, "bus": bus, "phase": ph, "hvac": hvac(t_low, t_high, q_ac, ua), "gain_kw": 1.0,
            "zip": {"kva": 1.2, "power_factor": 0.95, "real": [0.3, 0.3, 0.4], "reactive": [0.3, 0.3, 0.4]}}


def base_doc(name, v=2400.0, slack="src", vs=1.0):
    return {"schema_version": 1, "name": name, "nominal_voltage_v": v, "base_kva": 1000.0,
            "slack_bus": slack, "slack_voltage_pu": vs, "buses": [], "lines": [], "transformers": [],
            "capacitors": [], "fuses": [], "zip_loads": [], "houses": []}


def small_fixtures():
    out = {}

    d = base_doc("two-bus")
    d["buses"] = [{"id": "src", "phases": "ABC"}, {"id": "load", "phases": "ABC"}]
    d["lines"] = [line("l1", "src", "load", 0.3, 0.6, 2.0, 400.0)]
    d["zip_loads"] = [{"id": "z", "bus": "load", "base_kva": {"A": 300.0, "B": 250.0, "C": 200.0},
                       "power_factor": 0.9, "real": [0.2, 0.3, 0.5], "reactive": [0.2, 0.3, 0.5]}]
    out["two_bus.json"] = d

    d = base_doc("cycle")
    d["buses"] = [{"id": b, "phases": "ABC"} for b in ("src", "b1", "b2")]
    d["lines"] = [line("l1", "src", "b1", 0.3, 0.6, 1.0, 400.0), line("l2", "b1", "b2", 0.3, 0.6, 1.0, 400.0),
                  line("l3", "b2", "src", 0.3, 0.6, 1.0, 400.0)]
    out["cycle3.json"] = d

    d = base_doc("islanded")
    d["buses"] = [{"id": b, "phases": "ABC"} for b in ("src", "b1", "b2", "b3")]
    d["lines"] = [line("l1", "src", "b1", 0.3, 0.6, 1.0, 400.0), line("l2", "b2", "b3", 0.3, 0.6, 1.0, 400.0)]
    out["islanded.json"] = d

    # Mixed network for the dense-solver oracle: transformer with an off-nominal
    # tap, a capacitor, partial-phase lateral, ZIP loads and two houses.
    d = base_doc("oracle-8", vs=1.03)
    d["buses"] = [{"id": "src", "phases": "ABC"}, {"id": "m1", "phases": "ABC"}, {"id": "m2", "phases": "ABC"},
                  {"id": "lat", "phases": "AB"}, {"id": "end", "phases": "B"},
                  {"id": "sA", "phases": "A", "service_node": True}, {"id": "sC", "phases": "C", "service_node": True},
                  {"id": "m3", "phases": "ABC"}]
    d["lines"] = [line("src-m1", "src", "m1", 0.306, 0.627, 1.5, 400.0),
                  line("m1-m2", "m1", "m2", 0.306, 0.627, 1.0, 400.0),
                  line("m1-lat", "m1", "lat", 0.592, 0.795, 0.8, 200.0, "AB"),
                  line("lat-end", "lat", "end", 0.592, 0.795, 0.5, 200.0, "B"),
                  line("m2-m3", "m2", "m3", 0.306, 0.627, 0.7, 400.0)]
    d["transformers"] = [
        {"id": "xa", "primary": "m2", "secondary": "sA", "phase": "A", "rating_kva": 25.0, "z_pu": [0.011, 0.018],
         "tap": 0.975, "secondary_voltage_v": 240.0, "planning_kva": 15.0},
        {"id": "xc", "primary": "m3", "secondary": "sC", "phase": "C", "rating_kva": 50.0, "z_pu": [0.012, 0.02],
         "tap": 1.0, "secondary_voltage_v": 240.0, "planning_kva": 30.0}]
    d["capacitors"] = [{"id": "cap", "bus": "m2", "kvar": {"A": 50.0, "B": 50.0, "C": 50.0},
                        "control": {"mode": "voltage", "v_on_pu": 0.98, "v_off_pu": 1.04, "sense_bus": "m3",
                                    "sense_phase": "A"}, "on": True}]
    d["fuses"] = [{"id": "f-lat", "line": "m1-lat", "current_limit_a": 120.0}]
    d["zip_loads"] = [
        {"id": "zm1", "bus": "m1", "base_kva": {"A": 80.0, "B": 120.0, "C": 60.0}, "power_factor": 0.92,
         "real": [0.3, 0.3, 0.4], "reactive": [0.5, 0.2, 0.3]},
        {"id": "zlat", "bus": "lat", "base_kva": {"A": 40.0, "B": 30.0}, "power_factor": 0.95},
        {"id": "zend", "bus": "end", "base_kva": {"B": 60.0}, "power_factor": 0.85, "real": [1.0, 0.0, 0.0],
         "reactive": [0.0, 1.0, 0.0]},
        {"id": "zsc", "bus": "sC", "base_kva": {"C": 20.0}, "power_factor": 0.9}]
    d["houses"] = [house("ha1", "sA", "A", 21.5, 22.5, 9.8), house("ha2", "sA", "A", 22.0, 23.0, 10.5)]
    out["oracle8.json"] = d

    # Engine smoke feeder: two transformers, six houses.
    d = base_doc("tiny", vs=1.04)
    d["buses"] = [{"id": "src", "phases": "ABC"}, {"id": "m", "phases": "ABC"},
                  {"id": "s1", "phases": "A", "service_node": True}, {"id": "s2", "phases": "B", "service_node": True}]
    d["lines"] = [line("src-m", "src", "m", 0.306, 0.627, 2.0, 400.0)]
    d["transformers"] = [
        {"id": "x1", "primary": "m", "secondary": "s1", "phase": "A", "rating_kva": 25.0, "planning_kva": 15.0},
        {"id": "x2", "primary": "m", "secondary": "s2", "phase": "B", "rating_kva": 25.0, "planning_kva": 15.0}]
    d["houses"] = [house("a1", "s1", "A", 21.5, 22.5, 9.8), house("a2", "s1", "A", 22.0, 23.0, 9.0, 0.28),
                   house("a3", "s1", "A", 20.5, 21.5, 11.0, 0.33), house("b1", "s2", "B", 21.0, 22.0, 10.0),
                   house("b2", "s2", "B", 22.5, 23.5, 8.8, 0.27), house("b3", "s2", "B", 21.5, 22.5, 10.2, 0.31)]
    out["tiny.json"] = d
    return out


def main():
    dump(DATA / "synth-r1-skeleton.json", synth_skeleton())
    (DATA / "weather-3day.csv").write_text(weather())
    (DATA / "regd-hour.csv").write_text(regd_signal())
    for name, doc in small_fixtures().items():
        dump(DATA / "small" / name, doc)
    dump(DATA / "populator-r1.json", {"seed": 11, "setpoint_c": [20.0, 24.0], "deadband_c": [0.5, 1.5],
                                      "sizing_factor": [1.6, 2.4], "band_lo": 0.9, "band_hi": 1.0})
    dump(DATA / "scenario-r1.json", {"feeder": "synth-r1.json", "weather": "weather-3day.csv",
                                     "signal": "regd-hour.csv", "case": "regulation", "seed": 2024,
                                     "signal_scale": 0.4, "monitored_line": "t1-t2", "monitored_phase": "A",
                                     "ev_penetration": 0.2, "ev_power_kw": 3.3, "n_trials": 6})
    dump(DATA / "small" / "scenario-tiny.json", {"feeder": "tiny.json", "weather": "../weather-3day.csv",
                                                 "signal": "../regd-hour.csv", "case": "regulation", "seed": 5,
                                                 "monitored_line": "src-m", "warmup_coarse_h": 3.5,
                                                 "warmup_fine_h": 0.5, "test_hour_start_s": 140400})


if __name__ == "__main__":
    main()
