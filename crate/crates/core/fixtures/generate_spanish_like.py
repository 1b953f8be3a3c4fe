#!/usr/bin/env python3
"""Regenerates spanish_like.json and spanish_like_profiles.csv.

Synthetic low-voltage network: three feeders, seven switches, four
residential districts and one commercial district with heavy rooftop PV.
Output is deterministic.
"""

import json
import math
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
STEPS = 96

# Per-segment impedance of district cables, p.u. on 1 MVA.
SEG_R = 0.032
SEG_X = 0.012
TRUNK_R = 0.012
TRUNK_X = 0.006
DISTRICT_SIZES = {"R1": 9, "R2": 11, "R3": 4, "V": 5, "C": 4}


def district(prefix, size):
    return [f"{prefix}{i}" for i in range(1, size + 1)]


def build_case(sizes=None, pv_buses=("R1_9", "R3_3", "V_4")):
    sizes = {**DISTRICT_SIZES, **(sizes or {})}
    buses, branches, switches, loads, generators = [], [], [], [], []

    def bus(bid, head=False):
        buses.append({"id": bid, "vmin": 0.95, "vmax": 1.05, "is_feeder_head": head})

    def line(a, b, r, x):
        branches.append({"id": f"L{len(branches) + 1:03d}", "from": a, "to": b, "r": r, "x": x})

    def chain(names, r=SEG_R, x=SEG_X):
        for a, b in zip(names, names[1:]):
            line(a, b, r, x)

    for k in (1, 2, 3):
        bus(f"F{k}", head=True)
        bus(f"T{k}")
        line(f"F{k}", f"T{k}", TRUNK_R, TRUNK_X)

    groups = {
        name: district(f"{name}_", size) for name, size in sizes.items()
    }
    for names in groups.values():
        for b in names:
            bus(b)
        chain(names)
    # Branch laterals inside two residential districts.
    for parent, lateral in (("V_4", ["V_L1", "V_L2", "V_L3"]), ("R2_3", ["R2_L1", "R2_L2"])):
        for b in lateral:
            bus(b)
        chain([parent] + lateral)
        groups[parent.split("_")[0]].extend(lateral)

    def sw(num, a, b):
        switches.append({"id": f"sw{num}", "from": a, "to": b, "name": f"SW{num}"})

    r1, r2, r3, v, c = (groups[k] for k in ("R1", "R2", "R3", "V", "C"))
    sw(1, "T3", r1[0])
    sw(2, r1[-1], v[-1])
    sw(3, "T1", r2[0])
    sw(4, r2[-1], c[0])
    sw(5, r3[-1], v[-2])
    sw(6, "T2", v[0])
    sw(7, c[-1], r3[0])

    res_keys = {"R1": "res_a", "R2": "res_b", "R3": "res_c", "V": "res_d"}
    for name, key in res_keys.items():
        for b in groups[name]:
            loads.append({"id": f"ld_{b}", "bus": b, "profile_key": key, "power_factor": 0.95})
    for b in c:
        loads.append({"id": f"ld_{b}", "bus": b, "profile_key": "com_net", "power_factor": 0.97})
    for k, b in enumerate(pv_buses, start=1):
        generators.append({"id": f"pv{k}", "bus": b, "profile_key": "pv_res", "power_factor": 1.0})

    return {
        "base_mva": 1.0,
        "buses": buses,
        "branches": branches,
        "switches": switches,
        "loads": loads,
        "generators": generators,
    }


def residential(rng, peak, evening_hour):
    out = []
    for t in range(STEPS):
        h = t / 4
        base = 0.30 + 0.25 * math.exp(-((h - 8.0) / 1.5) ** 2)
        evening = 1.0 * math.exp(-((h - evening_hour) / 2.0) ** 2)
        noise = rng.uniform(-0.08, 0.08)
        out.append(round(peak * max(0.1, base + evening + noise), 3))
    return out


def solar(peak):
    out = []
    for t in range(STEPS):
        h = t / 4
        out.append(round(peak * max(0.0, math.sin(math.pi * (h - 6.5) / 13.0)) ** 1.5, 3))
    return out


def commercial(rng, load_peak, pv_peak):
    pv = solar(pv_peak)
    out = []
    for t in range(STEPS):
        h = t / 4
        occupancy = 0.35 + 0.65 / (1 + math.exp(-(h - 8.0) * 1.5)) / (1 + math.exp((h - 19.0) * 1.5))
        load = load_peak * occupancy + rng.uniform(-0.5, 0.5)
        out.append(round(load - pv[t], 3))
    return out


# (peak kW, evening peak hour) per residential key.
RESIDENTIAL = {
    "res_a": (14.5, 18.0),
    "res_b": (27.2, 20.65),
    "res_c": (9.0, 17.95),
    "res_d": (6.6, 19.4),
}
# (peak load kW, rooftop PV peak kW) per commercial bus.
COMMERCIAL = (46.4, 88.3)
PV_PEAK = 18.3


def build_profiles(residential_params=None, commercial_params=COMMERCIAL, pv_peak=PV_PEAK):
    rng = random.Random(20240611)
    cols = {
        key: residential(rng, peak, hour)
        for key, (peak, hour) in (residential_params or RESIDENTIAL).items()
    }
    cols["com_net"] = commercial(rng, *commercial_params)
    cols["pv_res"] = solar(pv_peak)
    keys = list(cols)
    lines = ["timestep," + ",".join(keys)]
    for t in range(STEPS):
        lines.append(f"{t}," + ",".join(f"{cols[k][t]:g}" for k in keys))
    return "\n".join(lines) + "\n"


if __name__ == "__main__":
    (HERE / "spanish_like.json").write_text(json.dumps(build_case(), indent=2) + "\n")
    (HERE / "spanish_like_profiles.csv").write_text(build_profiles())
