#!/usr/bin/env python3
"""Regenerates the small synthetic cases used by the test suite.

triangle.json      three switch-free regions joined by a ring of three switches
heavy_feeder.json  one long radial feeder loaded until its tail sags below 0.95 p.u.
lattice.json       3x3 grid of regions tied by 12 switches, two feeders
"""

import json
from pathlib import Path

HERE = Path(__file__).resolve().parent


def bus(bid, head=False):
    return {"id": bid, "vmin": 0.95, "vmax": 1.05, "is_feeder_head": head}


def load(bid, key="res"):
    return {"id": f"ld_{bid}", "bus": bid, "profile_key": key, "power_factor": 0.95}


def triangle():
    buses = [bus("F", True), bus("a"), bus("b")]
    switches = [
        {"id": "s1", "from": "F", "to": "a", "name": "S1"},
        {"id": "s2", "from": "a", "to": "b", "name": "S2"},
        {"id": "s3", "from": "b", "to": "F", "name": "S3"},
    ]
    return {
        "base_mva": 1.0,
        "buses": buses,
        "branches": [],
        "switches": switches,
        "loads": [load("a"), load("b")],
        "generators": [],
    }


def heavy_feeder():
    names = ["F"] + [f"b{i}" for i in range(1, 7)]
    buses = [bus(n, n == "F") for n in names]
    branches = [
        {"id": f"L{i}", "from": a, "to": b, "r": 0.02, "x": 0.01}
        for i, (a, b) in enumerate(zip(names, names[1:]), start=1)
    ]
    return {
        "base_mva": 1.0,
        "buses": buses,
        "branches": branches,
        "switches": [],
        "loads": [load(n, "heavy") for n in names[1:]],
        "generators": [],
    }


def lattice():
    buses, branches, switches, loads = [], [], [], []
    for head in ("F1", "F2"):
        buses.append(bus(head, True))
    for r in range(3):
        for c in range(3):
            a, b = f"n{r}{c}a", f"n{r}{c}b"
            buses += [bus(a), bus(b)]
            branches.append({"id": f"L{r}{c}", "from": a, "to": b, "r": 0.01, "x": 0.005})
            loads.append(load(b))
    branches.append({"id": "LF1", "from": "F1", "to": "n00a", "r": 0.005, "x": 0.003})
    branches.append({"id": "LF2", "from": "F2", "to": "n22a", "r": 0.005, "x": 0.003})
    k = 0
    for r in range(3):
        for c in range(3):
            for dr, dc in ((0, 1), (1, 0)):
                rr, cc = r + dr, c + dc
                if rr < 3 and cc < 3:
                    k += 1
                    switches.append(
                        {"id": f"t{k:02d}", "from": f"n{r}{c}b", "to": f"n{rr}{cc}a", "name": f"T{k}"}
                    )
    return {
        "base_mva": 1.0,
        "buses": buses,
        "branches": branches,
        "switches": switches,
        "loads": loads,
        "generators": [],
    }


if __name__ == "__main__":
    for name, build in (("triangle", triangle), ("heavy_feeder", heavy_feeder), ("lattice", lattice)):
        (HERE / f"{name}.json").write_text(json.dumps(build(), indent=2) + "\n")
