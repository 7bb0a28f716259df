"""One-at-a-time parameter sweeps and the mounting-height curve of the robot.

    python3 scripts/trends.py --out results/trends.json
"""

import argparse
import json
from pathlib import Path

import numpy as np

from snapjump.config import Material
from snapjump.robot import ActuationProtocol, NormalizedParams, RobotDesign, default_mounting_table, forward_model, simulate_jump

BASE = dict(dalpha=0.1, eps=0.2, mbar=0.768, mu=0.3)
SWEEPS = {
    "dalpha": [0.01, 0.05, 0.1, 0.15, 0.19],
    "eps": [0.1, 0.15, 0.2, 0.25, 0.3],
    "mbar": [0.3, 0.5, 0.768, 1.2, 2.0],
    "mu": [0.1, 0.2, 0.35, 0.5, 0.6],
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/trends.json")
    args = ap.parse_args()
    res = {}
    for name, values in SWEEPS.items():
        rows = []
        for v in values:
            r = forward_model(NormalizedParams(**{**BASE, name: v}))
            rows.append({name: v, "xbar": r.xbar, "ybar": r.ybar, "jumped": r.jumped})
        res[name] = rows

    mat = Material()
    table = default_mounting_table()
    h1, h2 = table.mounting_height(0.2), table.post_snap_depth(0.2)
    curve = []
    for h in np.linspace(0.2 * h1, 1.1 * h2, 12):
        r = simulate_jump(RobotDesign(0.2, h, mat.mass_from_mbar(0.768), 0.3, mat), ActuationProtocol(0.1))
        curve.append({"h": h, "h_over_h1": h / h1, "ybar": r.ybar if r.jumped else 0.0, "jumped": r.jumped})
    res["mounting"] = {"h1": h1, "h2": h2, "curve": curve}

    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(res, indent=1))
    for name in SWEEPS:
        print(name, [(round(r["xbar"], 3), round(r["ybar"], 3)) for r in res[name]])


if __name__ == "__main__":
    main()
