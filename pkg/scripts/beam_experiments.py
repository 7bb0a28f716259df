"""Beam experiments: energy release over eps, dynamic snap angle over the
clamp mismatch, and the mounting-height table.

    python3 scripts/beam_experiments.py --out results/
"""

import argparse
import json
from pathlib import Path

import numpy as np

from snapjump.beam import BeamSpec, dynamic_snap, energy_release, mounting_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--nodes", type=int, default=100)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    eps = np.linspace(0.05, 0.3, 6)
    dE = energy_release(eps, args.nodes)
    slope, icpt = np.polyfit(eps, dE, 1)
    np.savetxt(out / "energy_release.csv", np.column_stack([eps, dE]), delimiter=",", header="eps,dE", comments="")

    das = [0.0, 0.02, 0.05, 0.1, 0.15, 0.19]
    theta = [dynamic_snap(BeamSpec(0.1, args.nodes), da).theta_max for da in das]
    np.savetxt(out / "snap_angle.csv", np.column_stack([das, theta]), delimiter=",", header="dalpha,theta_max", comments="")

    mounting_table(n_nodes=args.nodes).to_csv(out / "mounting_table.csv")
    print(json.dumps({"dE_slope": slope, "dE_intercept": icpt, "theta_max": dict(zip(map(str, das), theta))}))


if __name__ == "__main__":
    main()
