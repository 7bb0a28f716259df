"""Inverse design checked against the physics engine on random environments.

    python3 scripts/validate_inverse.py --model data/surrogate_7.json --trials 20
"""

import argparse
import json

from snapjump.config import SimSettings
from snapjump.inverse import validate
from snapjump.surrogate import SurrogateModel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default="data/surrogate_7.json")
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=0)
    ap.add_argument("--dt", type=float, default=SimSettings.dt)
    args = ap.parse_args()
    model = SurrogateModel.load(args.model)
    report = validate(args.trials, model, SimSettings(dt=args.dt), seed=args.seed, jobs=args.jobs)
    print(json.dumps(report.to_dict(with_records=True), indent=1))


if __name__ == "__main__":
    main()
