"""Generate the jump dataset on a uniform grid (resumable).

    python3 scripts/generate_dataset.py --points 7 --out data/jumps_7.csv
"""

import argparse
import json
import logging
import time

from snapjump.config import SimSettings
from snapjump.dataset import generate, sample_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=7)
    ap.add_argument("--out", default="data/jumps_7.csv")
    ap.add_argument("--jobs", type=int, default=0)
    ap.add_argument("--dt", type=float, default=SimSettings.dt)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    t0 = time.time()
    summary = generate(sample_grid(args.points), args.out, jobs=args.jobs, settings=SimSettings(dt=args.dt), progress=True)
    summary["wall_s"] = round(time.time() - t0, 1)
    print(json.dumps(summary))


if __name__ == "__main__":
    main()
