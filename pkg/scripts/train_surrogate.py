"""Train the apex surrogate on a generated dataset.

    python3 scripts/train_surrogate.py --data data/jumps_7.csv --out data/surrogate_7.json
"""

import argparse
import json

from snapjump.dataset import load_dataset
from snapjump.surrogate import TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default="data/jumps_7.csv")
    ap.add_argument("--out", default="data/surrogate_7.json")
    ap.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    ap.add_argument("--seed", type=int, default=TrainConfig.seed)
    args = ap.parse_args()
    X, Y = load_dataset(args.data)
    res = train(X, Y, TrainConfig(epochs=args.epochs, seed=args.seed))
    res.model.save(args.out)
    print(json.dumps({"rows": len(X), "train_mae": res.train_mae, "val_mae": res.val_mae, "seconds": round(res.seconds, 1)}))


if __name__ == "__main__":
    main()
