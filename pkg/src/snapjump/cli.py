"""Command-line entry point: ``snapjump <command> [options]``.

Every run echoes the resolved configuration as one JSON line on stderr.
Exit codes: 0 success, 1 usage error, 2 simulation failure, 3 unreachable target.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time

import numpy as np

from .config import RunConfig
from .elastic import GeometryError

EXIT_OK, EXIT_USAGE, EXIT_SIM, EXIT_UNREACHABLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_snap_static(args, cfg: RunConfig) -> int:
    from .beam import BeamSpec, static_sweep

    specs = [BeamSpec(e, args.nodes, cfg.material) for e in args.eps]
    if len(specs) == 1:
        d = static_sweep(specs[0], alpha_max=args.alpha_max)
        if args.out:
            _write_csv(args.out, ["alpha", "ybar_mid", "Ebar"], zip(d.alpha, d.ybar_mid, d.Ebar))
        _emit({"eps": specs[0].eps, "alpha_star": d.alpha_star, "dE": d.dE, "h1": d.h1, "h2": d.h2})
        return EXIT_OK
    rows = [(s.eps, static_sweep(s, alpha_max=args.alpha_max).dE) for s in specs]
    if args.out:
        _write_csv(args.out, ["eps", "dE"], rows)
    x, y = np.array(rows).T
    fit = np.polyfit(x, y, 1)
    r2 = 1.0 - np.sum((np.polyval(fit, x) - y) ** 2) / np.sum((y - y.mean()) ** 2)
    _emit({"eps": x.tolist(), "dE": y.tolist(), "slope": fit[0], "intercept": fit[1], "r2": r2})
    return EXIT_OK


def cmd_snap_dynamic(args, cfg: RunConfig) -> int:
    from .beam import BeamSpec, dynamic_snap

    spec = BeamSpec(args.eps, args.nodes, cfg.material)
    rows = [(da, dynamic_snap(spec, da, rate=args.rate, dt=args.dt).theta_max) for da in args.dalpha]
    if args.out:
        _write_csv(args.out, ["dalpha", "theta_max"], rows)
    _emit({"eps": args.eps, "dalpha": [r[0] for r in rows], "theta_max": [r[1] for r in rows]})
    return EXIT_OK


def cmd_jump(args, cfg: RunConfig) -> int:
    from .robot import ActuationProtocol, RobotDesign, default_mounting_table, simulate_jump

    m = cfg.material
    h = args.h if args.h is not None else default_mounting_table().mounting_height(args.eps)
    s = cfg.sim
    design = RobotDesign(args.eps, h, m.mass_from_mbar(args.mbar), args.mu, m, s.n_beam, s.n_frame, s.frame_factor)
    protocol = ActuationProtocol(args.dalpha, s.rate, s.hold_margin)
    r = simulate_jump(design, protocol, settings=s, record=bool(args.traj))
    if args.traj:
        _write_csv(args.traj, ["t", "x", "y"], ((t, *c) for t, c in zip(r.times, r.com)))
    _emit({**r.to_dict(), "h": h})
    return EXIT_OK


def cmd_mount_table(args, cfg: RunConfig) -> int:
    from .beam import mounting_table

    grid = args.eps or np.round(np.arange(0.05, 0.3501, 0.025), 4)
    table = mounting_table(grid, args.nodes, cfg.material)
    if args.out:
        table.to_csv(args.out)
    _emit({"eps": table.eps.tolist(), "h1": table.h1.tolist(), "h2": table.h2.tolist()})
    return EXIT_OK


def cmd_gen_data(args, cfg: RunConfig) -> int:
    from .dataset import generate, sample_grid, sample_lhs

    params = sample_lhs(args.lhs, cfg.seed) if args.lhs else sample_grid(args.points)
    t0 = time.time()
    summary = generate(params, args.out, jobs=args.jobs or cfg.jobs, settings=cfg.sim, material=cfg.material)
    summary["wall_s"] = time.time() - t0
    _emit(summary)
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    from .dataset import load_dataset
    from .surrogate import TrainConfig, train

    data = args.data or cfg.data
    if not data:
        raise UsageError("train needs --data (or 'data' in the config file)")
    X, Y = load_dataset(data)
    seed = cfg.seed if args.seed is None else args.seed
    tcfg = TrainConfig(seed=seed) if args.epochs is None else TrainConfig(epochs=args.epochs, seed=seed)
    res = train(X, Y, tcfg)
    res.model.save(args.out)
    _emit({"rows": len(X), "train_mae": res.train_mae, "val_mae": res.val_mae, "seconds": res.seconds})
    return EXIT_OK


def _model(args, cfg: RunConfig):
    from .surrogate import SurrogateModel

    path = args.model or cfg.model
    if not path:
        raise UsageError("a surrogate model is required (--model or 'model' in the config file)")
    return SurrogateModel.load(path)


def cmd_region(args, cfg: RunConfig) -> int:
    from .inverse import reachable_region

    region = reachable_region(_model(args, cfg), args.mbar, args.mu, args.grid, args.grid)
    if args.out:
        _write_csv(args.out, ["dalpha", "eps", "xbar", "ybar"], region.rows())
    _emit({"mbar": args.mbar, "mu": args.mu, "simple": region.simple, "polygon": region.polygon.tolist()})
    return EXIT_OK


def cmd_inverse(args, cfg: RunConfig) -> int:
    from .inverse import solve

    sol = solve((args.x, args.y), args.mbar, args.mu, _model(args, cfg))
    _emit(sol.to_dict())
    return EXIT_OK if sol.reachable else EXIT_UNREACHABLE


def cmd_validate(args, cfg: RunConfig) -> int:
    from .inverse import validate

    seed = cfg.seed if args.seed is None else args.seed
    report = validate(args.trials, _model(args, cfg), cfg.sim, seed, args.jobs or cfg.jobs or 1, cfg.material)
    _emit(report.to_dict(with_records=args.records))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="snapjump", description="Snap-actuated jumping robot simulation and inverse design.")
    p.add_argument("--config", help="JSON file overriding material / solver settings")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("snap-static", help="quasi-static snap of the clamped beam")
    s.add_argument("--eps", type=_floats, required=True, help="one value, or several for the energy-release fit")
    s.add_argument("--nodes", type=int, default=100)
    s.add_argument("--alpha-max", type=float, default=1.6)
    s.add_argument("--out")
    s.set_defaults(func=cmd_snap_static)

    s = sub.add_parser("snap-dynamic", help="dynamic snap with mismatched clamp rotation")
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--dalpha", type=_floats, required=True)
    s.add_argument("--nodes", type=int, default=100)
    s.add_argument("--rate", type=float, default=20.0)
    s.add_argument("--dt", type=float, default=1e-4)
    s.add_argument("--out")
    s.set_defaults(func=cmd_snap_dynamic)

    s = sub.add_parser("jump", help="simulate one jump")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--dalpha", type=float, required=True)
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--mbar", type=float, required=True)
    s.add_argument("--h", type=float, help="mounting height [m]; defaults to h1(eps)")
    s.add_argument("--traj", help="CSV file for the centre-of-mass trajectory")
    s.set_defaults(func=cmd_jump)

    s = sub.add_parser("mount-table", help="critical heights h1, h2 over eps")
    s.add_argument("--eps", type=_floats)
    s.add_argument("--nodes", type=int, default=100)
    s.add_argument("--out")
    s.set_defaults(func=cmd_mount_table)

    s = sub.add_parser("gen-data", help="generate the jump dataset")
    s.add_argument("--points", type=int, default=7)
    s.add_argument("--lhs", type=int, default=0, help="Latin-hypercube sample size instead of a grid")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=0)
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train", help="train the surrogate")
    s.add_argument("--data")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int, help="default: TrainConfig.epochs")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("region", help="reachable apex region for an environment")
    s.add_argument("--mbar", type=float, required=True)
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--model")
    s.add_argument("--grid", type=int, default=50)
    s.add_argument("--out")
    s.set_defaults(func=cmd_region)

    s = sub.add_parser("inverse", help="controls for a target apex")
    s.add_argument("--x", type=float, required=True)
    s.add_argument("--y", type=float, required=True)
    s.add_argument("--mbar", type=float, required=True)
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--model")
    s.set_defaults(func=cmd_inverse)

    s = sub.add_parser("validate", help="inverse design checked against the physics engine")
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--model")
    s.add_argument("--jobs", type=int, default=0)
    s.add_argument("--seed", type=int)
    s.add_argument("--records", action="store_true", help="include per-trial records")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        resolved = {"command": args.command, **{k: v for k, v in vars(args).items() if k not in ("func", "command")}}
        resolved["config"] = cfg.to_dict()
        print(json.dumps(resolved, sort_keys=True, default=str), file=sys.stderr)
        return args.func(args, cfg)
    except GeometryError as exc:
        print(f"snapjump {args.command}: simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIM
    except (UsageError, ValueError, OSError) as exc:
        print(f"snapjump {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"snapjump {args.command}: simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
