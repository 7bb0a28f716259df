"""Design-space sampling and resumable parallel dataset generation."""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from .config import PARAM_NAMES, PARAM_RANGES, Material, SimSettings
from .robot import NormalizedParams, forward_model

log = logging.getLogger(__name__)

HEADER = "dalpha,eps,mbar,mu,xbar,ybar,flag"

# flag values
OK, NO_JUMP, FAILED = 0, 1, 2


@dataclass(frozen=True)
class DatasetRow:
    dalpha: float
    eps: float
    mbar: float
    mu: float
    xbar: float
    ybar: float
    flag: int = OK

    def to_csv(self) -> str:
        vals = [self.dalpha, self.eps, self.mbar, self.mu, self.xbar, self.ybar]
        return ",".join(repr(float(v)) for v in vals) + f",{self.flag}"


def sample_grid(points_per_dim: int) -> list[NormalizedParams]:
    """Uniform tensor grid over the design ranges (range midpoints for 1 point)."""
    if points_per_dim < 1:
        raise ValueError("points_per_dim must be >= 1")
    if points_per_dim == 1:
        axes = [[0.5 * (lo + hi)] for lo, hi in PARAM_RANGES]
    else:
        axes = [np.linspace(lo, hi, points_per_dim).tolist() for lo, hi in PARAM_RANGES]
    return [NormalizedParams(*p) for p in itertools.product(*axes)]


def sample_lhs(n: int, seed: int = 0) -> list[NormalizedParams]:
    lo = np.array([r[0] for r in PARAM_RANGES])
    hi = np.array([r[1] for r in PARAM_RANGES])
    u = qmc.LatinHypercube(d=len(PARAM_NAMES), seed=seed).random(n)
    return [NormalizedParams(*p) for p in qmc.scale(u, lo, hi).tolist()]


def run_row(p: NormalizedParams, settings: SimSettings | None = None, material: Material | None = None) -> DatasetRow:
    try:
        r = forward_model(p, settings=settings, material=material)
    except Exception as exc:  # recorded, not fatal
        log.warning("simulation failed at %s: %s", p, exc)
        return DatasetRow(p.dalpha, p.eps, p.mbar, p.mu, float("nan"), float("nan"), FAILED)
    return DatasetRow(p.dalpha, p.eps, p.mbar, p.mu, r.xbar, r.ybar, OK if r.jumped else NO_JUMP)


def _work(args):
    idx, p, settings, material = args
    return idx, run_row(p, settings, material)


def _read_partial(path: Path) -> dict[int, str]:
    done = {}
    if path.exists():
        for line in path.read_text().splitlines():
            idx, _, rest = line.partition(",")
            if rest.count(",") == 6:  # skip a torn last line
                done[int(idx)] = rest
    return done


def generate(
    params: list[NormalizedParams],
    out,
    jobs: int = 0,
    settings: SimSettings | None = None,
    progress: bool = False,
    material: Material | None = None,
) -> dict:
    """Simulate every tuple and write the dataset CSV.

    Completed rows are appended to ``<out>.partial`` as they finish, so an
    interrupted run resumes where it stopped. Returns a small summary.
    """
    out = Path(out)
    partial = out.with_name(out.name + ".partial")
    done = _read_partial(partial)
    todo = [(i, p, settings, material) for i, p in enumerate(params) if i not in done]
    jobs = jobs or os.cpu_count() or 1
    log.info("%d rows, %d already done, %d workers", len(params), len(done), jobs)

    with open(partial, "a") as fh:

        def record(idx, row):
            done[idx] = row.to_csv()
            fh.write(f"{idx},{done[idx]}\n")
            fh.flush()
            if progress and len(done) % 25 == 0:
                log.info("%d / %d rows", len(done), len(params))

        if jobs == 1 or len(todo) <= 1:
            for item in todo:
                record(*_work(item))
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_work, item) for item in todo]
                for fut in as_completed(futures):
                    record(*fut.result())

    lines = [done[i] for i in range(len(params))]
    out.write_text(HEADER + "\n" + "\n".join(lines) + ("\n" if lines else ""))
    partial.unlink()
    flags = np.array([int(line.rsplit(",", 1)[1]) for line in lines], dtype=int)
    summary = {
        "rows": len(lines),
        "usable": int((flags == OK).sum()),
        "no_jump": int((flags == NO_JUMP).sum()),
        "failed": int((flags == FAILED).sum()),
    }
    summary["flagged_fraction"] = (summary["rows"] - summary["usable"]) / max(summary["rows"], 1)
    return summary


def load_dataset(path, include_flagged: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Inputs (n, 4) and normalised apex targets (n, 2) from a dataset CSV."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if not include_flagged:
        data = data[data[:, 6] == OK]
    return data[:, :4], data[:, 4:6]
