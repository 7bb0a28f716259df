"""Reachability test and gradient-based inverse design on the surrogate."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from shapely.geometry import LinearRing

from .config import DALPHA_RANGE, EPS_RANGE, Material, SimSettings
from .robot import NormalizedParams, forward_model
from .surrogate import SurrogateModel

log = logging.getLogger(__name__)

CONTROL_LO = np.array([DALPHA_RANGE[0], EPS_RANGE[0]])
CONTROL_HI = np.array([DALPHA_RANGE[1], EPS_RANGE[1]])


def _inputs(controls: np.ndarray, mbar: float, mu: float) -> np.ndarray:
    c = np.atleast_2d(controls)
    return np.column_stack([c[:, 0], c[:, 1], np.full(len(c), mbar), np.full(len(c), mu)])


@dataclass
class ReachableRegion:
    mbar: float
    mu: float
    dalpha: np.ndarray  # (m,) block midpoints
    eps: np.ndarray  # (n,)
    images: np.ndarray  # (2, m, n) predicted (xbar, ybar) at block midpoints
    polygon: np.ndarray  # (k, 2) perimeter image, counter-clockwise in parameter space, open
    simple: bool

    @property
    def points(self) -> np.ndarray:
        return self.images.reshape(2, -1).T

    def cell_diameter(self) -> float:
        """Largest image-space distance between neighbouring grid midpoints."""
        im = self.images
        d1 = np.hypot(*np.diff(im, axis=1)).max() if im.shape[1] > 1 else 0.0
        d2 = np.hypot(*np.diff(im, axis=2)).max() if im.shape[2] > 1 else 0.0
        return float(np.hypot(d1, d2))

    def rows(self):
        for i, a in enumerate(self.dalpha):
            for j, e in enumerate(self.eps):
                yield float(a), float(e), float(self.images[0, i, j]), float(self.images[1, i, j])


def perimeter_controls(m: int, n: int) -> np.ndarray:
    """Points along the boundary of the control box, counter-clockwise."""
    a = np.linspace(DALPHA_RANGE[0], DALPHA_RANGE[1], m + 1)
    e = np.linspace(EPS_RANGE[0], EPS_RANGE[1], n + 1)
    bottom = np.column_stack([a[:-1], np.full(m, e[0])])
    right = np.column_stack([np.full(n, a[-1]), e[:-1]])
    top = np.column_stack([a[::-1][:-1], np.full(m, e[-1])])
    left = np.column_stack([np.full(n, a[0]), e[::-1][:-1]])
    return np.vstack([bottom, right, top, left])


def reachable_region(model: SurrogateModel, mbar: float, mu: float, m: int = 50, n: int = 50) -> ReachableRegion:
    da = DALPHA_RANGE[0] + (np.arange(m) + 0.5) * (DALPHA_RANGE[1] - DALPHA_RANGE[0]) / m
    ep = EPS_RANGE[0] + (np.arange(n) + 0.5) * (EPS_RANGE[1] - EPS_RANGE[0]) / n
    A, E = np.meshgrid(da, ep, indexing="ij")
    pred = model(_inputs(np.column_stack([A.ravel(), E.ravel()]), mbar, mu))
    images = pred.T.reshape(2, m, n)
    poly = model(_inputs(perimeter_controls(m, n), mbar, mu))
    simple = bool(LinearRing(poly).is_simple)
    if not simple:
        log.warning("perimeter image folds over (mbar=%.3g, mu=%.3g); using grid test", mbar, mu)
    return ReachableRegion(mbar, mu, da, ep, images, poly, simple)


def point_in_polygon(point, polygon: np.ndarray, edge_tol: float = 1e-12) -> bool:
    """Even-odd rule with a ray towards +x; points on an edge count as inside."""
    x, y = float(point[0]), float(point[1])
    xi, yi = polygon[:, 0], polygon[:, 1]
    xj, yj = np.roll(xi, -1), np.roll(yi, -1)
    # on-edge test: zero cross product and inside the edge's bounding box
    cross = (xj - xi) * (y - yi) - (yj - yi) * (x - xi)
    scale = np.hypot(xj - xi, yj - yi) + 1e-300
    on_line = np.abs(cross) / scale <= edge_tol
    in_box = (np.minimum(xi, xj) - edge_tol <= x) & (x <= np.maximum(xi, xj) + edge_tol)
    in_box &= (np.minimum(yi, yj) - edge_tol <= y) & (y <= np.maximum(yi, yj) + edge_tol)
    if np.any(on_line & in_box):
        return True
    straddle = (yi > y) != (yj > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = xi + (y - yi) * (xj - xi) / (yj - yi)
    return bool(np.count_nonzero(straddle & (x < x_cross)) % 2)


def is_reachable(target, region: ReachableRegion) -> bool:
    if region.simple:
        return point_in_polygon(target, region.polygon)
    d = np.hypot(*(region.points - np.asarray(target, dtype=float)).T).min()
    return bool(d < region.cell_diameter())


@dataclass
class InverseSolution:
    reachable: bool
    dalpha: float = float("nan")
    eps: float = float("nan")
    pred_x: float = float("nan")
    pred_y: float = float("nan")
    cost: float = float("nan")
    iterations: int = 0
    time_s: float = 0.0
    near_boundary: bool = False

    def to_dict(self) -> dict:
        return {
            "reachable": self.reachable,
            "dalpha": self.dalpha,
            "eps": self.eps,
            "pred_x": self.pred_x,
            "pred_y": self.pred_y,
            "cost": self.cost,
            "iterations": self.iterations,
            "time_s": self.time_s,
            "near_boundary": self.near_boundary,
        }


@dataclass(frozen=True)
class SolverConfig:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    max_iter: int = 500
    cost_tol: float = 1e-8
    step_tol: float = 1e-10
    n_starts: int = 5
    warn_cost: float = 1e-4  # flag solutions left this far from the target
    polish_iter: int = 20  # damped Gauss-Newton steps after Adam (0 disables)


def _cost_and_grad(model, c, target, mbar, mu):
    X = _inputs(c, mbar, mu)
    r = model(X) - target
    J = (r * r).sum(axis=1)
    G = model.input_gradient(X)[:, :, :2]  # d(xbar, ybar) / d(dalpha, eps)
    return J, 2.0 * np.einsum("kij,ki->kj", G, r), r + target


def descend(model, starts, target, mbar, mu, config: SolverConfig | None = None):
    """Projected Adam from several starts at once.

    A step that would raise a start's cost is rejected and that start's step
    size is halved, so every start's cost is non-increasing. Returns the
    final controls, costs, predictions, iteration count and the cost history.
    """
    config = config or SolverConfig()
    target = np.asarray(target, dtype=float)
    c = np.clip(np.atleast_2d(np.asarray(starts, dtype=float)), CONTROL_LO, CONTROL_HI)
    J, g, pred = _cost_and_grad(model, c, target, mbar, mu)
    m = np.zeros_like(c)
    v = np.zeros_like(c)
    lr = np.full(len(c), config.lr)
    history = [J.copy()]
    stalled = np.zeros(len(c), dtype=bool)
    it = 0
    for it in range(1, config.max_iter + 1):
        active = (J >= config.cost_tol) & ~stalled
        if not active.any():
            it -= 1
            break
        m = config.beta1 * m + (1 - config.beta1) * g
        v = config.beta2 * v + (1 - config.beta2) * g * g
        mh = m / (1 - config.beta1**it)
        vh = v / (1 - config.beta2**it)
        step = lr[:, None] * mh / (np.sqrt(vh) + config.adam_eps)
        trial = np.clip(c - step, CONTROL_LO, CONTROL_HI)
        stalled |= active & (np.linalg.norm(trial - c, axis=1) < config.step_tol)
        Jt, gt, pt = _cost_and_grad(model, trial, target, mbar, mu)
        accept = active & ~stalled & (Jt <= J)
        c[accept], J[accept], g[accept], pred[accept] = trial[accept], Jt[accept], gt[accept], pt[accept]
        lr[active & ~accept] *= 0.5
        history.append(J.copy())
    return c, J, pred, it, np.array(history)


def polish(model, c, target, mbar, mu, config: SolverConfig | None = None):
    """Damped Gauss-Newton refinement of each start, projected onto the box.

    Adam creeps along the narrow valleys of J where one apex coordinate
    barely depends on the controls; with two equations in two unknowns a few
    Levenberg-Marquardt steps on the same Jacobian finish the job. Only
    cost-decreasing steps are taken.
    """
    config = config or SolverConfig()
    target = np.asarray(target, dtype=float)
    c = np.array(c, dtype=float)
    X = _inputs(c, mbar, mu)
    pred = model(X)
    r = pred - target
    J = (r * r).sum(axis=1)
    lam = np.full(len(c), 1e-3)
    for _ in range(config.polish_iter):
        active = J >= config.cost_tol
        if not active.any():
            break
        G = model.input_gradient(_inputs(c, mbar, mu))[:, :, :2]
        A = np.einsum("kij,kil->kjl", G, G)
        b = np.einsum("kij,ki->kj", G, r)
        scale = np.trace(A, axis1=1, axis2=2)[:, None, None] + 1e-300
        step = -np.linalg.solve(A + lam[:, None, None] * scale * np.eye(2), b[..., None])[..., 0]
        trial = np.clip(c + step, CONTROL_LO, CONTROL_HI)
        pt = model(_inputs(trial, mbar, mu))
        rt = pt - target
        Jt = (rt * rt).sum(axis=1)
        accept = active & (Jt < J)
        c[accept], J[accept], r[accept], pred[accept] = trial[accept], Jt[accept], rt[accept], pt[accept]
        lam = np.where(accept, lam / 3.0, np.where(active, lam * 4.0, lam))
    return c, J, pred


def solve(
    target,
    mbar: float,
    mu: float,
    model: SurrogateModel,
    region: ReachableRegion | None = None,
    config: SolverConfig | None = None,
) -> InverseSolution:
    """Controls (dalpha, eps) whose predicted apex matches ``target``."""
    config = config or SolverConfig()
    t0 = time.perf_counter()
    target = np.asarray(target, dtype=float)
    if region is None:
        region = reachable_region(model, mbar, mu)
    if not is_reachable(target, region):
        return InverseSolution(reachable=False, time_s=time.perf_counter() - t0)
    # starts: grid midpoints whose predictions land nearest the target
    d = np.hypot(*(region.points - target).T)
    nearest = np.argsort(d, kind="stable")[: config.n_starts]
    ii, jj = np.unravel_index(nearest, region.images.shape[1:])
    starts = np.column_stack([region.dalpha[ii], region.eps[jj]])
    c, J, pred, iters, _ = descend(model, starts, target, mbar, mu, config)
    if config.polish_iter:
        c, J, pred = polish(model, c, target, mbar, mu, config)
    best = np.lexsort((c[:, 0], J))[0]  # lowest cost, then gentlest mismatch
    return InverseSolution(
        reachable=True,
        dalpha=float(c[best, 0]),
        eps=float(c[best, 1]),
        pred_x=float(pred[best, 0]),
        pred_y=float(pred[best, 1]),
        cost=float(J[best]),
        iterations=int(iters),
        time_s=time.perf_counter() - t0,
        near_boundary=bool(J[best] > config.warn_cost),
    )


def sample_reachable_target(
    region: ReachableRegion, rng: np.random.Generator, max_tries: int = 10000, model: SurrogateModel | None = None
) -> np.ndarray:
    """Random reachable target.

    Uniform in the region polygon (rejection in its bounding box). When the
    perimeter image folds and ``model`` is given, the target is instead the
    predicted apex of uniformly random controls: the grid fallback of
    ``is_reachable`` would also accept points up to a cell away from the image.
    """
    if not region.simple and model is not None:
        c = rng.uniform(CONTROL_LO, CONTROL_HI)
        return model(_inputs(c[None], region.mbar, region.mu))[0]
    pts = region.polygon if region.simple else region.points
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    for _ in range(max_tries):
        t = rng.uniform(lo, hi)
        if is_reachable(t, region):
            return t
    raise RuntimeError("could not sample a reachable target")


def _physics(args):
    dalpha, eps, mbar, mu, settings, material = args
    r = forward_model(NormalizedParams(dalpha, eps, mbar, mu), settings=settings, material=material)
    return r.xbar, r.ybar, r.jumped


@dataclass
class ValidationReport:
    trials: int
    mean_error_m: float
    std_error_m: float
    max_error_m: float
    mean_time_s: float
    records: list

    def to_dict(self, with_records: bool = False) -> dict:
        d = {
            "trials": self.trials,
            "mean_error_m": self.mean_error_m,
            "std_error_m": self.std_error_m,
            "max_error_m": self.max_error_m,
            "mean_time_s": self.mean_time_s,
        }
        if with_records:
            d["records"] = self.records
        return d


def validate(
    n_trials: int,
    model: SurrogateModel,
    settings: SimSettings | None = None,
    seed: int = 0,
    jobs: int = 1,
    material: Material | None = None,
) -> ValidationReport:
    """Random environments and reachable targets, solved on the surrogate and
    checked against the physics engine."""
    from .config import MBAR_RANGE, MU_RANGE

    material = material or Material()
    rng = np.random.default_rng(seed)
    records, jobs_args = [], []
    for _ in range(n_trials):
        mbar = float(rng.uniform(*MBAR_RANGE))
        mu = float(rng.uniform(*MU_RANGE))
        t0 = time.perf_counter()
        region = reachable_region(model, mbar, mu)
        target = sample_reachable_target(region, rng, model=model)
        region_time = time.perf_counter() - t0
        sol = solve(target, mbar, mu, model, region=region)
        records.append(
            {
                "mbar": mbar,
                "mu": mu,
                "target": target.tolist(),
                "dalpha": sol.dalpha,
                "eps": sol.eps,
                "cost": sol.cost,
                "time_s": region_time + sol.time_s,
            }
        )
        jobs_args.append((sol.dalpha, sol.eps, mbar, mu, settings, material))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            sims = list(pool.map(_physics, jobs_args))
    else:
        sims = [_physics(a) for a in jobs_args]
    errors = []
    for rec, (xb, yb, jumped) in zip(records, sims):
        err = float(np.hypot(xb - rec["target"][0], yb - rec["target"][1]) * material.L)
        rec.update(sim_x=xb, sim_y=yb, jumped=bool(jumped), error_m=err)
        errors.append(err)
    errors = np.array(errors)
    return ValidationReport(
        trials=n_trials,
        mean_error_m=float(errors.mean()),
        std_error_m=float(errors.std()),
        max_error_m=float(errors.max()),
        mean_time_s=float(np.mean([r["time_s"] for r in records])),
        records=records,
    )
