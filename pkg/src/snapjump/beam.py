"""Pre-compressed clamped-clamped beam: statics and dynamic snap-through.

The beam spans from (0, 0) to (l1, 0) with l1 = L (1 - eps). A clamp is
realised by fixing the end node and the node next to it; rotating the clamp by
``alpha`` moves that neighbour to ``ds (cos alpha, -sin alpha)`` (left) or its
mirror image (right), i.e. both end tangents tilt downward for alpha > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator

from .config import Material
from .elastic import DiscreteStructure, StructureBuilder, total_energy
from .stepper import (
    BoundarySpec,
    ConvergenceError,
    Stepper,
    StepperConfig,
    SystemState,
    static_solve,
)


class SnapNotFound(RuntimeError):
    pass


@dataclass(frozen=True)
class BeamSpec:
    eps: float
    n_nodes: int = 100
    material: Material = field(default_factory=Material)

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError("pre-compression ratio must lie in (0, 1)")
        if self.n_nodes < 5:
            raise ValueError("need at least 5 nodes to clamp both ends")

    @property
    def l1(self) -> float:
        return self.material.L * (1.0 - self.eps)

    @property
    def ds(self) -> float:
        return self.material.L / (self.n_nodes - 1)

    @property
    def static_tol(self) -> float:
        m = self.material
        return 1e-6 * m.EI / m.L**2


@dataclass
class SnapDiagnostics:
    alpha: np.ndarray | None = None
    ybar_mid: np.ndarray | None = None
    Ebar: np.ndarray | None = None
    alpha_star: float | None = None
    dE: float | None = None
    q_pre: np.ndarray | None = None
    q_post: np.ndarray | None = None
    h1: float | None = None
    h2: float | None = None
    theta_max: float | None = None
    times: np.ndarray | None = None
    theta: np.ndarray | None = None


def build_beam(spec: BeamSpec) -> DiscreteStructure:
    m = spec.material
    b = StructureBuilder()
    for i in range(spec.n_nodes):
        b.add_node(i * spec.ds, 0.0)
    for i in range(spec.n_nodes - 1):
        b.add_edge(i, i + 1, m.EA, m.line_density)
    for i in range(1, spec.n_nodes - 1):
        b.add_hinge(i - 1, i, i + 1, m.EI, rest_angle=0.0)
    return b.build()


def clamp_dofs(spec: BeamSpec) -> np.ndarray:
    n = spec.n_nodes
    nodes = [0, 1, n - 2, n - 1]
    return np.array([2 * i + c for i in nodes for c in (0, 1)])


def clamp_values(spec: BeamSpec, alpha_left: float, alpha_right: float) -> np.ndarray:
    ds, l1 = spec.ds, spec.l1
    return np.array(
        [
            0.0,
            0.0,
            ds * np.cos(alpha_left),
            -ds * np.sin(alpha_left),
            l1 - ds * np.cos(alpha_right),
            -ds * np.sin(alpha_right),
            l1,
            0.0,
        ]
    )


def clamp_boundary(spec: BeamSpec, alpha_left: float, alpha_right: float | None = None) -> BoundarySpec:
    if alpha_right is None:
        alpha_right = alpha_left
    return BoundarySpec.fixed(clamp_dofs(spec), clamp_values(spec, alpha_left, alpha_right))


def seed_shape(spec: BeamSpec, branch: str = "up") -> np.ndarray:
    """First clamped buckling mode with the end shortening of ``spec``,
    resampled at equal arclength."""
    sign = {"up": 1.0, "down": -1.0}[branch]
    L, l1 = spec.material.L, spec.l1
    amp = 2.0 * np.sqrt(spec.eps * L * l1) / np.pi
    x = np.linspace(0.0, l1, 4001)
    y = sign * 0.5 * amp * (1.0 - np.cos(2.0 * np.pi * x / l1))
    s = np.r_[0.0, np.cumsum(np.hypot(np.diff(x), np.diff(y)))]
    s *= L / s[-1]
    target = np.linspace(0.0, L, spec.n_nodes)
    xs, ys = np.interp(target, s, x), np.interp(target, s, y)
    q = np.column_stack([xs, ys]).ravel()
    q[clamp_dofs(spec)] = clamp_values(spec, 0.0, 0.0)
    return q


def midpoint_height(spec: BeamSpec, q: np.ndarray) -> float:
    """Normalised height of the arclength midpoint."""
    y = q[1::2]
    n = spec.n_nodes
    mid = 0.5 * (y[(n - 1) // 2] + y[n // 2])
    return float(mid / spec.material.L)


def midpoint_angle(q: np.ndarray) -> float:
    """Tangent angle of the edge nearest the arclength midpoint (clamp line = 0)."""
    x = q.reshape(-1, 2)
    n = len(x)
    i = (n - 1) // 2 if n % 2 == 0 else n // 2
    if n % 2 == 1:
        # odd count: the midpoint is a node, average its two edges
        d = x[i + 1] - x[i - 1]
    else:
        d = x[i + 1] - x[i]
    return float(np.arctan2(d[1], d[0]))


def normalized_energy(spec: BeamSpec, structure: DiscreteStructure, q: np.ndarray) -> float:
    m = spec.material
    return total_energy(structure, q) * m.L / m.EI


def make_buckled_beam(spec: BeamSpec, branch: str = "up") -> np.ndarray:
    if branch not in ("up", "down"):
        raise ValueError("branch must be 'up' or 'down'")
    structure = build_beam(spec)
    q0 = seed_shape(spec, "up")
    q = static_solve(q0, structure, clamp_boundary(spec, 0.0), tol=spec.static_tol)
    if branch == "down":
        # the clamp line is a mirror axis, so the reflection is an exact equilibrium
        q = q.copy()
        q[1::2] *= -1.0
    return q


def static_sweep(
    spec: BeamSpec,
    alpha_max: float = 1.6,
    d_alpha: float = 0.01,
    fine: float = 1e-3,
) -> SnapDiagnostics:
    """Quasi-static symmetric clamp rotation from the up branch until snap."""
    structure = build_beam(spec)
    tol = spec.static_tol
    q = make_buckled_beam(spec, "up")
    alpha = 0.0
    alphas, ybar, ebar = [0.0], [midpoint_height(spec, q)], [normalized_energy(spec, structure, q)]
    step = d_alpha
    while True:
        nxt = alpha + step
        if nxt > alpha_max + 1e-12:
            raise SnapNotFound(f"no snap up to alpha = {alpha_max}")
        guess = q.copy()
        guess[clamp_dofs(spec)] = clamp_values(spec, nxt, nxt)
        try:
            q_new = static_solve(guess, structure, clamp_boundary(spec, nxt), tol=tol)
        except ConvergenceError:
            q_new = None
        snapped = q_new is None or midpoint_height(spec, q_new) < 0.0
        if snapped and step > fine * 1.0001:
            step = fine
            continue
        if snapped:
            if q_new is None:
                raise ConvergenceError(f"static solve failed past the fold at alpha = {nxt}")
            break
        q, alpha = q_new, nxt
        alphas.append(alpha)
        ybar.append(midpoint_height(spec, q))
        ebar.append(normalized_energy(spec, structure, q))

    alpha_star = nxt
    q_post = q_new
    # far-branch equilibrium at the last pre-snap angle
    far_guess = q_post.copy()
    far_guess[clamp_dofs(spec)] = clamp_values(spec, alpha, alpha)
    q_far = static_solve(far_guess, structure, clamp_boundary(spec, alpha), tol=tol)
    dE = ebar[-1] - normalized_energy(spec, structure, q_far)
    alphas.append(alpha_star)
    ybar.append(midpoint_height(spec, q_post))
    ebar.append(normalized_energy(spec, structure, q_post))
    return SnapDiagnostics(
        alpha=np.array(alphas),
        ybar_mid=np.array(ybar),
        Ebar=np.array(ebar),
        alpha_star=alpha_star,
        dE=float(dE),
        q_pre=q,
        q_post=q_post,
        h1=float(-q[1::2].min()),
        h2=float(-q_post[1::2].min()),
    )


def critical_heights(spec: BeamSpec) -> tuple[float, float]:
    d = static_sweep(spec)
    return d.h1, d.h2


def energy_release(eps_values, n_nodes: int = 100, material: Material | None = None) -> np.ndarray:
    material = material or Material()
    return np.array([static_sweep(BeamSpec(e, n_nodes, material)).dE for e in eps_values])


@dataclass(frozen=True)
class MountingTable:
    """Critical heights over a grid of pre-compression ratios."""

    eps: np.ndarray
    h1: np.ndarray
    h2: np.ndarray

    def mounting_height(self, eps: float) -> float:
        return float(PchipInterpolator(self.eps, self.h1)(eps))

    def post_snap_depth(self, eps: float) -> float:
        return float(PchipInterpolator(self.eps, self.h2)(eps))

    def rows(self):
        return [(float(e), float(a), float(b)) for e, a, b in zip(self.eps, self.h1, self.h2)]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("eps,h1,h2\n")
            for row in self.rows():
                fh.write(",".join(repr(v) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "MountingTable":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2])


DEFAULT_EPS_GRID = tuple(np.round(np.arange(0.05, 0.3501, 0.025), 4))


def mounting_table(eps_grid=DEFAULT_EPS_GRID, n_nodes: int = 100, material: Material | None = None) -> MountingTable:
    return _mounting_table(tuple(float(e) for e in eps_grid), n_nodes, material or Material())


@lru_cache(maxsize=8)
def _mounting_table(eps_grid, n_nodes, material) -> MountingTable:
    h1, h2 = [], []
    for e in eps_grid:
        a, b = critical_heights(BeamSpec(e, n_nodes, material))
        h1.append(a)
        h2.append(b)
    return MountingTable(np.array(eps_grid), np.array(h1), np.array(h2))


def dynamic_snap(
    spec: BeamSpec,
    dalpha: float,
    rate: float = 20.0,
    dt: float = 1e-4,
    alpha_max: float = 1.6,
    settle: float = 0.02,
) -> SnapDiagnostics:
    """Rotate the clamps dynamically (right clamp lagging by ``dalpha``).

    Runs until the midpoint has crossed the clamp line and a further
    ``settle`` seconds have elapsed, and records the midpoint tangent angle.
    """
    if dalpha < 0:
        raise ValueError("mismatch angle must be non-negative")
    structure = build_beam(spec)
    q0 = make_buckled_beam(spec, "up")

    def values(t):
        a = rate * t
        return clamp_values(spec, a, max(a - dalpha, 0.0))

    boundary = BoundarySpec(clamp_dofs(spec), values)
    config = StepperConfig(dt=dt, tol=spec.static_tol, gravity=0.0)
    stepper = Stepper(structure, config, boundary=boundary)
    state = SystemState(q0, np.zeros_like(q0), 0.0)
    times, theta = [0.0], [midpoint_angle(q0)]
    snapped_at = None
    t_end = (alpha_max + dalpha) / rate
    while state.t < t_end:
        state = stepper.step(state)
        times.append(state.t)
        theta.append(midpoint_angle(state.q))
        if snapped_at is None and midpoint_height(spec, state.q) < 0.0:
            snapped_at = state.t
        if snapped_at is not None and state.t >= snapped_at + settle:
            break
    if snapped_at is None:
        raise SnapNotFound("beam did not snap during the dynamic run")
    theta = np.array(theta)
    return SnapDiagnostics(
        theta_max=float(np.abs(theta).max()),
        times=np.array(times),
        theta=theta,
        q_post=state.q,
    )
