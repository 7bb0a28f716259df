"""Planar discrete elastic structures: stretching and bending energies.

Nodes live in a flat DOF vector ``q = [x0, y0, x1, y1, ...]``. A structure is a
set of stretch elements (edges) and hinge elements (node triples), each
carrying its own stiffness and rest quantities, so stiff frames and soft beams
can share one mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np


class GeometryError(ValueError):
    """Raised for degenerate edges or folded-over hinges."""


def node(q: np.ndarray, i: int) -> np.ndarray:
    return q[2 * i : 2 * i + 2]


# ---------------------------------------------------------------------------
# scalar element formulas (readable reference versions)
# ---------------------------------------------------------------------------


def stretch_strain(xa, xb, rest_length: float) -> float:
    length = float(np.hypot(xb[0] - xa[0], xb[1] - xa[1]))
    if length == 0.0:
        raise GeometryError("degenerate edge: coincident nodes")
    return length / rest_length - 1.0


def stretch_energy(xa, xb, rest_length: float, EA: float) -> float:
    xi = stretch_strain(xa, xb, rest_length)
    return 0.5 * EA * xi * xi * rest_length


def turning_angle(xa, xb, xc) -> float:
    """Signed angle from edge a->b to edge b->c, positive counter-clockwise."""
    e1 = np.subtract(xb, xa, dtype=float)
    e2 = np.subtract(xc, xb, dtype=float)
    if not (np.any(e1) and np.any(e2)):
        raise GeometryError("degenerate edge adjacent to hinge")
    cross = e1[0] * e2[1] - e1[1] * e2[0]
    dot = e1[0] * e2[0] + e1[1] * e2[1]
    if cross == 0.0 and dot < 0.0:
        raise GeometryError("hinge folded over (turning angle = pi)")
    return float(np.arctan2(cross, dot))


def curvature(phi: float, voronoi_length: float) -> float:
    if not abs(phi) < np.pi:
        raise GeometryError(f"turning angle {phi!r} outside (-pi, pi)")
    return 2.0 * np.tan(0.5 * phi) / voronoi_length


def bend_energy(xa, xb, xc, voronoi_length: float, rest_angle: float, EI: float) -> float:
    kappa = curvature(turning_angle(xa, xb, xc), voronoi_length)
    kappa0 = curvature(rest_angle, voronoi_length)
    return 0.5 * EI * (kappa - kappa0) ** 2 * voronoi_length


# ---------------------------------------------------------------------------
# structure
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteStructure:
    """Node masses plus stretch and hinge element tables.

    ``hinge_rest_angle`` holds the natural turning angle of each hinge; the
    natural curvature follows from it and the Voronoi length.
    """

    mass: np.ndarray  # (N,)
    stretch_nodes: np.ndarray  # (Ns, 2) int
    stretch_rest: np.ndarray  # (Ns,)
    stretch_EA: np.ndarray  # (Ns,)
    hinge_nodes: np.ndarray  # (Nb, 3) int
    hinge_voronoi: np.ndarray  # (Nb,)
    hinge_rest_angle: np.ndarray  # (Nb,)
    hinge_EI: np.ndarray  # (Nb,)
    tags: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = len(self.mass)
        for name in ("stretch_nodes", "hinge_nodes"):
            idx = getattr(self, name)
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise ValueError(f"{name} index out of range [0, {n})")
        if np.any(self.mass <= 0):
            raise ValueError("lumped masses must be positive")
        if np.any(self.stretch_rest <= 0) or np.any(self.stretch_EA <= 0):
            raise ValueError("stretch elements need positive rest length and EA")
        if np.any(self.hinge_voronoi <= 0) or np.any(self.hinge_EI <= 0):
            raise ValueError("hinge elements need positive Voronoi length and EI")
        if np.any(np.abs(self.hinge_rest_angle) >= np.pi):
            raise ValueError("natural turning angles must lie in (-pi, pi)")

    @property
    def n_nodes(self) -> int:
        return len(self.mass)

    @property
    def n_dof(self) -> int:
        return 2 * len(self.mass)

    @cached_property
    def mass_dof(self) -> np.ndarray:
        return np.repeat(self.mass, 2)

    @cached_property
    def stretch_dofs(self) -> np.ndarray:
        return _dofs(self.stretch_nodes)

    @cached_property
    def hinge_dofs(self) -> np.ndarray:
        return _dofs(self.hinge_nodes)

    @property
    def rest_curvature(self) -> np.ndarray:
        return 2.0 * np.tan(0.5 * self.hinge_rest_angle) / self.hinge_voronoi

    def with_rest_angles(self, angles: np.ndarray) -> "DiscreteStructure":
        new = replace(self, hinge_rest_angle=np.asarray(angles, dtype=float))
        # element topology is unchanged, keep the cached index tables
        for key in ("mass_dof", "stretch_dofs", "hinge_dofs"):
            if key in self.__dict__:
                new.__dict__[key] = self.__dict__[key]
        return new

    def with_mass(self, mass: np.ndarray) -> "DiscreteStructure":
        return replace(self, mass=np.asarray(mass, dtype=float))


def _dofs(nodes: np.ndarray) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=np.int64)
    out = np.empty((nodes.shape[0], 2 * nodes.shape[1]), dtype=np.int64)
    out[:, 0::2] = 2 * nodes
    out[:, 1::2] = 2 * nodes + 1
    return out


class StructureBuilder:
    """Incremental assembly of a :class:`DiscreteStructure`.

    Rest lengths, Voronoi lengths and natural angles default to the values of
    the positions supplied with :meth:`add_node`.
    """

    def __init__(self):
        self.positions: list[tuple[float, float]] = []
        self.extra_mass: list[float] = []
        self.edges: list[tuple[int, int, float, float]] = []
        self.hinges: list[tuple[int, int, int, float, float, float]] = []
        self.tags: dict[str, object] = {}

    def add_node(self, x: float, y: float, mass: float = 0.0) -> int:
        """``mass`` is a point mass on top of what the edges lump here."""
        self.positions.append((float(x), float(y)))
        self.extra_mass.append(float(mass))
        return len(self.positions) - 1

    def add_edge(self, a: int, b: int, EA: float, line_density: float, rest: float | None = None) -> int:
        """``line_density`` is mass per unit length lumped onto the end nodes."""
        if rest is None:
            pa, pb = np.array(self.positions[a]), np.array(self.positions[b])
            rest = float(np.linalg.norm(pb - pa))
        self.edges.append((a, b, float(rest), float(EA)))
        half = 0.5 * rest * line_density
        self.extra_mass[a] += half
        self.extra_mass[b] += half
        return len(self.edges) - 1

    def add_hinge(
        self,
        a: int,
        b: int,
        c: int,
        EI: float,
        rest_angle: float | None = None,
        voronoi: float | None = None,
    ) -> int:
        pa, pb, pc = (np.array(self.positions[i]) for i in (a, b, c))
        if voronoi is None:
            voronoi = 0.5 * (np.linalg.norm(pb - pa) + np.linalg.norm(pc - pb))
        if rest_angle is None:
            rest_angle = turning_angle(pa, pb, pc)
        self.hinges.append((a, b, c, float(voronoi), float(rest_angle), float(EI)))
        return len(self.hinges) - 1

    def q(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float).ravel()

    def build(self) -> DiscreteStructure:
        edges = self.edges
        hinges = self.hinges
        return DiscreteStructure(
            mass=np.asarray(self.extra_mass, dtype=float),
            stretch_nodes=np.array([e[:2] for e in edges], dtype=np.int64).reshape(-1, 2),
            stretch_rest=np.array([e[2] for e in edges], dtype=float),
            stretch_EA=np.array([e[3] for e in edges], dtype=float),
            hinge_nodes=np.array([h[:3] for h in hinges], dtype=np.int64).reshape(-1, 3),
            hinge_voronoi=np.array([h[3] for h in hinges], dtype=float),
            hinge_rest_angle=np.array([h[4] for h in hinges], dtype=float),
            hinge_EI=np.array([h[5] for h in hinges], dtype=float),
            tags=dict(self.tags),
        )


# ---------------------------------------------------------------------------
# vectorised element kernels
# ---------------------------------------------------------------------------


def stretch_terms(structure: DiscreteStructure, q: np.ndarray, hessian: bool = True):
    """Per-element stretch energy, gradient (Ns, 4) and Hessian (Ns, 4, 4)."""
    idx = structure.stretch_nodes
    x = q.reshape(-1, 2)
    e = x[idx[:, 1]] - x[idx[:, 0]]
    length = np.sqrt(np.einsum("ij,ij->i", e, e))
    if np.any(length == 0.0):
        raise GeometryError("degenerate edge: coincident nodes")
    rest = structure.stretch_rest
    EA = structure.stretch_EA
    xi = length / rest - 1.0
    energy = 0.5 * EA * xi * xi * rest
    t = e / length[:, None]
    gb = (EA * xi)[:, None] * t
    grad = np.concatenate([-gb, gb], axis=1)
    if not hessian:
        return energy, grad, None
    tt = t[:, :, None] * t[:, None, :]
    eye = np.eye(2)[None]
    hbb = (EA / rest)[:, None, None] * tt + (EA * xi / length)[:, None, None] * (eye - tt)
    hess = np.empty((len(rest), 4, 4))
    hess[:, :2, :2] = hbb
    hess[:, 2:, 2:] = hbb
    hess[:, :2, 2:] = -hbb
    hess[:, 2:, :2] = -hbb
    return energy, grad, hess


def _angle_hessian(e: np.ndarray, r2: np.ndarray) -> np.ndarray:
    """Hessian of atan2(ey, ex) with respect to e, shape (n, 2, 2)."""
    ex, ey = e[:, 0], e[:, 1]
    r4 = r2 * r2
    h = np.empty((len(e), 2, 2))
    h[:, 0, 0] = 2.0 * ex * ey / r4
    h[:, 1, 1] = -h[:, 0, 0]
    h[:, 0, 1] = h[:, 1, 0] = (ey * ey - ex * ex) / r4
    return h


def turning_angles(structure: DiscreteStructure, q: np.ndarray) -> np.ndarray:
    idx = structure.hinge_nodes
    x = q.reshape(-1, 2)
    e1 = x[idx[:, 1]] - x[idx[:, 0]]
    e2 = x[idx[:, 2]] - x[idx[:, 1]]
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    dot = np.einsum("ij,ij->i", e1, e2)
    return np.arctan2(cross, dot)


def bend_terms(structure: DiscreteStructure, q: np.ndarray, hessian: bool = True):
    """Per-hinge bending energy, gradient (Nb, 6) and Hessian (Nb, 6, 6)."""
    idx = structure.hinge_nodes
    x = q.reshape(-1, 2)
    e1 = x[idx[:, 1]] - x[idx[:, 0]]
    e2 = x[idx[:, 2]] - x[idx[:, 1]]
    r1 = np.einsum("ij,ij->i", e1, e1)
    r2 = np.einsum("ij,ij->i", e2, e2)
    if np.any(r1 == 0.0) or np.any(r2 == 0.0):
        raise GeometryError("degenerate edge adjacent to hinge")
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    dot = np.einsum("ij,ij->i", e1, e2)
    if np.any((cross == 0.0) & (dot < 0.0)):
        raise GeometryError("hinge folded over (turning angle = pi)")
    phi = np.arctan2(cross, dot)

    dl = structure.hinge_voronoi
    EI = structure.hinge_EI
    tan_half = np.tan(0.5 * phi)
    kappa = 2.0 * tan_half / dl
    sec2 = 1.0 + tan_half**2
    dkappa = sec2 / dl  # d kappa / d phi
    diff = kappa - structure.rest_curvature
    energy = 0.5 * EI * diff * diff * dl

    # d phi / d e1 = -perp(e1)/|e1|^2, d phi / d e2 = perp(e2)/|e2|^2, perp(v) = (-vy, vx)
    g1 = np.stack([e1[:, 1], -e1[:, 0]], axis=1) / r1[:, None]
    g2 = np.stack([-e2[:, 1], e2[:, 0]], axis=1) / r2[:, None]
    dphi = np.concatenate([-g1, g1 - g2, g2], axis=1)
    coef = EI * dl * diff * dkappa
    grad = coef[:, None] * dphi
    if not hessian:
        return energy, grad, None

    ddkappa = tan_half * sec2 / dl  # d2 kappa / d phi2
    outer = dphi[:, :, None] * dphi[:, None, :]
    hess = (EI * dl * (dkappa * dkappa + diff * ddkappa))[:, None, None] * outer

    # phi = theta(e2) - theta(e1); e1 = b - a, e2 = c - b
    h1 = _angle_hessian(e1, r1)
    h2 = _angle_hessian(e2, r2)
    hphi = np.zeros((len(dl), 6, 6))
    hphi[:, 0:2, 0:2] -= h1
    hphi[:, 0:2, 2:4] += h1
    hphi[:, 2:4, 0:2] += h1
    hphi[:, 2:4, 2:4] -= h1
    hphi[:, 2:4, 2:4] += h2
    hphi[:, 2:4, 4:6] -= h2
    hphi[:, 4:6, 2:4] -= h2
    hphi[:, 4:6, 4:6] += h2
    hess += coef[:, None, None] * hphi
    return energy, grad, hess


def total_energy(structure: DiscreteStructure, q: np.ndarray) -> float:
    es, _, _ = stretch_terms(structure, q, hessian=False)
    eb, _, _ = bend_terms(structure, q, hessian=False)
    return float(es.sum() + eb.sum())


def energy_gradient(structure: DiscreteStructure, q: np.ndarray) -> np.ndarray:
    _, gs, _ = stretch_terms(structure, q, hessian=False)
    _, gb, _ = bend_terms(structure, q, hessian=False)
    out = np.bincount(structure.stretch_dofs.ravel(), gs.ravel(), minlength=structure.n_dof).astype(float)
    out += np.bincount(structure.hinge_dofs.ravel(), gb.ravel(), minlength=structure.n_dof)
    return out


def elastic_force(structure: DiscreteStructure, q: np.ndarray) -> np.ndarray:
    return -energy_gradient(structure, q)


def elastic_hessian(structure: DiscreteStructure, q: np.ndarray) -> np.ndarray:
    """Dense 2N x 2N Hessian of the elastic energy."""
    n = structure.n_dof
    _, _, hs = stretch_terms(structure, q)
    _, _, hb = bend_terms(structure, q)
    H = np.zeros(n * n)
    for dofs, local in ((structure.stretch_dofs, hs), (structure.hinge_dofs, hb)):
        flat = dofs[:, :, None] * n + dofs[:, None, :]
        H += np.bincount(flat.ravel(), local.ravel(), minlength=n * n)
    H = H.reshape(n, n)
    # element blocks are symmetric up to rounding; make the assembly exactly so
    return 0.5 * (H + H.T)
