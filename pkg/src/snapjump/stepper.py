"""Implicit Euler elastodynamics solved with Newton-Raphson.

One step solves, on the free DOFs,

    M/dt^2 (q - q_k - dt v_k) - F_ela(q) - F_gra - F_con(q, (q - q_k)/dt) = 0

and sets v_{k+1} = (q - q_k)/dt. Jacobians are assembled into LAPACK band
storage after a reverse Cuthill-McKee renumbering of the nodes, so each Newton
iteration costs one banded LU solve.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
import scipy.linalg as sla
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import reverse_cuthill_mckee

from . import contact as ct
from .elastic import (
    DiscreteStructure,
    GeometryError,
    bend_terms,
    elastic_hessian,
    energy_gradient,
    stretch_terms,
    total_energy,
)

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """Newton failed even after the allowed number of step halvings."""


@dataclass
class SystemState:
    q: np.ndarray
    qdot: np.ndarray
    t: float = 0.0

    def copy(self) -> "SystemState":
        return SystemState(self.q.copy(), self.qdot.copy(), self.t)


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    tol: float = 1e-6  # residual 2-norm on free DOFs [N]
    max_iter: int = 50
    max_halvings: int = 6
    max_backtracks: int = 8
    gravity: float = -10.0
    # relative increment at which the residual is taken to sit on its rounding
    # floor: stiff frame edges far from the origin cannot resolve tol exactly
    xtol: float = 1e-13

    def __post_init__(self):
        if self.dt <= 0 or self.tol <= 0:
            raise ValueError("dt and tol must be positive")


@dataclass
class BoundarySpec:
    """Prescribed DOFs; ``values(t)`` returns one value per entry of ``dofs``."""

    dofs: np.ndarray
    values: Callable[[float], np.ndarray]

    def __post_init__(self):
        self.dofs = np.asarray(self.dofs, dtype=np.int64)
        if len(np.unique(self.dofs)) != len(self.dofs):
            raise ValueError("prescribed DOF indices must be unique")

    @classmethod
    def none(cls) -> "BoundarySpec":
        return cls(np.zeros(0, dtype=np.int64), lambda t: np.zeros(0))

    @classmethod
    def fixed(cls, dofs, values) -> "BoundarySpec":
        vals = np.asarray(values, dtype=float).copy()
        return cls(dofs, lambda t: vals)

    def apply(self, q: np.ndarray, t: float) -> None:
        if len(self.dofs):
            q[self.dofs] = self.values(t)

    def free_mask(self, n_dof: int) -> np.ndarray:
        mask = np.ones(n_dof, dtype=bool)
        mask[self.dofs] = False
        return mask


# ---------------------------------------------------------------------------
# banded assembly
# ---------------------------------------------------------------------------


class BandedLayout:
    """Scatter tables from element blocks into LAPACK band storage."""

    def __init__(self, structure: DiscreteStructure, fixed: np.ndarray):
        n_nodes = structure.n_nodes
        pairs = [structure.stretch_nodes[:, [0, 1]]]
        if len(structure.hinge_nodes):
            h = structure.hinge_nodes
            pairs += [h[:, [0, 1]], h[:, [1, 2]], h[:, [0, 2]]]
        pairs = np.concatenate(pairs)
        graph = coo_matrix(
            (np.ones(2 * len(pairs)), (np.r_[pairs[:, 0], pairs[:, 1]], np.r_[pairs[:, 1], pairs[:, 0]])),
            shape=(n_nodes, n_nodes),
        ).tocsr()
        node_order = reverse_cuthill_mckee(graph, symmetric_mode=True)
        order = np.empty(2 * n_nodes, dtype=np.int64)
        order[0::2] = 2 * node_order
        order[1::2] = 2 * node_order + 1
        pos = np.empty_like(order)
        pos[order] = np.arange(len(order))
        self.n = n = len(order)
        self.order = order
        self.pos = pos

        fixed_mask = np.zeros(n, dtype=bool)
        fixed_mask[fixed] = True
        self.fixed = np.asarray(fixed, dtype=np.int64)
        self.free = ~fixed_mask

        band = 1
        for dofs in (structure.stretch_dofs, structure.hinge_dofs):
            if len(dofs):
                p = pos[dofs]
                band = max(band, int(np.abs(p[:, :, None] - p[:, None, :]).max()))
        self.band = band
        self.rows = 2 * band + 1

        def flat(dofs):
            p = pos[dofs]
            r = p[:, :, None]
            c = p[:, None, :]
            idx = (band + r - c) * n + c
            keep = ~(fixed_mask[dofs][:, :, None] | fixed_mask[dofs][:, None, :])
            return idx.ravel(), keep.ravel()

        self.stretch_idx, self.stretch_keep = flat(structure.stretch_dofs)
        self.hinge_idx, self.hinge_keep = flat(structure.hinge_dofs)
        node_dofs = np.arange(n).reshape(-1, 2)
        self.node_idx, self.node_keep = flat(node_dofs)
        self.diag_idx = band * n + pos
        self.fixed_diag_idx = band * n + pos[self.fixed]

    def assemble(self, hs, hb, node_blocks, diag) -> np.ndarray:
        size = self.rows * self.n
        ab = np.bincount(self.stretch_idx, np.where(self.stretch_keep, hs.ravel(), 0.0), minlength=size).astype(float)
        if hb is not None and len(hb):
            ab += np.bincount(self.hinge_idx, np.where(self.hinge_keep, hb.ravel(), 0.0), minlength=size)
        if node_blocks is not None:
            ab += np.bincount(self.node_idx, np.where(self.node_keep, node_blocks.ravel(), 0.0), minlength=size)
        ab[self.diag_idx] += np.where(self.free, diag, 0.0)
        ab[self.fixed_diag_idx] = 1.0
        return ab.reshape(self.rows, self.n)

    def solve(self, ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        xp = sla.solve_banded((self.band, self.band), ab, rhs[self.order], check_finite=False)
        out = np.empty_like(xp)
        out[self.order] = xp
        return out


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------


def gravity_force(structure: DiscreteStructure, g: float) -> np.ndarray:
    f = np.zeros(structure.n_dof)
    f[1::2] = structure.mass * g
    return f


def residual(
    q_new: np.ndarray,
    state: SystemState,
    structure: DiscreteStructure,
    contact: ct.ContactModel | None,
    config: StepperConfig,
    boundary: BoundarySpec | None = None,
    dt: float | None = None,
) -> np.ndarray:
    """Implicit Euler residual with prescribed entries zeroed."""
    dt = config.dt if dt is None else dt
    r = structure.mass_dof / dt**2 * (q_new - state.q - dt * state.qdot)
    r += energy_gradient(structure, q_new)
    r -= gravity_force(structure, config.gravity)
    if contact is not None:
        fc, _, _ = ct.contact_force_and_jacobian(q_new, (q_new - state.q) / dt, contact)
        r -= fc
    if boundary is not None and len(boundary.dofs):
        r[boundary.dofs] = 0.0
    return r


class Stepper:
    """Owns the band layout for one structure topology and boundary set.

    ``drive(t)``, if given, returns the hinge natural angles at time ``t``;
    this is how actuated hinges rotate.
    """

    def __init__(
        self,
        structure: DiscreteStructure,
        config: StepperConfig,
        contact: ct.ContactModel | None = None,
        boundary: BoundarySpec | None = None,
        drive: Callable[[float], np.ndarray] | None = None,
    ):
        self.structure = structure
        self.config = config
        self.contact = contact
        self.boundary = boundary or BoundarySpec.none()
        self.drive = drive
        self.layout = BandedLayout(structure, self.boundary.dofs)
        self.f_gravity = gravity_force(structure, config.gravity)
        self.stats = {"steps": 0, "newton": 0, "halvings": 0}

    def structure_at(self, t: float) -> DiscreteStructure:
        if self.drive is None:
            return self.structure
        return self.structure.with_rest_angles(self.drive(t))

    def _residual(self, structure, q, q_k, v_k, dt, m_dt2, hessian=True):
        _, gs, hs = stretch_terms(structure, q, hessian)
        _, gb, hb = bend_terms(structure, q, hessian)
        n = structure.n_dof
        r = np.bincount(structure.stretch_dofs.ravel(), gs.ravel(), minlength=n).astype(float)
        r += np.bincount(structure.hinge_dofs.ravel(), gb.ravel(), minlength=n)
        r += m_dt2 * (q - q_k - dt * v_k) - self.f_gravity
        blocks = None
        if self.contact is not None:
            fc, jq, jv = ct.contact_force_and_jacobian(q, (q - q_k) / dt, self.contact)
            r -= fc
            blocks = -(jq + jv / dt)
        r[~self.layout.free] = 0.0
        return r, hs, hb, blocks

    def _newton(self, state: SystemState, dt: float) -> SystemState:
        cfg = self.config
        t_new = state.t + dt
        structure = self.structure_at(t_new)
        lay = self.layout
        m_dt2 = structure.mass_dof / dt**2
        q_k, v_k = state.q, state.qdot

        q = q_k + dt * v_k
        if self.contact is not None:
            q = q_k + _ground_filter(q_k, q - q_k) * (q - q_k)
        self.boundary.apply(q, t_new)

        r, hs, hb, blocks = self._residual(structure, q, q_k, v_k, dt, m_dt2)
        res = float(np.linalg.norm(r))
        for it in range(cfg.max_iter):
            if not np.isfinite(res):
                raise ConvergenceError("non-finite residual")
            if res <= cfg.tol:
                self.stats["newton"] += it
                return SystemState(q, (q - q_k) / dt, t_new)
            ab = lay.assemble(hs, hb, blocks, m_dt2)
            dq = lay.solve(ab, r)
            if not np.all(np.isfinite(dq)):
                raise ConvergenceError("singular Newton system")
            if self.contact is not None:
                dq *= _ground_filter(q, -dq)
            # backtrack on the residual norm; the friction ramp makes the
            # full step cycle between stick and slip otherwise
            trial = self._residual(structure, q - dq, q_k, v_k, dt, m_dt2)
            res_try = float(np.linalg.norm(trial[0]))
            step = 1.0
            for _ in range(cfg.max_backtracks):
                if res_try < res:
                    break
                step *= 0.5
                trial = self._residual(structure, q - step * dq, q_k, v_k, dt, m_dt2, False)
                res_try = float(np.linalg.norm(trial[0]))
            q = q - step * dq
            if step < 1.0:
                trial = self._residual(structure, q, q_k, v_k, dt, m_dt2)
            r, hs, hb, blocks = trial
            res = res_try
            stalled = step * np.abs(dq).max() <= cfg.xtol * np.abs(q).max()
            if stalled and res <= 100.0 * cfg.tol:
                self.stats["newton"] += it + 1
                return SystemState(q, (q - q_k) / dt, t_new)
        raise ConvergenceError(f"Newton did not converge in {cfg.max_iter} iterations (|r| = {res:.3e})")

    def _advance(self, state: SystemState, dt: float, depth: int) -> SystemState:
        try:
            return self._newton(state, dt)
        except (ConvergenceError, ct.PenetrationError, GeometryError) as err:
            if depth >= self.config.max_halvings:
                raise ConvergenceError(f"step at t={state.t:.6g} failed after {depth} halvings: {err}") from err
            self.stats["halvings"] += 1
            half = self._advance(state, 0.5 * dt, depth + 1)
            return self._advance(half, 0.5 * dt, depth + 1)

    def step(self, state: SystemState) -> SystemState:
        self.stats["steps"] += 1
        return self._advance(state, self.config.dt, 0)

    def simulate(
        self,
        initial: SystemState,
        duration: float,
        observer: Callable[[SystemState], bool] | None = None,
        keep: bool = True,
    ) -> list[SystemState]:
        """Step until ``duration`` has elapsed or ``observer`` returns True."""
        states = [initial]
        state = initial
        n_steps = int(round(duration / self.config.dt))
        for _ in range(n_steps):
            state = self.step(state)
            if keep:
                states.append(state)
            else:
                states[-1:] = [state]
            if observer is not None and observer(state):
                break
        return states


def _ground_filter(q: np.ndarray, dq: np.ndarray, keep: float = 0.1) -> float:
    """Largest fraction of ``dq`` (<= 1) that keeps every gap above keep * gap."""
    y = q[1::2]
    dy = dq[1::2]
    down = dy < 0.0
    if not np.any(down):
        return 1.0
    limit = (1.0 - keep) * y[down] / -dy[down]
    return float(min(1.0, limit.min()))


def step(state, structure, contact, boundary, config, drive=None) -> SystemState:
    return Stepper(structure, config, contact, boundary, drive).step(state)


def simulate(initial, structure, contact, boundary, config, duration, observer=None, drive=None):
    return Stepper(structure, config, contact, boundary, drive).simulate(initial, duration, observer)


# ---------------------------------------------------------------------------
# statics
# ---------------------------------------------------------------------------


def potential_energy(structure, q, gravity: float = 0.0, contact=None) -> float:
    e = total_energy(structure, q) - gravity * float(np.dot(structure.mass, q[1::2]))
    if contact is not None:
        if np.any(q[1::2] <= 0.0):
            return np.inf
        e += ct.contact_energy(q, contact)
    return e


def static_solve(
    q_guess: np.ndarray,
    structure: DiscreteStructure,
    boundary: BoundarySpec | None = None,
    gravity: float = 0.0,
    contact: ct.ContactModel | None = None,
    tol: float = 1e-8,
    max_iter: int = 500,
) -> np.ndarray:
    """Find a local minimum of the potential energy from ``q_guess``.

    Newton steps on the free DOFs with a Levenberg shift whenever the Hessian
    is not positive definite and an Armijo backtracking line search, so past a
    fold the iteration slides to whichever equilibrium lies downhill.
    Prescribed DOFs keep their values from ``q_guess``.
    """
    q = np.array(q_guess, dtype=float)
    free = np.ones(len(q), dtype=bool) if boundary is None else boundary.free_mask(len(q))
    n_free = int(free.sum())

    def grad_hess(q):
        g = energy_gradient(structure, q)
        g[1::2] -= gravity * structure.mass
        H = elastic_hessian(structure, q)
        if contact is not None:
            _, jq, _ = ct.contact_force_and_jacobian(q, np.zeros_like(q), contact)
            fn = ct.normal_force_magnitude(q[1::2], contact)
            g[1::2] -= fn
            H[np.arange(1, len(q), 2), np.arange(1, len(q), 2)] -= jq[:, 1, 1]
        return g[free], H[np.ix_(free, free)]

    energy = potential_energy(structure, q, gravity, contact)
    g, H = grad_hess(q)
    lam = 0.0
    scale = float(np.mean(np.abs(np.diag(H)))) or 1.0
    for _ in range(max_iter):
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return q
        while True:
            try:
                cf = sla.cho_factor(H + lam * scale * np.eye(n_free), check_finite=False)
                break
            except np.linalg.LinAlgError:
                lam = 1e-10 if lam == 0.0 else lam * 10.0
                if lam > 1e6:
                    raise ConvergenceError("could not regularise static Hessian")
        p = -sla.cho_solve(cf, g, check_finite=False)
        slope = float(g @ p)
        alpha = 1.0
        accepted = False
        while alpha > 1e-10:
            trial = q.copy()
            trial[free] += alpha * p
            try:
                e_trial = potential_energy(structure, trial, gravity, contact)
            except GeometryError:
                e_trial = np.inf
            if e_trial <= energy + 1e-4 * alpha * slope:
                accepted = True
            elif np.isfinite(e_trial) and lam == 0.0 and alpha == 1.0:
                # energy differences are at rounding level near the minimum
                g_trial, _ = grad_hess(trial)
                accepted = np.linalg.norm(g_trial) < gnorm
            if accepted:
                break
            alpha *= 0.5
        if not accepted:
            lam = 1e-10 if lam == 0.0 else lam * 10.0
            continue
        q = trial
        energy = e_trial if np.isfinite(e_trial) else potential_energy(structure, q, gravity, contact)
        g, H = grad_hess(q)
        lam = lam / 100.0 if lam > 1e-10 else 0.0
    raise ConvergenceError(f"static solve did not converge (|g| = {np.linalg.norm(g):.3e})")


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def write_trajectory_csv(path, states: Iterable[SystemState]) -> None:
    states = list(states)
    n_nodes = len(states[0].q) // 2
    header = ["t"] + [f"{c}{i}" for i in range(n_nodes) for c in ("x", "y")]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for s in states:
            w.writerow([repr(float(s.t))] + [repr(float(v)) for v in s.q])
