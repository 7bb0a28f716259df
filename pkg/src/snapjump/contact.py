"""Log-barrier ground contact with velocity-smoothed Coulomb friction.

The ground is the line y = 0 with upward normal. Every node interacts with it
independently; there is no node-node or edge-ground contact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORMAL = np.array([0.0, 1.0])


class PenetrationError(RuntimeError):
    """A node reached or crossed the ground plane (gap <= 0)."""


@dataclass(frozen=True)
class ContactModel:
    stiffness: float = 1.0e4  # K_c [N/m]
    barrier: float = 5.0e-4  # d~ [m]
    eps_v: float = 1.0e-4  # friction smoothing velocity [m/s]
    mu: float = 0.3

    def __post_init__(self):
        if self.stiffness <= 0 or self.barrier <= 0 or self.eps_v <= 0:
            raise ValueError("stiffness, barrier and eps_v must be positive")
        if self.mu < 0:
            raise ValueError("friction coefficient must be non-negative")


def barrier_energy(d, model: ContactModel):
    """K_c * b(d) with b(d) = -(d - d~)^2 log(d / d~) on (0, d~), zero beyond
    and +inf at or below the ground."""
    d = np.asarray(d, dtype=float)
    dt = model.barrier
    out = np.where(d <= 0.0, np.inf, 0.0)
    active = (d > 0.0) & (d < dt)
    da = d[active]
    out[active] = -model.stiffness * (da - dt) ** 2 * np.log(da / dt)
    return out


def normal_force_magnitude(d, model: ContactModel, derivative: bool = False):
    """Magnitude of the barrier force (and optionally its derivative in d)."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0.0):
        raise PenetrationError(f"gap {d.min():.3e} <= 0")
    dt = model.barrier
    kc = model.stiffness
    active = d < dt
    f = np.zeros_like(d)
    da = d[active]
    s = da - dt
    log = np.log(da / dt)
    f[active] = kc * (2.0 * s * log + s * s / da)
    if not derivative:
        return f
    df = np.zeros_like(d)
    df[active] = kc * (2.0 * log + 4.0 * s / da - (s / da) ** 2)
    return f, df


def normal_contact_force(x, model: ContactModel) -> np.ndarray:
    d = float(np.dot(x, NORMAL))
    return float(normal_force_magnitude(np.array([d]), model)[0]) * NORMAL


def tangential_velocity(v, model: ContactModel | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v - np.dot(v, NORMAL) * NORMAL


def friction_ramp(speed, eps_v: float):
    """s(y) = 2y/eps - y^2/eps^2 below eps_v, 1 above; C^1 at eps_v."""
    y = np.minimum(np.asarray(speed, dtype=float) / eps_v, 1.0)
    return 2.0 * y - y * y


def friction_force(v, normal_force, model: ContactModel) -> np.ndarray:
    vt = tangential_velocity(v)
    speed = float(np.linalg.norm(vt))
    if speed == 0.0:
        return np.zeros(2)
    fn = float(np.linalg.norm(normal_force))
    return -model.mu * fn * float(friction_ramp(speed, model.eps_v)) * vt / speed


def _signed_ramp(u, eps_v: float):
    """Odd extension of the ramp along the ground tangent and its derivative."""
    a = np.abs(u)
    inside = a < eps_v
    g = np.sign(u)
    g = np.where(inside, 2.0 * u / eps_v - u * a / eps_v**2, g)
    dg = np.where(inside, 2.0 / eps_v - 2.0 * a / eps_v**2, 0.0)
    return g, dg


def contact_force_and_jacobian(q: np.ndarray, qdot: np.ndarray, model: ContactModel):
    """Assemble nodal contact forces for a flat ground.

    Returns ``(force, dF_dq, dF_dv)`` where the Jacobians are per-node 2x2
    blocks of shape (N, 2, 2) (contact never couples different nodes).
    """
    x = q.reshape(-1, 2)
    v = qdot.reshape(-1, 2)
    n = len(x)
    force = np.zeros((n, 2))
    dq = np.zeros((n, 2, 2))
    dv = np.zeros((n, 2, 2))
    d = x[:, 1]
    if np.any(d <= 0.0):
        raise PenetrationError(f"node {int(np.argmin(d))} at gap {d.min():.3e}")
    idx = np.flatnonzero(d < model.barrier)
    if idx.size == 0:
        return force.ravel(), dq, dv
    fn, dfn = normal_force_magnitude(d[idx], model, derivative=True)
    g, dg = _signed_ramp(v[idx, 0], model.eps_v)
    force[idx, 1] = fn
    force[idx, 0] = -model.mu * fn * g
    dq[idx, 1, 1] = dfn
    dq[idx, 0, 1] = -model.mu * dfn * g
    dv[idx, 0, 0] = -model.mu * fn * dg
    return force.ravel(), dq, dv


def contact_energy(q: np.ndarray, model: ContactModel) -> float:
    """Total barrier energy (normal part only; friction is not conservative)."""
    return float(barrier_energy(q[1::2], model).sum())


def blocks_to_dense(blocks: np.ndarray) -> np.ndarray:
    n = len(blocks)
    out = np.zeros((2 * n, 2 * n))
    for i in range(n):
        out[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = blocks[i]
    return out
