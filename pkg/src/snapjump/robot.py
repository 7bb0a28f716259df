"""Snap-actuated jumping robot: assembly, jump dynamics and forward model.

The robot is a stiff U-shaped frame (two legs of height l2 joined by a bottom
bar of length l1) with the pre-compressed beam clamped between the legs at
height h. The clamps are hinges at the two junctions whose natural angle is
rotated in time; since they belong to the structure, the clamps travel with
the frame once the robot is airborne.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .beam import BeamSpec, MountingTable, make_buckled_beam, mounting_table
from .config import PARAM_NAMES, PARAM_RANGES, Material, SimSettings
from .contact import ContactModel
from .elastic import DiscreteStructure, StructureBuilder
from .stepper import BoundarySpec, Stepper, StepperConfig, SystemState, static_solve

log = logging.getLogger(__name__)


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class RobotDesign:
    eps: float
    h: float  # beam mounting height above the bottom bar [m]
    mass: float  # total mass [kg]
    mu: float
    material: Material = field(default_factory=Material)
    n_beam: int = 120
    n_frame: int = 70
    frame_factor: float = 1000.0

    @property
    def l1(self) -> float:
        return self.material.L * (1.0 - self.eps)

    @property
    def mbar(self) -> float:
        return self.material.mbar_from_mass(self.mass)


@dataclass(frozen=True)
class ActuationProtocol:
    dalpha: float = 0.0
    rate: float = 20.0
    hold_margin: float = 5.0e-3

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("actuation rate must be positive")
        if self.dalpha < 0:
            raise ValueError("mismatch angle must be non-negative")


@dataclass
class Robot:
    design: RobotDesign
    structure: DiscreteStructure
    q0: np.ndarray
    beam_nodes: np.ndarray
    frame_nodes: np.ndarray
    junction_hinges: tuple[int, int]
    bar_mid_node: int

    def com(self, q: np.ndarray) -> np.ndarray:
        m = self.structure.mass
        return (m[:, None] * q.reshape(-1, 2)).sum(axis=0) / m.sum()

    def beam_mid_height(self, q: np.ndarray) -> float:
        """Beam midpoint height relative to the line through the junctions."""
        y = q[1::2]
        b = self.beam_nodes
        n = len(b)
        mid = 0.5 * (y[b[(n - 1) // 2]] + y[b[n // 2]])
        return float(mid - 0.5 * (y[b[0]] + y[b[-1]]))


@dataclass
class JumpResult:
    jumped: bool
    liftoff_t: float | None
    x_c: float
    y_c: float
    xbar: float
    ybar: float
    com0: np.ndarray
    times: np.ndarray
    com: np.ndarray
    snap_t: float | None = None
    steps: int = 0

    def to_dict(self) -> dict:
        return {
            "x_c": float(self.x_c),
            "y_c": float(self.y_c),
            "xbar": float(self.xbar),
            "ybar": float(self.ybar),
            "liftoff_t": None if self.liftoff_t is None else float(self.liftoff_t),
            "jumped": bool(self.jumped),
        }


def _split_counts(design: RobotDesign) -> tuple[int, int, int]:
    """Edges per lower leg, upper leg and bar (left/right mirrored)."""
    m = design.material
    total_edges = design.n_frame + 1
    perimeter = 2 * m.l2 + design.l1
    s = perimeter / total_edges
    k_low = max(1, int(round(design.h / s)))
    k_up = max(1, int(round((m.l2 - design.h) / s)))
    k_bar = total_edges - 2 * (k_low + k_up)
    if k_bar < 1:
        raise AssemblyError("frame node budget too small")
    return k_low, k_up, k_bar


def assemble_robot(design: RobotDesign, y0: float | None = None, beam_q: np.ndarray | None = None) -> Robot:
    m = design.material
    if not 0.0 < design.h < m.l2:
        raise AssemblyError(f"mounting height {design.h!r} outside (0, {m.l2})")
    if design.n_beam < 5:
        raise AssemblyError("beam needs at least 5 nodes")
    beam_mass = m.line_density * m.L
    if design.mass <= beam_mass:
        raise AssemblyError("total mass must exceed the beam mass")
    contact_gap = 0.95 * 5.0e-4 if y0 is None else y0
    l1, l2, h = design.l1, m.l2, design.h
    k_low, k_up, k_bar = _split_counts(design)
    frame_length = 2 * l2 + l1
    frame_density = (design.mass - beam_mass) / frame_length
    EA_f = design.frame_factor * m.EA
    EI_f = design.frame_factor * m.EI

    if beam_q is None:
        beam_q = make_buckled_beam(BeamSpec(design.eps, design.n_beam, m), "up")
    beam_xy = beam_q.reshape(-1, 2)

    b = StructureBuilder()
    beam = [b.add_node(x, y + contact_gap + h) for x, y in beam_xy]
    jl, jr = beam[0], beam[-1]

    def chain(start_xy, end_xy, k):
        pts = np.linspace(start_xy, end_xy, k + 1)[1:-1]
        return [b.add_node(*p) for p in pts]

    corner_l = b.add_node(0.0, contact_gap)
    corner_r = b.add_node(l1, contact_gap)
    top_l = b.add_node(0.0, contact_gap + l2)
    top_r = b.add_node(l1, contact_gap + l2)
    bar = [corner_l] + chain((0.0, contact_gap), (l1, contact_gap), k_bar) + [corner_r]
    left_leg = (
        [corner_l]
        + chain((0.0, contact_gap), (0.0, contact_gap + h), k_low)
        + [jl]
        + chain((0.0, contact_gap + h), (0.0, contact_gap + l2), k_up)
        + [top_l]
    )
    right_leg = (
        [corner_r]
        + chain((l1, contact_gap), (l1, contact_gap + h), k_low)
        + [jr]
        + chain((l1, contact_gap + h), (l1, contact_gap + l2), k_up)
        + [top_r]
    )
    # the beam's own geometry sets its rest state: straight, edge length L/(n-1)
    ds = m.L / (design.n_beam - 1)
    for i in range(len(beam) - 1):
        b.add_edge(beam[i], beam[i + 1], m.EA, m.line_density, rest=ds)
    for i in range(1, len(beam) - 1):
        b.add_hinge(beam[i - 1], beam[i], beam[i + 1], m.EI, rest_angle=0.0, voronoi=ds)

    for path in (bar, left_leg, right_leg):
        for i in range(len(path) - 1):
            b.add_edge(path[i], path[i + 1], EA_f, frame_density)
        for i in range(1, len(path) - 1):
            b.add_hinge(path[i - 1], path[i], path[i + 1], EI_f)
    b.add_hinge(left_leg[1], corner_l, bar[1], EI_f)
    b.add_hinge(bar[-2], corner_r, right_leg[1], EI_f)

    above_l = left_leg[left_leg.index(jl) + 1]
    above_r = right_leg[right_leg.index(jr) + 1]
    up_len = (l2 - h) / k_up
    vor = 0.5 * (up_len + ds)
    hl = b.add_hinge(above_l, jl, beam[1], EI_f, rest_angle=0.5 * np.pi, voronoi=vor)
    hr = b.add_hinge(beam[-2], jr, above_r, EI_f, rest_angle=0.5 * np.pi, voronoi=vor)

    structure = b.build()
    frame_nodes = np.array(sorted(set(bar + left_leg + right_leg) - {jl, jr}))
    return Robot(
        design=design,
        structure=structure,
        q0=b.q(),
        beam_nodes=np.array(beam),
        frame_nodes=frame_nodes,
        junction_hinges=(hl, hr),
        bar_mid_node=bar[len(bar) // 2],
    )


class Actuator:
    """Natural angles of the two clamp hinges as functions of time.

    The left clamp turns at ``rate``; the right clamp follows ``dalpha``
    behind. Once ``hold_time`` is set both angles freeze from that instant.
    """

    def __init__(self, robot: Robot, protocol: ActuationProtocol):
        self.base = robot.structure.hinge_rest_angle.copy()
        self.left, self.right = robot.junction_hinges
        self.protocol = protocol
        self.hold_time: float | None = None

    def clamp_angles(self, t: float) -> tuple[float, float]:
        p = self.protocol
        if self.hold_time is not None:
            t = min(t, self.hold_time)
        a = p.rate * t
        return a, max(a - p.dalpha, 0.0)

    def __call__(self, t: float) -> np.ndarray:
        aL, aR = self.clamp_angles(t)
        out = self.base.copy()
        out[self.left] = self.base[self.left] - aL
        out[self.right] = self.base[self.right] - aR
        return out


def settle(robot: Robot, contact: ContactModel, gravity: float, tol: float) -> np.ndarray:
    """Static rest state on the ground (horizontal position pinned at one bar node)."""
    pin = BoundarySpec.fixed([2 * robot.bar_mid_node], [robot.q0[2 * robot.bar_mid_node]])
    return static_solve(robot.q0, robot.structure, pin, gravity=gravity, contact=contact, tol=tol)


def simulate_jump(
    design: RobotDesign,
    protocol: ActuationProtocol,
    contact: ContactModel | None = None,
    settings: SimSettings | None = None,
    record: bool = False,
) -> JumpResult:
    """Actuate the robot from rest and follow it to the apex of its jump.

    Once every node has left the barrier band with the centre of mass rising
    and stays clear for ``settings.clearance`` seconds, the remaining ascent of
    the centre of mass is ballistic and is evaluated in closed form (set
    ``settings.full_flight`` to integrate it instead).
    """
    settings = settings or SimSettings()
    m = design.material
    if contact is None:
        contact = ContactModel(settings.stiffness, settings.barrier, settings.eps_v, design.mu)
    robot = assemble_robot(design)
    g = m.g
    q_rest = settle(robot, contact, g, settings.tol)
    actuator = Actuator(robot, protocol)
    config = StepperConfig(dt=settings.dt, tol=settings.tol, max_iter=settings.max_newton, gravity=g)
    stepper = Stepper(robot.structure, config, contact, drive=actuator)
    state = SystemState(q_rest, np.zeros_like(q_rest), 0.0)
    com0 = robot.com(q_rest)
    band = contact.barrier
    mass = robot.structure.mass

    times, coms = [0.0], [com0]
    snap_t = liftoff_t = None
    airborne_since = None
    apex = None
    prev_vy = 0.0
    prev_com = com0
    n_steps = 0
    while state.t < settings.max_time:
        state = stepper.step(state)
        n_steps += 1
        com = robot.com(state.q)
        vcom = (mass[:, None] * state.qdot.reshape(-1, 2)).sum(axis=0) / mass.sum()
        if record:
            times.append(state.t)
            coms.append(com)
        if snap_t is None and robot.beam_mid_height(state.q) < 0.0:
            snap_t = state.t
            actuator.hold_time = state.t + protocol.hold_margin
        in_contact = bool(np.any(state.q[1::2] < band))
        if snap_t is not None:
            if liftoff_t is None:
                if not in_contact and vcom[1] > 0.0:
                    liftoff_t = airborne_since = state.t
            elif in_contact:
                liftoff_t = airborne_since = None
            if liftoff_t is not None:
                if vcom[1] <= 0.0:
                    # first zero crossing of the vertical COM velocity
                    w = prev_vy / (prev_vy - vcom[1]) if prev_vy > 0 else 1.0
                    apex = prev_com + w * (com - prev_com)
                    break
                if not settings.full_flight and state.t - airborne_since >= settings.clearance:
                    ga = abs(g)
                    apex = com + np.array([vcom[0] * vcom[1] / ga, 0.5 * vcom[1] ** 2 / ga])
                    break
        prev_vy, prev_com = vcom[1], com
    L = m.L
    jumped = apex is not None and apex[1] - com0[1] > contact.barrier
    if not jumped:
        apex = np.array([com0[0], com0[1]])
    x_c = float(apex[0] - com0[0])
    y_c = float(apex[1])
    log.debug("jump eps=%.3f h=%.4g dalpha=%.3f: steps=%d stats=%s", design.eps, design.h, protocol.dalpha, n_steps, stepper.stats)
    return JumpResult(
        jumped=bool(jumped),
        liftoff_t=liftoff_t if jumped else None,
        x_c=x_c,
        y_c=y_c,
        xbar=x_c / L,
        ybar=y_c / L,
        com0=com0,
        times=np.array(times),
        com=np.array(coms),
        snap_t=snap_t,
        steps=n_steps,
    )


@dataclass(frozen=True)
class NormalizedParams:
    dalpha: float
    eps: float
    mbar: float
    mu: float

    def __post_init__(self):
        for name, (lo, hi) in zip(PARAM_NAMES, PARAM_RANGES):
            v = getattr(self, name)
            if not lo - 1e-9 <= v <= hi + 1e-9:
                raise ValueError(f"{name} = {v!r} outside [{lo}, {hi}]")

    def as_array(self) -> np.ndarray:
        return np.array([self.dalpha, self.eps, self.mbar, self.mu])


@lru_cache(maxsize=1)
def default_mounting_table() -> MountingTable:
    """Mounting table for the default material (shipped, or recomputed if absent)."""
    res = resources.files("snapjump") / "data" / "mounting_table.csv"
    if res.is_file():
        with resources.as_file(res) as path:
            return MountingTable.from_csv(path)
    return mounting_table()


def forward_model(
    p: NormalizedParams,
    settings: SimSettings | None = None,
    material: Material | None = None,
    table: MountingTable | None = None,
) -> JumpResult:
    """Normalised apex of the robot built with the mounting rule h = h1(eps)."""
    material = material or Material()
    if table is None:
        table = default_mounting_table() if material == Material() else mounting_table(material=material)
    settings = settings or SimSettings()
    design = RobotDesign(
        eps=p.eps,
        h=table.mounting_height(p.eps),
        mass=material.mass_from_mbar(p.mbar),
        mu=p.mu,
        material=material,
        n_beam=settings.n_beam,
        n_frame=settings.n_frame,
        frame_factor=settings.frame_factor,
    )
    protocol = ActuationProtocol(p.dalpha, settings.rate, settings.hold_margin)
    return simulate_jump(design, protocol, settings=settings)
