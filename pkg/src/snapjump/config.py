"""Physical constants, solver settings and run configuration."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

# design ranges of the four normalised parameters
DALPHA_RANGE = (0.01, 0.19)
EPS_RANGE = (0.1, 0.3)
MBAR_RANGE = (0.3, 2.0)
MU_RANGE = (0.1, 0.6)
PARAM_NAMES = ("dalpha", "eps", "mbar", "mu")
PARAM_RANGES = (DALPHA_RANGE, EPS_RANGE, MBAR_RANGE, MU_RANGE)


@dataclass(frozen=True)
class Material:
    """Beam geometry and material (SI units)."""

    L: float = 0.020
    w: float = 0.010
    b: float = 0.05e-3
    E: float = 200.0e9
    rho: float = 5000.0
    l2: float = 0.010  # frame height
    g: float = -10.0

    @property
    def EA(self) -> float:
        return self.E * self.w * self.b

    @property
    def EI(self) -> float:
        return self.E * self.w * self.b**3 / 12.0

    @property
    def line_density(self) -> float:
        return self.rho * self.w * self.b

    def mass_from_mbar(self, mbar: float) -> float:
        return mbar * self.EI / (abs(self.g) * self.L**2)

    def mbar_from_mass(self, mass: float) -> float:
        return mass * abs(self.g) * self.L**2 / self.EI


@dataclass(frozen=True)
class SimSettings:
    """Numerical settings of the jump simulation."""

    dt: float = 5.0e-5
    n_beam: int = 120
    n_frame: int = 70
    frame_factor: float = 1000.0
    tol: float = 1.0e-5  # Newton residual [N]
    max_newton: int = 100  # impact steps with sliding contact can need ~60
    rate: float = 20.0  # actuation rate [rad/s]
    hold_margin: float = 5.0e-3
    stiffness: float = 1.0e4  # K_c
    barrier: float = 5.0e-4  # d~
    eps_v: float = 1.0e-4
    max_time: float = 0.2
    clearance: float = 5.0e-3
    full_flight: bool = False


@dataclass
class RunConfig:
    material: Material = field(default_factory=Material)
    sim: SimSettings = field(default_factory=SimSettings)
    seed: int = 0
    jobs: int = 0  # 0 = all logical cores
    model: str = ""
    data: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        sections = {"material": Material, "sim": SimSettings}
        parts = {}
        for key, kind in sections.items():
            sub = d.pop(key, {})
            unknown = set(sub) - {f.name for f in dataclasses.fields(kind)}
            if unknown:
                raise ValueError(f"unknown config keys in '{key}': {sorted(unknown)}")
            parts[key] = kind(**sub)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**parts, **d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
