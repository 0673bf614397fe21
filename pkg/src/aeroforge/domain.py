"""Shared value types for the design pipeline.

Display units follow the reporting conventions used across the tool:
lengths in metres at the boundary (structural dimensions in mm), angles in
degrees, masses in grams and stresses in MPa.  Every type serialises to a
plain JSON-compatible dictionary and back without loss.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from typing import Any

DEFAULT_NU = 8.57e-6
RE_TOLERANCE = 5e-3

AGENT_ROLES = ("chief", "geometry", "aerodynamics", "acoustics", "structures", "optimizer")
_ROLE_ALIASES = {"aero": "aerodynamics", "planner": "chief", "optimization": "optimizer"}

NACA4_RE = re.compile(r"^(?:NACA)?\s*(\d{4})$", re.IGNORECASE)


class ValidationError(ValueError):
    """Raised when a value object violates one of its invariants."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


def normalize_role(role: str) -> str:
    role = _ROLE_ALIASES.get(role, role)
    if role not in AGENT_ROLES:
        raise ValueError(f"unknown agent role: {role!r}")
    return role


def naca_digits(designator: str) -> str:
    match = NACA4_RE.match(designator.strip())
    if not match:
        raise ValueError(f"not a NACA 4-digit designator: {designator!r}")
    return match.group(1)


class _Serializable:
    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]):
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})

    def violations(self) -> list[str]:
        return []

    def check(self):
        bad = self.violations()
        if bad:
            raise ValidationError(bad)
        return self


@dataclass(frozen=True)
class MaterialSpec(_Serializable):
    name: str = "Al 7075-T6"
    youngs_modulus: float = 71.7e9
    poisson_ratio: float = 0.33
    density: float = 2810.0
    yield_strength: float = 503e6

    def violations(self) -> list[str]:
        out = []
        if not self.youngs_modulus > 0:
            out.append("material.youngs_modulus: E>0 violated")
        if not 0 < self.poisson_ratio < 0.5:
            out.append("material.poisson_ratio: 0<nu<0.5 violated")
        if not self.density > 0:
            out.append("material.density: rho>0 violated")
        if not self.yield_strength > 0:
            out.append("material.yield_strength: yield>0 violated")
        return out


@dataclass(frozen=True)
class RequirementSpec(_Serializable):
    objective_text: str
    chord: float
    span: float
    velocities: tuple[float, ...]
    aoa_range: tuple[float, float]
    airfoil_candidates: tuple[str, ...]
    material: MaterialSpec = field(default_factory=MaterialSpec)
    min_safety_factor: float = 1.5
    aero_weight: float = 0.6
    noise_weight: float = 0.4
    kinematic_viscosity: float = DEFAULT_NU
    aoa_schedule: dict[str, tuple[float, ...]] | None = None

    def violations(self) -> list[str]:
        out = []
        if not self.chord > 0:
            out.append("chord: chord>0 violated")
        if not self.span > 0:
            out.append("span: span>0 violated")
        if not self.velocities:
            out.append("velocities: nonempty violated")
        elif not all(v > 0 for v in self.velocities):
            out.append("velocities: all>0 violated")
        if len(self.aoa_range) != 2 or self.aoa_range[0] > self.aoa_range[1]:
            out.append("aoa_range: min<=max violated")
        if not self.airfoil_candidates:
            out.append("airfoil_candidates: nonempty violated")
        for name in self.airfoil_candidates:
            try:
                naca_digits(name)
            except ValueError:
                out.append(f"airfoil_candidates: {name!r} is not a NACA 4-digit designator")
        if abs(self.aero_weight + self.noise_weight - 1.0) > 1e-9:
            out.append("aero_weight+noise_weight: sum=1 violated")
        if not self.min_safety_factor > 0:
            out.append("min_safety_factor: >0 violated")
        if not self.kinematic_viscosity > 0:
            out.append("kinematic_viscosity: >0 violated")
        out.extend(self.material.violations())
        return out

    def to_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        data["velocities"] = list(self.velocities)
        data["aoa_range"] = list(self.aoa_range)
        data["airfoil_candidates"] = list(self.airfoil_candidates)
        if self.aoa_schedule is not None:
            data["aoa_schedule"] = {k: list(v) for k, v in self.aoa_schedule.items()}
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RequirementSpec":
        data = dict(data)
        data["material"] = MaterialSpec.from_dict(data.get("material") or {})
        data["velocities"] = tuple(float(v) for v in data.get("velocities", ()))
        data["aoa_range"] = tuple(float(v) for v in data.get("aoa_range", (0.0, 0.0)))
        data["airfoil_candidates"] = tuple(data.get("airfoil_candidates", ()))
        if data.get("aoa_schedule") is not None:
            data["aoa_schedule"] = {k: tuple(float(a) for a in v) for k, v in data["aoa_schedule"].items()}
        return super().from_dict(data)


def validate(spec: RequirementSpec) -> list[str]:
    """Return every violated invariant of ``spec`` (empty when valid)."""
    return spec.violations()


@dataclass(frozen=True)
class CaseConfig(_Serializable):
    case_id: str
    airfoil: str
    chord: float
    velocity: float
    aoa: float
    reynolds: float
    kinematic_viscosity: float = DEFAULT_NU

    def violations(self) -> list[str]:
        out = []
        try:
            naca_digits(self.airfoil)
        except ValueError as exc:
            out.append(f"airfoil: {exc}")
        if not (self.chord > 0 and self.velocity > 0 and self.kinematic_viscosity > 0):
            out.append("chord/velocity/kinematic_viscosity: >0 violated")
        else:
            expected = self.velocity * self.chord / self.kinematic_viscosity
            if abs(self.reynolds - expected) > RE_TOLERANCE * expected:
                out.append(f"reynolds: U*c/nu consistency violated ({self.reynolds:.4g} vs {expected:.4g})")
        return out


@dataclass(frozen=True)
class DesignMatrix(_Serializable):
    cases: tuple[CaseConfig, ...]

    def violations(self) -> list[str]:
        out = []
        ids = [c.case_id for c in self.cases]
        if len(set(ids)) != len(ids):
            out.append("case_id: unique within matrix violated")
        for c in self.cases:
            out.extend(f"{c.case_id}: {v}" for v in c.violations())
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"cases": [c.to_dict() for c in self.cases]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DesignMatrix":
        return cls(tuple(CaseConfig.from_dict(c) for c in data["cases"]))

    def __len__(self) -> int:
        return len(self.cases)

    def __iter__(self):
        return iter(self.cases)


@dataclass(frozen=True)
class FlowResult(_Serializable):
    cl: float
    cd: float
    cm: float
    lift_to_drag: float
    delta_star: float
    theta: float
    shape_factor: float
    converged: bool = True
    iterations: int = 0

    @classmethod
    def build(cls, cl, cd, cm, delta_star, theta, converged=True, iterations=0) -> "FlowResult":
        return cls(cl=cl, cd=cd, cm=cm, lift_to_drag=cl / cd if cd > 0 else math.nan,
                   delta_star=delta_star, theta=theta, shape_factor=delta_star / theta,
                   converged=converged, iterations=iterations)

    def violations(self) -> list[str]:
        out = []
        if not self.cd > 0:
            out.append("cd: cd>0 violated")
        elif abs(self.lift_to_drag - self.cl / self.cd) > 1e-9 * max(1.0, abs(self.lift_to_drag)):
            out.append("lift_to_drag: =cl/cd violated")
        if not (self.delta_star > 0 and self.theta > 0):
            out.append("delta_star/theta: >0 violated")
        else:
            if abs(self.shape_factor - self.delta_star / self.theta) > 1e-9 * self.shape_factor:
                out.append("shape_factor: =delta_star/theta violated")
            if self.shape_factor < 1:
                out.append("shape_factor: H>=1 violated")
        return out


@dataclass(frozen=True)
class AcousticResult(_Serializable):
    frequencies: tuple[float, ...]
    spl: dict[str, tuple[float, ...]]
    oaspl: float
    oaspl_dba: float
    third_octave: tuple[tuple[float, float], ...]
    observer_distance: float
    observer_angle: float = 90.0
    oaspl_dbc: float | None = None

    def violations(self) -> list[str]:
        out = []
        f = self.frequencies
        if any(b <= a for a, b in zip(f, f[1:])):
            out.append("frequencies: strictly increasing violated")
        total = self.spl.get("total")
        if total is None:
            out.append("spl: total spectrum missing")
            return out
        for name, levels in self.spl.items():
            if name == "total":
                continue
            for t, level in zip(total, levels):
                if level > t + 1e-9:
                    out.append(f"spl: total>={name} violated")
                    break
        finite = [x for x in total if math.isfinite(x)]
        if finite and self.oaspl < max(finite) - 1e-9:
            out.append("oaspl: >=max band violated")
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "frequencies": list(self.frequencies),
            "spl": {k: list(v) for k, v in self.spl.items()},
            "oaspl": self.oaspl,
            "oaspl_dba": self.oaspl_dba,
            "third_octave": [list(p) for p in self.third_octave],
            "observer_distance": self.observer_distance,
            "observer_angle": self.observer_angle,
            "oaspl_dbc": self.oaspl_dbc,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AcousticResult":
        return cls(
            frequencies=tuple(data["frequencies"]),
            spl={k: tuple(v) for k, v in data["spl"].items()},
            oaspl=data["oaspl"],
            oaspl_dba=data["oaspl_dba"],
            third_octave=tuple(tuple(p) for p in data["third_octave"]),
            observer_distance=data["observer_distance"],
            observer_angle=data.get("observer_angle", 90.0),
            oaspl_dbc=data.get("oaspl_dbc"),
        )


STRUCT_BOUNDS = {
    "spar_width": (0.2, 2.0),
    "rib_thickness": (0.5, 2.0),
    "shell_thickness": (1.0, 3.0),
}
STRUCT_COUNTS = {"n_spars": (2, 3), "n_ribs": (2, 3)}


@dataclass(frozen=True)
class StructConfig(_Serializable):
    spar_width: float
    rib_thickness: float
    shell_thickness: float
    n_spars: int
    n_ribs: int

    def violations(self) -> list[str]:
        out = []
        for name, (lo, hi) in STRUCT_BOUNDS.items():
            value = getattr(self, name)
            if not lo - 1e-12 <= value <= hi + 1e-12:
                out.append(f"{name}: {lo}<=x<={hi} violated")
        for name, allowed in STRUCT_COUNTS.items():
            if getattr(self, name) not in allowed:
                out.append(f"{name}: in {set(allowed)} violated")
        return out

    @property
    def label(self) -> str:
        return (f"sw{self.spar_width:.2f}_rt{self.rib_thickness:.2f}_st{self.shell_thickness:.2f}"
                f"_ns{self.n_spars}_nr{self.n_ribs}")

    def as_vector(self) -> list[float]:
        return [self.spar_width, self.rib_thickness, self.shell_thickness, float(self.n_spars), float(self.n_ribs)]


@dataclass(frozen=True)
class StructResult(_Serializable):
    config: StructConfig
    max_von_mises: dict[str, float]
    max_displacement: dict[str, float]
    mass: float
    safety_factor: float

    @property
    def max_stress(self) -> float:
        return max(self.max_von_mises.values())

    def violations(self, yield_mpa: float | None = None) -> list[str]:
        out = []
        if not self.mass > 0:
            out.append("mass: >0 violated")
        if yield_mpa is not None and self.max_stress > 0:
            expected = yield_mpa / self.max_stress
            if abs(self.safety_factor - expected) > 1e-9 * max(1.0, expected):
                out.append("safety_factor: =yield/max stress violated")
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "max_von_mises": dict(self.max_von_mises),
            "max_displacement": dict(self.max_displacement),
            "mass": self.mass,
            "safety_factor": self.safety_factor,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "StructResult":
        return cls(
            config=StructConfig.from_dict(data["config"]),
            max_von_mises=dict(data["max_von_mises"]),
            max_displacement=dict(data["max_displacement"]),
            mass=data["mass"],
            safety_factor=data["safety_factor"],
        )
