"""Parametric wing-box sweep with a thin-walled cantilever stress model."""

from __future__ import annotations

import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .domain import FlowResult, MaterialSpec, StructConfig, StructResult
from .errors import ErrorKind, TaskFailure
from .geometry import AirfoilCoordinates, GeometryError, cached_airfoil, wing_section_properties
from .recovery import retry_loop

log = logging.getLogger(__name__)

G = 9.80665
RHO_AIR = 1.225
LOAD_FACTORS = {"cruise": 1.0, "maneuver": 2.5, "gust": 1.5, "landing": 3.0}


@dataclass(frozen=True)
class SweepBounds:
    """(low, high, levels) per continuous axis, allowed values per count axis."""

    spar_width: tuple[float, float, int] = (0.2, 2.0, 3)
    rib_thickness: tuple[float, float, int] = (0.5, 2.0, 6)
    shell_thickness: tuple[float, float, int] = (1.0, 3.0, 6)
    n_spars: tuple[int, ...] = (2, 3)
    n_ribs: tuple[int, ...] = (2, 3)


def _levels(lo: float, hi: float, n: int) -> list[float]:
    if n == 1:
        return [float(lo)]
    return [round(float(v), 10) for v in np.linspace(lo, hi, n)]


def sweep(bounds: SweepBounds = SweepBounds()) -> list[StructConfig]:
    """Full factorial, spar width outermost and rib count innermost."""
    out = [StructConfig(sw, rt, st, ns, nr) for sw, rt, st, ns, nr in itertools.product(
        _levels(*bounds.spar_width), _levels(*bounds.rib_thickness), _levels(*bounds.shell_thickness),
        bounds.n_spars, bounds.n_ribs)]
    for cfg in out:
        cfg.check()
    return out


@dataclass(frozen=True)
class LoadCase:
    name: str
    load_factor: float
    aero_force: float  # N on the modelled semi-span at 1 g
    include_inertia: bool = True


def cruise_lift(flow: FlowResult, velocity: float, chord: float, span: float, rho: float = RHO_AIR) -> float:
    """Whole-wing lift 1/2 rho U^2 S Cl."""
    return 0.5 * rho * velocity**2 * chord * span * flow.cl


def load_cases(flow: FlowResult, velocity: float, chord: float, span: float,
               rho: float = RHO_AIR, factors: dict | None = None) -> list[LoadCase]:
    factors = LOAD_FACTORS if factors is None else factors
    semi = 0.5 * cruise_lift(flow, velocity, chord, span, rho)
    return [LoadCase(name, float(n), semi) for name, n in factors.items()]


@dataclass(frozen=True)
class StructuralModel:
    """Cantilevered semi-span of the selected wing, root fixed."""

    airfoil: str
    chord: float
    span: float
    material: MaterialSpec = field(default_factory=MaterialSpec)
    n_points: int = 121

    @property
    def length(self) -> float:
        return 0.5 * self.span

    @property
    def coords(self) -> AirfoilCoordinates:
        return cached_airfoil(self.airfoil, self.n_points)

    def section(self, config: StructConfig):
        return wing_section_properties(self.coords, config, self.chord, self.length)


def mass(config: StructConfig, model: StructuralModel) -> float:
    """Structural mass in grams: density times shell, spar and rib volumes."""
    config.check()
    return model.material.density * model.section(config).volume * 1e3


@dataclass(frozen=True)
class StressFragment:
    stress: float        # MPa
    displacement: float  # mm
    force: float         # N


def desk_stress(config: StructConfig, case: LoadCase, model: StructuralModel,
                mass_g: float | None = None) -> StressFragment:
    """Root bending stress and tip deflection of a uniformly loaded cantilever.

    Aerodynamic and inertial loads are summed in magnitude (conservative) and
    scaled by the load factor.
    """
    sec = model.section(config)
    if not sec.second_moment > 0:
        raise GeometryError("non-positive section inertia")
    m = (mass(config, model) if mass_g is None else mass_g) * 1e-3
    force = case.load_factor * (case.aero_force + (m * G if case.include_inertia else 0.0))
    length = model.length
    moment = force * length / 2.0
    sigma = abs(moment) * sec.y_max / sec.second_moment
    delta = abs(force) * length**3 / (8.0 * model.material.youngs_modulus * sec.second_moment)
    return StressFragment(sigma * 1e-6, delta * 1e3, force)


def evaluate(config: StructConfig, cases: Sequence[LoadCase], model: StructuralModel) -> StructResult:
    m = mass(config, model)
    frags = {c.name: desk_stress(config, c, model, m) for c in cases}
    stresses = {k: f.stress for k, f in frags.items()}
    peak = max(stresses.values())
    sf = model.material.yield_strength * 1e-6 / peak if peak > 0 else math.inf
    return StructResult(config, stresses, {k: f.displacement for k, f in frags.items()}, m, sf)


@dataclass
class SweepOutcome:
    results: list[StructResult]
    failures: dict[str, str]
    attempts: dict[str, int]

    @property
    def success_count(self) -> int:
        return len(self.results)


def run_sweep(configs: Sequence[StructConfig], cases: Sequence[LoadCase], model: StructuralModel,
              evaluator: Callable[[StructConfig, Sequence[LoadCase], StructuralModel], StructResult] | None = None,
              max_parallel: int = 1, max_retries: int = 3,
              sleep: Callable[[float], None] = time.sleep) -> SweepOutcome:
    """Evaluate every config through the retry loop; failures are collected, not raised."""
    if not configs:
        raise ValueError("empty configuration list")
    evaluator = evaluator or evaluate

    def one(cfg: StructConfig):
        def attempt(_state, _params, _n):
            try:
                return evaluator(cfg, cases, model)
            except GeometryError as exc:
                raise TaskFailure(str(exc), logs=f"mesh generation failed: {exc}", kind=ErrorKind.MESH) from exc
        return retry_loop(attempt, None, max_retries=max_retries, sleep=sleep, task_id=cfg.label,
                          validate=lambda r: r.violations(model.material.yield_strength * 1e-6))

    with ThreadPoolExecutor(max_workers=max(1, max_parallel)) as pool:
        outcomes = list(pool.map(one, configs))
    results, failures, attempts = [], {}, {}
    for cfg, out in zip(configs, outcomes):
        attempts[cfg.label] = out.attempts
        if out.success:
            results.append(out.state)
        else:
            failures[cfg.label] = str(out.last_exception)
    log.info("structural sweep: %d ok, %d failed", len(results), len(failures))
    return SweepOutcome(results, failures, attempts)


CSV_HEADER = ("label,spar_width_mm,rib_thickness_mm,shell_thickness_mm,n_spars,n_ribs,mass_g,"
              "max_stress_mpa,max_displacement_mm,safety_factor")


def result_row(r: StructResult) -> str:
    c = r.config
    return (f"{c.label},{c.spar_width:.4f},{c.rib_thickness:.4f},{c.shell_thickness:.4f},{c.n_spars},{c.n_ribs},"
            f"{r.mass:.10g},{r.max_stress:.10g},{max(r.max_displacement.values()):.10g},{r.safety_factor:.10g}")


def results_csv(results: Sequence[StructResult]) -> str:
    return "\n".join([CSV_HEADER, *(result_row(r) for r in results)]) + "\n"


def parse_results_csv(text: str) -> list[StructResult]:
    """Envelope results (peak over load cases) back from a sweep table."""
    rows = [line.split(",") for line in text.strip().splitlines()]
    if not rows or ",".join(rows[0]) != CSV_HEADER:
        raise ValueError("not a structural sweep table")
    out = []
    for r in rows[1:]:
        cfg = StructConfig(float(r[1]), float(r[2]), float(r[3]), int(r[4]), int(r[5]))
        out.append(StructResult(cfg, {"envelope": float(r[7])}, {"envelope": float(r[8])}, float(r[6]), float(r[9])))
    return out
