"""Chief engineer: experiment matrix, task graph and airfoil selection."""

from __future__ import annotations

import json
import math
import os
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Iterable, Protocol

import jsonschema
import numpy as np

from .domain import CaseConfig, DesignMatrix, RequirementSpec, ValidationError, naca_digits
from .errors import ErrorKind, TaskFailure
from .scheduler import TaskGraph, TaskNode
from .workspace import case_dir_name

ENV_URL = "AEROFORGE_PLANNER_URL"
ENV_TOKEN = "AEROFORGE_PLANNER_TOKEN"
MAX_RESPONSE_BYTES = 256 * 1024
STRUCT_BATCHES = 16


class PlanningError(ValueError):
    pass


class PlannerBackend(Protocol):
    kind: str

    def generate_matrix(self, spec: RequirementSpec) -> DesignMatrix: ...


def aoa_set(spec: RequirementSpec) -> list[float]:
    """Integer-degree angles spanning the requested range."""
    lo, hi = spec.aoa_range
    values = [float(a) for a in range(math.ceil(lo), math.floor(hi) + 1)]
    return values or [float(lo)]


def make_case(airfoil: str, velocity: float, aoa: float, spec: RequirementSpec) -> CaseConfig:
    name = "NACA" + naca_digits(airfoil)
    return CaseConfig(case_id=case_dir_name(name, velocity, aoa), airfoil=name, chord=spec.chord,
                      velocity=float(velocity), aoa=float(aoa),
                      reynolds=velocity * spec.chord / spec.kinematic_viscosity,
                      kinematic_viscosity=spec.kinematic_viscosity)


def _finish(cases: list[CaseConfig]) -> DesignMatrix:
    matrix = DesignMatrix(tuple(cases))
    problems = matrix.violations()
    if problems:
        raise ValidationError(problems)
    return matrix


@dataclass
class ScriptedPlanner:
    """Deterministic matrix generation.

    An explicit per-airfoil AoA schedule in the requirement wins; otherwise a
    seeded permutation of the integer AoA set is cycled through the cases in
    airfoil-major order, so each airfoil sees distinct angles.
    """

    seed: int = 0
    kind: str = "scripted"

    def generate_matrix(self, spec: RequirementSpec) -> DesignMatrix:
        if not spec.airfoil_candidates:
            raise PlanningError("empty airfoil candidate list")
        problems = spec.violations()
        if problems:
            raise ValidationError(problems)
        schedule = {("NACA" + naca_digits(k)): v for k, v in (spec.aoa_schedule or {}).items()}
        perm = np.random.default_rng(self.seed).permutation(aoa_set(spec))
        cases, k = [], 0
        for airfoil in spec.airfoil_candidates:
            name = "NACA" + naca_digits(airfoil)
            angles = schedule.get(name)
            if angles is not None and len(angles) != len(spec.velocities):
                raise PlanningError(f"AoA schedule for {name} must have one angle per velocity")
            for i, u in enumerate(spec.velocities):
                aoa = angles[i] if angles is not None else float(perm[k % len(perm)])
                k += 1
                cases.append(make_case(name, u, aoa, spec))
        return _finish(cases)


RESPONSE_SCHEMA = {
    "type": "object",
    "required": ["cases"],
    "properties": {
        "cases": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["airfoil", "velocity", "aoa"],
                "properties": {
                    "airfoil": {"type": "string", "pattern": "^(?i:naca)?\\s*\\d{4}$"},
                    "velocity": {"type": "number", "exclusiveMinimum": 0},
                    "aoa": {"type": "number"},
                },
            },
        }
    },
}


@dataclass
class RemotePlanner:
    """Posts the requirement to an HTTP planning service and validates the reply."""

    url: str
    token: str | None = None
    timeout: float = 60.0
    max_bytes: int = MAX_RESPONSE_BYTES
    kind: str = "remote"

    @classmethod
    def from_env(cls) -> "RemotePlanner":
        url = os.environ.get(ENV_URL)
        if not url:
            raise PlanningError(f"{ENV_URL} is not set")
        return cls(url, os.environ.get(ENV_TOKEN))

    def _post(self, body: dict) -> bytes:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        req = urllib.request.Request(self.url, data=json.dumps(body).encode(), headers=headers, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                data = resp.read(self.max_bytes + 1)
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise TaskFailure(f"planner request failed: {exc}", kind=ErrorKind.UNKNOWN) from exc
        if len(data) > self.max_bytes:
            raise TaskFailure("planner response exceeds size cap", kind=ErrorKind.UNKNOWN)
        return data

    def parse(self, raw: bytes, spec: RequirementSpec) -> DesignMatrix:
        """All-or-nothing: any schema or domain violation rejects the whole reply."""
        try:
            doc = json.loads(raw)
            jsonschema.validate(doc, RESPONSE_SCHEMA)
            cases = [make_case(c["airfoil"], c["velocity"], c["aoa"], spec) for c in doc["cases"]]
            lo, hi = spec.aoa_range
            bad = [c.case_id for c in cases if not lo <= c.aoa <= hi]
            if bad:
                raise PlanningError(f"AoA outside requested range: {bad}")
            return _finish(cases)
        except (ValueError, jsonschema.ValidationError) as exc:
            raise TaskFailure(f"malformed planner response: {exc}", kind=ErrorKind.UNKNOWN) from exc

    def generate_matrix(self, spec: RequirementSpec) -> DesignMatrix:
        return self.parse(self._post({"request": "generate_matrix", "spec": spec.to_dict()}), spec)


def generate_matrix(spec: RequirementSpec, backend: PlannerBackend | None = None) -> DesignMatrix:
    return (backend or ScriptedPlanner()).generate_matrix(spec)


def build_task_graph(matrix: DesignMatrix, spec: RequirementSpec | None = None,
                     struct_batches: int = STRUCT_BATCHES) -> TaskGraph:
    """Per-case geometry -> aero -> acoustics chains joined at a selection barrier,
    followed by a batched structural sweep, its aggregation, optimization and the report."""
    if not len(matrix):
        raise PlanningError("empty design matrix")
    graph = TaskGraph()
    joins = []
    for case in matrix:
        cid = case.case_id
        graph.add(TaskNode(f"geometry:{cid}", "geometry", "geometry", {"case_id": cid}))
        graph.add(TaskNode(f"aero:{cid}", "aerodynamics", "aero", {"case_id": cid}, (f"geometry:{cid}",)))
        graph.add(TaskNode(f"acoustics:{cid}", "acoustics", "acoustics", {"case_id": cid}, (f"aero:{cid}",)))
        joins += [f"aero:{cid}", f"acoustics:{cid}"]
    graph.add(TaskNode("select", "chief", "selection", {}, tuple(joins)))
    batches = []
    for b in range(struct_batches):
        tid = f"structures:{b:02d}"
        graph.add(TaskNode(tid, "structures", "structures", {"batch": b, "n_batches": struct_batches}, ("select",)))
        batches.append(tid)
    graph.add(TaskNode("structures:aggregate", "structures", "aggregation", {}, tuple(batches)))
    graph.add(TaskNode("optimize", "optimizer", "optimization", {}, ("structures:aggregate",)))
    graph.add(TaskNode("report", "chief", "report", {}, ("optimize",)))
    return graph


@dataclass(frozen=True)
class CaseScore:
    case_id: str
    airfoil: str
    lift_to_drag: float
    oaspl: float
    converged: bool = True


@dataclass(frozen=True)
class RankedCase:
    score: CaseScore
    j: float
    aero_term: float
    noise_term: float


@dataclass(frozen=True)
class Selection:
    ranking: tuple[RankedCase, ...]

    @property
    def winner(self) -> RankedCase:
        return self.ranking[0]


def select_airfoil(scores: Iterable[CaseScore], aero_weight: float = 0.6,
                   noise_weight: float = 0.4) -> Selection:
    """Weighted aero/noise merit; ties go to higher L/D, then case id."""
    usable = [s for s in scores if s.converged and math.isfinite(s.lift_to_drag) and math.isfinite(s.oaspl)]
    if not usable:
        raise PlanningError("all cases failed; nothing to select")
    ld_max = max(s.lift_to_drag for s in usable)
    lo = min(s.oaspl for s in usable)
    hi = max(s.oaspl for s in usable)
    ranked = []
    for s in usable:
        aero = s.lift_to_drag / ld_max if ld_max > 0 else 0.0
        noise = 1.0 if hi == lo else 1.0 - (s.oaspl - lo) / (hi - lo)
        ranked.append(RankedCase(s, aero_weight * aero + noise_weight * noise, aero, noise))
    ranked.sort(key=lambda r: (-r.j, -r.score.lift_to_drag, r.score.case_id))
    return Selection(tuple(ranked))


def plan_documents(matrix: DesignMatrix, spec: RequirementSpec) -> dict[str, str]:
    """Markdown plans handed to the aerodynamics and acoustics agents."""
    rows = "\n".join(f"| {c.case_id} | {c.airfoil} | {c.chord:g} | {c.reynolds:.3e} | {c.velocity:g} | {c.aoa:g} |"
                     for c in matrix)
    table = ("| case | airfoil | chord (m) | Re | U (m/s) | AoA (deg) |\n"
             "|---|---|---|---|---|---|\n" + rows + "\n")
    aero = (f"# Aerodynamics plan\n\nObjective: {spec.objective_text}\n\n"
            f"Kinematic viscosity: {spec.kinematic_viscosity:g} m^2/s\n\n{table}\n"
            "Outputs per case: postProcessing/forceCoeffs/0/coefficient.dat, "
            "postProcessing/integrated/{force_coefficients,boundary_layer,cp_data}.csv, "
            "acoustics_data/*.json\n")
    acou = (f"# Acoustics plan\n\nSpectrum: one-third-octave bands 100 Hz to 10 kHz, observer 1.0 m at 90 deg.\n"
            "Mechanisms: turbulent boundary layer trailing edge, separation/stall, laminar vortex shedding.\n\n"
            f"{table}\nOutputs per case: postProcessing/integrated/acoustics/"
            "{acoustic_metrics,third_octave_spectrum}.csv\n")
    return {"airfoil/aerodynamics_plan.md": aero, "airfoil/acoustics_plan.md": acou}
