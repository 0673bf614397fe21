"""Case setup, output contract and result extraction for one aero-acoustic case.

The case tree mirrors an OpenFOAM steady incompressible run.  The desk solver
writes the same ``coefficient.dat`` the external solver would, so extraction
is identical on both paths.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from ..domain import CaseConfig, FlowResult
from ..errors import ErrorKind, TaskFailure
from ..recovery import SolverParams
from ..workspace import ProjectWorkspace
from .desk import DeskSolverConfig, flat_plate_boundary_layer, run_desk_solver, surface_pressure

RHO_AIR = 1.225
COEFF_PATH = "postProcessing/forceCoeffs/0/coefficient.dat"
INTEGRATED = "postProcessing/integrated"
COEFF_COLUMNS = ("Time", "Cd", "Cs", "Cl", "CmRoll", "CmPitch", "CmYaw", "Cd(f)", "Cd(r)", "Cl(f)", "Cl(r)")
DEFAULT_PATCHES = (("back", "empty"), ("front", "empty"), ("inlet", "patch"), ("outlet", "patch"),
                   ("walls", "wall"))
MESH_NODES = (40000, 45000)


class MissingOutputError(TaskFailure):
    pass


def inlet_velocity(speed: float, aoa_deg: float) -> tuple[float, float, float]:
    if speed < 0:
        raise ValueError("speed must be non-negative")
    a = math.radians(aoa_deg)
    return (speed * math.cos(a), speed * math.sin(a), 0.0)


def reynolds(speed: float, chord: float, nu: float) -> float:
    return speed * chord / nu


@dataclass(frozen=True)
class CaseParams:
    solver: str = "simpleFoam"
    turbulence_model: str = "SpalartAllmaras"
    relax_p: float = 0.3
    relax_u: float = 0.7
    iterations: int = 3000
    dt_scale: float = 1.0
    refinement: float = 1.0
    depth: float = 0.01
    patch_types: tuple[tuple[str, str], ...] = DEFAULT_PATCHES

    def with_recovery(self, params: SolverParams) -> "CaseParams":
        patches = dict(self.patch_types)
        patches.update(dict(params.patch_types))
        return replace(self, relax_p=min(self.relax_p, params.relax_p), relax_u=min(self.relax_u, params.relax_u),
                       dt_scale=self.dt_scale * params.dt_scale, refinement=self.refinement * params.refinement,
                       patch_types=tuple(sorted(patches.items())))


def _header(cls: str, obj: str, location: str = "") -> str:
    loc = f'    location    "{location}";\n' if location else ""
    return ("FoamFile\n{\n    version     2.0;\n    format      ascii;\n"
            f"    class       {cls};\n{loc}    object      {obj};\n}}\n\n")


def _vec(v) -> str:
    return "(" + " ".join(f"{x:.10g}" for x in v) + ")"


def _boundary(patches: dict, inlet: str, outlet: str, wall: str) -> str:
    out = ["boundaryField\n{"]
    for name, kind in sorted(patches.items()):
        if kind == "empty":
            body = "type empty;"
        elif name == "inlet":
            body = inlet
        elif name == "outlet":
            body = outlet
        else:
            body = wall
        out.append(f"    {name}\n    {{\n        {body}\n    }}")
    out.append("}\n")
    return "\n".join(out)


def case_documents(config: CaseConfig, params: CaseParams = CaseParams()) -> dict[str, str]:
    """Solver input documents keyed by path relative to the case directory."""
    u = inlet_velocity(config.velocity, config.aoa)
    a = math.radians(config.aoa)
    nu = config.kinematic_viscosity
    nutilda = 3.0 * nu
    patches = dict(params.patch_types)
    docs = {}
    docs["constant/transportProperties"] = (_header("dictionary", "transportProperties", "constant")
                                            + f"transportModel  Newtonian;\n\nnu              {nu:.6g};\n")
    docs["constant/momentumTransport"] = (_header("dictionary", "momentumTransport", "constant")
                                          + "simulationType  RAS;\n\nRAS\n{\n"
                                          f"    model           {params.turbulence_model};\n"
                                          "    turbulence      on;\n    printCoeffs     on;\n}\n")
    docs["system/controlDict"] = (
        _header("dictionary", "controlDict", "system")
        + f"application     {params.solver};\n\nstartFrom       startTime;\nstartTime       0;\n"
        f"stopAt          endTime;\nendTime         {params.iterations};\ndeltaT          {params.dt_scale:.6g};\n"
        f"writeControl    timeStep;\nwriteInterval   {params.iterations};\npurgeWrite      0;\n"
        "writeFormat     ascii;\nwritePrecision  8;\nrunTimeModifiable true;\n\nfunctions\n{\n"
        "    forceCoeffs\n    {\n        type            forceCoeffs;\n        libs            (\"libforces.so\");\n"
        "        writeControl    timeStep;\n        writeInterval   1;\n        patches         (walls);\n"
        f"        rho             rhoInf;\n        rhoInf          {RHO_AIR};\n"
        f"        liftDir         {_vec((-math.sin(a), math.cos(a), 0.0))};\n"
        f"        dragDir         {_vec((math.cos(a), math.sin(a), 0.0))};\n"
        f"        CofR            {_vec((0.25 * config.chord, 0.0, 0.0))};\n        pitchAxis       (0 0 1);\n"
        f"        magUInf         {config.velocity:.6g};\n        lRef            {config.chord:.6g};\n"
        f"        Aref            {config.chord * params.depth:.6g};\n    }}\n}}\n")
    docs["system/fvSchemes"] = (
        _header("dictionary", "fvSchemes", "system")
        + "ddtSchemes\n{\n    default         steadyState;\n}\n\ngradSchemes\n{\n    default         Gauss linear;\n}\n\n"
        "divSchemes\n{\n    default         none;\n    div(phi,U)      bounded Gauss linearUpwind grad(U);\n"
        "    div(phi,nuTilda) bounded Gauss linearUpwind grad(nuTilda);\n"
        "    div((nuEff*dev2(T(grad(U))))) Gauss linear;\n}\n\n"
        "laplacianSchemes\n{\n    default         Gauss linear corrected;\n}\n\n"
        "interpolationSchemes\n{\n    default         linear;\n}\n\nsnGradSchemes\n{\n    default         corrected;\n}\n\n"
        "wallDist\n{\n    method          meshWave;\n}\n")
    docs["system/fvSolution"] = (
        _header("dictionary", "fvSolution", "system")
        + "solvers\n{\n    p\n    {\n        solver          GAMG;\n        tolerance       1e-06;\n"
        "        relTol          0.1;\n        smoother        GaussSeidel;\n    }\n\n"
        "    \"(U|nuTilda)\"\n    {\n        solver          smoothSolver;\n        smoother        GaussSeidel;\n"
        "        tolerance       1e-08;\n        relTol          0.1;\n    }\n}\n\n"
        "SIMPLE\n{\n    nNonOrthogonalCorrectors 0;\n    consistent      no;\n\n    residualControl\n    {\n"
        "        p               1e-5;\n        U               1e-5;\n        nuTilda         1e-5;\n    }\n}\n\n"
        f"relaxationFactors\n{{\n    fields\n    {{\n        p               {params.relax_p:.6g};\n    }}\n"
        f"    equations\n    {{\n        U               {params.relax_u:.6g};\n"
        f"        nuTilda         {params.relax_u:.6g};\n    }}\n}}\n")
    docs["0/U"] = (_header("volVectorField", "U", "0") + "dimensions      [0 1 -1 0 0 0 0];\n\n"
                   f"internalField   uniform {_vec(u)};\n\n"
                   + _boundary(patches, "type freestreamVelocity; freestreamValue $internalField;",
                               "type freestreamVelocity; freestreamValue $internalField;", "type noSlip;"))
    docs["0/p"] = (_header("volScalarField", "p", "0") + "dimensions      [0 2 -2 0 0 0 0];\n\n"
                   "internalField   uniform 0;\n\n"
                   + _boundary(patches, "type freestreamPressure; freestreamValue $internalField;",
                               "type freestreamPressure; freestreamValue $internalField;", "type zeroGradient;"))
    docs["0/nuTilda"] = (_header("volScalarField", "nuTilda", "0") + "dimensions      [0 2 -1 0 0 0 0];\n\n"
                         f"internalField   uniform {nutilda:.6g};\n\n"
                         + _boundary(patches, "type freestream; freestreamValue $internalField;",
                                     "type freestream; freestreamValue $internalField;",
                                     "type fixedValue; value uniform 0;"))
    docs["0/nut"] = (_header("volScalarField", "nut", "0") + "dimensions      [0 2 -1 0 0 0 0];\n\n"
                     "internalField   uniform 0;\n\n"
                     + _boundary(patches, "type freestream; freestreamValue $internalField;",
                                 "type freestream; freestreamValue $internalField;",
                                 "type nutUSpaldingWallFunction; value uniform 0;"))
    docs["constant/patchTypes"] = "".join(f"{k} {v}\n" for k, v in sorted(patches.items()))
    docs["Allrun"] = allrun_script(params)
    docs["mesh.md"] = mesh_request(config, params)
    docs["case.json"] = json.dumps({"config": config.to_dict(), "params": {
        "solver": params.solver, "turbulence_model": params.turbulence_model, "relax_p": params.relax_p,
        "relax_u": params.relax_u, "iterations": params.iterations, "dt_scale": params.dt_scale,
        "refinement": params.refinement, "patch_types": dict(params.patch_types)}}, indent=2, sort_keys=True) + "\n"
    return docs


def allrun_script(params: CaseParams) -> str:
    return ("#!/bin/sh\ncd \"${0%/*}\" || exit 1\n\n"
            "gmsh -2 airfoil.geo -format msh2 -o airfoil.msh > log.gmsh 2>&1 || exit 1\n"
            "gmshToFoam airfoil.msh > log.gmshToFoam 2>&1 || exit 1\n"
            "checkMesh > log.checkMesh 2>&1\n"
            f"{params.solver} > log.{params.solver} 2>&1 || exit 1\n"
            f"foamToVTK -latestTime > log.foamToVTK 2>&1\n")


def mesh_request(config: CaseConfig, params: CaseParams) -> str:
    lo, hi = (int(round(n * params.refinement)) for n in MESH_NODES)
    return (f"# Mesh request: {config.case_id}\n\n"
            f"- topology: C-type structured around {config.airfoil}\n"
            f"- chord: {config.chord:g} m, far field: 20 chords\n"
            f"- target nodes: {lo}-{hi}\n"
            f"- refinement scale: {params.refinement:.6g}\n"
            f"- first cell height: y+ ~ 1 at Re = {config.reynolds:.4g}\n"
            "- patches: " + ", ".join(f"{k}={v}" for k, v in sorted(params.patch_types)) + "\n")


def build_case(config: CaseConfig, ws: ProjectWorkspace, params: CaseParams = CaseParams(),
               producer: str = "aerodynamics") -> list[str]:
    """Publish all solver input documents; rebuilding with identical input is a no-op."""
    base = config.case_id
    out = []
    for rel, text in case_documents(config, params).items():
        ws.publish_text(f"{base}/{rel}", text, producer=producer)
        out.append(f"{base}/{rel}")
    return out


# ---------------------------------------------------------------- coefficient.dat

def coefficient_text(config: CaseConfig, rows: list[tuple[int, float, float, float]], depth: float = 0.01) -> str:
    a = math.radians(config.aoa)
    head = [
        "# Force coefficients",
        f"# dragDir     : {_vec((math.cos(a), math.sin(a), 0.0))}",
        f"# liftDir     : {_vec((-math.sin(a), math.cos(a), 0.0))}",
        "# rotation    : (1 0 0) (0 1 0) (0 0 1)",
        f"# magUInf     : {config.velocity:.6g}",
        f"# lRef        : {config.chord:.6g}",
        f"# Aref        : {config.chord * depth:.6g}",
        f"# CofR        : {_vec((0.25 * config.chord, 0.0, 0.0))}",
        "# " + "\t".join(COEFF_COLUMNS),
    ]
    body = []
    for it, cd, cl, cm in rows:
        vals = (it, cd, 0.0, cl, 0.0, cm, 0.0, 0.5 * cd, 0.5 * cd, 0.5 * cl + cm, 0.5 * cl - cm)
        body.append("\t".join([str(it)] + [f"{v:.8e}" for v in vals[1:]]))
    return "\n".join(head + body) + "\n"


@dataclass(frozen=True)
class Coefficients:
    iteration: int
    cl: float
    cd: float
    cm: float


def parse_coefficients(text: str) -> Coefficients:
    """Last data row of a forceCoeffs table, located by its header comment."""
    columns = None
    last = None
    for line in text.splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            tokens = s.lstrip("#").split()
            if tokens and tokens[0] == "Time":
                columns = tokens
            continue
        last = s.split()
    if last is None:
        raise MissingOutputError("coefficient table has no data rows",
                                 logs="--> FOAM FATAL ERROR: no force coefficient output")
    columns = columns or list(COEFF_COLUMNS)
    try:
        row = dict(zip(columns, (float(v) for v in last)))
        coeff = Coefficients(int(row["Time"]), row["Cl"], row["Cd"], row["CmPitch"])
    except (KeyError, ValueError) as exc:
        raise MissingOutputError(f"unreadable coefficient row: {exc}", logs=str(exc)) from exc
    if not all(math.isfinite(v) for v in (coeff.cl, coeff.cd, coeff.cm)):
        raise TaskFailure("non-finite force coefficients",
                          logs=f"Floating point exception: final residual = nan at iteration {coeff.iteration}",
                          kind=ErrorKind.DIVERGENCE)
    return coeff


# ---------------------------------------------------------------- desk run + extraction

def run_desk_case(config: CaseConfig, ws: ProjectWorkspace, cfg: DeskSolverConfig = DeskSolverConfig(),
                  params: CaseParams = CaseParams(), diverge: bool = False, producer: str = "aerodynamics") -> str:
    """Write the solver output contract from the desk model.

    ``diverge`` emulates a blown-up run (NaN final row) for fault injection.
    """
    flow = run_desk_solver(config, cfg)
    if diverge:
        row = (cfg.iterations, math.nan, math.nan, math.nan)
    else:
        row = (cfg.iterations, flow.cd, flow.cl, flow.cm)
    rel = f"{config.case_id}/{COEFF_PATH}"
    ws.publish_text(rel, coefficient_text(config, [row], params.depth), producer=producer)
    return rel


def load_case_config(ws: ProjectWorkspace, case_id: str, consumer: str) -> CaseConfig:
    return CaseConfig.from_dict(ws.read_json_for(consumer, f"{case_id}/case.json")["config"])


def extract_results(ws: ProjectWorkspace, case_id: str, cfg: DeskSolverConfig = DeskSolverConfig(),
                    producer: str = "aerodynamics") -> FlowResult:
    config = load_case_config(ws, case_id, producer)
    if not ws.exists(f"{case_id}/{COEFF_PATH}") or ws.record(f"{case_id}/{COEFF_PATH}") is None:
        raise MissingOutputError(f"{case_id}: solver output missing",
                                 logs=f"cannot open file {COEFF_PATH}")
    coeff = parse_coefficients(ws.read_text_for(producer, f"{case_id}/{COEFF_PATH}"))
    delta, dstar, theta = flat_plate_boundary_layer(config.reynolds, config.chord, cfg)
    flow = FlowResult.build(coeff.cl, coeff.cd, coeff.cm, dstar, theta, converged=True, iterations=coeff.iteration)
    flow.check()
    base = f"{case_id}/{INTEGRATED}"
    ws.publish_text(f"{base}/force_coefficients.csv",
                    "case_id,airfoil,velocity,aoa,reynolds,cl,cd,cm,lift_to_drag,iterations\n"
                    f"{case_id},{config.airfoil},{config.velocity:g},{config.aoa:g},{config.reynolds:.6e},"
                    f"{flow.cl:.8f},{flow.cd:.8f},{flow.cm:.8f},{flow.lift_to_drag:.8f},{flow.iterations}\n",
                    producer=producer)
    ws.publish_text(f"{base}/boundary_layer.csv",
                    "case_id,x_over_c,delta,delta_star,theta,shape_factor,source\n"
                    f"{case_id},1.0,{delta:.8e},{dstar:.8e},{theta:.8e},{flow.shape_factor:.8f},flat_plate_turbulent\n",
                    producer=producer)
    mid, cp, _ = surface_pressure(config)
    ws.publish_text(f"{base}/cp_data.csv",
                    "x_over_c,y_over_c,cp\n" + "".join(f"{x:.6f},{y:.6f},{c:.6f}\n" for (x, y), c in zip(mid, cp)),
                    producer=producer)
    ws.publish_text(f"{case_id}/VTK/desk_{flow.iterations}/airfoil_surface.vtk",
                    vtk_surface(mid * config.chord, cp, 0.5 * RHO_AIR * config.velocity**2), producer=producer)
    publish_acoustics_inputs(ws, config, flow, delta, producer)
    return flow


def vtk_surface(points: np.ndarray, cp: np.ndarray, q: float) -> str:
    """Legacy ASCII VTK polyline of the wall with Cp and gauge pressure."""
    n = len(points)
    lines = ["# vtk DataFile Version 3.0", "airfoil surface", "ASCII", "DATASET POLYDATA", f"POINTS {n} double"]
    lines += [f"{x:.8e} {y:.8e} 0" for x, y in points]
    lines.append(f"LINES 1 {n + 2}")
    lines.append(" ".join(str(i) for i in [n + 1, *range(n), 0]))
    lines += [f"POINT_DATA {n}", "SCALARS Cp double 1", "LOOKUP_TABLE default"]
    lines += [f"{c:.8e}" for c in cp]
    lines += ["SCALARS p double 1", "LOOKUP_TABLE default"]
    lines += [f"{c * q:.8e}" for c in cp]
    return "\n".join(lines) + "\n"


def publish_acoustics_inputs(ws: ProjectWorkspace, config: CaseConfig, flow: FlowResult, delta: float,
                             producer: str = "aerodynamics", span: float | None = None) -> None:
    idea = ws.read_json_for(producer, "airfoil/idea.json")
    span = idea.get("span", 0.2) if span is None else span
    base = f"{config.case_id}/acoustics_data"
    ws.publish_json(f"{base}/flow_field.json", {
        "case_id": config.case_id, "airfoil": config.airfoil, "chord": config.chord, "span": span,
        "velocity": config.velocity, "aoa": config.aoa, "reynolds": config.reynolds,
        "kinematic_viscosity": config.kinematic_viscosity, "rho": RHO_AIR,
        "inlet_velocity": list(inlet_velocity(config.velocity, config.aoa)),
        "cl": flow.cl, "cd": flow.cd, "cm": flow.cm}, producer=producer, consumers=("acoustics",))
    ws.publish_json(f"{base}/bpm_input.json", {
        "chord": config.chord, "span": span, "velocity": config.velocity, "aoa": config.aoa,
        "delta_star_s": None, "delta_star_p": None, "observer_distance": 1.0, "theta_obs": 90.0,
        "phi_obs": 90.0, "kinematic_viscosity": config.kinematic_viscosity, "tripped": True},
        producer=producer, consumers=("acoustics",))
    ws.publish_json(f"{base}/boundary_layer.json", {
        "delta": delta, "delta_star": flow.delta_star, "theta": flow.theta, "shape_factor": flow.shape_factor,
        "source": "flat_plate_turbulent"}, producer=producer, consumers=("acoustics",))


# ---------------------------------------------------------------- external solver adapter

DEFAULT_TEMPLATES = {
    "mesh": "gmsh -2 {case_dir}/airfoil.geo -format msh2 -o {case_dir}/airfoil.msh",
    "convert": "{container} gmshToFoam airfoil.msh",
    "solve": "{container} {solver}",
    "export": "{container} foamToVTK -latestTime",
}
DEFAULT_CONTAINER = "docker run --rm -v {case_dir}:/case -w /case openfoam/openfoam11-paraview510"


@dataclass
class ExternalSolverAdapter:
    """Renders command templates and runs them; outputs follow the same file contract."""

    templates: dict = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))
    container: str = DEFAULT_CONTAINER
    runner: Callable = subprocess.run
    timeout: float = 3600.0

    def render(self, case_dir: Path, params: CaseParams = CaseParams()) -> list[tuple[str, list[str]]]:
        ctx = {"case_dir": str(case_dir), "solver": params.solver}
        ctx["container"] = self.container.format(**ctx)
        return [(step, shlex.split(tpl.format(**ctx))) for step, tpl in self.templates.items()]

    def run(self, case_dir: Path, params: CaseParams = CaseParams()) -> dict[str, str]:
        logs = {}
        for step, argv in self.render(case_dir, params):
            try:
                proc = self.runner(argv, cwd=case_dir, capture_output=True, text=True, timeout=self.timeout)
            except (OSError, subprocess.TimeoutExpired) as exc:
                raise TaskFailure(f"{step}: {exc}", logs=str(exc)) from exc
            logs[step] = (proc.stdout or "") + (proc.stderr or "")
            if proc.returncode != 0:
                raise TaskFailure(f"{step} exited with {proc.returncode}", logs=logs[step])
        return logs
