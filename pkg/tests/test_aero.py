import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aeroforge.aero.case import (CaseParams, ExternalSolverAdapter, MissingOutputError, build_case, case_documents,
                                 coefficient_text, extract_results, inlet_velocity, parse_coefficients, reynolds,
                                 run_desk_case)
from aeroforge.aero.desk import (lift_coefficient, moment_coefficient, panel_solution, run_desk_solver,
                                 zero_lift_angle)
from aeroforge.domain import CaseConfig
from aeroforge.errors import ErrorKind, TaskFailure
from aeroforge.geometry import generate
from aeroforge.pipeline import bundled_spec
from aeroforge.planner import make_case
from aeroforge.recovery import ErrorClass, SolverParams, classify_exception, strategy_for
from aeroforge.workspace import ProjectWorkspace

AIRFOILS = ("NACA0012", "NACA0015", "NACA2412", "NACA4412")


def _case(airfoil="NACA0012", u=25.0, aoa=0.0):
    return make_case(airfoil, u, aoa, bundled_spec())


def test_inlet_velocity():
    assert inlet_velocity(25, 0) == (25.0, 0.0, 0.0)
    ux, uy, _ = inlet_velocity(30, 3)
    assert (ux, uy) == (pytest.approx(29.9589, abs=1e-4), pytest.approx(1.5701, abs=1e-4))
    with pytest.raises(ValueError):
        inlet_velocity(-1, 0)


@given(st.floats(0, 80), st.floats(-20, 20))
def test_inlet_norm(u, a):
    assert math.hypot(*inlet_velocity(u, a)[:2]) == pytest.approx(u, rel=1e-12, abs=1e-12)


def test_reynolds_table_values():
    assert reynolds(25, 0.1, 8.59e-6) == pytest.approx(2.91e5, rel=5e-3)
    assert reynolds(35, 0.1, 8.57e-6) == pytest.approx(4.08e5, rel=5e-3)
    assert reynolds(0, 0.1, 8.57e-6) == 0


def _thin_airfoil_oracle(m, p, n=400_001):
    # midpoint rule in theta over the full camber-slope integral
    th = (np.arange(n) + 0.5) * math.pi / n
    x = 0.5 * (1 - np.cos(th))
    slope = np.where(x < p, 2 * m / p**2 * (p - x), 2 * m / (1 - p) ** 2 * (p - x))
    dth = math.pi / n
    alpha0 = -np.sum(slope * (np.cos(th) - 1)) * dth / math.pi
    a1 = 2 / math.pi * np.sum(slope * np.cos(th)) * dth
    a2 = 2 / math.pi * np.sum(slope * np.cos(2 * th)) * dth
    return math.degrees(alpha0), math.pi / 4 * (a2 - a1)


@pytest.mark.parametrize("name,m,p", [("NACA2412", 0.02, 0.4), ("NACA4412", 0.04, 0.4)])
def test_thin_airfoil_against_oracle(name, m, p):
    a0, cm = _thin_airfoil_oracle(m, p)
    assert zero_lift_angle(name) == pytest.approx(a0, abs=1e-4)
    assert moment_coefficient(name) == pytest.approx(cm, abs=1e-5)


def test_known_thin_airfoil_values():
    assert zero_lift_angle("NACA2412") == pytest.approx(-2.08, abs=0.01)
    assert zero_lift_angle("NACA4412") == pytest.approx(-4.15, abs=0.01)


def test_symmetric_section():
    f = run_desk_solver(_case("NACA0012", 25, 0))
    assert f.cl == 0 and f.cm == 0 and f.cd > 0


@pytest.mark.parametrize("name", AIRFOILS)
def test_cl_monotone_and_cm_sign(name):
    cls = [run_desk_solver(_case(name, 30, a)).cl for a in range(0, 7)]
    assert all(b > a for a, b in zip(cls, cls[1:]))
    cm = run_desk_solver(_case(name, 30, 3)).cm
    if name.startswith("NACA00"):
        assert cm == 0
    else:
        assert cm < 0


@given(st.floats(-10, 10), st.sampled_from(["NACA0012", "NACA0015"]))
def test_symmetric_airfoil_odd_in_alpha(a, name):
    assert lift_coefficient(name, -a) == -lift_coefficient(name, a)


@given(st.sampled_from(AIRFOILS), st.sampled_from([25.0, 30.0, 35.0]), st.integers(0, 6))
def test_flow_results_consistent(name, u, a):
    f = run_desk_solver(_case(name, u, a))
    assert f.violations() == []
    assert f.lift_to_drag == pytest.approx(f.cl / f.cd, rel=1e-12)


def test_panel_method_close_to_thin_airfoil():
    coords = generate("NACA0012", 121)
    _, cp, cl = panel_solution(coords, 4.0)
    # thickness raises inviscid lift a few percent above 2*pi*alpha
    assert cl == pytest.approx(2 * math.pi * math.radians(4.0), rel=0.12)
    assert cp.max() == pytest.approx(1.0, abs=0.05)
    _, cp0, cl0 = panel_solution(coords, 0.0)
    assert abs(cl0) < 1e-8


def test_parse_fixture_coefficients():
    cfg = _case("NACA4412", 25, 5)
    text = coefficient_text(cfg, [(2999, 0.05, 0.90, -0.1), (3000, 0.0325, 0.96, -0.105)])
    c = parse_coefficients(text)
    assert (c.iteration, c.cl, c.cd, c.cm) == (3000, 0.96, 0.0325, -0.105)


def test_parse_nan_is_divergence():
    cfg = _case()
    text = coefficient_text(cfg, [(3000, math.nan, math.nan, math.nan)])
    with pytest.raises(TaskFailure) as err:
        parse_coefficients(text)
    assert classify_exception(err.value).kind is ErrorKind.DIVERGENCE


def test_parse_empty_is_missing_output():
    with pytest.raises(MissingOutputError):
        parse_coefficients("")
    with pytest.raises(MissingOutputError):
        parse_coefficients("# Time Cd Cl\n1 abc 2\n")


def test_case_documents_deterministic_and_complete():
    cfg = _case()
    a, b = case_documents(cfg), case_documents(cfg)
    assert a == b
    dirs = {k.split("/")[0] for k in a if "/" in k}
    assert {"constant", "system", "0"} <= dirs and "Allrun" in a


def test_recovery_relaxation_written():
    params = CaseParams().with_recovery(
        strategy_for(ErrorClass(ErrorKind.DIVERGENCE), 1, SolverParams()).params)
    fv = case_documents(_case(), params)["system/fvSolution"]
    assert "p               0.3;" in fv and "U               0.2;" in fv
    assert "deltaT          0.5;" in case_documents(_case(), params)["system/controlDict"]


def test_boundary_recovery_remaps_patches():
    bad = CaseParams(patch_types=(("walls", "patch"), ("front", "patch")))
    fixed = bad.with_recovery(strategy_for(ErrorClass(ErrorKind.BOUNDARY), 1, SolverParams()).params)
    assert dict(fixed.patch_types)["walls"] == "wall" and dict(fixed.patch_types)["front"] == "empty"


@pytest.fixture
def ws(tmp_path):
    return ProjectWorkspace.init_project(bundled_spec(), tmp_path / "p")


def test_build_idempotent_and_extract(ws):
    cfg = _case("NACA2412", 30, 5)
    build_case(cfg, ws)
    before = (ws.root / "provenance.log").read_text()
    build_case(cfg, ws)
    assert (ws.root / "provenance.log").read_text() == before
    run_desk_case(cfg, ws)
    flow = extract_results(ws, cfg.case_id)
    direct = run_desk_solver(cfg)
    assert flow.cl == pytest.approx(direct.cl, rel=1e-7) and flow.cd == pytest.approx(direct.cd, rel=1e-7)
    for rel in ("postProcessing/integrated/force_coefficients.csv", "acoustics_data/bpm_input.json",
                "postProcessing/integrated/cp_data.csv"):
        assert ws.record(f"{cfg.case_id}/{rel}") is not None


def test_extract_without_output_and_divergent(ws):
    cfg = _case()
    build_case(cfg, ws)
    with pytest.raises(MissingOutputError):
        extract_results(ws, cfg.case_id)
    run_desk_case(cfg, ws, diverge=True)
    with pytest.raises(TaskFailure) as err:
        extract_results(ws, cfg.case_id)
    assert err.value.kind is ErrorKind.DIVERGENCE


def test_external_adapter_renders_and_reports(tmp_path):
    calls = []

    class Proc:
        def __init__(self, rc, out):
            self.returncode, self.stdout, self.stderr = rc, out, ""

    def runner(argv, **kw):
        calls.append(argv)
        return Proc(1 if "simpleFoam" in argv else 0, "Floating point exception" if "simpleFoam" in argv else "ok")

    adapter = ExternalSolverAdapter(runner=runner)
    steps = adapter.render(tmp_path)
    assert [s for s, _ in steps] == ["mesh", "convert", "solve", "export"]
    assert steps[0][1][0] == "gmsh" and "docker" in steps[1][1]
    with pytest.raises(TaskFailure) as err:
        adapter.run(tmp_path)
    assert classify_exception(err.value).kind is ErrorKind.DIVERGENCE and len(calls) == 3


def test_case_config_rejects_mismatched_re():
    assert CaseConfig("x", "NACA0012", 0.1, 25, 0, 1.0).violations()
