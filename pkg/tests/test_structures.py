import dataclasses
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from aeroforge.aero.desk import run_desk_solver
from aeroforge.domain import FlowResult, MaterialSpec, StructConfig
from aeroforge.geometry import GeometryError
from aeroforge.pipeline import bundled_spec
from aeroforge.planner import make_case
from aeroforge.structures import (LOAD_FACTORS, LoadCase, StructuralModel, SweepBounds, cruise_lift, desk_stress,
                                  evaluate, load_cases, mass, parse_results_csv, results_csv, run_sweep, sweep)

from oracles import cantilever_uniform

MODEL = StructuralModel("NACA4412", 0.1, 0.2)
FLOW = run_desk_solver(make_case("NACA4412", 25.0, 5.0, bundled_spec()))
CASES = load_cases(FLOW, 25.0, 0.1, 0.2)

configs = st.builds(StructConfig, st.floats(0.2, 2.0), st.floats(0.5, 2.0), st.floats(1.0, 3.0),
                    st.sampled_from([2, 3]), st.sampled_from([2, 3]))


def test_sweep_is_432_unique():
    s = sweep()
    assert len(s) == 432 == 3 * 6 * 6 * 2 * 2
    assert len(set(s)) == 432 and len({c.label for c in s}) == 432
    assert s == sweep()
    assert s[0] == StructConfig(0.2, 0.5, 1.0, 2, 2) and s[-1] == StructConfig(2.0, 2.0, 3.0, 3, 3)


def test_single_level_sweep():
    b = SweepBounds((1.0, 1.0, 1), (1.0, 1.0, 1), (2.0, 2.0, 1), (2,), (3,))
    assert sweep(b) == [StructConfig(1.0, 1.0, 2.0, 2, 3)]


def test_load_cases():
    by = {c.name: c for c in CASES}
    assert set(by) == set(LOAD_FACTORS) and by["cruise"].load_factor == 1.0
    assert by["landing"].load_factor == 3.0
    assert by["cruise"].aero_force == pytest.approx(0.5 * cruise_lift(FLOW, 25.0, 0.1, 0.2))
    assert cruise_lift(FLOW, 25.0, 0.1, 0.2) == pytest.approx(0.5 * 1.225 * 625 * 0.02 * FLOW.cl)
    cfg = StructConfig(1.0, 1.0, 2.0, 2, 2)
    cruise = desk_stress(cfg, by["cruise"], MODEL)
    landing = desk_stress(cfg, by["landing"], MODEL)
    assert landing.force == pytest.approx(3 * cruise.force)


def test_zero_lift_keeps_inertial_landing_load():
    flat = FlowResult.build(0.0, 0.01, 0.0, 1e-4, 5e-5)
    cases = {c.name: c for c in load_cases(flat, 25.0, 0.1, 0.2)}
    assert cases["cruise"].aero_force == 0
    frag = desk_stress(StructConfig(1.0, 1.0, 2.0, 2, 2), cases["landing"], MODEL)
    assert frag.force > 0 and frag.stress > 0
    none = desk_stress(StructConfig(1.0, 1.0, 2.0, 2, 2), LoadCase("zero", 1.0, 0.0, include_inertia=False), MODEL)
    assert none.stress == 0 and none.displacement == 0


def test_mass_against_volume_formula():
    cfg = StructConfig(1.0, 1.0, 2.0, 2, 2)
    sec = MODEL.section(cfg)
    expect = 2810 * (sec.shell_volume + sec.spar_volume + sec.rib_volume) * 1e3
    assert mass(cfg, MODEL) == pytest.approx(expect, rel=1e-12)
    heavy = dataclasses.replace(MODEL, material=MaterialSpec(density=5620.0))
    assert mass(cfg, heavy) == pytest.approx(2 * mass(cfg, MODEL), rel=1e-12)


def test_minimal_config_is_lightest():
    masses = {c: mass(c, MODEL) for c in sweep()}
    assert min(masses, key=masses.get) == StructConfig(0.2, 0.5, 1.0, 2, 2)
    lo, hi = min(masses.values()), max(masses.values())
    assert 78 * 0.75 <= lo and hi <= 178 * 1.25


AXES = ("spar_width", "rib_thickness", "shell_thickness", "n_spars", "n_ribs")


def test_mass_monotone_over_sweep_grid():
    grid = {c: mass(c, MODEL) for c in sweep()}
    for c, m in grid.items():
        for axis in AXES:
            for other in grid:
                if getattr(other, axis) > getattr(c, axis) and all(
                        getattr(other, a) == getattr(c, a) for a in AXES if a != axis):
                    assert grid[other] > m


@given(configs, st.sampled_from(AXES[:3]), st.floats(0.01, 0.3))
def test_mass_monotone_property(cfg, axis, step):
    hi = {"spar_width": 2.0, "rib_thickness": 2.0, "shell_thickness": 3.0}[axis]
    grown = min(getattr(cfg, axis) + step, hi)
    assume(grown - getattr(cfg, axis) > 1e-9)  # clamping at the bound can leave a one-ulp step
    assert mass(dataclasses.replace(cfg, **{axis: grown}), MODEL) > mass(cfg, MODEL)


def test_stress_matches_cantilever_oracle():
    cfg = StructConfig(1.0, 1.0, 2.0, 2, 2)
    case = LoadCase("maneuver", 2.5, 3.0)
    sec = MODEL.section(cfg)
    m = mass(cfg, MODEL) * 1e-3
    force = 2.5 * (3.0 + m * 9.80665)
    sigma, delta = cantilever_uniform(force, 0.1, 71.7e9, sec.second_moment, sec.y_max)
    frag = desk_stress(cfg, case, MODEL)
    assert frag.stress == pytest.approx(sigma * 1e-6, rel=1e-12)
    assert frag.displacement == pytest.approx(delta * 1e3, rel=1e-12)


@given(configs, st.floats(0.5, 5.0))
def test_stress_linear_in_load_factor(cfg, n):
    base = desk_stress(cfg, LoadCase("x", 1.0, 4.0), MODEL)
    scaled = desk_stress(cfg, LoadCase("x", 2 * n, 4.0), MODEL)
    assert scaled.stress == pytest.approx(2 * n * base.stress, rel=1e-12)
    assert scaled.displacement == pytest.approx(2 * n * base.displacement, rel=1e-12)


@given(configs, st.floats(0.05, 0.5))
def test_thicker_shell_lowers_stress(cfg, step):
    thicker = dataclasses.replace(cfg, shell_thickness=min(cfg.shell_thickness + step, 3.0))
    case = LoadCase("x", 1.0, 4.0, include_inertia=False)
    if thicker != cfg:
        assert MODEL.section(thicker).second_moment > MODEL.section(cfg).second_moment
        assert desk_stress(thicker, case, MODEL).stress < desk_stress(cfg, case, MODEL).stress


@given(configs)
def test_safety_factor_identity(cfg):
    r = evaluate(cfg, CASES, MODEL)
    assert r.safety_factor * r.max_stress == pytest.approx(503.0, rel=1e-12)
    assert r.violations(503.0) == []


def test_full_sweep_all_succeed(no_sleep):
    sleep, waits = no_sleep
    out = run_sweep(sweep(), CASES, MODEL, max_parallel=4, sleep=sleep)
    assert out.success_count == 432 and not out.failures and waits == []
    assert len({r.config for r in out.results}) == 432


def test_sweep_with_injected_failure(no_sleep):
    sleep, waits = no_sleep
    target = sweep()[7]

    def evaluator(cfg, cases, model):
        if cfg == target:
            raise GeometryError("gmsh: no elements in surface")
        return evaluate(cfg, cases, model)

    out = run_sweep(sweep(), CASES, MODEL, evaluator=evaluator, sleep=sleep)
    assert out.success_count == 431 and list(out.failures) == [target.label]
    assert out.attempts[target.label] == 3 and waits == [2.0, 4.0]


def test_empty_sweep_rejected():
    with pytest.raises(ValueError):
        run_sweep([], CASES, MODEL)


def test_csv_round_trip():
    rs = [evaluate(c, CASES, MODEL) for c in sweep()[:5]]
    back = parse_results_csv(results_csv(rs))
    for a, b in zip(rs, back):
        assert a.config == b.config
        assert b.mass == pytest.approx(a.mass, rel=1e-9) and b.max_stress == pytest.approx(a.max_stress, rel=1e-9)
    with pytest.raises(ValueError):
        parse_results_csv("a,b\n1,2\n")


def test_permutation_invariance_of_sweep_results():
    subset = sweep()[::37]
    forward = {r.config: r.mass for r in run_sweep(subset, CASES, MODEL, sleep=lambda _: None).results}
    backward = {r.config: r.mass for r in run_sweep(subset[::-1], CASES, MODEL, sleep=lambda _: None).results}
    assert forward == backward
