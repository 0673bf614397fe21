import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from aeroforge.domain import (AcousticResult, CaseConfig, DesignMatrix, FlowResult, MaterialSpec, RequirementSpec,
                              StructConfig, StructResult, ValidationError, naca_digits, normalize_role, validate)
from aeroforge.pipeline import bundled_spec


def _spec(**kw):
    base = dict(objective_text="quiet efficient wing", chord=0.1, span=0.2, velocities=(25.0, 30.0, 35.0),
                aoa_range=(0.0, 6.0), airfoil_candidates=("NACA0012", "NACA4412"))
    base.update(kw)
    return RequirementSpec(**base)


def test_uav_prompt_values_valid():
    spec = bundled_spec()
    assert (spec.chord, spec.span, spec.min_safety_factor) == (0.1, 0.2, 1.5)
    assert validate(spec) == []


def test_zero_chord_reported():
    out = validate(_spec(chord=0.0))
    assert out == ["chord: chord>0 violated"]


def test_weights_must_sum_to_one():
    out = validate(_spec(aero_weight=0.7, noise_weight=0.4))
    assert any("sum=1" in v for v in out)


def test_bad_candidates_and_ranges():
    out = validate(_spec(airfoil_candidates=("NACA23012",), aoa_range=(5.0, 1.0), velocities=(-1.0,)))
    assert len(out) == 3


def test_material_defaults_are_7075():
    m = MaterialSpec()
    assert m.density == 2810.0 and m.youngs_modulus == 71.7e9 and m.violations() == []
    assert len(MaterialSpec(poisson_ratio=0.5, density=0).violations()) == 2


def test_check_raises_with_violations():
    with pytest.raises(ValidationError) as err:
        _spec(span=-1).check()
    assert err.value.violations == ["span: span>0 violated"]


def test_spec_json_round_trip():
    spec = bundled_spec()
    back = RequirementSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert back == spec


def test_roles_and_digits():
    assert normalize_role("aero") == "aerodynamics"
    with pytest.raises(ValueError):
        normalize_role("pilot")
    assert naca_digits("naca 2412") == "2412"


def test_case_reynolds_consistency():
    good = CaseConfig("c1", "NACA0012", 0.1, 25.0, 0.0, 25 * 0.1 / 8.57e-6)
    assert good.violations() == []
    bad = CaseConfig("c1", "NACA0012", 0.1, 25.0, 0.0, 1e5)
    assert any("reynolds" in v for v in bad.violations())


def test_matrix_unique_ids():
    c = CaseConfig("c1", "NACA0012", 0.1, 25.0, 0.0, 25 * 0.1 / 8.57e-6)
    assert any("unique" in v for v in DesignMatrix((c, c)).violations())
    m = DesignMatrix((c,))
    assert DesignMatrix.from_dict(m.to_dict()) == m and len(m) == 1


def test_flow_result_derived_fields():
    f = FlowResult.build(0.5, 0.01, -0.05, 2e-4, 1e-4)
    assert f.lift_to_drag == pytest.approx(50.0) and f.shape_factor == pytest.approx(2.0)
    assert f.violations() == []
    assert "cd: cd>0 violated" in FlowResult(0.5, 0.0, 0.0, math.nan, 1e-4, 1e-4, 1.0).violations()
    assert any("H>=1" in v for v in FlowResult.build(0.5, 0.01, 0, 1e-4, 2e-4).violations())


def test_acoustic_result_invariants():
    ok = AcousticResult((100.0, 200.0), {"total": (50.0, 60.0), "tbl": (49.0, 59.0)}, 61.0, 55.0,
                        ((100.0, 50.0),), 1.22)
    assert ok.violations() == []
    assert AcousticResult.from_dict(json.loads(json.dumps(ok.to_dict()))) == ok
    bad = AcousticResult((200.0, 100.0), {"total": (50.0, 60.0), "tbl": (51.0, 59.0)}, 55.0, 50.0, (), 1.22)
    assert len(bad.violations()) == 3


def test_struct_config_bounds():
    assert StructConfig(1.0, 1.0, 2.0, 2, 3).violations() == []
    assert len(StructConfig(0.1, 3.0, 2.0, 4, 1).violations()) == 4
    assert StructConfig(1.0, 1.0, 2.0, 2, 3).label == "sw1.00_rt1.00_st2.00_ns2_nr3"


def test_struct_result_safety_factor():
    cfg = StructConfig(1.0, 1.0, 2.0, 2, 3)
    r = StructResult(cfg, {"cruise": 1.0, "gust": 2.0}, {"cruise": 0.1}, 80.0, 503 / 2.0)
    assert r.max_stress == 2.0 and r.violations(503.0) == []
    assert r.violations(400.0) == ["safety_factor: =yield/max stress violated"]
    assert StructResult.from_dict(json.loads(json.dumps(r.to_dict()))) == r


@given(st.floats(0.2, 2.0), st.floats(0.5, 2.0), st.floats(1.0, 3.0), st.sampled_from([2, 3]),
       st.sampled_from([2, 3]))
def test_struct_config_round_trip(sw, rt, s, ns, nr):
    cfg = StructConfig(sw, rt, s, ns, nr)
    assert cfg.violations() == []
    assert StructConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@given(st.floats(0.01, 2.0), st.floats(0.01, 5.0), st.lists(st.floats(1, 80), min_size=1, max_size=4),
       st.floats(0, 1))
def test_spec_round_trip_property(chord, span, vels, w):
    spec = _spec(chord=chord, span=span, velocities=tuple(vels), aero_weight=w, noise_weight=1 - w)
    assert validate(spec) == []
    assert RequirementSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec
