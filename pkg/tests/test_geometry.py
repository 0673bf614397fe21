import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from aeroforge.domain import StructConfig
from aeroforge.geometry import (AirfoilCoordinates, AirfoilSpec, GeometryError, camber, coordinates_csv, generate,
                                geo_text, selig_text, thickness, wing_section_properties)

from oracles import naca_camber, naca_half_thickness

BENCHMARK = ("NACA0012", "NACA0015", "NACA2412", "NACA4412")


def test_spec_parsing():
    s = AirfoilSpec.from_designator("naca 4412")
    assert (s.designator, s.m, s.p, s.t) == ("NACA4412", 0.04, 0.4, 0.12)
    sym = AirfoilSpec.from_designator("0012")
    assert sym.m == 0 and sym.p == 0 and sym.t == 0.12


@pytest.mark.parametrize("bad", ["NACA12", "NACA23012", "4x12", ""])
def test_bad_designators(bad):
    with pytest.raises(ValueError):
        AirfoilSpec.from_designator(bad)


def test_camber_without_position_rejected():
    with pytest.raises(GeometryError):
        AirfoilSpec.from_designator("NACA4012")
    with pytest.raises(GeometryError):
        camber(0.3, 0.04, 0.0)


def test_thickness_examples():
    assert thickness(0.0, 0.12) == 0.0
    assert thickness(1.0, 0.12) == pytest.approx(0.00126, abs=1e-12)
    xs = np.linspace(0, 1, 100_001)
    y = thickness(xs, 0.12)
    assert 2 * y.max() == pytest.approx(0.120, abs=1e-3)
    assert xs[np.argmax(y)] == pytest.approx(0.30, abs=0.01)


@pytest.mark.parametrize("x", [-0.1, 1.01, math.nan])
def test_thickness_domain(x):
    with pytest.raises(GeometryError):
        thickness(x, 0.12)
    with pytest.raises(GeometryError):
        thickness(0.5, 0.0)


def test_camber_examples():
    yc, dyc = camber(0.4, 0.04, 0.4)
    assert yc == pytest.approx(0.04, abs=1e-15)
    assert dyc == pytest.approx(0.0, abs=1e-15)
    eps = 1e-7
    assert abs(camber(0.4 - eps, 0.04, 0.4)[0] - camber(0.4 + eps, 0.04, 0.4)[0]) < 1e-9
    xs = np.linspace(0, 1, 11)
    assert np.all(camber(xs, 0.0, 0.0)[0] == 0)


@given(st.floats(0, 1), st.floats(0.01, 0.4))
def test_thickness_matches_oracle(x, t):
    assert thickness(x, t) == pytest.approx(naca_half_thickness(x, t), abs=1e-14)


@given(st.floats(0, 1), st.integers(1, 9), st.integers(1, 9))
def test_camber_matches_oracle_and_slope(x, m_digit, p_digit):
    m, p = m_digit / 100, p_digit / 10
    yc, dyc = camber(x, m, p)
    assert yc == pytest.approx(naca_camber(x, m, p), abs=1e-14)
    h = 1e-6
    lo, hi = max(0.0, x - h), min(1.0, x + h)
    if not (lo < p < hi):
        fd = (naca_camber(hi, m, p) - naca_camber(lo, m, p)) / (hi - lo)
        assert dyc == pytest.approx(fd, abs=5e-5)  # one-sided at the ends


def test_symmetric_section_mirror_exact():
    c = generate("NACA0012")
    assert c.upper[:, 0].min() == 0.0 and c.upper[:, 0].max() == 1.0
    assert np.max(np.abs(c.upper[:, 1] + c.lower[:, 1])) <= 1e-12
    assert np.array_equal(c.upper[:, 0], c.lower[:, 0])


@pytest.mark.parametrize("name", BENCHMARK)
def test_invariants(name):
    c = generate(name, 161)
    for side in (c.upper, c.lower):
        # normal thickness offsets push cambered surfaces a hair past the chord ends
        assert side[:, 0].min() >= -1e-3 and side[:, 0].max() <= 1 + 1e-3
    assert np.allclose(c.upper[0], c.lower[0], atol=1e-6)
    # trailing edge finite by default; x stations meet at the chord end
    assert abs(c.upper[-1, 0] - c.lower[-1, 0]) < 2e-3
    assert c.is_simple()
    spec = AirfoilSpec.from_designator(name)
    assert c.max_thickness(100_001) == pytest.approx(spec.t, abs=1e-3)


def test_cambered_line_nonnegative_and_max():
    c = generate("NACA4412", 201)
    assert np.all(c.camber_line[:, 1] >= 0)
    assert c.camber_line[:, 1].max() == pytest.approx(0.04, abs=1e-4)


def test_area_against_quadrature():
    exact = 2 * quad(lambda x: naca_half_thickness(x, 0.12), 0, 1, epsabs=1e-13)[0]
    c = generate("NACA0012", 2001)
    assert c.area() == pytest.approx(exact, rel=1e-4)
    assert exact == pytest.approx(0.0822, abs=1e-4)
    closed = 2 * quad(lambda x: thickness(x, 0.12, closed_te=True), 0, 1, epsabs=1e-13)[0]
    assert closed == pytest.approx(0.0817, abs=1e-4)


def test_closed_trailing_edge_flag():
    c = generate("NACA0012", closed_te=True)
    assert c.trailing_edge_gap() < 1e-6
    assert generate("NACA0012").trailing_edge_gap() == pytest.approx(0.00252, abs=1e-5)


def test_generate_rejects_coarse_grid():
    with pytest.raises(GeometryError):
        generate("NACA0012", 10)


@given(st.sampled_from(BENCHMARK), st.integers(20, 300))
def test_generate_deterministic(name, n):
    a, b = generate(name, n), generate(name, n)
    assert np.array_equal(a.upper, b.upper) and np.array_equal(a.lower, b.lower)
    assert a.n_points == n


def test_text_outputs():
    c = generate("NACA2412", 41)
    sel = selig_text(c).splitlines()
    assert sel[0] == "NACA2412" and len(sel) == 1 + len(c.polygon())
    rows = coordinates_csv(c).splitlines()
    assert rows[0] == "surface,x,y" and len(rows) == 1 + 2 * 41
    geo = geo_text(c, 0.1)
    assert "Physical Curve(\"walls\")" in geo and geo.count("Point(") == len(c.polygon())


def _rectangle(h=0.1):
    upper = np.array([[0.0, h / 2], [1.0, h / 2]])
    lower = np.array([[0.0, -h / 2], [1.0, -h / 2]])
    return AirfoilCoordinates(upper, lower, name="rect")


def test_rectangle_section_closed_form():
    cfg = StructConfig(1.0, 1.0, 2.0, 2, 3)
    ts, ws, tr = 2e-3, 1e-3, 1e-3
    span, h = 0.5, 0.1
    props = wing_section_properties(_rectangle(h), cfg, chord=1.0, span=span)
    spar_h = h - 2 * ts
    i_shell = 2 * ts * (h / 2) ** 2 + 2 * ts * h**3 / 12
    i_spar = 2 * ws * spar_h**3 / 12
    assert props.centroid_y == pytest.approx(0.0, abs=1e-15)
    assert props.second_moment == pytest.approx(i_shell + i_spar, rel=1e-12)
    assert props.shell_volume == pytest.approx(ts * 2.2 * span, rel=1e-12)
    assert props.spar_volume == pytest.approx(2 * ws * spar_h * span, rel=1e-12)
    assert props.rib_volume == pytest.approx(3 * tr * (h - 2.2 * ts), rel=1e-12)
    assert props.y_max == pytest.approx(h / 2)


def test_section_linearity_and_zero_shell():
    coords = generate("NACA4412")
    cfg = StructConfig(1.0, 1.0, 1.5, 2, 2)
    a = wing_section_properties(coords, cfg, 0.1, 0.1)
    b = wing_section_properties(coords, cfg, 0.1, 0.2)
    assert b.shell_volume + b.spar_volume == pytest.approx(2 * (a.shell_volume + a.spar_volume))
    assert b.rib_volume == a.rib_volume
    zero = wing_section_properties(coords, StructConfig(1.0, 1.0, 0.0, 2, 2), 0.1, 0.1)
    assert zero.shell_volume == 0.0


def test_section_rejects_oversized_members():
    coords = generate("NACA0012")
    with pytest.raises(GeometryError):
        wing_section_properties(coords, StructConfig(1.0, 1.0, 7.0, 2, 2), 0.1, 0.1)
    with pytest.raises(GeometryError):
        wing_section_properties(coords, StructConfig(50.0, 1.0, 1.0, 3, 2), 0.1, 0.1)
