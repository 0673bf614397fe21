"""Deterministic desk-scale aerodynamic model.

Lift and moment come from thin-airfoil theory applied to the NACA camber
line, drag from a turbulent flat-plate skin friction with a thickness form
factor plus a lift-dependent term.  A constant-strength source/vortex panel
method supplies surface pressure distributions for post-processing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from ..domain import CaseConfig, FlowResult
from ..geometry import AirfoilCoordinates, AirfoilSpec, camber, cached_airfoil


@dataclass(frozen=True)
class DeskSolverConfig:
    cf_coefficient: float = 0.074
    cf_exponent: float = -0.2
    form_factor_linear: float = 2.0
    form_factor_quartic: float = 60.0
    induced_factor: float = 0.03
    iterations: int = 3000
    bl_coefficient: float = 0.37


def skin_friction(re: float, cfg: DeskSolverConfig = DeskSolverConfig()) -> float:
    return cfg.cf_coefficient * re**cfg.cf_exponent


def form_factor(t: float, cfg: DeskSolverConfig = DeskSolverConfig()) -> float:
    return 1.0 + cfg.form_factor_linear * t + cfg.form_factor_quartic * t**4


def _slope_theta(th: float, m: float, p: float) -> float:
    x = 0.5 * (1.0 - math.cos(th))
    return camber(min(max(x, 0.0), 1.0), m, p)[1]


@lru_cache(maxsize=64)
def thin_airfoil_coefficients(m: float, p: float) -> tuple[float, float, float]:
    """Return (zero-lift angle [rad], A1, A2) of the camber line's Fourier series."""
    if m == 0:
        return 0.0, 0.0, 0.0
    th_p = math.acos(1.0 - 2.0 * p)

    def integral(fn):
        a = quad(lambda th: _slope_theta(th, m, p) * fn(th), 0.0, th_p, epsabs=1e-13, epsrel=1e-12)[0]
        b = quad(lambda th: _slope_theta(th, m, p) * fn(th), th_p, math.pi, epsabs=1e-13, epsrel=1e-12)[0]
        return a + b

    alpha_l0 = -integral(lambda th: math.cos(th) - 1.0) / math.pi
    a1 = 2.0 / math.pi * integral(math.cos)
    a2 = 2.0 / math.pi * integral(lambda th: math.cos(2 * th))
    return alpha_l0, a1, a2


def zero_lift_angle(airfoil: str) -> float:
    """Zero-lift angle in degrees."""
    spec = AirfoilSpec.from_designator(airfoil)
    return math.degrees(thin_airfoil_coefficients(spec.m, spec.p)[0])


def lift_coefficient(airfoil: str, aoa_deg: float) -> float:
    spec = AirfoilSpec.from_designator(airfoil)
    alpha_l0 = thin_airfoil_coefficients(spec.m, spec.p)[0]
    return 2.0 * math.pi * (math.radians(aoa_deg) - alpha_l0)


def moment_coefficient(airfoil: str) -> float:
    """Quarter-chord pitching moment (independent of incidence in thin-airfoil theory)."""
    spec = AirfoilSpec.from_designator(airfoil)
    _, a1, a2 = thin_airfoil_coefficients(spec.m, spec.p)
    return math.pi / 4.0 * (a2 - a1)


def flat_plate_boundary_layer(re: float, chord: float, cfg: DeskSolverConfig = DeskSolverConfig()):
    """Turbulent flat-plate thicknesses at the trailing edge: (delta, delta*, theta)."""
    delta = cfg.bl_coefficient * chord * re**-0.2
    return delta, delta / 8.0, 7.0 * delta / 72.0


def run_desk_solver(config: CaseConfig, cfg: DeskSolverConfig = DeskSolverConfig()) -> FlowResult:
    spec = AirfoilSpec.from_designator(config.airfoil)
    cl = lift_coefficient(config.airfoil, config.aoa)
    cd = 2.0 * skin_friction(config.reynolds, cfg) * form_factor(spec.t, cfg) + cfg.induced_factor * cl**2
    cm = moment_coefficient(config.airfoil)
    _, dstar, theta = flat_plate_boundary_layer(config.reynolds, config.chord, cfg)
    return FlowResult.build(cl, cd, cm, dstar, theta, converged=True, iterations=cfg.iterations)


def panel_solution(coords: AirfoilCoordinates, aoa_deg: float):
    """Hess-Smith panel method.

    Returns panel midpoints (chord-normalised), surface pressure coefficient
    and the inviscid lift coefficient from the circulation.
    """
    pts = coords.polygon()[::-1]  # lower TE -> LE -> upper TE
    xb, yb = pts[:, 0], pts[:, 1]
    n = len(xb) - 1
    alpha = math.radians(aoa_deg)
    xm = 0.5 * (xb[:-1] + xb[1:])
    ym = 0.5 * (yb[:-1] + yb[1:])
    dx, dy = np.diff(xb), np.diff(yb)
    length = np.hypot(dx, dy)
    th = np.arctan2(dy, dx)

    dxj = xm[:, None] - xb[None, :-1]
    dxjp = xm[:, None] - xb[None, 1:]
    dyj = ym[:, None] - yb[None, :-1]
    dyjp = ym[:, None] - yb[None, 1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        flog = 0.5 * np.log((dxjp**2 + dyjp**2) / (dxj**2 + dyj**2))
    ftan = np.arctan2(dyjp * dxj - dxjp * dyj, dxjp * dxj + dyjp * dyj)
    np.fill_diagonal(flog, 0.0)
    np.fill_diagonal(ftan, math.pi)
    dth = th[:, None] - th[None, :]
    ct, st = np.cos(dth), np.sin(dth)
    a = st * flog + ct * ftan
    b = ct * flog - st * ftan

    mat = np.zeros((n + 1, n + 1))
    rhs = np.zeros(n + 1)
    mat[:n, :n] = a
    mat[:n, n] = b.sum(axis=1)
    rhs[:n] = np.sin(th - alpha)
    for i in (0, n - 1):
        mat[n, :n] -= b[i]
        mat[n, n] += a[i].sum()
    rhs[n] = -math.cos(th[0] - alpha) - math.cos(th[n - 1] - alpha)
    sol = np.linalg.solve(mat, rhs)
    q, gamma = sol[:n], sol[n]

    vt = np.cos(th - alpha) + (st * ftan - ct * flog) @ q + gamma * (st * flog + ct * ftan).sum(axis=1)
    cp = 1.0 - vt**2
    # the solved strengths carry a 1/(2*pi) scaling
    cl = 4.0 * math.pi * gamma * float(length.sum())
    return np.column_stack([xm, ym]), cp, cl


def surface_pressure(config: CaseConfig, n_points: int = 81):
    coords = cached_airfoil(config.airfoil, n_points)
    return panel_solution(coords, config.aoa)
