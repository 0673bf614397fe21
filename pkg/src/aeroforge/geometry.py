"""NACA 4-digit airfoil generation and idealised wing-section properties."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .domain import StructConfig, naca_digits

# Thickness polynomial coefficients; the last one differs for a closed trailing edge.
A0, A1, A2, A3 = 0.2969, -0.1260, -0.3516, 0.2843
A4_OPEN = -0.1015
A4_CLOSED = -0.1036

DEFAULT_SPAR_STATIONS = (0.2, 0.6)


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class AirfoilSpec:
    designator: str
    m: float
    p: float
    t: float

    @classmethod
    def from_designator(cls, designator: str) -> "AirfoilSpec":
        digits = naca_digits(designator)
        m = int(digits[0]) / 100.0
        p = int(digits[1]) / 10.0
        t = int(digits[2:]) / 100.0
        if m == 0.0:
            p = 0.0
        if m > 0 and p == 0:
            raise GeometryError(f"{designator}: camber without a camber position")
        return cls(f"NACA{digits}", m, p, t)


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 1) or np.any(~np.isfinite(x)):
        raise GeometryError("x must lie in [0, 1]")
    return x


def thickness(x, t: float, closed_te: bool = False):
    """Half-thickness y_t at chord fraction ``x`` for thickness ratio ``t``."""
    if not t > 0:
        raise GeometryError("thickness ratio must be positive")
    x = _check_x(x)
    a4 = A4_CLOSED if closed_te else A4_OPEN
    y = 5.0 * t * (A0 * np.sqrt(x) + A1 * x + A2 * x**2 + A3 * x**3 + a4 * x**4)
    return float(y) if y.ndim == 0 else y


def camber(x, m: float, p: float):
    """Mean camber line ordinate and slope, piecewise parabolic about x=p."""
    if not 0 <= p < 1:
        raise GeometryError("camber position must satisfy 0 <= p < 1")
    if m > 0 and p == 0:
        raise GeometryError("m > 0 requires p > 0")
    x = _check_x(x)
    if m == 0:
        yc = np.zeros_like(x)
        dyc = np.zeros_like(x)
    else:
        front = x <= p
        yc = np.where(front, m / p**2 * (2 * p * x - x**2),
                      m / (1 - p) ** 2 * ((1 - 2 * p) + 2 * p * x - x**2))
        dyc = np.where(front, 2 * m / p**2 * (p - x), 2 * m / (1 - p) ** 2 * (p - x))
    if yc.ndim == 0:
        return float(yc), float(dyc)
    return yc, dyc


def cosine_stations(n_points: int) -> np.ndarray:
    beta = np.linspace(0.0, math.pi, n_points)
    x = 0.5 * (1.0 - np.cos(beta))
    x[0], x[-1] = 0.0, 1.0
    return x


@dataclass(frozen=True)
class AirfoilCoordinates:
    """Chord-normalised surfaces, both ordered from leading to trailing edge."""

    upper: np.ndarray
    lower: np.ndarray
    camber_line: np.ndarray | None = None
    name: str = ""

    @property
    def n_points(self) -> int:
        return len(self.upper)

    def polygon(self) -> np.ndarray:
        """Closed outline, upper TE -> LE -> lower TE (Selig order), without repeating the first point."""
        lower = self.lower
        if np.allclose(self.upper[0], lower[0], atol=1e-15):
            lower = lower[1:]
        return np.vstack([self.upper[::-1], lower])

    def area(self) -> float:
        x, y = self.polygon().T
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))

    def perimeter(self) -> float:
        pts = self.polygon()
        return float(np.sum(np.hypot(*(np.roll(pts, -1, axis=0) - pts).T)))

    def trailing_edge_gap(self) -> float:
        return float(np.hypot(*(self.upper[-1] - self.lower[-1])))

    def max_thickness(self, n: int = 2001) -> float:
        xs = np.linspace(0.0, 1.0, n)
        return float(np.max(self.surface_y(xs, "upper") - self.surface_y(xs, "lower")))

    def surface_y(self, x, side: str):
        pts = self.upper if side == "upper" else self.lower
        order = np.argsort(pts[:, 0], kind="stable")
        return np.interp(x, pts[order, 0], pts[order, 1])

    def is_simple(self) -> bool:
        """True when no two non-adjacent outline segments intersect."""
        pts = self.polygon()
        a = pts
        b = np.roll(pts, -1, axis=0)
        n = len(pts)

        def orient(p, q, r):
            return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

        i, j = np.triu_indices(n, k=2)
        keep = ~((i == 0) & (j == n - 1))
        i, j = i[keep], j[keep]
        d1 = orient(a[i], b[i], a[j])
        d2 = orient(a[i], b[i], b[j])
        d3 = orient(a[j], b[j], a[i])
        d4 = orient(a[j], b[j], b[i])
        crossing = (d1 * d2 < 0) & (d3 * d4 < 0)
        return not bool(np.any(crossing))


def generate(spec: AirfoilSpec | str, n_points: int = 121, closed_te: bool = False) -> AirfoilCoordinates:
    """Build surface coordinates with thickness applied normal to the camber line."""
    if isinstance(spec, str):
        spec = AirfoilSpec.from_designator(spec)
    if n_points < 20:
        raise GeometryError("n_points must be at least 20")
    x = cosine_stations(n_points)
    yt = thickness(x, spec.t, closed_te)
    yc, dyc = camber(x, spec.m, spec.p)
    theta = np.arctan(dyc)
    s, c = np.sin(theta), np.cos(theta)
    upper = np.column_stack([x - yt * s, yc + yt * c])
    lower = np.column_stack([x + yt * s, yc - yt * c])
    return AirfoilCoordinates(upper, lower, np.column_stack([x, yc]), spec.designator)


@lru_cache(maxsize=32)
def cached_airfoil(designator: str, n_points: int = 121, closed_te: bool = False) -> AirfoilCoordinates:
    return generate(designator, n_points, closed_te)


def selig_text(coords: AirfoilCoordinates) -> str:
    buf = io.StringIO()
    buf.write(f"{coords.name or 'airfoil'}\n")
    for x, y in coords.polygon():
        buf.write(f" {x:.8f}  {y: .8f}\n")
    return buf.getvalue()


def coordinates_csv(coords: AirfoilCoordinates) -> str:
    buf = io.StringIO()
    buf.write("surface,x,y\n")
    for side, pts in (("upper", coords.upper), ("lower", coords.lower)):
        for x, y in pts:
            buf.write(f"{side},{x:.10f},{y:.10f}\n")
    return buf.getvalue()


def geo_text(coords: AirfoilCoordinates, chord: float, mesh_size: float = 0.002) -> str:
    """Gmsh geometry description of the section outline (metres)."""
    pts = coords.polygon() * chord
    lines = [f"// {coords.name} section, chord {chord:g} m", f"lc = {mesh_size:g};"]
    for k, (x, y) in enumerate(pts, start=1):
        lines.append(f"Point({k}) = {{{x:.8f}, {y:.8f}, 0, lc}};")
    n = len(pts)
    lines.append(f"Spline(1) = {{{', '.join(str(k) for k in range(1, n + 1))}}};")
    lines.append(f"Line(2) = {{{n}, 1}};")
    lines.append("Curve Loop(1) = {1, 2};")
    lines.append('Physical Curve("walls") = {1, 2};')
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SectionProperties:
    """Idealised thin-walled wing section; lengths in metres."""

    enclosed_area: float
    perimeter: float
    shell_area: float
    spar_positions: tuple[float, ...]
    spar_heights: tuple[float, ...]
    rib_area: float
    centroid_y: float
    second_moment: float
    y_max: float
    shell_volume: float
    spar_volume: float
    rib_volume: float

    @property
    def volume(self) -> float:
        return self.shell_volume + self.spar_volume + self.rib_volume


def spar_stations(n_spars: int, stations: tuple[float, float] = DEFAULT_SPAR_STATIONS) -> np.ndarray:
    if n_spars == 1:
        return np.array([0.5 * (stations[0] + stations[1])])
    return np.linspace(stations[0], stations[1], n_spars)


def _segments(pts: np.ndarray):
    p0 = pts
    p1 = np.roll(pts, -1, axis=0)
    length = np.hypot(*(p1 - p0).T)
    return length, p0[:, 1], p1[:, 1]


def wing_section_properties(coords: AirfoilCoordinates, config: StructConfig, chord: float, span: float,
                            spar_range: tuple[float, float] = DEFAULT_SPAR_STATIONS) -> SectionProperties:
    """Areas, bending inertia and material volumes of a shell/spar/rib wing box.

    The skin is a thin wall of thickness ``shell_thickness`` along the outer
    outline, spars are vertical webs spanning the inner depth at evenly spaced
    chord stations, ribs are flat plates filling the inner area.  Structural
    dimensions in ``config`` are millimetres, everything else metres.
    """
    ts = config.shell_thickness * 1e-3
    ws = config.spar_width * 1e-3
    tr = config.rib_thickness * 1e-3
    outline = coords.polygon() * chord
    area = 0.5 * abs(float(np.dot(outline[:, 0], np.roll(outline[:, 1], -1))
                           - np.dot(outline[:, 1], np.roll(outline[:, 0], -1))))
    length, ya, yb = _segments(outline)
    perimeter = float(np.sum(length))

    xs = spar_stations(config.n_spars, spar_range) * chord
    y_up = coords.surface_y(xs / chord, "upper") * chord
    y_lo = coords.surface_y(xs / chord, "lower") * chord
    heights = (y_up - y_lo) - 2 * ts
    if np.any(heights <= 0):
        raise GeometryError("spars do not fit inside the shell at their stations")
    if config.n_spars > 1 and np.min(np.diff(xs)) <= ws:
        raise GeometryError("spars overlap each other")
    rib_area = area - perimeter * ts
    if rib_area <= 0:
        raise GeometryError("shell thickness leaves no interior for ribs")

    spar_mid = 0.5 * (y_up + y_lo)
    shell_first = ts * float(np.sum(length * 0.5 * (ya + yb)))
    shell_a = ts * perimeter
    spar_a = ws * heights
    total_a = shell_a + float(np.sum(spar_a))
    ybar = (shell_first + float(np.sum(spar_a * spar_mid))) / total_a

    a, b = ya - ybar, yb - ybar
    i_shell = ts * float(np.sum(length * (a * a + a * b + b * b) / 3.0))
    i_spar = float(np.sum(ws * heights**3 / 12.0 + spar_a * (spar_mid - ybar) ** 2))
    y_max = float(np.max(np.abs(outline[:, 1] - ybar)))

    return SectionProperties(
        enclosed_area=area,
        perimeter=perimeter,
        shell_area=shell_a,
        spar_positions=tuple(float(v) for v in xs),
        spar_heights=tuple(float(v) for v in heights),
        rib_area=rib_area,
        centroid_y=ybar,
        second_moment=i_shell + i_spar,
        y_max=y_max,
        shell_volume=shell_a * span,
        spar_volume=float(np.sum(spar_a)) * span,
        rib_volume=config.n_ribs * tr * rib_area,
    )
