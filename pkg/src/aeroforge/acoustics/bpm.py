"""Brooks-Pope-Marcolini semi-empirical airfoil self-noise model.

Five source mechanisms are available:

``tbl_te``      turbulent boundary layer, trailing edge (pressure + suction side)
``separation``  angle-dependent / separated-flow contribution of TBL-TE
``lbl_vs``      laminar boundary layer vortex shedding (untripped flow only)
``blunt_te``    trailing-edge bluntness vortex shedding
``tip_vortex``  tip vortex formation

Levels are one-third-octave band SPLs in dB re 20 uPa.  Angles are degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

MECHANISMS = ("tbl_te", "separation", "lbl_vs", "blunt_te", "tip_vortex")
DEFAULT_MECHANISMS = ("tbl_te", "separation", "lbl_vs")

RHO_AIR = 1.225
C0_AIR = 340.294
NU_AIR = 1.4607e-5


class AcousticsError(ValueError):
    pass


@dataclass(frozen=True)
class BoundaryLayer:
    """Trailing-edge boundary-layer thicknesses as fractions of chord."""

    delta_s: float
    delta_star_s: float
    theta_s: float
    delta_p: float
    delta_star_p: float
    theta_p: float

    @property
    def shape_factor_s(self) -> float:
        return self.delta_star_s / self.theta_s

    @property
    def shape_factor_p(self) -> float:
        return self.delta_star_p / self.theta_p


def boundary_layer(re_c: float, aoa: float, tripped: bool = True) -> BoundaryLayer:
    """Trailing-edge thicknesses from the BPM flat-plate fits with incidence corrections."""
    if not re_c > 0:
        raise AcousticsError("chord Reynolds number must be positive")
    lg = math.log10(re_c)
    a = abs(aoa)
    if tripped:
        d0 = 10 ** (1.892 - 0.9045 * lg + 0.0596 * lg**2)
        ds0 = 0.0601 * re_c**-0.114 if re_c <= 3e5 else 10 ** (3.411 - 1.5397 * lg + 0.1059 * lg**2)
        th0 = 0.0723 * re_c**-0.1765 if re_c <= 3e5 else 10 ** (0.5578 - 0.7079 * lg + 0.0404 * lg**2)
    else:
        d0 = 10 ** (1.6569 - 0.9045 * lg + 0.0596 * lg**2)
        ds0 = 10 ** (3.0187 - 1.5397 * lg + 0.1059 * lg**2)
        th0 = 10 ** (0.2021 - 0.7079 * lg + 0.0404 * lg**2)

    dp = d0 * 10 ** (-0.04175 * a + 0.00106 * a**2)
    dsp = ds0 * 10 ** (-0.0432 * a + 0.00113 * a**2)
    thp = th0 * 10 ** (-0.04508 * a + 0.000873 * a**2)

    if tripped:
        if a <= 5:
            fd, fds, fth = 10 ** (0.0311 * a), 10 ** (0.0679 * a), 10 ** (0.0559 * a)
        elif a <= 12.5:
            fd, fds, fth = 0.3468 * 10 ** (0.1231 * a), 0.381 * 10 ** (0.1516 * a), 0.6984 * 10 ** (0.0869 * a)
        else:
            fd, fds, fth = 5.718 * 10 ** (0.0258 * a), 14.296 * 10 ** (0.0258 * a), 4.0846 * 10 ** (0.0258 * a)
    else:
        if a <= 7.5:
            fd, fds, fth = 10 ** (0.03114 * a), 10 ** (0.0679 * a), 10 ** (0.0559 * a)
        elif a <= 12.5:
            fd, fds, fth = 0.0303 * 10 ** (0.2336 * a), 0.0162 * 10 ** (0.3066 * a), 0.0633 * 10 ** (0.2157 * a)
        else:
            fd, fds, fth = 12.0 * 10 ** (0.0258 * a), 52.42 * 10 ** (0.0258 * a), 14.977 * 10 ** (0.0258 * a)
    return BoundaryLayer(d0 * fd, ds0 * fds, th0 * fth, dp, dsp, thp)


@dataclass(frozen=True)
class BpmInput:
    chord: float
    span: float
    velocity: float
    aoa: float
    delta_star_s: float | None = None
    delta_star_p: float | None = None
    observer_distance: float = 1.0
    theta_obs: float = 90.0
    phi_obs: float = 90.0
    rho: float = RHO_AIR
    speed_of_sound: float = C0_AIR
    kinematic_viscosity: float = NU_AIR
    tripped: bool = True
    te_thickness: float = 0.0
    te_angle: float = 14.0
    round_tip: bool = False
    aoa_tip: float | None = None

    @property
    def mach(self) -> float:
        return self.velocity / self.speed_of_sound

    @property
    def reynolds(self) -> float:
        return self.velocity * self.chord / self.kinematic_viscosity

    def violations(self) -> list[str]:
        out = []
        for name in ("chord", "span", "observer_distance"):
            if not getattr(self, name) > 0:
                out.append(f"{name}: >0 violated")
        if not self.velocity > 0:
            out.append("velocity: >0 violated")
        elif self.mach >= 0.3:
            out.append("mach: <0.3 violated")
        for name in ("delta_star_s", "delta_star_p"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                out.append(f"{name}: >0 violated")
        return out

    def with_observer(self, distance: float | None = None, theta: float | None = None,
                      phi: float | None = None) -> "BpmInput":
        return replace(self,
                       observer_distance=self.observer_distance if distance is None else distance,
                       theta_obs=self.theta_obs if theta is None else theta,
                       phi_obs=self.phi_obs if phi is None else phi)


# -- directivity ----------------------------------------------------------

def directivity_high(theta, phi, mach: float, mach_convective: float | None = None):
    theta = np.radians(theta)
    phi = np.radians(phi)
    mc = 0.8 * mach if mach_convective is None else mach_convective
    return (2.0 * np.sin(theta / 2) ** 2 * np.sin(phi) ** 2
            / ((1 + mach * np.cos(theta)) * (1 + (mach - mc) * np.cos(theta)) ** 2))


def directivity_low(theta, phi, mach: float):
    theta = np.radians(theta)
    phi = np.radians(phi)
    return np.sin(theta) ** 2 * np.sin(phi) ** 2 / (1 + mach * np.cos(theta)) ** 4


# -- spectral shape functions -----------------------------------------------

def _a_min(a):
    a = np.asarray(a, dtype=float)
    return np.where(a < 0.204, np.sqrt(np.maximum(67.552 - 886.788 * a**2, 0.0)) - 8.219,
                    np.where(a <= 0.244, -32.665 * a + 3.981,
                             -142.795 * a**3 + 103.656 * a**2 - 57.757 * a + 6.006))


def _a_max(a):
    a = np.asarray(a, dtype=float)
    return np.where(a < 0.13, np.sqrt(np.maximum(67.552 - 886.788 * a**2, 0.0)) - 8.219,
                    np.where(a <= 0.321, -15.901 * a + 1.098,
                             -4.669 * a**3 + 3.491 * a**2 - 16.699 * a + 1.149))


def _b_min(b):
    b = np.asarray(b, dtype=float)
    return np.where(b < 0.13, np.sqrt(np.maximum(16.888 - 886.788 * b**2, 0.0)) - 4.109,
                    np.where(b <= 0.145, -83.607 * b + 8.138,
                             -817.81 * b**3 + 355.21 * b**2 - 135.024 * b + 10.619))


def _b_max(b):
    b = np.asarray(b, dtype=float)
    return np.where(b < 0.1, np.sqrt(np.maximum(16.888 - 886.788 * b**2, 0.0)) - 4.109,
                    np.where(b <= 0.187, -31.33 * b + 1.854,
                             -80.541 * b**3 + 44.174 * b**2 - 39.381 * b + 2.344))


def _a0(re_c: float) -> float:
    if re_c < 9.52e4:
        return 0.57
    if re_c <= 8.57e5:
        return -9.57e-13 * (re_c - 8.57e5) ** 2 + 1.13
    return 1.13


def _b0(re_c: float) -> float:
    if re_c < 9.52e4:
        return 0.30
    if re_c <= 8.57e5:
        return -4.48e-13 * (re_c - 8.57e5) ** 2 + 0.56
    return 0.56


def spectral_a(st_ratio, re_c: float):
    a = np.abs(np.log10(st_ratio))
    a0 = _a0(re_c)
    ar = (-20.0 - _a_min(a0)) / (_a_max(a0) - _a_min(a0))
    return _a_min(a) + ar * (_a_max(a) - _a_min(a))


def spectral_b(st_ratio, re_c: float):
    b = np.abs(np.log10(st_ratio))
    b0 = _b0(re_c)
    br = (-20.0 - _b_min(b0)) / (_b_max(b0) - _b_min(b0))
    return _b_min(b) + br * (_b_max(b) - _b_min(b))


def strouhal_peaks(mach: float, aoa: float) -> tuple[float, float, float]:
    st1 = 0.02 * mach**-0.6
    if aoa < 1.33:
        st2 = st1
    elif aoa <= 12.5:
        st2 = st1 * 10 ** (0.0054 * (aoa - 1.33) ** 2)
    else:
        st2 = 4.72 * st1
    return st1, st2, 0.5 * (st1 + st2)


def k1(re_c: float) -> float:
    if re_c < 2.47e5:
        return -4.31 * math.log10(re_c) + 156.3
    if re_c <= 8.0e5:
        return -9.0 * math.log10(re_c) + 181.6
    return 128.5


def delta_k1(aoa: float, re_dstar_p: float) -> float:
    if re_dstar_p <= 5000:
        return aoa * (1.43 * math.log10(re_dstar_p) - 5.29)
    return 0.0


def k2(re_c: float, mach: float, aoa: float) -> float:
    gamma = 27.094 * mach + 3.31
    gamma0 = 23.43 * mach + 4.651
    beta = 72.65 * mach + 10.74
    beta0 = -34.19 * mach - 13.82
    if aoa < gamma0 - gamma:
        dk2 = -1000.0
    elif aoa <= gamma0 + gamma:
        dk2 = math.sqrt(max(beta**2 - (beta / gamma) ** 2 * (aoa - gamma0) ** 2, 0.0)) + beta0
    else:
        dk2 = -12.0
    return k1(re_c) + dk2


def _level(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


# -- mechanisms ---------------------------------------------------------------

def _thicknesses(inp: BpmInput) -> tuple[BoundaryLayer, float, float]:
    bl = boundary_layer(inp.reynolds, inp.aoa, inp.tripped)
    ds_s = inp.delta_star_s if inp.delta_star_s is not None else bl.delta_star_s * inp.chord
    if inp.delta_star_p is not None:
        ds_p = inp.delta_star_p
    elif inp.delta_star_s is not None:
        # keep the correlation's pressure/suction ratio when only the suction side is given
        ds_p = inp.delta_star_s * bl.delta_star_p / bl.delta_star_s
    else:
        ds_p = bl.delta_star_p * inp.chord
    return bl, ds_s, ds_p


def tbl_te(inp: BpmInput, freqs) -> dict[str, np.ndarray]:
    """Pressure-side, suction-side and angle-dependent TBL-TE spectra."""
    f = np.asarray(freqs, dtype=float)
    bl, ds_s, ds_p = _thicknesses(inp)
    u, m, re_c, a = inp.velocity, inp.mach, inp.reynolds, abs(inp.aoa)
    dh = directivity_high(inp.theta_obs, inp.phi_obs, m)
    dl = directivity_low(inp.theta_obs, inp.phi_obs, m)
    r2 = inp.observer_distance**2
    st1, st2, st1bar = strouhal_peaks(m, a)
    st_p = f * ds_p / u
    st_s = f * ds_s / u
    gamma0 = 23.43 * m + 4.651
    separated = a > min(gamma0, 12.5)
    big_k2 = k2(re_c, m, a)
    if separated:
        neg = np.full_like(f, -np.inf)
        spl_a = _level(ds_s * m**5 * inp.span * dl / r2) + spectral_a(st_s / st2, 3.0 * re_c) + big_k2
        return {"pressure": neg, "suction": neg.copy(), "separation": spl_a}
    big_k1 = k1(re_c)
    re_dsp = u * ds_p / inp.kinematic_viscosity
    spl_p = _level(ds_p * m**5 * inp.span * dh / r2) + spectral_a(st_p / st1, re_c) + big_k1 - 3.0 + delta_k1(a, re_dsp)
    spl_s = _level(ds_s * m**5 * inp.span * dh / r2) + spectral_a(st_s / st1bar, re_c) + big_k1 - 3.0
    spl_a = _level(ds_s * m**5 * inp.span * dh / r2) + spectral_b(st_s / st2, re_c) + big_k2
    return {"pressure": spl_p, "suction": spl_s, "separation": spl_a}


def _g1(e):
    e = np.asarray(e, dtype=float)
    le = np.log10(e)
    return np.select(
        [e <= 0.5974, e <= 0.8545, e <= 1.17, e <= 1.674],
        [39.8 * le - 11.12, 98.409 * le + 2.0,
         -5.076 + np.sqrt(np.maximum(2.484 - 506.25 * le**2, 0.0)), -98.409 * le + 2.0],
        -39.8 * le - 11.12)


def _g2(d):
    d = np.asarray(d, dtype=float)
    ld = np.log10(d)
    return np.select(
        [d <= 0.3237, d <= 0.5689, d <= 1.7579, d <= 3.0889],
        [77.852 * ld + 15.328, 65.188 * ld + 9.125, -114.052 * ld**2, -65.188 * ld + 9.125],
        -77.852 * ld + 15.328)


def lbl_vs(inp: BpmInput, freqs) -> np.ndarray:
    f = np.asarray(freqs, dtype=float)
    bl = boundary_layer(inp.reynolds, inp.aoa, inp.tripped)
    delta_p = bl.delta_p * inp.chord
    u, m, re_c, a = inp.velocity, inp.mach, inp.reynolds, abs(inp.aoa)
    dh = directivity_high(inp.theta_obs, inp.phi_obs, m)
    st = f * delta_p / u
    if re_c <= 1.3e5:
        st_1 = 0.18
    elif re_c <= 4.0e5:
        st_1 = 0.001756 * re_c**0.3931
    else:
        st_1 = 0.28
    st_peak = st_1 * 10 ** (-0.04 * a)
    re0 = 10 ** (0.215 * a + 4.978) if a <= 3.0 else 10 ** (0.120 * a + 5.263)
    g3 = 171.04 - 3.03 * a
    return (_level(delta_p * m**5 * inp.span * dh / inp.observer_distance**2)
            + _g1(st / st_peak) + _g2(re_c / re0) + g3)


def _g4(ratio, psi):
    return np.where(ratio <= 5.0, 17.5 * np.log10(ratio) + 157.5 - 1.114 * psi, 169.7 - 1.114 * psi)


def _g5_mu(x):
    return np.select([x < 0.25, x < 0.62, x < 1.15], [0.1221, -0.2175 * x + 0.1755, -0.0308 * x + 0.0596], 0.0242)


def _g5_m(x):
    return np.select([x <= 0.02, x <= 0.5, x <= 0.62, x <= 1.15, x <= 1.2],
                     [0.0, 68.724 * x - 1.35, 308.475 * x - 121.23, 224.811 * x - 69.35, 1583.28 * x - 1631.59],
                     268.344)


def _g5_14(x, st_ratio):
    x = np.asarray(x, dtype=float)
    mu = _g5_mu(x)
    m = _g5_m(x)
    eta = np.log10(st_ratio)
    eta0 = -np.sqrt(m**2 * mu**4 / (6.25 + m**2 * mu**2))
    k = 2.5 * np.sqrt(np.maximum(1.0 - (eta0 / mu) ** 2, 0.0)) - 2.5 - m * eta0
    return np.select(
        [eta < eta0, eta < 0.0, eta < 0.03616],
        [m * eta + k, 2.5 * np.sqrt(np.maximum(1.0 - (eta / mu) ** 2, 0.0)) - 2.5,
         np.sqrt(np.maximum(1.5625 - 1194.99 * eta**2, 0.0)) - 1.25],
        -155.543 * eta + 4.375)


def _g5(ratio, psi, st_ratio):
    ratio0 = 6.724 * ratio**2 - 4.019 * ratio + 1.107
    g0 = _g5_14(ratio0, st_ratio)
    return g0 + 0.0714 * psi * (_g5_14(ratio, st_ratio) - g0)


def blunt_te(inp: BpmInput, freqs) -> np.ndarray:
    f = np.asarray(freqs, dtype=float)
    h = max(inp.te_thickness, 1e-9)
    _, ds_s, ds_p = _thicknesses(inp)
    ratio = h / (0.5 * (ds_s + ds_p))
    psi = inp.te_angle
    if ratio >= 0.2:
        st_peak = (0.212 - 0.0045 * psi) / (1.0 + 0.235 / ratio - 0.0132 / ratio**2)
    else:
        st_peak = 0.1 * ratio + 0.095 - 0.00243 * psi
    st = f * h / inp.velocity
    m = inp.mach
    dh = directivity_high(inp.theta_obs, inp.phi_obs, m)
    return (_level(h * m**5.5 * inp.span * dh / inp.observer_distance**2)
            + _g4(ratio, psi) + _g5(ratio, psi, st / st_peak))


def tip_vortex(inp: BpmInput, freqs) -> np.ndarray:
    f = np.asarray(freqs, dtype=float)
    a_tip = abs(inp.aoa if inp.aoa_tip is None else inp.aoa_tip)
    m = inp.mach
    m_max = (1.0 + 0.036 * a_tip) * m
    u_max = m_max * inp.speed_of_sound
    if inp.round_tip:
        ell = 0.008 * a_tip * inp.chord
    elif a_tip <= 2.0:
        ell = (0.0230 + 0.0169 * a_tip) * inp.chord
    else:
        ell = (0.0378 + 0.0095 * a_tip) * inp.chord
    if ell <= 0:
        return np.full_like(f, -np.inf)
    st = f * ell / u_max
    dh = directivity_high(inp.theta_obs, inp.phi_obs, m)
    return (_level(m**2 * m_max**3 * ell**2 * dh / inp.observer_distance**2)
            - 30.5 * (np.log10(st) + 0.3) ** 2 + 126.0)


def energetic_sum(levels, axis=0):
    levels = np.asarray(levels, dtype=float)
    if levels.shape[axis] == 1:
        return np.take(levels, 0, axis=axis)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.sum(10.0 ** (levels / 10.0), axis=axis))


def spl_spectrum(inp: BpmInput, freqs, mechanisms=DEFAULT_MECHANISMS) -> dict[str, np.ndarray]:
    """Per-mechanism and total band levels at ``freqs``.

    LBL-VS applies to laminar (untripped) boundary layers only; for a tripped
    boundary layer it is reported as silent.
    """
    mechanisms = tuple(mechanisms)
    if not mechanisms:
        raise AcousticsError("mechanism set is empty")
    unknown = set(mechanisms) - set(MECHANISMS)
    if unknown:
        raise AcousticsError(f"unknown mechanisms: {sorted(unknown)}")
    bad = inp.violations()
    if bad:
        raise AcousticsError("; ".join(bad))
    f = np.asarray(freqs, dtype=float)
    out: dict[str, np.ndarray] = {}
    if "tbl_te" in mechanisms or "separation" in mechanisms:
        parts = tbl_te(inp, f)
        if "tbl_te" in mechanisms:
            out["tbl_te"] = energetic_sum([parts["pressure"], parts["suction"]])
        if "separation" in mechanisms:
            out["separation"] = parts["separation"]
    if "lbl_vs" in mechanisms:
        out["lbl_vs"] = np.full_like(f, -np.inf) if inp.tripped else lbl_vs(inp, f)
    if "blunt_te" in mechanisms:
        out["blunt_te"] = blunt_te(inp, f)
    if "tip_vortex" in mechanisms:
        out["tip_vortex"] = tip_vortex(inp, f)
    out["total"] = energetic_sum([out[k] for k in mechanisms if k in out])
    return out
