"""Spectral metrics: overall levels, frequency weighting, band aggregation, directivity."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..domain import AcousticResult
from .bpm import BpmInput, DEFAULT_MECHANISMS, directivity_high, energetic_sum, spl_spectrum

P_REF = 20e-6

# IEC 61672-1 pole frequencies
F1 = 20.598997
F2 = 107.65265
F3 = 737.86223
F4 = 12194.217

BAND_RATIO = 10 ** 0.1
NOMINAL_CENTERS = (20, 25, 31.5, 40, 50, 63, 80, 100, 125, 160, 200, 250, 315, 400, 500, 630, 800, 1000,
                   1250, 1600, 2000, 2500, 3150, 4000, 5000, 6300, 8000, 10000, 12500, 16000, 20000)


class BandRangeError(ValueError):
    pass


def _ra(f):
    f2 = np.asarray(f, dtype=float) ** 2
    return F4**2 * f2**2 / ((f2 + F1**2) * np.sqrt((f2 + F2**2) * (f2 + F3**2)) * (f2 + F4**2))


def _rc(f):
    f2 = np.asarray(f, dtype=float) ** 2
    return F4**2 * f2 / ((f2 + F1**2) * (f2 + F4**2))


_A_NORM = -20 * math.log10(float(_ra(1000.0)))
_C_NORM = -20 * math.log10(float(_rc(1000.0)))


def a_weighting(f):
    """A-weighting correction in dB, exactly 0 at 1 kHz."""
    return 20 * np.log10(_ra(f)) + _A_NORM


def c_weighting(f):
    return 20 * np.log10(_rc(f)) + _C_NORM


def oaspl(levels) -> float:
    """Energetic sum of band levels."""
    levels = np.atleast_1d(np.asarray(levels, dtype=float))
    if levels.size == 0:
        raise ValueError("empty spectrum")
    return float(energetic_sum(levels[np.isfinite(levels)]) if np.any(np.isfinite(levels)) else -np.inf)


def oaspl_a(freqs, levels) -> float:
    return oaspl(np.asarray(levels, dtype=float) + a_weighting(freqs))


def oaspl_c(freqs, levels) -> float:
    return oaspl(np.asarray(levels, dtype=float) + c_weighting(freqs))


def band_centers(f_min: float = 100.0, f_max: float = 10000.0) -> np.ndarray:
    """Base-10 one-third-octave centres 1000*10^(n/10) covering [f_min, f_max]."""
    n_lo = math.ceil(10 * math.log10(f_min / 1000.0) - 1e-9)
    n_hi = math.floor(10 * math.log10(f_max / 1000.0) + 1e-9)
    return 1000.0 * 10 ** (np.arange(n_lo, n_hi + 1) / 10.0)


def band_edges(centers):
    centers = np.asarray(centers, dtype=float)
    return centers / 10 ** 0.05, centers * 10 ** 0.05


def nominal(center: float) -> float:
    return min(NOMINAL_CENTERS, key=lambda c: abs(math.log10(c / center)))


@dataclass(frozen=True)
class BandSpectrum:
    centers: np.ndarray
    levels: np.ndarray

    @property
    def bandwidths(self) -> np.ndarray:
        lo, hi = band_edges(self.centers)
        return hi - lo

    def bandwidth_corrected(self) -> np.ndarray:
        return self.levels - 10 * np.log10(self.bandwidths)


def third_octave(freqs, levels, kind: str = "density", f_min: float | None = None,
                 f_max: float | None = None) -> BandSpectrum:
    """Aggregate a spectrum into base-10 one-third-octave bands.

    ``kind="density"``: levels are spectral densities (dB/Hz) on a grid and are
    integrated over each band.  ``kind="lines"``: discrete tones, summed
    energetically per band.  ``kind="band"``: levels already are band levels at
    centre frequencies and are only re-labelled.
    """
    f = np.asarray(freqs, dtype=float)
    lv = np.asarray(levels, dtype=float)
    if f.size == 0 or f.shape != lv.shape:
        raise ValueError("frequencies and levels must be nonempty and aligned")
    if kind == "band":
        lo = f.min() if f_min is None else f_min
        hi = f.max() if f_max is None else f_max
        centers = band_centers(lo, hi)
        out = []
        for c in centers:
            k = int(np.argmin(np.abs(np.log10(f / c))))
            if abs(math.log10(f[k] / c)) > 0.01:
                raise BandRangeError(f"no band level near {c:.1f} Hz")
            out.append(lv[k])
        return BandSpectrum(centers, np.array(out))
    lo = f_min if f_min is not None else f.min() * 10 ** 0.05
    hi = f_max if f_max is not None else f.max() / 10 ** 0.05
    centers = band_centers(lo, hi)
    if centers.size == 0:
        raise BandRangeError("spectrum does not span a complete band")
    lower, upper = band_edges(centers)
    if lower[0] < f.min() * (1 - 1e-9) or upper[-1] > f.max() * (1 + 1e-9):
        raise BandRangeError("requested bands extend beyond the spectrum")
    energy = 10 ** (lv / 10)
    out = []
    for a, b in zip(lower, upper):
        if kind == "lines":
            sel = (f >= a) & (f < b)
            e = energy[sel].sum()
        elif kind == "density":
            grid = np.concatenate([[a], f[(f > a) & (f < b)], [b]])
            e = np.trapezoid(np.interp(grid, f, energy), grid)
        else:
            raise ValueError(f"unknown spectrum kind {kind!r}")
        with np.errstate(divide="ignore"):
            out.append(10 * np.log10(e))
    return BandSpectrum(centers, np.array(out))


def directivity_pattern(inp: BpmInput, thetas, phi: float = 90.0, freqs=None,
                        mechanisms=DEFAULT_MECHANISMS) -> np.ndarray:
    """OASPL around the source at the input's observer distance.

    The high-frequency directivity factor relative to the perpendicular
    observer scales the reference OASPL, so the perpendicular direction
    reproduces the reference level.
    """
    freqs = band_centers() if freqs is None else freqs
    ref_input = inp.with_observer(theta=90.0, phi=90.0)
    ref = oaspl(spl_spectrum(ref_input, freqs, mechanisms)["total"])
    m = inp.mach
    thetas = np.asarray(thetas, dtype=float)
    with np.errstate(divide="ignore"):
        return ref + 10 * np.log10(directivity_high(thetas, phi, m) / directivity_high(90.0, 90.0, m))


def acoustic_result(inp: BpmInput, freqs=None, mechanisms=DEFAULT_MECHANISMS) -> AcousticResult:
    freqs = band_centers() if freqs is None else np.asarray(freqs, dtype=float)
    spectra = spl_spectrum(inp, freqs, mechanisms)
    total = spectra["total"]
    return AcousticResult(
        frequencies=tuple(float(f) for f in freqs),
        spl={k: tuple(float(x) for x in v) for k, v in spectra.items()},
        oaspl=oaspl(total),
        oaspl_dba=oaspl_a(freqs, total),
        third_octave=tuple((float(f), float(x)) for f, x in zip(freqs, total)),
        observer_distance=inp.observer_distance,
        observer_angle=inp.theta_obs,
        oaspl_dbc=oaspl_c(freqs, total),
    )
