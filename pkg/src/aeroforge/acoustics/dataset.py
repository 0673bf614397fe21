"""Loader and benchmark harness for the public airfoil self-noise table.

The table has six whitespace-separated columns: frequency (Hz), angle of
attack (deg), chord (m), free-stream velocity (m/s), suction-side
displacement thickness (m) and scaled sound pressure level (dB).  The
levels are normalised by the TBL-TE scaling term 10*log10(d*_s M^5 L D/r^2)
for the tunnel setup below, so predictions are compared on the same scale.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .bpm import BpmInput, directivity_high, spl_spectrum

ENV_VAR = "AEROFORGE_SELF_NOISE_DATA"

# tunnel test setup
SPAN = 0.4572
OBSERVER_DISTANCE = 1.22
NU_TUNNEL = 1.4529e-5

# preferred benchmark cases when the full table is available: (chord, aoa, velocity)
PREFERRED_CASES = (
    (0.3048, 0.0, 71.3),
    (0.3048, 0.0, 55.5),
    (0.3048, 0.0, 39.6),
    (0.3048, 0.0, 31.7),
    (0.1016, 6.7, 55.5),
    (0.1016, 6.7, 31.7),
)


@dataclass(frozen=True)
class NoiseCase:
    chord: float
    aoa: float
    velocity: float
    delta_star_s: float
    frequencies: np.ndarray
    scaled_spl: np.ndarray

    @property
    def key(self) -> tuple[float, float, float]:
        return (self.chord, self.aoa, self.velocity)

    @property
    def label(self) -> str:
        return f"c={self.chord:g}m a={self.aoa:g}deg U={self.velocity:g}m/s"


@dataclass(frozen=True)
class CaseValidation:
    case: NoiseCase
    predicted: np.ndarray
    rmse: float

    @property
    def n_points(self) -> int:
        return len(self.predicted)


def default_path() -> Path | None:
    env = os.environ.get(ENV_VAR)
    return Path(env) if env else None


def load_self_noise(path=None) -> np.ndarray:
    """Rows as an (n, 6) float array; defaults to the bundled benchmark subset."""
    path = path or default_path()
    if path is None:
        text = resources.files("aeroforge.data").joinpath("airfoil_self_noise_benchmark.dat").read_text()
    else:
        text = Path(path).read_text()
    rows = [line.split() for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    data = np.array(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != 6:
        raise ValueError("self-noise table must have six columns")
    return data


def group_cases(rows: np.ndarray) -> list[NoiseCase]:
    cases: dict[tuple, list] = {}
    for row in rows:
        key = (float(row[2]), float(row[1]), float(row[3]), float(row[4]))
        cases.setdefault(key, []).append((row[0], row[5]))
    out = []
    for (chord, aoa, u, ds), pts in sorted(cases.items()):
        pts.sort()
        f, spl = np.array(pts).T
        out.append(NoiseCase(chord, aoa, u, ds, f, spl))
    return out


def benchmark_input(case: NoiseCase) -> BpmInput:
    return BpmInput(chord=case.chord, span=SPAN, velocity=case.velocity, aoa=case.aoa,
                    delta_star_s=case.delta_star_s, observer_distance=OBSERVER_DISTANCE,
                    kinematic_viscosity=NU_TUNNEL, tripped=True)


def scaling_term(inp: BpmInput) -> float:
    dh = float(directivity_high(inp.theta_obs, inp.phi_obs, inp.mach))
    return 10 * np.log10(inp.delta_star_s * inp.mach**5 * inp.span * dh / inp.observer_distance**2)


def validate_case(case: NoiseCase, band=(20.0, 20000.0)) -> CaseValidation:
    sel = (case.frequencies >= band[0]) & (case.frequencies <= band[1])
    if not np.any(sel):
        raise ValueError(f"no overlap between {case.label} and band {band}")
    sub = NoiseCase(case.chord, case.aoa, case.velocity, case.delta_star_s,
                    case.frequencies[sel], case.scaled_spl[sel])
    inp = benchmark_input(sub)
    total = spl_spectrum(inp, sub.frequencies, ("tbl_te", "separation"))["total"]
    predicted = total - scaling_term(inp)
    rmse = float(np.sqrt(np.mean((predicted - sub.scaled_spl) ** 2)))
    return CaseValidation(sub, predicted, rmse)


def select_benchmark(cases: list[NoiseCase], n: int = 5) -> list[NoiseCase]:
    """Pick the preferred benchmark cases present, topped up in table order."""
    by_key = {c.key: c for c in cases}
    chosen = [by_key[k] for k in PREFERRED_CASES if k in by_key]
    for c in cases:
        if len(chosen) >= n:
            break
        if c not in chosen:
            chosen.append(c)
    return chosen[:n] if len(chosen) > n else chosen


def run_benchmark(path=None, n: int = 5, band=(20.0, 20000.0)) -> list[CaseValidation]:
    return [validate_case(c, band) for c in select_benchmark(group_cases(load_self_noise(path)), n)]
