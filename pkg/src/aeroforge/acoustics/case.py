"""Acoustic post-processing of one case from its published flow hand-off files."""

from __future__ import annotations

import numpy as np

from ..domain import AcousticResult
from ..workspace import ProjectWorkspace
from .bpm import DEFAULT_MECHANISMS, BpmInput
from .metrics import acoustic_result, band_centers, nominal

ACOUSTICS_DIR = "postProcessing/integrated/acoustics"
F_MIN, F_MAX = 100.0, 10000.0


def load_bpm_input(ws: ProjectWorkspace, case_id: str, consumer: str = "acoustics") -> BpmInput:
    doc = ws.read_json_for(consumer, f"{case_id}/acoustics_data/bpm_input.json")
    ws.read_json_for(consumer, f"{case_id}/acoustics_data/boundary_layer.json")
    return BpmInput(chord=doc["chord"], span=doc["span"], velocity=doc["velocity"], aoa=doc["aoa"],
                    delta_star_s=doc.get("delta_star_s"), delta_star_p=doc.get("delta_star_p"),
                    observer_distance=doc.get("observer_distance", 1.0), theta_obs=doc.get("theta_obs", 90.0),
                    phi_obs=doc.get("phi_obs", 90.0), kinematic_viscosity=doc["kinematic_viscosity"],
                    tripped=doc.get("tripped", True))


def _fmt(v: float) -> str:
    return f"{v:.4f}" if np.isfinite(v) else ("-inf" if v < 0 else "nan")


def analyze_case(ws: ProjectWorkspace, case_id: str, mechanisms=DEFAULT_MECHANISMS,
                 producer: str = "acoustics") -> AcousticResult:
    inp = load_bpm_input(ws, case_id, producer)
    freqs = band_centers(F_MIN, F_MAX)
    result = acoustic_result(inp, freqs, mechanisms)
    result.check()
    base = f"{case_id}/{ACOUSTICS_DIR}"
    ws.publish_text(f"{base}/acoustic_metrics.csv",
                    "case_id,velocity,aoa,oaspl_db,oaspl_dba,oaspl_dbc,observer_distance_m,observer_angle_deg\n"
                    f"{case_id},{inp.velocity:g},{inp.aoa:g},{result.oaspl:.4f},{result.oaspl_dba:.4f},"
                    f"{result.oaspl_dbc:.4f},{result.observer_distance:g},{result.observer_angle:g}\n",
                    producer=producer)
    names = [k for k in result.spl if k != "total"]
    rows = ["center_hz,nominal_hz,total_db," + ",".join(f"{k}_db" for k in names)]
    for i, f in enumerate(result.frequencies):
        rows.append(f"{f:.3f},{nominal(f):g},{_fmt(result.spl['total'][i])},"
                    + ",".join(_fmt(result.spl[k][i]) for k in names))
    ws.publish_text(f"{base}/third_octave_spectrum.csv", "\n".join(rows) + "\n", producer=producer)
    return result
