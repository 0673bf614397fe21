"""Multi-case summaries, plots and the project result document."""

from __future__ import annotations

import csv
import io
import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .workspace import ProjectWorkspace  # noqa: E402

ANALYSIS = "airfoil/multi_case_analysis"
MATRIX_PATH = "airfoil/design_matrix.json"
RANKING_PATH = f"{ANALYSIS}/selection_ranking.csv"
SWEEP_SUMMARY = "structures/sweep_summary.json"
OPT_SUMMARY = "optimization/summary.json"

AERO_FIELDS = ("case_id", "airfoil", "velocity", "aoa", "reynolds", "cl", "cd", "cm", "lift_to_drag")
ACOUSTIC_FIELDS = ("case_id", "airfoil", "velocity", "aoa", "oaspl_db", "oaspl_dba", "oaspl_dbc")


class ReportError(RuntimeError):
    pass


def _rows(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def _read_csv(ws: ProjectWorkspace, rel: str, consumer: str = "chief") -> list[dict] | None:
    if ws.record(rel) is None:
        return None
    return _rows(ws.read_text_for(consumer, rel))


def _read_json(ws: ProjectWorkspace, rel: str, consumer: str = "chief"):
    if ws.record(rel) is None:
        return None
    return ws.read_json_for(consumer, rel)


def _csv_text(fields, rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def collect_cases(ws: ProjectWorkspace) -> tuple[list[dict], list[dict], dict[str, list[dict]]]:
    """Per-case aero rows, acoustic rows and spectra for every case with outputs."""
    matrix = _read_json(ws, MATRIX_PATH)
    if matrix is None:
        raise ReportError("workspace has no design matrix; nothing to report")
    aero, acoustic, spectra = [], [], {}
    for case in matrix["cases"]:
        cid = case["case_id"]
        fc = _read_csv(ws, f"{cid}/postProcessing/integrated/force_coefficients.csv")
        if fc:
            aero.append(fc[0])
        am = _read_csv(ws, f"{cid}/postProcessing/integrated/acoustics/acoustic_metrics.csv")
        if am:
            acoustic.append({**am[0], "airfoil": case["airfoil"]})
        sp = _read_csv(ws, f"{cid}/postProcessing/integrated/acoustics/third_octave_spectrum.csv")
        if sp:
            spectra[cid] = sp
    return aero, acoustic, spectra


def _png(fig) -> bytes:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=100, metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()


def _by_airfoil(rows):
    groups: dict[str, list[dict]] = {}
    for r in rows:
        groups.setdefault(r["airfoil"], []).append(r)
    return dict(sorted(groups.items()))


def plot_aerodynamics(rows: list[dict]) -> bytes:
    fig, axes = plt.subplots(2, 2, figsize=(10, 8))
    panels = (("cl", "lift coefficient"), ("cd", "drag coefficient"), ("cm", "moment coefficient"),
              ("lift_to_drag", "lift-to-drag ratio"))
    for ax, (key, label) in zip(axes.flat, panels):
        for name, grp in _by_airfoil(rows).items():
            grp = sorted(grp, key=lambda r: float(r["aoa"]))
            ax.plot([float(r["aoa"]) for r in grp], [float(r[key]) for r in grp], "o-", label=name)
        ax.set_xlabel("angle of attack (deg)")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
        if not rows:
            ax.text(0.5, 0.5, "no data", ha="center", transform=ax.transAxes)
    if rows:
        axes[0, 0].legend(fontsize=8)
    fig.tight_layout()
    return _png(fig)


def plot_acoustics(rows: list[dict], spectra: dict[str, list[dict]]) -> bytes:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.5))
    for name, grp in _by_airfoil(rows).items():
        grp = sorted(grp, key=lambda r: float(r["velocity"]))
        ax1.plot([float(r["velocity"]) for r in grp], [float(r["oaspl_db"]) for r in grp], "o-", label=name)
    ax1.set_xlabel("velocity (m/s)")
    ax1.set_ylabel("OASPL (dB)")
    ax1.grid(True, alpha=0.3)
    for cid, sp in sorted(spectra.items()):
        ax2.semilogx([float(r["center_hz"]) for r in sp],
                     [float(r["total_db"]) for r in sp], lw=1, label=cid.removeprefix("sim_"))
    ax2.set_xlabel("one-third-octave centre frequency (Hz)")
    ax2.set_ylabel("SPL (dB)")
    ax2.grid(True, which="both", alpha=0.3)
    if rows:
        ax1.legend(fontsize=8)
        ax2.legend(fontsize=6, ncol=2)
    else:
        ax1.text(0.5, 0.5, "no data", ha="center", transform=ax1.transAxes)
    fig.tight_layout()
    return _png(fig)


def result_markdown(ws: ProjectWorkspace, aero: list[dict], acoustic: list[dict]) -> str:
    idea = _read_json(ws, "airfoil/idea.json") or {}
    matrix = _read_json(ws, MATRIX_PATH) or {"cases": []}
    ranking = _read_csv(ws, RANKING_PATH)
    sweep = _read_json(ws, SWEEP_SUMMARY)
    opt = _read_json(ws, OPT_SUMMARY)
    out = ["# UAV wing design result", ""]
    if idea.get("objective_text"):
        out += [f"Objective: {idea['objective_text']}", ""]
    out += ["## Phase status", ""]
    n = len(matrix["cases"])
    out.append(f"- aerodynamics: {len(aero)}/{n} cases" + ("" if len(aero) == n else " (MISSING cases)"))
    out.append(f"- acoustics: {len(acoustic)}/{n} cases" + ("" if len(acoustic) == n else " (MISSING cases)"))
    out.append("- selection: " + ("done" if ranking else "MISSING"))
    out.append("- structural sweep: " + ("done" if sweep else "MISSING"))
    out.append("- optimization: " + ("done" if opt else "MISSING"))
    out.append("")
    if ranking:
        w = ranking[0]
        out += ["## Airfoil selection", "",
                f"Winner: **{w['airfoil']}** ({w['case_id']}), J = {float(w['j']):.4f}", "",
                "| rank | case | airfoil | L/D | OASPL (dB) | aero term | noise term | J | source |",
                "|---|---|---|---|---|---|---|---|---|"]
        for r in ranking:
            out.append(f"| {r['rank']} | {r['case_id']} | {r['airfoil']} | {float(r['lift_to_drag']):.3f} | "
                       f"{float(r['oaspl_db']):.2f} | {float(r['aero_term']):.4f} | {float(r['noise_term']):.4f} | "
                       f"{float(r['j']):.4f} | {r['source']} |")
        out.append("")
    if sweep:
        out += ["## Structural sweep", "",
                f"- configurations: {sweep['total']}, succeeded: {sweep['succeeded']}, failed: {sweep['failed']}",
                f"- mass range: {sweep['mass_min_g']:.2f} to {sweep['mass_max_g']:.2f} g",
                f"- peak stress range: {sweep['stress_min_mpa']:.4f} to {sweep['stress_max_mpa']:.4f} MPa",
                f"- minimum safety factor: {sweep['min_safety_factor']:.2f}", ""]
    if opt:
        b, d = opt["best"], opt["best_discrete"]
        out += ["## Optimization", "",
                f"- GP held-out R^2: stress {opt['r2_stress']:.4f}, mass {opt['r2_mass']:.4f}",
                f"- best discrete: {d['label']} at {d['stress']:.4f} MPa, {d['mass']:.2f} g",
                f"- optimized: {b['label']} at {b['stress']:.4f} MPa, {b['mass']:.2f} g ({b['source']})",
                f"- stress improvement: {100 * opt['improvement']:.2f}%",
                f"- Pareto-optimal designs: {opt['pareto_size']}", ""]
    return "\n".join(out)


def write_report(ws: ProjectWorkspace, producer: str = "chief") -> list[str]:
    aero, acoustic, spectra = collect_cases(ws)
    outputs = {
        f"{ANALYSIS}/aerodynamic_data.csv": _csv_text(AERO_FIELDS, aero).encode(),
        f"{ANALYSIS}/acoustic_data.csv": _csv_text(ACOUSTIC_FIELDS, acoustic).encode(),
        f"{ANALYSIS}/plot_aerodynamic_analysis.png": plot_aerodynamics(aero),
        f"{ANALYSIS}/plot_acoustic_analysis.png": plot_acoustics(acoustic, spectra),
        "airfoil/result.md": result_markdown(ws, aero, acoustic).encode(),
    }
    for rel, data in outputs.items():
        ws.publish(rel, data, producer=producer)
    return list(outputs)


def summary_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"
