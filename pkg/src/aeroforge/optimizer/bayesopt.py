"""Constrained two-objective Bayesian optimization over the wing-box parameters.

Each iteration draws a Chebyshev weight, scalarizes the normalized stress and
mass surrogates, and maximizes expected improvement times the probability of
meeting the safety-factor and mass constraints.  Integer members are held
fixed per run (round-robin over the combinations); proposals are verified by
the true evaluator and conditioned back into both surrogates.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..domain import STRUCT_BOUNDS, StructConfig, StructResult
from .acquisition import expected_improvement, probability_below
from .gp import GPModel, ValidationReport, train
from .pareto import ParetoSet, pareto_front

log = logging.getLogger(__name__)

CONTINUOUS = ("spar_width", "rib_thickness", "shell_thickness")


@dataclass
class BOConfig:
    budget: int = 40
    n_candidates: int = 1024
    n_local: int = 256
    seed: int = 42
    min_safety_factor: float = 1.5
    mass_budget: float | None = None  # grams; default median of the discrete sweep
    yield_mpa: float = 503.0
    n_restarts: int = 8


@dataclass(frozen=True)
class Evaluated:
    config: StructConfig
    stress: float
    mass: float
    safety_factor: float
    source: str
    iteration: int = -1

    def feasible(self, min_sf: float, mass_budget: float) -> bool:
        return self.safety_factor >= min_sf and self.mass <= mass_budget + 1e-9


@dataclass
class BOResult:
    best: Evaluated
    best_discrete: Evaluated
    improvement: float
    evaluated: list[Evaluated]
    pareto: ParetoSet
    history: list[dict] = field(default_factory=list)
    stress_report: ValidationReport | None = None
    mass_report: ValidationReport | None = None
    mass_budget: float = math.nan

    @property
    def pareto_members(self) -> list[Evaluated]:
        return [self.evaluated[i] for i in self.pareto.indices]


def _evaluated(r: StructResult, source: str, iteration: int = -1) -> Evaluated:
    return Evaluated(r.config, r.max_stress, r.mass, r.safety_factor, source, iteration)


def _best_feasible(points: Sequence[Evaluated], min_sf: float, budget: float) -> Evaluated | None:
    ok = [p for p in points if p.feasible(min_sf, budget)]
    return min(ok, key=lambda p: (p.stress, p.mass)) if ok else None


def _candidates(rng, combo, evaluated: Sequence[Evaluated], n_rand: int, n_local: int) -> np.ndarray:
    lo = np.array([STRUCT_BOUNDS[k][0] for k in CONTINUOUS])
    hi = np.array([STRUCT_BOUNDS[k][1] for k in CONTINUOUS])
    cont = [rng.uniform(lo, hi, size=(n_rand, 3))]
    same = [p for p in evaluated if (p.config.n_spars, p.config.n_ribs) == combo]
    if same and n_local:
        anchors = sorted(same, key=lambda p: p.stress)[:8]
        base = np.array([[p.config.spar_width, p.config.rib_thickness, p.config.shell_thickness] for p in anchors])
        pick = base[rng.integers(0, len(base), n_local)]
        cont.append(np.clip(pick + rng.normal(0, 0.05, (n_local, 3)) * (hi - lo), lo, hi))
    c = np.vstack(cont)
    ints = np.tile(np.array(combo, dtype=float), (len(c), 1))
    return np.hstack([c, ints])


def optimize(discrete: Sequence[StructResult], evaluator: Callable[[StructConfig], StructResult],
             config: BOConfig | None = None, models: tuple[GPModel, GPModel] | None = None) -> BOResult:
    """Run the BO loop; returns the best verified feasible design and the merged Pareto set."""
    cfg = config or BOConfig()
    if not discrete:
        raise ValueError("need discrete sweep results to seed the surrogates")
    rng = np.random.default_rng(cfg.seed)
    x = np.array([r.config.as_vector() for r in discrete])
    stress = np.array([r.max_stress for r in discrete])
    mass = np.array([r.mass for r in discrete])
    budget = cfg.mass_budget if cfg.mass_budget is not None else float(np.median(mass))
    stress_limit = cfg.yield_mpa / cfg.min_safety_factor

    s_report = m_report = None
    if models is None:
        bounds = (x.min(0), x.max(0))
        gp_s, s_report = train(x, stress, seed=cfg.seed, bounds=bounds, n_restarts=cfg.n_restarts)
        gp_m, m_report = train(x, mass, seed=cfg.seed, bounds=bounds, n_restarts=cfg.n_restarts)
        # refit posterior on every discrete sample, keeping the fitted hyperparameters
        test = s_report.test_index
        gp_s = gp_s.condition(x[test], stress[test])
        gp_m = gp_m.condition(x[test], mass[test])
    else:
        gp_s, gp_m = models

    evaluated = [_evaluated(r, "discrete") for r in discrete]
    best_discrete = _best_feasible(evaluated, cfg.min_safety_factor, budget)
    if best_discrete is None:
        best_discrete = min(evaluated, key=lambda p: p.stress)
    combos = sorted({(r.config.n_spars, r.config.n_ribs) for r in discrete})
    seen = {r.config for r in discrete}
    history = []

    for it in range(cfg.budget):
        combo = combos[it % len(combos)]
        lam = float(rng.uniform(0.05, 0.95))
        s_all = np.array([p.stress for p in evaluated])
        m_all = np.array([p.mass for p in evaluated])
        s_lo, s_span = s_all.min(), max(np.ptp(s_all), 1e-12)
        m_lo, m_span = m_all.min(), max(np.ptp(m_all), 1e-12)

        def scal(s, m):
            return np.maximum(lam * (s - s_lo) / s_span, (1 - lam) * (m - m_lo) / m_span)

        feas = [p for p in evaluated if p.feasible(cfg.min_safety_factor, budget)]
        ref = feas if feas else evaluated
        f_best = float(np.min(scal(np.array([p.stress for p in ref]), np.array([p.mass for p in ref]))))

        cand = _candidates(rng, combo, evaluated, cfg.n_candidates, cfg.n_local)
        mu_s, sd_s = gp_s.predict(cand)
        mu_m, sd_m = gp_m.predict(cand)
        a_s = lam * (mu_s - s_lo) / s_span
        a_m = (1 - lam) * (mu_m - m_lo) / m_span
        mu_g = np.maximum(a_s, a_m)
        # first-order bridge: uncertainty of whichever term is active
        sd_g = np.where(a_s >= a_m, lam * sd_s / s_span, (1 - lam) * sd_m / m_span)
        acq = (expected_improvement(mu_g, sd_g, f_best)
               * probability_below(mu_s, sd_s, stress_limit)
               * probability_below(mu_m, sd_m, budget))
        order = np.argsort(-acq, kind="stable")
        pick = None
        for k in order:
            sc = StructConfig(*(round(float(v), 6) for v in cand[k, :3]), int(cand[k, 3]), int(cand[k, 4]))
            if sc not in seen:
                pick = (k, sc)
                break
        if pick is None:
            continue
        k, sc = pick
        seen.add(sc)
        row = {"iteration": it, "n_spars": sc.n_spars, "n_ribs": sc.n_ribs, "weight": lam,
               "spar_width": sc.spar_width, "rib_thickness": sc.rib_thickness,
               "shell_thickness": sc.shell_thickness, "acquisition": float(acq[k]),
               "pred_stress": float(mu_s[k]), "pred_mass": float(mu_m[k])}
        try:
            res = evaluator(sc)
        except Exception as exc:  # a failed proposal costs budget but does not stop the loop
            log.warning("BO proposal %s failed: %s", sc.label, exc)
            row.update(stress=math.nan, mass=math.nan, safety_factor=math.nan, feasible=False)
            history.append(row)
            continue
        ev = _evaluated(res, "bo", it)
        evaluated.append(ev)
        gp_s = gp_s.condition([sc.as_vector()], [ev.stress])
        gp_m = gp_m.condition([sc.as_vector()], [ev.mass])
        row.update(stress=ev.stress, mass=ev.mass, safety_factor=ev.safety_factor,
                   feasible=ev.feasible(cfg.min_safety_factor, budget))
        history.append(row)

    best = _best_feasible(evaluated, cfg.min_safety_factor, budget) or best_discrete
    if best.stress > best_discrete.stress:
        best = best_discrete
    improvement = (best_discrete.stress - best.stress) / best_discrete.stress if best_discrete.stress > 0 else 0.0
    front = pareto_front([(p.stress, p.mass) for p in evaluated])
    return BOResult(best, best_discrete, improvement, evaluated, front, history, s_report, m_report, budget)


def pareto_csv(result: BOResult) -> str:
    rows = ["label,source,spar_width_mm,rib_thickness_mm,shell_thickness_mm,n_spars,n_ribs,stress_mpa,mass_g,safety_factor"]
    for p in result.pareto_members:
        c = p.config
        rows.append(f"{c.label},{p.source},{c.spar_width:.6f},{c.rib_thickness:.6f},{c.shell_thickness:.6f},"
                    f"{c.n_spars},{c.n_ribs},{p.stress:.6f},{p.mass:.6f},{p.safety_factor:.6f}")
    return "\n".join(rows) + "\n"


HISTORY_FIELDS = ("iteration", "n_spars", "n_ribs", "weight", "spar_width", "rib_thickness", "shell_thickness",
                  "acquisition", "pred_stress", "pred_mass", "stress", "mass", "safety_factor", "feasible")


def history_csv(result: BOResult) -> str:
    rows = [",".join(HISTORY_FIELDS)]
    for h in result.history:
        rows.append(",".join(f"{h[k]:.6g}" if isinstance(h[k], float) else str(h[k]) for k in HISTORY_FIELDS))
    return "\n".join(rows) + "\n"


def report_markdown(result: BOResult, min_sf: float) -> str:
    b, d = result.best, result.best_discrete
    lines = [
        "# Optimization report",
        "",
        f"Mass budget: {result.mass_budget:.3f} g; minimum safety factor: {min_sf:g}",
        "",
    ]
    for name, rep in (("stress", result.stress_report), ("mass", result.mass_report)):
        if rep is not None:
            lines.append(f"- GP {name}: held-out R^2 = {rep.r2:.4f}, RMSE = {rep.rmse:.4g} ({len(rep.y_true)} samples)")
    lines += [
        "",
        "| design | label | stress (MPa) | mass (g) | safety factor |",
        "|---|---|---|---|---|",
        f"| best discrete | {d.config.label} | {d.stress:.4f} | {d.mass:.3f} | {d.safety_factor:.2f} |",
        f"| optimized ({b.source}) | {b.config.label} | {b.stress:.4f} | {b.mass:.3f} | {b.safety_factor:.2f} |",
        "",
        f"Stress improvement over best discrete design: {100 * result.improvement:.2f}%",
        f"Evaluations: {len(result.evaluated)} ({len(result.history)} proposed by the optimizer)",
        f"Pareto-optimal designs: {len(result.pareto)}",
        "",
    ]
    return "\n".join(lines)
