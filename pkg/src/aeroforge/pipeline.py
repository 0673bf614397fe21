"""End-to-end orchestration: planning, per-case analysis, selection, sweep, optimization, report.

Every task runs inside the retry loop; the scheduler state is checkpointed at
phase boundaries and every few completed stages so an interrupted run can be
resumed at task granularity.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

from . import report as reporting
from .acoustics.case import analyze_case
from .aero.case import COEFF_PATH, CaseParams, ExternalSolverAdapter, build_case, extract_results, run_desk_case
from .aero.desk import DeskSolverConfig
from .domain import CaseConfig, DesignMatrix, FlowResult, RequirementSpec, StructResult, ValidationError
from .errors import ErrorKind, TaskFailure
from .geometry import GeometryError, generate, geo_text
from .knowledge import KnowledgeStore
from .optimizer.bayesopt import BOConfig, history_csv, optimize, pareto_csv, report_markdown
from .planner import (CaseScore, PlanningError, RemotePlanner, ScriptedPlanner, build_task_graph,
                      plan_documents, select_airfoil)
from .recovery import CheckpointStore, SolverParams, retry_loop, should_checkpoint
from .scheduler import DurationHistory, RunReport, Scheduler, SchedulerConfig, TaskGraph, TaskNode
from .structures import (StructuralModel, evaluate, load_cases, parse_results_csv, results_csv, run_sweep,
                         sweep)
from .workspace import LOG_NAME, ProjectWorkspace

log = logging.getLogger("aeroforge.pipeline")

STATE_VERSION = 1
CHECKPOINT_DIR = "checkpoints"
SELECTION_PATH = "airfoil/selected_airfoil.json"
SWEEP_CSV = "structures/structural_sweep.csv"
PHASES = ("geometry", "aero", "acoustics", "selection", "structures", "aggregation", "optimization", "report")


class NoCheckpointError(RuntimeError):
    pass


@dataclass
class PipelineOptions:
    seed: int = 42
    max_parallel: int = 4
    serial: bool = False
    planner: str = "scripted"
    solver: str = "desk"
    fixture: str | None = None
    struct_batches: int = 16
    bo_budget: int = 40
    max_retries: int = 3
    # task id or structural config label -> {"kind": ..., "times": n}
    faults: dict = field(default_factory=dict)
    stop_after: str | None = None

    def __post_init__(self):
        if self.planner not in ("scripted", "remote"):
            raise ValueError(f"unknown planner {self.planner!r}")
        if self.solver not in ("desk", "adapter"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if self.stop_after is not None and self.stop_after not in PHASES:
            raise ValueError(f"unknown phase {self.stop_after!r}")

    @property
    def parallelism(self) -> int:
        return 1 if self.serial else self.max_parallel

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineOptions":
        return cls(**data)


@dataclass
class PipelineResult:
    status: str  # success | failed | interrupted
    report: RunReport
    failed: list[str]
    sweep_failures: dict[str, str]
    checkpoint: str | None

    @property
    def exit_code(self) -> int:
        return {"success": 0, "failed": 3, "interrupted": 4}[self.status]


def load_fixture(ref: str) -> dict:
    """A fixture file path, or ``uav`` for the bundled UAV selection fixture."""
    if ref == "uav":
        return json.loads(resources.files("aeroforge.data").joinpath("uav_reference_fixture.json").read_text())
    return json.loads(Path(ref).read_text())


def bundled_spec(name: str = "uav_wing") -> RequirementSpec:
    return RequirementSpec.from_dict(json.loads(resources.files("aeroforge.data").joinpath(f"{name}.json").read_text()))


def sample_log(kind: str) -> str:
    root = resources.files("aeroforge.data").joinpath("logs")
    names = sorted(p.name for p in root.iterdir() if p.name.startswith(f"{kind}_"))
    if not names:
        return f"injected {kind} failure"
    return root.joinpath(names[0]).read_text()


class _TaskTag(logging.Filter):
    def filter(self, record):
        if not hasattr(record, "task"):
            record.task = record.name.rsplit(".", 1)[-1]
        return True


def attach_log(root: Path) -> logging.Handler:
    handler = logging.FileHandler(root / LOG_NAME, encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s [%(task)s] %(message)s"))
    handler.addFilter(_TaskTag())
    logger = logging.getLogger("aeroforge")
    logger.addHandler(handler)
    if logger.level == logging.NOTSET or logger.level > logging.INFO:
        logger.setLevel(logging.INFO)
    return handler


def _csv_rows(text: str) -> list[dict]:
    lines = text.strip().splitlines()
    head = lines[0].split(",")
    return [dict(zip(head, ln.split(","))) for ln in lines[1:]]


class Pipeline:
    def __init__(self, ws: ProjectWorkspace, spec: RequirementSpec, options: PipelineOptions | None = None,
                 sleep: Callable[[float], None] = time.sleep, planner=None, adapter: ExternalSolverAdapter | None = None,
                 desk: DeskSolverConfig = DeskSolverConfig()):
        self.ws = ws
        self.spec = spec
        self.options = options or PipelineOptions()
        self.sleep = sleep
        self.planner = planner
        self.adapter = adapter
        self.desk = desk
        self.knowledge = KnowledgeStore(ws)
        self.store = CheckpointStore(ws.root / CHECKPOINT_DIR, validator=self._state_problems)
        self.matrix: DesignMatrix | None = None
        self.graph: TaskGraph | None = None
        self.results: dict[str, object] = {}
        self.stage = 0
        self._scheduler: Scheduler | None = None
        self._stop_requested = False
        self._fault_lock = threading.Lock()
        self._fault_hits: Counter = Counter()
        self._ckpt_lock = threading.Lock()

    # -- construction ---------------------------------------------------
    @classmethod
    def create(cls, spec: RequirementSpec, root, options: PipelineOptions | None = None, force: bool = False,
               **kw) -> "Pipeline":
        problems = spec.violations()
        if problems:
            raise ValidationError(problems)
        ws = ProjectWorkspace.init_project(spec, root, force=force)
        return cls(ws, spec, options, **kw)

    @classmethod
    def resume(cls, root, **kw) -> "Pipeline":
        ws = ProjectWorkspace.open(root)
        store = CheckpointStore(Path(ws.root) / CHECKPOINT_DIR)
        found = store.latest_valid()
        if found is None:
            raise NoCheckpointError(f"no valid checkpoint under {Path(root) / CHECKPOINT_DIR}")
        ckpt, state = found
        problems = cls._state_problems(state)
        if problems:
            raise NoCheckpointError(f"checkpoint {ckpt.checkpoint_id} is unusable: {problems}")
        spec = RequirementSpec.from_dict(state["spec"])
        options = PipelineOptions.from_dict(state["options"])
        options.stop_after = kw.pop("stop_after", None)
        for key in ("max_parallel", "serial"):
            if key in kw:
                setattr(options, key, kw.pop(key))
        pipe = cls(ws, spec, options, **kw)
        pipe.matrix = DesignMatrix.from_dict(state["matrix"])
        pipe.graph = TaskGraph.from_dict(state["graph"])
        pipe.results = dict(state["results"])
        pipe.stage = state["stage"]
        log.info("resuming from %s (phase %s, %d/%d tasks done)", ckpt.checkpoint_id, ckpt.phase,
                 sum(n.status == "done" for n in pipe.graph), len(pipe.graph.nodes), extra={"task": "resume"})
        return pipe

    @staticmethod
    def _state_problems(state) -> list[str]:
        if not isinstance(state, dict):
            return ["state is not a mapping"]
        missing = [k for k in ("version", "spec", "options", "matrix", "graph", "results", "stage") if k not in state]
        out = [f"missing key {k}" for k in missing]
        if not missing and state["version"] != STATE_VERSION:
            out.append(f"unsupported state version {state['version']}")
        return out

    def state(self, phase: str) -> dict:
        return {"version": STATE_VERSION, "spec": self.spec.to_dict(), "options": self.options.to_dict(),
                "matrix": self.matrix.to_dict(), "graph": self.graph.to_dict(), "results": self.results,
                "stage": self.stage, "phase": phase}

    def checkpoint(self, phase: str) -> str:
        with self._ckpt_lock:
            done = sum(n.status == "done" for n in self.graph)
            ckpt = self.store.save(self.state(phase), phase, done / len(self.graph.nodes))
        log.info("checkpoint %s at phase %s", ckpt.checkpoint_id, phase, extra={"task": "checkpoint"})
        return ckpt.checkpoint_id

    # -- planning ---------------------------------------------------------
    def _backend(self):
        if self.planner is not None:
            return self.planner
        if self.options.planner == "remote":
            return RemotePlanner.from_env()
        return ScriptedPlanner(seed=self.options.seed)

    def plan(self) -> None:
        t0 = time.perf_counter()
        self.matrix = self._backend().generate_matrix(self.spec)
        self.ws.publish_json(reporting.MATRIX_PATH, self.matrix.to_dict(), producer="chief",
                             consumers=("geometry", "aerodynamics"))
        for rel, text in plan_documents(self.matrix, self.spec).items():
            self.ws.publish_text(rel, text, producer="chief")
        self.graph = build_task_graph(self.matrix, self.spec, self.options.struct_batches)
        log.info("planned %d cases, %d tasks wall=%.3fs", len(self.matrix), len(self.graph.nodes),
                 time.perf_counter() - t0, extra={"task": "plan"})
        self.checkpoint("planning")

    def case(self, case_id: str) -> CaseConfig:
        for c in self.matrix:
            if c.case_id == case_id:
                return c
        raise KeyError(case_id)

    # -- fault injection --------------------------------------------------
    def _fault(self, key: str) -> str | None:
        spec = self.options.faults.get(key)
        if not spec:
            return None
        with self._fault_lock:
            self._fault_hits[key] += 1
            hit = self._fault_hits[key]
        times = spec.get("times", 1)
        if times is None or times < 0 or hit <= times:
            return spec.get("kind", "unknown")
        return None

    def _raise_fault(self, key: str, kind: str):
        kinds = {k.value.lower(): k for k in ErrorKind}
        raise TaskFailure(f"injected {kind} fault in {key}", logs=sample_log(kind),
                          kind=kinds.get(kind.lower()))

    # -- executors ----------------------------------------------------------
    def _geometry(self, node: TaskNode, params: SolverParams, attempt: int):
        cid = node.payload["case_id"]
        kind = self._fault(node.task_id)
        if kind:
            self._raise_fault(node.task_id, kind)
        config = self.case(cid)
        self.ws.read_json_for("geometry", reporting.MATRIX_PATH)
        coords = generate(config.airfoil)
        if not coords.is_simple():
            raise GeometryError(f"{config.airfoil}: self-intersecting outline")
        self.ws.publish_text(f"{cid}/airfoil.geo", geo_text(coords, config.chord, 0.002 * params.refinement),
                             producer="geometry", consumers=("aerodynamics",))
        return {"case_id": cid, "area": coords.area()}

    def _aero(self, node: TaskNode, params: SolverParams, attempt: int):
        cid = node.payload["case_id"]
        config = self.case(cid)
        kind = self._fault(node.task_id)
        if kind and kind != "divergence":
            self._raise_fault(node.task_id, kind)
        self.ws.read_for("aerodynamics", f"{cid}/airfoil.geo")
        case_params = CaseParams().with_recovery(params)
        build_case(config, self.ws, case_params)
        if self.options.solver == "adapter":
            adapter = self.adapter or ExternalSolverAdapter()
            adapter.run(self.ws.path(cid), case_params)
            self.ws.publish(f"{cid}/{COEFF_PATH}", self.ws.path(f"{cid}/{COEFF_PATH}").read_bytes(),
                            producer="aerodynamics")
        else:
            run_desk_case(config, self.ws, self.desk, case_params, diverge=kind == "divergence")
        flow = extract_results(self.ws, cid, self.desk)
        return {"cl": flow.cl, "cd": flow.cd, "cm": flow.cm, "lift_to_drag": flow.lift_to_drag}

    def _acoustics(self, node: TaskNode, params: SolverParams, attempt: int):
        kind = self._fault(node.task_id)
        if kind:
            self._raise_fault(node.task_id, kind)
        res = analyze_case(self.ws, node.payload["case_id"])
        return {"oaspl": res.oaspl, "oaspl_dba": res.oaspl_dba}

    def _select(self, node: TaskNode, params: SolverParams, attempt: int):
        fixture = load_fixture(self.options.fixture) if self.options.fixture else None
        fixed = {c["case_id"]: c for c in fixture["cases"]} if fixture else {}
        scores, sources, flows = [], {}, []
        for config in self.matrix:
            cid = config.case_id
            fc = _csv_rows(self.ws.read_text_for("chief", f"{cid}/postProcessing/integrated/force_coefficients.csv"))[0]
            am = _csv_rows(self.ws.read_text_for(
                "chief", f"{cid}/postProcessing/integrated/acoustics/acoustic_metrics.csv"))[0]
            ld, oaspl, source = float(fc["lift_to_drag"]), float(am["oaspl_db"]), "computed"
            if cid in fixed:
                ld = float(fixed[cid]["lift_to_drag"])
                oaspl = float(fixture["oaspl_by_velocity"][f"{config.velocity:g}"])
                source = f"fixture-{fixed[cid].get('source', 'reported')}"
            scores.append(CaseScore(cid, config.airfoil, ld, oaspl))
            sources[cid] = source
            flows.append((config, fc))
        sel = select_airfoil(scores, self.spec.aero_weight, self.spec.noise_weight)
        rows = ["rank,case_id,airfoil,lift_to_drag,oaspl_db,aero_term,noise_term,j,source"]
        for k, r in enumerate(sel.ranking, start=1):
            s = r.score
            rows.append(f"{k},{s.case_id},{s.airfoil},{s.lift_to_drag:.6f},{s.oaspl:.4f},{r.aero_term:.6f},"
                        f"{r.noise_term:.6f},{r.j:.6f},{sources[s.case_id]}")
        self.ws.publish_text(reporting.RANKING_PATH, "\n".join(rows) + "\n", producer="chief")
        forces = ["# case_id airfoil U[m/s] aoa[deg] Re Cl Cd Cm L/D"]
        for config, fc in flows:
            forces.append(f"{config.case_id} {config.airfoil} {config.velocity:g} {config.aoa:g} "
                          f"{float(fc['reynolds']):.6e} {fc['cl']} {fc['cd']} {fc['cm']} {fc['lift_to_drag']}")
        self.ws.publish_text("cfd_results/forces.dat", "\n".join(forces) + "\n", producer="chief")
        w = sel.winner
        win_fc = next(fc for config, fc in flows if config.case_id == w.score.case_id)
        bl = _csv_rows(self.ws.read_text_for(
            "chief", f"{w.score.case_id}/postProcessing/integrated/boundary_layer.csv"))[0]
        winner = {"airfoil": w.score.airfoil, "case_id": w.score.case_id, "j": w.j,
                  "velocity": self.case(w.score.case_id).velocity, "cl": float(win_fc["cl"]),
                  "cd": float(win_fc["cd"]), "cm": float(win_fc["cm"]),
                  "delta_star": float(bl["delta_star"]), "theta": float(bl["theta"])}
        self.ws.publish_json(SELECTION_PATH, winner, producer="chief", consumers=("structures",))
        self.knowledge.record_finding(
            f"Selected {w.score.airfoil} ({w.score.case_id}) with merit J = {w.j:.4f} "
            f"(L/D {w.score.lift_to_drag:.3f}, OASPL {w.score.oaspl:.2f} dB).",
            tags=("selection", w.score.airfoil.lower()), producer="chief")
        return winner

    def _model(self, consumer: str) -> tuple[StructuralModel, list]:
        win = self.ws.read_json_for(consumer, SELECTION_PATH)
        model = StructuralModel(win["airfoil"], self.spec.chord, self.spec.span, self.spec.material)
        flow = FlowResult.build(win["cl"], win["cd"], win["cm"], win["delta_star"], win["theta"])
        return model, load_cases(flow, win["velocity"], self.spec.chord, self.spec.span)

    def _structures(self, node: TaskNode, params: SolverParams, attempt: int):
        b, n = node.payload["batch"], node.payload["n_batches"]
        kind = self._fault(node.task_id)
        if kind:
            self._raise_fault(node.task_id, kind)
        model, cases = self._model("structures")
        configs = sweep()[b::n]

        def evaluator(cfg, cs, m):
            if self._fault(cfg.label):
                raise GeometryError(f"injected mesh failure for {cfg.label}")
            return evaluate(cfg, cs, m)

        out = run_sweep(configs, cases, model, evaluator, max_parallel=1,
                        max_retries=self.options.max_retries, sleep=self.sleep)
        for r in out.results:
            self.ws.publish_json(f"structures/sweep/{r.config.label}/result.json", r.to_dict(),
                                 producer="structures")
        for label, err in sorted(out.failures.items()):
            self.knowledge.record_finding(
                f"Structural configuration {label} failed after {out.attempts[label]} attempts: {err}",
                tags=("known-failure", "structures", label), producer="structures")
        return {"succeeded": out.success_count, "failed": dict(sorted(out.failures.items()))}

    def _aggregate(self, node: TaskNode, params: SolverParams, attempt: int):
        results: list[StructResult] = []
        failed = []
        for cfg in sweep():
            rel = f"structures/sweep/{cfg.label}/result.json"
            if self.ws.record(rel) is None:
                failed.append(cfg.label)
                continue
            results.append(StructResult.from_dict(self.ws.read_json_for("structures", rel)))
        if not results:
            raise TaskFailure("structural sweep produced no results")
        self.ws.publish_text(SWEEP_CSV, results_csv(results), producer="structures", consumers=("optimizer",))
        masses = [r.mass for r in results]
        stresses = [r.max_stress for r in results]
        summary = {"total": len(results) + len(failed), "succeeded": len(results), "failed": len(failed),
                   "failed_labels": failed, "mass_min_g": min(masses), "mass_max_g": max(masses),
                   "stress_min_mpa": min(stresses), "stress_max_mpa": max(stresses),
                   "min_safety_factor": min(r.safety_factor for r in results)}
        self.ws.publish_json(reporting.SWEEP_SUMMARY, summary, producer="structures")
        return summary

    def _optimize(self, node: TaskNode, params: SolverParams, attempt: int):
        discrete = parse_results_csv(self.ws.read_text_for("optimizer", SWEEP_CSV))
        model, cases = self._model("optimizer")
        cfg = BOConfig(budget=self.options.bo_budget, seed=self.options.seed,
                       min_safety_factor=self.spec.min_safety_factor,
                       yield_mpa=self.spec.material.yield_strength * 1e-6)
        res = optimize(discrete, lambda c: evaluate(c, cases, model), cfg)
        base = "optimization"
        self.ws.publish_text(f"{base}/optimization_report.md", report_markdown(res, cfg.min_safety_factor),
                             producer="optimizer")
        self.ws.publish_text(f"{base}/pareto_front.csv", pareto_csv(res), producer="optimizer")
        self.ws.publish_text(f"{base}/gp_validation_stress.csv", res.stress_report.csv("stress_mpa"),
                             producer="optimizer")
        self.ws.publish_text(f"{base}/gp_validation_mass.csv", res.mass_report.csv("mass_g"), producer="optimizer")
        self.ws.publish_text(f"{base}/bo_history.csv", history_csv(res), producer="optimizer")

        def point(p):
            return {"label": p.config.label, "config": p.config.to_dict(), "stress": p.stress, "mass": p.mass,
                    "safety_factor": p.safety_factor, "source": p.source}

        summary = {"best": point(res.best), "best_discrete": point(res.best_discrete),
                   "improvement": res.improvement, "r2_stress": res.stress_report.r2,
                   "r2_mass": res.mass_report.r2, "pareto_size": len(res.pareto),
                   "mass_budget_g": res.mass_budget, "evaluations": len(res.evaluated)}
        self.ws.publish_json(reporting.OPT_SUMMARY, summary, producer="optimizer")
        return {"improvement": res.improvement, "best": res.best.config.label}

    def _report(self, node: TaskNode, params: SolverParams, attempt: int):
        return {"outputs": reporting.write_report(self.ws)}

    def _dispatch(self, node: TaskNode, params: SolverParams, attempt: int):
        if node.phase == "aggregation":
            return self._aggregate(node, params, attempt)
        return {"geometry": self._geometry, "aero": self._aero, "acoustics": self._acoustics,
                "selection": self._select, "structures": self._structures, "optimization": self._optimize,
                "report": self._report}[node.phase](node, params, attempt)

    def _runner(self, node: TaskNode, fn):
        out = retry_loop(lambda _s, params, attempt: fn(node, params, attempt), None,
                         max_retries=self.options.max_retries, sleep=self.sleep, task_id=node.task_id)
        for err, strat in zip(out.errors, out.strategies):
            log.warning("%s classified; strategy %s (%s)", err.kind.value, strat.action, strat.note,
                        extra={"task": node.task_id})
        if not out.success:
            exc = TaskFailure(f"{node.task_id} failed after {out.attempts} attempts: {out.last_exception}",
                              kind=out.errors[-1].kind if out.errors else None)
            exc.attempts = out.attempts
            raise exc
        return out.state, out.attempts

    # -- running ------------------------------------------------------------
    def request_stop(self) -> None:
        self._stop_requested = True
        if self._scheduler is not None:
            self._scheduler.request_stop()

    def _phase_complete(self, phase: str) -> bool:
        return all(n.status in ("done", "failed") for n in self.graph if n.phase == phase)

    def _on_complete(self, node: TaskNode, rep, result):
        self.results[node.task_id] = result
        self.stage += 1
        log.info("%s attempts=%d wall=%.3fs%s", rep.status, rep.attempts, rep.wall_time,
                 f" error={rep.error}" if rep.error else "", extra={"task": node.task_id})
        boundary = self._phase_complete(node.phase)
        if should_checkpoint(self.stage, boundary):
            self.checkpoint(node.phase)
        if boundary and self.options.stop_after == node.phase:
            log.info("stop requested after phase %s", node.phase, extra={"task": "pipeline"})
            self.request_stop()

    def run(self) -> PipelineResult:
        handler = attach_log(self.ws.root)
        try:
            if self.graph is None:
                self.plan()
            roles = ("geometry", "aerodynamics", "acoustics", "chief", "structures", "optimizer")
            config = SchedulerConfig(max_parallel=self.options.parallelism, adaptive=not self.options.serial)
            self._scheduler = Scheduler(config, {r: self._dispatch for r in roles}, DurationHistory(),
                                        runner=self._runner, on_complete=self._on_complete)
            if self._stop_requested:
                self._scheduler.request_stop()
            report = self._scheduler.run(self.graph)
            ckpt = None
            if report.interrupted:
                ckpt = self.checkpoint("interrupted")
            sweep_failures = {}
            for tid, res in sorted(self.results.items()):
                if self.graph[tid].phase == "structures" and isinstance(res, dict):
                    sweep_failures.update(res.get("failed", {}))
            status = "interrupted" if report.interrupted else (
                "failed" if report.failed or sweep_failures else "success")
            if status == "failed" and self.ws.record(reporting.MATRIX_PATH) is not None:
                try:
                    reporting.write_report(self.ws)
                except Exception as exc:  # a partial report is best effort
                    log.warning("partial report failed: %s", exc, extra={"task": "report"})
            self.ws.publish_json("run_report.json", {"status": status, "seed": self.options.seed,
                                                     "serial": self.options.serial, "scheduler": report.to_dict(),
                                                     "sweep_failures": sweep_failures, "checkpoint": ckpt},
                                 producer="chief")
            log.info("pipeline %s wall=%.3fs", status, report.makespan, extra={"task": "pipeline"})
            return PipelineResult(status, report, report.failed, sweep_failures, ckpt)
        finally:
            logging.getLogger("aeroforge").removeHandler(handler)
            handler.close()


def run_pipeline(spec: RequirementSpec, root, options: PipelineOptions | None = None, force: bool = False,
                 **kw) -> PipelineResult:
    return Pipeline.create(spec, root, options, force=force, **kw).run()


__all__ = ["Pipeline", "PipelineOptions", "PipelineResult", "NoCheckpointError", "PlanningError",
           "bundled_spec", "load_fixture", "run_pipeline"]
