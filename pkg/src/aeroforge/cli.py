"""Command-line entry point.

Exit codes: 0 success, 2 invalid input or precondition, 3 task failure after
retries, 4 interrupted with a checkpoint written.
"""

from __future__ import annotations

import json
import logging
import signal
import sys
from pathlib import Path

import click

from . import report as reporting
from .domain import RequirementSpec, ValidationError
from .errors import TaskFailure
from .pipeline import NoCheckpointError, Pipeline, PipelineOptions, bundled_spec
from .planner import PlanningError
from .workspace import ProjectWorkspace, WorkspaceError

EXIT_OK, EXIT_VALIDATION, EXIT_EXECUTION, EXIT_INTERRUPTED = 0, 2, 3, 4


def load_spec(ref: str) -> RequirementSpec:
    path = Path(ref)
    if not path.exists() and ref == "uav":
        return bundled_spec()
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise click.ClickException(f"cannot read spec: {exc}") from exc
    except ValueError as exc:
        raise ValidationError([f"spec is not valid JSON: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ValidationError(["spec must be a JSON object"])
    try:
        spec = RequirementSpec.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ValidationError([f"malformed spec: {exc}"]) from exc
    problems = spec.violations()
    if problems:
        raise ValidationError(problems)
    return spec


def _execute(pipe: Pipeline) -> int:
    def on_sigint(signum, frame):
        click.echo("interrupt received; finishing running tasks and checkpointing", err=True)
        pipe.request_stop()
        signal.signal(signal.SIGINT, signal.default_int_handler)

    previous = signal.signal(signal.SIGINT, on_sigint)
    try:
        result = pipe.run()
    finally:
        signal.signal(signal.SIGINT, previous)
    if result.status == "success":
        summary = json.loads((pipe.ws.root / reporting.OPT_SUMMARY).read_text())
        win = json.loads((pipe.ws.root / "airfoil/selected_airfoil.json").read_text())
        click.echo(f"winner {win['airfoil']} ({win['case_id']}, J={win['j']:.4f}); "
                   f"optimized {summary['best']['label']} improvement {100 * summary['improvement']:.2f}%")
    elif result.status == "interrupted":
        click.echo(f"interrupted; resume from {result.checkpoint}", err=True)
    else:
        for tid in result.failed:
            click.echo(f"failed: {tid}", err=True)
        for label, err in result.sweep_failures.items():
            click.echo(f"sweep failure: {label}: {err}", err=True)
    return result.exit_code


def _guard(fn):
    try:
        return fn()
    except ValidationError as exc:
        for v in exc.violations:
            click.echo(f"invalid: {v}", err=True)
        return EXIT_VALIDATION
    except (PlanningError, WorkspaceError, NoCheckpointError, reporting.ReportError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION
    except TaskFailure as exc:
        click.echo(f"execution failed: {exc}", err=True)
        return EXIT_EXECUTION


@click.group()
@click.option("-v", "--verbose", count=True, help="Log to stderr (-v info, -vv debug).")
def main(verbose):
    """Multi-agent UAV wing design pipeline."""
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    root = logging.getLogger()
    for h in [h for h in root.handlers if h.get_name() == "aeroforge-console"]:
        root.removeHandler(h)
    console = logging.StreamHandler()
    console.set_name("aeroforge-console")
    console.setLevel(level)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(console)


@main.command()
@click.argument("spec")
@click.option("--root", envvar="AEROFORGE_ROOT", required=True, type=click.Path(file_okay=False),
              help="Project workspace directory.")
@click.option("--max-parallel", envvar="AEROFORGE_MAX_PARALLEL", default=4, show_default=True, type=click.IntRange(1))
@click.option("--serial", is_flag=True, help="One task at a time in a fixed order (reproducible).")
@click.option("--planner", type=click.Choice(["scripted", "remote"]), default="scripted", show_default=True)
@click.option("--solver", type=click.Choice(["desk", "adapter"]), default="desk", show_default=True)
@click.option("--seed", default=42, show_default=True, type=int)
@click.option("--fixture", default=None, help="Selection fixture JSON, or 'uav' for the bundled one.")
@click.option("--bo-budget", default=40, show_default=True, type=click.IntRange(0))
@click.option("--stop-after", type=click.Choice(["geometry", "aero", "acoustics", "selection", "structures",
                                                 "aggregation", "optimization"]), default=None,
              help="Checkpoint and exit once this phase completes.")
@click.option("--force", is_flag=True, help="Clear a non-empty root first.")
def run(spec, root, max_parallel, serial, planner, solver, seed, fixture, bo_budget, stop_after, force):
    """Run the whole pipeline for SPEC (a JSON requirement file, or 'uav')."""
    def go():
        options = PipelineOptions(seed=seed, max_parallel=max_parallel, serial=serial, planner=planner,
                                  solver=solver, fixture=fixture, bo_budget=bo_budget, stop_after=stop_after)
        return _execute(Pipeline.create(load_spec(spec), root, options, force=force))
    sys.exit(_guard(go))


@main.command()
@click.option("--root", envvar="AEROFORGE_ROOT", required=True, type=click.Path(file_okay=False))
@click.option("--from-last", is_flag=True, default=True, help="Restore the newest valid checkpoint (default).")
@click.option("--max-parallel", envvar="AEROFORGE_MAX_PARALLEL", default=None, type=click.IntRange(1))
@click.option("--serial", is_flag=True, default=None)
def resume(root, from_last, max_parallel, serial):
    """Continue an interrupted run; completed tasks are not re-executed."""
    def go():
        kw = {}
        if max_parallel is not None:
            kw["max_parallel"] = max_parallel
        if serial:
            kw["serial"] = True
        return _execute(Pipeline.resume(root, **kw))
    sys.exit(_guard(go))


@main.command("report")
@click.option("--root", envvar="AEROFORGE_ROOT", required=True, type=click.Path(file_okay=False))
@click.option("--format", "fmt", type=click.Choice(["md", "csv"]), default="md", show_default=True)
def report_cmd(root, fmt):
    """Regenerate result.md and the multi-case tables from a (possibly partial) workspace."""
    def go():
        ws = ProjectWorkspace.open(root)
        reporting.write_report(ws)
        if fmt == "md":
            click.echo((ws.root / "airfoil/result.md").read_text(), nl=False)
        else:
            for name in ("aerodynamic_data.csv", "acoustic_data.csv"):
                click.echo(f"# {reporting.ANALYSIS}/{name}")
                click.echo((ws.root / reporting.ANALYSIS / name).read_text(), nl=False)
        return EXIT_OK
    sys.exit(_guard(go))


@main.command()
@click.option("--root", envvar="AEROFORGE_ROOT", required=True, type=click.Path(file_okay=False))
def status(root):
    """Task states from the last run report and checkpoint inventory."""
    def go():
        ws = ProjectWorkspace.open(root)
        path = ws.root / "run_report.json"
        if not path.exists():
            click.echo("no run report yet")
        else:
            rep = json.loads(path.read_text())
            nodes = rep["scheduler"]["nodes"]
            counts: dict[str, int] = {}
            for n in nodes.values():
                counts[n["status"]] = counts.get(n["status"], 0) + 1
            click.echo(f"status: {rep['status']}; tasks: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
        ckpts = sorted(p.stem.replace(".state", "") for p in (ws.root / "checkpoints").glob("*.state.gz"))
        click.echo(f"checkpoints: {', '.join(ckpts) if ckpts else 'none'}")
        return EXIT_OK
    sys.exit(_guard(go))


if __name__ == "__main__":
    main()
