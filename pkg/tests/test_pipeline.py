import json

import pytest

from aeroforge.knowledge import KnowledgeStore
from aeroforge.pipeline import (PHASES, SELECTION_PATH, SWEEP_CSV, NoCheckpointError, Pipeline, PipelineOptions,
                                bundled_spec, run_pipeline)
from aeroforge.structures import sweep
from aeroforge.workspace import ProjectWorkspace, conformance_report

CSVS = ("airfoil/multi_case_analysis/aerodynamic_data.csv", "airfoil/multi_case_analysis/acoustic_data.csv",
        "airfoil/multi_case_analysis/selection_ranking.csv", SWEEP_CSV, "optimization/pareto_front.csv",
        "optimization/bo_history.csv")


def _opts(**kw):
    base = dict(serial=True, bo_budget=4, fixture="uav")
    base.update(kw)
    return PipelineOptions(**base)


def _quiet():
    return {"sleep": lambda s: None}


@pytest.fixture(scope="module")
def baseline(tmp_path_factory):
    root = tmp_path_factory.mktemp("baseline")
    res = run_pipeline(bundled_spec(), root, _opts(), **_quiet())
    return root, res


def test_full_run_succeeds(baseline):
    root, res = baseline
    assert res.status == "success" and res.exit_code == 0
    assert len(res.report.nodes) == 56
    assert all(n.attempts == 1 for n in res.report.nodes.values())
    assert conformance_report(root)["missing"] == []
    win = json.loads((root / SELECTION_PATH).read_text())
    assert win["airfoil"] == "NACA4412"
    assert ProjectWorkspace.open(root).provenance_violations() == []
    assert ProjectWorkspace.open(root).audit() == []


def test_options_validation():
    with pytest.raises(ValueError):
        PipelineOptions(stop_after="nowhere")
    with pytest.raises(ValueError):
        PipelineOptions(max_parallel=0)
    with pytest.raises(ValueError):
        PipelineOptions(solver="cfd")
    opts = _opts(faults={"x": {"kind": "mesh", "times": 1}})
    assert PipelineOptions.from_dict(opts.to_dict()) == opts
    assert "report" in PHASES and PHASES.index("aero") < PHASES.index("structures")


def test_resume_matches_uninterrupted(baseline, tmp_path):
    root, _ = baseline
    first = Pipeline.create(bundled_spec(), tmp_path, _opts(stop_after="aero"), **_quiet()).run()
    assert first.status == "interrupted" and first.exit_code == 4 and first.checkpoint
    done_before = {t for t, n in first.report.nodes.items() if n.status == "done"}
    assert done_before and all(t.split(":")[0] in ("geometry", "aero", "acoustics") for t in done_before)
    aero = {t for t in first.report.nodes if t.startswith("aero:")}
    assert aero <= done_before

    second = Pipeline.resume(tmp_path, **_quiet()).run()
    assert second.status == "success"
    assert not done_before & set(second.report.start_order)
    for rel in CSVS:
        assert (tmp_path / rel).read_bytes() == (root / rel).read_bytes(), rel


def test_resume_without_checkpoint(tmp_path):
    ProjectWorkspace.init_project(bundled_spec(), tmp_path)
    with pytest.raises(NoCheckpointError):
        Pipeline.resume(tmp_path)


def test_divergence_recovered_on_second_attempt(tmp_path):
    pipe = Pipeline.create(bundled_spec(), tmp_path, _opts(stop_after="aero"), **_quiet())
    pipe.plan()
    cid = pipe.matrix.cases[0].case_id
    pipe.options.faults = {f"aero:{cid}": {"kind": "divergence", "times": 1}}
    res = pipe.run()
    node = res.report.nodes[f"aero:{cid}"]
    assert node.status == "done" and node.attempts == 2
    fv = (tmp_path / cid / "system/fvSolution").read_text()
    assert "0.3;" in fv and "0.2;" in fv
    assert "deltaT          0.5" in (tmp_path / cid / "system/controlDict").read_text()
    log = (tmp_path / "pipeline.log").read_text()
    assert "SolverDivergence classified; strategy adjust_relaxation" in log


def test_mesh_failure_refines_twice(tmp_path):
    pipe = Pipeline.create(bundled_spec(), tmp_path, _opts(stop_after="geometry"), **_quiet())
    pipe.plan()
    cid = pipe.matrix.cases[0].case_id
    pipe.options.faults = {f"geometry:{cid}": {"kind": "mesh", "times": 2}}
    res = pipe.run()
    assert res.report.nodes[f"geometry:{cid}"].attempts == 3
    assert "lc = 0.00128;" in (tmp_path / cid / "airfoil.geo").read_text()
    other = pipe.matrix.cases[1].case_id
    assert "lc = 0.002;" in (tmp_path / other / "airfoil.geo").read_text()


def test_persistent_task_failure_stops_descendants(tmp_path):
    pipe = Pipeline.create(bundled_spec(), tmp_path, _opts(), **_quiet())
    pipe.plan()
    cid = pipe.matrix.cases[0].case_id
    pipe.options.faults = {f"geometry:{cid}": {"kind": "unknown", "times": None}}
    res = pipe.run()
    assert res.status == "failed" and res.exit_code == 3
    assert f"geometry:{cid}" in res.failed
    assert res.report.nodes[f"geometry:{cid}"].attempts == 3
    assert res.report.nodes["report"].status != "done"
    # unaffected cases still produced their results
    assert res.report.nodes[f"aero:{pipe.matrix.cases[1].case_id}"].status == "done"
    assert "MISSING" in (tmp_path / "airfoil/result.md").read_text()


def test_struct_config_failure_is_recorded(tmp_path):
    label = sweep()[5].label
    waits = []
    res = run_pipeline(bundled_spec(), tmp_path, _opts(faults={label: {"kind": "mesh", "times": None}}),
                       sleep=waits.append)
    assert res.status == "failed" and res.exit_code == 3
    assert list(res.sweep_failures) == [label]
    assert waits == [2, 4]
    summary = json.loads((tmp_path / "structures/sweep_summary.json").read_text())
    assert summary["succeeded"] == 431 and summary["failed_labels"] == [label]
    notes = KnowledgeStore(ProjectWorkspace.open(tmp_path)).query(["known-failure", label])
    assert notes and "3 attempts" in notes[0].text


def test_transient_struct_failure_recovers(tmp_path):
    label = sweep()[7].label
    waits = []
    pipe = Pipeline.create(bundled_spec(), tmp_path, _opts(stop_after="structures",
                                                           faults={label: {"kind": "mesh", "times": 1}}),
                           sleep=waits.append)
    res = pipe.run()
    assert res.status == "interrupted" and res.sweep_failures == {}
    assert waits == [2]
    assert (tmp_path / f"structures/sweep/{label}/result.json").exists()
