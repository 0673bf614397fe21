import csv
import io
import struct

import pytest

from aeroforge import report as reporting
from aeroforge.pipeline import Pipeline, PipelineOptions, bundled_spec
from aeroforge.workspace import ProjectWorkspace


def _png_text_keys(data: bytes) -> list[str]:
    assert data[:8] == b"\x89PNG\r\n\x1a\n"
    keys, pos = [], 8
    while pos < len(data):
        (length,), kind = struct.unpack(">I", data[pos:pos + 4]), data[pos + 4:pos + 8]
        body = data[pos + 8:pos + 8 + length]
        if kind in (b"tEXt", b"iTXt", b"zTXt"):
            keys.append(body.split(b"\0", 1)[0].decode("latin-1"))
        pos += 12 + length
    return keys


@pytest.fixture(scope="module")
def partial(tmp_path_factory):
    root = tmp_path_factory.mktemp("partial")
    opts = PipelineOptions(serial=True, bo_budget=4, fixture="uav", stop_after="acoustics")
    res = Pipeline.create(bundled_spec(), root, opts, sleep=lambda s: None).run()
    assert res.status == "interrupted"
    return ProjectWorkspace.open(root)


def test_partial_report_marks_missing(partial):
    outputs = reporting.write_report(partial)
    assert "airfoil/result.md" in outputs
    md = (partial.root / "airfoil/result.md").read_text()
    assert "- aerodynamics: 12/12 cases\n" in md
    assert "- acoustics: 12/12 cases\n" in md
    assert "- selection: MISSING" in md
    assert "- structural sweep: MISSING" in md
    assert "- optimization: MISSING" in md


def test_tables_have_headers_and_rows(partial):
    reporting.write_report(partial)
    base = partial.root / reporting.ANALYSIS
    aero = list(csv.DictReader(io.StringIO((base / "aerodynamic_data.csv").read_text())))
    acoustic = list(csv.DictReader(io.StringIO((base / "acoustic_data.csv").read_text())))
    assert len(aero) == 12 and tuple(aero[0]) == reporting.AERO_FIELDS
    assert len(acoustic) == 12 and tuple(acoustic[0]) == reporting.ACOUSTIC_FIELDS
    for row in aero:
        assert float(row["lift_to_drag"]) == pytest.approx(float(row["cl"]) / float(row["cd"]), rel=1e-6)


def test_plots_are_png_without_software_tag(partial):
    reporting.write_report(partial)
    for name in ("plot_aerodynamic_analysis.png", "plot_acoustic_analysis.png"):
        data = (partial.root / reporting.ANALYSIS / name).read_bytes()
        assert "Software" not in _png_text_keys(data)
    fig = reporting.plt.figure()
    buf = io.BytesIO()
    fig.savefig(buf, format="png")
    reporting.plt.close(fig)
    assert "Software" in _png_text_keys(buf.getvalue())  # the reader does see default tags


def test_report_is_reproducible(partial):
    reporting.write_report(partial)
    first = {p: (partial.root / p).read_bytes() for p in reporting.write_report(partial)}
    reporting.write_report(partial)
    assert all((partial.root / p).read_bytes() == b for p, b in first.items())


def test_empty_plots_still_render():
    assert _png_text_keys(reporting.plot_aerodynamics([])) is not None
    assert reporting.plot_acoustics([], {})[:4] == b"\x89PNG"


def test_report_needs_matrix(tmp_path):
    ws = ProjectWorkspace.init_project(bundled_spec(), tmp_path)
    with pytest.raises(reporting.ReportError):
        reporting.write_report(ws)
