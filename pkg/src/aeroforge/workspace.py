"""File-mediated data exchange with an append-only provenance ledger.

Layout of a project root::

    pipeline.log
    provenance.log
    airfoil/idea.json, result.md, aerodynamics_plan.md, acoustics_plan.md
    airfoil/multi_case_analysis/...
    sim_<AIRFOIL>_<U>ms_aoa<A>/        one directory per aero-acoustic case
    cfd_results/forces.dat
    structures/, optimization/, knowledge/, checkpoints/
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path, PurePosixPath

from .domain import RequirementSpec, normalize_role

LAYOUT_VERSION = "1"
LEDGER_NAME = "provenance.log"
LOG_NAME = "pipeline.log"
IDEA_PATH = "airfoil/idea.json"
# bookkeeping that is not itself an exchanged artifact
EXEMPT_PREFIXES = (LOG_NAME, LEDGER_NAME, "checkpoints/")

MANDATORY_PROJECT = (
    LOG_NAME,
    "airfoil/idea.json",
    "airfoil/result.md",
    "airfoil/aerodynamics_plan.md",
    "airfoil/acoustics_plan.md",
    "airfoil/multi_case_analysis/aerodynamic_data.csv",
    "airfoil/multi_case_analysis/plot_aerodynamic_analysis.png",
    "airfoil/multi_case_analysis/acoustic_data.csv",
    "airfoil/multi_case_analysis/plot_acoustic_analysis.png",
)
MANDATORY_CASE = (
    "mesh.md",
    "airfoil.geo",
    "constant/",
    "system/",
    "0/",
    "Allrun",
    "acoustics_data/flow_field.json",
    "acoustics_data/bpm_input.json",
    "acoustics_data/boundary_layer.json",
    "postProcessing/forceCoeffs/0/coefficient.dat",
    "postProcessing/integrated/force_coefficients.csv",
    "postProcessing/integrated/boundary_layer.csv",
    "postProcessing/integrated/cp_data.csv",
    "postProcessing/integrated/acoustics/acoustic_metrics.csv",
    "postProcessing/integrated/acoustics/third_octave_spectrum.csv",
    "VTK/",
)
# produced only when the external solver toolchain runs
ADAPTER_ONLY_CASE = (
    "airfoil.msh",
    "postProcessing/surfaces/",
    "postProcessing/integrated/figures/",
    "VTK/openfoam.vtm.series",
)


class WorkspaceError(Exception):
    pass


class PathEscapeError(WorkspaceError):
    pass


class MissingArtifactError(WorkspaceError):
    pass


class DigestMismatchError(WorkspaceError):
    pass


class ConcurrentPublishError(WorkspaceError):
    pass


class ProvenanceError(WorkspaceError):
    pass


def md5_hex(content: bytes) -> str:
    return hashlib.md5(content).hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def case_dir_name(airfoil: str, velocity: float, aoa: float) -> str:
    name = airfoil if airfoil.upper().startswith("NACA") else f"NACA{airfoil}"
    return f"sim_{name.upper()}_{velocity:g}ms_aoa{aoa:g}"


@dataclass(frozen=True)
class ArtifactRecord:
    path: str
    producer: str
    consumers: tuple[str, ...] = ()
    digest: str = ""
    timestamp: str = ""

    def to_json(self) -> dict:
        return {"path": self.path, "producer": self.producer, "consumers": list(self.consumers),
                "digest": self.digest, "timestamp": self.timestamp}


@dataclass
class ProjectWorkspace:
    root: Path
    layout_version: str = LAYOUT_VERSION
    case_dirs: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.root = Path(self.root).resolve()
        self._ledger_lock = threading.Lock()
        self._state_lock = threading.Lock()
        self._path_locks: dict[str, threading.Lock] = {}
        self._in_flight: set[str] = set()
        self._index: dict[str, ArtifactRecord] = {}
        self._replay()

    # -- construction -------------------------------------------------
    @classmethod
    def init_project(cls, spec: RequirementSpec, root, force: bool = False) -> "ProjectWorkspace":
        root = Path(root)
        if root.exists():
            if not root.is_dir():
                raise WorkspaceError(f"{root} is not a directory")
            if any(root.iterdir()) and not force:
                raise WorkspaceError(f"{root} is not empty (use force to reuse it)")
            if force:
                _clear_dir(root)
        try:
            root.mkdir(parents=True, exist_ok=True)
            probe = root / f".probe-{uuid.uuid4().hex}"
            probe.write_bytes(b"")
            probe.unlink()
        except OSError as exc:
            raise WorkspaceError(f"{root} is not writable: {exc}") from exc
        for sub in ("airfoil/multi_case_analysis", "checkpoints", "knowledge"):
            (root / sub).mkdir(parents=True, exist_ok=True)
        (root / LOG_NAME).touch()
        (root / LEDGER_NAME).touch()
        ws = cls(root)
        ws.publish_json(IDEA_PATH, spec.to_dict(), producer="chief")
        return ws

    @classmethod
    def open(cls, root) -> "ProjectWorkspace":
        root = Path(root)
        if not (root / LEDGER_NAME).exists():
            raise WorkspaceError(f"{root} is not a project workspace")
        return cls(root)

    def _replay(self):
        ledger = self.root / LEDGER_NAME
        if not ledger.exists():
            return
        for line in ledger.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            path = entry["path"]
            if entry["event"] == "publish":
                prev = self._index.get(path)
                consumers = prev.consumers if prev else ()
                self._index[path] = ArtifactRecord(path, entry["producer"], consumers, entry["digest"], entry["timestamp"])
            elif entry["event"] == "consume" and path in self._index:
                rec = self._index[path]
                if entry["consumer"] not in rec.consumers:
                    self._index[path] = replace(rec, consumers=rec.consumers + (entry["consumer"],))

    # -- paths ----------------------------------------------------------
    def resolve(self, rel) -> tuple[str, Path]:
        rel = str(rel).replace("\\", "/")
        pure = PurePosixPath(rel)
        if pure.is_absolute() or ".." in pure.parts or not pure.parts:
            raise PathEscapeError(f"path escapes workspace: {rel!r}")
        target = (self.root / pure).resolve()
        if not target.is_relative_to(self.root):
            raise PathEscapeError(f"path escapes workspace: {rel!r}")
        return pure.as_posix(), target

    def path(self, rel) -> Path:
        return self.resolve(rel)[1]

    def exists(self, rel) -> bool:
        return self.path(rel).exists()

    def _lock_for(self, rel: str) -> threading.Lock:
        with self._state_lock:
            return self._path_locks.setdefault(rel, threading.Lock())

    # -- ledger ---------------------------------------------------------
    def _append(self, entry: dict):
        line = json.dumps(entry, sort_keys=True) + "\n"
        with self._ledger_lock:
            with open(self.root / LEDGER_NAME, "a", encoding="utf-8") as fh:
                fh.write(line)

    def artifacts(self) -> list[ArtifactRecord]:
        with self._state_lock:
            return [self._index[k] for k in sorted(self._index)]

    def record(self, rel) -> ArtifactRecord | None:
        return self._index.get(self.resolve(rel)[0])

    # -- publish / read ---------------------------------------------------
    def publish(self, record: ArtifactRecord | str, content: bytes, producer: str | None = None,
                consumers=()) -> ArtifactRecord:
        """Atomically write ``content`` and append a producer entry to the ledger."""
        if isinstance(record, str):
            record = ArtifactRecord(record, producer or "", tuple(consumers))
        rel, target = self.resolve(record.path)
        role = normalize_role(record.producer)
        digest = md5_hex(content)
        with self._state_lock:
            if rel in self._in_flight:
                raise ConcurrentPublishError(f"concurrent publish to {rel}")
            self._in_flight.add(rel)
        try:
            with self._lock_for(rel):
                prev = self._index.get(rel)
                if prev is not None and prev.producer != role:
                    raise ProvenanceError(f"{rel} already produced by {prev.producer}, not {role}")
                if prev is not None and prev.digest == digest and target.exists() \
                        and md5_hex(target.read_bytes()) == digest:
                    return prev
                target.parent.mkdir(parents=True, exist_ok=True)
                tmp = target.with_name(f".{target.name}.{uuid.uuid4().hex}.tmp")
                try:
                    with open(tmp, "wb") as fh:
                        fh.write(content)
                        fh.flush()
                        os.fsync(fh.fileno())
                    os.replace(tmp, target)
                finally:
                    if tmp.exists():
                        tmp.unlink()
                if md5_hex(target.read_bytes()) != digest:
                    raise DigestMismatchError(f"read-back digest mismatch for {rel}")
                consumers_all = tuple(dict.fromkeys((prev.consumers if prev else ()) + tuple(record.consumers)))
                new = ArtifactRecord(rel, role, consumers_all, digest, utc_now())
                self._append({"event": "publish", **new.to_json()})
                with self._state_lock:
                    self._index[rel] = new
                return new
        finally:
            with self._state_lock:
                self._in_flight.discard(rel)

    def publish_text(self, rel, text: str, producer: str, consumers=()) -> ArtifactRecord:
        return self.publish(ArtifactRecord(str(rel), producer, tuple(consumers)), text.encode("utf-8"))

    def publish_json(self, rel, data, producer: str, consumers=()) -> ArtifactRecord:
        text = json.dumps(data, indent=2, sort_keys=True) + "\n"
        return self.publish_text(rel, text, producer, consumers)

    def read_for(self, consumer: str, rel) -> bytes:
        """Return verified content of a published artifact and log the consumption."""
        role = normalize_role(consumer)
        rel, target = self.resolve(rel)
        with self._lock_for(rel):
            rec = self._index.get(rel)
            if rec is None or not target.exists():
                raise MissingArtifactError(f"artifact not published: {rel}")
            content = target.read_bytes()
            if md5_hex(content) != rec.digest:
                raise DigestMismatchError(f"digest mismatch for {rel}")
            self._append({"event": "consume", "path": rel, "consumer": role, "timestamp": utc_now()})
            with self._state_lock:
                if role not in rec.consumers:
                    self._index[rel] = replace(rec, consumers=rec.consumers + (role,))
        return content

    def read_text_for(self, consumer: str, rel) -> str:
        return self.read_for(consumer, rel).decode("utf-8")

    def read_json_for(self, consumer: str, rel):
        return json.loads(self.read_for(consumer, rel))

    def audit(self, paths=None) -> list[str]:
        """Paths whose on-disk content no longer matches the ledger digest."""
        bad = []
        for rec in self.artifacts():
            if paths is not None and rec.path not in paths:
                continue
            target = self.root / rec.path
            if not target.exists() or md5_hex(target.read_bytes()) != rec.digest:
                bad.append(rec.path)
        return bad

    def provenance_violations(self) -> list[str]:
        """Files without exactly one producing entry, or ledger entries without files."""
        out = []
        for f in sorted(self.root.rglob("*")):
            if not f.is_file():
                continue
            rel = f.relative_to(self.root).as_posix()
            if any(rel == p or rel.startswith(p) for p in EXEMPT_PREFIXES):
                continue
            if rel not in self._index:
                out.append(f"{rel}: no producer entry")
        for rec in self.artifacts():
            if not (self.root / rec.path).exists():
                out.append(f"{rec.path}: ledger entry without file")
        return out


def _clear_dir(root: Path):
    for child in sorted(root.iterdir()):
        if child.is_dir() and not child.is_symlink():
            import shutil
            shutil.rmtree(child)
        else:
            child.unlink()


def case_directories(root) -> list[Path]:
    return sorted(p for p in Path(root).iterdir() if p.is_dir() and p.name.startswith("sim_"))


def conformance_report(root) -> dict[str, list[str]]:
    """Check a finished project tree against the storage layout.

    Returns ``missing`` (mandatory entries not found) and ``adapter_only``
    (entries that only the external-solver path produces and are absent).
    """
    root = Path(root)
    missing, adapter = [], []

    def present(base: Path, entry: str) -> bool:
        p = base / entry.rstrip("/")
        if entry.endswith("/"):
            return p.is_dir() and any(p.iterdir())
        return p.is_file()

    for entry in MANDATORY_PROJECT:
        if not present(root, entry):
            missing.append(entry)
    cases = case_directories(root)
    if not cases:
        missing.append("sim_*/")
    for case in cases:
        for entry in MANDATORY_CASE:
            if not present(case, entry):
                missing.append(f"{case.name}/{entry}")
        for entry in ADAPTER_ONLY_CASE:
            if not present(case, entry):
                adapter.append(f"{case.name}/{entry}")
    return {"missing": missing, "adapter_only": adapter}


_TS = re.compile(r"\d{4}-\d\d-\d\d[T ]\d\d:\d\d:\d\d(?:[.,]\d+)?(?:\+00:00|Z)?")
_DURATION = re.compile(r'("(?:wall_s|elapsed_s|started_s|finished_s|overhead_s|makespan_s)"\s*:\s*)[-0-9.eE+]+')
_LOG_DURATION = re.compile(r"(wall=)[0-9.]+s")


def normalize_timestamps(text: str) -> str:
    text = _TS.sub("<ts>", text)
    text = _DURATION.sub(r"\1<t>", text)
    return _LOG_DURATION.sub(r"\1<t>s", text)


_NORMALIZED = (".log", ".json", ".meta", ".md")


def _mask_ledger_digests(text: str) -> str:
    # digests of timestamped files change run to run; their masked content is compared directly
    out = []
    for line in text.splitlines():
        try:
            entry = json.loads(line)
        except ValueError:
            out.append(line)
            continue
        if "digest" in entry and PurePosixPath(entry.get("path", "")).suffix in _NORMALIZED:
            entry["digest"] = "<digest>"
        out.append(json.dumps(entry, sort_keys=True))
    return "\n".join(out) + "\n"


def tree_snapshot(root) -> dict[str, bytes]:
    """Map of relative path to content with timestamps and durations masked."""
    root = Path(root)
    snap = {}
    for f in sorted(root.rglob("*")):
        if not f.is_file():
            continue
        rel = f.relative_to(root).as_posix()
        data = f.read_bytes()
        if f.suffix in _NORMALIZED:
            text = normalize_timestamps(data.decode("utf-8"))
            if rel == LEDGER_NAME:
                text = _mask_ledger_digests(text)
            data = text.encode("utf-8")
        snap[rel] = data
    return snap
