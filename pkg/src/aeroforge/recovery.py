"""Checkpointing, log classification, recovery strategies and retry with backoff."""

from __future__ import annotations

import copy
import errno
import gc
import gzip
import hashlib
import json
import logging
import os
import re
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Callable

from .errors import ErrorKind, TaskFailure

log = logging.getLogger(__name__)

CHECKPOINT_WINDOW = 10
CHECKPOINT_INTERVAL = 10
MAX_RETRIES = 3

PATCH_REMAP = (("walls", "wall"), ("front", "empty"), ("back", "empty"))


# ---------------------------------------------------------------- classification

@dataclass(frozen=True)
class ErrorClass:
    kind: ErrorKind
    evidence: tuple[str, ...] = ()


def _compile(doc: dict) -> tuple[tuple[ErrorKind, tuple[re.Pattern, ...]], ...]:
    rules = []
    for entry in doc["rules"]:
        rules.append((ErrorKind(entry["kind"]), tuple(re.compile(p) for p in entry["patterns"])))
    return tuple(rules)


@lru_cache(maxsize=None)
def _bundled_rules():
    text = resources.files("aeroforge.data").joinpath("recovery_rules.json").read_text()
    return _compile(json.loads(text))


def load_rules(path=None):
    if path is None:
        return _bundled_rules()
    return _compile(json.loads(Path(path).read_text()))


def classify(logs: str, rules=None) -> ErrorClass:
    """First rule class (in table order) with any matching line wins."""
    rules = _bundled_rules() if rules is None else rules
    lines = (logs or "").splitlines()
    for kind, patterns in rules:
        hits = tuple(line for line in lines if any(p.search(line) for p in patterns))
        if hits:
            return ErrorClass(kind, hits)
    return ErrorClass(ErrorKind.UNKNOWN)


def classify_exception(exc: BaseException, rules=None) -> ErrorClass:
    if isinstance(exc, TaskFailure):
        if exc.kind is not None:
            return ErrorClass(exc.kind, tuple((exc.logs or str(exc)).splitlines()[-5:]))
        return classify(exc.logs or str(exc), rules)
    if isinstance(exc, MemoryError):
        return ErrorClass(ErrorKind.RESOURCE, (repr(exc),))
    if isinstance(exc, OSError) and exc.errno in (errno.ENOSPC, errno.ENOMEM):
        return ErrorClass(ErrorKind.RESOURCE, (str(exc),))
    return classify(f"{type(exc).__name__}: {exc}", rules)


# ---------------------------------------------------------------- strategies

@dataclass(frozen=True)
class SolverParams:
    refinement: float = 1.0
    relax_p: float = 0.3
    relax_u: float = 0.7
    dt_scale: float = 1.0
    patch_types: tuple[tuple[str, str], ...] = ()

    def violations(self) -> list[str]:
        out = []
        for name in ("refinement", "relax_p", "relax_u", "dt_scale"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                out.append(f"{name}={v} outside (0, 1]")
        return out

    def to_dict(self) -> dict:
        return {"refinement": self.refinement, "relax_p": self.relax_p, "relax_u": self.relax_u,
                "dt_scale": self.dt_scale, "patch_types": dict(self.patch_types)}

    @classmethod
    def from_dict(cls, data: dict) -> "SolverParams":
        data = dict(data)
        data["patch_types"] = tuple(sorted(data.get("patch_types", {}).items()))
        return cls(**data)


@dataclass(frozen=True)
class RecoveryStrategy:
    action: str
    params: SolverParams
    note: str = ""


def strategy_for(error: ErrorClass, attempt: int, params: SolverParams) -> RecoveryStrategy:
    """Domain-specific adjustment; repeated attempts compound the tightening."""
    if attempt < 1:
        raise ValueError("attempt counts from 1")
    kind = error.kind
    if kind is ErrorKind.MESH:
        new = replace(params, refinement=params.refinement * 0.8)
        return RecoveryStrategy("refine_mesh", new, f"refinement -> {new.refinement:.4g}")
    if kind is ErrorKind.DIVERGENCE:
        tighten = 0.75 ** (attempt - 1)
        new = replace(params,
                      relax_p=min(params.relax_p, 0.3 * tighten),
                      relax_u=min(params.relax_u, 0.2 * tighten),
                      dt_scale=params.dt_scale * 0.5)
        return RecoveryStrategy("adjust_relaxation", new,
                                f"relax p={new.relax_p:.3g} U={new.relax_u:.3g} dt x{new.dt_scale:.3g}")
    if kind is ErrorKind.BOUNDARY:
        merged = dict(params.patch_types)
        merged.update(PATCH_REMAP)
        return RecoveryStrategy("fix_boundaries", replace(params, patch_types=tuple(sorted(merged.items()))),
                                "walls->wall, front/back->empty")
    return RecoveryStrategy("cleanup_retry", params, "garbage collection before plain retry")


# ---------------------------------------------------------------- checkpoints

class CheckpointCorruptError(RuntimeError):
    pass


@dataclass(frozen=True)
class Checkpoint:
    checkpoint_id: str
    phase: str
    progress: float
    digest: str
    timestamp: str
    size: int = 0

    @property
    def seq(self) -> int:
        return int(self.checkpoint_id.split("-")[1])

    def to_dict(self) -> dict:
        return {"checkpoint_id": self.checkpoint_id, "phase": self.phase, "progress": self.progress,
                "digest": self.digest, "timestamp": self.timestamp, "size": self.size}


def encode_state(state: Any) -> bytes:
    raw = json.dumps(state, sort_keys=True, separators=(",", ":")).encode()
    return gzip.compress(raw, mtime=0)


def decode_state(blob: bytes) -> Any:
    return json.loads(gzip.decompress(blob).decode())


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        if exc.errno in (errno.ENOSPC, errno.EDQUOT):
            raise TaskFailure(f"checkpoint write failed: {exc}", logs="No space left on device",
                              kind=ErrorKind.RESOURCE) from exc
        raise


class CheckpointStore:
    """Sliding window of compressed state snapshots in a single directory."""

    def __init__(self, directory, window: int = CHECKPOINT_WINDOW,
                 validator: Callable[[Any], list] | None = None, clock=None):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.window = window
        self.validator = validator
        self.clock = clock or (lambda: datetime.now(timezone.utc))

    def _paths(self, checkpoint_id: str) -> tuple[Path, Path]:
        return (self.directory / f"{checkpoint_id}.state.gz", self.directory / f"{checkpoint_id}.meta")

    def list(self) -> list[Checkpoint]:
        out = []
        for meta in self.directory.glob("ckpt-*.meta"):
            try:
                out.append(Checkpoint(**json.loads(meta.read_text())))
            except (ValueError, TypeError):
                log.warning("unreadable checkpoint sidecar %s", meta.name)
        return sorted(out, key=lambda c: c.seq)

    def save(self, state: Any, phase: str, progress: float) -> Checkpoint:
        if self.validator is not None:
            problems = self.validator(state)
            if problems:
                raise ValueError(f"refusing to checkpoint invalid state: {problems}")
        existing = self.list()
        seq = existing[-1].seq + 1 if existing else 1
        blob = encode_state(state)
        ckpt = Checkpoint(f"ckpt-{seq:06d}", phase, float(progress), hashlib.md5(blob).hexdigest(),
                          self.clock().isoformat(timespec="seconds"), len(blob))
        state_path, meta_path = self._paths(ckpt.checkpoint_id)
        _atomic_write(state_path, blob)
        _atomic_write(meta_path, json.dumps(ckpt.to_dict(), indent=2, sort_keys=True).encode())
        self._prune()
        return ckpt

    def _prune(self) -> None:
        items = self.list()
        for old in items[: max(0, len(items) - self.window)]:
            for p in self._paths(old.checkpoint_id):
                p.unlink(missing_ok=True)

    def load(self, checkpoint_id: str) -> Any:
        meta = next((c for c in self.list() if c.checkpoint_id == checkpoint_id), None)
        if meta is None:
            raise KeyError(checkpoint_id)
        blob = self._paths(checkpoint_id)[0].read_bytes()
        if hashlib.md5(blob).hexdigest() != meta.digest:
            raise CheckpointCorruptError(f"{checkpoint_id}: digest mismatch")
        try:
            state = decode_state(blob)
        except (OSError, EOFError, ValueError) as exc:
            raise CheckpointCorruptError(f"{checkpoint_id}: {exc}") from exc
        if self.validator is not None:
            problems = self.validator(state)
            if problems:
                raise CheckpointCorruptError(f"{checkpoint_id}: invalid state {problems}")
        return state

    def latest_valid(self) -> tuple[Checkpoint, Any] | None:
        for ckpt in reversed(self.list()):
            try:
                return ckpt, self.load(ckpt.checkpoint_id)
            except (CheckpointCorruptError, FileNotFoundError) as exc:
                log.warning("skipping checkpoint: %s", exc)
        return None


def should_checkpoint(stage: int, phase_boundary: bool, interval: int = CHECKPOINT_INTERVAL) -> bool:
    return phase_boundary or (stage > 0 and stage % interval == 0)


# ---------------------------------------------------------------- retry loop

@dataclass
class RetryOutcome:
    state: Any
    success: bool
    attempts: int
    waits: list[float] = field(default_factory=list)
    errors: list[ErrorClass] = field(default_factory=list)
    strategies: list[RecoveryStrategy] = field(default_factory=list)
    params: SolverParams = field(default_factory=SolverParams)
    last_exception: BaseException | None = None


def retry_loop(execute: Callable[[Any, SolverParams, int], Any], state: Any,
               max_retries: int = MAX_RETRIES, params: SolverParams | None = None,
               sleep: Callable[[float], None] = time.sleep,
               validate: Callable[[Any], list] | None = None,
               rules=None, task_id: str = "") -> RetryOutcome:
    """Run ``execute(state, params, attempt)`` up to ``max_retries`` times.

    ``state`` is the rollback point: each attempt receives a deep copy, so a
    failed attempt can never leak partial mutations.  Between attempts the
    error is classified, the strategy applied and 2**attempt seconds waited.
    """
    if max_retries < 1:
        raise ValueError("max_retries must be >= 1")
    params = params or SolverParams()
    checkpoint = copy.deepcopy(state)
    out = RetryOutcome(copy.deepcopy(checkpoint), False, 0, params=params)
    for attempt in range(1, max_retries + 1):
        out.attempts = attempt
        try:
            result = execute(copy.deepcopy(checkpoint), params, attempt)
            problems = validate(result) if validate else []
            if problems:
                raise TaskFailure(f"integrity validation failed: {problems}", logs="\n".join(map(str, problems)))
            out.state, out.success, out.params = result, True, params
            return out
        except Exception as exc:
            err = classify_exception(exc, rules)
            out.errors.append(err)
            out.last_exception = exc
            out.state = copy.deepcopy(checkpoint)
            log.warning("task %s attempt %d failed (%s): %s", task_id, attempt, err.kind.value, exc)
            if attempt == max_retries:
                break
            strategy = strategy_for(err, attempt, params)
            out.strategies.append(strategy)
            params = strategy.params
            if strategy.action == "cleanup_retry":
                gc.collect()
            wait = float(2 ** attempt)
            out.waits.append(wait)
            sleep(wait)
    out.params = params
    return out
