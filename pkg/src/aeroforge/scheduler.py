"""Bounded-parallel execution of a task DAG with duration-based priority."""

from __future__ import annotations

import heapq
import logging
import threading
import time
from collections import defaultdict, deque
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field
from typing import Any, Callable

from .domain import normalize_role
from .errors import ExecutorMissingError, GraphCycleError

log = logging.getLogger(__name__)

STATUSES = ("pending", "running", "done", "failed")

DEFAULT_DURATIONS = {
    "chief": 1.0,
    "geometry": 2.0,
    "aerodynamics": 60.0,
    "acoustics": 10.0,
    "structures": 30.0,
    "optimizer": 20.0,
}


@dataclass
class TaskNode:
    task_id: str
    agent_role: str
    phase: str = ""
    payload: dict = field(default_factory=dict)
    dependencies: tuple[str, ...] = ()
    status: str = "pending"
    priority: int = 0
    attempts: int = 0

    def __post_init__(self):
        self.agent_role = normalize_role(self.agent_role)
        self.dependencies = tuple(self.dependencies)
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    def to_dict(self) -> dict:
        return {"task_id": self.task_id, "agent_role": self.agent_role, "phase": self.phase,
                "payload": self.payload, "dependencies": list(self.dependencies),
                "status": self.status, "priority": self.priority, "attempts": self.attempts}

    @classmethod
    def from_dict(cls, data: dict) -> "TaskNode":
        return cls(**{**data, "dependencies": tuple(data.get("dependencies", ()))})


class TaskGraph:
    def __init__(self, nodes=()):
        self.nodes: dict[str, TaskNode] = {}
        for n in nodes:
            self.add(n)

    def add(self, node: TaskNode) -> TaskNode:
        if node.task_id in self.nodes:
            raise ValueError(f"duplicate task id {node.task_id}")
        self.nodes[node.task_id] = node
        return node

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, task_id: str) -> TaskNode:
        return self.nodes[task_id]

    def __iter__(self):
        return iter(self.nodes.values())

    def dependents(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = defaultdict(list)
        for n in self.nodes.values():
            for d in n.dependencies:
                out[d].append(n.task_id)
        return out

    def topological_order(self) -> list[str]:
        """Kahn's algorithm in insertion order; raises on cycles or dangling deps."""
        indeg = {}
        for n in self.nodes.values():
            for d in n.dependencies:
                if d not in self.nodes:
                    raise GraphCycleError(f"{n.task_id} depends on unknown task {d}")
            indeg[n.task_id] = len(set(n.dependencies))
        deps_of = self.dependents()
        queue = deque(t for t, k in indeg.items() if k == 0)
        order = []
        while queue:
            t = queue.popleft()
            order.append(t)
            for child in dict.fromkeys(deps_of.get(t, ())):
                indeg[child] -= 1
                if indeg[child] == 0:
                    queue.append(child)
        if len(order) != len(self.nodes):
            raise GraphCycleError("task graph contains a cycle")
        return order

    def descendants(self, task_id: str) -> set[str]:
        deps_of = self.dependents()
        seen, stack = set(), [task_id]
        while stack:
            for child in deps_of.get(stack.pop(), ()):
                if child not in seen:
                    seen.add(child)
                    stack.append(child)
        return seen

    def to_dict(self) -> dict:
        return {"nodes": [n.to_dict() for n in self.nodes.values()]}

    @classmethod
    def from_dict(cls, data: dict) -> "TaskGraph":
        return cls(TaskNode.from_dict(n) for n in data["nodes"])


@dataclass
class SchedulerConfig:
    max_parallel: int = 4
    tick_interval_ms: float = 50.0
    default_durations: dict = field(default_factory=lambda: dict(DEFAULT_DURATIONS))
    history_window: int = 10
    # measured durations feed priorities; off gives a fixed, reproducible order
    adaptive: bool = True

    def __post_init__(self):
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")


class DurationHistory:
    """Thread-safe moving window of observed durations per (role, phase)."""

    def __init__(self, window: int = 10):
        self.window = window
        self._data: dict[tuple[str, str], deque] = defaultdict(lambda: deque(maxlen=window))
        self._lock = threading.Lock()

    def record(self, role: str, phase: str, seconds: float) -> None:
        with self._lock:
            self._data[(normalize_role(role), phase)].append(float(seconds))

    def get(self, role: str, phase: str) -> list[float]:
        with self._lock:
            return list(self._data.get((normalize_role(role), phase), ()))


def estimate_duration(node: TaskNode, history: DurationHistory | None,
                      defaults: dict | None = None) -> float:
    past = history.get(node.agent_role, node.phase) if history else []
    if past:
        return sum(past) / len(past)
    defaults = DEFAULT_DURATIONS if defaults is None else defaults
    return float(defaults.get(node.agent_role, 1.0))


@dataclass
class NodeReport:
    task_id: str
    agent_role: str
    phase: str
    status: str
    attempts: int = 0
    wall_time: float = 0.0
    start: float = 0.0
    end: float = 0.0
    error: str = ""

    def to_dict(self) -> dict:
        return {"task_id": self.task_id, "agent_role": self.agent_role, "phase": self.phase,
                "status": self.status, "attempts": self.attempts, "wall_s": self.wall_time,
                "started_s": self.start, "finished_s": self.end, "error": self.error}


@dataclass
class RunReport:
    nodes: dict[str, NodeReport] = field(default_factory=dict)
    start_order: list[str] = field(default_factory=list)
    makespan: float = 0.0
    max_concurrency: int = 0
    interrupted: bool = False
    results: dict[str, Any] = field(default_factory=dict)

    @property
    def failed(self) -> list[str]:
        return [t for t, r in self.nodes.items() if r.status == "failed"]

    @property
    def succeeded(self) -> bool:
        return not self.failed and not self.interrupted

    def to_dict(self) -> dict:
        return {"makespan_s": self.makespan, "max_concurrency": self.max_concurrency,
                "interrupted": self.interrupted, "start_order": list(self.start_order),
                "nodes": {t: r.to_dict() for t, r in self.nodes.items()}}


def default_runner(node: TaskNode, fn: Callable[[TaskNode], Any]) -> tuple[Any, int]:
    return fn(node), 1


class Scheduler:
    """Runs ready nodes shortest-estimate-first under a fixed concurrency budget.

    ``runner(node, fn)`` returns ``(result, attempts)`` and raises on final
    failure; the pipeline plugs the retry loop in there.  ``on_complete`` is
    invoked on the scheduling thread after every node finishes.
    """

    def __init__(self, config: SchedulerConfig | None = None, executors: dict | None = None,
                 history: DurationHistory | None = None, runner=default_runner,
                 on_complete: Callable[[TaskNode, NodeReport, Any], None] | None = None,
                 clock: Callable[[], float] = time.perf_counter):
        self.config = config or SchedulerConfig()
        self.executors = {normalize_role(k): v for k, v in (executors or {}).items()}
        self.history = history or DurationHistory(self.config.history_window)
        self.runner = runner
        self.on_complete = on_complete
        self.clock = clock
        self._stop = threading.Event()
        self._lock = threading.Lock()
        self._running = 0

    def request_stop(self) -> None:
        self._stop.set()

    def _key(self, node: TaskNode, index: int) -> tuple:
        history = self.history if self.config.adaptive else None
        return (estimate_duration(node, history, self.config.default_durations), node.priority, index)

    def run(self, graph: TaskGraph) -> RunReport:
        order = graph.topological_order()
        missing = {n.agent_role for n in graph if n.status != "done"} - set(self.executors)
        if missing:
            raise ExecutorMissingError(f"no executor for roles: {sorted(missing)}")
        index = {t: i for i, t in enumerate(order)}
        report = RunReport()
        deps_of = graph.dependents()
        remaining = {n.task_id: len(set(n.dependencies)) for n in graph}
        ready: list[tuple] = []
        queued: set[str] = set()
        t0 = self.clock()

        def push(tid):
            if tid not in queued:
                queued.add(tid)
                heapq.heappush(ready, (*self._key(graph[tid], index[tid]), tid))

        def release(task_id):
            for child in dict.fromkeys(deps_of.get(task_id, ())):
                remaining[child] -= 1
                if remaining[child] == 0 and graph[child].status == "pending":
                    push(child)

        for n in graph:
            if n.status in ("running", "failed"):
                n.status = "pending"
        for t in order:
            if graph[t].status == "done":
                report.nodes[t] = NodeReport(t, graph[t].agent_role, graph[t].phase, "done", graph[t].attempts)
                release(t)
        for t in order:
            n = graph[t]
            if n.status == "pending" and remaining[t] == 0:
                push(t)

        def work(node: TaskNode):
            with self._lock:
                self._running += 1
                report.max_concurrency = max(report.max_concurrency, self._running)
            start = self.clock()
            try:
                return self.runner(node, self.executors[node.agent_role])
            finally:
                end = self.clock()
                with self._lock:
                    self._running -= 1
                node_times[node.task_id] = (start, end)

        node_times: dict[str, tuple[float, float]] = {}
        futures = {}
        with ThreadPoolExecutor(max_workers=self.config.max_parallel) as pool:
            while ready or futures:
                while ready and len(futures) < self.config.max_parallel and not self._stop.is_set():
                    *_, tid = heapq.heappop(ready)
                    node = graph[tid]
                    node.status = "running"
                    report.start_order.append(tid)
                    futures[pool.submit(work, node)] = tid
                if not futures:
                    break
                done, _ = wait(list(futures), timeout=self.config.tick_interval_ms / 1000.0,
                               return_when=FIRST_COMPLETED)
                for fut in sorted(done, key=lambda f: index[futures[f]]):
                    tid = futures.pop(fut)
                    node = graph[tid]
                    start, end = node_times.get(tid, (t0, t0))
                    rep = NodeReport(tid, node.agent_role, node.phase, "done", start=start - t0,
                                     end=end - t0, wall_time=end - start)
                    result = None
                    try:
                        result, attempts = fut.result()
                        node.status = "done"
                        rep.attempts = attempts
                        self.history.record(node.agent_role, node.phase, rep.wall_time)
                    except Exception as exc:
                        node.status = "failed"
                        rep.status = "failed"
                        rep.attempts = getattr(exc, "attempts", 1)
                        rep.error = f"{type(exc).__name__}: {exc}"
                        log.error("task %s failed: %s", tid, rep.error)
                    node.attempts = rep.attempts
                    report.nodes[tid] = rep
                    report.results[tid] = result
                    if node.status == "done":
                        release(tid)
                    else:
                        for d in sorted(graph.descendants(tid), key=index.get):
                            dn = graph[d]
                            if dn.status == "pending":
                                dn.status = "failed"
                                report.nodes[d] = NodeReport(d, dn.agent_role, dn.phase, "failed",
                                                             error=f"upstream {tid} failed")
                    if self.on_complete is not None:
                        self.on_complete(node, rep, result)
        report.makespan = self.clock() - t0
        report.interrupted = any(n.status == "pending" for n in graph)
        return report
