import math
import random
import threading
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aeroforge.errors import ExecutorMissingError, GraphCycleError
from aeroforge.scheduler import (DurationHistory, Scheduler, SchedulerConfig, TaskGraph, TaskNode,
                                 estimate_duration)


def _graph(edges: dict[str, tuple[str, ...]], role="geometry"):
    return TaskGraph(TaskNode(t, role, "p", dependencies=d) for t, d in edges.items())


def _simulated_makespan(durations, max_parallel):
    # list-scheduling oracle for independent tasks on identical slots
    slots = [0.0] * max_parallel
    for d in durations:
        i = min(range(max_parallel), key=slots.__getitem__)
        slots[i] += d
    return max(slots)


def test_twelve_tasks_three_waves():
    t = 0.15
    g = _graph({f"t{i:02d}": () for i in range(12)})
    sched = Scheduler(SchedulerConfig(max_parallel=4, tick_interval_ms=5),
                      {"geometry": lambda n: time.sleep(t)})
    rep = sched.run(g)
    expected = _simulated_makespan([t] * 12, 4)
    assert expected == pytest.approx(3 * t)
    assert expected <= rep.makespan <= expected + 0.25
    assert rep.max_concurrency == 4 and rep.succeeded


def test_serial_is_topological():
    g = _graph({"a": (), "b": ("a",), "c": ("a",), "d": ("b", "c"), "e": ()})
    order = []
    sched = Scheduler(SchedulerConfig(max_parallel=1, adaptive=False),
                      {"geometry": lambda n: order.append(n.task_id)})
    sched.run(g)
    pos = {t: i for i, t in enumerate(order)}
    assert len(order) == 5
    for n in g:
        for d in n.dependencies:
            assert pos[d] < pos[n.task_id]
    first = list(order)
    assert first == sched.run(_graph({"a": (), "b": ("a",), "c": ("a",), "d": ("b", "c"), "e": ()})).start_order


def test_diamond_barrier():
    times = {}

    def work(n):
        times[n.task_id] = [time.perf_counter()]
        time.sleep(0.05 if n.task_id != "C" else 0.15)
        times[n.task_id].append(time.perf_counter())

    g = _graph({"A": (), "B": ("A",), "C": ("A",), "D": ("B", "C")})
    Scheduler(SchedulerConfig(max_parallel=4, tick_interval_ms=5), {"geometry": work}).run(g)
    assert times["D"][0] >= max(times["B"][1], times["C"][1])
    assert times["B"][0] >= times["A"][1] and times["C"][0] >= times["A"][1]


def test_duration_estimates():
    node = TaskNode("x", "aero", "aero")
    assert estimate_duration(node, None) == 60.0
    h = DurationHistory()
    h.record("aero", "aero", 10)
    h.record("aero", "aero", 20)
    assert estimate_duration(node, h) == 15.0
    small = DurationHistory(window=2)
    for v in (100, 1, 3):
        small.record("chief", "p", v)
    assert small.get("chief", "p") == [1.0, 3.0]


def test_shorter_estimate_first():
    g = TaskGraph([TaskNode("slow", "aero", "aero"), TaskNode("fast", "geometry", "geometry")])
    rep = Scheduler(SchedulerConfig(max_parallel=1), {"aero": lambda n: None, "geometry": lambda n: None}).run(g)
    assert rep.start_order == ["fast", "slow"]


def test_failure_propagates_only_downstream():
    def work(n):
        if n.task_id == "bad":
            raise RuntimeError("boom")

    g = _graph({"bad": (), "child": ("bad",), "grandchild": ("child",), "sibling": ()})
    rep = Scheduler(SchedulerConfig(max_parallel=2), {"geometry": work}).run(g)
    assert rep.nodes["sibling"].status == "done"
    assert {t for t in rep.failed} == {"bad", "child", "grandchild"}
    assert rep.nodes["child"].error == "upstream bad failed"
    assert not rep.succeeded


def test_missing_executor_and_cycle():
    with pytest.raises(ExecutorMissingError):
        Scheduler(executors={}).run(_graph({"a": ()}))
    with pytest.raises(GraphCycleError):
        _graph({"a": ("b",), "b": ("a",)}).topological_order()
    with pytest.raises(GraphCycleError):
        _graph({"a": ("ghost",)}).topological_order()
    with pytest.raises(ValueError):
        SchedulerConfig(max_parallel=0)


def test_done_nodes_skipped_on_resume():
    g = _graph({"a": (), "b": ("a",), "c": ("b",)})
    g["a"].status = "done"
    g["b"].status = "running"
    ran = []
    rep = Scheduler(SchedulerConfig(max_parallel=2), {"geometry": lambda n: ran.append(n.task_id)}).run(g)
    assert ran == ["b", "c"] and rep.succeeded


def test_stop_leaves_pending():
    g = _graph({f"t{i}": () for i in range(6)})
    sched = Scheduler(SchedulerConfig(max_parallel=1, tick_interval_ms=5), {})

    def work(n):
        sched.request_stop()

    sched.executors["geometry"] = work
    rep = sched.run(g)
    assert rep.interrupted and len(rep.start_order) == 1


def test_graph_round_trip():
    g = _graph({"a": (), "b": ("a",)})
    assert TaskGraph.from_dict(g.to_dict()).to_dict() == g.to_dict()
    with pytest.raises(ValueError):
        g.add(TaskNode("a", "chief"))


def _random_dag(n, seed, p=0.05):
    rng = random.Random(seed)
    edges = {}
    for i in range(n):
        edges[f"n{i:03d}"] = tuple(f"n{j:03d}" for j in range(i) if rng.random() < p)
    names = list(edges)
    rng.shuffle(names)
    return {k: edges[k] for k in names}


class _Probe:
    def __init__(self):
        self.lock = threading.Lock()
        self.now = 0
        self.peak = 0
        self.done = set()
        self.order_ok = True

    def __call__(self, graph):
        def work(n):
            with self.lock:
                self.now += 1
                self.peak = max(self.peak, self.now)
                if not all(d in self.done for d in n.dependencies):
                    self.order_ok = False
            time.sleep(0.0005)
            with self.lock:
                self.now -= 1
                self.done.add(n.task_id)
        return work


@pytest.mark.parametrize("seed", range(100))
def test_fuzz_200_node_dags(seed):
    edges = _random_dag(200, seed)
    g = _graph(edges)
    probe = _Probe()
    rep = Scheduler(SchedulerConfig(max_parallel=4, tick_interval_ms=1), {"geometry": probe(g)}).run(g)
    assert rep.succeeded and len(probe.done) == 200
    assert probe.peak <= 4 and rep.max_concurrency <= 4
    assert probe.order_ok


@settings(max_examples=30)
@given(st.lists(st.floats(0.1, 10), min_size=1, max_size=30), st.integers(1, 8))
def test_list_scheduling_oracle_bounds(durations, k):
    # Graham's bound: the greedy makespan lies between the ideal and ideal + longest job
    span = _simulated_makespan(durations, k)
    ideal = max(sum(durations) / k, max(durations))
    assert ideal - 1e-9 <= span <= sum(durations) / k + max(durations) + 1e-9
    if len(set(durations)) == 1:
        assert span == pytest.approx(math.ceil(len(durations) / k) * durations[0])
