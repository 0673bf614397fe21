"""Two-objective nondominated filtering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def dominates(a, b) -> bool:
    """a dominates b when no worse in both objectives and strictly better in one."""
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


@dataclass(frozen=True)
class ParetoSet:
    points: np.ndarray   # (k, 2), sorted by first objective
    indices: np.ndarray  # rows of the input that are nondominated

    def __len__(self) -> int:
        return len(self.indices)


def pareto_front(points) -> ParetoSet:
    """Exact front by lexicographic sort and a running minimum of the second objective.

    Identical points do not dominate each other, so duplicates on the front
    are all kept.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise ValueError("need at least one point")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    keep = []
    best_f2 = np.inf
    last = None
    for i in order:
        p = pts[i]
        if p[1] < best_f2 or (last is not None and p[0] == last[0] and p[1] == last[1]):
            keep.append(i)
            best_f2 = min(best_f2, p[1])
            last = p
    idx = np.array(keep, dtype=int)
    return ParetoSet(pts[idx], idx)
