"""Failure types shared by executors, recovery and the scheduler."""

from __future__ import annotations

from enum import Enum


class ErrorKind(str, Enum):
    MESH = "MeshConversionFailure"
    DIVERGENCE = "SolverDivergence"
    BOUNDARY = "BoundaryConditionError"
    RESOURCE = "ResourceExhaustion"
    UNKNOWN = "Unknown"


class TaskFailure(Exception):
    """An executor failure carrying the tool log used for classification."""

    def __init__(self, message: str, logs: str = "", kind: ErrorKind | None = None):
        super().__init__(message)
        self.logs = logs
        self.kind = kind


class ExecutorMissingError(LookupError):
    pass


class GraphCycleError(ValueError):
    pass
