"""Service queue, virtual cost queues and time-averaged constraint violation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class QueueTriple:
    service: float
    comp: float
    comm: float

    def __post_init__(self):
        if min(self.service, self.comp, self.comm) < 0:
            raise ValueError(f"queue lengths must be >= 0: {self}")


def _check_nonneg(**values):
    for name, v in values.items():
        if v < 0:
            raise ValueError(f"{name} must be >= 0, got {v}")


def update_service_queue(lam_len: float, arrivals: float, served: float) -> float:
    _check_nonneg(lam_len=lam_len, arrivals=arrivals, served=served)
    return max(0.0, lam_len + arrivals - served)


def update_virtual_queue(q_len: float, cost: float, budget: float) -> float:
    _check_nonneg(q_len=q_len, cost=cost, budget=budget)
    return max(0.0, q_len + cost - budget)


@dataclass
class ViolationReport:
    """Signed per-client time averages; negative entries are slack."""

    service: np.ndarray
    comp: np.ndarray
    comm: np.ndarray
    horizon: int

    def magnitude(self) -> float:
        """Largest positive violation over clients and constraints (0 when all slack)."""
        worst = max(self.service.max(), self.comp.max(), self.comm.max())
        return max(0.0, float(worst))

    def resource_magnitude(self) -> float:
        """Same as :meth:`magnitude` restricted to the two cost budgets."""
        return max(0.0, float(max(self.comp.max(), self.comm.max())))


def violation_report(log, upto: int | None = None) -> ViolationReport:
    """Time-averaged violation of the service, computation and communication constraints.

    Uses realised arrivals minus served requests for the service constraint.
    ``upto`` restricts the average to the first ``upto`` slots of the log.
    """
    T = log.horizon if upto is None else int(upto)
    if T < 1 or T > log.horizon:
        raise ValueError(f"need 1 <= upto <= {log.horizon}, got {T}")
    s = slice(0, T)
    cfg = log.config
    service = (log["arrivals"][s] - log["served"][s]).mean(axis=0)
    comp = log["phi_cost"][s].mean(axis=0) - cfg.budget("avg_comp")
    comm = log["psi_cost"][s].mean(axis=0) - cfg.budget("avg_comm")
    return ViolationReport(service, comp, comm, T)
