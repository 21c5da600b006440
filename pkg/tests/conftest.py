import math

import numpy as np
import pytest

from fedls.controller import P2State, q_upper_bound
from fedls.core import CostSample, SimConfig, SlotDecision
from fedls.queueing import QueueTriple

_ACCEPTANCE = []


def record_criterion(name: str, passed: bool, detail: str = "") -> None:
    line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
    _ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


def make_state(t=5, g_t=0.5, perf=0.9, service=10.0, comp=1.0, comm=1.0, alpha=0.03, gamma=0.5,
               arrival_rate=12.0, avg_comp=0.5, max_comp=5.0, avg_comm=0.5, max_comm=5.0,
               prev=None, **cfg_kwargs) -> P2State:
    cfg = SimConfig(**{"n_clients": 100, **cfg_kwargs})
    return P2State(t=t, g_t=g_t, perf=perf, queues=QueueTriple(service, comp, comm),
                   costs=CostSample(alpha, gamma), arrival_rate=arrival_rate,
                   avg_comp=avg_comp, max_comp=max_comp, avg_comm=avg_comm, max_comm=max_comm,
                   cfg=cfg, prev=prev or SlotDecision(1.0, 0.0, 0.0))


def random_state(rng: np.random.Generator, feasible: bool = True) -> P2State:
    """A P2State with scales chosen so interior and boundary solutions both occur."""
    while True:
        t = int(rng.integers(0, 60))
        g_t = float(10 ** rng.uniform(-4, 0))
        state = make_state(
            t=t,
            g_t=g_t,
            perf=float(g_t * rng.uniform(0.5, 3.0)),
            service=float(rng.choice([0.0, rng.uniform(0, 40)])),
            comp=float(rng.choice([0.0, rng.uniform(0, 2)], p=[0.2, 0.8])),
            comm=float(rng.choice([0.0, rng.uniform(0, 2)], p=[0.2, 0.8])),
            alpha=float(rng.uniform(0.015, 0.045)),
            gamma=float(10 ** rng.uniform(-1, 0.7)),
            arrival_rate=float(rng.uniform(0, 15)),
            max_comp=float(rng.uniform(1, 5)),
            max_comm=float(rng.uniform(0.5, 5)),
            prev=SlotDecision(1.0, float(rng.choice([0.0, 1.0, rng.uniform()])), float(rng.uniform(0, 20))),
            n_clients=int(rng.integers(2, 30)),
            conv_const=float(10 ** rng.uniform(-6, 1)),
            v_coef=float(rng.choice([0.5, 1.0, 2.0, 5.0])),
        )
        if not feasible or q_upper_bound(state, state.prev.mu_next) >= state.cfg.q_min:
            return state


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def rel_err(a, b):
    return abs(a - b) / max(abs(b), 1e-300) if b != 0 else abs(a)


__all__ = ["make_state", "random_state", "record_criterion", "rel_err", "math"]
