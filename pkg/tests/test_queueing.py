import numpy as np
import pytest
from hypothesis import given, strategies as st

from fedls.controller import BaselinePolicy, Policy
from fedls.core import SimConfig, SlotDecision
from fedls.queueing import QueueTriple, update_service_queue, update_virtual_queue, violation_report
from fedls.simulation import MetricsLog, run

nonneg = st.floats(0, 1e6)


def test_service_queue_examples():
    assert update_service_queue(5, 3, 4) == 4
    assert update_service_queue(1, 0, 4) == 0
    for lam in (0.0, 3.0, 17.5):
        assert update_service_queue(0, lam, lam) == 0


def test_virtual_queue_examples():
    assert update_virtual_queue(1, 0.6, 0.5) == pytest.approx(1.1)
    assert update_virtual_queue(0, 0.2, 0.5) == 0
    assert update_virtual_queue(1, 0.5, 0.5) == 1


def test_negative_inputs_rejected():
    with pytest.raises(ValueError):
        update_service_queue(-1, 0, 0)
    with pytest.raises(ValueError):
        update_virtual_queue(0, -0.1, 0.5)
    with pytest.raises(ValueError):
        QueueTriple(0, -1, 0)


@given(nonneg, nonneg, nonneg, nonneg)
def test_updates_stay_nonnegative_and_monotone(x, a, b, d):
    assert update_service_queue(x, a, b) >= 0
    assert update_virtual_queue(x, a, b) >= 0
    assert update_service_queue(x + d, a, b) >= update_service_queue(x, a, b)
    assert update_service_queue(x, a + d, b) >= update_service_queue(x, a, b)
    assert update_service_queue(x, a, b + d) <= update_service_queue(x, a, b)
    assert update_virtual_queue(x, a + d, b) >= update_virtual_queue(x, a, b)
    assert update_virtual_queue(x, a, b + d) <= update_virtual_queue(x, a, b)


@given(nonneg, st.floats(0, 100), st.floats(0, 100))
def test_bounded_per_slot_change(x, a, b):
    bound = max(a, b) * (1 + 1e-12) + 1e-12 * x
    assert abs(update_service_queue(x, a, b) - x) <= bound
    assert abs(update_virtual_queue(x, a, b) - x) <= bound


def test_balanced_costs_no_violation():
    cfg = SimConfig(n_clients=2, horizon=4)
    log = MetricsLog.empty(cfg, "manual")
    log.data["phi_cost"][:] = 0.5
    log.data["psi_cost"][:] = 0.5
    rep = violation_report(log)
    np.testing.assert_array_equal(rep.comp, 0)
    np.testing.assert_array_equal(rep.comm, 0)
    assert rep.magnitude() == 0


class IdlePolicy(Policy):
    name = "idle"
    plans_ahead = False

    def decide(self, states):
        return [SlotDecision(s.cfg.q_min, 0.0, 0.0) for s in states]


def test_idle_policy_violation():
    cfg = SimConfig(n_clients=3, horizon=400, arrival_rate=5.0, seed=2)
    log = run(cfg, IdlePolicy())
    rep = violation_report(log)
    assert np.all(rep.comp <= 0)
    np.testing.assert_allclose(rep.service, log["arrivals"].mean(axis=0))
    assert abs(rep.service.mean() - 5.0) < 0.2
    assert log["served"].sum() == 0


def test_violation_prefix():
    log = run(SimConfig(n_clients=2, horizon=30, seed=1), BaselinePolicy())
    full = violation_report(log)
    head = violation_report(log, upto=10)
    assert head.horizon == 10
    np.testing.assert_allclose(head.comp, log["phi_cost"][:10].mean(axis=0) - 0.5)
    assert full.resource_magnitude() <= full.magnitude()
    with pytest.raises(ValueError):
        violation_report(log, upto=0)
