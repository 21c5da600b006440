import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import exp1

from fedls.core import SimConfig
from fedls.costs import (GAMMA_CLIP, comm_cost, comp_cost, effective_beta, gamma_from_channel, mean_capacity,
                         sample_alpha, sample_gamma)

CFG = SimConfig()


def test_comp_cost_examples():
    assert comp_cost(0.5, 4, 0.03, CFG) == pytest.approx(0.6)
    assert comp_cost(0, 0, 0.03, CFG) == 0
    assert comp_cost(1, 0, 0.03, CFG) == pytest.approx(0.96)
    assert comp_cost(1, 0, 0.03, CFG) <= CFG.max_comp


def test_comm_cost_examples():
    assert comm_cost(0, 0.5) == 0
    assert comm_cost(1, 0.5) == 0.5
    assert comm_cost(effective_beta(0.2, 0.4), 0.5) == pytest.approx(0.2)


prob = st.floats(0, 1)
rate = st.floats(0, 100)
unit = st.floats(1e-3, 2)


@given(prob, rate, unit, st.floats(0, 1), st.floats(0, 10))
def test_costs_linear_and_monotone(q, mu, alpha, dq, dmu):
    assert comp_cost(q, mu, alpha, CFG) == pytest.approx(comp_cost(q, 0, alpha, CFG) + comp_cost(0, mu, alpha, CFG))
    assert comp_cost(q + dq, mu + dmu, alpha, CFG) >= comp_cost(q, mu, alpha, CFG)
    assert comm_cost(q + dq, alpha) >= comm_cost(q, alpha)


def test_alpha_samples():
    a = sample_alpha(np.random.default_rng(0), 0.03, size=100_000)
    assert abs(a.mean() - 0.03) / 0.03 < 0.01
    assert a.min() >= 0.015 and a.max() <= 0.045


def test_gamma_samples():
    g = sample_gamma(np.random.default_rng(1), CFG, size=100_000)
    lo, hi = GAMMA_CLIP
    assert np.all(np.isfinite(g)) and np.all(g > 0)
    assert g.min() >= lo * CFG.gamma_mean and g.max() <= hi * CFG.gamma_mean
    assert abs(np.median(g) - CFG.gamma_mean) / CFG.gamma_mean < 0.2


def test_gamma_degenerate_channel():
    expected = CFG.gamma_mean * mean_capacity(CFG.snr) / math.log2(1 + CFG.snr)
    assert gamma_from_channel(1.0, CFG) == pytest.approx(expected)
    assert gamma_from_channel(0.0, CFG) == GAMMA_CLIP[1] * CFG.gamma_mean


@pytest.mark.parametrize("snr", [0.5, 3.0, 10.0, 100.0])
def test_mean_capacity_closed_form(snr):
    oracle = math.exp(1 / snr) * exp1(1 / snr) / math.log(2)
    assert mean_capacity(snr) == pytest.approx(oracle, rel=1e-9)
