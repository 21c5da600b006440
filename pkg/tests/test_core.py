import numpy as np
import pytest

from fedls.core import (ClientState, ConfigError, CostSample, GlobalPerfState, SimConfig, SlotDecision,
                        client_streams, config_from_mapping, load_config, validate_config)


def test_default_config_is_valid():
    cfg = SimConfig()
    assert validate_config(cfg) is cfg
    assert (cfg.n_clients, cfg.local_iters, cfg.batch_size, cfg.train_to_infer_ratio) == (100, 1, 16, 2.0)
    assert cfg.conv_const == 1e-6 and cfg.v_coef == 1 and cfg.w_init == 1
    assert cfg.train_units == 32


def test_q_min_zero_rejected():
    with pytest.raises(ConfigError) as exc:
        validate_config(SimConfig(q_min=0.0))
    assert any("q_min must be > 0" in v for v in exc.value.violations)


def test_max_below_avg_rejected():
    with pytest.raises(ConfigError) as exc:
        validate_config(SimConfig(max_comp=0.3, avg_comp=0.5))
    assert any("max < avg budget" in v and "max_comp" in v for v in exc.value.violations)


def test_all_violations_reported_together():
    with pytest.raises(ConfigError) as exc:
        validate_config(SimConfig(conv_const=-1, v_coef=0, inner_tol=0, n_clients=0))
    names = " ".join(exc.value.violations)
    for field in ("conv_const", "v_coef", "inner_tol", "n_clients"):
        assert field in names


def test_short_arrival_schedule_rejected():
    with pytest.raises(ConfigError, match="shorter than horizon"):
        validate_config(SimConfig(horizon=5, arrival_rate=(1.0, 2.0)))
    validate_config(SimConfig(horizon=2, arrival_rate=(1.0, 2.0, 3.0)))


def test_per_client_budget_length_checked():
    with pytest.raises(ConfigError, match="entries"):
        validate_config(SimConfig(n_clients=3, avg_comp=(0.5, 0.5)))


def test_toml_loading(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(
        "[simulation]\nhorizon = 50\nseed = 7\narrival_rate = [1.0, 2.0]\n"
        "[[client_group]]\ncount = 2\navg_comp = 0.4\n"
        "[[client_group]]\ncount = 1\nmax_comm = 3.0\n"
    )
    cfg = load_config(path, horizon=2)
    assert cfg.horizon == 2 and cfg.seed == 7 and cfg.n_clients == 3
    assert cfg.avg_comp == (0.4, 0.4, 0.5)
    assert cfg.max_comm == (5.0, 5.0, 3.0)
    np.testing.assert_array_equal(cfg.arrival_schedule(), [1.0, 2.0])
    validate_config(cfg)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        config_from_mapping({"horizn": 3})
    with pytest.raises(ConfigError, match="client_group"):
        config_from_mapping({"client_group": [{"count": 1, "speed": 2}]})


def test_client_streams_deterministic_and_distinct():
    a = client_streams(3, 4)
    b = client_streams(3, 4)
    xa = [s["alpha"].random() for s in a]
    assert xa == [s["alpha"].random() for s in b]
    assert len(set(xa)) == 4
    assert a[0]["gamma"].random() != client_streams(3, 4)[0]["alpha"].random()


@pytest.mark.parametrize("kwargs", [dict(q=0.0, beta_next=0, mu_next=0), dict(q=1.2, beta_next=0, mu_next=0),
                                    dict(q=0.5, beta_next=1.5, mu_next=0), dict(q=0.5, beta_next=0.5, mu_next=-1)])
def test_slot_decision_bounds(kwargs):
    with pytest.raises(ValueError):
        SlotDecision(**kwargs)


@pytest.mark.parametrize("alpha,gamma", [(0, 1), (1, -1), (float("inf"), 1), (1, float("nan"))])
def test_cost_sample_bounds(alpha, gamma):
    with pytest.raises(ValueError):
        CostSample(alpha, gamma)


def test_global_perf_state():
    g = GlobalPerfState()
    assert g.t == 0
    g.append(2.0)
    g.append(1.0)
    assert g.t == 2 and g.g_current == 1.0
    assert g.at(0) == g.at(-3) == 2.0
    with pytest.raises(ValueError):
        g.append(-1e-9)


def test_client_state_check():
    hist = [float("nan"), 3.0, 2.0, 1.0]
    c = ClientState(aom=1, realized_perf=2.0)
    c.check(3, hist)
    c.realized_perf = 1.0
    with pytest.raises(AssertionError):
        c.check(3, hist)
    with pytest.raises(AssertionError):
        ClientState(aom=5, realized_perf=3.0).check(3, hist)
