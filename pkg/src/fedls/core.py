"""Domain types, configuration and the seeding contract shared by every module."""

from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on 3.10
    import tomli as tomllib

Budget = Union[float, tuple]

BUDGET_FIELDS = ("avg_comp", "max_comp", "avg_comm", "max_comm")

# Independent random streams per client, in this order.
STREAMS = ("alpha", "gamma", "download", "arrivals")


class ConfigError(ValueError):
    """Raised by :func:`validate_config`; ``violations`` lists every broken bound."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


@dataclass(frozen=True)
class SimConfig:
    """All constants of one simulation run.

    Budgets accept a scalar (shared by every client) or a tuple with one
    value per client. ``arrival_rate`` is a scalar rate or a per-slot
    schedule of length at least ``horizon``.
    """

    n_clients: int = 100
    horizon: int = 2000
    local_iters: int = 1
    batch_size: int = 16
    learning_rate: float = 0.05
    train_to_infer_ratio: float = 2.0
    conv_const: float = 1e-6
    init_suboptimality: float = 0.0
    v_coef: float = 1.0
    w_init: float = 1.0
    q_min: float = 1e-3
    inner_max_iters: int = 20
    inner_tol: float = 1e-6
    avg_comp: Budget = 0.5
    max_comp: Budget = 5.0
    avg_comm: Budget = 0.5
    max_comm: Budget = 5.0
    arrival_rate: Union[float, tuple] = 12.0
    alpha_mean: float = 0.03
    gamma_mean: float = 0.5
    snr: float = 10.0
    seed: int = 0

    @property
    def train_units(self) -> float:
        """Per-unit-probability training workload ``tau * B * xi``."""
        return self.local_iters * self.batch_size * self.train_to_infer_ratio

    def budget(self, name: str) -> np.ndarray:
        value = getattr(self, name)
        if isinstance(value, (tuple, list)):
            return np.asarray(value, dtype=float)
        return np.full(self.n_clients, float(value))

    def arrival_schedule(self) -> np.ndarray:
        """Mean arrival rate of every slot, shape ``(horizon,)``."""
        rate = self.arrival_rate
        if isinstance(rate, (tuple, list)):
            return np.asarray(rate[: self.horizon], dtype=float)
        return np.full(self.horizon, float(rate))

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)


def validate_config(cfg: SimConfig) -> SimConfig:
    """Return ``cfg`` unchanged if every invariant holds, else raise ConfigError."""
    errors: list[str] = []

    def positive_int(name):
        v = getattr(cfg, name)
        if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v <= 0:
            errors.append(f"{name} must be a positive integer (got {v!r})")

    for name in ("n_clients", "local_iters", "batch_size", "inner_max_iters"):
        positive_int(name)
    if isinstance(cfg.horizon, bool) or not isinstance(cfg.horizon, (int, np.integer)) or cfg.horizon < 0:
        errors.append(f"horizon must be a non-negative integer (got {cfg.horizon!r})")

    for name in ("learning_rate", "train_to_infer_ratio", "conv_const", "v_coef",
                 "inner_tol", "alpha_mean", "gamma_mean", "snr"):
        v = getattr(cfg, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            errors.append(f"{name} must be > 0 (got {v!r})")
    for name in ("init_suboptimality", "w_init"):
        v = getattr(cfg, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v >= 0):
            errors.append(f"{name} must be >= 0 (got {v!r})")

    if not (0 < cfg.q_min <= 1):
        if cfg.q_min <= 0:
            errors.append(f"q_min must be > 0 (got {cfg.q_min!r})")
        else:
            errors.append(f"q_min must be <= 1 (got {cfg.q_min!r})")

    n_ok = isinstance(cfg.n_clients, (int, np.integer)) and cfg.n_clients > 0
    budgets = {}
    for name in BUDGET_FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, (tuple, list)) and n_ok and len(value) != cfg.n_clients:
            errors.append(f"{name} has {len(value)} entries, expected n_clients={cfg.n_clients}")
            continue
        arr = np.atleast_1d(np.asarray(value, dtype=float))
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            errors.append(f"{name} must be > 0 (got {value!r})")
            continue
        budgets[name] = arr
    for kind in ("comp", "comm"):
        avg, mx = budgets.get(f"avg_{kind}"), budgets.get(f"max_{kind}")
        if avg is not None and mx is not None and np.any(mx < avg):
            errors.append(f"max_{kind} ({getattr(cfg, f'max_{kind}')!r}) < avg_{kind} "
                          f"({getattr(cfg, f'avg_{kind}')!r}): max < avg budget")

    rate = cfg.arrival_rate
    if isinstance(rate, (tuple, list)):
        if isinstance(cfg.horizon, int) and len(rate) < cfg.horizon:
            errors.append(f"arrival_rate schedule has {len(rate)} slots, shorter than horizon={cfg.horizon}")
        if any((not math.isfinite(r)) or r < 0 for r in rate):
            errors.append("arrival_rate entries must be >= 0")
    elif not (isinstance(rate, (int, float)) and math.isfinite(rate) and rate >= 0):
        errors.append(f"arrival_rate must be >= 0 (got {rate!r})")

    if not isinstance(cfg.seed, (int, np.integer)) or cfg.seed < 0:
        errors.append(f"seed must be an unsigned integer (got {cfg.seed!r})")

    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path: str | Path, **overrides) -> SimConfig:
    """Read a TOML file into a SimConfig; absent keys keep their defaults.

    Top-level keys (or keys under ``[simulation]``) map to SimConfig fields.
    Optional ``[[client_group]]`` tables carry a ``count`` plus budget keys and
    are expanded into per-client budget tuples in file order.
    """
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return config_from_mapping(raw, **overrides)


def config_from_mapping(raw: dict, **overrides) -> SimConfig:
    raw = dict(raw)
    groups = raw.pop("client_group", None)
    values = dict(raw.pop("simulation", {}))
    values.update(raw)
    known = {f.name for f in dataclasses.fields(SimConfig)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError([f"unknown key {k!r}" for k in unknown])
    if isinstance(values.get("arrival_rate"), list):
        values["arrival_rate"] = tuple(values["arrival_rate"])
    values.update({k: v for k, v in overrides.items() if v is not None})

    if groups:
        defaults = SimConfig(**{k: v for k, v in values.items() if k not in BUDGET_FIELDS})
        per_client = {name: [] for name in BUDGET_FIELDS}
        total = 0
        for i, group in enumerate(groups):
            extra = set(group) - set(BUDGET_FIELDS) - {"count"}
            if extra:
                raise ConfigError([f"client_group[{i}]: unknown key {k!r}" for k in sorted(extra)])
            count = int(group.get("count", 0))
            total += count
            for name in BUDGET_FIELDS:
                v = group.get(name, values.get(name, getattr(defaults, name)))
                per_client[name].extend([float(v)] * count)
        values.setdefault("n_clients", total)
        if total != values["n_clients"]:
            raise ConfigError([f"client_group counts sum to {total}, n_clients={values['n_clients']}"])
        values.update({k: tuple(v) for k, v in per_client.items()})
    return SimConfig(**values)


def client_streams(seed: int, n_clients: int) -> list[dict[str, np.random.Generator]]:
    """Per-client generators split from the master seed, one per purpose."""
    root = np.random.SeedSequence(seed)
    out = []
    for child in root.spawn(n_clients):
        out.append({name: np.random.default_rng(s) for name, s in zip(STREAMS, child.spawn(len(STREAMS)))})
    return out


@dataclass(frozen=True)
class SlotDecision:
    """Decision of one client in slot t: q_t, beta_{t+1}, mu_{t+1}."""

    q: float
    beta_next: float
    mu_next: float
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not (0 < self.q <= 1):
            raise ValueError(f"q must lie in (0, 1], got {self.q}")
        if not (0 <= self.beta_next <= 1):
            raise ValueError(f"beta_next must lie in [0, 1], got {self.beta_next}")
        if not self.mu_next >= 0:
            raise ValueError(f"mu_next must be >= 0, got {self.mu_next}")


@dataclass(frozen=True)
class CostSample:
    alpha: float
    gamma: float

    def __post_init__(self):
        for name in ("alpha", "gamma"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")


@dataclass(slots=True)
class ClientState:
    """Mutable per-client state carried across slots by the harness."""

    service_q: float = 0.0
    comp_vq: float = 0.0
    comm_vq: float = 0.0
    aom: int = 0
    realized_perf: float = math.nan
    participated: bool = False
    decision: SlotDecision = field(default_factory=lambda: SlotDecision(1.0, 0.0, 0.0))

    def check(self, t: int, g_history: Sequence[float]) -> None:
        if min(self.service_q, self.comp_vq, self.comm_vq) < 0:
            raise AssertionError(f"negative queue at slot {t}: {self}")
        if not 0 <= self.aom <= t:
            raise AssertionError(f"aom {self.aom} outside [0, {t}]")
        idx = max(t - self.aom, 1)
        if self.realized_perf != g_history[idx]:
            raise AssertionError(f"realized_perf {self.realized_perf} != G[{idx}]={g_history[idx]}")


@dataclass
class GlobalPerfState:
    """Surrogate convergence error history; ``g_history[k]`` is G_k for k >= 1.

    Index 0 holds NaN: the randomly initialised model has no surrogate value.
    """

    g_history: list = field(default_factory=lambda: [math.nan])

    @property
    def t(self) -> int:
        return len(self.g_history) - 1

    @property
    def g_current(self) -> float:
        return self.g_history[-1]

    def append(self, g: float) -> None:
        if not g >= 0:
            raise ValueError(f"G must be non-negative, got {g}")
        self.g_history.append(float(g))

    def at(self, k: int) -> float:
        """G_k, clamped to G_1 for indices before the first recorded value."""
        return self.g_history[max(k, 1)]
