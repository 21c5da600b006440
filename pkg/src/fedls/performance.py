"""Convergence-error surrogate G_t, age-of-model process and client model performance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import SimConfig


def _inv_sum(q) -> float:
    q = np.asarray(q, dtype=float)
    if q.size == 0 or np.any(q <= 0) or not np.all(np.isfinite(q)):
        raise ValueError("participation probabilities must be finite and > 0")
    return float(np.sum(1.0 / q))


def global_error_step(g_prev: float, t: int, inv_sum: float, n: int, cfg: SimConfig) -> float:
    """G_t given G_{t-1} and ``inv_sum`` = sum over clients of 1/q_{t-1}."""
    if t < 1:
        raise ValueError(f"slot index must be >= 1, got {t}")
    if t == 1:
        init = 4.0 * cfg.init_suboptimality / (cfg.local_iters * cfg.learning_rate)
        return init + cfg.conv_const / n * inv_sum
    if g_prev < 0:
        raise ValueError(f"g_prev must be >= 0, got {g_prev}")
    return (t - 1) / t * g_prev + cfg.conv_const / (n * t) * inv_sum


def seed_global_error(q0, cfg: SimConfig) -> float:
    """G_1: the batch bound evaluated at a horizon of one slot."""
    return global_error_step(math.nan, 1, _inv_sum(q0), len(q0), cfg)


def advance_global_error(g_prev: float, t: int, q_prev, cfg: SimConfig) -> float:
    """G_t from G_{t-1} and the participation probabilities of slot t-1.

    ``t == 1`` ignores ``g_prev`` and returns the seed value.
    """
    return global_error_step(g_prev, t, _inv_sum(q_prev), len(q_prev), cfg)


def batch_global_error(q_hist, cfg: SimConfig) -> float:
    """Closed-form G_T for a full history; ``q_hist`` has shape (N, T)."""
    q = np.asarray(q_hist, dtype=float)
    if q.ndim != 2 or q.size == 0:
        raise ValueError("q_hist must be a non-empty N x T array")
    n, T = q.shape
    init = 4.0 * cfg.init_suboptimality / (T * cfg.local_iters * cfg.learning_rate)
    return init + cfg.conv_const / (T * n) * _inv_sum(q)


@dataclass(frozen=True)
class AomOutcome:
    new_aom: int
    downloaded: bool
    participated_prev: bool

    def __post_init__(self):
        if self.new_aom < 0:
            raise ValueError("age of model cannot be negative")
        if self.downloaded and self.new_aom != 0:
            raise ValueError("a download resets the age to 0")
        if not self.downloaded and self.participated_prev and self.new_aom != 1:
            raise ValueError("participation in the previous slot implies age 1")


def advance_aom(prev_aom: int, downloaded: bool, participated_prev: bool) -> AomOutcome:
    """Deterministic age transition given the realised download/participation flags."""
    if downloaded:
        new = 0
    elif participated_prev:
        new = 1
    else:
        new = prev_aom + 1
    return AomOutcome(new, bool(downloaded), bool(participated_prev))


def sample_aom(prev: AomOutcome, beta_t: float, q_prev: float, u: float) -> AomOutcome:
    """Draw the next age from one uniform ``u``.

    ``u < beta_t`` is a download. Otherwise the rescaled remainder
    ``(u - beta_t) / (1 - beta_t)`` decides previous-slot participation, so
    the three outcomes have probabilities beta, (1-beta) q and (1-beta)(1-q).
    """
    if not (0 <= beta_t <= 1 and 0 < q_prev <= 1):
        raise ValueError("beta_t must be in [0,1] and q_prev in (0,1]")
    downloaded = u < beta_t
    participated = False
    if not downloaded:
        participated = (u - beta_t) / (1.0 - beta_t) < q_prev
    return advance_aom(prev.new_aom, downloaded, participated)


def update_realized_perf(t: int, aom: AomOutcome | int, g_hist: Sequence[float]) -> tuple[float, bool]:
    """Return (G_{t - aom}, clamped); indices before G_1 clamp to G_1."""
    a = aom.new_aom if isinstance(aom, AomOutcome) else int(aom)
    idx = t - a
    if idx < 1:
        return float(g_hist[1]), True
    return float(g_hist[idx]), False


def expected_perf_recursion(k_prev: float, g_t: float, g_prev: float, beta_t: float, q_prev: float) -> float:
    """One step of E[K_t]: fresh download, one-slot-old model, or unchanged model."""
    return g_t * beta_t + g_prev * (1.0 - beta_t) * q_prev + k_prev * (1.0 - beta_t) * (1.0 - q_prev)


def surrogate_trajectory(q_hist, cfg: SimConfig) -> list[float]:
    """[nan, G_1, ..., G_T] by iterating :func:`advance_global_error` over columns."""
    q = np.asarray(q_hist, dtype=float)
    g = [math.nan]
    for t in range(1, q.shape[1] + 1):
        g.append(advance_global_error(g[-1], t, q[:, t - 1], cfg))
    return g
