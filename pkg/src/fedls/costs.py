"""Linear computation/communication costs and the per-slot random cost coefficients."""

from __future__ import annotations

import functools
import math

import numpy as np
from scipy import integrate

from .core import SimConfig

GAMMA_CLIP = (0.1, 10.0)


def comp_cost(q: float, mu: float, alpha: float, cfg: SimConfig) -> float:
    """Computation cost of training with probability ``q`` and serving ``mu`` requests."""
    return alpha * (cfg.train_units * q + mu)


def comm_cost(beta_eff: float, gamma: float) -> float:
    """Download cost; ``beta_eff`` already folds in participation (max(beta, q))."""
    return gamma * beta_eff


def effective_beta(beta: float, q: float) -> float:
    return max(beta, q)


def sample_alpha(rng: np.random.Generator, alpha_mean: float, size=None):
    """Uniform on [0.5, 1.5] * alpha_mean."""
    return rng.uniform(0.5 * alpha_mean, 1.5 * alpha_mean, size=size)


@functools.lru_cache(maxsize=64)
def mean_capacity(snr: float) -> float:
    """E[log2(1 + snr * h)] for h ~ Exp(1), by quadrature."""
    val, _ = integrate.quad(lambda h: math.log2(1.0 + snr * h) * math.exp(-h), 0.0, math.inf)
    return val


def gamma_from_channel(h, cfg: SimConfig):
    """Unit communication cost for channel power gain ``h``.

    Cost is inverse to capacity, scaled so that E[1/gamma] = 1/gamma_mean,
    and clipped to [0.1, 10] * gamma_mean.
    """
    cap = np.log2(1.0 + cfg.snr * np.asarray(h, dtype=float))
    with np.errstate(divide="ignore"):
        gamma = cfg.gamma_mean * mean_capacity(cfg.snr) / cap
    lo, hi = GAMMA_CLIP
    out = np.clip(gamma, lo * cfg.gamma_mean, hi * cfg.gamma_mean)
    return float(out) if out.ndim == 0 else out


def sample_gamma(rng: np.random.Generator, cfg: SimConfig, size=None):
    """Rayleigh-fading draw: power gain h ~ Exp(1) mapped through :func:`gamma_from_channel`."""
    return gamma_from_channel(rng.exponential(1.0, size=size), cfg)
