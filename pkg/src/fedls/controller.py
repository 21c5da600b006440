"""Per-slot decision engine: drift-plus-penalty objective, closed-form block solvers,
alternating search, and the reference policies.

All solvers are scalar and per client. Policies operate on the full list of
client states so they can share the aggregate sum of 1/q between the
participation step and the download/service step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .core import CostSample, SimConfig, SlotDecision
from .performance import global_error_step
from .queueing import QueueTriple

POLICIES = ("fedls", "baseline", "grid-oracle")


@dataclass
class P2State:
    """Real-time information one client conditions its slot-t decision on.

    ``perf`` is the client's realised model performance (NaN before its first
    model is scored); ``prev`` is the decision taken one slot earlier, whose
    ``mu_next`` is the service rate already committed for slot t.
    """

    t: int
    g_t: float
    perf: float
    queues: QueueTriple
    costs: CostSample
    arrival_rate: float
    avg_comp: float
    max_comp: float
    avg_comm: float
    max_comm: float
    cfg: SimConfig
    prev: SlotDecision = field(default_factory=lambda: SlotDecision(1.0, 0.0, 0.0))


def predicted_error(state: P2State, inv_sum: float) -> float:
    """Candidate G_{t+1} if the fleet's sum of 1/q_t equals ``inv_sum``."""
    return global_error_step(state.g_t, state.t + 1, inv_sum, state.cfg.n_clients, state.cfg)


def _anchors(state: P2State, g_next: float) -> tuple[float, float]:
    # Before any surrogate value exists the current model is scored as G_1.
    g_now = state.g_t if state.t >= 1 and math.isfinite(state.g_t) else g_next
    perf = state.perf if math.isfinite(state.perf) else g_now
    return g_now, perf


def expected_service_perf(state: P2State, q: float, beta_eff: float, g_next: float) -> float:
    """Expected model error of the requests served in slot t+1."""
    g_now, perf = _anchors(state, g_next)
    return g_next * beta_eff + g_now * (1 - beta_eff) * q + perf * (1 - beta_eff) * (1 - q)


def p2_objective(q: float, beta: float, mu: float, state: P2State, q_others_inv_sum: float) -> float:
    """Drift-plus-penalty objective of one client for (q_t, beta_{t+1}, mu_{t+1}).

    The download probability enters through beta_eff = max(beta, q) since a
    participating client always holds the fresh model.
    """
    if q <= 0:
        raise ValueError(f"q must be > 0, got {q}")
    cfg, qs, c = state.cfg, state.queues, state.costs
    g_next = predicted_error(state, 1.0 / q + q_others_inv_sum)
    beta_eff = max(beta, q)
    penalty = cfg.v_coef * mu * expected_service_perf(state, q, beta_eff, g_next)
    drift = (qs.service * (state.arrival_rate - mu)
             + qs.comp * (c.alpha * (cfg.train_units * q + mu) - state.avg_comp)
             + qs.comm * (c.gamma * beta_eff - state.avg_comm))
    return penalty + drift


def q_subproblem(q: float, state: P2State, mu_current: float | None = None, *,
                 form: str = "reduced", mu_next: float = 0.0, beta_next: float = 1.0) -> float:
    """Participation sub-objective minimised by :func:`solve_q`.

    ``form="reduced"`` uses the weight V*C/(N(t+1)) on 1/q; ``form="full"``
    multiplies it by mu_next * beta_next, the factor carried by the joint
    objective. ``mu_current`` is unused and accepted for call symmetry.
    """
    cfg, qs, c = state.cfg, state.queues, state.costs
    weight = cfg.v_coef * cfg.conv_const / (cfg.n_clients * (state.t + 1))
    if form == "full":
        weight *= mu_next * beta_next
    elif form != "reduced":
        raise ValueError(f"unknown form {form!r}")
    return weight / q + qs.comp * c.alpha * cfg.train_units * q + qs.comm * c.gamma * q


def q_upper_bound(state: P2State, mu_current: float) -> float:
    """Largest q meeting both instantaneous caps given the committed service rate."""
    cfg, c = state.cfg, state.costs
    tbx = cfg.train_units
    return min(1.0, state.max_comp / (c.alpha * tbx) - mu_current / tbx, state.max_comm / c.gamma)


def solve_q(state: P2State, mu_current: float) -> float:
    """Closed-form participation probability, clamped to [q_min, 1].

    When the caps leave no room above q_min the result is q_min; callers
    detect that case with :func:`q_upper_bound`.
    """
    cfg, qs, c = state.cfg, state.queues, state.costs
    weight = cfg.v_coef * cfg.conv_const / (cfg.n_clients * (state.t + 1))
    denom = qs.comp * c.alpha * cfg.train_units + qs.comm * c.gamma
    interior = math.sqrt(weight / denom) if denom > 0 else math.inf
    return max(cfg.q_min, min(interior, q_upper_bound(state, mu_current)))


def beta_upper_bound(state: P2State) -> float:
    return min(1.0, state.max_comm / state.costs.gamma)


def solve_beta(state: P2State, q_hat: float, g_next: float, mu_next: float) -> float:
    """Threshold rule for the download probability; ties resolve to 0.

    A cap at or below ``q_hat`` is also a tie: participation already implies
    the download, so both endpoints give the same effective probability.
    """
    g_now, perf = _anchors(state, g_next)
    gain = g_next - g_now * q_hat - perf * (1 - q_hat)
    threshold = state.cfg.v_coef * mu_next * gain + state.queues.comm * state.costs.gamma
    cap = beta_upper_bound(state)
    return cap if threshold < 0 and cap > q_hat else 0.0


def mu_upper_bound(state: P2State, q_hat: float) -> float:
    """Service-rate cap from the instantaneous computation budget (may be negative)."""
    return state.max_comp / state.costs.alpha - state.cfg.train_units * q_hat


def solve_mu(state: P2State, q_hat: float, beta_hat: float, g_next: float) -> float:
    """Bang-bang service rate: 0, the backlog, or the computation cap."""
    beta_eff = max(beta_hat, q_hat)
    perf = expected_service_perf(state, q_hat, beta_eff, g_next)
    threshold = state.cfg.v_coef * perf - state.queues.service + state.queues.comp * state.costs.alpha
    if threshold >= 0:
        return 0.0
    return max(0.0, min(state.queues.service, mu_upper_bound(state, q_hat)))


class InnerResult(NamedTuple):
    beta: float
    mu: float
    iterations: int
    converged: bool
    objectives: tuple


def inner_loop(state: P2State, q_hat: float, q_others_inv_sum: float,
               beta0: float | None = None, mu0: float | None = None,
               track: bool = False) -> InnerResult:
    """Alternate the beta and mu block solutions until the pair stops moving.

    Starts from the previous slot's (beta, mu), clipped to the current
    feasible box, unless given explicitly. With
    ``track=True`` the objective is recorded after every half-step.
    """
    cfg = state.cfg
    beta = state.prev.beta_next if beta0 is None else beta0
    mu = state.prev.mu_next if mu0 is None else mu0
    # the warm start is projected onto this slot's feasible box
    beta = min(max(beta, 0.0), beta_upper_bound(state))
    mu = min(max(mu, 0.0), max(0.0, min(state.queues.service, mu_upper_bound(state, q_hat))))
    g_next = predicted_error(state, 1.0 / q_hat + q_others_inv_sum)
    objs = [p2_objective(q_hat, beta, mu, state, q_others_inv_sum)] if track else []
    converged = False
    it = 0
    while it < cfg.inner_max_iters:
        it += 1
        new_beta = solve_beta(state, q_hat, g_next, mu)
        if track:
            objs.append(p2_objective(q_hat, new_beta, mu, state, q_others_inv_sum))
        new_mu = solve_mu(state, q_hat, new_beta, g_next)
        if track:
            objs.append(p2_objective(q_hat, new_beta, new_mu, state, q_others_inv_sum))
        settled = abs(new_beta - beta) < cfg.inner_tol and abs(new_mu - mu) <= cfg.inner_tol * max(1.0, mu)
        beta, mu = new_beta, new_mu
        if settled:
            converged = True
            break
    return InnerResult(beta, mu, it, converged, tuple(objs))


def decide_fedls(state: P2State, q_others_inv_sum: float | None = None) -> SlotDecision:
    """Single-client FedLS decision.

    ``q_others_inv_sum`` is the other clients' sum of 1/q for this slot; when
    omitted every other client is assumed to pick the same q.
    """
    mu_current = state.prev.mu_next
    q = solve_q(state, mu_current)
    flags = set()
    if q_upper_bound(state, mu_current) < state.cfg.q_min:
        flags.add("q_infeasible")
    if q_others_inv_sum is None:
        q_others_inv_sum = (state.cfg.n_clients - 1) / q
    return _finish_fedls(state, q, q_others_inv_sum, flags)


def _finish_fedls(state, q, others, flags) -> SlotDecision:
    res = inner_loop(state, q, others)
    if not res.converged:
        flags.add("inner_not_converged")
    if mu_upper_bound(state, q) < 0:
        flags.add("mu_infeasible")
    return SlotDecision(q, res.beta, res.mu, frozenset(flags))


def decide_baseline(state: P2State) -> SlotDecision:
    """Static split of the average budgets; all three values apply to the current slot."""
    cfg, c = state.cfg, state.costs
    tbx = cfg.train_units
    q = min(1.0, (state.avg_comp - c.alpha * state.arrival_rate) / (c.alpha * tbx), state.avg_comm / c.gamma)
    flags = set()
    if q < cfg.q_min:
        flags.add("q_floored")
        q = cfg.q_min
    beta = min(1.0, state.avg_comm / c.gamma)
    mu = max(0.0, min(state.queues.service, state.avg_comp / c.alpha - tbx * q))
    return SlotDecision(q, beta, mu, frozenset(flags))


def grid_search_decision(state: P2State, q_others_inv_sum: float, n_grid: int = 201) -> tuple[SlotDecision, float]:
    """Joint search of the slot objective: q on a grid, beta and mu over their optimal endpoints.

    For fixed q the objective is linear in mu and piecewise linear in beta
    (constant below q), so {0, cap} is exhaustive for both.
    """
    cfg = state.cfg
    mu_current = state.prev.mu_next
    hi = max(cfg.q_min, q_upper_bound(state, mu_current))
    best = (math.inf, None)
    b_cap = beta_upper_bound(state)
    for q in np.linspace(cfg.q_min, hi, n_grid):
        q = float(q)
        m_cap = max(0.0, min(state.queues.service, mu_upper_bound(state, q)))
        for beta in (0.0, b_cap):
            for mu in (0.0, m_cap):
                val = p2_objective(q, beta, mu, state, q_others_inv_sum)
                if val < best[0]:
                    best = (val, (q, beta, mu))
    q, beta, mu = best[1]
    return SlotDecision(q, beta, mu), best[0]


class Policy(BaseEstimator):
    """Base class; ``plans_ahead`` policies choose beta/mu for the next slot."""

    name = "policy"
    plans_ahead = True

    def decide(self, states: Sequence[P2State]) -> list[SlotDecision]:  # pragma: no cover
        raise NotImplementedError


class FedLSPolicy(Policy):
    """Two-loop alternating FedLS controller with a barrier on the fleet's sum of 1/q."""

    name = "fedls"
    plans_ahead = True

    def decide(self, states):
        if not states:
            return []
        qs, flag_sets = [], []
        for s in states:
            mu_current = s.prev.mu_next
            qs.append(solve_q(s, mu_current))
            flag_sets.append({"q_infeasible"} if q_upper_bound(s, mu_current) < s.cfg.q_min else set())
        inv_total = math.fsum(1.0 / q for q in qs)
        return [_finish_fedls(s, q, inv_total - 1.0 / q, f) for s, q, f in zip(states, qs, flag_sets)]


class BaselinePolicy(Policy):
    """Average-budget baseline."""

    name = "baseline"
    plans_ahead = False

    def decide(self, states):
        return [decide_baseline(s) for s in states]


class GridOraclePolicy(Policy):
    """Brute-force reference for tests; other clients' q come from the closed form."""

    name = "grid-oracle"
    plans_ahead = True

    def __init__(self, n_grid: int = 101):
        self.n_grid = n_grid

    def decide(self, states):
        if not states:
            return []
        qs = [solve_q(s, s.prev.mu_next) for s in states]
        inv_total = math.fsum(1.0 / q for q in qs)
        return [grid_search_decision(s, inv_total - 1.0 / q, self.n_grid)[0] for s, q in zip(states, qs)]


def make_policy(name: str) -> Policy:
    try:
        return {"fedls": FedLSPolicy, "baseline": BaselinePolicy, "grid-oracle": GridOraclePolicy}[name]()
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; expected one of {POLICIES}") from None
