"""Slot-by-slot orchestration of decisions, downloads, arrivals, serving, surrogate and queue updates."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .controller import P2State, Policy, make_policy
from .core import (ClientState, CostSample, GlobalPerfState, SimConfig, SlotDecision,
                   client_streams, validate_config)
from .costs import sample_alpha, sample_gamma
from .performance import advance_aom, advance_global_error, update_realized_perf
from .queueing import QueueTriple, violation_report

CLIENT_FIELDS = ("q", "beta_eff", "mu", "J", "I", "arrivals", "served", "Lambda", "Phi", "Psi",
                 "phi_cost", "psi_cost", "aom", "realized_perf")
GLOBAL_FIELDS = ("G", "M")
INT_FIELDS = {"J", "I", "arrivals", "aom"}
CSV_HEADER = ("slot", "client") + CLIENT_FIELDS + GLOBAL_FIELDS

# Absolute slack when checking the instantaneous caps.
CAP_EPS = 1e-9


@dataclass
class MetricsLog:
    """Sample path of one run.

    Per-client fields are (T, N) arrays; ``G`` is the surrogate error of the
    global model produced in each slot and ``M`` the cumulative error-weighted
    served requests. Queue columns hold lengths at the end of the slot.
    """

    config: SimConfig
    policy: str
    data: dict
    flags: Counter = field(default_factory=Counter)

    @classmethod
    def empty(cls, cfg: SimConfig, policy: str) -> "MetricsLog":
        T, N = cfg.horizon, cfg.n_clients
        data = {f: np.zeros((T, N), dtype=np.int64 if f in INT_FIELDS else float) for f in CLIENT_FIELDS}
        data.update({f: np.zeros(T) for f in GLOBAL_FIELDS})
        return cls(cfg, policy, data)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[name]

    @property
    def horizon(self) -> int:
        return self.data["G"].shape[0]

    @property
    def n_clients(self) -> int:
        return self.data["q"].shape[1]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        cols = [self.data[f] for f in CLIENT_FIELDS]
        G, M = self.data["G"], self.data["M"]
        for t in range(self.horizon):
            g, m = repr(float(G[t])), repr(float(M[t]))
            for n in range(self.n_clients):
                row = [t, n]
                for f, col in zip(CLIENT_FIELDS, cols):
                    v = col[t, n]
                    row.append(int(v) if f in INT_FIELDS else repr(float(v)))
                row += [g, m]
                w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path, cfg: SimConfig, policy: str = "unknown") -> "MetricsLog":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        T = 1 + max((int(r["slot"]) for r in rows), default=-1)
        N = 1 + max((int(r["client"]) for r in rows), default=-1)
        log = cls.empty(cfg.replace(horizon=T, n_clients=max(N, 1)) if rows else cfg.replace(horizon=0), policy)
        for r in rows:
            t, n = int(r["slot"]), int(r["client"])
            for f in CLIENT_FIELDS:
                log.data[f][t, n] = int(r[f]) if f in INT_FIELDS else float(r[f])
            log.data["G"][t] = float(r["G"])
            log.data["M"][t] = float(r["M"])
        return log


def sample_arrivals(rate: float, rng: np.random.Generator, size=None):
    """Poisson request arrivals."""
    if np.any(np.asarray(rate) < 0):
        raise ValueError(f"arrival rate must be >= 0, got {rate}")
    return rng.poisson(rate, size=size)


def _draws(cfg: SimConfig):
    T, N = cfg.horizon, cfg.n_clients
    rates = cfg.arrival_schedule()
    alpha = np.empty((N, T))
    gamma = np.empty((N, T))
    u = np.empty((N, T))
    arrivals = np.empty((N, T), dtype=np.int64)
    for n, s in enumerate(client_streams(cfg.seed, N)):
        alpha[n] = sample_alpha(s["alpha"], cfg.alpha_mean, size=T)
        gamma[n] = sample_gamma(s["gamma"], cfg, size=T)
        u[n] = s["download"].random(T)
        arrivals[n] = sample_arrivals(rates, s["arrivals"]) if T else []
    return rates, alpha, gamma, u, arrivals


def run(cfg: SimConfig, policy: Policy | str = "fedls", check_invariants: bool = True) -> MetricsLog:
    """Simulate ``cfg.horizon`` slots under ``policy``; deterministic given ``cfg.seed``.

    Order within a slot: decide, sample download/participation with one
    uniform per client, draw arrivals, serve, advance G, update queues.
    """
    validate_config(cfg)
    if isinstance(policy, str):
        policy = make_policy(policy)
    T, N = cfg.horizon, cfg.n_clients
    log = MetricsLog.empty(cfg, policy.name)
    if T == 0:
        return log

    rates, alpha, gamma, u, arrivals = _draws(cfg)
    budgets = {k: cfg.budget(k) for k in ("avg_comp", "max_comp", "avg_comm", "max_comm")}
    tbx = cfg.train_units
    clients = [ClientState(service_q=0.0, comp_vq=cfg.w_init, comm_vq=cfg.w_init) for _ in range(N)]
    perf_state = GlobalPerfState()
    d = log.data
    M = 0.0

    for t in range(T):
        states = [
            P2State(t=t, g_t=perf_state.g_current, perf=c.realized_perf,
                    queues=QueueTriple(c.service_q, c.comp_vq, c.comm_vq),
                    costs=CostSample(float(alpha[n, t]), float(gamma[n, t])),
                    arrival_rate=float(rates[t]),
                    avg_comp=float(budgets["avg_comp"][n]), max_comp=float(budgets["max_comp"][n]),
                    avg_comm=float(budgets["avg_comm"][n]), max_comm=float(budgets["max_comm"][n]),
                    cfg=cfg, prev=c.decision)
            for n, c in enumerate(clients)
        ]
        decisions = policy.decide(states)

        q_now = np.empty(N)
        rows = []
        for n, (c, dec) in enumerate(zip(clients, decisions)):
            log.flags.update(dec.flags)
            if policy.plans_ahead:
                beta_t, mu_t = c.decision.beta_next, c.decision.mu_next
                c.decision = dec
            else:
                beta_t, mu_t = dec.beta_next, dec.mu_next
                c.decision = SlotDecision(dec.q, 0.0, 0.0)
            q = dec.q
            a_t, g_t = alpha[n, t], gamma[n, t]
            beta_eff = max(beta_t, q)
            cap = budgets["max_comm"][n] / g_t
            if beta_eff > cap:
                log.flags["beta_capped"] += 1
                beta_eff = max(cap, q)
            downloaded = u[n, t] < beta_eff
            participated = u[n, t] < q
            served = min(mu_t, c.service_q)
            phi = a_t * (tbx * q + mu_t)
            psi = g_t * beta_eff
            q_now[n] = q
            rows.append((q, beta_eff, mu_t, downloaded, participated, served, phi, psi))

        perf_state.append(advance_global_error(perf_state.g_current, t + 1, q_now, cfg))
        g_hist = perf_state.g_history

        slot_obj = 0.0
        for n, (c, row) in enumerate(zip(clients, rows)):
            q, beta_eff, mu_t, downloaded, participated, served, phi, psi = row
            aom = 0 if t == 0 else advance_aom(c.aom, downloaded, c.participated).new_aom
            perf, clamped = update_realized_perf(t, aom, g_hist)
            if clamped and served > 0:
                log.flags["perf_clamped"] += 1
            slot_obj += served * perf
            arr = int(arrivals[n, t])
            c.service_q = max(0.0, c.service_q + arr - served)
            c.comp_vq = max(0.0, c.comp_vq + phi - budgets["avg_comp"][n])
            c.comm_vq = max(0.0, c.comm_vq + psi - budgets["avg_comm"][n])
            c.aom, c.realized_perf, c.participated = aom, perf, bool(participated)
            if check_invariants:
                c.check(t, g_hist)
                if served > mu_t or served < 0:
                    raise AssertionError("served outside [0, mu]")
            for f, v in zip(CLIENT_FIELDS, (q, beta_eff, mu_t, int(downloaded), int(participated), arr,
                                            served, c.service_q, c.comp_vq, c.comm_vq, phi, psi, aom, perf)):
                d[f][t, n] = v
        M += slot_obj
        d["G"][t] = perf_state.g_current
        d["M"][t] = M
    return log


def summarize(log: MetricsLog) -> dict:
    """Flat summary of a run: budgets vs time-averaged costs, queues, surrogate and objective."""
    cfg = log.config
    T = log.horizon
    out = {"policy": log.policy, "slots": T, "clients": log.n_clients}
    if T == 0:
        return out
    comp = log["phi_cost"].mean(axis=0)
    comm = log["psi_cost"].mean(axis=0)
    lam = log["Lambda"]
    served = log["served"]
    total_served = float(served.sum())
    mean_arrival = float(log["arrivals"].mean())
    viol = violation_report(log)
    out.update({
        "M_T": float(log["M"][-1]),
        "G_T": float(log["G"][-1]),
        "total_served": total_served,
        "total_arrivals": int(log["arrivals"].sum()),
        "mean_perf_per_served": float(log["M"][-1] / total_served) if total_served > 0 else math.nan,
        "mean_q": float(log["q"].mean()),
        "mean_beta_eff": float(log["beta_eff"].mean()),
        "avg_comp_cost": float(comp.mean()),
        "max_client_avg_comp_cost": float(comp.max()),
        "avg_comm_cost": float(comm.mean()),
        "max_client_avg_comm_cost": float(comm.max()),
        "avg_comp_budget": float(cfg.budget("avg_comp").mean()),
        "avg_comm_budget": float(cfg.budget("avg_comm").mean()),
        "comp_cap_violations": int((log["phi_cost"] > cfg.budget("max_comp") + CAP_EPS).sum()),
        "comm_cap_violations": int((log["psi_cost"] > cfg.budget("max_comm") + CAP_EPS).sum()),
        "mean_queue": float(lam.mean()),
        "max_queue": float(lam.max()),
        "littles_law_delay_slots": float(lam.mean() / mean_arrival) if mean_arrival > 0 else 0.0,
        "violation_service": float(viol.service.max()),
        "violation_comp": float(viol.comp.max()),
        "violation_comm": float(viol.comm.max()),
        "violation_magnitude": viol.magnitude(),
    })
    for k, v in sorted(log.flags.items()):
        out[f"flag_{k}"] = v
    return out


def format_summary(summary: dict) -> str:
    lines = []
    for k, v in summary.items():
        lines.append(f"{k} = {repr(v) if isinstance(v, float) else v}")
    return "\n".join(lines) + "\n"


def concat_logs(a: MetricsLog, b: MetricsLog) -> MetricsLog:
    """Join two logs in time; ``M`` of the second part is offset by the first's total."""
    if a.n_clients != b.n_clients:
        raise ValueError("logs have different client counts")
    data = {f: np.concatenate([a.data[f], b.data[f]]) for f in CLIENT_FIELDS + ("G",)}
    offset = a.data["M"][-1] if a.horizon else 0.0
    data["M"] = np.concatenate([a.data["M"], b.data["M"] + offset])
    cfg = a.config.replace(horizon=a.horizon + b.horizon)
    return MetricsLog(cfg, a.policy, data, a.flags + b.flags)
