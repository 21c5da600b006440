"""Command-line entry point: single runs, preset sweeps and policy comparison tables."""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import presets
from .core import ConfigError, SimConfig, load_config, validate_config
from .simulation import MetricsLog, format_summary, run, summarize

COMPARE_KEYS = ("M_T", "mean_perf_per_served", "G_T", "max_queue", "mean_queue",
                "avg_comp_cost", "avg_comm_cost", "comp_margin", "comm_margin")


def compare(log_a: MetricsLog, log_b: MetricsLog) -> list[dict]:
    """Rows ``{"metric", a.policy, b.policy, "rel_diff"}`` for two runs of one config.

    ``rel_diff`` is (b - a) / |a|. Budget margins are budget minus the worst
    client's time-averaged cost, so positive means compliant.
    """
    if log_a.config != log_b.config:
        raise ValueError("logs come from different configurations")
    sa, sb = _compare_summary(log_a), _compare_summary(log_b)
    name_a, name_b = log_a.policy, log_b.policy
    if name_a == name_b:
        name_b = name_b + "'"
    rows = []
    for key in COMPARE_KEYS:
        a, b = sa[key], sb[key]
        if a == b:
            rel = 0.0
        elif a == 0 or not math.isfinite(a):
            rel = math.inf if b > a else -math.inf
        else:
            rel = (b - a) / abs(a)
        rows.append({"metric": key, name_a: a, name_b: b, "rel_diff": rel})
    return rows


def _compare_summary(log: MetricsLog) -> dict:
    s = summarize(log)
    s["comp_margin"] = s["avg_comp_budget"] - s["max_client_avg_comp_cost"]
    s["comm_margin"] = s["avg_comm_budget"] - s["max_client_avg_comm_cost"]
    return s


def format_table(rows: list[dict], title: str = "") -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    cells = [[str(c) for c in cols]]
    for r in rows:
        cells.append([r[c] if isinstance(r[c], str) else f"{r[c]:.6g}" for c in cols])
    widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
    lines = [title] if title else []
    for j, row in enumerate(cells):
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _write_run(log: MetricsLog, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    log.to_csv(out / "metrics.csv")
    summary = summarize(log)
    (out / "summary.txt").write_text(format_summary(summary))
    return summary


def _run_cell(args):
    label, cfg, out = args
    logs = {p: run(cfg, p) for p in ("fedls", "baseline")}
    for p, log in logs.items():
        _write_run(log, out / label / p)
    return label, compare(logs["fedls"], logs["baseline"])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedls", description=__doc__)
    p.add_argument("--config", type=Path, help="TOML configuration file")
    p.add_argument("--policy", choices=("fedls", "baseline"), default="fedls")
    p.add_argument("--slots", type=int, help="horizon T")
    p.add_argument("--clients", type=int, help="number of clients N")
    p.add_argument("--arrival-rate", type=float, help="mean requests per client per slot")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, default=Path("fedls-out"), help="output directory")
    p.add_argument("--preset", choices=sorted(presets.GRIDS), help="run a comparison grid")
    p.add_argument("--seeds", type=int, default=1, help="replications per preset cell")
    p.add_argument("--jobs", type=int, default=1, help="parallel preset cells")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"horizon": args.slots, "n_clients": args.clients,
                 "arrival_rate": args.arrival_rate, "seed": args.seed}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    try:
        if args.config is not None:
            cfg = load_config(args.config, **overrides)
        else:
            cfg = (presets.BASE if args.preset else SimConfig()).replace(**overrides)
        validate_config(cfg)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if args.preset:
        cells = [(label, c, args.out) for label, c in presets.preset_cells(args.preset, cfg, args.seeds)]
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                results = list(pool.map(_run_cell, cells))
        else:
            results = [_run_cell(c) for c in cells]
        text = "".join(format_table(rows, f"[{label}]") + "\n" for label, rows in results)
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "comparison.txt").write_text(text)
        print(text, end="")
        return 0

    log = run(cfg, args.policy)
    summary = _write_run(log, args.out)
    print(format_summary(summary), end="")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
