"""Experiment grids run by ``fedls --preset``.

The default config models 100 clients; these grids keep its constants but
shrink the fleet to N=20 clients over T=2000 slots so that every cell runs
in a couple of seconds on a laptop.
"""

from __future__ import annotations

import numpy as np

from .core import SimConfig

SCALED_CLIENTS = 20
SCALED_SLOTS = 2000
DEFAULT_RATE = 12.0

BASE = SimConfig(n_clients=SCALED_CLIENTS, horizon=SCALED_SLOTS, arrival_rate=DEFAULT_RATE)

# name -> (config field swept, values)
GRIDS = {
    "sweep-lambda": ("arrival_rate", (9.0, 12.0, 15.0)),
    "sweep-v": ("v_coef", (0.5, 1.0, 2.0, 5.0)),
    "sweep-w": ("w_init", (0.1, 0.5, 1.0, 2.0)),
}


def cell_seed(master_seed: int, cell_index: int) -> int:
    """Independent seed for one grid cell, derived from (master seed, cell index)."""
    return int(np.random.SeedSequence([master_seed, cell_index]).generate_state(1)[0])


def preset_cells(name: str, base: SimConfig = BASE, seeds: int = 1) -> list[tuple[str, SimConfig]]:
    """(label, config) for every cell of a grid; ``seeds`` replicates each value."""
    try:
        key, values = GRIDS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(GRIDS)}") from None
    cells = []
    for value in values:
        for rep in range(seeds):
            idx = len(cells)
            label = f"{key}={value:g}" + (f"/seed{rep}" if seeds > 1 else "")
            cells.append((label, base.replace(**{key: value}, seed=cell_seed(base.seed, idx))))
    return cells
