"""Process-based evaluation of independent grid cells.

Each cell is fully determined by (data, cell hyperparameters, configs), so
running them in a pool and reassembling in grid order yields byte-identical
results for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

from .data import Dataset
from .svr import SvrConfig


def _cell_task(args):
    from .gcv import _run_cell

    data, eps, cost, search_cfg, svr_base, variant = args
    return _run_cell(data, eps, cost, search_cfg, svr_base, variant)


def run_cells_parallel(data: Dataset, cells_spec, search_cfg, svr_base: SvrConfig, variant, threads: int):
    tasks = [(data, eps, cost, search_cfg, svr_base, variant) for eps, cost in cells_spec]
    workers = min(threads, len(tasks))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_cell_task, tasks))
