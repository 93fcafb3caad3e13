"""Parameter sweeps: steady-state maps, pump-power and ionization rise times."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Callable, Sequence

import numpy as np

from .dissipator import RateModel
from .estimation import FitError, fit_exponential, steady_populations
from .evolution import build_liouvillian, dnp_sequence
from .hamiltonian import FieldConfig, SystemParams

WORKERS_ENV = "NVDNP_WORKERS"
BASE_WINDOW_US = 20.0
N_TIMES = 401


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    return max(n, 1)


def run_tasks(fn: Callable, tasks: Sequence, workers: int | None = None) -> list:
    """Map ``fn`` over ``tasks`` preserving order; results never depend on ``workers``."""
    workers = default_workers() if workers is None else max(int(workers), 1)
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def rise_time(times, values) -> float:
    """Fitted exponential time constant (us), NaN when the fit fails."""
    try:
        return fit_exponential(times, values).tau
    except (FitError, ValueError):
        return math.nan


# steady-state map ----------------------------------------------------------

def _steady_task(args):
    p, r, b, theta = args
    return (b, theta) + steady_populations(p, FieldConfig(b, theta), r)


def steady_scan(p: SystemParams, r: RateModel, b_grid: Sequence[float],
                thetas: Sequence[float], workers: int | None = None) -> list[tuple]:
    """Rows ``(B, theta, P+1, P0, P-1)`` sorted by (theta, B)."""
    tasks = [(p, r, float(b), float(t)) for t in sorted(thetas) for b in sorted(b_grid)]
    return run_tasks(_steady_task, tasks, workers)


# pump power -------------------------------------------------------------------

def power_window(w: float, base: float = BASE_WINDOW_US) -> float:
    """Observation window: the base window stretched by 1/W below saturation."""
    return base / min(w, 1.0)


def _power_task(args):
    p, f, r, w, base, n = args
    t = np.linspace(0.0, power_window(w, base), n)
    trace = dnp_sequence(p, f, replace(r, w=w), t)
    return (w, rise_time(t, trace.p_plus1), rise_time(t, trace.p_zero),
            rise_time(t, trace.p_minus1))


def power_scan(p: SystemParams, f: FieldConfig, r: RateModel, w_grid: Sequence[float],
               base_window: float = BASE_WINDOW_US, n_times: int = N_TIMES,
               workers: int | None = None) -> list[tuple]:
    """Rows ``(W, tau_plus1, tau_zero, tau_minus1)``."""
    if any(w <= 0 for w in w_grid):
        raise ValueError("pump parameters must be positive")
    tasks = [(p, f, r, float(w), base_window, n_times) for w in w_grid]
    return run_tasks(_power_task, tasks, workers)


# ionization ---------------------------------------------------------------------

def slowest_relaxation_time(p: SystemParams, f: FieldConfig, r: RateModel) -> float:
    """1 / (smallest nonzero decay rate) of the pumped generator, in us."""
    L = build_liouvillian(p, f, r)
    rates = np.sort(np.abs(np.linalg.eigvals(L.sector_dense).real))
    return 1.0 / rates[1]


def ionization_window(p: SystemParams, f: FieldConfig, r: RateModel, factor: float = 5.0) -> float:
    """Window shared by all ionization rates at one field: a multiple of the
    ionization-free slowest relaxation time."""
    return factor * slowest_relaxation_time(p, f, replace(r, gamma_ion=0.0))


def _ion_task(args):
    p, f, r, g, window, n = args
    t = np.linspace(0.0, window, n)
    trace = dnp_sequence(p, f, replace(r, gamma_ion=g), t)
    return (g, f.b, rise_time(t, trace.p_plus1))


def ionization_scan(p: SystemParams, r: RateModel, gamma_grid: Sequence[float],
                    b_grid: Sequence[float], theta: float = 1.7,
                    window: float | None = None, n_times: int = N_TIMES,
                    workers: int | None = None) -> list[tuple]:
    """Rows ``(gamma_ion, B, tau_plus1)`` sorted by (B, gamma_ion).

    Zero ionization uses the 21-level model, so that row is the baseline.
    """
    if any(g < 0 for g in gamma_grid):
        raise ValueError("ionization rates must be >= 0")
    tasks = []
    for b in sorted(b_grid):
        f = FieldConfig(float(b), theta)
        win = ionization_window(p, f, r) if window is None else window
        tasks += [(p, f, r, float(g), win, n_times) for g in sorted(gamma_grid)]
    return run_tasks(_ion_task, tasks, workers)
