"""Device placement by simulated annealing over wall candidates.

The objective rewards placements whose steered beams hit their own device
much harder than everyone else's: for each device i, the ratio of the
self channel gain g_ii to the total cross gain sum_{j != i} g_ij, minimized
over i.  Annealing maximizes that worst-case ratio.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConfigError, InfeasibleError
from .propagation import ArrayConfig, angles, array_gain, array_gain_many
from .scene import PlacementSet, Scene


@dataclass(frozen=True)
class SaParams:
    t_init: float = 1.0
    alpha: float = 0.95
    iters_max: int = 5000
    stall_limit: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.t_init <= 0:
            raise ConfigError("t_init must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.iters_max < 1 or self.stall_limit < 1:
            raise ConfigError("iters_max and stall_limit must be >= 1")


@dataclass(frozen=True, eq=False)
class PlacementResult:
    placement: PlacementSet
    objective: float
    trace: np.ndarray  # best objective after each iteration


def channel_gain(scene: Scene, steer_target, reflector, f_hz,
                 tx_array: ArrayConfig = ArrayConfig(),
                 rx_array: ArrayConfig = ArrayConfig()) -> float:
    """Product of Tx and Rx gains toward `reflector` while steered at
    `steer_target`; averaged over f_hz when it is a grid."""
    g_t = array_gain(tx_array, angles(scene.tx_pos, steer_target),
                     angles(scene.tx_pos, reflector), f_hz)
    g_r = array_gain(rx_array, angles(scene.rx_pos, steer_target),
                     angles(scene.rx_pos, reflector), f_hz)
    return float(np.mean(np.asarray(g_t) * np.asarray(g_r)))


class GainTable:
    """Pairwise channel gains over the candidate lattice, precomputed.

    Entry [a, b] is the Tx·Rx gain product toward candidate b while both
    arrays steer at candidate a (band-averaged when f_hz is a grid), so
    annealing iterations reduce to table lookups.
    """

    def __init__(self, scene: Scene, f_hz, tx_array: ArrayConfig = ArrayConfig(),
                 rx_array: ArrayConfig = ArrayConfig()):
        cand = scene.candidates
        m = len(cand)
        looks_t = np.asarray([angles(scene.tx_pos, p) for p in cand])
        looks_r = np.asarray([angles(scene.rx_pos, p) for p in cand])
        table = np.empty((m, m))
        for a in range(m):
            g_t = array_gain_many(tx_array, tuple(looks_t[a]), looks_t, f_hz)
            g_r = array_gain_many(rx_array, tuple(looks_r[a]), looks_r, f_hz)
            prod = np.asarray(g_t) * np.asarray(g_r)
            table[a] = prod if prod.ndim == 1 else prod.mean(axis=0)
        self.gains = table
        self.scene = scene

    def objective_of(self, idx) -> float:
        """Objective for a placement given as candidate indices."""
        idx = np.asarray(idx, dtype=int)
        if idx.size == 1:
            return math.inf
        sub = self.gains[np.ix_(idx, idx)]
        diag = np.diag(sub)
        denom = sub.sum(axis=1) - diag
        return float(np.min(diag / denom))


def objective(scene: Scene, placement: PlacementSet, f_hz,
              tx_array: ArrayConfig = ArrayConfig(),
              rx_array: ArrayConfig = ArrayConfig()) -> float:
    """min_i g_ii / sum_{j != i} g_ij; +inf for a single device."""
    n = len(placement)
    if n == 1:
        return math.inf
    pos = placement.as_array()
    ratios = []
    for i in range(n):
        g_ii = channel_gain(scene, pos[i], pos[i], f_hz, tx_array, rx_array)
        g_cross = sum(channel_gain(scene, pos[i], pos[j], f_hz, tx_array, rx_array)
                      for j in range(n) if j != i)
        ratios.append(g_ii / g_cross)
    return float(min(ratios))


def _result_from_indices(scene: Scene, idx, obj: float, trace) -> PlacementResult:
    positions = tuple(tuple(scene.candidates[int(a)]) for a in idx)
    return PlacementResult(placement=PlacementSet(positions), objective=obj,
                           trace=np.asarray(trace, dtype=float))


def anneal(scene: Scene, n_devices: int, params: SaParams, f_hz,
           tx_array: ArrayConfig = ArrayConfig(),
           rx_array: ArrayConfig = ArrayConfig(),
           table: GainTable = None) -> PlacementResult:
    """Simulated annealing over candidate subsets; deterministic in seed.

    Single-device relocation moves; accepts improvements, else with
    probability exp(delta/T); geometric cooling.  Returns the best-ever
    placement with the per-iteration best-objective trace.
    """
    n_cand = len(scene.candidates)
    if n_cand < n_devices:
        raise InfeasibleError(f"{n_devices} devices need {n_devices} candidates, have {n_cand}")
    if n_devices < 1:
        raise ConfigError("need at least one device")
    if table is None:
        table = GainTable(scene, f_hz, tx_array, rx_array)
    rng = np.random.default_rng(params.seed)
    state = rng.choice(n_cand, size=n_devices, replace=False)
    obj = table.objective_of(state)
    best_idx, best_obj = state.copy(), obj
    if n_cand == n_devices or n_devices == 1:
        # no freedom, or the objective is +inf everywhere
        return _result_from_indices(scene, best_idx, best_obj, [best_obj])

    trace = []
    t = params.t_init
    stall = 0
    all_idx = np.arange(n_cand)
    for _ in range(params.iters_max):
        d = int(rng.integers(n_devices))
        free = np.setdiff1d(all_idx, state, assume_unique=False)
        new_site = int(free[rng.integers(free.size)])
        proposal = state.copy()
        proposal[d] = new_site
        new_obj = table.objective_of(proposal)
        delta = new_obj - obj
        if delta > 0 or rng.random() < math.exp(min(0.0, delta) / t):
            state, obj = proposal, new_obj
        if obj > best_obj:
            best_obj, best_idx = obj, state.copy()
            stall = 0
        else:
            stall += 1
        trace.append(best_obj)
        t *= params.alpha
        if stall >= params.stall_limit:
            break
    return _result_from_indices(scene, best_idx, best_obj, trace)


def exhaustive_search(scene: Scene, n_devices: int, f_hz,
                      tx_array: ArrayConfig = ArrayConfig(),
                      rx_array: ArrayConfig = ArrayConfig(),
                      table: GainTable = None) -> PlacementResult:
    """Brute-force optimum over all candidate subsets; small instances only."""
    n_cand = len(scene.candidates)
    if n_cand < n_devices:
        raise InfeasibleError(f"{n_devices} devices need {n_devices} candidates, have {n_cand}")
    if table is None:
        table = GainTable(scene, f_hz, tx_array, rx_array)
    best_idx, best_obj = None, -math.inf
    for idx in combinations(range(n_cand), n_devices):
        o = table.objective_of(np.asarray(idx))
        if o > best_obj:
            best_obj, best_idx = o, idx
    return _result_from_indices(scene, best_idx, best_obj, [best_obj])


def write_placement_csv(path, result: PlacementResult, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["device_index", "x", "y", "z"])
        for i, p in enumerate(result.placement.positions):
            w.writerow([i, repr(p[0]), repr(p[1]), repr(p[2])])


def write_placement_meta(path, result: PlacementResult, params: SaParams) -> None:
    meta = {
        "objective": result.objective,
        "t_init": params.t_init,
        "alpha": params.alpha,
        "iters_max": params.iters_max,
        "stall_limit": params.stall_limit,
        "seed": params.seed,
        "iterations_run": int(result.trace.size),
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_trace_csv(path, result: PlacementResult, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["iteration", "best_objective"])
        for i, v in enumerate(result.trace):
            w.writerow([i, repr(float(v))])
