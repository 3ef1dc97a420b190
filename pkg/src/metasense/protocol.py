"""Sequential sensing protocol: per-device, per-frequency measurements.

One measurement period sweeps every device in order; for each device the
transceiver beams steer at that device and the L-point frequency grid is
measured, producing an L x N matrix of received powers in dB.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuit import ClampDiagnostics, DeviceDesign, device_reflection
from .errors import ConfigError, ShapeError
from .propagation import LinkParams, total_received_power
from .scene import EnvironmentField, PlacementSet, Scene, field_at


@dataclass(frozen=True)
class FrequencyPlan:
    """Uniform frequency grid over [f_low, f_high], endpoints included."""

    f_low_hz: float = 3.5e9
    f_high_hz: float = 4.5e9
    n_samples: int = 101

    def __post_init__(self):
        if not self.f_low_hz < self.f_high_hz:
            raise ConfigError("need f_low < f_high")
        if self.n_samples < 2:
            raise ConfigError("need at least two frequency samples")

    @property
    def frequencies(self) -> np.ndarray:
        return np.linspace(self.f_low_hz, self.f_high_hz, self.n_samples)

    @property
    def center_hz(self) -> float:
        return 0.5 * (self.f_low_hz + self.f_high_hz)


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    """L x N dB powers; column i is the sweep steered at device i."""

    values: np.ndarray
    plan: FrequencyPlan
    seed: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[0] != self.plan.n_samples:
            raise ShapeError(f"measurement matrix shape {v.shape} does not match plan L={self.plan.n_samples}")

    @property
    def n_devices(self) -> int:
        return self.values.shape[1]


def _device_list(designs, n: int) -> list:
    if isinstance(designs, DeviceDesign):
        return [designs] * n
    designs = list(designs)
    if len(designs) != n:
        raise ConfigError(f"got {len(designs)} device designs for {n} positions")
    return designs


def device_reflections(scene: Scene, placement: PlacementSet, designs,
                       field_: EnvironmentField, freqs: np.ndarray,
                       clamp_diag: ClampDiagnostics = None) -> np.ndarray:
    """(N, L) reflection coefficients; independent of beam steering."""
    devices = _device_list(designs, len(placement))
    out = np.empty((len(placement), freqs.size))
    for j, pos in enumerate(placement.positions):
        cond = field_at(field_, scene, pos)
        out[j] = device_reflection(devices[j], freqs, cond, clamp_diag)
    return out


def measure_all(scene: Scene, placement: PlacementSet, designs,
                field_: EnvironmentField, plan: FrequencyPlan,
                link_params: LinkParams, noise_std_db: float,
                seed: int, clamp_diag: ClampDiagnostics = None) -> MeasurementMatrix:
    """Measure every device over the plan's grid; deterministic in seed.

    Noise is drawn device-major (device 0's sweep first), matching the
    sequential protocol order.
    """
    n = len(placement)
    if n == 0:
        raise ConfigError("placement is empty")
    if noise_std_db < 0:
        raise ConfigError("noise std must be >= 0")
    devices = _device_list(designs, n)
    freqs = plan.frequencies
    refl = device_reflections(scene, placement, devices, field_, freqs, clamp_diag)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, noise_std_db, size=(n, freqs.size)) if noise_std_db > 0 \
        else np.zeros((n, freqs.size))
    values = np.empty((freqs.size, n))
    for i in range(n):
        terms = total_received_power(scene, placement, devices, field_, i, freqs,
                                     link_params, noise_sample_db=noise[i],
                                     reflections=refl)
        values[:, i] = terms.total_db
    if not np.all(np.isfinite(values)):
        raise ConfigError("non-finite received power; check link parameters")
    return MeasurementMatrix(values=values, plan=plan, seed=seed)


def _smooth3(x: np.ndarray) -> np.ndarray:
    s = np.empty_like(x)
    s[0] = x[:2].mean()
    s[-1] = x[-2:].mean()
    if x.size > 2:
        s[1:-1] = (x[:-2] + x[1:-1] + x[2:]) / 3.0
    return s


def column_depth_features(matrix: MeasurementMatrix, n_peaks: int) -> np.ndarray:
    """Per-device absorption-peak frequencies, ascending; NaN where absent.

    Peaks are interior local minima of the 3-point smoothed dB sweep; the
    n_peaks deepest are kept.  Diagnostic path only, not the estimator input.
    """
    freqs = matrix.plan.frequencies
    out = np.full((matrix.n_devices, n_peaks), np.nan)
    for i in range(matrix.n_devices):
        s = _smooth3(matrix.values[:, i])
        interior = np.arange(1, s.size - 1)
        is_min = (s[interior] < s[interior - 1]) & (s[interior] < s[interior + 1])
        mins = interior[is_min]
        if mins.size == 0:
            continue
        deepest = mins[np.argsort(s[mins])][:n_peaks]
        found = np.sort(freqs[deepest])
        out[i, : found.size] = found
    return out


def write_measurements_csv(path, matrix: MeasurementMatrix, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["frequency_hz"] + [f"device_{i}" for i in range(matrix.n_devices)])
        freqs = matrix.plan.frequencies
        for k in range(matrix.values.shape[0]):
            w.writerow([repr(float(freqs[k]))] + [repr(float(v)) for v in matrix.values[k]])


def write_measurement_meta(path, matrix: MeasurementMatrix, placement: PlacementSet,
                           noise_std_db: float) -> None:
    meta = {
        "seed": matrix.seed,
        "noise_std_db": noise_std_db,
        "f_low_hz": matrix.plan.f_low_hz,
        "f_high_hz": matrix.plan.f_high_hz,
        "n_samples": matrix.plan.n_samples,
        "positions": [list(p) for p in placement.positions],
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
