"""Equivalent-circuit model of split ring resonator (SRR) sensor tags.

Each SRR is a series RLC loop whose gap is filled with a condition-sensitive
material.  The gap contributes a parallel R-C branch (sensitive resistance in
parallel with the gap capacitance), so the impedance seen by the incident
wave is

    Z(f) = R_ring + j*2*pi*f*L + 1/(j*2*pi*f*C_surf)
           + R_sen / (1 + j*2*pi*f*C_gap*R_sen)

The reflection coefficient of a single SRR is 1 - a*Re(Z)/|Z|^2 with a
dimensionless coupling coefficient `a`, and a full device averages the
reflection of its SRRs.  Absorption peaks sit at the |Z| minima; a wider gap
means a smaller gap capacitance and a higher resonance frequency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.constants import epsilon_0

from .errors import ShapeError

# Operating ranges for the supported condition kinds.
TEMPERATURE_RANGE_K = (263.0, 333.0)
HUMIDITY_RANGE = (0.0, 1.0)

# Baseline conditions used for cross-sensitivity deviations.
REFERENCE_CONDITIONS = {"temperature": 298.15, "humidity": 0.5}

CONDITION_RANGES = {"temperature": TEMPERATURE_RANGE_K, "humidity": HUMIDITY_RANGE}


class ClampDiagnostics:
    """Counts how often the reflection formula left [0, 1] and was clamped."""

    def __init__(self):
        self.clamped = 0
        self.evaluated = 0

    def record(self, n_clamped: int, n_total: int):
        self.clamped += int(n_clamped)
        self.evaluated += int(n_total)

    @property
    def clamp_fraction(self) -> float:
        return self.clamped / self.evaluated if self.evaluated else 0.0


@dataclass(frozen=True)
class MaterialModel:
    """Resistance model of the condition-sensitive gap filling.

    kind: "temperature" or "humidity".
    reference_resistance: ohms at the reference condition.
    sensitivity: shape constant (NTC beta in kelvin for temperature,
        decades per unit relative humidity for humidity).
    reference_condition: kelvin for temperature, fraction for humidity.
    cross_coeff: fractional resistance change per unit deviation of each
        non-target condition from its baseline in REFERENCE_CONDITIONS.
    """

    kind: str
    reference_resistance: float
    sensitivity: float
    reference_condition: float
    cross_coeff: float = 0.0

    def __post_init__(self):
        if self.kind not in CONDITION_RANGES:
            raise ValueError(f"unknown material kind {self.kind!r}")
        if self.reference_resistance <= 0:
            raise ValueError("reference_resistance must be > 0")
        lo, hi = CONDITION_RANGES[self.kind]
        if not lo <= self.reference_condition <= hi:
            raise ValueError(
                f"reference_condition {self.reference_condition} outside "
                f"operating range [{lo}, {hi}] for kind {self.kind!r}"
            )


@dataclass(frozen=True)
class SrrDesign:
    """Geometry and circuit constants of one split ring resonator.

    All circuit constants are SI.  `coupling` links dissipated power to the
    reflection coefficient; calibrate_coupling() sets it so the reflection at
    the reference-condition resonance equals a target peak depth.
    """

    ring_resistance: float
    self_inductance: float
    surface_capacitance: float
    gap_width: float
    gap_area: float
    gap_permittivity: float
    coupling: float
    material: MaterialModel

    def __post_init__(self):
        for name in ("ring_resistance", "self_inductance", "surface_capacitance",
                     "gap_width", "gap_area", "gap_permittivity"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.coupling < 0:
            raise ValueError("coupling must be >= 0")


@dataclass(frozen=True)
class DeviceDesign:
    """A sensor tag: N_s SRRs paved as units_per_side^2 identical units."""

    srrs: tuple[SrrDesign, ...]
    area: float
    units_per_side: int = 1

    def __post_init__(self):
        object.__setattr__(self, "srrs", tuple(self.srrs))
        if len(self.srrs) < 1:
            raise ValueError("a device needs at least one SRR")
        if self.area <= 0:
            raise ValueError("area must be > 0")
        if self.units_per_side < 1:
            raise ValueError("units_per_side must be >= 1")

    @property
    def n_conditions(self) -> int:
        return len(self.srrs)

    def condition_kinds(self) -> list[str]:
        return [s.material.kind for s in self.srrs]


def _check_condition(kind: str, value: float):
    lo, hi = CONDITION_RANGES[kind]
    if not lo <= value <= hi:
        raise ValueError(
            f"{kind} value {value} outside operating range [{lo}, {hi}]"
        )


def material_resistance(
    material: MaterialModel,
    target_condition: float,
    other_conditions: Mapping[str, float] | None = None,
) -> float:
    """Resistance of the sensitive material at the given conditions.

    Temperature kind follows the NTC law R = R_ref*exp(B*(1/T - 1/T_ref));
    humidity kind the log-linear law R = R_ref*10^(-s*(RH - RH_ref)).  Each
    non-target condition multiplies the result by (1 + cross_coeff*dc) where
    dc is its deviation from the baseline in REFERENCE_CONDITIONS.
    """
    _check_condition(material.kind, target_condition)
    if material.kind == "temperature":
        r = material.reference_resistance * math.exp(
            material.sensitivity * (1.0 / target_condition - 1.0 / material.reference_condition)
        )
    else:
        r = material.reference_resistance * 10.0 ** (
            -material.sensitivity * (target_condition - material.reference_condition)
        )
    if other_conditions:
        for kind, value in other_conditions.items():
            _check_condition(kind, value)
            r *= 1.0 + material.cross_coeff * (value - REFERENCE_CONDITIONS[kind])
    if not (np.isfinite(r) and r > 0):
        raise ValueError(f"material resistance {r} is not finite and positive")
    return r


def gap_capacitance(design: SrrDesign) -> float:
    """Parallel-plate capacitance of the gap: eps0*eps_r*A/d."""
    if design.gap_width <= 0:
        raise ValueError("gap_width must be > 0")
    return epsilon_0 * design.gap_permittivity * design.gap_area / design.gap_width


def impedance(
    design: SrrDesign,
    f,
    target_condition: float,
    other_conditions: Mapping[str, float] | None = None,
):
    """Complex impedance of the SRR at frequency f (scalar or array, Hz)."""
    f_arr = np.asarray(f, dtype=float)
    if np.any(f_arr <= 0):
        raise ValueError("frequency must be > 0")
    r_sen = material_resistance(design.material, target_condition, other_conditions)
    c_gap = gap_capacitance(design)
    w = 2.0 * np.pi * f_arr
    z = (
        design.ring_resistance
        + 1j * w * design.self_inductance
        + 1.0 / (1j * w * design.surface_capacitance)
        + r_sen / (1.0 + 1j * w * c_gap * r_sen)
    )
    return z if np.ndim(f) else complex(z)


def srr_reflection(
    design: SrrDesign,
    f,
    target_condition: float,
    other_conditions: Mapping[str, float] | None = None,
    diag: ClampDiagnostics | None = None,
):
    """Reflection coefficient 1 - a*Re(Z)/|Z|^2, clamped to [0, 1].

    Clamping events are counted in `diag` when provided; with a properly
    calibrated coupling they should not occur inside the design band.
    """
    z = impedance(design, f, target_condition, other_conditions)
    z_arr = np.asarray(z)
    raw = 1.0 - design.coupling * z_arr.real / np.abs(z_arr) ** 2
    clamped = np.clip(raw, 0.0, 1.0)
    if diag is not None:
        diag.record(np.count_nonzero(raw != clamped), raw.size)
    return clamped if np.ndim(f) else float(clamped)


def device_reflection(
    device: DeviceDesign,
    f,
    conditions: Sequence[float],
    diag: ClampDiagnostics | None = None,
):
    """Mean reflection of the device's SRRs at the given condition vector.

    conditions[i] is the target condition of SRR i; the remaining entries act
    as that SRR's cross conditions (keyed by the other SRRs' material kinds).
    """
    if len(conditions) != device.n_conditions:
        raise ShapeError(
            f"conditions has length {len(conditions)}, expected {device.n_conditions}"
        )
    kinds = device.condition_kinds()
    total = None
    for i, srr in enumerate(device.srrs):
        others = {kinds[j]: conditions[j] for j in range(len(kinds)) if j != i}
        refl = srr_reflection(srr, f, conditions[i], others, diag)
        total = refl if total is None else total + refl
    return total / device.n_conditions


class ResonanceResult(NamedTuple):
    frequency_hz: float
    at_band_edge: bool


def resonance_frequency(
    design: SrrDesign,
    target_condition: float,
    other_conditions: Mapping[str, float] | None = None,
    band: tuple[float, float] = (3.5e9, 4.5e9),
    n_grid: int = 101,
    rel_tol: float = 1e-6,
) -> ResonanceResult:
    """Frequency of the |Z| minimum inside `band` (the absorption peak).

    Grid search over n_grid points, then golden-section refinement on the
    bracketing interval.  If the grid minimum sits on a band edge the result
    is flagged: the true peak may lie outside the band.
    """
    f_lo, f_hi = band
    if not f_lo < f_hi:
        raise ValueError("band must satisfy f_lo < f_hi")
    if n_grid < 3:
        raise ValueError("n_grid must be >= 3")

    r_sen = material_resistance(design.material, target_condition, other_conditions)
    c_gap = gap_capacitance(design)

    def mag(f):
        w = 2.0 * np.pi * f
        z = (
            design.ring_resistance
            + 1j * w * design.self_inductance
            + 1.0 / (1j * w * design.surface_capacitance)
            + r_sen / (1.0 + 1j * w * c_gap * r_sen)
        )
        return np.abs(z)

    grid = np.linspace(f_lo, f_hi, n_grid)
    idx = int(np.argmin(mag(grid)))
    if idx == 0 or idx == n_grid - 1:
        return ResonanceResult(float(grid[idx]), True)

    a, b = grid[idx - 1], grid[idx + 1]
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = mag(c), mag(d)
    while (b - a) > rel_tol * b:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = mag(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = mag(d)
    return ResonanceResult(float(0.5 * (a + b)), False)


def calibrate_coupling(
    design: SrrDesign,
    band: tuple[float, float],
    peak_depth: float = 0.1,
    n_grid: int = 101,
) -> SrrDesign:
    """Return a copy of `design` whose coupling puts the reference-condition
    resonance reflection at `peak_depth`.

    Solves 1 - a*Re(Z)/|Z|^2 = peak_depth at the resonance frequency under
    reference conditions (target at the material's reference, cross
    conditions at their baselines).
    """
    if not 0.0 <= peak_depth < 1.0:
        raise ValueError("peak_depth must be in [0, 1)")
    ref = design.material.reference_condition
    others = {
        kind: value
        for kind, value in REFERENCE_CONDITIONS.items()
        if kind != design.material.kind
    }
    probe = replace(design, coupling=0.0)
    res = resonance_frequency(probe, ref, others, band, n_grid)
    z = impedance(probe, res.frequency_hz, ref, others)
    a = (1.0 - peak_depth) * abs(z) ** 2 / z.real
    return replace(design, coupling=float(a))


def validate_guard_band(
    device: DeviceDesign,
    band: tuple[float, float],
    guard_hz: float = 0.2e9,
    n_grid: int = 101,
) -> list[float]:
    """Check that SRR resonances at reference conditions are pairwise
    separated by at least guard_hz; returns the resonance list.

    Raises ValueError when two absorption peaks would be indistinguishable.
    """
    freqs = []
    for srr in device.srrs:
        ref = srr.material.reference_condition
        others = {
            kind: value
            for kind, value in REFERENCE_CONDITIONS.items()
            if kind != srr.material.kind
        }
        freqs.append(resonance_frequency(srr, ref, others, band, n_grid).frequency_hz)
    ordered = sorted(freqs)
    for lo, hi in zip(ordered, ordered[1:]):
        if hi - lo < guard_hz:
            raise ValueError(
                f"SRR resonances {lo / 1e9:.3f} and {hi / 1e9:.3f} GHz are closer "
                f"than the {guard_hz / 1e9:.3f} GHz guard band"
            )
    return freqs
