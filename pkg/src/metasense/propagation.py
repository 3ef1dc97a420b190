"""Antenna-array gains, link geometry, and the four-part received power.

The received power for a measurement aimed at device i is the sum of a
target term (device i's backscatter), an interference term (every other
device's backscatter under the same beam steering), a frequency-flat
environment scattering term, plus Gaussian measurement noise applied in dB:

    P_R = Target + Interference + Environment,   P_R_db = 10 log10(P_R) + eps
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuit import DeviceDesign, device_reflection
from .errors import ConfigError
from .scene import EnvironmentField, PlacementSet, Scene, field_at

SPEED_OF_LIGHT = 299_792_458.0  # m/s


def half_wavelength(f_hz: float) -> float:
    return SPEED_OF_LIGHT / f_hz / 2.0


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform square planar array of omnidirectional elements.

    Elements sit on an n_side x n_side lattice in the array's local x-y
    plane, centered on the origin.  Spacing defaults to lambda/2 at 4 GHz.
    """

    n_side: int = 4
    element_spacing: float = half_wavelength(4e9)
    element_gain: float = 1.0

    def __post_init__(self):
        if self.n_side < 1:
            raise ConfigError(f"n_side must be >= 1, got {self.n_side}")
        if self.element_spacing <= 0:
            raise ConfigError("element_spacing must be positive")

    @property
    def n_elements(self) -> int:
        return self.n_side ** 2

    def element_positions(self) -> np.ndarray:
        """(N_a, 2) planar element coordinates, centered at the origin."""
        off = (np.arange(self.n_side) - (self.n_side - 1) / 2.0) * self.element_spacing
        xx, yy = np.meshgrid(off, off, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])


def angles(from_point, to_point) -> tuple:
    """Elevation theta in [0, pi] and azimuth phi in (-pi, pi] of `to`
    relative to `from` in the room frame."""
    d = np.asarray(to_point, dtype=float) - np.asarray(from_point, dtype=float)
    r = np.linalg.norm(d)
    if r == 0.0:
        raise ConfigError("coincident points have no direction")
    theta = float(np.arccos(np.clip(d[2] / r, -1.0, 1.0)))
    phi = float(np.arctan2(d[1], d[0]))
    if phi == -np.pi:
        phi = np.pi
    return theta, phi


def _unit(theta: float, phi: float) -> np.ndarray:
    st = np.sin(theta)
    return np.array([st * np.cos(phi), st * np.sin(phi), np.cos(theta)])


def array_gain(cfg: ArrayConfig, steer, look, f_hz):
    """Power gain toward `look` when the array is phased for `steer`.

    Normalized so that the coherent peak (look == steer) equals
    n_elements * element_gain for any steer direction and frequency.
    Accepts a scalar or an array of frequencies.
    """
    f = np.asarray(f_hz, dtype=float)
    if np.any(f <= 0):
        raise ConfigError("frequency must be positive")
    du = _unit(*look)[:2] - _unit(*steer)[:2]  # planar elements: z-component drops
    path = cfg.element_positions() @ du  # (N_a,)
    k = 2.0 * np.pi * f / SPEED_OF_LIGHT
    phase = np.multiply.outer(k, path)  # (..., N_a)
    af_sum = np.exp(1j * phase).sum(axis=-1)
    gain = cfg.element_gain * np.abs(af_sum) ** 2 / cfg.n_elements
    return gain if gain.ndim else float(gain)


def array_gain_many(cfg: ArrayConfig, steer, looks, f_hz):
    """array_gain for one steer and many look directions at once.

    looks: (m, 2) array of (theta, phi) rows.  Returns shape (m,) for a
    scalar frequency, else f.shape + (m,).
    """
    looks = np.asarray(looks, dtype=float)
    f = np.asarray(f_hz, dtype=float)
    if np.any(f <= 0):
        raise ConfigError("frequency must be positive")
    st = np.sin(looks[:, 0])
    u = np.column_stack([st * np.cos(looks[:, 1]), st * np.sin(looks[:, 1])])
    du = u - _unit(*steer)[:2]  # (m, 2)
    path = du @ cfg.element_positions().T  # (m, N_a)
    k = 2.0 * np.pi * f / SPEED_OF_LIGHT
    phase = np.multiply.outer(k, path)  # (..., m, N_a)
    af_sum = np.exp(1j * phase).sum(axis=-1)
    return cfg.element_gain * np.abs(af_sum) ** 2 / cfg.n_elements


def incident_power(p_t_w: float, sigma_m2: float, r_m: float, gain):
    """Power captured by a device of radar cross-section sigma at range r."""
    if r_m <= 0:
        raise ConfigError(f"range must be positive, got {r_m}")
    return p_t_w * sigma_m2 * gain / (4.0 * np.pi * r_m ** 2)


def received_power_single(p_inc_w, s_coeff, r_m: float, gain_rx, f_hz):
    """Backscattered power at the receiver from one device."""
    if r_m <= 0:
        raise ConfigError(f"range must be positive, got {r_m}")
    lam = SPEED_OF_LIGHT / np.asarray(f_hz, dtype=float)
    return p_inc_w * s_coeff * gain_rx * lam ** 2 / (8.0 * np.pi ** 2 * r_m ** 2)


@dataclass(frozen=True)
class LinkParams:
    """Link-budget knobs that are not geometry: power, environment, arrays."""

    p_t_w: float = 1.0
    eta: float = 0.9           # environment scattering fraction
    r_env: float = 0.5         # environment reflection coefficient
    tx_array: ArrayConfig = ArrayConfig()
    rx_array: ArrayConfig = ArrayConfig()


@dataclass(frozen=True)
class LinkBudgetTerms:
    """One measurement's breakdown; fields are scalars or per-frequency arrays."""

    target: np.ndarray
    interference: np.ndarray
    environment: np.ndarray
    noise_db: np.ndarray
    total_db: np.ndarray


def total_received_power(scene: Scene, placement: PlacementSet,
                         devices: Sequence[DeviceDesign], field_: EnvironmentField,
                         measured_index: int, f_hz, params: LinkParams,
                         noise_sample_db=0.0, reflections=None,
                         clamp_diag=None) -> LinkBudgetTerms:
    """Four-part received power with beams steered at device measured_index.

    `reflections`, if given, is a precomputed (N, L) matrix of device
    reflection coefficients over the frequency grid; otherwise they are
    evaluated from the field at each device position.
    """
    n = len(placement)
    if n == 0:
        raise ConfigError("placement is empty")
    if not 0 <= measured_index < n:
        raise ConfigError(f"measured_index {measured_index} out of range for {n} devices")
    if len(devices) != n:
        raise ConfigError("need one device design per placement position")

    f = np.asarray(f_hz, dtype=float)
    pos = placement.as_array()
    steer_t = angles(scene.tx_pos, pos[measured_index])
    steer_r = angles(scene.rx_pos, pos[measured_index])

    def one_device(j: int):
        look_t = angles(scene.tx_pos, pos[j])
        look_r = angles(scene.rx_pos, pos[j])
        r_t = float(np.linalg.norm(pos[j] - scene.tx_pos))
        r_r = float(np.linalg.norm(pos[j] - scene.rx_pos))
        g_t = array_gain(params.tx_array, steer_t, look_t, f)
        g_r = array_gain(params.rx_array, steer_r, look_r, f)
        if reflections is not None:
            s_j = reflections[j]
        else:
            cond = field_at(field_, scene, pos[j])
            s_j = device_reflection(devices[j], f, cond, clamp_diag)
        p_inc = incident_power(params.p_t_w, devices[j].area, r_t, g_t)
        return received_power_single(p_inc, s_j, r_r, g_r, f)

    target = one_device(measured_index)
    interference = np.zeros_like(np.asarray(target, dtype=float))
    for j in range(n):
        if j != measured_index:
            interference = interference + one_device(j)
    environment = np.broadcast_to(params.eta * params.p_t_w * params.r_env,
                                  np.shape(target)).astype(float).copy()
    noise = np.broadcast_to(np.asarray(noise_sample_db, dtype=float),
                            np.shape(target)).astype(float).copy()
    with np.errstate(divide="ignore"):
        total_db = 10.0 * np.log10(target + interference + environment) + noise
    return LinkBudgetTerms(target=np.asarray(target, float),
                           interference=np.asarray(interference, float),
                           environment=environment, noise_db=noise,
                           total_db=np.asarray(total_db, float))


def write_link_budget_csv(path, rows, header_lines=()) -> None:
    """rows: iterable of (device_index, f_hz, terms: LinkBudgetTerms)."""
    import csv

    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["device_index", "frequency_hz", "target_w", "interference_w",
                    "environment_w", "noise_db", "total_db"])
        for dev, f_hz, t in rows:
            f = np.atleast_1d(np.asarray(f_hz, dtype=float))
            tt = np.broadcast_to(t.target, f.shape)
            ii = np.broadcast_to(t.interference, f.shape)
            ee = np.broadcast_to(t.environment, f.shape)
            nn = np.broadcast_to(t.noise_db, f.shape)
            dd = np.broadcast_to(t.total_db, f.shape)
            for idx in range(f.size):
                w.writerow([dev] + [repr(float(v)) for v in
                                    (f[idx], tt[idx], ii[idx], ee[idx], nn[idx], dd[idx])])
