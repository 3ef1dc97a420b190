"""Experiment configuration: TOML schema, defaults, validation, builders.

A config file fully determines an experiment together with the global seed;
the resolved config (defaults merged with the file, seed applied) is hashed
and stamped into every emitted CSV so outputs are traceable to their inputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .circuit import (DeviceDesign, MaterialModel, SrrDesign, calibrate_coupling,
                      validate_guard_band)
from .errors import ConfigError
from .estimator import NetworkArch, TrainConfig
from .placement import SaParams
from .propagation import ArrayConfig, LinkParams, half_wavelength
from .protocol import FrequencyPlan
from .scene import PlacementSet, Scene, build_scene, validate_placement

_SRR_DEFAULTS = {
    "temperature": {
        "kind": "temperature", "ring_resistance": 45.0, "self_inductance": 50e-9,
        "surface_capacitance": 4.0e-14, "gap_width_m": 6.0e-4, "gap_area_m2": 1e-5,
        "gap_permittivity": 3.0, "reference_resistance": 2000.0, "sensitivity": 3950.0,
        "reference_condition": 298.15, "cross_coeff": 0.1,
    },
    "humidity": {
        "kind": "humidity", "ring_resistance": 55.0, "self_inductance": 50e-9,
        "surface_capacitance": 3.5e-14, "gap_width_m": 7.8e-4, "gap_area_m2": 1e-5,
        "gap_permittivity": 3.0, "reference_resistance": 2000.0, "sensitivity": 1.2,
        "reference_condition": 0.5, "cross_coeff": 0.002,
    },
}

DEFAULTS = {
    "run": {"seed": 0, "out_dir": "out", "heatmap_z": 1.5},
    # transceivers sit mid-room, a pair half a meter apart
    "scene": {
        "dims": [5.0, 8.0, 3.0], "grid_res": 0.5,
        "tx_pos": [2.25, 4.0, 1.5], "rx_pos": [2.75, 4.0, 1.5],
        "candidate_spacing": 0.5, "exclusion_radius": 0.5,
    },
    "device": {
        "area": 0.01, "units_per_side": 10,
        "srr": [dict(_SRR_DEFAULTS["temperature"]), dict(_SRR_DEFAULTS["humidity"])],
    },
    "calibration": {"peak_depth": 0.1, "guard_hz": 2e8},
    "plan": {"f_low_hz": 3.5e9, "f_high_hz": 4.5e9, "n_samples": 101},
    "link": {
        "p_t_w": 1.0, "eta": 0.9, "r_env": 0.5, "noise_std_db": 0.0,
        "array": {"n_side": 4, "element_spacing_m": half_wavelength(4e9),
                  "element_gain": 1.0},
    },
    "placement": {
        "mode": "anneal", "n_devices": 10, "t_init": 1.0, "alpha": 0.95,
        "iters_max": 5000, "stall_limit": 500, "n_chains": 1,
        "band_average": False, "positions": [],
    },
    "estimator": {
        "fc_out": 1024, "deconv": [16, 4, 2], "conv1": [16, 3], "conv2": [8, 3],
        "lr": 1e-3, "epochs": 150, "batch_size": 16, "weight_init_scale": 1.0,
        "momentum": 0.0,
    },
    "datagen": {
        "families": ["uniform", "linear-gradient", "gaussian-hotspot",
                     "two-source", "sinusoidal"],
        "n_per_family": 256, "n_test_per_family": 16,
    },
    "sweep_device": {
        "gap_widths_mm": [float(x) for x in np.linspace(0.2, 2.0, 10)],
        "f_low_hz": 1.5e9, "f_high_hz": 7.5e9, "n_samples": 301, "srr_index": 0,
    },
    "sweep_n": {"n_list": [2, 4, 6], "n_seeds": 3},
}


def _merge(defaults, override, path=""):
    out = {}
    for key, dval in defaults.items():
        if key in override:
            oval = override[key]
            if isinstance(dval, dict):
                if not isinstance(oval, dict):
                    raise ConfigError(f"config field {path}{key} must be a table")
                out[key] = _merge(dval, oval, f"{path}{key}.")
            else:
                out[key] = oval
        else:
            out[key] = json.loads(json.dumps(dval))  # deep copy of plain data
    unknown = set(override) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config field(s) {path or 'top level '}: {sorted(unknown)}")
    return out


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Resolved configuration tree (defaults merged with the config file)."""

    raw: dict

    def __getitem__(self, key):
        return self.raw[key]


def load_config(path=None, seed=None, out_dir=None) -> ExperimentConfig:
    """Read a TOML file (or pure defaults), apply CLI overrides, validate."""
    data = {}
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    raw = _merge(DEFAULTS, data)
    if seed is not None:
        raw["run"]["seed"] = int(seed)
    if out_dir is not None:
        raw["run"]["out_dir"] = str(out_dir)
    cfg = ExperimentConfig(raw=raw)
    validate_config(cfg)
    return cfg


def config_hash(cfg: ExperimentConfig) -> str:
    """Short content hash of the resolved config, excluding the output dir."""
    d = json.loads(json.dumps(cfg.raw))
    d["run"].pop("out_dir", None)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:12]


# ------------------------------------------------------------------ builders

def make_scene(cfg: ExperimentConfig) -> Scene:
    s = cfg["scene"]
    return build_scene(s["dims"], s["grid_res"], s["tx_pos"], s["rx_pos"],
                       s["candidate_spacing"], s["exclusion_radius"],
                       n_conditions=len(cfg["device"]["srr"]))


def make_plan(cfg: ExperimentConfig) -> FrequencyPlan:
    p = cfg["plan"]
    return FrequencyPlan(p["f_low_hz"], p["f_high_hz"], int(p["n_samples"]))


def _make_srr(block: dict) -> SrrDesign:
    material = MaterialModel(kind=block["kind"],
                             reference_resistance=block["reference_resistance"],
                             sensitivity=block["sensitivity"],
                             reference_condition=block["reference_condition"],
                             cross_coeff=block["cross_coeff"])
    return SrrDesign(ring_resistance=block["ring_resistance"],
                     self_inductance=block["self_inductance"],
                     surface_capacitance=block["surface_capacitance"],
                     gap_width=block["gap_width_m"], gap_area=block["gap_area_m2"],
                     gap_permittivity=block["gap_permittivity"], coupling=0.0,
                     material=material)


def make_device(cfg: ExperimentConfig, calibrate: bool = True) -> DeviceDesign:
    """Build the device and calibrate each ring's coupling on the plan band."""
    blocks = cfg["device"]["srr"]
    if not blocks:
        raise ConfigError("device.srr must define at least one ring")
    plan = make_plan(cfg)
    band = (plan.f_low_hz, plan.f_high_hz)
    cal = cfg["calibration"]
    srrs = []
    for block in blocks:
        block = _merge(_SRR_DEFAULTS.get(block.get("kind", ""), _SRR_DEFAULTS["temperature"]),
                       block, "device.srr.")
        srr = _make_srr(block)
        if calibrate:
            srr = calibrate_coupling(srr, band, peak_depth=cal["peak_depth"])
        srrs.append(srr)
    device = DeviceDesign(srrs=tuple(srrs), area=cfg["device"]["area"],
                          units_per_side=int(cfg["device"]["units_per_side"]))
    if calibrate and len(srrs) > 1:
        validate_guard_band(device, band, guard_hz=cal["guard_hz"])
    return device


def make_array(cfg: ExperimentConfig) -> ArrayConfig:
    a = cfg["link"]["array"]
    return ArrayConfig(n_side=int(a["n_side"]), element_spacing=a["element_spacing_m"],
                       element_gain=a["element_gain"])


def make_link_params(cfg: ExperimentConfig) -> LinkParams:
    l = cfg["link"]
    arr = make_array(cfg)
    return LinkParams(p_t_w=l["p_t_w"], eta=l["eta"], r_env=l["r_env"],
                      tx_array=arr, rx_array=arr)


def make_sa_params(cfg: ExperimentConfig, seed: int) -> SaParams:
    p = cfg["placement"]
    return SaParams(t_init=p["t_init"], alpha=p["alpha"], iters_max=int(p["iters_max"]),
                    stall_limit=int(p["stall_limit"]), seed=seed)


def make_arch(cfg: ExperimentConfig, plan: FrequencyPlan, n_devices: int,
              scene: Scene) -> NetworkArch:
    e = cfg["estimator"]
    return NetworkArch(input_dims=(plan.n_samples, n_devices),
                       output_dims=(scene.n_conditions, scene.m_cells),
                       fc_out=int(e["fc_out"]), deconv=tuple(e["deconv"]),
                       conv1=tuple(e["conv1"]), conv2=tuple(e["conv2"]))


def make_train_config(cfg: ExperimentConfig, seed: int) -> TrainConfig:
    e = cfg["estimator"]
    return TrainConfig(lr=e["lr"], epochs=int(e["epochs"]), batch_size=int(e["batch_size"]),
                       seed=seed, weight_init_scale=e["weight_init_scale"],
                       momentum=e["momentum"])


def fixed_placement(cfg: ExperimentConfig, scene: Scene) -> PlacementSet:
    pos = cfg["placement"]["positions"]
    if not pos:
        raise ConfigError("placement.mode = 'fixed' needs placement.positions")
    placement = PlacementSet(tuple(tuple(p) for p in pos))
    validate_placement(placement, scene)
    return placement


def validate_config(cfg: ExperimentConfig) -> None:
    """Cross-block consistency checks with field-level messages."""
    scene = make_scene(cfg)
    plan = make_plan(cfg)
    p = cfg["placement"]
    if p["mode"] not in ("anneal", "fixed", "random"):
        raise ConfigError(f"placement.mode {p['mode']!r} not one of anneal/fixed/random")
    n_devices = int(p["n_devices"])
    if p["mode"] == "fixed":
        n_devices = len(p["positions"]) or n_devices
        fixed_placement(cfg, scene)
    if n_devices < 1:
        raise ConfigError("placement.n_devices must be >= 1")
    if len(scene.candidates) < n_devices:
        raise ConfigError(f"placement.n_devices = {n_devices} exceeds "
                          f"{len(scene.candidates)} candidate positions")
    if cfg["link"]["noise_std_db"] < 0:
        raise ConfigError("link.noise_std_db must be >= 0")
    if int(cfg["datagen"]["n_per_family"]) < 0 or int(cfg["datagen"]["n_test_per_family"]) < 0:
        raise ConfigError("datagen sample counts must be >= 0")
    for fam in cfg["datagen"]["families"]:
        from .datagen import FAMILY_KINDS
        if fam not in FAMILY_KINDS:
            raise ConfigError(f"datagen.families entry {fam!r} not one of {FAMILY_KINDS}")
    z = cfg["run"]["heatmap_z"]
    if not 0.0 <= z <= cfg["scene"]["dims"][2]:
        raise ConfigError(f"run.heatmap_z = {z} outside the room height")
    # arch must compose for this (L, N, N_s, M)
    make_arch(cfg, plan, n_devices, scene)
    # device must build and calibrate cleanly on the plan band
    make_device(cfg)
    # SA parameter validation
    make_sa_params(cfg, 0)
    make_train_config(cfg, 0)
    if int(cfg["sweep_device"]["n_samples"]) < 2:
        raise ConfigError("sweep_device.n_samples must be >= 2")
    if not cfg["sweep_n"]["n_list"]:
        raise ConfigError("sweep_n.n_list must be nonempty")
