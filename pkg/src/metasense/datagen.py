"""Synthetic condition-field families and dataset construction.

Five field families span the regimes a field estimator must not memorize:
constant, smooth gradient, localized anomaly (one or two Gaussian bumps),
and periodic variation.  Datasets pair each sampled field with a simulated
measurement matrix; all randomness derives from one root seed through
spawned seed sequences, so a dataset is a pure function of its arguments.
Field seeds depend only on (root seed, sample index), never on the
placement, which lets paired-seed sweeps reuse identical fields while the
placement varies.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .circuit import CONDITION_RANGES, ClampDiagnostics, DeviceDesign
from .errors import ConfigError
from .propagation import LinkParams
from .protocol import (FrequencyPlan, MeasurementMatrix, measure_all,
                       write_measurements_csv)
from .scene import (CONDITION_COLUMNS, EnvironmentField, PlacementSet, Scene,
                    validate_field, write_field_csv, read_field_csv)

FAMILY_KINDS = ("uniform", "linear-gradient", "gaussian-hotspot", "two-source", "sinusoidal")

# Sampling ranges keep fields well inside the physical ranges: clamping
# should stay essentially at zero under defaults.
DEFAULT_CONDITION_PARAMS = {
    "temperature": {"base": (283.0, 308.0), "amp": (-12.0, 12.0),
                    "sigma": (0.5, 2.0), "wavelength": (1.0, 4.0)},
    "humidity": {"base": (0.3, 0.7), "amp": (-0.25, 0.25),
                 "sigma": (0.5, 2.0), "wavelength": (1.0, 4.0)},
}

DATASET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FieldFamily:
    """One distribution family plus its per-condition sampling ranges."""

    kind: str
    condition_params: dict  # condition name -> {base, amp, sigma, wavelength}

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ConfigError(f"unknown field family {self.kind!r}; choose from {FAMILY_KINDS}")


def default_families(kinds=FAMILY_KINDS) -> list:
    return [FieldFamily(kind=k, condition_params=DEFAULT_CONDITION_PARAMS) for k in kinds]


def _sample_column(kind: str, pr: dict, scene: Scene, rng: np.random.Generator) -> np.ndarray:
    centers = scene.cell_centers()
    dims = np.asarray(scene.dims)
    base = rng.uniform(*pr["base"])
    if kind == "uniform":
        return np.full(scene.m_cells, base)
    if kind == "linear-gradient":
        axis = int(rng.integers(3))
        v0 = base + rng.uniform(*pr["amp"])
        v1 = base + rng.uniform(*pr["amp"])
        return v0 + (v1 - v0) * centers[:, axis] / dims[axis]
    if kind == "gaussian-hotspot":
        amp = rng.uniform(*pr["amp"])
        p0 = rng.uniform(0.0, dims)
        sigma = rng.uniform(*pr["sigma"])
        d2 = np.sum((centers - p0) ** 2, axis=1)
        return base + amp * np.exp(-d2 / (2.0 * sigma ** 2))
    if kind == "two-source":
        out = np.full(scene.m_cells, base)
        for _ in range(2):
            amp = rng.uniform(*pr["amp"])
            p0 = rng.uniform(0.0, dims)
            sigma = rng.uniform(*pr["sigma"])
            d2 = np.sum((centers - p0) ** 2, axis=1)
            out += amp * np.exp(-d2 / (2.0 * sigma ** 2))
        return out
    if kind == "sinusoidal":
        amp = rng.uniform(*pr["amp"])
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        wavelength = rng.uniform(*pr["wavelength"])
        phase = rng.uniform(0.0, 2.0 * np.pi)
        return base + amp * np.sin(2.0 * np.pi * (centers @ u) / wavelength + phase)
    raise ConfigError(f"unknown field family {kind!r}")


def sample_field(family: FieldFamily, scene: Scene, seed,
                 diag: ClampDiagnostics = None) -> EnvironmentField:
    """Draw one field; deterministic in seed.  Values are clamped into the
    physical range, counted by the optional diagnostics."""
    rng = np.random.default_rng(seed)
    cols = []
    for cond in CONDITION_COLUMNS[: scene.n_conditions]:
        raw = _sample_column(family.kind, family.condition_params[cond], scene, rng)
        lo, hi = CONDITION_RANGES[cond]
        clipped = np.clip(raw, lo, hi)
        if diag is not None:
            diag.evaluated += raw.size
            diag.clamped += int(np.count_nonzero(clipped != raw))
        cols.append(clipped)
    return EnvironmentField(values=np.column_stack(cols))


# ------------------------------------------------------------ fingerprints

def _sha256_of(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def scene_fingerprint(scene: Scene) -> str:
    return _sha256_of({
        "dims": list(scene.dims), "grid_res": scene.grid_res,
        "tx": list(map(repr, scene.tx_pos)), "rx": list(map(repr, scene.rx_pos)),
        "candidates": [list(map(repr, p)) for p in scene.candidates],
        "n_conditions": scene.n_conditions,
    })


def designs_fingerprint(designs) -> str:
    if isinstance(designs, DeviceDesign):
        designs = [designs]
    blob = []
    for d in designs:
        blob.append({
            "area": d.area, "units_per_side": d.units_per_side,
            "srrs": [{**{k: getattr(s, k) for k in
                         ("ring_resistance", "self_inductance", "surface_capacitance",
                          "gap_width", "gap_area", "gap_permittivity", "coupling")},
                      "material": {k: getattr(s.material, k) for k in
                                   ("kind", "reference_resistance", "sensitivity",
                                    "reference_condition", "cross_coeff")}}
                     for s in d.srrs],
        })
    return _sha256_of(blob)


def _file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


# ----------------------------------------------------------------- dataset

@dataclass(eq=False)
class Dataset:
    """Paired (measurement matrix, truth field) samples plus provenance."""

    samples: list               # of (MeasurementMatrix, EnvironmentField)
    manifest: dict

    def __len__(self) -> int:
        return len(self.samples)

    def measurement_array(self) -> np.ndarray:
        """(n, L, N) stack of dB matrices."""
        return np.stack([m.values for m, _ in self.samples])

    def truth_array(self) -> np.ndarray:
        """(n, N_s, M) stack of condition fields (transposed to row-major
        per-condition layout used by the estimator)."""
        return np.stack([f.values.T for _, f in self.samples])


def build_dataset(scene: Scene, placement: PlacementSet, designs,
                  plan: FrequencyPlan, families, n_per_family: int,
                  link_params: LinkParams, noise_std_db: float, seed: int,
                  clamp_diag: ClampDiagnostics = None) -> Dataset:
    """n_per_family fields per family, each measured with fresh noise."""
    if n_per_family < 0:
        raise ConfigError("n_per_family must be >= 0")
    families = list(families)
    n_total = len(families) * n_per_family
    root = np.random.SeedSequence(seed)
    kids = root.spawn(n_total) if n_total else []
    samples = []
    records = []
    for fam_idx, family in enumerate(families):
        for r in range(n_per_family):
            k = fam_idx * n_per_family + r
            field_ss, noise_ss = kids[k].spawn(2)
            field_seed = int(field_ss.generate_state(1, dtype=np.uint64)[0])
            noise_seed = int(noise_ss.generate_state(1, dtype=np.uint64)[0])
            field = sample_field(family, scene, field_seed, clamp_diag)
            validate_field(field, scene)
            matrix = measure_all(scene, placement, designs, field, plan,
                                 link_params, noise_std_db, noise_seed)
            samples.append((matrix, field))
            records.append({"index": k, "family": family.kind,
                            "field_seed": field_seed, "noise_seed": noise_seed})
    manifest = {
        "format_version": DATASET_FORMAT_VERSION,
        "seed": seed,
        "n_per_family": n_per_family,
        "families": [f.kind for f in families],
        "scene_sha256": scene_fingerprint(scene),
        "designs_sha256": designs_fingerprint(designs),
        "placement": [list(p) for p in placement.positions],
        "plan": {"f_low_hz": plan.f_low_hz, "f_high_hz": plan.f_high_hz,
                 "n_samples": plan.n_samples},
        "noise_std_db": noise_std_db,
        "samples": records,
    }
    return Dataset(samples=samples, manifest=manifest)


def save_dataset(ds: Dataset, out_dir, scene: Scene, header_lines=()) -> None:
    """One measurement CSV and one field CSV per sample, plus manifest.json
    recording a content hash for every file."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = dict(ds.manifest)
    manifest["samples"] = [dict(r) for r in ds.manifest["samples"]]
    for rec, (matrix, field) in zip(manifest["samples"], ds.samples):
        k = rec["index"]
        m_name = f"sample_{k:04d}_measurement.csv"
        f_name = f"sample_{k:04d}_field.csv"
        write_measurements_csv(os.path.join(out_dir, m_name), matrix, header_lines)
        write_field_csv(os.path.join(out_dir, f_name), field, scene, header_lines)
        rec["measurement_csv"] = m_name
        rec["field_csv"] = f_name
        rec["measurement_sha256"] = _file_sha256(os.path.join(out_dir, m_name))
        rec["field_sha256"] = _file_sha256(os.path.join(out_dir, f_name))
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(in_dir) -> Dataset:
    """Load and verify a saved dataset; hash mismatch is an error."""
    with open(os.path.join(in_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != DATASET_FORMAT_VERSION:
        raise ConfigError(f"unsupported dataset format {manifest.get('format_version')}")
    plan = FrequencyPlan(**manifest["plan"])
    samples = []
    for rec in manifest["samples"]:
        m_path = os.path.join(in_dir, rec["measurement_csv"])
        f_path = os.path.join(in_dir, rec["field_csv"])
        for path, want in ((m_path, rec["measurement_sha256"]), (f_path, rec["field_sha256"])):
            got = _file_sha256(path)
            if got != want:
                raise ConfigError(f"hash mismatch for {path}: {got} != {want}")
        values = _read_measurement_csv(m_path)
        matrix = MeasurementMatrix(values=values, plan=plan, seed=rec["noise_seed"])
        field = EnvironmentField(values=read_field_csv(f_path))
        samples.append((matrix, field))
    return Dataset(samples=samples, manifest=manifest)


def _read_measurement_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        rdr = csv.reader(line for line in fh if not line.startswith("#"))
        next(rdr)  # header
        for rec in rdr:
            rows.append([float(x) for x in rec[1:]])
    return np.asarray(rows, dtype=float)
