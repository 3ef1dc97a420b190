"""Field family and dataset construction tests."""

import json

import numpy as np
import pytest

from metasense.circuit import (
    CONDITION_RANGES,
    ClampDiagnostics,
    DeviceDesign,
    MaterialModel,
    SrrDesign,
    calibrate_coupling,
)
from metasense.datagen import (
    DEFAULT_CONDITION_PARAMS,
    FAMILY_KINDS,
    FieldFamily,
    build_dataset,
    default_families,
    designs_fingerprint,
    load_dataset,
    sample_field,
    save_dataset,
    scene_fingerprint,
)
from metasense.errors import ConfigError
from metasense.propagation import ArrayConfig, LinkParams
from metasense.protocol import FrequencyPlan
from metasense.scene import PlacementSet, build_scene

BAND = (3.5e9, 4.5e9)


@pytest.fixture(scope="module")
def scene():
    return build_scene((2.0, 2.0, 2.0), 1.0, (0.75, 1.0, 1.0), (1.25, 1.0, 1.0),
                       candidate_spacing=1.0)


@pytest.fixture(scope="module")
def device():
    srr_t = calibrate_coupling(SrrDesign(45.0, 50e-9, 4.0e-14, 6e-4, 1e-5, 3.0, 0.0,
                                         MaterialModel("temperature", 2000.0, 3950.0, 298.15, 0.1)), BAND)
    srr_h = calibrate_coupling(SrrDesign(55.0, 50e-9, 3.5e-14, 7.8e-4, 1e-5, 3.0, 0.0,
                                         MaterialModel("humidity", 2000.0, 1.2, 0.5, 0.002)), BAND)
    return DeviceDesign(srrs=(srr_t, srr_h), area=0.01)


def _placement(scene, idx):
    return PlacementSet(tuple(tuple(scene.candidates[i]) for i in idx))


def _build(scene, device, placement, seed=5, n_per_family=2, noise=0.05):
    plan = FrequencyPlan(3.5e9, 4.5e9, 5)
    link = LinkParams(eta=0.0, tx_array=ArrayConfig(), rx_array=ArrayConfig())
    fams = default_families(("uniform", "gaussian-hotspot"))
    return build_dataset(scene, placement, [device] * len(placement), plan, fams,
                         n_per_family, link, noise, seed)


# ---------------------------------------------------------------- families

def test_unknown_family_kind_rejected():
    with pytest.raises(ConfigError):
        FieldFamily(kind="checkerboard", condition_params=DEFAULT_CONDITION_PARAMS)


def test_default_families_cover_all_kinds():
    fams = default_families()
    assert tuple(f.kind for f in fams) == FAMILY_KINDS


def test_sample_field_deterministic(scene):
    fam = FieldFamily("two-source", DEFAULT_CONDITION_PARAMS)
    f1 = sample_field(fam, scene, 123)
    f2 = sample_field(fam, scene, 123)
    np.testing.assert_array_equal(f1.values, f2.values)
    f3 = sample_field(fam, scene, 124)
    assert not np.array_equal(f1.values, f3.values)


@pytest.mark.parametrize("kind", FAMILY_KINDS)
def test_each_family_in_physical_range(scene, kind):
    fam = FieldFamily(kind, DEFAULT_CONDITION_PARAMS)
    for seed in range(4):
        field = sample_field(fam, scene, seed)
        assert field.values.shape == (scene.m_cells, 2)
        for j, cond in enumerate(("temperature", "humidity")):
            lo, hi = CONDITION_RANGES[cond]
            assert field.values[:, j].min() >= lo
            assert field.values[:, j].max() <= hi


def test_uniform_family_is_constant(scene):
    field = sample_field(FieldFamily("uniform", DEFAULT_CONDITION_PARAMS), scene, 9)
    assert np.ptp(field.values[:, 0]) == 0.0
    assert np.ptp(field.values[:, 1]) == 0.0


def test_clamping_counted_when_params_exceed_range(scene):
    wild = {k: dict(v, amp=(200.0, 300.0)) for k, v in DEFAULT_CONDITION_PARAMS.items()}
    diag = ClampDiagnostics()
    field = sample_field(FieldFamily("gaussian-hotspot", wild), scene, 1, diag)
    assert diag.clamped > 0
    assert field.values[:, 0].max() <= CONDITION_RANGES["temperature"][1]


def test_default_ranges_do_not_clamp(scene):
    diag = ClampDiagnostics()
    for kind in FAMILY_KINDS:
        for seed in range(10):
            sample_field(FieldFamily(kind, DEFAULT_CONDITION_PARAMS), scene, seed, diag)
    assert diag.clamped == 0


# ----------------------------------------------------------------- dataset

def test_build_dataset_shapes_and_manifest(scene, device):
    ds = _build(scene, device, _placement(scene, [0, 5]))
    assert len(ds) == 4
    assert ds.measurement_array().shape == (4, 5, 2)
    assert ds.truth_array().shape == (4, 2, scene.m_cells)
    np.testing.assert_array_equal(ds.truth_array()[0], ds.samples[0][1].values.T)
    m = ds.manifest
    assert m["families"] == ["uniform", "gaussian-hotspot"]
    assert len(m["samples"]) == 4
    seeds = {(r["field_seed"], r["noise_seed"]) for r in m["samples"]}
    assert len(seeds) == 4


def test_build_dataset_deterministic(scene, device):
    p = _placement(scene, [0, 5])
    a = _build(scene, device, p)
    b = _build(scene, device, p)
    np.testing.assert_array_equal(a.measurement_array(), b.measurement_array())
    np.testing.assert_array_equal(a.truth_array(), b.truth_array())


def test_fields_do_not_depend_on_placement(scene, device):
    """Paired-seed sweeps rely on identical truths across placements."""
    a = _build(scene, device, _placement(scene, [0, 5]))
    b = _build(scene, device, _placement(scene, [3, 9]))
    np.testing.assert_array_equal(a.truth_array(), b.truth_array())
    assert not np.array_equal(a.measurement_array(), b.measurement_array())


def test_negative_count_rejected(scene, device):
    with pytest.raises(ConfigError):
        _build(scene, device, _placement(scene, [0, 5]), n_per_family=-1)


# -------------------------------------------------------------- round trip

def test_save_load_round_trip(tmp_path, scene, device):
    ds = _build(scene, device, _placement(scene, [0, 5]))
    save_dataset(ds, tmp_path, scene)
    back = load_dataset(tmp_path)
    np.testing.assert_allclose(back.measurement_array(), ds.measurement_array(), rtol=0, atol=0)
    np.testing.assert_allclose(back.truth_array(), ds.truth_array(), rtol=0, atol=0)
    assert back.manifest["seed"] == ds.manifest["seed"]


def test_load_detects_tampered_file(tmp_path, scene, device):
    ds = _build(scene, device, _placement(scene, [0, 5]))
    save_dataset(ds, tmp_path, scene)
    victim = tmp_path / "sample_0001_measurement.csv"
    victim.write_text(victim.read_text().replace("-", "+", 1))
    with pytest.raises(ConfigError):
        load_dataset(tmp_path)


def test_load_rejects_unknown_format(tmp_path, scene, device):
    ds = _build(scene, device, _placement(scene, [0, 5]))
    save_dataset(ds, tmp_path, scene)
    mpath = tmp_path / "manifest.json"
    m = json.loads(mpath.read_text())
    m["format_version"] = 99
    mpath.write_text(json.dumps(m))
    with pytest.raises(ConfigError):
        load_dataset(tmp_path)


# ------------------------------------------------------------ fingerprints

def test_scene_fingerprint_sensitivity(scene):
    assert scene_fingerprint(scene) == scene_fingerprint(scene)
    other = build_scene((2.0, 2.0, 2.0), 1.0, (0.75, 1.0, 1.0), (1.25, 1.0, 1.25),
                        candidate_spacing=1.0)
    assert scene_fingerprint(other) != scene_fingerprint(scene)


def test_designs_fingerprint_sensitivity(device):
    from dataclasses import replace
    assert designs_fingerprint(device) == designs_fingerprint([device])
    tweaked = DeviceDesign(srrs=(replace(device.srrs[0], ring_resistance=46.0),
                                 device.srrs[1]), area=device.area)
    assert designs_fingerprint(tweaked) != designs_fingerprint(device)
