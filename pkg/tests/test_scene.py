import math

import numpy as np
import pytest

from metasense.errors import ConfigError
from metasense.scene import (
    EnvironmentField,
    PlacementSet,
    Scene,
    build_scene,
    field_at,
    read_field_csv,
    validate_field,
    validate_placement,
    wall_candidates,
    write_field_csv,
)


def small_scene():
    return build_scene((2.0, 2.0, 2.0), 0.5, (0.75, 1.0, 1.0), (1.25, 1.0, 1.0))


def test_grid_shape_and_cell_count():
    s = small_scene()
    assert (s.nx, s.ny, s.nz) == (4, 4, 4)
    assert s.m_cells == 64


def test_grid_res_must_divide_dims():
    with pytest.raises(ConfigError):
        build_scene((2.0, 2.0, 2.1), 0.5, (0.75, 1.0, 1.0), (1.25, 1.0, 1.0))


def test_transceivers_must_be_inside():
    with pytest.raises(ConfigError):
        build_scene((2.0, 2.0, 2.0), 0.5, (0.0, 1.0, 1.0), (1.25, 1.0, 1.0))


def test_cell_index_x_fastest():
    s = small_scene()
    assert s.cell_index(0, 0, 0) == 0
    assert s.cell_index(1, 0, 0) == 1
    assert s.cell_index(0, 1, 0) == s.nx
    assert s.cell_index(0, 0, 1) == s.nx * s.ny
    assert s.cell_index(3, 3, 3) == s.m_cells - 1
    with pytest.raises(ConfigError):
        s.cell_index(4, 0, 0)


def test_cell_centers_order_matches_index():
    s = small_scene()
    centers = s.cell_centers()
    assert centers.shape == (64, 3)
    np.testing.assert_allclose(centers[0], [0.25, 0.25, 0.25])
    np.testing.assert_allclose(centers[s.cell_index(2, 1, 3)], [1.25, 0.75, 1.75])


def test_nearest_cell_basic_and_tie_break():
    s = small_scene()
    assert s.nearest_cell((0.3, 0.2, 0.26)) == 0
    # 0.5 is equidistant between centers 0.25 and 0.75: lowest index wins
    assert s.nearest_cell((0.5, 0.25, 0.25)) == 0
    assert s.nearest_cell((0.5, 0.5, 0.5)) == 0
    # wall points are valid lookups
    assert s.nearest_cell((0.0, 0.25, 0.25)) == 0
    assert s.nearest_cell((2.0, 2.0, 2.0)) == s.m_cells - 1


def test_nearest_cell_outside_rejected():
    s = small_scene()
    with pytest.raises(ConfigError):
        s.nearest_cell((2.1, 1.0, 1.0))
    with pytest.raises(ConfigError):
        s.nearest_cell((-0.1, 1.0, 1.0))


# -------------------------------------------------------------- candidates

def test_wall_candidate_lattice_count():
    # four walls, 4x4 half-offset lattice each, nothing excluded
    pts = wall_candidates((2.0, 2.0, 2.0), 0.5)
    assert pts.shape == (64, 3)
    on_wall = (np.isclose(pts[:, 0], 0) | np.isclose(pts[:, 0], 2.0)
               | np.isclose(pts[:, 1], 0) | np.isclose(pts[:, 1], 2.0))
    assert on_wall.all()
    # half offsets keep candidates off shared vertical edges
    assert not np.any(np.isclose(pts[:, 0], 0) & np.isclose(pts[:, 1], 0))


def test_wall_candidates_deterministic_order():
    a = wall_candidates((2.0, 2.0, 2.0), 0.5)
    b = wall_candidates((2.0, 2.0, 2.0), 0.5)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(a[0], [0.0, 0.25, 0.25])


def test_wall_candidate_exclusion_zone():
    dims = (2.0, 2.0, 2.0)
    near_wall = (0.25, 1.0, 1.0)
    pts = wall_candidates(dims, 0.5, (near_wall,), exclusion_radius=0.5)
    # independent recount with plain loops
    offs = [0.25, 0.75, 1.25, 1.75]
    want = 0
    for x0 in (0.0, 2.0):
        for y in offs:
            for z in offs:
                if math.dist((x0, y, z), near_wall) >= 0.5:
                    want += 1
    for y0 in (0.0, 2.0):
        for x in offs:
            for z in offs:
                if math.dist((x, y0, z), near_wall) >= 0.5:
                    want += 1
    assert want < 64  # the zone actually bites for this point
    assert len(pts) == want


def test_build_scene_requires_surviving_candidates():
    with pytest.raises(ConfigError):
        build_scene((2.0, 2.0, 2.0), 0.5, (1.0, 1.0, 1.0), (1.1, 1.0, 1.0),
                    candidate_spacing=0.5, exclusion_radius=10.0)


def test_scene_rejects_off_wall_candidate():
    with pytest.raises(ConfigError):
        Scene(dims=(2.0, 2.0, 2.0), grid_res=0.5,
              tx_pos=np.array([0.75, 1.0, 1.0]), rx_pos=np.array([1.25, 1.0, 1.0]),
              candidates=np.array([[1.0, 1.0, 1.0]]))


# ------------------------------------------------------------------ fields

def test_field_validation_shape_and_range():
    s = small_scene()
    good = EnvironmentField(np.column_stack([np.full(64, 295.0), np.full(64, 0.5)]))
    validate_field(good, s)
    with pytest.raises(ConfigError):
        validate_field(EnvironmentField(np.zeros((63, 2))), s)
    bad_t = EnvironmentField(np.column_stack([np.full(64, 400.0), np.full(64, 0.5)]))
    with pytest.raises(ConfigError):
        validate_field(bad_t, s)
    bad_h = EnvironmentField(np.column_stack([np.full(64, 295.0), np.full(64, 1.5)]))
    with pytest.raises(ConfigError):
        validate_field(bad_h, s)


def test_field_at_returns_cell_row():
    s = small_scene()
    vals = np.column_stack([290.0 + np.arange(64.0), np.linspace(0.2, 0.8, 64)])
    f = EnvironmentField(vals)
    np.testing.assert_allclose(field_at(f, s, (0.3, 0.2, 0.26)), vals[0])
    ci = s.cell_index(2, 1, 3)
    np.testing.assert_allclose(field_at(f, s, (1.3, 0.8, 1.8)), vals[ci])


def test_field_csv_round_trip(tmp_path):
    s = small_scene()
    rng = np.random.default_rng(3)
    vals = np.column_stack([rng.uniform(270, 330, 64), rng.uniform(0.1, 0.9, 64)])
    f = EnvironmentField(vals)
    p = tmp_path / "field.csv"
    write_field_csv(p, f, s, header_lines=["check"])
    back = read_field_csv(p)
    np.testing.assert_array_equal(back, vals)  # repr round-trip is exact


# --------------------------------------------------------------- placement

def test_placement_set_distinct_positions():
    PlacementSet(((0.0, 0.25, 0.25), (0.0, 0.75, 0.25)))
    with pytest.raises(ConfigError):
        PlacementSet(((0.0, 0.25, 0.25), (0.0, 0.25, 0.25)))


def test_validate_placement_against_candidates():
    s = small_scene()
    good = PlacementSet((tuple(s.candidates[0]), tuple(s.candidates[5])))
    validate_placement(good, s)
    with pytest.raises(ConfigError):
        validate_placement(PlacementSet(((0.1, 0.1, 0.1),)), s)
