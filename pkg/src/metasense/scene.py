"""Room geometry: target grid, transceiver positions, wall candidates, fields.

The room is an axis-aligned box with its origin corner at (0, 0, 0).  The
target space is discretized into cubic cells of edge ``grid_res``; cell
``(ix, iy, iz)`` maps to the flat index ``(iz * ny + iy) * nx + ix`` (x
fastest).  Candidate device positions live on the four vertical walls
(x = 0, x = X, y = 0, y = Y) on a half-offset lattice so that no candidate
sits on a wall edge shared with another wall.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# Column order for environment fields; matches the per-SRR condition order
# used by circuit.DeviceDesign when a device carries one temperature and one
# humidity sensing ring.
CONDITION_COLUMNS = ("temperature", "humidity")
CONDITION_UNITS = {"temperature": "temperature_k", "humidity": "humidity_frac"}

_DIVIS_TOL = 1e-9
_WALL_TOL = 1e-6


def _axis_cells(extent: float, res: float, name: str) -> int:
    n = extent / res
    if abs(n - round(n)) > _DIVIS_TOL * max(1.0, n):
        raise ConfigError(f"grid_res {res} does not divide {name} extent {extent}")
    n = int(round(n))
    if n < 1:
        raise ConfigError(f"{name} extent {extent} yields no cells at res {res}")
    return n


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable room description: grid, transceivers, wall candidates."""

    dims: tuple  # (x, y, z) extents in meters
    grid_res: float
    tx_pos: np.ndarray
    rx_pos: np.ndarray
    candidates: np.ndarray  # (n_cand, 3); ordered, deterministic
    n_conditions: int = 2
    nx: int = field(init=False, default=0)
    ny: int = field(init=False, default=0)
    nz: int = field(init=False, default=0)

    def __post_init__(self):
        if len(self.dims) != 3 or any(d <= 0 for d in self.dims):
            raise ConfigError(f"room dims must be three positive extents, got {self.dims}")
        object.__setattr__(self, "nx", _axis_cells(self.dims[0], self.grid_res, "x"))
        object.__setattr__(self, "ny", _axis_cells(self.dims[1], self.grid_res, "y"))
        object.__setattr__(self, "nz", _axis_cells(self.dims[2], self.grid_res, "z"))
        for label, p in (("tx_pos", self.tx_pos), ("rx_pos", self.rx_pos)):
            p = np.asarray(p, dtype=float)
            object.__setattr__(self, label, p)
            if p.shape != (3,):
                raise ConfigError(f"{label} must be a 3D point")
            if not all(0.0 < p[k] < self.dims[k] for k in range(3)):
                raise ConfigError(f"{label} {tuple(p)} not strictly inside the room")
        cand = np.asarray(self.candidates, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "candidates", cand)
        if cand.size:
            on_x = np.minimum(np.abs(cand[:, 0]), np.abs(cand[:, 0] - self.dims[0]))
            on_y = np.minimum(np.abs(cand[:, 1]), np.abs(cand[:, 1] - self.dims[1]))
            if not np.all(np.minimum(on_x, on_y) <= _WALL_TOL):
                raise ConfigError("candidate off the four wall planes")

    @property
    def m_cells(self) -> int:
        return self.nx * self.ny * self.nz

    def cell_centers(self) -> np.ndarray:
        """Centers of all M cells, ordered by flat cell index (x fastest)."""
        r = self.grid_res
        xs = (np.arange(self.nx) + 0.5) * r
        ys = (np.arange(self.ny) + 0.5) * r
        zs = (np.arange(self.nz) + 0.5) * r
        zz, yy, xx = np.meshgrid(zs, ys, xs, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    def cell_index(self, ix: int, iy: int, iz: int) -> int:
        if not (0 <= ix < self.nx and 0 <= iy < self.ny and 0 <= iz < self.nz):
            raise ConfigError(f"cell ({ix}, {iy}, {iz}) outside grid")
        return (iz * self.ny + iy) * self.nx + ix

    def nearest_cell(self, point) -> int:
        """Flat index of the cell whose center is nearest to point.

        Ties break to the lowest index.  Raises ConfigError for points
        outside the closed room volume.
        """
        p = np.asarray(point, dtype=float)
        if p.shape != (3,):
            raise ConfigError("point must be a 3D coordinate")
        for k in range(3):
            if p[k] < -_WALL_TOL or p[k] > self.dims[k] + _WALL_TOL:
                raise ConfigError(f"point {tuple(p)} outside the room")
        # Clamp-to-axis then argmin per axis is exact for an axis-aligned
        # grid and keeps the declared lowest-index tie-break.
        idx = []
        for k, n in ((0, self.nx), (1, self.ny), (2, self.nz)):
            centers = (np.arange(n) + 0.5) * self.grid_res
            idx.append(int(np.argmin(np.abs(centers - p[k]))))
        return self.cell_index(idx[0], idx[1], idx[2])


@dataclass(frozen=True, eq=False)
class EnvironmentField:
    """Per-cell condition values, one row per grid cell.

    Column 0 is temperature in kelvin, column 1 relative humidity as a
    fraction, matching CONDITION_COLUMNS.
    """

    values: np.ndarray  # (M, N_s)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ConfigError("field values must be an M x N_s matrix")
        object.__setattr__(self, "values", v)

    @property
    def n_conditions(self) -> int:
        return self.values.shape[1]


def validate_field(field_: EnvironmentField, scene: Scene) -> None:
    """Check shape against the scene and physical ranges per column."""
    from .circuit import CONDITION_RANGES

    v = field_.values
    if v.shape[0] != scene.m_cells:
        raise ConfigError(f"field has {v.shape[0]} rows, scene has {scene.m_cells} cells")
    if v.shape[1] != scene.n_conditions:
        raise ConfigError(f"field has {v.shape[1]} columns, scene expects {scene.n_conditions}")
    for col, kind in enumerate(CONDITION_COLUMNS[: v.shape[1]]):
        lo, hi = CONDITION_RANGES[kind]
        if v[:, col].min() < lo or v[:, col].max() > hi:
            raise ConfigError(f"{kind} values outside [{lo}, {hi}]")


@dataclass(frozen=True)
class PlacementSet:
    """Ordered device positions, each drawn from the scene's candidates."""

    positions: tuple  # of (x, y, z) tuples

    def __post_init__(self):
        pos = tuple(tuple(float(c) for c in p) for p in self.positions)
        object.__setattr__(self, "positions", pos)
        if len(set(pos)) != len(pos):
            raise ConfigError("placement positions must be pairwise distinct")

    def __len__(self) -> int:
        return len(self.positions)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=float)


def validate_placement(placement: PlacementSet, scene: Scene) -> None:
    cand = scene.candidates
    for p in placement.positions:
        d = np.linalg.norm(cand - np.asarray(p), axis=1)
        if d.min() > _WALL_TOL:
            raise ConfigError(f"placement position {p} is not a scene candidate")


def _wall_offsets(extent: float, spacing: float) -> np.ndarray:
    # Half-offset lattice: s/2, 3s/2, ... keeps points off shared edges.
    n = int(np.floor(extent / spacing + 1e-9))
    return (np.arange(n) + 0.5) * spacing


def wall_candidates(dims, spacing: float, exclude_near=(), exclusion_radius: float = 0.5) -> np.ndarray:
    """Candidate points on the four vertical walls, deterministic order.

    Walls are visited x=0, x=X, y=0, y=Y; within a wall, points are ordered
    lexicographically by their two in-plane coordinates.  Points closer than
    exclusion_radius to any point in exclude_near are dropped.
    """
    X, Y, Z = dims
    ys = _wall_offsets(Y, spacing)
    xs = _wall_offsets(X, spacing)
    zs = _wall_offsets(Z, spacing)
    walls = []
    for x0 in (0.0, float(X)):
        walls.extend((x0, y, z) for y in ys for z in zs)
    for y0 in (0.0, float(Y)):
        walls.extend((x, y0, z) for x in xs for z in zs)
    pts = np.asarray(walls, dtype=float)
    keep = np.ones(len(pts), dtype=bool)
    for q in exclude_near:
        keep &= np.linalg.norm(pts - np.asarray(q, dtype=float), axis=1) >= exclusion_radius
    return pts[keep]


def build_scene(dims, grid_res: float, tx_pos, rx_pos, candidate_spacing: float = 0.5,
                exclusion_radius: float = 0.5, n_conditions: int = 2) -> Scene:
    """Assemble a Scene: validates the grid and generates wall candidates."""
    dims = tuple(float(d) for d in dims)
    cand = wall_candidates(dims, candidate_spacing, (tx_pos, rx_pos), exclusion_radius)
    if len(cand) == 0:
        raise ConfigError("no candidate positions survive the exclusion zone")
    return Scene(dims=dims, grid_res=float(grid_res), tx_pos=np.asarray(tx_pos, float),
                 rx_pos=np.asarray(rx_pos, float), candidates=cand,
                 n_conditions=n_conditions)


def field_at(field_: EnvironmentField, scene: Scene, point) -> np.ndarray:
    """Condition vector of the grid cell nearest to point."""
    return field_.values[scene.nearest_cell(point)].copy()


def write_field_csv(path, field_: EnvironmentField, scene: Scene, header_lines=()) -> None:
    """Serialize a field with cell centers; one row per grid cell."""
    centers = scene.cell_centers()
    cols = [CONDITION_UNITS.get(k, k) for k in CONDITION_COLUMNS[: field_.n_conditions]]
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["cell_index", "cx", "cy", "cz"] + cols)
        for i in range(scene.m_cells):
            row = [i] + [repr(float(c)) for c in centers[i]]
            row += [repr(float(v)) for v in field_.values[i]]
            w.writerow(row)


def read_field_csv(path) -> np.ndarray:
    """Read back the values matrix written by write_field_csv."""
    rows = []
    with open(path, newline="") as fh:
        rdr = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rdr)
        ncond = len(header) - 4
        for rec in rdr:
            rows.append([float(x) for x in rec[4 : 4 + ncond]])
    return np.asarray(rows, dtype=float)
