"""Georeferenced rasters, point clouds, and plot polygons.

Field layers (spectral bands, elevation models, segmentation masks) travel as
ESRI-style ASCII grids; canopy structure arrives as whitespace-delimited x/y/z
point clouds; plot footprints are simple polygons read from CSV. All types are
immutable after construction and every operation is a pure function, so they
are safe to use from multiple threads.

Georeferencing convention: a grid's origin is the lower-left corner of the
lower-left cell; row 0 of ``values`` is the top row (highest y), matching the
file layout. The center of cell (row, col) is

    x = origin_x + (col + 0.5) * cell_size
    y = origin_y + (n_rows - row - 0.5) * cell_size

Layers that enter one plot computation must share georeferencing exactly;
nothing here resamples implicitly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyInput,
    EmptyPlot,
    GeometryMismatch,
    InvalidInput,
    MissingBand,
    ParseError,
)

DEFAULT_NODATA = -9999.0

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize")


@dataclass(frozen=True)
class RasterGrid:
    """A georeferenced 2-D grid of scalar values with a nodata sentinel.

    ``values`` has shape (n_rows, n_cols); row 0 is the top row (highest y).
    """

    values: np.ndarray
    cell_size: float
    origin_x: float
    origin_y: float
    nodata: float = DEFAULT_NODATA

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise InvalidInput("grid values must be a non-empty 2-D array")
        if not self.cell_size > 0:
            raise InvalidInput(f"cell_size must be > 0, got {self.cell_size}")
        if not np.isfinite(self.nodata):
            raise InvalidInput("nodata sentinel must be finite")
        if not np.isfinite(arr[arr != self.nodata]).all():
            raise InvalidInput("grid values must be finite or the nodata sentinel")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def defined(self) -> np.ndarray:
        """Boolean array, True where a cell holds real data."""
        return self.values != self.nodata

    def same_geometry(self, other: "RasterGrid") -> bool:
        return (
            self.values.shape == other.values.shape
            and self.cell_size == other.cell_size
            and self.origin_x == other.origin_x
            and self.origin_y == other.origin_y
        )

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) arrays of cell-center coordinates, shape (n_rows, n_cols)."""
        cols = np.arange(self.n_cols, dtype=np.float64)
        rows = np.arange(self.n_rows, dtype=np.float64)
        x = self.origin_x + (cols + 0.5) * self.cell_size
        y = self.origin_y + (self.n_rows - rows - 0.5) * self.cell_size
        return np.meshgrid(x, y)

    def with_values(self, values: np.ndarray, nodata: float | None = None) -> "RasterGrid":
        """A new grid sharing this grid's georeferencing."""
        return RasterGrid(
            values=values,
            cell_size=self.cell_size,
            origin_x=self.origin_x,
            origin_y=self.origin_y,
            nodata=self.nodata if nodata is None else nodata,
        )


def require_same_geometry(*grids: RasterGrid) -> None:
    first = grids[0]
    for g in grids[1:]:
        if not first.same_geometry(g):
            raise GeometryMismatch(
                f"grids do not share georeferencing: "
                f"{first.values.shape}/{first.cell_size}/({first.origin_x},{first.origin_y}) vs "
                f"{g.values.shape}/{g.cell_size}/({g.origin_x},{g.origin_y})"
            )


@dataclass(frozen=True)
class PointCloud:
    """An x/y/z point list (meters). Non-empty, finite coordinates."""

    points: np.ndarray  # shape (n, 3)

    def __post_init__(self):
        arr = np.asarray(self.points, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] == 0:
            raise EmptyInput("point cloud must be a non-empty (n, 3) array")
        if not np.isfinite(arr).all():
            raise InvalidInput("point cloud coordinates must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "points", arr)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class PlotGeometry:
    """A plot footprint: a simple polygon with identity metadata."""

    plot_id: str
    germplasm_id: str
    vertices: np.ndarray  # shape (n, 2)

    def __post_init__(self):
        arr = np.asarray(self.vertices, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
            raise InvalidInput(f"plot {self.plot_id}: polygon needs >= 3 (x, y) vertices")
        if not np.isfinite(arr).all():
            raise InvalidInput(f"plot {self.plot_id}: vertices must be finite")
        if _polygon_area(arr) <= 0.0:
            raise InvalidInput(f"plot {self.plot_id}: polygon area must be > 0")
        if _has_degenerate_edge(arr):
            raise InvalidInput(f"plot {self.plot_id}: repeated consecutive vertices")
        if not _polygon_is_simple(arr):
            raise InvalidInput(f"plot {self.plot_id}: polygon is self-intersecting")
        arr.setflags(write=False)
        object.__setattr__(self, "vertices", arr)

    def contains(self, px: np.ndarray, py: np.ndarray) -> np.ndarray:
        """Point-in-polygon test, boundary-inclusive. Vectorized over px/py."""
        return point_in_polygon(px, py, self.vertices)

    def area(self) -> float:
        return _polygon_area(self.vertices)


def _polygon_area(vertices: np.ndarray) -> float:
    x = vertices[:, 0]
    y = vertices[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def _has_degenerate_edge(vertices: np.ndarray) -> bool:
    nxt = np.roll(vertices, -1, axis=0)
    return bool(np.any(np.all(vertices == nxt, axis=1)))


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_segment(ax, ay, bx, by, px, py):
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def _segments_intersect(p1, p2, p3, p4) -> bool:
    d1 = _orient(*p3, *p4, *p1)
    d2 = _orient(*p3, *p4, *p2)
    d3 = _orient(*p1, *p2, *p3)
    d4 = _orient(*p1, *p2, *p4)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True
    if d1 == 0 and _on_segment(*p3, *p4, *p1):
        return True
    if d2 == 0 and _on_segment(*p3, *p4, *p2):
        return True
    if d3 == 0 and _on_segment(*p1, *p2, *p3):
        return True
    if d4 == 0 and _on_segment(*p1, *p2, *p4):
        return True
    return False


def _polygon_is_simple(vertices: np.ndarray) -> bool:
    n = vertices.shape[0]
    edges = [(tuple(vertices[i]), tuple(vertices[(i + 1) % n])) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            # adjacent edges share an endpoint by construction
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_intersect(edges[i][0], edges[i][1], edges[j][0], edges[j][1]):
                return False
    return True


def point_in_polygon(px, py, vertices: np.ndarray) -> np.ndarray:
    """Even-odd point-in-polygon test with the boundary counted as inside.

    Accepts scalars or arrays for ``px``/``py``; broadcasting applies.
    """
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    inside = np.zeros(np.broadcast(px, py).shape, dtype=bool)
    on_edge = np.zeros_like(inside)
    n = vertices.shape[0]
    for k in range(n):
        x1, y1 = float(vertices[k, 0]), float(vertices[k, 1])
        x2, y2 = float(vertices[(k + 1) % n, 0]), float(vertices[(k + 1) % n, 1])
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        in_box = (
            (px >= min(x1, x2))
            & (px <= max(x1, x2))
            & (py >= min(y1, y2))
            & (py <= max(y1, y2))
        )
        on_edge |= (cross == 0.0) & in_box
        crosses = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_int = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < x_int)
    return inside | on_edge


def distance_to_boundary(px, py, vertices: np.ndarray) -> np.ndarray:
    """Euclidean distance from points to the polygon boundary (min over edges)."""
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    best = np.full(np.broadcast(px, py).shape, np.inf)
    n = vertices.shape[0]
    for k in range(n):
        x1, y1 = float(vertices[k, 0]), float(vertices[k, 1])
        x2, y2 = float(vertices[(k + 1) % n, 0]), float(vertices[(k + 1) % n, 1])
        dx, dy = x2 - x1, y2 - y1
        seg_len2 = dx * dx + dy * dy
        t = np.clip(((px - x1) * dx + (py - y1) * dy) / seg_len2, 0.0, 1.0)
        d2 = (px - (x1 + t * dx)) ** 2 + (py - (y1 + t * dy)) ** 2
        best = np.minimum(best, d2)
    return np.sqrt(best)


@dataclass(frozen=True)
class BufferRing:
    """Annular region outside a plot: boundary distance in (inner, outer].

    This is the "specific area" a weed-level aggregation adds to the plot
    interior. Points on or inside the polygon are never part of the ring.
    """

    plot: PlotGeometry
    inner: float
    outer: float

    def __post_init__(self):
        if not (0.0 <= self.inner < self.outer):
            raise InvalidInput(
                f"ring widths must satisfy 0 <= inner < outer, got ({self.inner}, {self.outer})"
            )

    def contains(self, px, py) -> np.ndarray:
        d = distance_to_boundary(px, py, self.plot.vertices)
        outside = ~self.plot.contains(px, py)
        return outside & (d > self.inner) & (d <= self.outer)


@dataclass(frozen=True)
class UnionRegion:
    """Union of two regions, each anything with a ``contains(px, py)``."""

    a: object
    b: object

    def contains(self, px, py) -> np.ndarray:
        return self.a.contains(px, py) | self.b.contains(px, py)


def buffer_ring(plot: PlotGeometry, inner: float, outer: float) -> BufferRing:
    """Region predicate for the annulus ``(inner, outer]`` outside ``plot``."""
    return BufferRing(plot=plot, inner=inner, outer=outer)


@dataclass(frozen=True)
class BandSet:
    """Aligned reflectance bands from one sensor.

    ``bands`` maps band name -> (grid, center_wavelength_nm). A multispectral
    (MS) set must provide blue/green/red/red_edge/nir; a hyperspectral (HS)
    set needs at least two wavelength-tagged bands.
    """

    bands: dict
    sensor_kind: str = "MS"

    def __post_init__(self):
        if self.sensor_kind not in ("MS", "HS"):
            raise InvalidInput(f"sensor_kind must be MS or HS, got {self.sensor_kind!r}")
        if not self.bands:
            raise EmptyInput("band set has no bands")
        if self.sensor_kind == "MS":
            for name in ("blue", "green", "red", "red_edge", "nir"):
                if name not in self.bands:
                    raise MissingBand(name)
        elif len(self.bands) < 2:
            raise InvalidInput("HS band set needs >= 2 wavelength-tagged bands")
        grids = [g for g, _ in self.bands.values()]
        require_same_geometry(*grids)
        for name, (grid, wavelength) in self.bands.items():
            if not (wavelength is None or wavelength > 0):
                raise InvalidInput(f"band {name}: wavelength must be positive")
            vals = grid.values[grid.defined]
            if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
                raise InvalidInput(f"band {name}: reflectance outside [0, 1]")

    def grid(self, name: str) -> RasterGrid:
        if name not in self.bands:
            raise MissingBand(name)
        return self.bands[name][0]

    def geometry_reference(self) -> RasterGrid:
        return next(iter(self.bands.values()))[0]


# ---------------------------------------------------------------------------
# ASCII grid I/O
# ---------------------------------------------------------------------------


def load_raster(path) -> RasterGrid:
    """Read an ESRI-style ASCII grid (.asc).

    Header lines (case-insensitive keys, fixed order): ncols, nrows,
    xllcorner, yllcorner, cellsize, then an optional NODATA_value. Data rows
    follow top row first; each row must hold exactly ncols numeric cells.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    def header(idx: int, key: str):
        if idx >= len(lines):
            raise ParseError(f"missing header line '{key}'", line=idx + 1)
        parts = lines[idx].split()
        if len(parts) != 2 or parts[0].lower() != key:
            raise ParseError(f"expected '{key} <value>', got {lines[idx]!r}", line=idx + 1)
        try:
            return float(parts[1])
        except ValueError:
            raise ParseError(f"non-numeric value for '{key}': {parts[1]!r}", line=idx + 1)

    n_cols_f = header(0, "ncols")
    n_rows_f = header(1, "nrows")
    origin_x = header(2, "xllcorner")
    origin_y = header(3, "yllcorner")
    cell_size = header(4, "cellsize")
    if n_cols_f != int(n_cols_f) or n_rows_f != int(n_rows_f) or n_cols_f < 1 or n_rows_f < 1:
        raise ParseError("ncols/nrows must be positive integers", line=1)
    n_cols, n_rows = int(n_cols_f), int(n_rows_f)
    if cell_size <= 0:
        raise ParseError("cellsize must be > 0", line=5)

    data_start = 5
    nodata = DEFAULT_NODATA
    if data_start < len(lines):
        parts = lines[data_start].split()
        if parts and parts[0].lower() == "nodata_value":
            if len(parts) != 2:
                raise ParseError("expected 'NODATA_value <value>'", line=data_start + 1)
            try:
                nodata = float(parts[1])
            except ValueError:
                raise ParseError(f"non-numeric NODATA_value: {parts[1]!r}", line=data_start + 1)
            data_start += 1

    rows = []
    row_lines = [
        (i, ln) for i, ln in enumerate(lines[data_start:], start=data_start) if ln.strip()
    ]
    if len(row_lines) != n_rows:
        raise ParseError(
            f"expected {n_rows} data rows, found {len(row_lines)}",
            line=len(lines),
        )
    for i, ln in row_lines:
        tokens = ln.split()
        if len(tokens) != n_cols:
            raise ParseError(
                f"expected {n_cols} cells, found {len(tokens)}", line=i + 1
            )
        try:
            row = [float(t) for t in tokens]
        except ValueError:
            raise ParseError(f"non-numeric cell in row: {ln!r}", line=i + 1)
        for v in row:
            if not math.isfinite(v):
                raise ParseError("non-finite cell value", line=i + 1)
        rows.append(row)

    return RasterGrid(
        values=np.array(rows, dtype=np.float64),
        cell_size=cell_size,
        origin_x=origin_x,
        origin_y=origin_y,
        nodata=nodata,
    )


def write_raster(grid: RasterGrid, path) -> None:
    """Write a grid as an ASCII grid; round-trips through load_raster exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"ncols {grid.n_cols}\n")
        fh.write(f"nrows {grid.n_rows}\n")
        fh.write(f"xllcorner {repr(grid.origin_x)}\n")
        fh.write(f"yllcorner {repr(grid.origin_y)}\n")
        fh.write(f"cellsize {repr(grid.cell_size)}\n")
        fh.write(f"NODATA_value {repr(grid.nodata)}\n")
        for row in grid.values:
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")


# ---------------------------------------------------------------------------
# Point cloud I/O and rasterization
# ---------------------------------------------------------------------------


def load_point_cloud(path) -> PointCloud:
    """Read a plain-text point cloud: one "x y z" per line, '#' comments skipped."""
    points = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, ln in enumerate(fh, start=1):
            stripped = ln.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 3:
                raise ParseError(
                    f"expected 3 fields 'x y z', found {len(parts)}", line=lineno
                )
            try:
                points.append([float(p) for p in parts])
            except ValueError:
                raise ParseError(f"non-numeric coordinate: {stripped!r}", line=lineno)
    if not points:
        raise EmptyInput(f"no points in {path}")
    return PointCloud(points=np.array(points, dtype=np.float64))


def write_point_cloud(cloud: PointCloud, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in cloud.points:
            fh.write(f"{repr(float(x))} {repr(float(y))} {repr(float(z))}\n")


def rasterize_elevation(cloud: PointCloud, cell_size: float, aggregator: str = "mean") -> RasterGrid:
    """Bin point z-values onto a grid snapped outward to ``cell_size``.

    Cells with no points hold nodata. The mean aggregator sums each cell's
    values in ascending z order, so the result does not depend on point order.
    """
    if not cell_size > 0:
        raise InvalidInput(f"cell_size must be > 0, got {cell_size}")
    if aggregator not in ("min", "max", "mean"):
        raise InvalidInput(f"aggregator must be min/max/mean, got {aggregator!r}")

    pts = cloud.points
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    origin_x = math.floor(x.min() / cell_size) * cell_size
    origin_y = math.floor(y.min() / cell_size) * cell_size
    n_cols = max(1, int(math.ceil((x.max() - origin_x) / cell_size)))
    n_rows = max(1, int(math.ceil((y.max() - origin_y) / cell_size)))

    col = np.minimum((x - origin_x) // cell_size, n_cols - 1).astype(np.int64)
    row_from_bottom = np.minimum((y - origin_y) // cell_size, n_rows - 1).astype(np.int64)
    row = n_rows - 1 - row_from_bottom
    flat = row * n_cols + col

    order = np.lexsort((z, flat))
    flat_sorted = flat[order]
    z_sorted = z[order]
    boundaries = np.flatnonzero(np.diff(flat_sorted)) + 1
    starts = np.concatenate(([0], boundaries))
    cell_ids = flat_sorted[starts]

    values = np.full(n_rows * n_cols, DEFAULT_NODATA)
    if aggregator == "min":
        agg = np.minimum.reduceat(z_sorted, starts)
    elif aggregator == "max":
        agg = np.maximum.reduceat(z_sorted, starts)
    else:
        # bincount accumulates sequentially, so summing in ascending-z order
        # keeps the mean exactly permutation-invariant
        counts = np.diff(np.concatenate((starts, [len(z_sorted)])))
        sums = np.bincount(flat_sorted, weights=z_sorted, minlength=n_rows * n_cols)
        agg = sums[cell_ids] / counts
    values[cell_ids] = agg

    return RasterGrid(
        values=values.reshape(n_rows, n_cols),
        cell_size=cell_size,
        origin_x=origin_x,
        origin_y=origin_y,
        nodata=DEFAULT_NODATA,
    )


# ---------------------------------------------------------------------------
# Plot masks
# ---------------------------------------------------------------------------


def plot_mask(grid: RasterGrid, region) -> RasterGrid:
    """Binary mask over ``grid``: 1 where the cell center lies in ``region``.

    ``region`` is a PlotGeometry or any object with a vectorized
    ``contains(px, py)``; polygon boundaries count as inside.
    """
    cx, cy = grid.cell_centers()
    member = region.contains(cx, cy)
    if not member.any():
        name = getattr(region, "plot_id", None) or type(region).__name__
        raise EmptyPlot(f"region {name} selects no cells of the grid")
    return grid.with_values(member.astype(np.float64), nodata=DEFAULT_NODATA)


# ---------------------------------------------------------------------------
# Plot geometry CSV
# ---------------------------------------------------------------------------


def load_plots(path) -> list[PlotGeometry]:
    """Read plot polygons from CSV (plot_id, germplasm_id, vertex_index, x, y)."""
    required = {"plot_id", "germplasm_id", "vertex_index", "x", "y"}
    by_plot: dict[str, dict] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ParseError(
                f"plot CSV must have columns {sorted(required)}, got {reader.fieldnames}",
                line=1,
            )
        for lineno, rec in enumerate(reader, start=2):
            pid = rec["plot_id"].strip()
            if not pid:
                raise ParseError("empty plot_id", line=lineno)
            entry = by_plot.setdefault(pid, {"germplasm_id": rec["germplasm_id"].strip(), "vertices": {}})
            if rec["germplasm_id"].strip() != entry["germplasm_id"]:
                raise ParseError(f"plot {pid}: conflicting germplasm_id", line=lineno)
            try:
                idx = int(rec["vertex_index"])
                xy = (float(rec["x"]), float(rec["y"]))
            except (TypeError, ValueError):
                raise ParseError(f"bad vertex row for plot {pid}", line=lineno)
            if idx in entry["vertices"]:
                raise ParseError(f"plot {pid}: duplicate vertex_index {idx}", line=lineno)
            entry["vertices"][idx] = xy
    if not by_plot:
        raise EmptyInput(f"no plot rows in {path}")
    plots = []
    for pid, entry in by_plot.items():
        ordered = [entry["vertices"][i] for i in sorted(entry["vertices"])]
        plots.append(PlotGeometry(plot_id=pid, germplasm_id=entry["germplasm_id"], vertices=np.array(ordered)))
    return plots
