"""Ground-condition map: grid recording and banded-distance interpolation.

A GroundMap is a w x l grid of cells over planar world coordinates; each
non-empty cell carries the running mean of every inserted parameter layer
(a, p, alpha1, alpha2, rho_s) plus a hit count.  Interpolation fills and
smooths the map with a three-band Manhattan-distance rule: for each target
cell, the mean of the non-empty source cells in each distance band is
weighted by the band weight and the weighted means are averaged over the
bands that contributed.  All reads come from the pre-interpolation
snapshot, so the sweep order is irrelevant.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

LAYER_NAMES = ("a", "p", "alpha1", "alpha2", "rho_s")
NUM_LAYERS = len(LAYER_NAMES)


class OutOfBounds(IndexError):
    """Position maps outside the current grid; carries the offending index."""

    def __init__(self, index: tuple[int, int]):
        super().__init__(f"cell index {index} outside grid")
        self.index = index


@dataclass(frozen=True)
class InterpolationConfig:
    """Three search thresholds (meters) with their band weights.

    Bands, in cells after dividing by the map resolution:
      high:  d <= eps_high
      mid:   eps_high < d <= eps_mid
      low:   eps_mid  < d <= eps_low
    """

    eps_low: float = 10.0
    eps_mid: float = 5.0
    eps_high: float = 1.5
    w_low: float = 0.1
    w_mid: float = 0.5
    w_high: float = 4.0

    def __post_init__(self) -> None:
        if not self.eps_low > self.eps_mid > self.eps_high > 0.0:
            raise ValueError("thresholds must satisfy eps_low > eps_mid > eps_high > 0")
        if not 0.0 < self.w_low < self.w_mid < self.w_high:
            raise ValueError("weights must satisfy 0 < w_low < w_mid < w_high")


@dataclass
class GroundMap:
    """Grid of soil-parameter cells anchored at a world origin.

    ``values`` has shape (w, l, NUM_LAYERS); ``counts`` has shape (w, l)
    and a cell is empty iff its count is 0.
    """

    origin: tuple[float, float]
    resolution: float = 1.0
    values: np.ndarray = field(default=None)  # type: ignore[assignment]
    counts: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")
        if self.values is None:
            self.values = np.zeros((1, 1, NUM_LAYERS))
        if self.counts is None:
            self.counts = np.zeros(self.values.shape[:2], dtype=int)
        if self.values.shape[:2] != self.counts.shape:
            raise ValueError("values/counts shape mismatch")

    @classmethod
    def empty(cls, origin: tuple[float, float], resolution: float = 1.0,
              width: int = 1, length: int = 1) -> "GroundMap":
        return cls(origin=origin, resolution=resolution,
                   values=np.zeros((width, length, NUM_LAYERS)),
                   counts=np.zeros((width, length), dtype=int))

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    def coverage(self) -> float:
        return float(np.count_nonzero(self.counts)) / self.counts.size

    def copy(self) -> "GroundMap":
        return GroundMap(origin=self.origin, resolution=self.resolution,
                         values=self.values.copy(), counts=self.counts.copy())


def world_to_grid(pos: tuple[float, float], gmap: GroundMap) -> tuple[int, int]:
    """Cell index of a world position: floor((pos - origin)/resolution)."""
    i = int(np.floor((pos[0] - gmap.origin[0]) / gmap.resolution))
    j = int(np.floor((pos[1] - gmap.origin[1]) / gmap.resolution))
    w, l = gmap.shape
    if not (0 <= i < w and 0 <= j < l):
        raise OutOfBounds((i, j))
    return i, j


def insert(gmap: GroundMap, pos: tuple[float, float], values) -> GroundMap:
    """Running-mean insert of one parameter vector at a world position."""
    values = np.asarray(values, dtype=float)
    if values.shape != (NUM_LAYERS,):
        raise ValueError(f"expected {NUM_LAYERS} layer values")
    if not np.all(np.isfinite(values)):
        raise ValueError("values must be finite")
    i, j = world_to_grid(pos, gmap)
    count = gmap.counts[i, j]
    gmap.values[i, j] = (gmap.values[i, j] * count + values) / (count + 1)
    gmap.counts[i, j] = count + 1
    return gmap


def grow_to_include(gmap: GroundMap, pos: tuple[float, float]) -> GroundMap:
    """Reallocate (doubling per axis as needed) so ``pos`` falls inside.

    Growth keeps every recorded cell at its world position.  Positive
    growth preserves the origin; indices below zero shift the origin down
    by whole cells instead.
    """
    i = int(np.floor((pos[0] - gmap.origin[0]) / gmap.resolution))
    j = int(np.floor((pos[1] - gmap.origin[1]) / gmap.resolution))
    w, l = gmap.shape

    lo_i, hi_i, lo_j, hi_j = 0, w, 0, l
    while i < lo_i:
        lo_i -= max(w, 1)
    while i >= hi_i:
        hi_i += max(hi_i - lo_i, 1)
    while j < lo_j:
        lo_j -= max(l, 1)
    while j >= hi_j:
        hi_j += max(hi_j - lo_j, 1)

    new = GroundMap.empty(
        origin=(gmap.origin[0] + lo_i * gmap.resolution,
                gmap.origin[1] + lo_j * gmap.resolution),
        resolution=gmap.resolution,
        width=hi_i - lo_i, length=hi_j - lo_j)
    new.values[-lo_i:-lo_i + w, -lo_j:-lo_j + l] = gmap.values
    new.counts[-lo_i:-lo_i + w, -lo_j:-lo_j + l] = gmap.counts
    return new


def insert_auto(gmap: GroundMap, pos: tuple[float, float], values) -> GroundMap:
    """Insert, growing the map when the position falls outside."""
    try:
        return insert(gmap, pos, values)
    except OutOfBounds:
        gmap = grow_to_include(gmap, pos)
        return insert(gmap, pos, values)


def manhattan(c1: tuple[int, int], c2: tuple[int, int]) -> int:
    """|e - i| + |f - j| between two cell indices."""
    return abs(c2[0] - c1[0]) + abs(c2[1] - c1[1])


def _band_offsets(d_min_excl: float, d_max_incl: float) -> list[tuple[int, int]]:
    """Integer offsets with d_min_excl < Manhattan distance <= d_max_incl."""
    reach = int(np.floor(d_max_incl))
    offsets = []
    for di in range(-reach, reach + 1):
        for dj in range(-reach, reach + 1):
            d = abs(di) + abs(dj)
            if d_min_excl < d <= d_max_incl:
                offsets.append((di, dj))
    return offsets


def interpolate(gmap: GroundMap,
                cfg: InterpolationConfig = InterpolationConfig()) -> GroundMap:
    """Banded-distance interpolation/extrapolation over the whole grid.

    Returns a new map; the input is read only.  For each cell, each band's
    mean of non-empty source cells is weighted and the result normalized
    by the total weight of contributing bands (a weighted average, so a
    constant field is reproduced exactly and outputs stay within the
    per-layer source range).  Cells with no source within eps_low stay
    empty.  The high band includes d = 0, so a filled cell contributes to
    itself.
    """
    if not np.any(gmap.counts > 0):
        raise ValueError("map has no recorded cells")
    res = gmap.resolution
    bands = [
        (_band_offsets(-1.0, cfg.eps_high / res), cfg.w_high),
        (_band_offsets(cfg.eps_high / res, cfg.eps_mid / res), cfg.w_mid),
        (_band_offsets(cfg.eps_mid / res, cfg.eps_low / res), cfg.w_low),
    ]

    w, l = gmap.shape
    reach = int(np.floor(cfg.eps_low / res))
    filled = gmap.counts > 0
    src = np.where(filled[..., None], gmap.values, 0.0)
    pad_vals = np.pad(src, ((reach, reach), (reach, reach), (0, 0)))
    pad_mask = np.pad(filled.astype(float), reach)

    weighted = np.zeros((w, l, NUM_LAYERS))
    weight_total = np.zeros((w, l))
    for offsets, band_weight in bands:
        if not offsets:
            continue
        band_sum = np.zeros((w, l, NUM_LAYERS))
        band_n = np.zeros((w, l))
        for di, dj in offsets:
            band_sum += pad_vals[reach + di:reach + di + w,
                                 reach + dj:reach + dj + l]
            band_n += pad_mask[reach + di:reach + di + w,
                               reach + dj:reach + dj + l]
        has = band_n > 0
        mean = np.zeros((w, l, NUM_LAYERS))
        mean[has] = band_sum[has] / band_n[has, None]
        weighted += np.where(has[..., None], band_weight * mean, 0.0)
        weight_total += np.where(has, band_weight, 0.0)

    out = GroundMap.empty(gmap.origin, res, w, l)
    reached = weight_total > 0
    out.values[reached] = weighted[reached] / weight_total[reached, None]
    out.counts[reached] = 1
    return out


def export_layer_csv(gmap: GroundMap, layer: str, path) -> None:
    """Write one layer as ``i,j,<layer>`` rows, empty cells omitted."""
    if layer not in LAYER_NAMES:
        raise ValueError(f"unknown layer {layer!r}; expected one of {LAYER_NAMES}")
    k = LAYER_NAMES.index(layer)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", layer])
        for i in range(gmap.shape[0]):
            for j in range(gmap.shape[1]):
                if gmap.counts[i, j] > 0:
                    writer.writerow([i, j, repr(float(gmap.values[i, j, k]))])


def import_layer_csv(path) -> tuple[str, dict[tuple[int, int], float]]:
    """Read a layer CSV back as {(i, j): value}; returns (layer name, cells)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) != 3 or header[:2] != ["i", "j"]:
            raise ValueError(f"unrecognized layer CSV header {header}")
        layer = header[2]
        cells = {(int(i), int(j)): float(v) for i, j, v in reader}
    return layer, cells
