"""Grid geometry, synthetic geography and observation site layout.

Core objects:
    Grid            uniform pixel grid with a physical spacing in km
    CoastlineSpec   parametric west-land / east-sea coastline
    LandSeaMask     boolean land mask plus per-pixel distance to the coast
    BuoyNetwork     fixed set of in-situ sites with coastal-zone labels
    FieldSeries     hourly wind-speed field stack (T, H, W)

plus binary field-file and buoy-table round-trip helpers.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

MIN_GRID_SIDE = 8

# Coastal-zone band edges (km from the coast).
COASTAL_MAX_KM = 25.0
OPEN_SEA_MIN_KM = 76.0
ZONES = ("Coastal", "NearSea", "OpenSea")

# Default network size per zone, 13 sites total.
ZONE_SITE_COUNTS = {"Coastal": 4, "NearSea": 4, "OpenSea": 5}

FIELD_MAGIC = b"WF01"
FIELD_HEADER = struct.Struct("<4sIII")


class FieldFormatError(ValueError):
    """Raised when a field file does not match the expected layout."""


@dataclass(frozen=True)
class Grid:
    """Uniform H x W pixel grid with square pixels of ``spacing_km``."""

    height: int
    width: int
    spacing_km: float = 3.0

    def __post_init__(self) -> None:
        if self.height < MIN_GRID_SIDE or self.width < MIN_GRID_SIDE:
            raise ValueError(f"grid sides must be >= {MIN_GRID_SIDE}, got {self.height}x{self.width}")
        if not self.spacing_km > 0:
            raise ValueError(f"spacing_km must be positive, got {self.spacing_km}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def extent_km(self) -> tuple[float, float]:
        """Physical (height, width) extent in km."""
        return (self.height * self.spacing_km, self.width * self.spacing_km)


def make_grid(height: int, width: int, spacing_km: float = 3.0) -> Grid:
    return Grid(height, width, spacing_km)


@dataclass(frozen=True)
class CoastlineSpec:
    """Sinusoidal north-south coastline: land occupies the western columns.

    Row r has coast column ``base_col + amplitude_px * sin(2 pi r / wavelength_px + phase)``
    and a pixel is land when its column index is strictly below that value.
    """

    base_col: float
    amplitude_px: float = 0.0
    wavelength_px: float = 32.0
    phase: float = 0.0

    def __post_init__(self) -> None:
        if not self.wavelength_px > 0:
            raise ValueError("wavelength_px must be positive")
        if self.amplitude_px < 0:
            raise ValueError("amplitude_px must be non-negative")

    def coast_columns(self, height: int) -> np.ndarray:
        rows = np.arange(height, dtype=np.float64)
        wave = np.sin(2.0 * np.pi * rows / self.wavelength_px + self.phase)
        return self.base_col + self.amplitude_px * wave


@dataclass(frozen=True)
class LandSeaMask:
    """Land mask (True on land) with per-pixel distance to the coast in km.

    Distance is zero on land and on the first sea pixel off the coast, and
    grows with Euclidean pixel distance further out.
    """

    land: np.ndarray
    coast_distance_km: np.ndarray
    spacing_km: float

    def __post_init__(self) -> None:
        if self.land.dtype != np.bool_ or self.land.ndim != 2:
            raise ValueError("land must be a 2-D boolean array")
        if self.coast_distance_km.shape != self.land.shape:
            raise ValueError("coast_distance_km shape mismatch")
        if not self.land.any():
            raise ValueError("mask has no land")
        if self.land.all():
            raise ValueError("mask has no sea")

    @property
    def sea(self) -> np.ndarray:
        return ~self.land

    @property
    def land_fraction(self) -> float:
        return float(self.land.mean())


def coast_distance_km(land: np.ndarray, spacing_km: float) -> np.ndarray:
    """Distance-to-coast map in km; zero on land and on coast-adjacent sea.

    Computed as the Euclidean distance transform of the sea region minus one
    pixel, clamped at zero, so sea pixels orthogonally adjacent to land sit
    exactly on the coast.
    """
    dist_px = ndimage.distance_transform_edt(~land)
    return np.maximum(dist_px - 1.0, 0.0) * spacing_km


def synth_landsea(grid: Grid, coastline: CoastlineSpec) -> LandSeaMask:
    cols = coastline.coast_columns(grid.height)
    land = np.arange(grid.width)[None, :] < cols[:, None]
    if not land.any():
        raise ValueError("coastline leaves no land on the grid")
    if land.all(axis=1).any():
        raise ValueError("coastline closes off entire rows; no sea corridor")
    dist = coast_distance_km(land, grid.spacing_km)
    return LandSeaMask(land=land, coast_distance_km=dist, spacing_km=grid.spacing_km)


def zone_of(distance_km: float) -> str:
    """Coastal-zone label for a sea pixel at the given coast distance."""
    if distance_km < COASTAL_MAX_KM:
        return "Coastal"
    if distance_km < OPEN_SEA_MIN_KM:
        return "NearSea"
    return "OpenSea"


@dataclass(frozen=True)
class Buoy:
    id: int
    row: int
    col: int
    zone: str

    def __post_init__(self) -> None:
        if self.zone not in ZONES:
            raise ValueError(f"unknown zone {self.zone!r}")


@dataclass(frozen=True)
class BuoyNetwork:
    buoys: tuple[Buoy, ...]

    def __post_init__(self) -> None:
        seen = {(b.row, b.col) for b in self.buoys}
        if len(seen) != len(self.buoys):
            raise ValueError("duplicate buoy positions")
        if len({b.id for b in self.buoys}) != len(self.buoys):
            raise ValueError("duplicate buoy ids")

    def __len__(self) -> int:
        return len(self.buoys)

    def __iter__(self):
        return iter(self.buoys)

    @property
    def rows(self) -> np.ndarray:
        return np.array([b.row for b in self.buoys], dtype=np.int64)

    @property
    def cols(self) -> np.ndarray:
        return np.array([b.col for b in self.buoys], dtype=np.int64)

    def in_zone(self, zone: str) -> tuple[Buoy, ...]:
        if zone not in ZONES:
            raise ValueError(f"unknown zone {zone!r}")
        return tuple(b for b in self.buoys if b.zone == zone)

    def zone_counts(self) -> dict[str, int]:
        return {z: len(self.in_zone(z)) for z in ZONES}


def buoys_from_positions(landsea: LandSeaMask, positions: list[tuple[int, int]]) -> BuoyNetwork:
    """Build a network from (row, col) sea positions; zones follow coast distance."""
    buoys = []
    for i, (r, c) in enumerate(positions):
        if landsea.land[r, c]:
            raise ValueError(f"buoy position ({r}, {c}) is on land")
        buoys.append(Buoy(id=i, row=int(r), col=int(c), zone=zone_of(float(landsea.coast_distance_km[r, c]))))
    return BuoyNetwork(buoys=tuple(buoys))


def _zone_band_km(zone: str, max_dist_km: float) -> tuple[float, float]:
    if zone == "Coastal":
        return (0.0, COASTAL_MAX_KM)
    if zone == "NearSea":
        return (COASTAL_MAX_KM, OPEN_SEA_MIN_KM)
    return (OPEN_SEA_MIN_KM, max(max_dist_km, OPEN_SEA_MIN_KM + 1.0))


def default_buoys(landsea: LandSeaMask) -> BuoyNetwork:
    """Deterministic 13-site network stratified over the coastal zones.

    Sites in each zone spread over evenly spaced rows; within a row the sea
    pixel whose coast distance is closest to the zone-band midpoint is taken.
    Raises if the grid cannot host all three zones.
    """
    height = landsea.land.shape[0]
    dist = landsea.coast_distance_km
    max_dist = float(dist[landsea.sea].max())
    positions: list[tuple[int, int]] = []
    taken: set[tuple[int, int]] = set()
    for zone_index, zone in enumerate(ZONES):
        count = ZONE_SITE_COUNTS[zone]
        lo, hi = _zone_band_km(zone, max_dist)
        target = 0.5 * (lo + hi)
        # Stagger rows across zones so sites do not stack on shared rows.
        rows = (np.linspace(0, height - 1, count + 2)[1:-1] + zone_index).astype(int) % height
        for r in rows:
            in_zone = np.array([zone_of(float(d)) == zone for d in dist[r]])
            candidate_cols = np.nonzero(landsea.sea[r] & in_zone)[0]
            if candidate_cols.size == 0:
                raise ValueError(f"no {zone} sea pixels on row {r}; grid too small for the default network")
            order = np.argsort(np.abs(dist[r, candidate_cols] - target), kind="stable")
            placed = False
            for c in candidate_cols[order]:
                if (int(r), int(c)) not in taken:
                    positions.append((int(r), int(c)))
                    taken.add((int(r), int(c)))
                    placed = True
                    break
            if not placed:
                raise ValueError(f"could not place a distinct {zone} site on row {r}")
    return buoys_from_positions(landsea, positions)


def buoys_write(network: BuoyNetwork, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "row", "col", "zone"])
        for b in network:
            writer.writerow([b.id, b.row, b.col, b.zone])


def buoys_read(path: str | Path) -> BuoyNetwork:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "row", "col", "zone"]:
            raise FieldFormatError(f"unexpected buoy table header: {header}")
        buoys = tuple(Buoy(id=int(i), row=int(r), col=int(c), zone=z) for i, r, c, z in reader)
    return BuoyNetwork(buoys=buoys)


@dataclass(frozen=True)
class FieldSeries:
    """Hourly field stack of shape (T, H, W), float32, finite everywhere.

    ``t0_hour`` is the local hour of frame 0; 24-frame day windows start at
    hour 0 while 36-frame assimilation windows start at 18:00 the day before.
    """

    data: np.ndarray
    t0_hour: int = 0

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise ValueError("field series must be (T, H, W)")
        if self.data.dtype != np.float32:
            raise ValueError("field series must be float32")
        if not np.isfinite(self.data).all():
            raise ValueError("field series contains non-finite values")
        if not 0 <= self.t0_hour < 24:
            raise ValueError("t0_hour must be in [0, 24)")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    def hour_of(self, frame: int) -> int:
        return (self.t0_hour + frame) % 24


def field_write(data: np.ndarray, path: str | Path) -> None:
    """Write a (T, H, W) float32 stack in the binary field-file layout.

    Layout: magic ``WF01``, three little-endian uint32 (T, H, W), then the
    frames as little-endian float32 in t-major row-major order.
    """
    if data.ndim != 3:
        raise FieldFormatError("field data must be (T, H, W)")
    t, h, w = data.shape
    if max(t, h, w) >= 2**32:
        raise FieldFormatError("dimension exceeds uint32 range")
    payload = np.ascontiguousarray(data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FIELD_HEADER.pack(FIELD_MAGIC, t, h, w))
        fh.write(payload.tobytes())


def field_read(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(FIELD_HEADER.size)
        if len(head) < FIELD_HEADER.size:
            raise FieldFormatError("truncated header")
        magic, t, h, w = FIELD_HEADER.unpack(head)
        if magic != FIELD_MAGIC:
            raise FieldFormatError(f"bad magic {magic!r}")
        if min(t, h, w) == 0:
            raise FieldFormatError("zero-sized dimension")
        n_values = t * h * w
        body = fh.read(4 * n_values + 1)
    if len(body) < 4 * n_values:
        raise FieldFormatError("truncated payload")
    if len(body) > 4 * n_values:
        raise FieldFormatError("trailing bytes after payload")
    return np.frombuffer(body, dtype="<f4").reshape(t, h, w).astype(np.float32, copy=True)
