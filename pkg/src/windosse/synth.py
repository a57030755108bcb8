"""Synthetic hourly wind-speed truth, chronological splits and day windows.

The generator builds a rectified sum of a diurnally modulated base flow and
an advected band-limited anomaly field, both attenuated near the coast.  The
whole series is a pure function of the generator spec, so regeneration is
bit-identical regardless of chunking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import FieldSeries, Grid, LandSeaMask

HOURS_PER_DAY = 24
# Day window of interest plus a 6 h margin on both sides.
WINDOW36 = 36
WINDOW36_START_HOUR = 18
DAY_OFFSET_IN_WINDOW = 6

# Spatial scales of the generator, in km.
SHELTER_SCALE_KM = 15.0
# Shortest retained wavelength of the anomaly spectrum, in pixels.
MIN_WAVELENGTH_PX = 4.0

SPLIT_NAMES = ("train", "test", "val")
FULL_SPLIT_DAYS = (432, 200, 100)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the synthetic truth generator.

    ``advection_px_per_h`` is (column, row) drift of the anomaly pattern per
    hour.  ``diurnal_amplitude`` modulates the base flow around 1 over the
    day; zero disables the cycle.
    """

    seed: int = 777
    n_days: int = 732
    base_speed_mps: float = 8.0
    anomaly_amplitude_mps: float = 2.0
    spectral_slope: float = 3.0
    advection_px_per_h: tuple[float, float] = (1.0, 0.5)
    diurnal_amplitude: float = 0.25
    diurnal_peak_hour: float = 15.0
    shelter_strength: float = 0.5

    def __post_init__(self) -> None:
        if self.n_days < 3:
            raise ValueError("n_days must be at least 3 to window a single split")
        if not self.base_speed_mps > 0:
            raise ValueError("base_speed_mps must be positive")
        if self.anomaly_amplitude_mps < 0:
            raise ValueError("anomaly_amplitude_mps must be non-negative")
        if not 0 <= self.diurnal_amplitude < 1:
            raise ValueError("diurnal_amplitude must be in [0, 1)")
        if not 0 <= self.shelter_strength <= 1:
            raise ValueError("shelter_strength must be in [0, 1]")


def diurnal_factor(spec: SynthSpec, hours: np.ndarray) -> np.ndarray:
    """Multiplicative base-flow modulation, peaking at ``diurnal_peak_hour``."""
    phase = 2.0 * np.pi * (np.asarray(hours, dtype=np.float64) - spec.diurnal_peak_hour) / HOURS_PER_DAY
    return 1.0 + spec.diurnal_amplitude * np.cos(phase)


def shelter_factor(spec: SynthSpec, landsea: LandSeaMask) -> np.ndarray:
    """Coast-distance attenuation, lowest on land and saturating to 1 offshore."""
    return 1.0 - spec.shelter_strength * np.exp(-landsea.coast_distance_km / SHELTER_SCALE_KM)


def _anomaly_spectrum(spec: SynthSpec, grid: Grid, rng: np.random.Generator) -> np.ndarray:
    """Random band-limited power-law spectrum, normalized to unit frequency-0 std."""
    kr = np.fft.fftfreq(grid.height)[:, None]
    kc = np.fft.fftfreq(grid.width)[None, :]
    kmag = np.hypot(kr, kc)
    amp = np.zeros_like(kmag)
    band = (kmag > 0) & (kmag <= 1.0 / MIN_WAVELENGTH_PX)
    amp[band] = kmag[band] ** (-spec.spectral_slope / 2.0)
    noise = rng.standard_normal(kmag.shape) + 1j * rng.standard_normal(kmag.shape)
    spectrum = amp * noise
    frame0 = np.real(np.fft.ifft2(spectrum))
    std0 = float(frame0.std())
    if std0 == 0:
        raise ValueError("degenerate anomaly spectrum")
    return spectrum / std0


def _advected_frames(spectrum: np.ndarray, spec: SynthSpec, hours: np.ndarray) -> np.ndarray:
    """Anomaly frames at the given hours via a spectral phase shift.

    Integer pixel drifts per hour reduce to exact periodic shifts of frame 0.
    """
    h, w = spectrum.shape
    kr = np.fft.fftfreq(h)[None, :, None]
    kc = np.fft.fftfreq(w)[None, None, :]
    u_col, v_row = spec.advection_px_per_h
    t = np.asarray(hours, dtype=np.float64)[:, None, None]
    phase = np.exp(-2j * np.pi * (kr * (v_row * t) + kc * (u_col * t)))
    return np.real(np.fft.ifft2(spectrum[None, :, :] * phase, axes=(-2, -1)))


def generate(spec: SynthSpec, grid: Grid, landsea: LandSeaMask, chunk_hours: int = 96) -> np.ndarray:
    """Hourly truth series of shape (n_days * 24, H, W), float32, all >= 0."""
    if landsea.land.shape != grid.shape:
        raise ValueError("land mask does not match the grid")
    rng = np.random.default_rng(spec.seed)
    spectrum = _anomaly_spectrum(spec, grid, rng)
    shelter = shelter_factor(spec, landsea)
    n_hours = spec.n_days * HOURS_PER_DAY
    out = np.empty((n_hours, grid.height, grid.width), dtype=np.float32)
    for start in range(0, n_hours, chunk_hours):
        hours = np.arange(start, min(start + chunk_hours, n_hours))
        anomaly = _advected_frames(spectrum, spec, hours)
        base = spec.base_speed_mps * diurnal_factor(spec, hours % HOURS_PER_DAY)
        fields = (base[:, None, None] + spec.anomaly_amplitude_mps * anomaly) * shelter[None, :, :]
        out[hours] = np.maximum(fields, 0.0).astype(np.float32)
    return out


@dataclass(frozen=True)
class DaySample:
    """One assimilation case: the 24 h day of interest inside its 36 h window.

    ``gt24`` is frames [6, 30) of ``gt36``; frame 0 of ``gt24`` is hour 0.
    """

    gt36: FieldSeries
    gt24: FieldSeries
    day_index: int

    def __post_init__(self) -> None:
        if self.gt36.n_frames != WINDOW36 or self.gt24.n_frames != HOURS_PER_DAY:
            raise ValueError("window lengths must be 36 and 24 frames")
        if self.gt36.t0_hour != WINDOW36_START_HOUR or self.gt24.t0_hour != 0:
            raise ValueError("window start hours must be 18:00 and 00:00")


def day_sample(split_series: np.ndarray, day_index: int) -> DaySample:
    """Windows for day ``day_index`` of a contiguous hourly split series."""
    start = day_index * HOURS_PER_DAY - DAY_OFFSET_IN_WINDOW
    stop = start + WINDOW36
    if start < 0 or stop > split_series.shape[0]:
        raise ValueError(f"day {day_index} lacks the 6 h margins inside its split")
    gt36 = np.ascontiguousarray(split_series[start:stop], dtype=np.float32)
    gt24 = gt36[DAY_OFFSET_IN_WINDOW:DAY_OFFSET_IN_WINDOW + HOURS_PER_DAY]
    return DaySample(
        gt36=FieldSeries(gt36, t0_hour=WINDOW36_START_HOUR),
        gt24=FieldSeries(np.ascontiguousarray(gt24), t0_hour=0),
        day_index=day_index,
    )


def split_days(series: np.ndarray, split_counts: tuple[int, int, int]) -> dict[str, np.ndarray]:
    """Chronological train / test / val day blocks of the full hourly series."""
    if any(c < 3 for c in split_counts):
        raise ValueError("each split needs at least 3 days")
    n_hours = sum(split_counts) * HOURS_PER_DAY
    if series.shape[0] != n_hours:
        raise ValueError(f"series has {series.shape[0]} frames, split counts need {n_hours}")
    splits = {}
    offset = 0
    for name, days in zip(SPLIT_NAMES, split_counts):
        splits[name] = series[offset:offset + days * HOURS_PER_DAY]
        offset += days * HOURS_PER_DAY
    return splits


def window_split(split_series: np.ndarray) -> list[DaySample]:
    """All interior-day samples of a split; first and last day lack margins."""
    n_days = split_series.shape[0] // HOURS_PER_DAY
    return [day_sample(split_series, d) for d in range(1, n_days - 1)]


@dataclass
class Dataset:
    """Windowed samples per split plus per-split normalization scales."""

    splits: dict[str, list[DaySample]]
    norm_std: dict[str, float] = field(default_factory=dict)

    @property
    def train(self) -> list[DaySample]:
        return self.splits["train"]

    @property
    def test(self) -> list[DaySample]:
        return self.splits["test"]

    @property
    def val(self) -> list[DaySample]:
        return self.splits["val"]


def fit_norm(dataset: Dataset) -> dict[str, float]:
    """Per-split standard deviation of the day-window truth, in float64."""
    stds = {}
    for name, samples in dataset.splits.items():
        total = 0.0
        total_sq = 0.0
        count = 0
        for s in samples:
            x = s.gt24.data.astype(np.float64)
            total += x.sum()
            total_sq += np.square(x).sum()
            count += x.size
        if count == 0:
            raise ValueError(f"split {name!r} has no samples")
        mean = total / count
        var = total_sq / count - mean * mean
        if var <= 0:
            raise ValueError(f"split {name!r} has zero variance; cannot normalize")
        stds[name] = float(np.sqrt(var))
    return stds


def split_and_window(series: np.ndarray, split_counts: tuple[int, int, int]) -> Dataset:
    blocks = split_days(series, split_counts)
    dataset = Dataset(splits={name: window_split(block) for name, block in blocks.items()})
    dataset.norm_std = fit_norm(dataset)
    return dataset


def normalize(data: np.ndarray, std: float) -> np.ndarray:
    if not std > 0:
        raise ValueError("normalization std must be positive")
    return (data / np.float32(std)).astype(np.float32)


def denormalize(data: np.ndarray, std: float) -> np.ndarray:
    """Scale back to physical units; float64 so the round trip stays exact."""
    if not std > 0:
        raise ValueError("normalization std must be positive")
    return np.asarray(data, dtype=np.float64) * float(std)
