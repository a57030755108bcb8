"""Pseudo-observation extraction from the synthetic truth.

Three modalities are carved out of each day window:
    lr    coarsened snapshots every ``lr_period_h`` hours on the full grid
    hr    full-resolution snapshots at fixed hours, sea pixels only
    situ  hourly point series at the buoy pixels

Values are zero and masks are False wherever a modality is inactive or
unobserved.  Bias injection perturbs only the coarse modality, reading the
frames it needs from the surrounding 36 h window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BuoyNetwork, LandSeaMask
from .synth import DAY_OFFSET_IN_WINDOW, HOURS_PER_DAY, DaySample

CONFIGS = ("SR", "C1", "C2", "C3")
ACTIVE_MODALITIES = {
    "SR": ("lr",),
    "C1": ("lr", "hr"),
    "C2": ("lr", "situ"),
    "C3": ("lr", "hr", "situ"),
}

LR_PERIODS_H = (1, 6)
HR_PERIODS_H = (12, 24)

DELAY_RANGE_H = 4
REMOD_RANGE = (0.5, 1.5)
BIAS_KINDS = ("none", "random_delay", "random_remod", "fixed_delay", "fixed_remod")


@dataclass(frozen=True)
class SamplingScheme:
    """Which modalities are observed, at what cadence and coarsening."""

    config: str = "C3"
    lr_period_h: int = 6
    lr_stride_px: int = 10
    hr_period_h: int | None = 12

    def __post_init__(self) -> None:
        if self.config not in CONFIGS:
            raise ValueError(f"unknown observation config {self.config!r}")
        if self.lr_period_h not in LR_PERIODS_H:
            raise ValueError(f"lr_period_h must be one of {LR_PERIODS_H}")
        if self.lr_stride_px < 2:
            raise ValueError("lr_stride_px must be at least 2")
        if "hr" in self.active:
            if self.hr_period_h not in HR_PERIODS_H:
                raise ValueError(f"config {self.config} needs hr_period_h in {HR_PERIODS_H}")
        elif self.hr_period_h is not None:
            raise ValueError(f"config {self.config} has no high-resolution modality")

    @property
    def active(self) -> tuple[str, ...]:
        return ACTIVE_MODALITIES[self.config]

    @property
    def lr_hours(self) -> tuple[int, ...]:
        return tuple(range(0, HOURS_PER_DAY, self.lr_period_h))

    @property
    def hr_hours(self) -> tuple[int, ...]:
        if "hr" not in self.active:
            return ()
        return tuple(range(self.hr_period_h // 2, HOURS_PER_DAY, self.hr_period_h))


def lr_stride_for_km(target_km: float, spacing_km: float) -> int:
    """Pixel stride approximating a target coarse resolution."""
    stride = round(target_km / spacing_km)
    if stride < 2:
        raise ValueError(f"target {target_km} km is below 2 pixels at {spacing_km} km spacing")
    return int(stride)


def _interp_weights(size: int, stride: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    anchors = np.arange(0, size, stride)
    pos = np.arange(size)
    left = np.clip(np.searchsorted(anchors, pos, side="right") - 1, 0, anchors.size - 1)
    right = np.minimum(left + 1, anchors.size - 1)
    gap = anchors[right] - anchors[left]
    frac = np.where(gap > 0, (pos - anchors[left]) / np.maximum(gap, 1), 0.0)
    return left, right, frac


def downsample_reinterp(field: np.ndarray, stride: int) -> np.ndarray:
    """Subsample every ``stride`` pixels (anchor at 0, 0) and re-grid bilinearly.

    Interpolation is separable with edge hold past the last anchor, so anchor
    pixels keep their exact values and the operator is idempotent.
    """
    h, w = field.shape[-2], field.shape[-1]
    if not 2 <= stride < min(h, w):
        raise ValueError(f"stride {stride} invalid for a {h}x{w} field")
    coarse = np.asarray(field, dtype=np.float64)[..., ::stride, ::stride]
    lr, rr, fr = _interp_weights(h, stride)
    lc, rc, fc = _interp_weights(w, stride)
    rows = coarse[..., lr, :] * (1.0 - fr)[:, None] + coarse[..., rr, :] * fr[:, None]
    full = rows[..., :, lc] * (1.0 - fc) + rows[..., :, rc] * fc
    return full


@dataclass
class ObservationBundle:
    """Per-modality value and mask stacks over one 24 h day window.

    Value arrays are float32 (T, H, W) with zeros off-mask; masks are boolean
    with the same shape.  Inactive modalities are all-zero and all-False.
    """

    y_lr: np.ndarray
    y_hr: np.ndarray
    y_situ: np.ndarray
    m_lr: np.ndarray
    m_hr: np.ndarray
    m_situ: np.ndarray
    scheme: SamplingScheme

    def __post_init__(self) -> None:
        shape = self.y_lr.shape
        for name in ("y_hr", "y_situ", "m_lr", "m_hr", "m_situ"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} shape mismatch")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.y_lr.shape


def _masked(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values, dtype=np.float32)
    out[mask] = values[mask]
    return out


def assemble(sample: DaySample, scheme: SamplingScheme, landsea: LandSeaMask,
             buoys: BuoyNetwork) -> ObservationBundle:
    """Unbiased observation bundle for one day sample."""
    return assemble_biased(sample, scheme, landsea, buoys,
                           lr_delays_h=None, lr_remods=None)


def assemble_biased(sample: DaySample, scheme: SamplingScheme, landsea: LandSeaMask,
                    buoys: BuoyNetwork, lr_delays_h: np.ndarray | None,
                    lr_remods: np.ndarray | None) -> ObservationBundle:
    """Bundle whose coarse frames may be delayed or remodulated per snapshot.

    ``lr_delays_h`` (integer hours, one per observed coarse hour) shifts the
    source frame inside the 36 h window; ``lr_remods`` scales it.  ``None``
    leaves the modality unbiased.
    """
    gt36 = sample.gt36.data
    gt24 = sample.gt24.data
    t, h, w = gt24.shape
    lr_hours = scheme.lr_hours
    if lr_delays_h is not None:
        lr_delays_h = np.asarray(lr_delays_h, dtype=np.int64)
        if lr_delays_h.shape != (len(lr_hours),):
            raise ValueError("need one delay per observed coarse hour")
        if np.abs(lr_delays_h).max(initial=0) > DELAY_RANGE_H:
            raise ValueError(f"delays must stay within +-{DELAY_RANGE_H} h")
    if lr_remods is not None:
        lr_remods = np.asarray(lr_remods, dtype=np.float64)
        if lr_remods.shape != (len(lr_hours),):
            raise ValueError("need one remodulation factor per observed coarse hour")

    y_lr = np.zeros((t, h, w), dtype=np.float32)
    m_lr = np.zeros((t, h, w), dtype=bool)
    for k, hour in enumerate(lr_hours):
        src = DAY_OFFSET_IN_WINDOW + hour
        if lr_delays_h is not None:
            src += int(lr_delays_h[k])
        frame = gt36[src].astype(np.float64)
        if lr_remods is not None:
            frame = frame * lr_remods[k]
        y_lr[hour] = downsample_reinterp(frame, scheme.lr_stride_px).astype(np.float32)
        m_lr[hour] = True

    y_hr = np.zeros((t, h, w), dtype=np.float32)
    m_hr = np.zeros((t, h, w), dtype=bool)
    if "hr" in scheme.active:
        for hour in scheme.hr_hours:
            m_hr[hour] = landsea.sea
        y_hr = _masked(gt24, m_hr)

    y_situ = np.zeros((t, h, w), dtype=np.float32)
    m_situ = np.zeros((t, h, w), dtype=bool)
    if "situ" in scheme.active:
        m_situ[:, buoys.rows, buoys.cols] = True
        y_situ = _masked(gt24, m_situ)

    return ObservationBundle(y_lr=y_lr, y_hr=y_hr, y_situ=y_situ,
                             m_lr=m_lr, m_hr=m_hr, m_situ=m_situ, scheme=scheme)


def anomaly(y_hr: np.ndarray, y_lr: np.ndarray) -> np.ndarray:
    """High-resolution anomaly: full-resolution values minus the coarse field."""
    if y_hr.shape != y_lr.shape:
        raise ValueError("anomaly operands must share a shape")
    return y_hr - y_lr


@dataclass(frozen=True)
class BiasSpec:
    """Coarse-modality bias protocol.

    ``random_*`` kinds draw a fresh value per observed coarse snapshot from
    the protocol ranges; ``fixed_*`` apply one constant to every snapshot.
    """

    kind: str = "none"
    delay_h: int = 0
    remod: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in BIAS_KINDS:
            raise ValueError(f"unknown bias kind {self.kind!r}")
        if abs(self.delay_h) > DELAY_RANGE_H:
            raise ValueError(f"delay_h must be within +-{DELAY_RANGE_H}")
        if not REMOD_RANGE[0] <= self.remod <= REMOD_RANGE[1]:
            raise ValueError(f"remod must be within {REMOD_RANGE}")


def sample_bias(spec: BiasSpec, n_snapshots: int,
                rng: np.random.Generator) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Per-snapshot (delays, remods) for one bundle; Nones where unbiased."""
    if spec.kind == "none":
        return None, None
    if spec.kind == "random_delay":
        return rng.integers(-DELAY_RANGE_H, DELAY_RANGE_H + 1, size=n_snapshots), None
    if spec.kind == "random_remod":
        return None, rng.uniform(*REMOD_RANGE, size=n_snapshots)
    if spec.kind == "fixed_delay":
        return np.full(n_snapshots, spec.delay_h, dtype=np.int64), None
    return None, np.full(n_snapshots, spec.remod, dtype=np.float64)


def assemble_with_bias(sample: DaySample, scheme: SamplingScheme, landsea: LandSeaMask,
                       buoys: BuoyNetwork, bias: BiasSpec,
                       rng: np.random.Generator | None = None) -> ObservationBundle:
    """Bundle under the bias protocol; random kinds consume one rng draw each."""
    if bias.kind.startswith("random"):
        if rng is None:
            raise ValueError(f"bias kind {bias.kind!r} needs an rng")
        delays, remods = sample_bias(bias, len(scheme.lr_hours), rng)
    else:
        delays, remods = sample_bias(bias, len(scheme.lr_hours), np.random.default_rng(0))
    return assemble_biased(sample, scheme, landsea, buoys, delays, remods)
