"""Variational assimilation core and reference schemes.

``AssimModel`` estimates the state trajectory of one day window by unrolled
minimization of a trainable variational cost: a quadratic misfit against the
observed entries (optionally through learned feature pairs per modality)
plus a quadratic penalty against a learned flow operator.  Updates come from
a convolutional LSTM acting on the cost gradient.

``DirectInversion`` applies the flow operator once to an observation-filled
state.  ``baseline_interp`` is the training-free reference: per-pixel linear
interpolation of the coarse snapshots over time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .grid import BuoyNetwork
from .models import FeatureExtractors, SolverStep, hr_readout, split_state, state_channels
from .obs import ObservationBundle

DFT_MODES = ("single", "multi")


class DivergenceError(RuntimeError):
    """Raised when the variational cost or a training loss turns non-finite."""


@dataclass(frozen=True)
class VarCostConfig:
    dft_mode: str = "multi"
    n_iterations: int = 5

    def __post_init__(self) -> None:
        if self.dft_mode not in DFT_MODES:
            raise ValueError(f"dft_mode must be one of {DFT_MODES}")
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be non-negative")


def lr_time_interp(y_lr: np.ndarray, lr_hours: tuple[int, ...]) -> np.ndarray:
    """Per-pixel linear time interpolation of the coarse snapshots.

    Hours beyond the last snapshot hold its value.  Input is the (T, H, W)
    coarse value stack with frames defined at ``lr_hours``.
    """
    if len(lr_hours) == 0:
        raise ValueError("no coarse snapshots to interpolate")
    hours = np.asarray(lr_hours, dtype=np.int64)
    obs = y_lr[hours].astype(np.float64)
    t = np.arange(y_lr.shape[0])
    left = np.clip(np.searchsorted(hours, t, side="right") - 1, 0, hours.size - 1)
    right = np.minimum(left + 1, hours.size - 1)
    gap = hours[right] - hours[left]
    frac = np.where(gap > 0, (t - hours[left]) / np.maximum(gap, 1), 0.0)
    out = obs[left] * (1.0 - frac)[:, None, None] + obs[right] * frac[:, None, None]
    return out.astype(np.float32)


def baseline_interp(bundle: ObservationBundle) -> np.ndarray:
    """Training-free reconstruction: time-interpolated coarse observations."""
    return lr_time_interp(bundle.y_lr, bundle.scheme.lr_hours)


@dataclass
class TensorBatch:
    """Collated observation tensors for a batch of day windows.

    Values are float tensors (N, T, H, W); masks are float 0/1 tensors of the
    same shape.  ``situ_series`` is (N, sites, T) with the site coordinates
    alongside; ``lr_init`` is the interpolated coarse initialization.
    """

    y_lr: torch.Tensor
    y_hr: torch.Tensor
    y_situ: torch.Tensor
    m_lr: torch.Tensor
    m_hr: torch.Tensor
    m_situ: torch.Tensor
    lr_init: torch.Tensor
    situ_series: torch.Tensor
    site_rows: torch.Tensor
    site_cols: torch.Tensor
    hr_hours: tuple[int, ...]
    lr_hours: tuple[int, ...]

    @property
    def n_hours(self) -> int:
        return self.y_lr.shape[1]

    @property
    def size(self) -> int:
        return self.y_lr.shape[0]


def collate(bundles: list[ObservationBundle], buoys: BuoyNetwork,
            dtype: torch.dtype = torch.float32) -> TensorBatch:
    """Stack bundles of one sampling scheme into a batch."""
    scheme = bundles[0].scheme
    for b in bundles:
        if b.scheme != scheme:
            raise ValueError("bundles in a batch must share a sampling scheme")

    def stack(attr: str) -> torch.Tensor:
        return torch.from_numpy(np.stack([getattr(b, attr) for b in bundles])).to(dtype)

    y_lr, y_hr, y_situ = stack("y_lr"), stack("y_hr"), stack("y_situ")
    m_lr, m_hr, m_situ = stack("m_lr"), stack("m_hr"), stack("m_situ")
    lr_init = torch.from_numpy(
        np.stack([lr_time_interp(b.y_lr, scheme.lr_hours) for b in bundles])).to(dtype)
    rows = torch.from_numpy(buoys.rows)
    cols = torch.from_numpy(buoys.cols)
    situ_series = y_situ[..., rows, cols].transpose(-2, -1).contiguous()
    return TensorBatch(y_lr=y_lr, y_hr=y_hr, y_situ=y_situ,
                       m_lr=m_lr, m_hr=m_hr, m_situ=m_situ,
                       lr_init=lr_init, situ_series=situ_series,
                       site_rows=rows, site_cols=cols,
                       hr_hours=scheme.hr_hours, lr_hours=scheme.lr_hours)


def init_state(batch: TensorBatch) -> torch.Tensor:
    """Initial state: interpolated coarse block, zero anomaly blocks."""
    zeros = torch.zeros_like(batch.lr_init)
    return torch.cat([batch.lr_init, zeros, zeros], dim=1)


def state_frames(x: torch.Tensor, t: int, hours: tuple[int, ...] | None = None) -> torch.Tensor:
    """Hour slabs of the state: (N, 3, H, W) frames with one plane per block."""
    coarse, internal, anom_out = split_state(x, t)
    frames = torch.stack([coarse, internal, anom_out], dim=2)
    if hours is not None:
        frames = frames[:, list(hours)]
    return frames.flatten(0, 1)


def varcost_single(x: torch.Tensor, batch: TensorBatch, flow: nn.Module,
                   lam1: torch.Tensor, lam2: torch.Tensor) -> torch.Tensor:
    """Observation misfit on the observed entries plus the flow penalty.

    The coarse state block is compared with the coarse observations and the
    high-resolution readout with the gridded and point observations, each
    restricted to its mask; all terms are plain sums of squares.
    """
    t = batch.n_hours
    coarse = x[:, :t]
    readout = hr_readout(x, t)
    misfit = (batch.m_lr * (coarse - batch.y_lr) ** 2).sum()
    misfit = misfit + (batch.m_hr * (readout - batch.y_hr) ** 2).sum()
    misfit = misfit + (batch.m_situ * (readout - batch.y_situ) ** 2).sum()
    prior = ((x - flow(x)) ** 2).sum()
    return lam1 * misfit + lam2 * prior


def varcost_multi(x: torch.Tensor, batch: TensorBatch, flow: nn.Module,
                  lam1: torch.Tensor, lam2: torch.Tensor,
                  extractors: FeatureExtractors | None) -> torch.Tensor:
    """Variational cost with learned feature pairs on the non-coarse modalities.

    The coarse term stays a direct masked misfit.  The gridded term compares
    state features with observed-field features at the observed hours only;
    the point term compares site-sampled state features with the per-site
    series features.  Missing extractors fall back to the direct terms.
    """
    t = batch.n_hours
    coarse = x[:, :t]
    readout = hr_readout(x, t)
    misfit = (batch.m_lr * (coarse - batch.y_lr) ** 2).sum()

    use_2d = extractors is not None and hasattr(extractors, "state_2d") and len(batch.hr_hours) > 0
    if use_2d:
        frames = state_frames(x, t, batch.hr_hours)
        obs_frames = batch.y_hr[:, list(batch.hr_hours)].flatten(0, 1).unsqueeze(1)
        misfit = misfit + ((extractors.state_2d(frames) - extractors.obs_2d(obs_frames)) ** 2).sum()
    else:
        misfit = misfit + (batch.m_hr * (readout - batch.y_hr) ** 2).sum()

    has_situ = bool(batch.m_situ.any())
    use_pt = extractors is not None and hasattr(extractors, "state_pt") and has_situ
    if use_pt:
        frames = state_frames(x, t)
        feats = extractors.state_pt(frames, batch.site_rows, batch.site_cols)
        feats = feats.reshape(batch.size, t, feats.shape[-2], feats.shape[-1])
        # (N, T, sites, F) -> (N, sites, F, T) to match the series features
        feats = feats.permute(0, 2, 3, 1)
        obs_feats = extractors.obs_pt(batch.situ_series)
        misfit = misfit + ((feats - obs_feats) ** 2).sum()
    else:
        misfit = misfit + (batch.m_situ * (readout - batch.y_situ) ** 2).sum()

    prior = ((x - flow(x)) ** 2).sum()
    return lam1 * misfit + lam2 * prior


class AssimModel(nn.Module):
    """Unrolled trainable variational scheme for one sampling scheme."""

    def __init__(self, t: int, flow: nn.Module, solver: SolverStep,
                 cfg: VarCostConfig, extractors: FeatureExtractors | None = None,
                 lam_init: float = 1.0):
        super().__init__()
        if cfg.dft_mode == "multi" and extractors is None:
            raise ValueError("multi-modal cost needs feature extractors")
        self.t = t
        self.cfg = cfg
        self.flow = flow
        self.solver = solver
        self.extractors = extractors
        self.lam1 = nn.Parameter(torch.tensor(float(lam_init)))
        self.lam2 = nn.Parameter(torch.tensor(float(lam_init)))

    def varcost(self, x: torch.Tensor, batch: TensorBatch) -> torch.Tensor:
        if self.cfg.dft_mode == "single":
            return varcost_single(x, batch, self.flow, self.lam1, self.lam2)
        return varcost_multi(x, batch, self.flow, self.lam1, self.lam2, self.extractors)

    def solve(self, batch: TensorBatch, updater=None) -> torch.Tensor:
        """Iterate the solver from the interpolated initialization.

        ``updater``, if given, maps (gradient, iteration) to a state update
        and replaces the learned step; used for descent references.
        """
        unroll = self.training
        with torch.enable_grad():
            x = init_state(batch).requires_grad_(True)
            hidden = cell = None
            for k in range(self.cfg.n_iterations):
                cost = self.varcost(x, batch)
                if not torch.isfinite(cost):
                    raise DivergenceError(f"non-finite variational cost at iteration {k}")
                (grad,) = torch.autograd.grad(cost, x, create_graph=unroll)
                if updater is not None:
                    x = x + updater(grad, k)
                else:
                    if hidden is None:
                        hidden, cell = self.solver.init_state(x)
                    delta, hidden, cell = self.solver(grad, hidden, cell)
                    x = x + delta
        if not unroll:
            x = x.detach()
        return x

    def forward(self, batch: TensorBatch) -> tuple[torch.Tensor, torch.Tensor]:
        """Reconstructed (high-resolution, coarse) series for the batch."""
        x = self.solve(batch)
        return hr_readout(x, self.t), x[:, :self.t]


def descent_updater(step: float):
    """Plain gradient-descent update for solver references."""

    def update(grad: torch.Tensor, iteration: int) -> torch.Tensor:
        return -step * grad

    return update


def observation_filled_state(batch: TensorBatch) -> torch.Tensor:
    """Direct-inversion input: coarse interpolation plus observed anomalies.

    Both anomaly blocks carry the observed departures from the coarse
    initialization: the gridded values where observed, overwritten by the
    point values at the buoy pixels.
    """
    anom = batch.m_hr * (batch.y_hr - batch.lr_init)
    anom = torch.where(batch.m_situ > 0, batch.y_situ - batch.lr_init, anom)
    return torch.cat([batch.lr_init, anom, anom], dim=1)


class DirectInversion(nn.Module):
    """One-shot flow-operator inversion of the observation-filled state."""

    def __init__(self, t: int, flow: nn.Module):
        super().__init__()
        self.t = t
        self.flow = flow

    def forward(self, batch: TensorBatch) -> tuple[torch.Tensor, torch.Tensor]:
        x_in = observation_filled_state(batch)
        out = self.flow(x_in)
        _, _, anom_out = split_state(out, self.t)
        return batch.lr_init + anom_out, batch.lr_init
