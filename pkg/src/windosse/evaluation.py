"""Test-set evaluation: pooled error metrics, ensembles and sensitivity sweeps.

Reconstructions are aggregated over training runs by an elementwise median,
de-normalized, and scored with a pooled RMSE over samples, hours and the
pixels of a region (full grid, sea, land).  Skill is reported as a relative
gain in percent against a reference scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .assim import collate
from .grid import ZONES, BuoyNetwork, LandSeaMask
from .obs import BiasSpec, ObservationBundle, SamplingScheme, assemble, assemble_with_bias
from .synth import DaySample, denormalize
from .training import SplitData

REGIONS = ("full", "sea", "land")

GP_LENGTH_SCALE_KM = 30.0


def region_mask(landsea: LandSeaMask, region: str) -> np.ndarray:
    if region == "full":
        return np.ones(landsea.land.shape, dtype=bool)
    if region == "sea":
        return landsea.sea
    if region == "land":
        return landsea.land
    raise ValueError(f"unknown region {region!r}")


def rmse_masked(recon: np.ndarray, truth: np.ndarray, mask: np.ndarray) -> float:
    """Pooled RMSE over all samples and hours on the masked pixels."""
    if recon.shape != truth.shape:
        raise ValueError("reconstruction and truth shapes differ")
    if mask.shape != recon.shape[-2:]:
        raise ValueError("mask must match the field shape")
    if not mask.any():
        raise ValueError("empty region mask")
    diff = (recon.astype(np.float64) - truth.astype(np.float64))[..., mask]
    return float(np.sqrt(np.mean(np.square(diff))))


def relative_gain(rmse_model: float, rmse_reference: float) -> float:
    """Percent error reduction against a reference; negative when worse."""
    if not rmse_reference > 0:
        raise ValueError("reference RMSE must be positive")
    return (1.0 - rmse_model / rmse_reference) * 100.0


def median_aggregate(stack: np.ndarray) -> np.ndarray:
    """Elementwise median over the leading (run) axis."""
    stack = np.asarray(stack)
    if stack.ndim < 1 or stack.shape[0] < 1:
        raise ValueError("need at least one run to aggregate")
    return np.median(stack, axis=0)


def interp_reconstructor(batch) -> tuple[torch.Tensor, torch.Tensor]:
    """Training-free reference: the coarse interpolation is the reconstruction."""
    return batch.lr_init, batch.lr_init


def ensemble_median_recon(reconstructors, bundles: list[ObservationBundle],
                          buoys: BuoyNetwork, batch_size: int = 8) -> np.ndarray:
    """Median-over-runs reconstruction of every bundle, in input units."""
    if len(reconstructors) == 0:
        raise ValueError("need at least one reconstructor")
    chunks = []
    with torch.no_grad():
        for start in range(0, len(bundles), batch_size):
            batch = collate(bundles[start:start + batch_size], buoys)
            runs = []
            for model in reconstructors:
                x_hr, _ = model(batch)
                runs.append(x_hr.detach().cpu().numpy().astype(np.float64))
            chunks.append(median_aggregate(np.stack(runs)))
    return np.concatenate(chunks, axis=0)


def evaluate_regions(recon_phys: np.ndarray, truth_phys: np.ndarray,
                     landsea: LandSeaMask) -> dict[str, float]:
    """Pooled RMSE per region, physical units."""
    return {r: rmse_masked(recon_phys, truth_phys, region_mask(landsea, r)) for r in REGIONS}


def evaluate_cell(reconstructors, data: SplitData, landsea: LandSeaMask,
                  buoys: BuoyNetwork, batch_size: int = 8) -> tuple[dict[str, float], np.ndarray]:
    """Region RMSEs of the de-normalized ensemble median plus the median itself."""
    recon = ensemble_median_recon(reconstructors, data.bundles, buoys, batch_size)
    recon_phys = denormalize(recon, data.std)
    truth_phys = np.stack([denormalize(s.gt24.data, data.std) for s in data.samples])
    return evaluate_regions(recon_phys, truth_phys, landsea), recon_phys


DELAY_SWEEP_H = tuple(range(-4, 5))
REMOD_SWEEP = tuple(round(0.5 + k / 10, 1) for k in range(11))


def bias_sweep(reconstructors, data: SplitData, scheme: SamplingScheme,
               landsea: LandSeaMask, buoys: BuoyNetwork,
               batch_size: int = 8) -> list[tuple[str, float, float]]:
    """Full-region RMSE under a constant coarse-modality bias.

    Returns (kind, value, rmse) rows: nine delay settings from -4 h to +4 h,
    then eleven remodulation factors from 0.5 to 1.5.
    """
    truth_phys = np.stack([denormalize(s.gt24.data, data.std) for s in data.samples])
    full = region_mask(landsea, "full")
    rows = []
    for kind, values in (("fixed_delay", DELAY_SWEEP_H), ("fixed_remod", REMOD_SWEEP)):
        for value in values:
            if kind == "fixed_delay":
                bias = BiasSpec(kind=kind, delay_h=int(value))
            else:
                bias = BiasSpec(kind=kind, remod=float(value))
            bundles = [assemble_with_bias(s, scheme, landsea, buoys, bias) for s in data.samples]
            recon = ensemble_median_recon(reconstructors, bundles, buoys, batch_size)
            recon_phys = denormalize(recon, data.std)
            rows.append((kind, float(value), rmse_masked(recon_phys, truth_phys, full)))
    return rows


def remove_sites(bundle: ObservationBundle, rows: np.ndarray, cols: np.ndarray) -> ObservationBundle:
    """Copy of a bundle with the given point sites hidden."""
    y_situ = bundle.y_situ.copy()
    m_situ = bundle.m_situ.copy()
    y_situ[:, rows, cols] = 0.0
    m_situ[:, rows, cols] = False
    return ObservationBundle(y_lr=bundle.y_lr, y_hr=bundle.y_hr, y_situ=y_situ,
                             m_lr=bundle.m_lr, m_hr=bundle.m_hr, m_situ=m_situ,
                             scheme=bundle.scheme)


def removal_rmse(reconstructors, data: SplitData, landsea: LandSeaMask,
                 buoys: BuoyNetwork, removed: list, batch_size: int = 8) -> float:
    """Full-region RMSE with the listed buoys hidden from the bundles."""
    rows = np.array([b.row for b in removed], dtype=np.int64)
    cols = np.array([b.col for b in removed], dtype=np.int64)
    if len(removed) == 0:
        bundles = data.bundles
    else:
        bundles = [remove_sites(b, rows, cols) for b in data.bundles]
    truth_phys = np.stack([denormalize(s.gt24.data, data.std) for s in data.samples])
    recon = ensemble_median_recon(reconstructors, bundles, buoys, batch_size)
    recon_phys = denormalize(recon, data.std)
    return rmse_masked(recon_phys, truth_phys, region_mask(landsea, "full"))


def buoy_sweep(reconstructors, data: SplitData, landsea: LandSeaMask,
               buoys: BuoyNetwork, batch_size: int = 8) -> list[tuple[str, float]]:
    """Degradation in percent when hiding each buoy, then each whole zone.

    Degradation is the relative gain of the degraded run against the
    all-buoys run, so losing information gives negative values.
    """
    base = removal_rmse(reconstructors, data, landsea, buoys, [], batch_size)
    rows = []
    for buoy in buoys:
        rmse = removal_rmse(reconstructors, data, landsea, buoys, [buoy], batch_size)
        rows.append((f"buoy:{buoy.id}", relative_gain(rmse, base)))
    for zone in ZONES:
        removed = list(buoys.in_zone(zone))
        rmse = removal_rmse(reconstructors, data, landsea, buoys, removed, batch_size)
        rows.append((f"zone:{zone}", relative_gain(rmse, base)))
    return rows


@dataclass
class DegradationMap:
    """Gaussian-process interpolation of per-site degradations over the grid."""

    values: np.ndarray
    site_rows: np.ndarray
    site_cols: np.ndarray
    site_values: np.ndarray
    length_scale_km: float


def gp_interpolate(site_rows: np.ndarray, site_cols: np.ndarray, site_values: np.ndarray,
                   shape: tuple[int, int], spacing_km: float,
                   length_scale_km: float = GP_LENGTH_SCALE_KM) -> DegradationMap:
    """Noise-free squared-exponential interpolation with a constant prior mean.

    The prior mean is the site-value mean, so the map relaxes to it far from
    any site and matches the site values exactly at their pixels.
    """
    rows = np.asarray(site_rows, dtype=np.float64)
    cols = np.asarray(site_cols, dtype=np.float64)
    values = np.asarray(site_values, dtype=np.float64)
    if rows.shape != cols.shape or rows.shape != values.shape:
        raise ValueError("site arrays must share a shape")
    if rows.size == 0:
        raise ValueError("need at least one site")
    if len({(r, c) for r, c in zip(rows.tolist(), cols.tolist())}) != rows.size:
        raise ValueError("duplicate site positions make the kernel singular")
    scale_px = length_scale_km / spacing_km

    def kernel(ar, ac, br, bc):
        d2 = (ar[:, None] - br[None, :]) ** 2 + (ac[:, None] - bc[None, :]) ** 2
        return np.exp(-d2 / (2.0 * scale_px ** 2))

    mean = values.mean()
    weights = np.linalg.solve(kernel(rows, cols, rows, cols), values - mean)
    h, w = shape
    gr, gc = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    cross = kernel(gr.ravel(), gc.ravel(), rows, cols)
    field = (cross @ weights + mean).reshape(h, w)
    return DegradationMap(values=field, site_rows=rows.astype(np.int64), site_cols=cols.astype(np.int64),
                          site_values=values, length_scale_km=length_scale_km)


def delta_e(rmse_direct: float, rmse_assim: float) -> float:
    """Error reduction of the iterative scheme over the one-shot inversion."""
    return rmse_direct - rmse_assim


def unbiased_bundles(samples: list[DaySample], scheme: SamplingScheme,
                     landsea: LandSeaMask, buoys: BuoyNetwork) -> list[ObservationBundle]:
    return [assemble(s, scheme, landsea, buoys) for s in samples]
