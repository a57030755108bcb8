"""Ensemble training of the reconstruction schemes.

Each run owns a seed, an independently initialized model and an Adam
optimizer with per-group learning rates and weight decays.  The loss sums,
over the 24 h window, per-pixel mean squared errors of the coarse and
high-resolution reconstructions plus the squared spatial-gradient error of
the latter.  Validation selects the checkpoint.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .assim import DivergenceError, TensorBatch, collate
from .grid import BuoyNetwork, FieldSeries, LandSeaMask
from .models import parameter_groups, save_checkpoint
from .obs import BiasSpec, ObservationBundle, SamplingScheme, assemble, assemble_with_bias, downsample_reinterp
from .synth import DaySample, normalize

OPTIM_GROUPS = ("flow", "solver", "extractors", "weights")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings; learning rates and decays are per group."""

    epochs: int = 50
    batch_size: int = 4
    runs: int = 10
    base_seed: int = 20240
    lr_flow: float = 5e-5
    wd_flow: float = 1e-7
    lr_solver: float = 9e-5
    wd_solver: float = 1e-8
    lr_extractors: float = 1e-4
    wd_extractors: float = 1e-7
    lr_weights: float = 1e-4
    wd_weights: float = 1e-5

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.runs < 1 or self.batch_size < 1:
            raise ValueError("invalid training sizes")

    def group_settings(self, group: str) -> tuple[float, float]:
        return {
            "flow": (self.lr_flow, self.wd_flow),
            "solver": (self.lr_solver, self.wd_solver),
            "extractors": (self.lr_extractors, self.wd_extractors),
            "weights": (self.lr_weights, self.wd_weights),
        }[group]


def run_seed(base_seed: int, run_index: int) -> int:
    """Per-run seed: base seed XOR run index."""
    if run_index < 0:
        raise ValueError("run_index must be non-negative")
    return base_seed ^ run_index


def spatial_gradient(fields: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-pixel (d/drow, d/dcol): central differences inside, one-sided at borders."""

    def along(axis: int) -> torch.Tensor:
        n = fields.shape[axis]
        if n < 2:
            raise ValueError("need at least 2 pixels along each axis")
        first = fields.narrow(axis, 1, 1) - fields.narrow(axis, 0, 1)
        inner = (fields.narrow(axis, 2, n - 2) - fields.narrow(axis, 0, n - 2)) / 2
        last = fields.narrow(axis, n - 1, 1) - fields.narrow(axis, n - 2, 1)
        return torch.cat([first, inner, last], dim=axis)

    return along(-2), along(-1)


def training_loss(x_hr: torch.Tensor, x_lr: torch.Tensor,
                  u_hr: torch.Tensor, u_lr: torch.Tensor) -> torch.Tensor:
    """Batch mean of the per-window sum of hourly per-pixel mean errors."""

    def mse_frames(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        return ((a - b) ** 2).mean(dim=(-2, -1)).sum(dim=-1)

    gr_x, gc_x = spatial_gradient(x_hr)
    gr_u, gc_u = spatial_gradient(u_hr)
    grad_err = ((gr_x - gr_u) ** 2 + (gc_x - gc_u) ** 2).mean(dim=(-2, -1)).sum(dim=-1)
    return (mse_frames(x_lr, u_lr) + mse_frames(x_hr, u_hr) + grad_err).mean()


@dataclass
class SplitData:
    """Normalized samples of one split with their unbiased observation bundles."""

    samples: list[DaySample]
    bundles: list[ObservationBundle]
    std: float


def normalize_sample(sample: DaySample, std: float) -> DaySample:
    return DaySample(
        gt36=FieldSeries(normalize(sample.gt36.data, std), t0_hour=sample.gt36.t0_hour),
        gt24=FieldSeries(normalize(sample.gt24.data, std), t0_hour=0),
        day_index=sample.day_index,
    )


def prepare_split(samples: list[DaySample], std: float, scheme: SamplingScheme,
                  landsea: LandSeaMask, buoys: BuoyNetwork) -> SplitData:
    normalized = [normalize_sample(s, std) for s in samples]
    bundles = [assemble(s, scheme, landsea, buoys) for s in normalized]
    return SplitData(samples=normalized, bundles=bundles, std=std)


def batch_targets(samples: list[DaySample], stride: int,
                  dtype: torch.dtype = torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
    """(u_hr, u_lr) targets: the day window and its per-frame coarsening."""
    gt = np.stack([s.gt24.data for s in samples])
    u_lr = downsample_reinterp(gt, stride).astype(np.float32)
    return torch.from_numpy(gt).to(dtype), torch.from_numpy(u_lr).to(dtype)


@dataclass
class RunRecord:
    """Loss curve and checkpoint selection of one training run."""

    run_index: int
    seed: int
    epochs: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")

    def record(self, epoch: int, train_loss: float, val_loss: float) -> bool:
        self.epochs.append((epoch, train_loss, val_loss))
        if val_loss < self.best_val_loss:
            self.best_epoch = epoch
            self.best_val_loss = val_loss
            return True
        return False


def write_losses(record: RunRecord, path: str | Path,
                 provenance: dict[str, str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        for key, value in (provenance or {}).items():
            fh.write(f"# {key}={value}\n")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, train_loss, val_loss in record.epochs:
            writer.writerow([epoch, repr(train_loss), repr(val_loss)])


def read_losses(path: str | Path) -> list[tuple[int, float, float]]:
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header != ["epoch", "train_loss", "val_loss"]:
        raise ValueError(f"unexpected loss-curve header: {header}")
    for epoch, train_loss, val_loss in reader:
        rows.append((int(epoch), float(train_loss), float(val_loss)))
    return rows


def build_optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.Adam:
    """Adam over the model's parameter groups; decay lives in the optimizer."""
    groups = parameter_groups(model)
    param_groups = []
    for name in OPTIM_GROUPS:
        if name not in groups:
            continue
        lr, wd = cfg.group_settings(name)
        param_groups.append({"params": [p for _, p in groups[name]], "lr": lr, "weight_decay": wd})
    return torch.optim.Adam(param_groups)


def _epoch_bundles(data: SplitData, scheme: SamplingScheme, landsea: LandSeaMask,
                   buoys: BuoyNetwork, bias: BiasSpec,
                   rng: np.random.Generator) -> list[ObservationBundle]:
    if bias.kind == "none":
        return data.bundles
    return [assemble_with_bias(s, scheme, landsea, buoys, bias, rng) for s in data.samples]


def _dataset_loss(model: nn.Module, data: SplitData, scheme: SamplingScheme,
                  buoys: BuoyNetwork, batch_size: int) -> float:
    model.eval()
    total = 0.0
    count = 0
    with torch.no_grad():
        for start in range(0, len(data.samples), batch_size):
            sel = slice(start, start + batch_size)
            batch = collate(data.bundles[sel], buoys)
            u_hr, u_lr = batch_targets(data.samples[sel], scheme.lr_stride_px)
            x_hr, x_lr = model(batch)
            loss = training_loss(x_hr.detach(), x_lr.detach(), u_hr, u_lr)
            n = batch.size
            total += float(loss) * n
            count += n
    return total / count


def train_one(build_model, train_data: SplitData, val_data: SplitData,
              scheme: SamplingScheme, landsea: LandSeaMask, buoys: BuoyNetwork,
              cfg: TrainConfig, bias: BiasSpec, seed: int, run_index: int = 0,
              checkpoint_path: str | Path | None = None,
              checkpoint_meta: dict | None = None,
              context: str = "") -> tuple[RunRecord, nn.Module]:
    """One seeded training run; returns its record and the best model.

    The checkpoint, when a path is given, always holds the parameters of the
    best validation epoch (epoch 0, the untrained model, competes too).
    """
    torch.manual_seed(seed)
    model = build_model()
    rng = np.random.default_rng(seed)
    optimizer = build_optimizer(model, cfg)
    record = RunRecord(run_index=run_index, seed=seed)
    stride = scheme.lr_stride_px

    def checkpoint() -> None:
        if checkpoint_path is not None:
            meta = dict(checkpoint_meta or {})
            meta.update({"run_index": run_index, "seed": seed, "best_epoch": record.best_epoch})
            save_checkpoint(checkpoint_path, model, meta)

    best_state = None

    def snapshot() -> None:
        nonlocal best_state
        best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}

    initial_train = _dataset_loss(model, train_data, scheme, buoys, cfg.batch_size)
    initial_val = _dataset_loss(model, val_data, scheme, buoys, cfg.batch_size)
    record.record(0, initial_train, initial_val)
    snapshot()

    n = len(train_data.samples)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        bundles = _epoch_bundles(train_data, scheme, landsea, buoys, bias, rng)
        model.train()
        epoch_total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size].tolist()
            batch = collate([bundles[i] for i in idx], buoys)
            u_hr, u_lr = batch_targets([train_data.samples[i] for i in idx], stride)
            x_hr, x_lr = model(batch)
            loss = training_loss(x_hr, x_lr, u_hr, u_lr)
            if not torch.isfinite(loss):
                raise DivergenceError(
                    f"non-finite training loss ({context} run {run_index} epoch {epoch} batch {start // cfg.batch_size})")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_total += float(loss.detach()) * len(idx)
        val_loss = _dataset_loss(model, val_data, scheme, buoys, cfg.batch_size)
        if record.record(epoch, epoch_total / n, val_loss):
            snapshot()

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    checkpoint()
    return record, model


def train_ensemble(build_model, train_data: SplitData, val_data: SplitData,
                   scheme: SamplingScheme, landsea: LandSeaMask, buoys: BuoyNetwork,
                   cfg: TrainConfig, bias: BiasSpec, cell_seed: int,
                   run_dir: str | Path | None = None,
                   checkpoint_meta: dict | None = None,
                   provenance: dict[str, str] | None = None,
                   context: str = "") -> tuple[list[RunRecord], list[nn.Module]]:
    """Independent seeded runs; artifacts land under ``run_dir/run<i>/``."""
    records = []
    models = []
    for r in range(cfg.runs):
        ckpt = None
        if run_dir is not None:
            rdir = Path(run_dir) / f"run{r}"
            rdir.mkdir(parents=True, exist_ok=True)
            ckpt = rdir / "checkpoint.wck"
        record, model = train_one(build_model, train_data, val_data, scheme, landsea,
                                  buoys, cfg, bias, seed=run_seed(cell_seed, r),
                                  run_index=r, checkpoint_path=ckpt,
                                  checkpoint_meta=checkpoint_meta, context=context)
        if run_dir is not None:
            write_losses(record, Path(run_dir) / f"run{r}" / "losses.csv", provenance)
        records.append(record)
        models.append(model)
    return records, models
