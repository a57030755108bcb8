"""Campaign orchestration: data generation, training, evaluation, sweeps.

Artifacts live under one output directory:

    manifest.json                     resolved config and data inventory
    data/truth_<split>.wf             hourly truth series per split
    data/buoys.csv                    in-situ site table
    runs/<cell>/run<i>/               checkpoint and loss curve per run
    metrics.csv                       pooled RMSE and gains per cell and region
    sweep_*.csv, delta_e.csv          sensitivity outputs
    plots/*.svg                       figures
    summary.txt                       consolidated report

Every CSV starts with a ``# config_hash=...`` comment line; loaders refuse
inputs whose hash does not match the active configuration.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import evaluation, plots, synth
from .assim import AssimModel, DirectInversion, VarCostConfig
from .config import Cell, ConfigError, ExperimentConfig, RESOLUTION_GROUPS, cell_train_seed
from .grid import (BuoyNetwork, LandSeaMask, buoys_read, buoys_write,
                   default_buoys, field_read, field_write, synth_landsea)
from .models import FeatureExtractors, FeatureWidths, SolverStep, build_flow, load_checkpoint
from .obs import BiasSpec, SamplingScheme
from .synth import Dataset, split_days, window_split
from .training import SplitData, TrainConfig, prepare_split, train_one, run_seed, write_losses

METRICS_HEADER = ["campaign", "model", "config", "hr_period_h", "lr_group",
                  "region", "rmse_mps", "gain_pct", "baseline"]
BIAS_SWEEP_HEADER = ["bias_kind", "bias_value", "rmse_mps"]
BUOY_SWEEP_HEADER = ["buoy_id_or_zone", "degradation_pct"]
RESOLUTION_SWEEP_HEADER = ["model", "config", "hr_period_h", "lr_group", "delta_rmse_mps"]
DELTA_E_HEADER = ["flow", "rmse_direct_mps", "rmse_assim_mps", "delta_e_mps"]


class MissingInputError(RuntimeError):
    """An expected artifact is absent; maps to exit code 3."""


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else str(value)


def write_csv(path: Path, header: list[str], rows: list[tuple],
              config_hash: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path: Path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    if not Path(path).exists():
        raise MissingInputError(f"missing {path}")
    provenance = {}
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("# ") and "=" in line:
                key, value = line[2:].strip().split("=", 1)
                provenance[key] = value
            else:
                lines.append(line)
    reader = csv.reader(lines)
    header = next(reader, [])
    return provenance, header, [row for row in reader]


def check_hash(provenance: dict[str, str], cfg: ExperimentConfig, origin: str) -> None:
    found = provenance.get("config_hash")
    if found != cfg.config_hash:
        raise ConfigError(f"{origin} was produced under config hash {found}, "
                          f"expected {cfg.config_hash}; refusing mixed inputs")


# ---------------------------------------------------------------------------
# Layout

def manifest_path(out: Path) -> Path:
    return Path(out) / "manifest.json"


def data_dir(out: Path) -> Path:
    return Path(out) / "data"


def cell_dir(out: Path, slug: str) -> Path:
    return Path(out) / "runs" / slug


def plots_dir(out: Path) -> Path:
    return Path(out) / "plots"


# ---------------------------------------------------------------------------
# generate

def generate_campaign(cfg: ExperimentConfig, out: Path) -> dict:
    """Build the truth series, split it, and write the data inventory."""
    out = Path(out)
    landsea = synth_landsea(cfg.grid, cfg.coastline)
    series = synth.generate(cfg.synth, cfg.grid, landsea)
    blocks = split_days(series, cfg.split_days)
    ddir = data_dir(out)
    ddir.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, block in blocks.items():
        fname = f"truth_{name}.wf"
        field_write(block, ddir / fname)
        files[name] = f"data/{fname}"
    buoys = default_buoys(landsea)
    buoys_write(buoys, ddir / "buoys.csv")
    manifest = {
        "config_hash": cfg.config_hash,
        "campaign": cfg.campaign,
        "resolved": cfg.resolved,
        "split_days": dict(zip(synth.SPLIT_NAMES, cfg.split_days)),
        "split_samples": {name: max(block.shape[0] // 24 - 2, 0) for name, block in blocks.items()},
        "files": {**files, "buoys": "data/buoys.csv"},
    }
    with open(manifest_path(out), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def model_label(cell: Cell) -> str:
    """Model column value; variant tags keep cells distinguishable."""
    tags = [cell.model]
    if cell.bias == "random_delay":
        tags.append("rd")
    elif cell.bias == "random_remod":
        tags.append("ri")
    if cell.flow != "alpha":
        tags.append({"beta": "phib", "gamma": "phig"}[cell.flow])
    return "-".join(tags)


def metrics_key(cell: Cell, group: str, region: str) -> tuple[str, str, str, str, str]:
    """Row identity as it appears in metrics.csv."""
    return (model_label(cell),
            "" if cell.model == "B0" else cell.config,
            "" if cell.hr_period_h is None else str(cell.hr_period_h),
            group, region)


# ---------------------------------------------------------------------------
# environment loading

@dataclass
class Environment:
    """Shared state rebuilt from the data inventory."""

    landsea: LandSeaMask
    buoys: BuoyNetwork
    dataset: Dataset


def load_manifest(cfg: ExperimentConfig, out: Path) -> dict:
    path = manifest_path(out)
    if not path.exists():
        raise MissingInputError(f"no manifest under {out}; run generate first")
    with open(path) as fh:
        manifest = json.load(fh)
    check_hash({"config_hash": manifest.get("config_hash")}, cfg, str(path))
    return manifest


def load_environment(cfg: ExperimentConfig, out: Path) -> Environment:
    out = Path(out)
    manifest = load_manifest(cfg, out)
    landsea = synth_landsea(cfg.grid, cfg.coastline)
    splits = {}
    for name in synth.SPLIT_NAMES:
        path = out / manifest["files"][name]
        if not path.exists():
            raise MissingInputError(f"missing data file {path}")
        splits[name] = field_read(path)
    dataset = Dataset(splits={name: window_split(block) for name, block in splits.items()})
    dataset.norm_std = synth.fit_norm(dataset)
    buoys = buoys_read(out / manifest["files"]["buoys"])
    return Environment(landsea=landsea, buoys=buoys, dataset=dataset)


# ---------------------------------------------------------------------------
# cells and jobs

@dataclass(frozen=True)
class CellJob:
    """One trainable cell instance, possibly re-gridded for a group."""

    slug: str
    cell: Cell
    lr_stride_px: int
    lr_period_h: int
    group: str = ""

    def scheme(self, cfg: ExperimentConfig) -> SamplingScheme:
        return cfg.scheme_for(self.cell, lr_stride_px=self.lr_stride_px,
                              lr_period_h=self.lr_period_h)


def campaign_jobs(cfg: ExperimentConfig) -> list[CellJob]:
    """All cell instances of the campaign, training-relevant or not."""
    jobs = []
    if cfg.campaign == "resolution":
        for group, (stride, period) in cfg.resolution_groups().items():
            for cell in cfg.cells:
                jobs.append(CellJob(slug=f"{group}-{cell.slug()}", cell=cell,
                                    lr_stride_px=stride, lr_period_h=period, group=group))
    else:
        for cell in cfg.cells:
            jobs.append(CellJob(slug=cell.slug(), cell=cell,
                                lr_stride_px=cfg.lr_stride_px, lr_period_h=cfg.lr_period_h))
    return jobs


def build_cell_model(cfg: ExperimentConfig, cell: Cell, scheme: SamplingScheme,
                     t: int = 24):
    """Factory closure for a cell's model with the configured widths."""
    arch = cfg.arch
    width = arch.flow_width or None

    def build():
        flow = build_flow(cell.flow, t=t, width=width)
        if cell.model == "B1":
            return DirectInversion(t, flow)
        extractors = None
        if cell.model == "Mm":
            extractors = FeatureExtractors(
                scheme.active, FeatureWidths(arch.feat_channels, arch.feat_features))
        solver = SolverStep(t=t, input_width=arch.solver_input_width,
                            hidden_width=arch.solver_hidden_width)
        var_cfg = VarCostConfig(dft_mode=cell.dft_mode, n_iterations=cfg.varcost_iterations)
        return AssimModel(t, flow, solver, var_cfg, extractors=extractors)

    return build


def job_bias(job: CellJob) -> BiasSpec:
    return BiasSpec(kind=job.cell.bias)


def prepare_job_splits(env: Environment, job: CellJob, cfg: ExperimentConfig,
                       names: tuple[str, ...] = ("train", "val")) -> dict[str, SplitData]:
    scheme = job.scheme(cfg)
    return {name: prepare_split(env.dataset.splits[name], env.dataset.norm_std[name],
                                scheme, env.landsea, env.buoys)
            for name in names}


def train_cell_run(cfg: ExperimentConfig, out: Path, job: CellJob, run_index: int,
                   env: Environment | None = None) -> None:
    """Train one run of one cell and write its artifacts."""
    if env is None:
        env = load_environment(cfg, out)
    scheme = job.scheme(cfg)
    data = prepare_job_splits(env, job, cfg)
    seed = run_seed(cell_train_seed(cfg.train.base_seed, job.cell, scheme), run_index)
    rdir = cell_dir(out, job.slug) / f"run{run_index}"
    rdir.mkdir(parents=True, exist_ok=True)
    meta = {"config_hash": cfg.config_hash, "cell": job.slug}
    record, _ = train_one(
        build_cell_model(cfg, job.cell, scheme), data["train"], data["val"],
        scheme, env.landsea, env.buoys, cfg.train, job_bias(job),
        seed=seed, run_index=run_index, checkpoint_path=rdir / "checkpoint.wck",
        checkpoint_meta=meta, context=job.slug)
    write_losses(record, rdir / "losses.csv",
                 provenance={"config_hash": cfg.config_hash, "cell": job.slug})


def _train_job_entry(cfg: ExperimentConfig, out: str, job: CellJob,
                     run_index: int) -> tuple[str, float]:
    torch.set_num_threads(1)
    started = time.perf_counter()
    train_cell_run(cfg, out, job, run_index)
    return f"{job.slug}/run{run_index}", time.perf_counter() - started


def train_campaign(cfg: ExperimentConfig, out: Path, jobs: int = 1) -> list[str]:
    """Train every trainable cell of the campaign, ``jobs`` runs in parallel."""
    out = Path(out)
    env = load_environment(cfg, out)
    work = [(job, r) for job in campaign_jobs(cfg) if job.cell.trainable
            for r in range(cfg.train.runs)]
    done = []
    timings: dict[str, float] = {}
    if jobs <= 1:
        for job, r in work:
            started = time.perf_counter()
            train_cell_run(cfg, out, job, r, env=env)
            key = f"{job.slug}/run{r}"
            timings[key] = time.perf_counter() - started
            done.append(key)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_train_job_entry, cfg, str(out), job, r)
                       for job, r in work]
            for f in futures:
                key, elapsed = f.result()
                timings[key] = elapsed
                done.append(key)
    # wall-clock diagnostics; not covered by the determinism guarantee
    (out / "runs").mkdir(parents=True, exist_ok=True)
    with open(out / "runs" / "timings.json", "w") as fh:
        json.dump({k: round(v, 3) for k, v in sorted(timings.items())}, fh,
                  indent=2)
        fh.write("\n")
    for job in campaign_jobs(cfg):
        if not job.cell.trainable:
            continue
        scheme = job.scheme(cfg)
        cell_seed = cell_train_seed(cfg.train.base_seed, job.cell, scheme)
        info = {
            "cell": job.slug,
            "config_hash": cfg.config_hash,
            "runs": cfg.train.runs,
            "seeds": [run_seed(cell_seed, r) for r in range(cfg.train.runs)],
        }
        with open(cell_dir(out, job.slug) / "cell.json", "w") as fh:
            json.dump(info, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return done


# ---------------------------------------------------------------------------
# evaluation

def load_cell_ensemble(cfg: ExperimentConfig, out: Path, job: CellJob):
    """Rebuild the trained models of a cell from its checkpoints."""
    scheme = job.scheme(cfg)
    build = build_cell_model(cfg, job.cell, scheme)
    models = []
    for r in range(cfg.train.runs):
        path = cell_dir(out, job.slug) / f"run{r}" / "checkpoint.wck"
        if not path.exists():
            raise MissingInputError(f"missing checkpoint {path}; run train first")
        torch.manual_seed(0)
        model = build()
        meta = load_checkpoint(path, model)
        check_hash({"config_hash": meta.get("config_hash")}, cfg, str(path))
        model.eval()
        models.append(model)
    return models


def job_reconstructors(cfg: ExperimentConfig, out: Path, job: CellJob):
    if job.cell.model == "B0":
        return [evaluation.interp_reconstructor]
    return load_cell_ensemble(cfg, out, job)


def evaluate_campaign(cfg: ExperimentConfig, out: Path) -> list[tuple]:
    """Score every cell on the test split and write metrics and figures."""
    out = Path(out)
    env = load_environment(cfg, out)
    pdir = plots_dir(out)
    pdir.mkdir(parents=True, exist_ok=True)

    jobs = campaign_jobs(cfg)
    results: dict[str, dict[str, float]] = {}
    recons: dict[str, np.ndarray] = {}
    test_cache: dict[tuple[int, int, str, int | None], SplitData] = {}

    def test_data(job: CellJob) -> SplitData:
        scheme = job.scheme(cfg)
        key = (scheme.lr_stride_px, scheme.lr_period_h, scheme.config, scheme.hr_period_h)
        if key not in test_cache:
            test_cache[key] = prepare_split(env.dataset.splits["test"], env.dataset.norm_std["test"],
                                            scheme, env.landsea, env.buoys)
        return test_cache[key]

    for job in jobs:
        data = test_data(job)
        models = job_reconstructors(cfg, out, job)
        regional, recon = evaluation.evaluate_cell(models, data, env.landsea, env.buoys,
                                                   cfg.eval_batch_size)
        results[job.slug] = regional
        recons[job.slug] = recon

    baseline_slug = cfg.baseline.slug()

    def baseline_for(job: CellJob) -> str | None:
        slug = f"{job.group}-{baseline_slug}" if job.group else baseline_slug
        return slug if slug in results and slug != job.slug else None

    rows = []
    for job in jobs:
        ref = baseline_for(job)
        for region in evaluation.REGIONS:
            rmse = results[job.slug][region]
            gain = (evaluation.relative_gain(rmse, results[ref][region])
                    if ref is not None else None)
            label, config, hr, group, _ = metrics_key(job.cell, job.group, region)
            rows.append((cfg.campaign, label, config, hr or None, group, region,
                         rmse, gain, ref or ""))
    write_csv(out / "metrics.csv", METRICS_HEADER, rows, cfg.config_hash)
    _evaluate_plots(cfg, out, env, jobs, results, recons)
    return rows


def _evaluate_plots(cfg: ExperimentConfig, out: Path, env: Environment,
                    jobs: list[CellJob], results: dict, recons: dict) -> None:
    pdir = plots_dir(out)
    test_samples = env.dataset.splits["test"]
    if not test_samples:
        return
    truth0 = test_samples[0].gt24.data
    hour = 12
    plots.save_field(truth0[hour], pdir / "truth_hour12.svg",
                     title=f"truth, test day 0, {hour:02d}:00")
    labels = []
    values = []
    for job in jobs:
        recon = recons[job.slug]
        plots.save_field(recon[0, hour], pdir / f"recon_{job.slug}.svg",
                         title=f"{job.slug}, test day 0, {hour:02d}:00")
        err = np.abs(recon[0] - truth0).mean(axis=0)
        plots.save_field(err, pdir / f"error_{job.slug}.svg",
                         title=f"{job.slug}, mean |error|, test day 0", cmap="magma")
        labels.append(job.slug)
        values.append(results[job.slug]["full"])
    plots.save_bars(labels, np.array(values), pdir / "rmse_summary.svg",
                    ylabel="RMSE (m/s)", title="test RMSE, full region")


# ---------------------------------------------------------------------------
# sweeps

def sweep_campaign(cfg: ExperimentConfig, out: Path) -> list[Path]:
    out = Path(out)
    if cfg.campaign == "bias":
        return _sweep_bias(cfg, out)
    if cfg.campaign == "buoys":
        return _sweep_buoys(cfg, out)
    if cfg.campaign == "resolution":
        return _sweep_resolution(cfg, out)
    if cfg.campaign == "appendix":
        return _sweep_appendix(cfg, out)
    raise ConfigError(f"campaign {cfg.campaign!r} has no sweep stage")


def _sweep_bias(cfg: ExperimentConfig, out: Path) -> list[Path]:
    env = load_environment(cfg, out)
    pdir = plots_dir(out)
    pdir.mkdir(parents=True, exist_ok=True)
    written = []
    for job in campaign_jobs(cfg):
        if not job.cell.trainable:
            continue
        scheme = job.scheme(cfg)
        data = prepare_split(env.dataset.splits["test"], env.dataset.norm_std["test"],
                             scheme, env.landsea, env.buoys)
        models = load_cell_ensemble(cfg, out, job)
        rows = evaluation.bias_sweep(models, data, scheme, env.landsea, env.buoys,
                                     cfg.eval_batch_size)
        path = out / f"sweep_bias_{job.slug}.csv"
        write_csv(path, BIAS_SWEEP_HEADER, rows, cfg.config_hash)
        written.append(path)
        delay = [(v, r) for kind, v, r in rows if kind == "fixed_delay"]
        remod = [(v, r) for kind, v, r in rows if kind == "fixed_remod"]
        plots.save_curves([v for v, _ in delay], {job.slug: np.array([r for _, r in delay])},
                          pdir / f"bias_delay_{job.slug}.svg",
                          xlabel="coarse-input delay (h)", ylabel="RMSE (m/s)",
                          title="constant delay sweep")
        plots.save_curves([v for v, _ in remod], {job.slug: np.array([r for _, r in remod])},
                          pdir / f"bias_remod_{job.slug}.svg",
                          xlabel="coarse-input remodulation", ylabel="RMSE (m/s)",
                          title="constant remodulation sweep")
    return written


def _sweep_buoys(cfg: ExperimentConfig, out: Path) -> list[Path]:
    env = load_environment(cfg, out)
    pdir = plots_dir(out)
    pdir.mkdir(parents=True, exist_ok=True)
    written = []
    for job in campaign_jobs(cfg):
        if not job.cell.trainable:
            continue
        scheme = job.scheme(cfg)
        data = prepare_split(env.dataset.splits["test"], env.dataset.norm_std["test"],
                             scheme, env.landsea, env.buoys)
        models = load_cell_ensemble(cfg, out, job)
        rows = evaluation.buoy_sweep(models, data, env.landsea, env.buoys,
                                     cfg.eval_batch_size)
        path = out / f"sweep_buoys_{job.slug}.csv"
        write_csv(path, BUOY_SWEEP_HEADER, rows, cfg.config_hash)
        written.append(path)
        per_buoy = [(name, v) for name, v in rows if name.startswith("buoy:")]
        plots.save_bars([n for n, _ in rows], np.array([v for _, v in rows]),
                        pdir / f"buoy_degradation_{job.slug}.svg",
                        ylabel="degradation (% gain)", title=f"site removal, {job.slug}")
        gp = evaluation.gp_interpolate(
            env.buoys.rows, env.buoys.cols,
            np.array([v for _, v in per_buoy]),
            env.landsea.land.shape, env.landsea.spacing_km)
        field_write(gp.values.astype(np.float32)[None, :, :], out / f"gp_map_{job.slug}.wf")
        plots.save_field(gp.values, pdir / f"gp_map_{job.slug}.svg",
                         title=f"interpolated degradation, {job.slug}",
                         cmap="coolwarm", units="%")
    return written


def _metrics_lookup(cfg: ExperimentConfig, out: Path) -> dict[tuple, float]:
    provenance, header, rows = read_csv(out / "metrics.csv")
    check_hash(provenance, cfg, "metrics.csv")
    if header != METRICS_HEADER:
        raise ConfigError(f"unexpected metrics.csv header: {header}")
    table = {}
    for row in rows:
        rec = dict(zip(header, row))
        key = (rec["model"], rec["config"], rec["hr_period_h"], rec["lr_group"], rec["region"])
        table[key] = float(rec["rmse_mps"])
    return table


def _sweep_resolution(cfg: ExperimentConfig, out: Path) -> list[Path]:
    table = _metrics_lookup(cfg, out)
    pdir = plots_dir(out)
    pdir.mkdir(parents=True, exist_ok=True)
    rows = []
    curves = {}
    targets = [c for c in cfg.cells if c.model == "Mm"]
    for cell in targets:
        deltas = []
        for group in RESOLUTION_GROUPS:
            ref_key = metrics_key(cfg.baseline, group, "full")
            val_key = metrics_key(cell, group, "full")
            if ref_key not in table or val_key not in table:
                raise MissingInputError("metrics.csv lacks resolution rows; run evaluate first")
            delta = evaluation.delta_e(table[ref_key], table[val_key])
            rows.append((model_label(cell), cell.config, cell.hr_period_h, group, delta))
            deltas.append(delta)
        curves[cell.slug()] = np.array(deltas)
    path = out / "sweep_resolution.csv"
    write_csv(path, RESOLUTION_SWEEP_HEADER, rows, cfg.config_hash)
    plots.save_curves(np.arange(len(RESOLUTION_GROUPS)), curves, pdir / "resolution_curves.svg",
                      xlabel="coarse-observation group", ylabel="RMSE reduction vs reference (m/s)",
                      title="skill across coarse-observation settings",
                      xticks=np.arange(len(RESOLUTION_GROUPS)),
                      xticklabels=list(RESOLUTION_GROUPS))
    return [path]


def _sweep_appendix(cfg: ExperimentConfig, out: Path) -> list[Path]:
    table = _metrics_lookup(cfg, out)
    pdir = plots_dir(out)
    pdir.mkdir(parents=True, exist_ok=True)
    flows = []
    for cell in cfg.cells:
        if cell.model == "Mm" and cell.flow not in flows:
            flows.append(cell.flow)
    rows = []
    for flow in flows:
        direct = [c for c in cfg.cells if c.model == "B1" and c.flow == flow]
        assim = [c for c in cfg.cells if c.model == "Mm" and c.flow == flow]
        if not direct or not assim:
            raise ConfigError(f"appendix campaign needs a B1 and an Mm cell for flow {flow!r}")
        key_direct = metrics_key(direct[0], "", "full")
        key_assim = metrics_key(assim[0], "", "full")
        if key_direct not in table or key_assim not in table:
            raise MissingInputError("metrics.csv lacks appendix rows; run evaluate first")
        rows.append((flow, table[key_direct], table[key_assim],
                     evaluation.delta_e(table[key_direct], table[key_assim])))
    path = out / "delta_e.csv"
    write_csv(path, DELTA_E_HEADER, rows, cfg.config_hash)
    plots.save_bars([r[0] for r in rows], np.array([r[3] for r in rows]),
                    pdir / "delta_e.svg", ylabel="RMSE reduction (m/s)",
                    title="iterative scheme vs one-shot inversion per flow operator")
    return [path]


# ---------------------------------------------------------------------------
# report

def report_campaign(out: Path) -> str:
    """Consolidated text summary of whatever artifacts the directory holds."""
    out = Path(out)
    path = manifest_path(out)
    if not path.exists():
        raise MissingInputError(f"no manifest under {out}")
    with open(path) as fh:
        manifest = json.load(fh)
    expected = manifest.get("config_hash")
    lines = [
        "windosse campaign report",
        f"campaign: {manifest.get('campaign')}",
        f"config hash: {expected}",
        f"split days: {manifest.get('split_days')}",
        f"split samples: {manifest.get('split_samples')}",
        "",
    ]
    hashes = {expected}
    metrics = out / "metrics.csv"
    if metrics.exists():
        provenance, header, rows = read_csv(metrics)
        hashes.add(provenance.get("config_hash"))
        lines.append("test RMSE (m/s) and gain (%) per cell, full region:")
        for row in rows:
            rec = dict(zip(header, row))
            if rec["region"] != "full":
                continue
            name = "-".join(filter(None, [rec["lr_group"], rec["model"], rec["config"],
                                          rec["hr_period_h"] and rec["hr_period_h"] + "h"]))
            gain = f", gain {float(rec['gain_pct']):+.2f}% vs {rec['baseline']}" if rec["gain_pct"] else ""
            lines.append(f"  {name}: rmse {float(rec['rmse_mps']):.4f}{gain}")
        lines.append("")
    for sweep in sorted(out.glob("sweep_*.csv")) + [out / "delta_e.csv"]:
        if not sweep.exists():
            continue
        provenance, header, rows = read_csv(sweep)
        hashes.add(provenance.get("config_hash"))
        lines.append(f"{sweep.name}: {len(rows)} rows")
        for row in rows[:6]:
            lines.append("  " + ", ".join(row))
        if len(rows) > 6:
            lines.append(f"  ... {len(rows) - 6} more")
        lines.append("")
    hashes.discard(None)
    if len(hashes) > 1:
        raise ConfigError(f"mixed config hashes in {out}: {sorted(hashes)}")
    text = "\n".join(lines).rstrip() + "\n"
    with open(out / "summary.txt", "w") as fh:
        fh.write(text)
    return text
