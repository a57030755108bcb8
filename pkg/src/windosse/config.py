"""Experiment configuration: INI files, profiles, cells and the config hash.

Values resolve in three layers: profile defaults, then the config file, then
command-line overrides.  The resolved configuration hashes to a hex digest
carried by every artifact; orchestration-only keys (campaign name, cell
list, reference cell) stay outside the hash so artifacts remain comparable
across campaigns that share the same data and training settings.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .grid import CoastlineSpec, Grid
from .obs import SamplingScheme
from .synth import SynthSpec
from .training import TrainConfig

PROFILES = ("full", "desk")
CAMPAIGNS = ("benchmark", "bias", "buoys", "resolution", "appendix")
MODELS = ("B0", "B1", "Ms", "Mm")
BIAS_TAGS = {"rd": "random_delay", "ri": "random_remod"}
FLOW_TAGS = {"phia": "alpha", "phib": "beta", "phig": "gamma"}
RESOLUTION_GROUPS = ("A", "B", "C", "D")


class ConfigError(ValueError):
    """Raised for malformed configuration input; maps to exit code 2."""


@dataclass(frozen=True)
class Cell:
    """One experiment cell: scheme kind, observation config and variants."""

    model: str
    config: str = "SR"
    hr_period_h: int | None = None
    bias: str = "none"
    flow: str = "alpha"

    @property
    def trainable(self) -> bool:
        return self.model in ("B1", "Ms", "Mm")

    @property
    def dft_mode(self) -> str:
        return "multi" if self.model == "Mm" else "single"

    def slug(self) -> str:
        parts = [self.model]
        if self.model != "B0":
            parts.append(self.config)
            if self.hr_period_h is not None:
                parts.append(f"{self.hr_period_h}h")
            if self.bias == "random_delay":
                parts.append("rd")
            elif self.bias == "random_remod":
                parts.append("ri")
            if self.flow != "alpha":
                parts.append({"beta": "phib", "gamma": "phig"}[self.flow])
        return "-".join(parts)


def parse_cell(text: str, default_hr_period_h: int) -> Cell:
    """Parse ``MODEL[:CONFIG[:HR]][:rd|:ri][:phia|:phib|:phig]``."""
    tokens = text.split(":")
    model = tokens.pop(0)
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r} in cell {text!r}")
    if model == "B0":
        if tokens:
            raise ConfigError(f"cell {text!r}: B0 takes no variants")
        return Cell(model="B0")
    config = "SR"
    if tokens and tokens[0] in ("SR", "C1", "C2", "C3"):
        config = tokens.pop(0)
    hr: int | None = None
    if tokens and tokens[0].isdigit():
        hr = int(tokens.pop(0))
    bias = "none"
    flow = "alpha"
    for tok in tokens:
        if tok in BIAS_TAGS:
            bias = BIAS_TAGS[tok]
        elif tok in FLOW_TAGS:
            flow = FLOW_TAGS[tok]
        else:
            raise ConfigError(f"cell {text!r}: unknown token {tok!r}")
    has_hr = config in ("C1", "C3")
    if has_hr and hr is None:
        hr = default_hr_period_h
    if not has_hr and hr is not None:
        raise ConfigError(f"cell {text!r}: config {config} has no gridded high-resolution modality")
    if model == "Mm" and config == "SR":
        raise ConfigError(f"cell {text!r}: the multi-modal scheme needs a non-coarse modality")
    return Cell(model=model, config=config, hr_period_h=hr, bias=bias, flow=flow)


@dataclass(frozen=True)
class ArchConfig:
    """Network widths; ``flow_width`` 0 keeps each flow variant's default."""

    flow_width: int = 0
    solver_input_width: int = 96
    solver_hidden_width: int = 96
    feat_channels: int = 16
    feat_features: int = 16


# Section -> key -> (type, full-profile default).
SCHEMA: dict[str, dict[str, tuple[type, str]]] = {
    "grid": {
        "height": (int, "215"),
        "width": (int, "215"),
        "spacing_km": (float, "3.0"),
        "coast_base_col": (float, "54"),
        "coast_amplitude_px": (float, "6"),
        "coast_wavelength_px": (float, "64"),
        "coast_phase": (float, "0.0"),
    },
    "synth": {
        "seed": (int, "777"),
        "n_days": (int, "732"),
        "split_train": (int, "432"),
        "split_test": (int, "200"),
        "split_val": (int, "100"),
        "base_speed_mps": (float, "8.0"),
        "anomaly_amplitude_mps": (float, "2.0"),
        "spectral_slope": (float, "3.0"),
        "advection_col_px_per_h": (float, "1.0"),
        "advection_row_px_per_h": (float, "0.5"),
        "diurnal_amplitude": (float, "0.25"),
        "diurnal_peak_hour": (float, "15.0"),
        "shelter_strength": (float, "0.5"),
    },
    "sampling": {
        "lr_period_h": (int, "6"),
        "lr_stride_px": (int, "10"),
        "hr_period_h": (int, "12"),
    },
    "varcost": {
        "n_iterations": (int, "5"),
    },
    "train": {
        "epochs": (int, "50"),
        "batch_size": (int, "4"),
        "runs": (int, "10"),
        "base_seed": (int, "20240"),
        "eval_batch_size": (int, "8"),
        "lr_flow": (float, "5e-5"),
        "wd_flow": (float, "1e-7"),
        "lr_solver": (float, "9e-5"),
        "wd_solver": (float, "1e-8"),
        "lr_extractors": (float, "1e-4"),
        "wd_extractors": (float, "1e-7"),
        "lr_weights": (float, "1e-4"),
        "wd_weights": (float, "1e-5"),
    },
    "arch": {
        "flow_width": (int, "0"),
        "solver_input_width": (int, "96"),
        "solver_hidden_width": (int, "96"),
        "feat_channels": (int, "16"),
        "feat_features": (int, "16"),
    },
    "campaign": {
        "name": (str, "benchmark"),
        "profile": (str, "full"),
        "cells": (str, "B0 B1:SR Ms:C3:12 Mm:C1:12 Mm:C3:12"),
        "baseline": (str, "B1:SR"),
        "res_strides_px": (str, "10 33"),
        "res_periods_h": (str, "6 1"),
    },
}

PROFILE_OVERRIDES: dict[str, dict[tuple[str, str], str]] = {
    "full": {},
    "desk": {
        ("grid", "height"): "64",
        ("grid", "width"): "64",
        ("grid", "coast_base_col"): "16",
        ("grid", "coast_amplitude_px"): "3",
        ("grid", "coast_wavelength_px"): "32",
        ("synth", "n_days"): "96",
        ("synth", "split_train"): "64",
        ("synth", "split_test"): "16",
        ("synth", "split_val"): "16",
        ("sampling", "lr_stride_px"): "4",
        ("train", "epochs"): "15",
        ("train", "runs"): "5",
        # Unit batches double the optimizer steps of the short 15-epoch
        # schedule; the raised solver/extractor/weight rates and narrow
        # extractors let the assimilation cells mature within it.
        ("train", "batch_size"): "1",
        ("train", "lr_flow"): "5e-4",
        ("train", "wd_flow"): "1e-7",
        ("train", "lr_solver"): "1.35e-3",
        ("train", "wd_solver"): "1e-8",
        ("train", "lr_extractors"): "3e-3",
        ("train", "wd_extractors"): "1e-7",
        ("train", "lr_weights"): "1.5e-3",
        ("train", "wd_weights"): "1e-5",
        ("arch", "solver_input_width"): "32",
        ("arch", "solver_hidden_width"): "32",
        ("arch", "feat_channels"): "4",
        ("arch", "feat_features"): "4",
        ("campaign", "profile"): "desk",
        ("campaign", "cells"): "B0 B1:SR Mm:C1:12 Mm:C3:12",
        ("campaign", "res_strides_px"): "4 8",
    },
}

# Orchestration-only keys: not part of the artifact identity.
HASH_EXCLUDED = {("campaign", "name"), ("campaign", "profile"),
                 ("campaign", "cells"), ("campaign", "baseline")}


def _canonical(kind: type, raw: str, section: str, key: str) -> str:
    try:
        if kind is int:
            return str(int(raw))
        if kind is float:
            return repr(float(raw))
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from exc
    return raw.strip()


def _read_file(path: str | Path) -> dict[tuple[str, str], str]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            values[(section, key)] = raw
    return values


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment description."""

    grid: Grid
    coastline: CoastlineSpec
    synth: SynthSpec
    split_days: tuple[int, int, int]
    lr_period_h: int
    lr_stride_px: int
    hr_period_h: int
    varcost_iterations: int
    train: TrainConfig
    arch: ArchConfig
    campaign: str
    profile: str
    cells: tuple[Cell, ...]
    baseline: Cell
    res_strides_px: tuple[int, ...]
    res_periods_h: tuple[int, ...]
    eval_batch_size: int
    config_hash: str
    resolved: dict

    def scheme_for(self, cell: Cell, lr_stride_px: int | None = None,
                   lr_period_h: int | None = None) -> SamplingScheme:
        """Sampling scheme of a cell, optionally re-gridded for a group."""
        config = "SR" if cell.model == "B0" else cell.config
        hr = cell.hr_period_h if cell.model != "B0" else None
        return SamplingScheme(
            config=config,
            lr_period_h=self.lr_period_h if lr_period_h is None else lr_period_h,
            lr_stride_px=self.lr_stride_px if lr_stride_px is None else lr_stride_px,
            hr_period_h=hr,
        )

    def resolution_groups(self) -> dict[str, tuple[int, int]]:
        """Group label -> (lr_stride_px, lr_period_h), strides major."""
        pairs = [(s, p) for s in self.res_strides_px for p in self.res_periods_h]
        return dict(zip(RESOLUTION_GROUPS, pairs))


def _campaign_checks(campaign: str, cells: tuple[Cell, ...], baseline: Cell) -> None:
    if campaign == "buoys":
        for cell in cells:
            if cell.trainable and cell.config != "C3":
                raise ConfigError("the buoys campaign needs every trainable cell on config C3")
    if campaign == "resolution":
        if not any(c.model == "B1" and c.config == "SR" for c in cells):
            raise ConfigError("the resolution campaign needs a B1:SR cell as the per-group reference")
    if campaign == "bias":
        if not any(c.bias != "none" for c in cells):
            raise ConfigError("the bias campaign needs at least one rd or ri cell")
    if baseline.model != "B0" and not baseline.trainable:
        raise ConfigError(f"invalid reference cell {baseline.slug()}")


def resolve_config(path: str | Path | None, profile: str | None = None,
                   overrides: dict[tuple[str, str], str] | None = None) -> ExperimentConfig:
    """Layer profile defaults, the config file and overrides into a config."""
    file_values = _read_file(path) if path is not None else {}
    profile_name = profile or file_values.get(("campaign", "profile"), "full")
    if profile_name not in PROFILES:
        raise ConfigError(f"unknown profile {profile_name!r}")

    resolved: dict[tuple[str, str], str] = {}
    for section, keys in SCHEMA.items():
        for key, (kind, default) in keys.items():
            raw = PROFILE_OVERRIDES[profile_name].get((section, key), default)
            raw = file_values.get((section, key), raw)
            if overrides and (section, key) in overrides:
                raw = overrides[(section, key)]
            resolved[(section, key)] = _canonical(kind, raw, section, key)
    if profile is not None:
        resolved[("campaign", "profile")] = profile

    def geti(section: str, key: str) -> int:
        return int(resolved[(section, key)])

    def getf(section: str, key: str) -> float:
        return float(resolved[(section, key)])

    try:
        grid = Grid(geti("grid", "height"), geti("grid", "width"), getf("grid", "spacing_km"))
        coastline = CoastlineSpec(
            base_col=getf("grid", "coast_base_col"),
            amplitude_px=getf("grid", "coast_amplitude_px"),
            wavelength_px=getf("grid", "coast_wavelength_px"),
            phase=getf("grid", "coast_phase"),
        )
        synth = SynthSpec(
            seed=geti("synth", "seed"),
            n_days=geti("synth", "n_days"),
            base_speed_mps=getf("synth", "base_speed_mps"),
            anomaly_amplitude_mps=getf("synth", "anomaly_amplitude_mps"),
            spectral_slope=getf("synth", "spectral_slope"),
            advection_px_per_h=(getf("synth", "advection_col_px_per_h"),
                                getf("synth", "advection_row_px_per_h")),
            diurnal_amplitude=getf("synth", "diurnal_amplitude"),
            diurnal_peak_hour=getf("synth", "diurnal_peak_hour"),
            shelter_strength=getf("synth", "shelter_strength"),
        )
        split_days = (geti("synth", "split_train"), geti("synth", "split_test"), geti("synth", "split_val"))
        if sum(split_days) != synth.n_days:
            raise ConfigError(f"split days {split_days} do not sum to n_days {synth.n_days}")
        train = TrainConfig(
            epochs=geti("train", "epochs"),
            batch_size=geti("train", "batch_size"),
            runs=geti("train", "runs"),
            base_seed=geti("train", "base_seed"),
            lr_flow=getf("train", "lr_flow"), wd_flow=getf("train", "wd_flow"),
            lr_solver=getf("train", "lr_solver"), wd_solver=getf("train", "wd_solver"),
            lr_extractors=getf("train", "lr_extractors"), wd_extractors=getf("train", "wd_extractors"),
            lr_weights=getf("train", "lr_weights"), wd_weights=getf("train", "wd_weights"),
        )
        arch = ArchConfig(
            flow_width=geti("arch", "flow_width"),
            solver_input_width=geti("arch", "solver_input_width"),
            solver_hidden_width=geti("arch", "solver_hidden_width"),
            feat_channels=geti("arch", "feat_channels"),
            feat_features=geti("arch", "feat_features"),
        )
        campaign = resolved[("campaign", "name")]
        if campaign not in CAMPAIGNS:
            raise ConfigError(f"unknown campaign {campaign!r}")
        default_hr = geti("sampling", "hr_period_h")
        cells = tuple(parse_cell(tok, default_hr) for tok in resolved[("campaign", "cells")].split())
        if not cells:
            raise ConfigError("cell list is empty")
        slugs = [c.slug() for c in cells]
        if len(set(slugs)) != len(slugs):
            raise ConfigError("duplicate cells in the cell list")
        baseline = parse_cell(resolved[("campaign", "baseline")], default_hr)
        res_strides = tuple(int(t) for t in resolved[("campaign", "res_strides_px")].split())
        res_periods = tuple(int(t) for t in resolved[("campaign", "res_periods_h")].split())
        if campaign == "resolution" and len(res_strides) * len(res_periods) != len(RESOLUTION_GROUPS):
            raise ConfigError("resolution campaign needs strides x periods to give four groups")
        _campaign_checks(campaign, cells, baseline)
        # Instantiating a scheme per cell surfaces sampling violations early.
        lr_period = geti("sampling", "lr_period_h")
        lr_stride = geti("sampling", "lr_stride_px")
        for cell in cells:
            SamplingScheme(
                config="SR" if cell.model == "B0" else cell.config,
                lr_period_h=lr_period, lr_stride_px=lr_stride,
                hr_period_h=None if cell.model == "B0" else cell.hr_period_h)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    digest = config_hash(resolved)
    return ExperimentConfig(
        grid=grid, coastline=coastline, synth=synth, split_days=split_days,
        lr_period_h=lr_period, lr_stride_px=lr_stride, hr_period_h=default_hr,
        varcost_iterations=geti("varcost", "n_iterations"),
        train=train, arch=arch, campaign=campaign, profile=profile_name,
        cells=cells, baseline=baseline,
        res_strides_px=res_strides, res_periods_h=res_periods,
        eval_batch_size=geti("train", "eval_batch_size"),
        config_hash=digest,
        resolved={f"{s}.{k}": v for (s, k), v in sorted(resolved.items())},
    )


def config_hash(resolved: dict[tuple[str, str], str]) -> str:
    """Digest of the resolved settings, minus orchestration-only keys."""
    lines = [f"{s}.{k}={v}" for (s, k), v in sorted(resolved.items())
             if (s, k) not in HASH_EXCLUDED]
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


def cell_train_seed(base_seed: int, cell: Cell, scheme: SamplingScheme) -> int:
    """Stable per-cell seed from the cell identity and its sampling scheme.

    Campaigns that train the same cell under the same scheme (whatever the
    campaign name) get the same seed, hence bit-identical runs.
    """
    key = "/".join([
        cell.model, cell.config, str(cell.hr_period_h), cell.bias, cell.flow,
        str(scheme.lr_stride_px), str(scheme.lr_period_h),
    ])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    mix = int.from_bytes(digest[:8], "little")
    return (base_seed ^ mix) & 0x7FFF_FFFF_FFFF_FFFF
