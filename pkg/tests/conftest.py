"""Shared fixtures: a small coastal domain, its buoys and a short dataset."""

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from windosse.grid import CoastlineSpec, Grid, default_buoys, synth_landsea
from windosse.obs import SamplingScheme
from windosse.synth import SynthSpec, generate, split_and_window

torch.set_num_threads(1)

settings.register_profile(
    "suite", max_examples=25, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


# 6 km spacing so even a 32 px wide strip reaches open sea (>= 76 km offshore).
@pytest.fixture(scope="session")
def grid_small() -> Grid:
    return Grid(32, 32, spacing_km=6.0)


@pytest.fixture(scope="session")
def landsea_small(grid_small):
    coast = CoastlineSpec(base_col=8.0, amplitude_px=2.0, wavelength_px=16.0)
    return synth_landsea(grid_small, coast)


@pytest.fixture(scope="session")
def buoys_small(landsea_small):
    return default_buoys(landsea_small)


@pytest.fixture(scope="session")
def scheme_c3() -> SamplingScheme:
    return SamplingScheme(config="C3", lr_period_h=6, lr_stride_px=4, hr_period_h=12)


@pytest.fixture(scope="session")
def synth_spec_small() -> SynthSpec:
    return SynthSpec(seed=99, n_days=12)


@pytest.fixture(scope="session")
def series_small(synth_spec_small, grid_small, landsea_small) -> np.ndarray:
    return generate(synth_spec_small, grid_small, landsea_small)


@pytest.fixture(scope="session")
def dataset_small(series_small):
    return split_and_window(series_small, (6, 3, 3))
