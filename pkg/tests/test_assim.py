"""Variational cost terms, the unrolled solver and the one-shot inversion."""

import dataclasses

import numpy as np
import pytest
import torch

from windosse.assim import (
    AssimModel, DirectInversion, DivergenceError, TensorBatch, VarCostConfig,
    baseline_interp, collate, descent_updater, init_state, lr_time_interp,
    observation_filled_state, varcost_multi, varcost_single)
from windosse.models import (
    FeatureExtractors, FeatureWidths, FlowConvNet, SolverStep, hr_readout)
from windosse.obs import assemble
from windosse.synth import window_split

import helpers


def small_model(t: int = 4, mode: str = "single", n_iterations: int = 1,
                extractors: FeatureExtractors | None = None) -> AssimModel:
    torch.manual_seed(7)
    return AssimModel(
        t=t, flow=FlowConvNet(t=t, hidden=4),
        solver=SolverStep(t=t, input_width=4, hidden_width=4),
        cfg=VarCostConfig(dft_mode=mode, n_iterations=n_iterations),
        extractors=extractors)


def without_situ(batch: TensorBatch) -> TensorBatch:
    return dataclasses.replace(
        batch, m_situ=torch.zeros_like(batch.m_situ),
        y_situ=torch.zeros_like(batch.y_situ),
        situ_series=torch.zeros_like(batch.situ_series))


class TestVarCostConfig:
    def test_defaults(self):
        cfg = VarCostConfig()
        assert cfg.dft_mode == "multi" and cfg.n_iterations == 5

    def test_rejects_unknown_mode(self):
        with pytest.raises(ValueError):
            VarCostConfig(dft_mode="triple")

    def test_rejects_negative_iterations(self):
        with pytest.raises(ValueError):
            VarCostConfig(n_iterations=-1)


class TestLrTimeInterp:
    def test_linear_between_and_hold_after(self):
        y = np.zeros((4, 2, 2), dtype=np.float32)
        y[0] = 1.0
        y[2] = 3.0
        out = lr_time_interp(y, (0, 2))
        np.testing.assert_allclose(out[0], 1.0)
        np.testing.assert_allclose(out[1], 2.0)
        np.testing.assert_allclose(out[2], 3.0)
        np.testing.assert_allclose(out[3], 3.0)

    def test_exact_at_snapshots(self):
        rng = np.random.default_rng(0)
        y = rng.standard_normal((24, 3, 3)).astype(np.float32)
        hours = (0, 6, 12, 18)
        out = lr_time_interp(y, hours)
        assert out.dtype == np.float32
        for h in hours:
            np.testing.assert_allclose(out[h], y[h], atol=1e-7)

    def test_single_snapshot_holds(self):
        rng = np.random.default_rng(1)
        y = rng.standard_normal((5, 2, 2)).astype(np.float32)
        out = lr_time_interp(y, (0,))
        for h in range(5):
            np.testing.assert_allclose(out[h], y[0], atol=1e-7)

    def test_empty_hours_rejected(self):
        with pytest.raises(ValueError):
            lr_time_interp(np.zeros((4, 2, 2), dtype=np.float32), ())


@pytest.fixture(scope="module")
def bundles(dataset_small, scheme_c3, landsea_small, buoys_small):
    return [assemble(s, scheme_c3, landsea_small, buoys_small)
            for s in dataset_small.train[:3]]


class TestCollate:
    def test_shapes_and_dtype(self, bundles, buoys_small):
        batch = collate(bundles, buoys_small)
        n, t = 3, 24
        h, w = bundles[0].y_lr.shape[1:]
        for name in ("y_lr", "y_hr", "y_situ", "m_lr", "m_hr", "m_situ", "lr_init"):
            tens = getattr(batch, name)
            assert tens.shape == (n, t, h, w)
            assert tens.dtype == torch.float32
        assert batch.situ_series.shape == (n, len(buoys_small), t)
        assert batch.size == n and batch.n_hours == t
        assert batch.hr_hours == bundles[0].scheme.hr_hours
        assert batch.lr_hours == bundles[0].scheme.lr_hours

    def test_series_matches_site_pixels(self, bundles, buoys_small):
        batch = collate(bundles, buoys_small)
        for s, buoy in enumerate(buoys_small):
            expected = batch.y_situ[:, :, buoy.row, buoy.col]
            torch.testing.assert_close(batch.situ_series[:, s], expected, atol=0, rtol=0)

    def test_lr_init_is_time_interpolation(self, bundles, buoys_small):
        batch = collate(bundles, buoys_small)
        for i, b in enumerate(bundles):
            expected = lr_time_interp(b.y_lr, b.scheme.lr_hours)
            np.testing.assert_array_equal(batch.lr_init[i].numpy(), expected)

    def test_mixed_schemes_rejected(self, dataset_small, landsea_small, buoys_small,
                                    scheme_c3):
        from windosse.obs import SamplingScheme
        other = SamplingScheme(config="C1", lr_period_h=6, lr_stride_px=4)
        a = assemble(dataset_small.train[0], scheme_c3, landsea_small, buoys_small)
        b = assemble(dataset_small.train[1], other, landsea_small, buoys_small)
        with pytest.raises(ValueError):
            collate([a, b], buoys_small)

    def test_baseline_is_interpolated_coarse(self, bundles):
        out = baseline_interp(bundles[0])
        np.testing.assert_array_equal(
            out, lr_time_interp(bundles[0].y_lr, bundles[0].scheme.lr_hours))


class TestVarCostSingle:
    def test_matches_entrywise_oracle(self):
        torch.manual_seed(0)
        batch = helpers.make_batch(n=2, t=4, h=8, w=8, seed=3)
        flow = FlowConvNet(t=4, hidden=4).double()
        x = torch.randn(2, 12, 8, 8, dtype=torch.float64)
        lam1 = torch.tensor(0.7, dtype=torch.float64)
        lam2 = torch.tensor(1.3, dtype=torch.float64)
        got = varcost_single(x, batch, flow, lam1, lam2).item()
        want = helpers.varcost_single_oracle(x, batch, flow, 0.7, 1.3)
        assert abs(got - want) <= 1e-10 * abs(want)

    def test_zero_lambda_isolates_terms(self):
        batch = helpers.make_batch(seed=5)
        flow = FlowConvNet(t=4, hidden=4).double()
        x = torch.randn(1, 12, 8, 8, dtype=torch.float64)
        one = torch.tensor(1.0, dtype=torch.float64)
        zero = torch.tensor(0.0, dtype=torch.float64)
        prior_only = varcost_single(x, batch, flow, zero, one)
        expected = ((x - flow(x)) ** 2).sum()
        torch.testing.assert_close(prior_only, expected, atol=0, rtol=0)

    def test_perfect_state_costs_nothing(self):
        batch = helpers.make_batch(seed=6)

        class Identity(torch.nn.Module):
            def forward(self, x):
                return x

        # coarse block equal to the coarse obs, anomaly blocks zero, and
        # observed values consistent with the coarse field
        x = torch.cat([batch.y_lr, torch.zeros_like(batch.y_lr),
                       torch.zeros_like(batch.y_lr)], dim=1)
        batch = dataclasses.replace(
            batch, y_hr=batch.y_lr * batch.m_hr, y_situ=batch.y_lr * batch.m_situ)
        one = torch.tensor(1.0, dtype=torch.float64)
        assert varcost_single(x, batch, Identity(), one, one).item() == 0.0


class TestVarCostMulti:
    def make_parts(self, seed: int = 0):
        torch.manual_seed(seed)
        batch = helpers.make_batch(n=2, seed=seed)
        flow = FlowConvNet(t=4, hidden=4).double()
        ext = FeatureExtractors(("lr", "hr", "situ"), FeatureWidths(4, 4)).double()
        x = torch.randn(2, 12, 8, 8, dtype=torch.float64)
        lam1 = torch.tensor(0.9, dtype=torch.float64)
        lam2 = torch.tensor(1.1, dtype=torch.float64)
        return batch, flow, ext, x, lam1, lam2

    def test_matches_entrywise_oracle(self):
        batch, flow, ext, x, lam1, lam2 = self.make_parts()
        got = varcost_multi(x, batch, flow, lam1, lam2, ext).item()
        want = helpers.varcost_multi_oracle(x, batch, flow, 0.9, 1.1, ext)
        assert abs(got - want) <= 1e-10 * abs(want)

    def test_no_extractors_reduces_to_direct(self):
        batch, flow, _, x, lam1, lam2 = self.make_parts(seed=1)
        got = varcost_multi(x, batch, flow, lam1, lam2, None)
        want = varcost_single(x, batch, flow, lam1, lam2)
        torch.testing.assert_close(got, want, atol=0, rtol=0)

    def test_no_gridded_hours_falls_back(self):
        batch, flow, ext, x, lam1, lam2 = self.make_parts(seed=2)
        quiet = without_situ(dataclasses.replace(batch, hr_hours=()))
        got = varcost_multi(x, quiet, flow, lam1, lam2, ext)
        want = varcost_single(x, quiet, flow, lam1, lam2)
        torch.testing.assert_close(got, want, rtol=1e-12, atol=0)

    def test_no_situ_sites_skips_point_features(self):
        batch, flow, ext, x, lam1, lam2 = self.make_parts(seed=3)
        quiet = without_situ(batch)
        ext_hr = FeatureExtractors(("lr", "hr"), FeatureWidths(4, 4)).double()
        ext_hr.load_state_dict(
            {k: v for k, v in ext.state_dict().items() if not k.endswith("_pt")
             and not k.startswith(("state_pt", "obs_pt"))})
        got = varcost_multi(x, quiet, flow, lam1, lam2, ext)
        want = varcost_multi(x, quiet, flow, lam1, lam2, ext_hr)
        torch.testing.assert_close(got, want, atol=0, rtol=0)

    def test_point_features_without_gridded_pair(self):
        # extractors for a scheme with no gridded modality keep the direct term
        batch, flow, ext, x, lam1, lam2 = self.make_parts(seed=4)
        ext_pt = FeatureExtractors(("lr", "situ"), FeatureWidths(4, 4)).double()
        ext_pt.load_state_dict(
            {k: v for k, v in ext.state_dict().items()
             if k.startswith(("state_pt", "obs_pt"))})
        got = varcost_multi(x, batch, flow, lam1, lam2, ext_pt)
        direct_hr = lam1 * (batch.m_hr * (hr_readout(x, 4) - batch.y_hr) ** 2).sum()
        full = varcost_multi(x, batch, flow, lam1, lam2, ext)
        feats = ext.state_2d(torch.stack(
            [x[:, :4], x[:, 4:8], x[:, 8:]], dim=2)[:, list(batch.hr_hours)].flatten(0, 1))
        obs_feats = ext.obs_2d(batch.y_hr[:, list(batch.hr_hours)].flatten(0, 1).unsqueeze(1))
        feature_hr = lam1 * ((feats - obs_feats) ** 2).sum()
        torch.testing.assert_close(got - direct_hr, full - feature_hr, rtol=1e-10, atol=0)


class TestAssimModel:
    def test_multi_mode_requires_extractors(self):
        with pytest.raises(ValueError):
            small_model(mode="multi")

    def test_zero_iterations_returns_initialization(self):
        batch = helpers.make_batch(dtype=torch.float32)
        model = small_model(n_iterations=0).eval()
        recon, coarse = model(batch)
        assert torch.equal(recon, batch.lr_init)
        assert torch.equal(coarse, batch.lr_init)

    def test_eval_output_is_detached(self):
        batch = helpers.make_batch(dtype=torch.float32)
        model = small_model(n_iterations=2).eval()
        recon, _ = model(batch)
        assert recon.requires_grad is False

    def test_training_unroll_reaches_solver(self):
        batch = helpers.make_batch(dtype=torch.float32)
        model = small_model(n_iterations=2).train()
        recon, _ = model(batch)
        assert recon.requires_grad
        recon.pow(2).sum().backward()
        grads = [p.grad for p in model.solver.parameters()]
        assert any(g is not None and g.abs().sum() > 0 for g in grads)
        assert model.lam1.grad is not None

    def test_descent_updater_matches_manual_step(self):
        batch = helpers.make_batch(dtype=torch.float32)
        model = small_model(n_iterations=1).eval()
        step = 0.05
        got = model.solve(batch, updater=descent_updater(step))
        with torch.enable_grad():
            x0 = init_state(batch).requires_grad_(True)
            cost = model.varcost(x0, batch)
            (grad,) = torch.autograd.grad(cost, x0)
        want = (x0 + (-step) * grad).detach()
        torch.testing.assert_close(got, want, atol=0, rtol=0)

    def test_non_finite_cost_raises(self):
        batch = helpers.make_batch(dtype=torch.float32)
        batch.y_lr[0, 0, 0, 0] = float("nan")
        model = small_model(n_iterations=1).eval()
        with pytest.raises(DivergenceError):
            model.solve(batch)

    def test_forward_on_collated_day(self, dataset_small, scheme_c3,
                                     landsea_small, buoys_small):
        bundles = [assemble(s, scheme_c3, landsea_small, buoys_small)
                   for s in dataset_small.train[:2]]
        batch = collate(bundles, buoys_small)
        model = small_model(t=24, n_iterations=1).eval()
        recon, coarse = model(batch)
        assert recon.shape == batch.y_lr.shape
        assert coarse.shape == batch.y_lr.shape
        assert torch.isfinite(recon).all()


class TestObservationFilledState:
    def test_block_layout(self):
        batch = helpers.make_batch(seed=9)
        x = observation_filled_state(batch)
        t = batch.n_hours
        assert torch.equal(x[:, :t], batch.lr_init)
        assert torch.equal(x[:, t:2 * t], x[:, 2 * t:])

    def test_anomaly_sources(self):
        batch = helpers.make_batch(seed=9)
        t = batch.n_hours
        anom = observation_filled_state(batch)[:, t:2 * t]
        m_situ = batch.m_situ.bool()
        m_hr_only = batch.m_hr.bool() & ~m_situ
        empty = ~(batch.m_hr.bool() | m_situ)
        torch.testing.assert_close(
            anom[m_situ], (batch.y_situ - batch.lr_init)[m_situ], atol=0, rtol=0)
        torch.testing.assert_close(
            anom[m_hr_only], (batch.y_hr - batch.lr_init)[m_hr_only], atol=0, rtol=0)
        assert anom[empty].abs().max().item() == 0.0


class TestDirectInversion:
    def test_zero_flow_returns_initialization(self):
        batch = helpers.make_batch(dtype=torch.float32)
        flow = FlowConvNet(t=4, hidden=4)
        with torch.no_grad():
            for p in flow.parameters():
                p.zero_()
        recon, coarse = DirectInversion(t=4, flow=flow)(batch)
        assert torch.equal(recon, batch.lr_init)
        assert torch.equal(coarse, batch.lr_init)

    def test_applies_flow_once(self):
        torch.manual_seed(2)
        batch = helpers.make_batch(dtype=torch.float32)
        flow = FlowConvNet(t=4, hidden=4)
        recon, _ = DirectInversion(t=4, flow=flow)(batch)
        with torch.no_grad():
            out = flow(observation_filled_state(batch))
        torch.testing.assert_close(recon, batch.lr_init + out[:, 8:], atol=0, rtol=0)
