"""Hand-rolled reference implementations used as independent oracles.

Everything here trades speed for obviousness: plain Python loops and
elementwise arithmetic, no vectorization, no shared code with the package
beyond calling the learned modules as black boxes.
"""

import numpy as np
import torch

from windosse.assim import TensorBatch
from windosse.models import hr_readout


def conv2d_naive(x: np.ndarray, weight: np.ndarray, bias: np.ndarray,
                 stride: int = 1, padding: int = 0) -> np.ndarray:
    """Direct cross-correlation loops matching torch's Conv2d convention."""
    n, cin, h, w = x.shape
    cout, _, kh, kw = weight.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (x.shape[2] - kh) // stride + 1
    ow = (x.shape[3] - kw) // stride + 1
    out = np.zeros((n, cout, oh, ow), dtype=np.float64)
    for b in range(n):
        for co in range(cout):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for ci in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += weight[co, ci, u, v] * x[b, ci, i * stride + u, j * stride + v]
                    out[b, co, i, j] = acc + bias[co]
    return out


def downsample_oracle(field: np.ndarray, stride: int) -> np.ndarray:
    """Per-pixel bilinear re-gridding of the strided subsample, loop form."""
    h, w = field.shape
    anchors_r = list(range(0, h, stride))
    anchors_c = list(range(0, w, stride))

    def axis_interp(pos: int, anchors: list[int]) -> tuple[int, int, float]:
        lo = max(a for a in anchors if a <= pos)
        highs = [a for a in anchors if a > pos]
        if not highs:
            return lo, lo, 0.0
        hi = min(highs)
        return lo, hi, (pos - lo) / (hi - lo)

    out = np.zeros((h, w), dtype=np.float64)
    for i in range(h):
        r0, r1, fr = axis_interp(i, anchors_r)
        for j in range(w):
            c0, c1, fc = axis_interp(j, anchors_c)
            v00 = field[r0, c0]
            v01 = field[r0, c1]
            v10 = field[r1, c0]
            v11 = field[r1, c1]
            top = v00 * (1 - fc) + v01 * fc
            bot = v10 * (1 - fc) + v11 * fc
            out[i, j] = top * (1 - fr) + bot * fr
    return out


def coast_distance_oracle(land: np.ndarray, spacing_km: float) -> np.ndarray:
    """Distance to the nearest land pixel (minus one pixel) by full scan."""
    h, w = land.shape
    land_px = [(r, c) for r in range(h) for c in range(w) if land[r, c]]
    out = np.zeros((h, w), dtype=np.float64)
    for r in range(h):
        for c in range(w):
            if land[r, c]:
                continue
            d = min(np.hypot(r - lr, c - lc) for lr, lc in land_px)
            out[r, c] = max(d - 1.0, 0.0) * spacing_km
    return out


def spatial_gradient_oracle(field: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences inside, one-sided at the borders, loop form."""
    h, w = field.shape
    gr = np.zeros((h, w), dtype=np.float64)
    gc = np.zeros((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            if i == 0:
                gr[i, j] = field[1, j] - field[0, j]
            elif i == h - 1:
                gr[i, j] = field[i, j] - field[i - 1, j]
            else:
                gr[i, j] = (field[i + 1, j] - field[i - 1, j]) / 2
            if j == 0:
                gc[i, j] = field[i, 1] - field[i, 0]
            elif j == w - 1:
                gc[i, j] = field[i, j] - field[i, j - 1]
            else:
                gc[i, j] = (field[i, j + 1] - field[i, j - 1]) / 2
    return gr, gc


def median_oracle(stack: np.ndarray) -> np.ndarray:
    """Elementwise median over axis 0 via explicit sorting."""
    stack = np.asarray(stack, dtype=np.float64)
    n = stack.shape[0]
    flat = stack.reshape(n, -1)
    out = np.zeros(flat.shape[1], dtype=np.float64)
    for k in range(flat.shape[1]):
        ordered = sorted(flat[:, k].tolist())
        mid = n // 2
        if n % 2:
            out[k] = ordered[mid]
        else:
            out[k] = (ordered[mid - 1] + ordered[mid]) / 2.0
    return out.reshape(stack.shape[1:])


def rmse_oracle(recon: np.ndarray, truth: np.ndarray, mask: np.ndarray) -> float:
    """Pooled RMSE over masked pixels, accumulated entry by entry."""
    total = 0.0
    count = 0
    flat_r = recon.reshape(-1, *recon.shape[-2:])
    flat_t = truth.reshape(-1, *truth.shape[-2:])
    for s in range(flat_r.shape[0]):
        for i in range(mask.shape[0]):
            for j in range(mask.shape[1]):
                if mask[i, j]:
                    d = float(flat_r[s, i, j]) - float(flat_t[s, i, j])
                    total += d * d
                    count += 1
    return float(np.sqrt(total / count))


def make_batch(n: int = 1, t: int = 4, h: int = 8, w: int = 8, sites: int = 2,
               seed: int = 0, dtype: torch.dtype = torch.float64) -> TensorBatch:
    """Small hand-assembled batch with every modality populated.

    Coarse frames at hours (0, 2), one gridded high-resolution hour (1) on a
    random pixel subset, and hourly point series at ``sites`` fixed pixels.
    """
    rng = np.random.default_rng(seed)
    lr_hours = (0, 2)
    hr_hours = (1,)

    def rand(shape):
        return rng.standard_normal(shape)

    m_lr = np.zeros((n, t, h, w))
    m_lr[:, list(lr_hours)] = 1.0
    m_hr = np.zeros((n, t, h, w))
    m_hr[:, list(hr_hours)] = (rng.random((n, 1, h, w)) < 0.6)
    rows = rng.choice(h, size=sites, replace=False)
    cols = rng.choice(w, size=sites, replace=False)
    m_situ = np.zeros((n, t, h, w))
    m_situ[:, :, rows, cols] = 1.0
    y_lr = rand((n, t, h, w)) * m_lr
    y_hr = rand((n, t, h, w)) * m_hr
    y_situ = rand((n, t, h, w)) * m_situ
    lr_init = rand((n, t, h, w))

    def tens(a):
        return torch.as_tensor(a, dtype=dtype)

    y_situ_t = tens(y_situ)
    series = y_situ_t[..., rows, cols].transpose(-2, -1).contiguous()
    return TensorBatch(
        y_lr=tens(y_lr), y_hr=tens(y_hr), y_situ=y_situ_t,
        m_lr=tens(m_lr), m_hr=tens(m_hr), m_situ=tens(m_situ),
        lr_init=tens(lr_init), situ_series=series,
        site_rows=torch.as_tensor(rows), site_cols=torch.as_tensor(cols),
        hr_hours=hr_hours, lr_hours=lr_hours)


def varcost_single_oracle(x: torch.Tensor, batch: TensorBatch, flow,
                          lam1: float, lam2: float) -> float:
    """Masked sums of squares accumulated entry by entry in float64."""
    t = batch.n_hours
    xv = x.detach().double().numpy()
    coarse = xv[:, :t]
    readout = hr_readout(x, t).detach().double().numpy()
    with torch.no_grad():
        fx = flow(x).detach().double().numpy()
    misfit = 0.0
    prior = 0.0
    for idx in np.ndindex(*xv.shape):
        prior += (xv[idx] - fx[idx]) ** 2
    for idx in np.ndindex(*coarse.shape):
        n_, h_, i_, j_ = idx
        if batch.m_lr[n_, h_, i_, j_] > 0:
            misfit += (coarse[idx] - float(batch.y_lr[n_, h_, i_, j_])) ** 2
        if batch.m_hr[n_, h_, i_, j_] > 0:
            misfit += (readout[idx] - float(batch.y_hr[n_, h_, i_, j_])) ** 2
        if batch.m_situ[n_, h_, i_, j_] > 0:
            misfit += (readout[idx] - float(batch.y_situ[n_, h_, i_, j_])) ** 2
    return lam1 * misfit + lam2 * prior


def varcost_multi_oracle(x: torch.Tensor, batch: TensorBatch, flow,
                         lam1: float, lam2: float, extractors) -> float:
    """Feature-pair cost with the extractor outputs summed entry by entry."""
    t = batch.n_hours
    xv = x.detach().double().numpy()
    coarse = xv[:, :t]
    with torch.no_grad():
        fx = flow(x).detach().double().numpy()
        n = batch.size
        frames = torch.stack([x[:, :t], x[:, t:2 * t], x[:, 2 * t:]], dim=2)
        hr_frames = frames[:, list(batch.hr_hours)].flatten(0, 1)
        f_state = extractors.state_2d(hr_frames).double().numpy()
        obs_frames = batch.y_hr[:, list(batch.hr_hours)].flatten(0, 1).unsqueeze(1)
        g_obs = extractors.obs_2d(obs_frames).double().numpy()
        all_frames = frames.flatten(0, 1)
        pt = extractors.state_pt(all_frames, batch.site_rows, batch.site_cols)
        pt = pt.reshape(n, t, pt.shape[-2], pt.shape[-1]).permute(0, 2, 3, 1).double().numpy()
        g_pt = extractors.obs_pt(batch.situ_series).double().numpy()
    misfit = 0.0
    for idx in np.ndindex(*coarse.shape):
        if batch.m_lr[idx] > 0:
            misfit += (coarse[idx] - float(batch.y_lr[idx])) ** 2
    for idx in np.ndindex(*f_state.shape):
        misfit += (f_state[idx] - g_obs[idx]) ** 2
    for idx in np.ndindex(*pt.shape):
        misfit += (pt[idx] - g_pt[idx]) ** 2
    prior = 0.0
    for idx in np.ndindex(*xv.shape):
        prior += (xv[idx] - fx[idx]) ** 2
    return lam1 * misfit + lam2 * prior


def fd_gradient(fn, x: torch.Tensor, indices, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function at selected entries."""
    base = x.detach().double().clone()
    grads = []
    for idx in indices:
        plus = base.clone()
        plus[idx] += eps
        minus = base.clone()
        minus[idx] -= eps
        grads.append((fn(plus) - fn(minus)) / (2 * eps))
    return np.array(grads)
