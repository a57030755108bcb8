"""Trainable operators of the assimilation scheme.

State tensors stack three T-channel blocks along the channel axis: the
coarse component, an internal anomaly and the output anomaly.  The
high-resolution readout is coarse plus output anomaly.

Flow operators (channel-to-channel convolutions over the state):
    FlowConvNet      two plain 5x5 convolutions, purely linear
    FlowConvNetDeep  three 5x5 convolutions with leaky activations
    FlowUNet         one down / up level with a skip concatenation

Feature extractors map states and observations of one modality into a
common feature space for the multi-modal observation term.  The solver step
is a convolutional LSTM acting on the cost gradient.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

STATE_BLOCKS = 3
LEAK = 0.1

CHECKPOINT_MAGIC = b"WCK1"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised when a checkpoint file cannot be applied to a model."""


def state_channels(t: int) -> int:
    return STATE_BLOCKS * t


def split_state(x: torch.Tensor, t: int) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Views of the coarse, internal-anomaly and output-anomaly blocks."""
    if x.shape[-3] != state_channels(t):
        raise ValueError(f"state has {x.shape[-3]} channels, expected {state_channels(t)}")
    return x[..., 0:t, :, :], x[..., t:2 * t, :, :], x[..., 2 * t:3 * t, :, :]


def hr_readout(x: torch.Tensor, t: int) -> torch.Tensor:
    """High-resolution reconstruction: coarse block plus output anomaly block."""
    coarse, _, anom_out = split_state(x, t)
    return coarse + anom_out


class FlowConvNet(nn.Module):
    """Linear two-layer convolutional flow operator."""

    def __init__(self, t: int = 24, hidden: int = 32):
        super().__init__()
        c = state_channels(t)
        self.conv1 = nn.Conv2d(c, hidden, kernel_size=5, padding=2)
        self.conv2 = nn.Conv2d(hidden, c, kernel_size=5, padding=2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.conv2(self.conv1(x))


class FlowConvNetDeep(nn.Module):
    """Three-layer convolutional flow operator with leaky activations."""

    def __init__(self, t: int = 24, hidden: int = 128):
        super().__init__()
        c = state_channels(t)
        self.conv1 = nn.Conv2d(c, hidden, kernel_size=5, padding=2)
        self.conv2 = nn.Conv2d(hidden, hidden, kernel_size=5, padding=2)
        self.conv3 = nn.Conv2d(hidden, c, kernel_size=5, padding=2)
        self.act = nn.LeakyReLU(LEAK)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.act(self.conv1(x))
        x = self.act(self.conv2(x))
        return self.conv3(x)


class FlowUNet(nn.Module):
    """One-level U-shaped flow operator; needs H and W divisible by 4."""

    FACTOR = 4

    def __init__(self, t: int = 24, width: int = 64):
        super().__init__()
        c = state_channels(t)
        self.conv_in = nn.Conv2d(c, width, kernel_size=3, padding=1)
        self.pool = nn.MaxPool2d(self.FACTOR)
        self.conv_down = nn.Conv2d(width, 2 * width, kernel_size=3, padding=1)
        self.up = nn.ConvTranspose2d(2 * width, width, kernel_size=self.FACTOR, stride=self.FACTOR)
        self.conv_out = nn.Conv2d(2 * width, c, kernel_size=3, padding=1)
        self.act = nn.LeakyReLU(LEAK)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2], x.shape[-1]
        if h % self.FACTOR or w % self.FACTOR:
            raise ValueError(f"field sides must be divisible by {self.FACTOR}, got {h}x{w}")
        skip = self.act(self.conv_in(x))
        deep = self.act(self.conv_down(self.pool(skip)))
        up = self.act(self.up(deep))
        return self.conv_out(torch.cat([up, skip], dim=-3))


FLOW_VARIANTS = {"alpha": FlowConvNet, "beta": FlowConvNetDeep, "gamma": FlowUNet}


def build_flow(variant: str, t: int = 24, width: int | None = None) -> nn.Module:
    if variant not in FLOW_VARIANTS:
        raise ValueError(f"unknown flow variant {variant!r}")
    cls = FLOW_VARIANTS[variant]
    if width is None:
        return cls(t=t)
    return cls(t, width)


class StateFeatures2d(nn.Module):
    """Per-frame state features on a 4x coarser grid, for the gridded pair.

    Input frames carry the three state planes of one hour as channels.
    """

    def __init__(self, channels: int = 16, features: int = 16):
        super().__init__()
        self.conv1 = nn.Conv2d(STATE_BLOCKS, channels, kernel_size=3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(channels, features, kernel_size=3, stride=2, padding=1)
        self.act = nn.LeakyReLU(LEAK)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return self.conv2(self.act(self.conv1(frames)))


class ObsFeatures2d(nn.Module):
    """Per-frame observed-field features matching ``StateFeatures2d`` output."""

    def __init__(self, channels: int = 16, features: int = 16):
        super().__init__()
        self.conv1 = nn.Conv2d(1, channels, kernel_size=3, padding=1)
        self.pool = nn.AvgPool2d(4)
        self.conv2 = nn.Conv2d(channels, features, kernel_size=3, padding=1)
        self.act = nn.LeakyReLU(LEAK)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        return self.conv2(self.pool(self.act(self.conv1(frames))))


class StateFeaturesAtSites(nn.Module):
    """Per-frame state features sampled at the buoy pixels, for the point pair."""

    def __init__(self, channels: int = 16, features: int = 16):
        super().__init__()
        self.conv1 = nn.Conv2d(STATE_BLOCKS, channels, kernel_size=3, padding=1)
        self.conv2 = nn.Conv2d(channels, features, kernel_size=3, padding=1)
        self.act = nn.LeakyReLU(LEAK)

    def forward(self, frames: torch.Tensor, rows: torch.Tensor, cols: torch.Tensor) -> torch.Tensor:
        maps = self.conv2(self.act(self.conv1(frames)))
        # (N, F, H, W) sampled at sites -> (N, sites, F)
        return maps[..., rows, cols].transpose(-2, -1)


class ObsFeaturesSeries(nn.Module):
    """Per-site temporal features of the buoy series, shared across sites."""

    def __init__(self, channels: int = 16, features: int = 16):
        super().__init__()
        self.conv1 = nn.Conv1d(1, channels, kernel_size=3, padding=1)
        self.conv2 = nn.Conv1d(channels, features, kernel_size=3, padding=1)
        self.act = nn.LeakyReLU(LEAK)

    def forward(self, series: torch.Tensor) -> torch.Tensor:
        # series (N, sites, T) -> features (N, sites, F, T)
        n, sites, t = series.shape
        flat = series.reshape(n * sites, 1, t)
        out = self.conv2(self.act(self.conv1(flat)))
        return out.reshape(n, sites, -1, t)


@dataclass
class FeatureWidths:
    channels: int = 16
    features: int = 16


class FeatureExtractors(nn.Module):
    """Paired extractors per active remote/in-situ modality."""

    def __init__(self, active: tuple[str, ...], widths: FeatureWidths):
        super().__init__()
        if "hr" in active:
            self.state_2d = StateFeatures2d(widths.channels, widths.features)
            self.obs_2d = ObsFeatures2d(widths.channels, widths.features)
        if "situ" in active:
            self.state_pt = StateFeaturesAtSites(widths.channels, widths.features)
            self.obs_pt = ObsFeaturesSeries(widths.channels, widths.features)


class SolverStep(nn.Module):
    """Convolutional LSTM mapping the cost gradient to a state update.

    The gradient is projected to ``input_width`` channels by a 1x1
    convolution, gates act through a 3x3 convolution on the concatenated
    projection and hidden state, and a final 1x1 convolution emits the
    additive state update.
    """

    def __init__(self, t: int = 24, input_width: int = 96, hidden_width: int = 96):
        super().__init__()
        c = state_channels(t)
        self.hidden_width = hidden_width
        self.proj = nn.Conv2d(c, input_width, kernel_size=1)
        self.gates = nn.Conv2d(input_width + hidden_width, 4 * hidden_width, kernel_size=3, padding=1)
        self.out = nn.Conv2d(hidden_width, c, kernel_size=1)

    def init_state(self, like: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        n, _, h, w = like.shape
        zeros = like.new_zeros((n, self.hidden_width, h, w))
        return zeros, zeros.clone()

    def forward(self, grad: torch.Tensor, hidden: torch.Tensor,
                cell: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        stacked = torch.cat([self.proj(grad), hidden], dim=-3)
        in_gate, forget_gate, out_gate, cand = self.gates(stacked).chunk(4, dim=-3)
        cell_new = torch.sigmoid(forget_gate) * cell + torch.sigmoid(in_gate) * torch.tanh(cand)
        hidden_new = torch.sigmoid(out_gate) * torch.tanh(cell_new)
        return self.out(hidden_new), hidden_new, cell_new


def parameter_groups(model: nn.Module) -> dict[str, list[tuple[str, nn.Parameter]]]:
    """Named parameters bucketed into flow / solver / extractor / weight groups.

    Buckets follow the top-level attribute a parameter lives under: ``flow``,
    ``solver``, ``extractors`` and the trainable cost weights (anything else,
    typically the lambda scalars).
    """
    groups: dict[str, list[tuple[str, nn.Parameter]]] = {}
    for name, param in model.named_parameters():
        head = name.split(".", 1)[0]
        if head == "flow":
            key = "flow"
        elif head == "solver":
            key = "solver"
        elif head == "extractors":
            key = "extractors"
        else:
            key = "weights"
        groups.setdefault(key, []).append((name, param))
    return groups


def save_checkpoint(path, model: nn.Module, meta: dict | None = None) -> None:
    """Write model parameters with a JSON header and raw float32 payload.

    Layout: magic ``WCK1``, uint32 version, uint32 header length, the UTF-8
    JSON header, then each tensor as little-endian float32 in header order.
    """
    entries = []
    payloads = []
    for name, param in model.named_parameters():
        arr = param.detach().cpu().numpy().astype("<f4")
        entries.append({"name": name, "shape": list(arr.shape)})
        payloads.append(arr.tobytes())
    header = {"version": CHECKPOINT_VERSION, "meta": meta or {}, "tensors": entries}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for chunk in payloads:
            fh.write(chunk)


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad magic {magic!r}")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        tensors = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = fh.read(4 * count)
            if len(raw) < 4 * count:
                raise CheckpointError(f"truncated payload for {entry['name']}")
            tensors[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError("trailing bytes after payload")
    return header.get("meta", {}), tensors


def load_checkpoint(path, model: nn.Module) -> dict:
    """Load parameters into ``model``; refuses shape or name mismatches."""
    meta, tensors = read_checkpoint(path)
    named = dict(model.named_parameters())
    if set(named) != set(tensors):
        missing = sorted(set(named) - set(tensors))
        extra = sorted(set(tensors) - set(named))
        raise CheckpointError(f"parameter set mismatch: missing {missing}, extra {extra}")
    with torch.no_grad():
        for name, param in named.items():
            arr = tensors[name]
            if tuple(param.shape) != arr.shape:
                raise CheckpointError(f"shape mismatch for {name}: {tuple(param.shape)} vs {arr.shape}")
            param.copy_(torch.from_numpy(arr))
    return meta
