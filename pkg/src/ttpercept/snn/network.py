"""Spiking detector: two convolutional and two linear layers of integrate-and-fire neurons.

Neurons are non-leaky: the membrane integrates its input current every step,
emits a spike when it reaches the threshold and then subtracts the threshold
(soft reset). Because no layer feeds back, each layer's synaptic currents for
all time steps are computed in one batched call and only the membrane update
runs step by step.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..errors import ShapeMismatch
from .coding import N_OUT

ALLOWED_STEPS = (8, 16, 32)


@dataclass(frozen=True)
class NetworkConfig:
    """Layer sizes, time steps and neuron constants.

    Convolutions are ``(out_channels, kernel, stride)`` with ``kernel // 2`` zero padding.
    """

    input_shape: tuple[int, int, int] = (2, 128, 128)
    conv1: tuple[int, int, int] = (8, 5, 2)
    conv2: tuple[int, int, int] = (16, 5, 2)
    hidden: int = 512
    n_out: int = N_OUT
    steps: int = 8
    threshold: float = 1.0
    beta: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("input_shape", "conv1", "conv2"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        if self.n_out != N_OUT:
            raise ValueError(f"output layer must have {N_OUT} neurons")
        if self.steps <= 0 or self.hidden <= 0:
            raise ValueError("steps and hidden width must be positive")
        if not self.threshold > 0 or self.beta < 0:
            raise ValueError("threshold must be positive and beta non-negative")

    def conv_out(self, size: int, layer: tuple[int, int, int]) -> int:
        _, k, s = layer
        return (size + 2 * (k // 2) - k) // s + 1

    @property
    def shapes(self) -> list[tuple[int, ...]]:
        """Neuron grid shape of each layer, input first."""
        c, h, w = self.input_shape
        h1, w1 = self.conv_out(h, self.conv1), self.conv_out(w, self.conv1)
        h2, w2 = self.conv_out(h1, self.conv2), self.conv_out(w1, self.conv2)
        return [(c, h, w), (self.conv1[0], h1, w1), (self.conv2[0], h2, w2), (self.hidden,), (self.n_out,)]

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> NetworkConfig:
        return cls(**json.loads(text))

    def with_steps(self, steps: int) -> NetworkConfig:
        d = asdict(self)
        d["steps"] = steps
        return NetworkConfig(**d)


class SpikeFunction(torch.autograd.Function):
    """Heaviside spike with a rectangular surrogate derivative ``1/(2 beta)`` on ``|u - theta| <= beta``.

    With ``relaxed`` the forward pass uses the surrogate's integral, the clipped
    ramp ``clip((u - theta + beta) / (2 beta), 0, 1)``, so the backward pass is
    its exact derivative (used for gradient checking).
    """

    @staticmethod
    def forward(ctx, u, threshold: float, beta: float, relaxed: bool):
        ctx.save_for_backward(u)
        ctx.threshold, ctx.beta = threshold, beta
        if relaxed:
            return torch.clamp((u - threshold + beta) / (2 * beta), 0.0, 1.0)
        return (u >= threshold).to(u.dtype)

    @staticmethod
    def backward(ctx, grad):
        (u,) = ctx.saved_tensors
        beta = ctx.beta
        if beta <= 0:
            return torch.zeros_like(u), None, None, None
        window = ((u - ctx.threshold).abs() <= beta).to(u.dtype) / (2 * beta)
        return grad * window, None, None, None


class _IntegrateAndFire(torch.autograd.Function):
    """Whole IF layer over time with a hand-written reverse-time backward.

    Forward, per step: ``v_t = u_{t-1} + I_t``, ``s_t = f(v_t)``, ``u_t = v_t - theta s_t``.
    Backward keeps the reset path: ``dv_t = g_t f'(v_t) + a (1 - theta f'(v_t))`` with
    ``a = dv_{t+1}``, and ``dI_t = dv_t``. Autograd through a Python loop of slices
    allocates a full-size gradient per step, which is quadratic in ``T``.
    """

    @staticmethod
    def forward(ctx, current, threshold: float, beta: float, relaxed: bool):
        v = torch.empty_like(current)
        s = torch.empty_like(current)
        u = torch.zeros_like(current[:, 0])
        for t in range(current.shape[1]):
            vt = torch.add(u, current[:, t], out=v[:, t])
            if relaxed:
                st = torch.clamp((vt - threshold + beta) / (2 * beta), 0.0, 1.0)
            else:
                st = (vt >= threshold).to(current.dtype)
            s[:, t] = st
            u = vt - threshold * st
        ctx.save_for_backward(v)
        ctx.threshold, ctx.beta = threshold, beta
        return s

    @staticmethod
    def backward(ctx, grad):
        (v,) = ctx.saved_tensors
        th, beta = ctx.threshold, ctx.beta
        if beta <= 0:
            return torch.zeros_like(v), None, None, None
        out = torch.empty_like(v)
        a = torch.zeros_like(v[:, 0])
        for t in range(v.shape[1] - 1, -1, -1):
            d = ((v[:, t] - th).abs() <= beta).to(v.dtype) / (2 * beta)
            a = torch.addcmul(a, d, grad[:, t] - th * a, out=out[:, t])
        return out, None, None, None


def integrate_and_fire(current: torch.Tensor, threshold: float, beta: float, relaxed: bool = False) -> torch.Tensor:
    """Run IF neurons over ``current`` of shape ``(B, T, ...)``; returns spikes of the same shape.
    Membranes start at zero on every call."""
    return _IntegrateAndFire.apply(current, threshold, beta, relaxed)


def integrate_and_fire_stepwise(current: torch.Tensor, threshold: float, beta: float, relaxed: bool = False) -> torch.Tensor:
    """Same neurons built step by step from :class:`SpikeFunction`, differentiated by autograd."""
    u = torch.zeros_like(current[:, 0])
    out = []
    for t in range(current.shape[1]):
        u = u + current[:, t]
        s = SpikeFunction.apply(u, threshold, beta, relaxed)
        u = u - threshold * s
        out.append(s)
    return torch.stack(out, dim=1)


def conv_fanout(in_hw: tuple[int, int], layer: tuple[int, int, int]) -> torch.Tensor:
    """Outgoing synapses of each input pixel of a convolution: covering windows times out-channels."""
    c_out, k, s = layer
    h, w = in_hw
    ho = (h + 2 * (k // 2) - k) // s + 1
    wo = (w + 2 * (k // 2) - k) // s + 1
    ones = torch.ones(1, 1, ho, wo, dtype=torch.float64)
    kern = torch.ones(1, 1, k, k, dtype=torch.float64)
    full_h = (ho - 1) * s - 2 * (k // 2) + k
    full_w = (wo - 1) * s - 2 * (k // 2) + k
    cover = F.conv_transpose2d(ones, kern, stride=s, padding=k // 2, output_padding=(h - full_h, w - full_w))
    return cover[0, 0] * c_out


@dataclass
class SynOpsReport:
    """Synaptic operations of one forward pass: spikes entering each layer times their fan-out."""

    per_layer: list[int] = field(default_factory=list)

    @property
    def total(self) -> int:
        return int(sum(self.per_layer))


class SpikingNet(nn.Module):
    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        c_in = config.input_shape[0]
        (c1, k1, s1), (c2, k2, s2) = config.conv1, config.conv2
        shapes = config.shapes
        self.conv1 = nn.Conv2d(c_in, c1, k1, s1, k1 // 2)
        self.conv2 = nn.Conv2d(c1, c2, k2, s2, k2 // 2)
        self.fc1 = nn.Linear(int(np.prod(shapes[2])), config.hidden)
        self.fc2 = nn.Linear(config.hidden, config.n_out)
        self.register_buffer("fan1", conv_fanout(shapes[0][1:], config.conv1), persistent=False)
        self.register_buffer("fan2", conv_fanout(shapes[1][1:], config.conv2), persistent=False)

    def _check(self, x: torch.Tensor) -> None:
        cfg = self.config
        if x.dim() != 5 or tuple(x.shape[2:]) != cfg.input_shape or x.shape[1] != cfg.steps:
            raise ShapeMismatch(f"expected (B, {cfg.steps}, {cfg.input_shape}), got {tuple(x.shape)}")

    def forward(self, x: torch.Tensor, relaxed: bool = False) -> tuple[torch.Tensor, list[torch.Tensor]]:
        """``x``: spikes ``(B, T, C, H, W)``. Returns output rates ``(B, 256)`` and the
        spike tensors entering each layer (input, conv1, conv2, fc1) plus the output spikes."""
        self._check(x)
        cfg = self.config
        B, T = x.shape[:2]
        th, beta = cfg.threshold, cfg.beta

        def conv(layer, s):
            flat = s.reshape(B * T, *s.shape[2:]).contiguous(memory_format=torch.channels_last)
            out = layer(flat)
            return out.reshape(B, T, *out.shape[1:])

        s1 = integrate_and_fire(conv(self.conv1, x), th, beta, relaxed)
        s2 = integrate_and_fire(conv(self.conv2, s1), th, beta, relaxed)
        s3 = integrate_and_fire(self.fc1(s2.reshape(B, T, -1)), th, beta, relaxed)
        s4 = integrate_and_fire(self.fc2(s3), th, beta, relaxed)
        return s4.mean(dim=1), [x, s1, s2, s3, s4]

    @torch.no_grad()
    def synops(self, spikes: list[torch.Tensor]) -> np.ndarray:
        """Per-sample SynOps ``(B, 4)`` for the spike tensors returned by :meth:`forward`."""
        # per-pixel counts over time and channels stay far below 2**24, so float32 sums are exact
        with torch.no_grad():
            x, s1, s2, s3, _ = (s.detach() for s in spikes)
            ops = [
                (x.sum(dim=(1, 2)).double() * self.fan1).sum(dim=(1, 2)),
                (s1.sum(dim=(1, 2)).double() * self.fan2).sum(dim=(1, 2)),
                s2.flatten(1).sum(dim=1).double() * self.config.hidden,
                s3.sum(dim=(1, 2)).double() * self.config.n_out,
            ]
        return torch.stack(ops, dim=1).round().long().numpy()


# input charge over the window, in thresholds, that the most driven neurons of each layer receive after balancing
BALANCE_CHARGE = (2.0, 2.0, 2.0, 1.0)
BALANCE_QUANTILE = 0.99


@torch.no_grad()
def balance_weights(net: SpikingNet, x: torch.Tensor, quantile: float = BALANCE_QUANTILE, charge=None) -> list[float]:
    """Rescale each layer so its ``quantile`` of per-neuron input charge (summed over the
    window) equals ``charge`` thresholds on the batch ``x``. Layers are balanced in
    order, each on the spikes of the already balanced layers below. Returns the scales.

    Without this the default initialisation leaves the deeper layers silent on the
    sparse input, and a silent layer passes no surrogate gradient.
    """
    cfg = net.config
    charge = BALANCE_CHARGE if charge is None else charge
    B, T = x.shape[:2]
    scales = []
    s = x
    for layer, target in zip((net.conv1, net.conv2, net.fc1, net.fc2), charge):
        if isinstance(layer, nn.Conv2d):
            flat = s.reshape(B * T, *s.shape[2:]).contiguous(memory_format=torch.channels_last)
            cur = layer(flat)
            cur = cur.reshape(B, T, *cur.shape[1:])
        else:
            cur = layer(s.reshape(B, T, -1))
        q = torch.quantile(cur.sum(dim=1).flatten()[:1_000_000].double(), quantile).item()
        if q <= 0:
            q = cur.sum(dim=1).max().item()
        scale = target * cfg.threshold / q if q > 0 else 1.0
        layer.weight.mul_(scale)
        layer.bias.mul_(scale)
        scales.append(scale)
        s = integrate_and_fire(cur * scale, cfg.threshold, cfg.beta)
    return scales


def forward(config: NetworkConfig, net: SpikingNet, frames: torch.Tensor) -> tuple[np.ndarray, SynOpsReport]:
    """Rates and SynOps for a single input ``(T, C, H, W)``."""
    if frames.dim() != 4:
        raise ShapeMismatch("expected a single spike-frame sequence (T, C, H, W)")
    if net.config != config:
        raise ShapeMismatch("network was built for a different configuration")
    with torch.no_grad():
        rates, spikes = net(frames[None].float())
        ops = net.synops(spikes)[0]
    return rates[0].numpy().astype(float), SynOpsReport([int(v) for v in ops])
