"""Finite-difference check of the surrogate gradient on a tiny two-layer network.

In relaxed mode every spike is the clipped ramp whose derivative is exactly the
rectangular surrogate, so backpropagation through time must agree with central
differences of the same forward pass.
"""

from __future__ import annotations

import numpy as np
import torch

from .network import integrate_and_fire

MICRO_SHAPE = (3, 4, 2)  # inputs, hidden, outputs: 26 parameters


def micro_loss(params: torch.Tensor, x: torch.Tensor, target: torch.Tensor, threshold: float, beta: float) -> torch.Tensor:
    """MSE of output rates of a 3-4-2 IF network driven by spikes ``x`` of shape ``(1, T, 3)``."""
    n_in, n_hid, n_out = MICRO_SHAPE
    k = 0
    W1 = params[k:k + n_in * n_hid].reshape(n_hid, n_in)
    k += n_in * n_hid
    b1 = params[k:k + n_hid]
    k += n_hid
    W2 = params[k:k + n_hid * n_out].reshape(n_out, n_hid)
    k += n_hid * n_out
    b2 = params[k:k + n_out]
    s1 = integrate_and_fire(x @ W1.T + b1, threshold, beta, relaxed=True)
    s2 = integrate_and_fire(s1 @ W2.T + b2, threshold, beta, relaxed=True)
    return ((s2.mean(dim=1) - target) ** 2).mean()


def n_micro_params() -> int:
    n_in, n_hid, n_out = MICRO_SHAPE
    return n_in * n_hid + n_hid + n_hid * n_out + n_out


def surrogate_gradient_check(
    draws: int = 100,
    seed: int = 0,
    steps: int = 6,
    threshold: float = 1.0,
    beta: float = 0.5,
    h: float = 1e-6,
) -> np.ndarray:
    """Relative error ``|g_bptt - g_fd| / |g_fd|`` (vector norms) for each random parameter draw."""
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(draws):
        p = torch.tensor(rng.normal(0.0, 0.8, n_micro_params()), dtype=torch.float64, requires_grad=True)
        x = torch.tensor(rng.random((1, steps, MICRO_SHAPE[0])) < 0.6, dtype=torch.float64)
        target = torch.tensor(rng.random((1, MICRO_SHAPE[2])), dtype=torch.float64)
        loss = micro_loss(p, x, target, threshold, beta)
        (g,) = torch.autograd.grad(loss, p)
        fd = np.empty(len(p))
        with torch.no_grad():
            base = p.detach().clone()
            for i in range(len(p)):
                e = torch.zeros_like(base)
                e[i] = h
                fd[i] = (micro_loss(base + e, x, target, threshold, beta) - micro_loss(base - e, x, target, threshold, beta)).item() / (2 * h)
        denom = max(np.linalg.norm(fd), 1e-12)
        errors.append(np.linalg.norm(g.numpy() - fd) / denom)
    return np.array(errors)
