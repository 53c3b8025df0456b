"""Training, evaluation and the MSE vs cross-entropy activity comparison."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import DivergedLoss, EmptyDataset
from .coding import N_CLASSES, encode_target
from .data import EventDataset
from .network import NetworkConfig, SpikingNet, balance_weights

LOG_HEADER = ["epoch", "loss", "px_error", "spikes_l1", "spikes_l2", "spikes_l3", "spikes_l4", "synops"]
WEIGHTS_MAGIC = b"SNNW"
WEIGHTS_VERSION = 1


def target_batch(labels: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.stack([encode_target(x, y) for x, y in labels])).float()


def decode_batch(rates: torch.Tensor) -> np.ndarray:
    """Argmax class per bank, ties to the lower index. Returns ``(B, 2)``."""
    r = rates.detach().numpy()
    return np.stack([r[:, :N_CLASSES].argmax(1), r[:, N_CLASSES:].argmax(1)], axis=1)


def mse_loss(rates: torch.Tensor, labels: np.ndarray, steps: int) -> torch.Tensor:
    return ((rates - target_batch(labels)) ** 2).mean()


def ce_loss(rates: torch.Tensor, labels: np.ndarray, steps: int) -> torch.Tensor:
    """Softmax cross-entropy on spike counts, one term per bank, summed."""
    counts = rates * steps
    lab = torch.from_numpy(np.asarray(labels, dtype=np.int64))
    return F.cross_entropy(counts[:, :N_CLASSES], lab[:, 0]) + F.cross_entropy(counts[:, N_CLASSES:], lab[:, 1])


LOSSES: dict[str, Callable] = {"mse": mse_loss, "ce": ce_loss}
SCHEDULES = ("constant", "cosine")


@dataclass
class TrainResult:
    net: SpikingNet
    log: list[dict] = field(default_factory=list)


def _check_indices(data: EventDataset, idx) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    if len(data) == 0 or len(idx) == 0:
        raise EmptyDataset("no samples")
    return idx


def train(
    config: NetworkConfig,
    data: EventDataset,
    indices: Sequence[int] | None = None,
    epochs: int = 10,
    lr: float = 1e-3,
    batch: int = 32,
    loss: str = "mse",
    progress: Callable[[dict], None] | None = None,
    balance: bool = True,
    schedule: str = "cosine",
) -> TrainResult:
    """Backpropagation through time with Adam. Seeded by ``config.seed``: weight init,
    batch order and therefore the final weights are reproducible bit for bit.

    ``schedule="cosine"`` anneals the learning rate per batch from ``lr`` towards 0
    over all epochs; ``"constant"`` keeps it at ``lr``.
    """
    idx = _check_indices(data, range(len(data)) if indices is None else indices)
    loss_fn = LOSSES[loss]
    if schedule not in SCHEDULES:
        raise ValueError(f"unknown learning-rate schedule {schedule!r}")
    torch.manual_seed(config.seed)
    net = SpikingNet(config)
    order_rng = np.random.default_rng(config.seed)
    if balance:
        balance_weights(net, data.frames(idx[order_rng.permutation(len(idx))[:batch]], config.steps))
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    n_steps = epochs * -(-len(idx) // batch)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, n_steps) if schedule == "cosine" else None
    log = []
    for epoch in range(1, epochs + 1):
        perm = order_rng.permutation(idx)
        tot_loss = tot_err = tot_ops = 0.0
        tot_spk = np.zeros(4)
        for start in range(0, len(perm), batch):
            b = perm[start:start + batch]
            x = data.frames(b, config.steps)
            labels = data.labels(b)
            rates, spikes = net(x)
            value = loss_fn(rates, labels, config.steps)
            if not torch.isfinite(value):
                raise DivergedLoss(f"loss became {value.item()} in epoch {epoch}")
            opt.zero_grad()
            value.backward()
            opt.step()
            if sched is not None:
                sched.step()
            pred = decode_batch(rates)
            tot_loss += value.item() * len(b)
            tot_err += np.linalg.norm(pred - labels, axis=1).sum()
            tot_ops += net.synops(spikes).sum()
            tot_spk += [float(s.detach().sum()) for s in spikes[1:]]
        n = len(perm)
        row = {
            "epoch": epoch,
            "loss": tot_loss / n,
            "px_error": tot_err / n,
            **{f"spikes_l{k + 1}": tot_spk[k] / n for k in range(4)},
            "synops": tot_ops / n,
        }
        log.append(row)
        if progress:
            progress(row)
    return TrainResult(net, log)


@dataclass
class EvalReport:
    steps: int
    mean_error: float
    std_error: float
    mean_synops: float
    mean_spikes: list[float]
    n_samples: int
    n_networks: int = 1


def _predict(net: SpikingNet, data: EventDataset, idx: np.ndarray, batch: int):
    steps = net.config.steps
    preds, ops, spk = [], [], []
    with torch.no_grad():
        for start in range(0, len(idx), batch):
            b = idx[start:start + batch]
            rates, spikes = net(data.frames(b, steps))
            preds.append(decode_batch(rates))
            ops.append(net.synops(spikes).sum(1))
            spk.append(np.stack([s.sum(dim=tuple(range(1, s.dim()))).numpy() for s in spikes[1:]], axis=1))
    return np.concatenate(preds), np.concatenate(ops), np.concatenate(spk)


def evaluate(
    nets: SpikingNet | Sequence[SpikingNet],
    data: EventDataset,
    indices: Sequence[int] | None = None,
    batch: int = 64,
) -> EvalReport:
    """Euclidean error on the class grid between decoded output and label.

    With one network the spread is over samples. With several (for example
    different seeds) the mean is over networks and the spread is the standard
    deviation of the per-network means.
    """
    nets = [nets] if isinstance(nets, SpikingNet) else list(nets)
    if not nets:
        raise EmptyDataset("no networks to evaluate")
    idx = _check_indices(data, range(len(data)) if indices is None else indices)
    labels = data.labels(idx)
    means, stds, ops, spikes = [], [], [], []
    for net in nets:
        pred, op, spk = _predict(net, data, idx, batch)
        err = np.linalg.norm(pred - labels, axis=1)
        means.append(err.mean())
        stds.append(err.std())
        ops.append(op.mean())
        spikes.append(spk.mean(0))
    spread = float(np.std(means)) if len(nets) > 1 else float(stds[0])
    return EvalReport(
        nets[0].config.steps, float(np.mean(means)), spread, float(np.mean(ops)),
        [float(v) for v in np.mean(spikes, axis=0)], len(idx), len(nets),
    )


def compare_loss_activity(
    config: NetworkConfig,
    data: EventDataset,
    train_idx: Sequence[int],
    eval_idx: Sequence[int],
    epochs: int = 5,
    lr: float = 1e-3,
    batch: int = 32,
    schedule: str = "cosine",
) -> dict:
    """Train the same network with MSE and with cross-entropy and compare activity."""
    out = {}
    for loss in ("mse", "ce"):
        res = train(config, data, train_idx, epochs, lr, batch, loss, schedule=schedule)
        rep = evaluate(res.net, data, eval_idx)
        out[loss] = {"synops": rep.mean_synops, "spikes": rep.mean_spikes, "px_error": rep.mean_error}
    ratio = out["ce"]["synops"] / out["mse"]["synops"] if out["mse"]["synops"] > 0 else float("inf")
    out["synops_ratio_ce_over_mse"] = ratio
    out["reproduced"] = bool(ratio > 1.0)
    return out


# --- files ------------------------------------------------------------------------

def save_weights(net: SpikingNet, path: str | Path) -> None:
    """``SNNW``, version, config JSON length and text, then each parameter as
    little-endian float32 in state-dict order."""
    cfg = net.config.to_json().encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", WEIGHTS_MAGIC, WEIGHTS_VERSION, len(cfg)))
        fh.write(cfg)
        for tensor in net.state_dict().values():
            fh.write(tensor.detach().numpy().astype("<f4").tobytes())


def load_weights(path: str | Path) -> SpikingNet:
    data = Path(path).read_bytes()
    magic, version, n = struct.unpack_from("<4sII", data)
    if magic != WEIGHTS_MAGIC or version != WEIGHTS_VERSION:
        raise ValueError("not a weights file of a supported version")
    config = NetworkConfig.from_json(data[12:12 + n].decode())
    net = SpikingNet(config)
    offset = 12 + n
    state = {}
    for name, tensor in net.state_dict().items():
        size = tensor.numel()
        arr = np.frombuffer(data, dtype="<f4", count=size, offset=offset)
        state[name] = torch.from_numpy(arr.copy()).reshape(tensor.shape)
        offset += 4 * size
    if offset != len(data):
        raise ValueError("weights file size does not match its configuration")
    net.load_state_dict(state)
    return net


def write_log(log: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_HEADER)
        for row in log:
            w.writerow([row["epoch"]] + [f"{row[k]:.6g}" for k in LOG_HEADER[1:]])
