"""Spiking neural network ball detector on event-camera spike frames."""

from .coding import N_CLASSES, N_OUT, Detection, decode, decode_centroid, encode_target, loss_mse
from .data import EventDataset, EventWindow, synthesize_event_dataset
from .network import NetworkConfig, SpikeFunction, SpikingNet, SynOpsReport, conv_fanout, forward, integrate_and_fire
from .train import (
    EvalReport,
    TrainResult,
    compare_loss_activity,
    evaluate,
    load_weights,
    save_weights,
    train,
    write_log,
)

__all__ = [
    "Detection",
    "EvalReport",
    "EventDataset",
    "EventWindow",
    "N_CLASSES",
    "N_OUT",
    "NetworkConfig",
    "SpikeFunction",
    "SpikingNet",
    "SynOpsReport",
    "TrainResult",
    "compare_loss_activity",
    "conv_fanout",
    "decode",
    "decode_centroid",
    "encode_target",
    "evaluate",
    "forward",
    "integrate_and_fire",
    "load_weights",
    "loss_mse",
    "save_weights",
    "synthesize_event_dataset",
    "train",
    "write_log",
]
