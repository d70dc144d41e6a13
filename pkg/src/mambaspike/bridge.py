"""Spike-to-activation interface between the spiking front-end and the backbone.

Spikes [T, ..., D] are accumulated over non-overlapping windows of ``W``
steps, giving L = ceil(T / W) activation rows. Optional timing features
(first-spike latency per window, sinusoidal window position) are appended on
the feature axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .neurons import temporal_pool
from .tensor import Tensor, concat, stack, where

NORM_MODES = ("rate", "running-rate")
FEATURE_MODES = ("none", "first-spike-latency", "positional", "both")


@dataclass
class BridgeConfig:
    W: int = 2
    norm_mode: str = "rate"
    ema_decay: float = 0.9
    temporal_features: str = "none"
    eps: float = 1e-3
    pos_dims: int = 8

    def validate(self) -> None:
        if self.W < 1:
            raise ValueError("bridge window W must be >= 1")
        if self.norm_mode not in NORM_MODES:
            raise ValueError(f"unknown norm_mode {self.norm_mode!r}")
        if self.temporal_features not in FEATURE_MODES:
            raise ValueError(f"unknown temporal_features {self.temporal_features!r}")
        if not 0 < self.ema_decay < 1:
            raise ValueError("ema_decay must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.pos_dims < 0 or self.pos_dims % 2:
            raise ValueError("pos_dims must be a non-negative even number")


@dataclass
class ActivationSeq:
    values: Tensor             # [L, ..., D]
    window_index: np.ndarray   # [L] source window of each row
    window_start: np.ndarray   # [L] first time step of each window
    window_length: np.ndarray  # [L] steps in each window (last may be short)


def _windows(T: int, W: int):
    L = math.ceil(T / W)
    start = np.arange(L) * W
    length = np.minimum(start + W, T) - start
    return start, length


def spikes_to_activations(s, cfg: BridgeConfig) -> ActivationSeq:
    """Windowed spike counts normalized to activations.

    rate: ``count / window_length``.
    running-rate: the rate divided by a per-neuron moving average of past
    window rates, floored at ``eps``; the average is seeded with the first
    window's rate.
    """
    cfg.validate()
    s = s if isinstance(s, Tensor) else Tensor(s)
    start, length = _windows(s.shape[0], cfg.W)
    rate = temporal_pool(s, cfg.W, "mean")
    if cfg.norm_mode == "running-rate":
        rows, rbar = [], rate[0]
        for w in range(rate.shape[0]):
            floor = where(rbar.data > cfg.eps, rbar, cfg.eps)
            rows.append(rate[w] / floor)
            rbar = rbar * cfg.ema_decay + rate[w] * (1.0 - cfg.ema_decay)
        rate = stack(rows)
    return ActivationSeq(rate, np.arange(len(start)), start, length)


def positional_code(n_windows: int, dims: int, max_period: float = 10_000.0) -> np.ndarray:
    """[n_windows, dims]: even dims sine, odd dims cosine, geometric wavelengths."""
    pos = np.arange(n_windows, dtype=np.float64)[:, None]
    freq = max_period ** (-np.arange(0, dims, 2, dtype=np.float64) / max(dims, 1))
    code = np.zeros((n_windows, dims))
    code[:, 0::2] = np.sin(pos * freq)
    code[:, 1::2] = np.cos(pos * freq)
    return code


def first_spike_latency(s: np.ndarray, W: int) -> np.ndarray:
    """Per window and channel, first-spike offset / window length; 1.0 if silent."""
    T = s.shape[0]
    start, length = _windows(T, W)
    out = np.ones((len(start),) + s.shape[1:])
    for w, (t0, n) in enumerate(zip(start, length)):
        block = s[t0:t0 + n] > 0
        has = block.any(axis=0)
        first = np.argmax(block, axis=0)
        out[w] = np.where(has, first / n, 1.0)
    return out


def temporal_features(s, cfg: BridgeConfig) -> Tensor:
    """Timing features [L, ..., D_f] computed from spikes [T, ..., D]."""
    cfg.validate()
    if cfg.temporal_features == "none":
        raise ValueError("temporal_features is 'none'")
    s = s.data if isinstance(s, Tensor) else np.asarray(s, dtype=np.float64)
    L = math.ceil(s.shape[0] / cfg.W)
    parts = []
    if cfg.temporal_features in ("first-spike-latency", "both"):
        parts.append(first_spike_latency(s, cfg.W))
    if cfg.temporal_features in ("positional", "both"):
        code = positional_code(L, cfg.pos_dims)
        lead = s.shape[1:-1]
        code = code.reshape((L,) + (1,) * len(lead) + (cfg.pos_dims,))
        parts.append(np.broadcast_to(code, (L,) + lead + (cfg.pos_dims,)))
    return Tensor(np.concatenate(parts, axis=-1))


def feature_dim(d: int, cfg: BridgeConfig) -> int:
    extra = 0
    if cfg.temporal_features in ("first-spike-latency", "both"):
        extra += d
    if cfg.temporal_features in ("positional", "both"):
        extra += cfg.pos_dims
    return d + extra


def bridge(s, cfg: BridgeConfig) -> Tensor:
    """Activations with timing features appended: [L, ..., feature_dim(D)]."""
    act = spikes_to_activations(s, cfg).values
    if cfg.temporal_features == "none":
        return act
    return concat([act, temporal_features(s, cfg)], axis=-1)
