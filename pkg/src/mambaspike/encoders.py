"""Rate, latency and delta spike encoders.

All encoders return dense binary float arrays with time as the leading axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCHEMES = ("rate-deterministic", "rate-poisson", "latency", "delta")


@dataclass
class EncoderConfig:
    scheme: str = "rate-deterministic"
    T: int = 8
    seed: int = 0
    theta_delta: float = 0.1
    x_min_latency: float = 0.01

    def validate(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown encoder scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.theta_delta <= 0:
            raise ValueError("theta_delta must be positive")
        if not 0 < self.x_min_latency <= 1:
            raise ValueError("x_min_latency must lie in (0, 1]")


def _round_half_up(v):
    return np.floor(np.asarray(v) + 0.5).astype(np.int64)


def _unit_interval(x, clip: bool) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if clip:
        return np.clip(x, 0.0, 1.0)
    if np.any((x < 0) | (x > 1)) or np.any(np.isnan(x)):
        raise ValueError("encoder input must lie in [0, 1]")
    return x


def rate_encode(x, T: int, mode: str = "deterministic", seed: int = 0,
                clip: bool = True) -> np.ndarray:
    """Rate code ``x`` into ``T`` steps.

    deterministic: ``round(x*T)`` spikes at steps ``floor(k*T/count)``.
    poisson: an independent Bernoulli(x) draw per step.
    """
    x = _unit_interval(x, clip)
    if mode == "poisson":
        rng = np.random.default_rng(seed)
        return (rng.random((T,) + x.shape) < x).astype(np.float64)
    if mode != "deterministic":
        raise ValueError(f"unknown rate mode {mode!r}")
    count = _round_half_up(x * T).reshape(-1)
    k = np.arange(T)[:, None]
    valid = k < count[None, :]
    pos = (k * T) // np.maximum(count, 1)[None, :]
    cols = np.broadcast_to(np.arange(count.size), valid.shape)
    out = np.zeros((T, count.size))
    out[pos[valid], cols[valid]] = 1.0
    return out.reshape((T,) + x.shape)


def latency_encode(x, T: int, x_min: float = 0.01, clip: bool = True) -> np.ndarray:
    """One spike at ``round_half_up((1 - x) * (T - 1))``; none below ``x_min``."""
    x = _unit_interval(x, clip)
    t_star = _round_half_up((1.0 - x) * (T - 1))
    out = np.zeros((T,) + x.shape)
    fire = x >= x_min
    steps = np.arange(T).reshape((T,) + (1,) * x.ndim)
    out[(steps == t_star) & fire] = 1.0
    return out


def delta_encode(signal, theta: float) -> np.ndarray:
    """Threshold-crossing code of ``signal`` [T_in, ...] -> [T_in, 2, ...].

    The reference starts at ``signal[0]`` and moves by ``theta`` per crossing;
    several crossings within one step saturate to a single spike.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    signal = np.asarray(signal, dtype=np.float64)
    out = np.zeros((signal.shape[0], 2) + signal.shape[1:])
    ref = signal[0].copy()
    for t in range(1, signal.shape[0]):
        s = signal[t]
        while True:
            up = s - ref >= theta
            if not up.any():
                break
            out[t, 1] = np.maximum(out[t, 1], up)
            ref = np.where(up, ref + theta, ref)
        while True:
            down = ref - s >= theta
            if not down.any():
                break
            out[t, 0] = np.maximum(out[t, 0], down)
            ref = np.where(down, ref - theta, ref)
    return out


def encode(x, cfg: EncoderConfig) -> np.ndarray:
    """Dispatch on ``cfg.scheme``; delta coding treats the leading axis as time."""
    cfg.validate()
    if cfg.scheme == "rate-deterministic":
        return rate_encode(x, cfg.T, "deterministic")
    if cfg.scheme == "rate-poisson":
        return rate_encode(x, cfg.T, "poisson", cfg.seed)
    if cfg.scheme == "latency":
        return latency_encode(x, cfg.T, cfg.x_min_latency)
    return delta_encode(x, cfg.theta_delta)
