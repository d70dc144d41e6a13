"""Dataset assembly for the harness.

Each split is a :class:`Split`: ``inputs`` [N, T, ...] ready for the model,
``raw`` [N, T, ...] for the front-end-off baseline, and ``labels`` [N].
"""
from __future__ import annotations

import functools
from dataclasses import astuple, dataclass

import numpy as np

from ..encoders import EncoderConfig, delta_encode, latency_encode, rate_encode
from ..events import EventStream, events_to_frames, read_idx, synth_gesture
from .config import DataConfig, RunConfig


@dataclass
class Split:
    inputs: np.ndarray   # spikes fed to the front-end (uint8)
    raw: np.ndarray      # normalized raw sequence for the front-end-off variant
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)


def gesture_stream(data: DataConfig, index: int, split: str) -> EventStream:
    """Sample ``index`` of a split; labels cycle through the classes."""
    label = index % data.n_classes
    offset = 0 if split == "train" else 7_919_993
    return synth_gesture(label, data.seed * 1_000_003 + offset + index, data.duration_us,
                         data.width, data.height, data.event_rate)


def gesture_frames(data: DataConfig, index: int, split: str) -> tuple[np.ndarray, int]:
    stream = gesture_stream(data, index, split)
    label = stream.label
    frames = events_to_frames(stream, data.bin_us, data.t_max)
    if frames.shape[0] < data.t_max:
        pad = np.zeros((data.t_max - frames.shape[0],) + frames.shape[1:])
        frames = np.concatenate([frames, pad])
    return frames.astype(np.uint8), label


@functools.lru_cache(maxsize=8)
def _gesture_split(key: tuple, split: str) -> Split:
    data = DataConfig(*key)
    n = data.n_train if split == "train" else data.n_test
    frames, labels = zip(*(gesture_frames(data, i, split) for i in range(n))) if n else ((), ())
    x = np.stack(frames) if n else np.zeros((0, data.t_max, 2, data.height, data.width), np.uint8)
    return Split(x, x, np.asarray(labels, dtype=np.int64))


def encode_rows(images: np.ndarray, enc: EncoderConfig) -> np.ndarray:
    """Row-sequential spike code of images [N, R, F] -> [N, steps, features].

    rate/latency schemes give ``enc.T`` steps per row; delta coding uses the
    rows themselves as time and doubles the features (OFF, ON).
    """
    enc.validate()
    n, rows, feats = images.shape
    if enc.scheme == "delta":
        out = delta_encode(np.moveaxis(images, 1, 0), enc.theta_delta)   # [R, 2, N, F]
        return np.moveaxis(out, 2, 0).reshape(n, rows, 2 * feats).astype(np.uint8)
    if enc.scheme == "latency":
        s = latency_encode(images, enc.T, enc.x_min_latency)              # [T, N, R, F]
    else:
        mode = "poisson" if enc.scheme == "rate-poisson" else "deterministic"
        s = rate_encode(images, enc.T, mode, enc.seed)
    return np.transpose(s, (1, 2, 0, 3)).reshape(n, rows * enc.T, feats).astype(np.uint8)


def _mnist_split(cfg: RunConfig, split: str) -> Split:
    d = cfg.data
    images_path = d.train_images if split == "train" else d.test_images
    labels_path = d.train_labels if split == "train" else d.test_labels
    if not images_path or not labels_path:
        raise FileNotFoundError(f"data.{split}_images / data.{split}_labels must point to IDX files")
    images = read_idx(images_path, labels_path)
    n = d.n_train if split == "train" else d.n_test
    keep = np.flatnonzero(images.labels < d.n_classes)[:n]
    imgs, labels = images.images[keep], images.labels[keep]
    return Split(encode_rows(imgs, cfg.encoder), imgs, labels)


def load_split(cfg: RunConfig, split: str) -> Split:
    if cfg.data.dataset == "synth-gesture":
        return _gesture_split(astuple(cfg.data), split)
    return _mnist_split(cfg, split)
