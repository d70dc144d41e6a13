"""The end-to-end classifier: spiking front-end -> bridge -> Mamba backbone."""
from __future__ import annotations

import math

import numpy as np

from ..bridge import bridge, feature_dim
from ..mamba import MambaClassifier
from ..nn import Linear, Module
from ..neurons import SpikingConv2d, SpikingDense, SpikingRecurrent
from ..tensor import Tensor, no_grad
from .config import RunConfig


class MambaSpikeNet(Module):
    """Classifier over batches [B, T, *step_shape].

    Frame inputs (step shape [C, H, W]) go through spiking convolutions;
    flat inputs (step shape [F]) through a dense or recurrent spiking layer.
    With the front-end disabled the raw sequence is embedded directly and the
    bridge is bypassed.
    """

    def __init__(self, cfg: RunConfig, step_shape: tuple, n_classes: int,
                 rng: np.random.Generator):
        self.cfg = cfg
        fe = cfg.frontend
        self.layers = []
        if fe.enabled:
            if len(step_shape) == 3:
                c, h, w = step_shape
                for c_out in fe.channels:
                    layer = SpikingConv2d(c, c_out, fe.kernel, rng, stride=fe.stride,
                                          padding=fe.kernel // 2, neuron=fe.neuron,
                                          lif=fe.lif, srm=fe.srm, gain=fe.gain)
                    h, w = layer.out_shape(h, w)
                    c = c_out
                    self.layers.append(layer)
                width = c * h * w
            else:
                n_in = int(np.prod(step_shape))
                if fe.recurrent:
                    self.layers.append(SpikingRecurrent(n_in, fe.hidden, rng, lif=fe.lif, gain=fe.gain))
                else:
                    self.layers.append(SpikingDense(n_in, fe.hidden, rng, neuron=fe.neuron,
                                                    lif=fe.lif, srm=fe.srm, gain=fe.gain))
                width = fe.hidden
            n_features = feature_dim(width, cfg.bridge)
        else:
            n_features = int(np.prod(step_shape))
        self.embed = Linear(n_features, cfg.backbone.d_model, rng)
        self.backbone = MambaClassifier(cfg.backbone, n_classes, rng)

    def decision_steps(self, T: int) -> int:
        """Sequence positions the backbone consumes before its readout."""
        return math.ceil(T / self.cfg.bridge.W) if self.cfg.frontend.enabled else T

    def frontend(self, x: np.ndarray, relaxed: bool = False) -> list[Tensor]:
        """Spike tensors [T, B, ...] for the input and every spiking layer."""
        s = Tensor(np.moveaxis(np.asarray(x, dtype=np.float64), 1, 0))
        outs = [s]
        for layer in self.layers:
            s = layer(s, relaxed=relaxed)
            outs.append(s)
        return outs

    def forward(self, x: np.ndarray, relaxed: bool = False):
        """Logits [B, C] and per-sample spike counts [B] (None without front-end)."""
        B, T = x.shape[:2]
        if not self.cfg.frontend.enabled:
            seq = Tensor(np.asarray(x, dtype=np.float64).reshape(B, T, -1))
            return self.backbone(self.embed(seq)), None
        spikes = self.frontend(x, relaxed)
        counts = sum(s.data.reshape(T, B, -1).sum(axis=(0, 2)) for s in spikes)
        last = spikes[-1].reshape(T, B, -1)
        seq = bridge(last, self.cfg.bridge).swapaxes(0, 1)
        return self.backbone(self.embed(seq)), counts

    def __call__(self, x):
        return self.forward(x)[0]


def count_spikes(model: MambaSpikeNet, sample: np.ndarray) -> int:
    """Spikes emitted for one sample [T, ...] by the encoder output and every
    spiking layer (bridge output excluded)."""
    if not model.cfg.frontend.enabled:
        raise ValueError("spike counts are not defined without the spiking front-end")
    with no_grad():
        _, counts = model.forward(np.asarray(sample)[None])
    return int(round(counts[0]))
