"""Selective state-space backbone: scan, gated block, stack and classifier head.

Per channel d and time t (state size N)::

    Abar[t] = exp(delta[t, d] * A[d, :])
    h[t]    = Abar[t] * h[t-1] + delta[t, d] * B[t, :] * x[t, d]
    y[t, d] = <C[t, :], h[t]> + D_skip[d] * x[t, d]

``A`` is kept strictly negative (``A = -exp(A_log)``) and ``delta`` positive
(softplus), so every decay factor lies in (0, 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import Linear, Module, RMSNorm, param
from .tensor import Tensor, causal_depthwise_conv1d, stack

__all__ = [
    "selective_scan_ref",
    "selective_scan_fast",
    "chunked_linear_scan",
    "MambaBlock",
    "MambaClassifier",
    "BackboneConfig",
    "classify",
]


def _check_scan_inputs(x, delta, A, B, C, D_skip):
    L, D = x.shape[-2:]
    N = A.shape[-1]
    if delta.shape != x.shape or A.shape != (D, N) or B.shape != x.shape[:-1] + (N,) \
            or C.shape != B.shape or D_skip.shape != (D,):
        raise ValueError(
            f"selective scan shapes disagree: x {x.shape}, delta {delta.shape}, A {A.shape}, "
            f"B {B.shape}, C {C.shape}, D_skip {D_skip.shape}")
    if not np.all(delta.data > 0):
        raise ValueError("selective scan requires delta > 0 everywhere")


def _lift(v) -> Tensor:
    return v if isinstance(v, Tensor) else Tensor(v)


def selective_scan_ref(x, delta, A, B, C, D_skip) -> Tensor:
    """Strictly sequential scan built from elementary differentiable ops.

    x, delta: [..., L, D]; A: [D, N]; B, C: [..., L, N]; D_skip: [D].
    """
    x, delta, A, B, C, D_skip = map(_lift, (x, delta, A, B, C, D_skip))
    _check_scan_inputs(x, delta, A, B, C, D_skip)
    D, N = A.shape
    lead = x.shape[:-2]
    state_shape = lead + (D, N)
    h = Tensor(np.zeros(state_shape))
    ys = []
    for t in range(x.shape[-2]):
        d_t = delta[..., t, :].reshape(lead + (D, 1)).broadcast_to(state_shape)
        x_t = x[..., t, :]
        b_t = B[..., t, :].reshape(lead + (1, N)).broadcast_to(state_shape)
        c_t = C[..., t, :].reshape(lead + (1, N)).broadcast_to(state_shape)
        xd = x_t.reshape(lead + (D, 1)).broadcast_to(state_shape)
        h = (d_t * A).exp() * h + d_t * b_t * xd
        ys.append((h * c_t).sum(axis=-1) + D_skip * x_t)
    return stack(ys, axis=-2)


def chunked_linear_scan(log_decay: np.ndarray, inputs: np.ndarray, chunk: int) -> np.ndarray:
    """Solve ``h[t] = exp(log_decay[t]) * h[t-1] + inputs[t]`` (h[-1] = 0).

    Time is axis -3. Inside a chunk of ``c`` steps the states are computed at
    once from cumulative log-decays ``S``: ``h[t] = exp(S[t]) h_in +
    sum_{s<=t} exp(S[t] - S[s]) inputs[s]``; ``h_in`` carries across chunks.
    Work is O(L * chunk).
    """
    if chunk < 1:
        raise ValueError("chunk must be >= 1")
    L = inputs.shape[-3]
    out = np.empty_like(inputs)
    carry = np.zeros(inputs.shape[:-3] + inputs.shape[-2:])
    for c0 in range(0, L, chunk):
        c1 = min(c0 + chunk, L)
        n = c1 - c0
        S = np.cumsum(log_decay[..., c0:c1, :, :], axis=-3)
        diff = S[..., :, None, :, :] - S[..., None, :, :, :]
        causal = np.tril(np.ones((n, n), dtype=bool))[:, :, None, None]
        weights = np.exp(np.where(causal, diff, -np.inf))
        h = np.einsum("...tsdn,...sdn->...tdn", weights, inputs[..., c0:c1, :, :])
        h += np.exp(S) * carry[..., None, :, :]
        out[..., c0:c1, :, :] = h
        carry = h[..., -1, :, :]
    return out


def selective_scan_fast(x, delta, A, B, C, D_skip, chunk: int = 16) -> Tensor:
    """Chunked selective scan as a single differentiable op.

    Same contract as :func:`selective_scan_ref`. The backward pass runs the
    adjoint recurrence ``lam[t] = dL/dh[t] + Abar[t+1] * lam[t+1]`` with the
    same chunked solver in reverse time.
    """
    x, delta, A, B, C, D_skip = map(_lift, (x, delta, A, B, C, D_skip))
    _check_scan_inputs(x, delta, A, B, C, D_skip)
    xd, dd, Ad, Bd, Cd, Dd = (t.data for t in (x, delta, A, B, C, D_skip))
    log_decay = dd[..., :, :, None] * Ad                      # [..., L, D, N]
    u = (dd * xd)[..., :, :, None] * Bd[..., :, None, :]      # [..., L, D, N]
    h = chunked_linear_scan(log_decay, u, chunk)
    y = np.einsum("...tdn,...tn->...td", h, Cd) + Dd * xd

    def _bw(gy):
        gh = gy[..., :, :, None] * Cd[..., :, None, :]
        # reverse time; the decay applied when stepping t+1 -> t is log_decay[t+1]
        rev_decay = np.zeros_like(log_decay)
        rev_decay[..., 1:, :, :] = np.flip(log_decay, axis=-3)[..., :-1, :, :]
        lam = np.flip(chunked_linear_scan(rev_decay, np.flip(gh, axis=-3), chunk), axis=-3)
        h_prev = np.zeros_like(h)
        h_prev[..., 1:, :, :] = h[..., :-1, :, :]
        g_log = lam * np.exp(log_decay) * h_prev
        batch_axes = tuple(range(xd.ndim - 2))
        gx = np.einsum("...tdn,...td,...tn->...td", lam, dd, Bd) + gy * Dd
        g_delta = np.einsum("...tdn,dn->...td", g_log, Ad) + \
            np.einsum("...tdn,...td,...tn->...td", lam, xd, Bd)
        gA = (g_log * dd[..., None]).reshape(-1, *Ad.shape).sum(axis=0)
        gB = np.einsum("...tdn,...td->...tn", lam, dd * xd)
        gC = np.einsum("...td,...tdn->...tn", gy, h)
        gD = (gy * xd).sum(axis=batch_axes + (xd.ndim - 2,))
        return gx, g_delta, gA, gB, gC, gD

    return Tensor.from_op(y, (x, delta, A, B, C, D_skip), _bw, "selective_scan")


def _inverse_softplus(y: np.ndarray) -> np.ndarray:
    return y + np.log(-np.expm1(-y))


class MambaBlock(Module):
    """Pre-norm gated selective-SSM block with a residual connection.

    ``[L, D] -> [L, D]`` (leading batch axes allowed). The inner width is
    ``E = expand * D``; ``B``, ``C`` and the step size ``delta`` are computed
    from the convolved input, which is what makes the scan selective.
    """

    def __init__(self, d_model: int, rng: np.random.Generator, *, expand: int = 2,
                 d_state: int = 8, d_conv: int = 4, dt_rank: int | None = None,
                 dt_min: float = 0.01, dt_max: float = 0.1, chunk: int = 16):
        if expand < 1 or d_conv < 1:
            raise ValueError("expand and d_conv must be >= 1")
        E = expand * d_model
        R = dt_rank or math.ceil(d_model / 16)
        self.d_inner, self.d_state, self.chunk = E, d_state, chunk
        self.norm = RMSNorm(d_model)
        self.in_proj = Linear(d_model, 2 * E, rng, bias=False)
        self.conv_kernel = param(rng.uniform(-1, 1, size=(d_conv, E)) / math.sqrt(d_conv))
        self.conv_bias = param(np.zeros(E))
        self.w_B = Linear(E, d_state, rng, bias=False)
        self.w_C = Linear(E, d_state, rng, bias=False)
        self.dt_down = Linear(E, R, rng, bias=False)
        self.dt_up = Linear(R, E, rng)
        dt = np.exp(rng.uniform(math.log(dt_min), math.log(dt_max), size=E))
        self.dt_up.bias = param(_inverse_softplus(dt))
        self.A_log = param(np.log(np.tile(np.arange(1, d_state + 1, dtype=np.float64), (E, 1))))
        self.D_skip = param(np.ones(E))
        self.out_proj = Linear(E, d_model, rng, bias=False)

    def __call__(self, x: Tensor, scan=None) -> Tensor:
        scan = scan or (lambda *a: selective_scan_fast(*a, chunk=self.chunk))
        E = self.d_inner
        vg = self.in_proj(self.norm(x))
        v, g = vg[..., :E], vg[..., E:]
        v = (causal_depthwise_conv1d(v, self.conv_kernel) + self.conv_bias).silu()
        B = self.w_B(v)
        C = self.w_C(v)
        delta = self.dt_up(self.dt_down(v)).softplus()
        A = -self.A_log.exp()
        s = scan(v, delta, A, B, C, self.D_skip)
        return x + self.out_proj(s * g.silu())


@dataclass
class BackboneConfig:
    depth: int = 2
    d_model: int = 64
    expand: int = 2
    d_state: int = 8
    d_conv: int = 4
    head: str = "mean-pool"
    chunk: int = 16

    def validate(self) -> None:
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.head not in ("mean-pool", "last-step"):
            raise ValueError(f"unknown head {self.head!r}")
        if min(self.d_model, self.expand, self.d_state, self.d_conv, self.chunk) < 1:
            raise ValueError("backbone sizes must be >= 1")


class MambaClassifier(Module):
    """Stack of Mamba blocks, a sequence readout, and a linear head."""

    def __init__(self, cfg: BackboneConfig, n_classes: int, rng: np.random.Generator):
        cfg.validate()
        self.cfg = cfg
        self.blocks = [MambaBlock(cfg.d_model, rng, expand=cfg.expand, d_state=cfg.d_state,
                                  d_conv=cfg.d_conv, chunk=cfg.chunk) for _ in range(cfg.depth)]
        self.head = Linear(cfg.d_model, n_classes, rng)

    def features(self, seq: Tensor) -> Tensor:
        h = seq
        for block in self.blocks:
            h = block(h)
        return h[..., -1, :] if self.cfg.head == "last-step" else h.mean(axis=-2)

    def __call__(self, seq: Tensor) -> Tensor:
        if seq.shape[-2] < 1:
            raise ValueError("sequence must have at least one step")
        return self.head(self.features(seq))


def classify(seq, model: MambaClassifier) -> Tensor:
    """Class logits [..., C] for ``seq`` [..., L, D]; softmax belongs to the loss."""
    return model(_lift(seq))
