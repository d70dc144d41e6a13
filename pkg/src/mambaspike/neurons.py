"""Spiking neuron layers trained with surrogate gradients.

Shapes follow a time-major convention: every sequence is [T, ...] and the
neuron state has the trailing shape.

LIF step (beta = exp(-dt/tau_m), rho = exp(-dt/tau_a))::

    V[t]  = beta * V[t-1] + I[t]
    th[t] = theta0 + a[t-1]
    s[t]  = V[t] >= th[t]
    V[t] -= s[t] * th[t]                 (soft reset)
    a[t]  = rho * a[t-1] + delta_a * s[t]

The forward pass uses the hard threshold; the backward pass replaces its
derivative with the fast-sigmoid surrogate ``1 / (1 + k|u|)^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import Module, param
from .tensor import Tensor, concat, conv2d, matmul, stack

__all__ = [
    "LIFParams",
    "SRMParams",
    "NeuronState",
    "surrogate_grad",
    "spike_fn",
    "lif_forward",
    "srm_forward",
    "LIF",
    "SRM",
    "spiking_conv2d",
    "spiking_recurrent",
    "temporal_pool",
    "SpikingConv2d",
    "SpikingDense",
    "SpikingRecurrent",
]


@dataclass
class LIFParams:
    tau_m: float = 30.0
    dt: float = 1.0
    theta0: float = 1.0
    adaptive: bool = False
    tau_a: float = 100.0
    delta_a: float = 0.05
    k: float = 25.0
    learn_tau: bool = False
    learn_theta: bool = False

    def validate(self) -> None:
        if self.tau_m <= 0 or self.dt <= 0 or self.theta0 <= 0 or self.tau_a <= 0:
            raise ValueError("tau_m, dt, theta0 and tau_a must be positive")
        if self.delta_a < 0:
            raise ValueError("delta_a must be non-negative")
        if self.k <= 0:
            raise ValueError("surrogate slope k must be positive")

    @property
    def beta(self) -> float:
        return math.exp(-self.dt / self.tau_m)

    @property
    def rho(self) -> float:
        return math.exp(-self.dt / self.tau_a)


@dataclass
class SRMParams:
    tau_m: float = 30.0
    tau_s: float = 5.0
    tau_r: float = 10.0
    eta0: float = 1.0
    theta0: float = 1.0
    dt: float = 1.0
    k: float = 25.0

    def validate(self) -> None:
        if min(self.tau_m, self.tau_s, self.tau_r, self.dt) <= 0:
            raise ValueError("SRM time constants and dt must be positive")
        if self.tau_m == self.tau_s:
            raise ValueError("tau_m and tau_s must differ (degenerate PSP kernel)")
        if self.theta0 <= 0 or self.k <= 0:
            raise ValueError("theta0 and k must be positive")


@dataclass
class NeuronState:
    V: Tensor | None = None
    a: Tensor | None = None
    syn: Tensor | None = None
    ref: Tensor | None = None


def surrogate_grad(u, k: float = 25.0) -> np.ndarray:
    """Fast-sigmoid pseudo-derivative of the spike nonlinearity at margin ``u``."""
    u = u.data if isinstance(u, Tensor) else np.asarray(u, dtype=np.float64)
    return 1.0 / (1.0 + k * np.abs(u)) ** 2


def spike_fn(u: Tensor, k: float = 25.0, relaxed: bool = False) -> Tensor:
    """Heaviside spike with surrogate backward.

    ``relaxed=True`` swaps the forward for ``sigmoid(k*u)``, a smooth network
    whose gradients can be checked against finite differences.
    """
    if relaxed:
        return (u * k).sigmoid()
    x = u.data
    out = (x >= 0).astype(np.float64)
    return Tensor.from_op(out, (u,), lambda g: (g * surrogate_grad(x, k),), "spike")


def _check_finite(V: Tensor, t: int) -> None:
    if not np.all(np.isfinite(V.data)):
        raise FloatingPointError(f"non-finite membrane potential at step {t}")


def _zeros_like_step(x: Tensor) -> Tensor:
    return Tensor(np.zeros(x.shape[1:]))


def _lif_step(V, a, I_t, beta, theta0, p: LIFParams, relaxed: bool):
    V = V * beta + I_t
    theta = theta0 + a if p.adaptive else theta0
    s = spike_fn(V - theta, p.k, relaxed)
    v_pre = V
    V = V - s * theta
    if p.adaptive:
        a = a * p.rho + s * p.delta_a
    return s, v_pre, V, a


def lif_forward(I, params: LIFParams, state0: NeuronState | None = None, *,
                beta=None, theta0=None, relaxed: bool = False):
    """Run LIF dynamics over ``I`` [T, ...].

    ``beta`` and ``theta0`` override the values derived from ``params`` and may
    be tensors (learnable). Returns ``(spikes, final_state, V_trace)``, where
    ``V_trace`` holds the membrane potential before reset.
    """
    params.validate()
    I = I if isinstance(I, Tensor) else Tensor(I)
    beta = params.beta if beta is None else beta
    theta0 = params.theta0 if theta0 is None else theta0
    state0 = state0 or NeuronState()
    V = state0.V if state0.V is not None else _zeros_like_step(I)
    a = state0.a if state0.a is not None else _zeros_like_step(I)
    spikes, trace = [], []
    for t in range(I.shape[0]):
        s, v_pre, V, a = _lif_step(V, a, I[t], beta, theta0, params, relaxed)
        _check_finite(V, t)
        spikes.append(s)
        trace.append(v_pre)
    return stack(spikes), NeuronState(V=V, a=a), stack(trace)


def _srm_dynamics(drive: Tensor, p: SRMParams, state0: NeuronState | None, relaxed: bool):
    p.validate()
    alpha_s = math.exp(-p.dt / p.tau_s)
    beta_m = math.exp(-p.dt / p.tau_m)
    beta_r = math.exp(-p.dt / p.tau_r)
    state0 = state0 or NeuronState()
    syn = state0.syn if state0.syn is not None else _zeros_like_step(drive)
    V = state0.V if state0.V is not None else _zeros_like_step(drive)
    ref = state0.ref if state0.ref is not None else _zeros_like_step(drive)
    spikes, trace = [], []
    for t in range(drive.shape[0]):
        syn = syn * alpha_s + drive[t]
        V = V * beta_m + syn * (1.0 - beta_m) - ref * p.eta0
        _check_finite(V, t)
        s = spike_fn(V - p.theta0, p.k, relaxed)
        ref = ref * beta_r + s
        spikes.append(s)
        trace.append(V)
    return stack(spikes), NeuronState(V=V, syn=syn, ref=ref), stack(trace)


def srm_forward(s_in, W, params: SRMParams, state0: NeuronState | None = None, *,
                relaxed: bool = False):
    """Spike Response Model layer: double-exponential PSP plus refractory kernel.

    ``s_in`` is [T, ..., N_in], ``W`` is [N_in, N_out]. Returns
    ``(spikes, final_state, V_trace)``.
    """
    s_in = s_in if isinstance(s_in, Tensor) else Tensor(s_in)
    drive = matmul(s_in, W if isinstance(W, Tensor) else Tensor(W))
    return _srm_dynamics(drive, params, state0, relaxed)


class LIF(Module):
    """LIF population with optional learnable membrane decay and threshold.

    A learnable decay is stored as a raw logit so that ``beta = sigmoid(raw)``
    stays in (0, 1).
    """

    def __init__(self, params: LIFParams):
        params.validate()
        self.params = params
        if params.learn_tau:
            b = params.beta
            self.beta_raw = param(math.log(b / (1.0 - b)))
        if params.learn_theta:
            self.theta0 = param(params.theta0)

    def __call__(self, drive, state0=None, relaxed: bool = False):
        beta = self.beta_raw.sigmoid() if self.params.learn_tau else None
        theta0 = self.theta0 if self.params.learn_theta else None
        return lif_forward(drive, self.params, state0, beta=beta, theta0=theta0, relaxed=relaxed)


class SRM(Module):
    def __init__(self, params: SRMParams):
        params.validate()
        self.params = params

    def __call__(self, drive, state0=None, relaxed: bool = False):
        drive = drive if isinstance(drive, Tensor) else Tensor(drive)
        return _srm_dynamics(drive, self.params, state0, relaxed)


def _conv_over_time(s_in: Tensor, kernels: Tensor, stride: int, padding: int) -> Tensor:
    lead = s_in.shape[:-3]
    flat = s_in.reshape((-1,) + s_in.shape[-3:])
    cur = conv2d(flat, kernels, stride=stride, padding=padding)
    return cur.reshape(lead + cur.shape[1:])


def spiking_conv2d(s_in, kernels, lif: LIFParams, stride: int = 1, padding: int = 0,
                   state0: NeuronState | None = None, relaxed: bool = False):
    """Convolve each step's spike map, then integrate with LIF neurons.

    ``s_in`` is [T, C_in, H, W] or [T, B, C_in, H, W]; returns
    ``(spikes, final_state)``.
    """
    s_in = s_in if isinstance(s_in, Tensor) else Tensor(s_in)
    kernels = kernels if isinstance(kernels, Tensor) else Tensor(kernels)
    cur = _conv_over_time(s_in, kernels, stride, padding)
    spikes, state, _ = lif_forward(cur, lif, state0, relaxed=relaxed)
    return spikes, state


def spiking_recurrent(s_in, W_in, W_rec, lif: LIFParams, state0: NeuronState | None = None,
                      zero_diagonal: bool = False, relaxed: bool = False):
    """LIF layer driven by its input and its own previous spikes.

    ``I[t] = s_in[t] @ W_in + s_out[t-1] @ W_rec``. Returns ``(spikes, final_state)``.
    """
    lif.validate()
    s_in = s_in if isinstance(s_in, Tensor) else Tensor(s_in)
    W_in = W_in if isinstance(W_in, Tensor) else Tensor(W_in)
    W_rec = W_rec if isinstance(W_rec, Tensor) else Tensor(W_rec)
    if zero_diagonal:
        W_rec = W_rec * (1.0 - np.eye(W_rec.shape[0]))
    unbatched = s_in.ndim == 2
    if unbatched:
        s_in = s_in.reshape(s_in.shape[0], 1, s_in.shape[1])
    ff = matmul(s_in, W_in)
    state0 = state0 or NeuronState()
    V = state0.V if state0.V is not None else _zeros_like_step(ff)
    a = state0.a if state0.a is not None else _zeros_like_step(ff)
    if unbatched:
        V, a = V.reshape(ff.shape[1:]), a.reshape(ff.shape[1:])
    prev = Tensor(np.zeros(ff.shape[1:]))
    spikes = []
    for t in range(ff.shape[0]):
        I_t = ff[t] + matmul(prev, W_rec)
        prev, _, V, a = _lif_step(V, a, I_t, lif.beta, lif.theta0, lif, relaxed)
        _check_finite(V, t)
        spikes.append(prev)
    out = stack(spikes)
    if unbatched:
        out, V, a = out.reshape(out.shape[0], -1), V.reshape(-1), a.reshape(-1)
    return out, NeuronState(V=V, a=a)


def temporal_pool(s, window: int, mode: str = "max") -> Tensor:
    """Non-overlapping max or mean pooling over time; a short last window is
    averaged over its actual length."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if mode not in ("max", "mean"):
        raise ValueError(f"unknown pooling mode {mode!r}")
    s = s if isinstance(s, Tensor) else Tensor(s)
    T = s.shape[0]
    n_full, rest = divmod(T, window)
    parts = []
    if n_full:
        body = s[:n_full * window].reshape((n_full, window) + s.shape[1:])
        parts.append(body.max(axis=1) if mode == "max" else body.mean(axis=1))
    if rest:
        tail = s[n_full * window:]
        parts.append((tail.max(axis=0, keepdims=True) if mode == "max"
                      else tail.mean(axis=0, keepdims=True)))
    return parts[0] if len(parts) == 1 else concat(parts, axis=0)


# -- trainable layers -------------------------------------------------------

def _neuron(kind: str, lif: LIFParams, srm: SRMParams) -> Module:
    if kind == "lif":
        return LIF(lif)
    if kind == "srm":
        return SRM(srm)
    raise ValueError(f"unknown neuron model {kind!r}")


class SpikingConv2d(Module):
    """Learnable spiking convolution over [T, B, C, H, W] spike maps."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, *,
                 stride: int = 1, padding: int = 0, neuron: str = "lif",
                 lif: LIFParams | None = None, srm: SRMParams | None = None,
                 gain: float = 1.0):
        fan_in = c_in * kernel * kernel
        self.weight = param(rng.normal(0.0, gain / math.sqrt(fan_in), size=(c_out, c_in, kernel, kernel)))
        self.stride, self.padding = stride, padding
        self.neuron = _neuron(neuron, lif or LIFParams(), srm or SRMParams())

    def out_shape(self, h: int, w: int) -> tuple[int, int]:
        k = self.weight.shape[-1]
        return ((h + 2 * self.padding - k) // self.stride + 1,
                (w + 2 * self.padding - k) // self.stride + 1)

    def __call__(self, s: Tensor, relaxed: bool = False) -> Tensor:
        cur = _conv_over_time(s, self.weight, self.stride, self.padding)
        return self.neuron(cur, relaxed=relaxed)[0]


class SpikingDense(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, *, neuron: str = "lif",
                 lif: LIFParams | None = None, srm: SRMParams | None = None, gain: float = 1.0):
        self.weight = param(rng.normal(0.0, gain / math.sqrt(n_in), size=(n_in, n_out)))
        self.neuron = _neuron(neuron, lif or LIFParams(), srm or SRMParams())

    def __call__(self, s: Tensor, relaxed: bool = False) -> Tensor:
        return self.neuron(matmul(s, self.weight), relaxed=relaxed)[0]


class SpikingRecurrent(Module):
    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator, *,
                 lif: LIFParams | None = None, gain: float = 1.0, rec_gain: float = 0.5,
                 zero_diagonal: bool = True):
        self.w_in = param(rng.normal(0.0, gain / math.sqrt(n_in), size=(n_in, n_hidden)))
        self.w_rec = param(rng.normal(0.0, rec_gain / math.sqrt(n_hidden), size=(n_hidden, n_hidden)))
        self.lif = lif or LIFParams()
        self.zero_diagonal = zero_diagonal

    def __call__(self, s: Tensor, relaxed: bool = False) -> Tensor:
        return spiking_recurrent(s, self.w_in, self.w_rec, self.lif,
                                 zero_diagonal=self.zero_diagonal, relaxed=relaxed)[0]
