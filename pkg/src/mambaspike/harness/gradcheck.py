"""Finite-difference checks for every differentiable component of the model."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from ..bridge import bridge
from ..mamba import MambaBlock, MambaClassifier
from ..neurons import lif_forward, temporal_pool
from ..tensor import (Tensor, backward, causal_depthwise_conv1d, cross_entropy,
                      finite_difference_check, matmul)
from .config import RunConfig

TOLERANCE = 1e-4
SIGN_AGREEMENT_MIN = 0.8
# Central differences in float64 cannot resolve gradient entries in this band
# to 1e-4 relative error (the metric floors the denominator at 1e-8).
UNRESOLVABLE = (1e-13, 1e-6)


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


def _probe(rng, shape):
    """Fixed random weighting that turns an output into a scalar."""
    return Tensor(rng.normal(size=shape))


def spiking_net(x, W1, W2, lif, relaxed):
    """Two LIF layers over input spikes ``x`` [T, N_in]; returns output spikes."""
    s1, _, _ = lif_forward(matmul(x, W1), lif, relaxed=relaxed)
    s2, _, _ = lif_forward(matmul(s1, W2), lif, relaxed=relaxed)
    return s2


def spiking_case(rng, T=8, n_in=6, n_hid=5, n_out=3):
    """Random input spikes, two weight matrices and a per-output weighting of
    spike counts (the readout sees rates, as the bridge does)."""
    x = Tensor((rng.random((T, n_in)) < 0.4).astype(np.float64))
    W1 = rng.normal(0.0, 1.2 / np.sqrt(n_in), size=(n_in, n_hid))
    W2 = rng.normal(0.0, 1.5 / np.sqrt(n_hid), size=(n_hid, n_out))
    return x, W1, W2, _probe(rng, (n_out,))


def param_fn(module, name, x, r):
    """Loss as a function of one parameter of ``module``."""
    def f(w):
        old = module.get_parameter(name)
        module.set_parameter(name, w)
        try:
            return (module(x) * r).sum()
        finally:
            module.set_parameter(name, old)
    return f


def resolvable(grad: np.ndarray) -> bool:
    """True when no gradient entry falls in the band central differences
    cannot resolve. Decided from the analytic gradient alone."""
    g = np.abs(grad)
    return not np.any((g > UNRESOLVABLE[0]) & (g < UNRESOLVABLE[1]))


def conditioned_spiking_case(rng, lif, max_draws: int = 200):
    """First random spiking instance whose first-layer weight gradient is
    resolvable by finite differences."""
    for _ in range(max_draws):
        x, W1, W2, r = spiking_case(rng)
        w1 = Tensor(W1, requires_grad=True)
        g = backward((spiking_net(x, w1, Tensor(W2), lif, True) * r).sum(), [w1])[w1.node_id]
        if resolvable(g.data):
            return x, W1, W2, r
    raise RuntimeError(f"no resolvable spiking instance in {max_draws} draws")


def components(cfg: RunConfig, seed: int = 0) -> dict:
    """name -> (f, x) pairs; every f maps a tensor to a scalar."""
    rng = np.random.default_rng(seed)
    bb = cfg.backbone
    d_model = bb.d_model
    two = replace(bb, depth=2, chunk=min(bb.chunk, 4))
    lif = replace(cfg.frontend.lif, adaptive=False, learn_tau=False, learn_theta=False)
    out = {}

    b = Tensor(rng.normal(size=(4, 3)))
    r = _probe(rng, (2, 5, 3))
    out["matmul"] = (lambda a, r=r: (matmul(a, b) * r).sum(), rng.normal(size=(2, 5, 4)))

    xk = Tensor(rng.normal(size=(7, 3)))
    r = _probe(rng, (7, 3))
    out["causal_conv"] = (lambda k, r=r: (causal_depthwise_conv1d(xk, k) * r).sum(),
                          rng.normal(size=(bb.d_conv, 3)))

    r = _probe(rng, (3, 4))
    out["temporal_pool_mean"] = (lambda s, r=r: (temporal_pool(s, 3, "mean") * r).sum(),
                                 rng.random((9, 4)) * 0.9 + 0.05)

    bcfg = replace(cfg.bridge, norm_mode="running-rate", temporal_features="none")
    r = _probe(rng, (4, 5))
    out["bridge"] = (lambda s, r=r: (bridge(s, bcfg) * r).sum(), rng.random((7, 5)) * 0.9 + 0.05)

    block = MambaBlock(d_model, rng, expand=bb.expand, d_state=bb.d_state,
                       d_conv=bb.d_conv, chunk=two.chunk)
    r = _probe(rng, (5, d_model))
    x_block = rng.normal(size=(5, d_model))
    out["mamba_block"] = (lambda x, r=r: (block(x) * r).sum(), x_block)

    model = MambaClassifier(two, 3, rng)
    labels = np.array([0, 2])
    out["backbone_2block"] = (lambda x: cross_entropy(model(x), labels),
                              rng.normal(size=(2, 6, d_model)))

    x, W1, W2, r = conditioned_spiking_case(rng, lif)
    w2 = Tensor(W2)
    out["spiking_relaxed"] = (lambda w, r=r: (spiking_net(x, w, w2, lif, True) * r).sum(), W1)
    return out


def surrogate_sign_agreement(cfg: RunConfig, trials: int = 50, seed: int = 0) -> tuple[float, bool]:
    """Fraction of weight coordinates where the production (hard threshold,
    surrogate backward) gradient has the sign of the relaxed network's
    gradient, and whether every production gradient was finite.

    Coordinates where either gradient is exactly zero are skipped.
    """
    rng = np.random.default_rng(seed)
    lif = replace(cfg.frontend.lif, adaptive=False, learn_tau=False, learn_theta=False)
    agree = total = 0
    finite = True
    for _ in range(trials):
        x, W1, W2, r = spiking_case(rng)
        grads = []
        for relaxed in (False, True):
            w1, w2 = Tensor(W1, requires_grad=True), Tensor(W2, requires_grad=True)
            g = backward((spiking_net(x, w1, w2, lif, relaxed) * r).sum(), [w1, w2])
            grads.append(np.concatenate([g[w1.node_id].data.ravel(), g[w2.node_id].data.ravel()]))
        prod, relax = grads
        finite &= bool(np.all(np.isfinite(prod)))
        mask = (prod != 0) & (relax != 0)
        agree += int(np.sum(np.sign(prod[mask]) == np.sign(relax[mask])))
        total += int(mask.sum())
    return (agree / total if total else 1.0), finite


def run_suite(cfg: RunConfig | None = None, seed: int = 0) -> list[CheckResult]:
    cfg = cfg or RunConfig()
    results = []
    for name, (f, x) in components(cfg, seed).items():
        start = time.perf_counter()
        err = finite_difference_check(f, x)
        results.append(CheckResult(name, err, time.perf_counter() - start))
    return results


def format_results(results, agreement=None) -> str:
    lines = [f"{'component':<20} {'max_rel_error':>14} {'seconds':>8}  status"]
    for r in results:
        lines.append(f"{r.name:<20} {r.max_rel_error:>14.3e} {r.seconds:>8.2f}  "
                     f"{'ok' if r.passed else 'FAIL'}")
    if agreement is not None:
        frac, finite = agreement
        ok = frac >= SIGN_AGREEMENT_MIN and finite
        lines.append(f"surrogate sign agreement {frac:.3f} (finite={finite})  {'ok' if ok else 'FAIL'}")
    return "\n".join(lines)
