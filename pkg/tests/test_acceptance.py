"""Acceptance suite: one PASS/FAIL line per primary criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the
terminal output) or ``python tests/test_acceptance.py``.
"""
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import binom

from mambaspike.encoders import delta_encode, latency_encode, rate_encode
from mambaspike.events import EventStream, make_events, parse_aer, aer_bytes, read_idx
from mambaspike.harness.ablate import ablate
from mambaspike.harness.config import copy_config, load_config
from mambaspike.harness.gradcheck import run_suite
from mambaspike.harness.train import train
from mambaspike.mamba import chunked_linear_scan, selective_scan_fast, selective_scan_ref
from mambaspike.neurons import LIFParams, lif_forward

ROOT = Path(__file__).parent.parent
CONFIGS = ROOT / "configs"


def _scan_case(r, L, D, N):
    x = r.normal(size=(L, D))
    delta = np.log1p(np.exp(r.normal(-1.0, 1.5, size=(L, D))))
    A = -np.exp(r.normal(size=(D, N)))
    return x, delta, A, r.normal(size=(L, N)), r.normal(size=(L, N)), r.normal(size=D)


def scan_equivalence():
    r = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        L, D, N = int(r.integers(1, 65)), int(r.integers(1, 9)), int(r.integers(1, 9))
        args = _scan_case(r, L, D, N)
        fast = selective_scan_fast(*args, chunk=int(r.integers(1, 33))).data
        worst = max(worst, float(np.abs(fast - selective_scan_ref(*args).data).max()))
    secs = time.perf_counter() - start
    return worst <= 1e-6 and secs < 30, f"1000 instances, max abs err {worst:.2e}, {secs:.1f} s"


def gradient_suite():
    start = time.perf_counter()
    results = run_suite()
    secs = time.perf_counter() - start
    worst = max(results, key=lambda res: res.max_rel_error)
    ok = all(res.passed for res in results) and secs < 300
    detail = ", ".join(f"{res.name} {res.max_rel_error:.1e}" for res in results)
    return ok, f"{detail}; worst {worst.name}; {secs:.1f} s"


def encoder_properties():
    r = np.random.default_rng(7)
    x = r.random(5000)
    T = 37
    rate_ok = np.array_equal(rate_encode(x, T).sum(axis=0), np.floor(x * T + 0.5))
    lat = latency_encode(x, T)
    t_star = np.floor((1 - x) * (T - 1) + 0.5)
    fires = x >= 0.01
    lat_ok = (np.array_equal(lat.sum(axis=0), fires.astype(float))
              and np.array_equal(np.argmax(lat, axis=0)[fires], t_star[fires]))
    n = int(rate_encode(np.array(0.3), 10_000, "poisson", seed=7).sum())
    lo, hi = binom.interval(0.9999, 10_000, 0.3)
    poisson_ok = lo <= n <= hi
    on = int(delta_encode(np.linspace(0, 1, 100), 0.25)[:, 1].sum())
    ok = rate_ok and lat_ok and poisson_ok and on == 4
    return ok, (f"rate exact {rate_ok}, latency exact {lat_ok}, poisson {n} in "
                f"[{lo:.0f}, {hi:.0f}], delta ramp ON {on}")


def lif_brute_force():
    p = LIFParams(tau_m=-1.0 / math.log(0.9))
    s, _, _ = lif_forward(np.full((20, 1), 0.2), p)
    first = int(np.flatnonzero(s.data[:, 0])[0]) + 1
    s2, _, trace = lif_forward(np.full((200, 1), 0.05), p)
    err = abs(trace.data[-1, 0] - 0.5)
    return first == 7 and err < 1e-6 and s2.data.sum() == 0, \
        f"first spike step {first}, |V200 - I/(1-beta)| = {err:.1e}"


def causality_stability():
    r = np.random.default_rng(11)
    broken = 0
    for i in range(100):
        L = int(r.integers(2, 40))
        args = list(_scan_case(r, L, int(r.integers(1, 6)), int(r.integers(1, 6))))
        t = int(r.integers(0, L - 1))
        pert = [a.copy() for a in args]
        for j in (0, 3, 4):
            pert[j][t + 1:] = r.normal(size=pert[j][t + 1:].shape) * 5
        pert[1][t + 1:] = r.uniform(0.01, 5, size=pert[1][t + 1:].shape)
        for scan in (selective_scan_ref, lambda *a: selective_scan_fast(*a, chunk=1 + i % 7)):
            if not np.array_equal(scan(*args).data[:t + 1], scan(*pert).data[:t + 1]):
                broken += 1
    x, delta, A, B, _, _ = _scan_case(r, 10_000, 4, 4)
    x, B = np.clip(x, -1, 1), np.clip(B, -1, 1)
    u = (delta * x)[:, :, None] * B[:, None, :]
    h = chunked_linear_scan(delta[:, :, None] * A, u, 16)
    bound = np.abs(u).max(axis=0) / (1 - np.exp(delta[:, :, None] * A).max(axis=0))
    bounded = bool(np.all(np.isfinite(h)) and np.all(np.abs(h) <= bound + 1e-9))
    return broken == 0 and bounded, (f"100 suffix perturbations, {broken} violations; "
                                     f"max |h| {np.abs(h).max():.3f} over 1e4 steps")


def learning_smoke():
    cfg = load_config(CONFIGS / "smoke.cfg")
    start = time.perf_counter()
    rep = train(cfg)
    secs = time.perf_counter() - start
    accs = [e["test_accuracy"] for e in rep.epochs]
    return max(accs) >= 0.90 and cfg.train.epochs <= 10 and secs < 900, \
        f"test accuracy by epoch {accs}, {secs:.0f} s"


def ablation_trend():
    cfg = load_config(CONFIGS / "ablation.cfg")
    with tempfile.TemporaryDirectory() as out:
        table = ablate(cfg, "frontend-on-off", seeds=(0, 1, 2, 3, 4), out_dir=out)
        csv_rows = (Path(out) / "ablation.csv").read_text().splitlines()
    on, off = table.row("frontend-on"), table.row("frontend-off")
    ok = (len(table.rows) == 2 and on.accuracy >= off.accuracy - 0.01
          and on.spikes_per_sample is not None and off.spikes_per_sample is None
          and not on.error and not off.error and len(csv_rows) == 1 + 10 + 2)
    return ok, (f"on {on.accuracy:.3f} ({on.spikes_per_sample:.0f} spikes/sample), "
                f"off {off.accuracy:.3f} (spikes n/a), 5 seeds")


def tau_sweep():
    cfg = load_config(CONFIGS / "tau-sweep.cfg")
    with tempfile.TemporaryDirectory() as out:
        table = ablate(cfg, "neuron-tau-sweep", out_dir=out)
        lines = (Path(out) / "tau_sweep.csv").read_text().splitlines()
    ok = len(table.rows) == 10 and not any(r.error for r in table.rows) and len(lines) == 11
    accs = " ".join(f"{r.variant}={r.accuracy:.2f}" for r in table.rows)
    return ok, f"{len(table.rows)} variants, csv rows {len(lines) - 1}: {accs}"


def determinism():
    cfg = load_config(CONFIGS / "tau-sweep.cfg")
    with tempfile.TemporaryDirectory() as out:
        train(cfg, Path(out) / "a")
        train(copy_config(cfg), Path(out) / "b")
        a = (Path(out) / "a" / "report.json").read_bytes()
        b = (Path(out) / "b" / "report.json").read_bytes()
    return a == b, f"report.json {len(a)} bytes, identical {a == b}"


def round_trips():
    r = np.random.default_rng(99)
    bad = 0
    for _ in range(1000):
        n = int(r.integers(0, 200))
        w, h = int(r.integers(1, 400)), int(r.integers(1, 400))
        t = np.sort(r.integers(0, 2**32, size=n))
        s = EventStream(w, h, make_events(t, r.integers(0, w, n), r.integers(0, h, n),
                                          r.integers(0, 2, n)))
        buf = aer_bytes(s)
        back = parse_aer(buf)
        bad += not (back.same_records(s) and aer_bytes(back) == buf)
    with tempfile.TemporaryDirectory() as out:
        path = Path(out) / "golden.idx"
        path.write_bytes(bytes.fromhex("00000803" "00000002" "00000002" "00000002")
                         + bytes([0, 255, 128, 1, 2, 3, 4, 5]))
        ims = read_idx(path)
    want = np.array([0, 255, 128, 1, 2, 3, 4, 5], float).reshape(2, 2, 2) / 255
    idx_ok = ims.images.shape == (2, 2, 2) and np.array_equal(ims.images, want)
    return bad == 0 and idx_ok, f"AER 1000 streams, {bad} mismatches; IDX golden exact {idx_ok}"


CRITERIA = [
    ("scan oracle equivalence", scan_equivalence),
    ("gradient suite", gradient_suite),
    ("encoder properties", encoder_properties),
    ("LIF brute force", lif_brute_force),
    ("causality and stability", causality_stability),
    ("learning smoke test", learning_smoke),
    ("ablation trend", ablation_trend),
    ("tau sweep harness", tau_sweep),
    ("determinism", determinism),
    ("round trips", round_trips),
]


def _report(name, fn):
    ok, detail = fn()
    line = f"ACCEPTANCE {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    return ok, line


@pytest.mark.parametrize("name,fn", CRITERIA, ids=[c[0].replace(" ", "-") for c in CRITERIA])
def test_criterion(name, fn, capsys):
    ok, line = _report(name, fn)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = [_report(name, fn) for name, fn in CRITERIA]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
