"""Training and evaluation entry points producing :class:`RunReport` objects."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import checkpoint as ckpt
from ..tensor import backward, cross_entropy, no_grad
from .config import RunConfig, flatten
from .data import Split, load_split
from .metrics import accuracy, macro_f1
from .model import MambaSpikeNet
from .optim import Adam

log = logging.getLogger(__name__)

SCHEMA = "mambaspike.run-report/1"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class RunReport:
    """Metrics of one run.

    ``timing`` holds wall-clock measurements; it is kept out of
    :meth:`to_json` so that identical (config, seed) runs serialize to
    identical bytes.
    """
    seed: int
    config: dict
    n_classes: int
    initial: dict = field(default_factory=dict)
    epochs: list = field(default_factory=list)
    final_accuracy: float = 0.0
    macro_f1: float = 0.0
    spikes_per_sample: float | None = None
    decision_steps: int = 0
    timing: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "seed": self.seed,
            "config": self.config,
            "n_classes": self.n_classes,
            "initial": self.initial,
            "epochs": self.epochs,
            "final_accuracy": self.final_accuracy,
            "macro_f1": self.macro_f1,
            "spikes_per_sample": self.spikes_per_sample,
            "latency_proxy": {"decision_steps": self.decision_steps},
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        (out / "timing.json").write_text(json.dumps(self.timing, indent=2, sort_keys=True) + "\n")


def _config_echo(cfg: RunConfig) -> dict:
    # out_dir is where results go, not part of the experiment
    return {k: list(v) if isinstance(v, tuple) else v for k, v in flatten(cfg).items()
            if k != "out_dir"}


def _inputs(cfg: RunConfig, split: Split) -> np.ndarray:
    return split.inputs if cfg.frontend.enabled else split.raw


def _batches(n: int, size: int, order=None):
    order = np.arange(n) if order is None else order
    for i in range(0, n, size):
        yield order[i:i + size]


def run_eval(model: MambaSpikeNet, x: np.ndarray, y: np.ndarray, batch_size: int) -> dict:
    """Loss, accuracy, predictions, spike counts and timing over one split."""
    losses, preds, counts = [], [], []
    start = time.perf_counter()
    with no_grad():
        for idx in _batches(len(y), batch_size):
            logits, c = model.forward(x[idx].astype(np.float64))
            losses.append(cross_entropy(logits, y[idx]).item() * len(idx))
            preds.append(np.argmax(logits.data, axis=-1))
            if c is not None:
                counts.append(c)
    elapsed = time.perf_counter() - start
    preds = np.concatenate(preds) if preds else np.zeros(0, np.int64)
    n = max(len(y), 1)
    return {
        "loss": float(sum(losses) / n),
        "accuracy": accuracy(y, preds),
        "preds": preds,
        "spikes_per_sample": float(np.concatenate(counts).mean()) if counts else None,
        "wall_us_per_sample": 1e6 * elapsed / n,
    }


def _final_fields(report: RunReport, model, ev: dict, y, n_classes: int, T: int) -> None:
    report.final_accuracy = ev["accuracy"]
    report.macro_f1 = macro_f1(y, ev["preds"], n_classes)
    report.spikes_per_sample = ev["spikes_per_sample"]
    report.decision_steps = model.decision_steps(T)
    report.timing = {"wall_us_per_sample": ev["wall_us_per_sample"]}


def train(cfg: RunConfig, out_dir=None) -> RunReport:
    """Train a model per ``cfg`` and evaluate it on the test split.

    Cross-entropy loss, Adam updates, one checkpoint per epoch when
    ``cfg.train.checkpoints`` is set and an output directory is given.
    """
    cfg.validate()
    out_dir = Path(out_dir) if out_dir is not None else None
    rng = np.random.default_rng(cfg.train.seed)
    tr, te = load_split(cfg, "train"), load_split(cfg, "test")
    x_tr, x_te = _inputs(cfg, tr), _inputs(cfg, te)
    n_classes = cfg.data.n_classes
    model = MambaSpikeNet(cfg, x_tr.shape[2:], n_classes, rng)
    opt = Adam(model, cfg.optim.lr, cfg.optim.beta1, cfg.optim.beta2, cfg.optim.eps,
               cfg.optim.weight_decay)
    bs = cfg.train.batch_size
    report = RunReport(seed=cfg.train.seed, config=_config_echo(cfg), n_classes=n_classes)

    ev_tr = run_eval(model, x_tr, tr.labels, bs)
    ev_te = run_eval(model, x_te, te.labels, bs)
    report.initial = {"train_loss": ev_tr["loss"], "train_accuracy": ev_tr["accuracy"],
                      "test_loss": ev_te["loss"], "test_accuracy": ev_te["accuracy"]}

    for epoch in range(1, cfg.train.epochs + 1):
        total_loss, correct = 0.0, 0
        for step, idx in enumerate(_batches(len(tr), bs, rng.permutation(len(tr)))):
            try:
                logits, _ = model.forward(x_tr[idx].astype(np.float64))
                loss = cross_entropy(logits, tr.labels[idx])
            except (FloatingPointError, ValueError) as exc:
                if epoch == 1 and step == 0:
                    raise   # untrained weights: a real error, not divergence
                raise TrainingDiverged(f"numeric failure at epoch {epoch}, step {step}: {exc}") from exc
            if not np.isfinite(loss.item()):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step}")
            opt.step(backward(loss, model.parameters()))
            total_loss += loss.item() * len(idx)
            correct += int(np.sum(np.argmax(logits.data, axis=-1) == tr.labels[idx]))
        ev_te = run_eval(model, x_te, te.labels, bs)
        row = {"epoch": epoch, "train_loss": total_loss / len(tr), "train_accuracy": correct / len(tr),
               "test_loss": ev_te["loss"], "test_accuracy": ev_te["accuracy"]}
        report.epochs.append(row)
        log.info("epoch %d train_loss %.4f train_acc %.3f test_acc %.3f", epoch,
                 row["train_loss"], row["train_accuracy"], row["test_accuracy"])
        if out_dir is not None and cfg.train.checkpoints:
            (out_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
            ckpt.save(model.state_dict(), out_dir / "checkpoints" / f"epoch_{epoch:03d}.msck")

    _final_fields(report, model, ev_te, te.labels, n_classes, x_te.shape[1])
    if out_dir is not None:
        if cfg.train.checkpoints:
            ckpt.save(model.state_dict(), out_dir / "model.msck")
        report.write(out_dir)
    return report


def build_model(cfg: RunConfig, split: Split) -> MambaSpikeNet:
    x = _inputs(cfg, split)
    return MambaSpikeNet(cfg, x.shape[2:], cfg.data.n_classes,
                         np.random.default_rng(cfg.train.seed))


def evaluate(cfg: RunConfig, checkpoint_path, split: str = "test") -> RunReport:
    """Evaluation-only report for a saved checkpoint on ``split``."""
    cfg.validate()
    data = load_split(cfg, split)
    model = build_model(cfg, data)
    ckpt.load_into(model, ckpt.load(checkpoint_path))
    x = _inputs(cfg, data)
    ev = run_eval(model, x, data.labels, cfg.train.batch_size)
    report = RunReport(seed=cfg.train.seed, config=_config_echo(cfg), n_classes=cfg.data.n_classes)
    _final_fields(report, model, ev, data.labels, cfg.data.n_classes, x.shape[1])
    return report
