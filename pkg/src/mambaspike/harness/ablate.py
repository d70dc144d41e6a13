"""Ablation runs: front-end on/off and neuron model x membrane time constant."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig, copy_config
from .train import RunReport, train

log = logging.getLogger(__name__)

PLANS = ("frontend-on-off", "neuron-tau-sweep")
DEFAULT_TAUS = (10.0, 20.0, 30.0, 40.0, 50.0)
CSV_COLUMNS = ("variant", "seed", "accuracy", "macro_f1", "spikes_per_sample",
               "decision_steps", "wall_us")


@dataclass
class RunRow:
    variant: str
    seed: int
    accuracy: float = math.nan
    macro_f1: float = math.nan
    spikes_per_sample: float | None = None
    decision_steps: int | None = None
    wall_us: float = math.nan
    error: str = ""


@dataclass
class AblationRow:
    variant: str
    accuracy: float
    macro_f1: float
    spikes_per_sample: float | None
    decision_steps: int | None
    wall_us: float
    n_seeds: int
    error: str = ""


@dataclass
class AblationTable:
    plan: str
    rows: list[AblationRow] = field(default_factory=list)
    runs: list[RunRow] = field(default_factory=list)

    def row(self, variant: str) -> AblationRow:
        return next(r for r in self.rows if r.variant == variant)

    def to_csv(self) -> str:
        """Per-seed rows followed by one ``seed=mean`` row per variant."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)

        def fmt(v):
            return "NA" if v is None or (isinstance(v, float) and math.isnan(v)) else v

        for r in self.runs:
            w.writerow([r.variant, r.seed, fmt(r.accuracy), fmt(r.macro_f1),
                        fmt(r.spikes_per_sample), fmt(r.decision_steps), fmt(r.wall_us)])
        for r in self.rows:
            w.writerow([r.variant, "mean", fmt(r.accuracy), fmt(r.macro_f1),
                        fmt(r.spikes_per_sample), fmt(r.decision_steps), fmt(r.wall_us)])
        return buf.getvalue()

    def tau_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("neuron", "tau_ms", "accuracy", "macro_f1", "n_seeds"))
        for r in self.rows:
            neuron, tau = parse_tau_variant(r.variant)
            w.writerow((neuron, tau, r.accuracy, r.macro_f1, r.n_seeds))
        return buf.getvalue()

    def format(self) -> str:
        head = f"{'variant':<16} {'accuracy':>9} {'macro_f1':>9} {'spikes/sample':>14} {'steps':>6} {'wall_us':>10}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            spikes = "-" if r.spikes_per_sample is None else f"{r.spikes_per_sample:.1f}"
            steps = "-" if r.decision_steps is None else str(r.decision_steps)
            line = (f"{r.variant:<16} {r.accuracy:>9.4f} {r.macro_f1:>9.4f} {spikes:>14} "
                    f"{steps:>6} {r.wall_us:>10.1f}")
            if r.error:
                line += f"  [{r.error}]"
            lines.append(line)
        return "\n".join(lines)

    def to_json(self) -> str:
        def clean(d):
            return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}

        doc = {"schema": "mambaspike.ablation/1", "plan": self.plan,
               "rows": [clean(asdict(r)) for r in self.rows],
               "runs": [clean(asdict(r)) for r in self.runs]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.csv").write_text(self.to_csv())
        if self.plan == "neuron-tau-sweep":
            (out / "tau_sweep.csv").write_text(self.tau_csv())
        (out / "ablation.txt").write_text(self.format() + "\n")
        (out / "ablation.json").write_text(self.to_json())


def tau_variant(neuron: str, tau: float) -> str:
    return f"{neuron}-tau{tau:g}"


def parse_tau_variant(name: str) -> tuple[str, float]:
    neuron, tau = name.split("-tau")
    return neuron, float(tau)


def variants(cfg: RunConfig, plan: str, taus=DEFAULT_TAUS, neurons=("lif", "srm")):
    """(variant id, config) pairs for ``plan``."""
    if plan == "frontend-on-off":
        out = []
        for name, enabled in (("frontend-off", False), ("frontend-on", True)):
            v = copy_config(cfg)
            v.frontend.enabled = enabled
            out.append((name, v))
        return out
    if plan == "neuron-tau-sweep":
        out = []
        for neuron in neurons:
            for tau in taus:
                v = copy_config(cfg)
                v.frontend.enabled = True
                v.frontend.neuron = neuron
                if neuron == "lif":
                    v.frontend.lif.tau_m = float(tau)
                else:
                    v.frontend.srm.tau_m = float(tau)
                out.append((tau_variant(neuron, tau), v))
        return out
    raise ValueError(f"unknown ablation plan {plan!r}; choose from {PLANS}")


def _mean(values):
    vals = [v for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    return float(np.mean(vals)) if vals else math.nan


def ablate(cfg: RunConfig, plan: str, seeds=(0,), taus=DEFAULT_TAUS, out_dir=None,
           runner=train) -> AblationTable:
    """Train and evaluate every variant of ``plan`` for each seed.

    A failing run is recorded in its row and the remaining runs continue.
    """
    table = AblationTable(plan)
    for name, vcfg in variants(cfg, plan, taus):
        rows = []
        for seed in seeds:
            run_out = Path(out_dir) / name / f"seed{seed}" if out_dir is not None else None
            try:
                run_cfg = copy_config(vcfg)
                run_cfg.train.seed = int(seed)
                rep: RunReport = runner(run_cfg, run_out)
                row = RunRow(name, int(seed), rep.final_accuracy, rep.macro_f1,
                             rep.spikes_per_sample, rep.decision_steps,
                             rep.timing.get("wall_us_per_sample", math.nan))
            except Exception as exc:  # recorded per variant, the sweep goes on
                log.warning("variant %s seed %s failed: %s", name, seed, exc)
                row = RunRow(name, int(seed), error=f"{type(exc).__name__}: {exc}")
            log.info("%s seed %s accuracy %.4f", name, seed, row.accuracy)
            rows.append(row)
        table.runs.extend(rows)
        spikes = [r.spikes_per_sample for r in rows]
        steps = [r.decision_steps for r in rows if r.decision_steps is not None]
        table.rows.append(AblationRow(
            variant=name,
            accuracy=_mean([r.accuracy for r in rows]),
            macro_f1=_mean([r.macro_f1 for r in rows]),
            spikes_per_sample=None if all(s is None for s in spikes) else _mean(spikes),
            decision_steps=steps[0] if steps else None,
            wall_us=_mean([r.wall_us for r in rows]),
            n_seeds=len(rows),
            error="; ".join(r.error for r in rows if r.error),
        ))
    if out_dir is not None:
        table.write(out_dir)
    return table
