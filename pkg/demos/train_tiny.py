"""Train the full model on the seconds-scale config, save a checkpoint and
evaluate it again.

    python demos/train_tiny.py [out_dir]
"""
import sys
from pathlib import Path

from mambaspike.harness import evaluate, load_config, train

root = Path(__file__).resolve().parent.parent
cfg = load_config(root / "configs" / "tiny.cfg")
cfg.train.epochs = 3
out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs/demo-tiny")

report = train(cfg, out)
print(f"initial test accuracy {report.initial['test_accuracy']:.3f}")
for e in report.epochs:
    print(f"epoch {e['epoch']}: train loss {e['train_loss']:.3f}, test accuracy {e['test_accuracy']:.3f}")
print(f"spikes/sample {report.spikes_per_sample:.0f}, decision steps {report.decision_steps}")

again = evaluate(cfg, out / "model.msck")
print(f"reloaded checkpoint: accuracy {again.final_accuracy:.3f}, macro-F1 {again.macro_f1:.3f}")
