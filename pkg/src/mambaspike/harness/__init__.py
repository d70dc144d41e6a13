"""Experiment harness: config, data, training, evaluation, ablations, CLI."""
from .ablate import AblationTable, ablate
from .config import ConfigError, RunConfig, load_config, parse_config
from .model import MambaSpikeNet, count_spikes
from .train import RunReport, TrainingDiverged, evaluate, train
