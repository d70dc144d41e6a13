"""Spiking front-end, spike-to-activation bridge and selective state-space
backbone on a small numpy autodiff engine."""
from .bridge import BridgeConfig, bridge, spikes_to_activations
from .checkpoint import CheckpointError, CheckpointMismatchError
from .encoders import EncoderConfig, delta_encode, encode, latency_encode, rate_encode
from .events import EventStream, events_to_frames, read_aer, read_idx, synth_gesture, write_aer
from .mamba import (BackboneConfig, MambaBlock, MambaClassifier, classify, selective_scan_fast,
                    selective_scan_ref)
from .neurons import (LIFParams, SRMParams, lif_forward, spiking_conv2d, spiking_recurrent,
                      srm_forward, surrogate_grad, temporal_pool)
from .tensor import Tensor, backward, finite_difference_check, no_grad, tensor

__version__ = "0.1.0"
