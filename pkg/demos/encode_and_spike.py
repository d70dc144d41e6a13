"""Events to spikes: render one synthetic gesture, voxelize it, and push it
through a spiking convolution.

    python demos/encode_and_spike.py
"""
import numpy as np

from mambaspike import LIFParams, events_to_frames, spiking_conv2d, synth_gesture
from mambaspike.events import GESTURE_CLASSES
from mambaspike.encoders import delta_encode, latency_encode, rate_encode

stream = synth_gesture(class_id=0, seed=3, width=32, height=32)
print(f"{GESTURE_CLASSES[0]}: {len(stream)} events over {stream.duration} us")

frames = events_to_frames(stream, bin_width_us=10_000, T_max=20)
print(f"voxel grid {frames.shape}, ON cells {int(frames[:, 1].sum())}, OFF cells {int(frames[:, 0].sum())}")

rng = np.random.default_rng(0)
kernels = rng.normal(0, 1.0, size=(4, 2, 3, 3))
spikes, _ = spiking_conv2d(frames, kernels, LIFParams(tau_m=30.0), stride=2, padding=1)
print(f"spiking conv output {spikes.shape}, {int(spikes.data.sum())} spikes")

# the three encoders on a single value
x = np.array([0.3])
print("rate     ", rate_encode(x, 10).ravel().astype(int))
print("latency  ", latency_encode(x, 10).ravel().astype(int))
ramp = np.linspace(0, 1, 20)
print("delta ON ", delta_encode(ramp, 0.25)[:, 1].astype(int))
