"""Deterministic RNG streams.

Every stochastic routine in the package derives its generator from an integer
key tuple fed to numpy's SeedSequence. Streams therefore depend only on the
key, never on scheduling or worker count, and distinct purposes use distinct
stream ids so experiments cannot share draws by accident.
"""

from __future__ import annotations

import numpy as np

# stream ids (first key element after the base seed)
SE_STREAM = 1          # state-evolution (beta0, z) draws
ALPHA_MIN_STREAM = 2   # f(alpha) draws (signal-free)
PHASE_STREAM = 3       # phase-boundary replicate draws
INSTANCE_STREAM = 4    # design/noise draws for sampled instances
SIGNAL_STREAM = 5      # standalone signal draws
TRANSITION_STREAM = 6  # empirical phase-transition experiment
MSE_STREAM = 7         # mse-vs-lambda experiment
SPIKE_STREAM = 8       # spiked-model V draws


def stream(base_seed: int, *key: int) -> np.random.Generator:
    """Generator keyed by (base_seed, *key); all parts must be >= 0."""
    parts = (int(base_seed),) + tuple(int(k) for k in key)
    if any(k < 0 for k in parts):
        raise ValueError(f"rng stream keys must be nonnegative, got {parts}")
    return np.random.default_rng(np.random.SeedSequence(parts))
