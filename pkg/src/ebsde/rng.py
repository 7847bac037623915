"""Deterministic random number streams for path simulation and training.

Every stochastic ingredient of a batch run (network init, training batches,
validation batches, exit-time sampling) draws from its own counter-based
Philox stream keyed by a tuple of integers.  Streams are independent of
worker scheduling, so results are reproducible at any process-pool width.

Gaussians are produced by inverse-CDF transform of 53-bit uniforms rather
than by the generator's native ziggurat method.  The mapping

    z = ndtri((k + 0.5) * 2**-53),   k drawn uniformly from [0, 2**53)

consumes exactly one 64-bit draw per normal, stays strictly inside (0, 1)
before the transform, and is exactly reproducible from the documented
stream key alone.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = ["stream", "normals", "uniforms", "derive_seed"]

_TWO53 = 2**53
_INV_TWO53 = 2.0**-53

# Stream purpose tags.  Training batches use tag TRAIN_BASE + epoch index.
INIT = 0
VALIDATION = 1
EXIT_SAMPLER = 2
TRAIN_BASE = 16


def stream(*key: int) -> np.random.Generator:
    """Return the Philox generator identified by an integer key tuple.

    The same key always yields an identical stream regardless of how many
    other streams were created before it.
    """
    if not key:
        raise ValueError("stream key must contain at least one integer")
    if any(int(k) < 0 for k in key):
        raise ValueError("stream key entries must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(tuple(int(k) for k in key))))


def derive_seed(*parts: int) -> int:
    """Collapse an integer key tuple into one 128-bit seed.

    Used to hand hierarchical keys (master seed, point index, run index,
    purpose tag) to interfaces that take a single integer seed.  Distinct
    tuples map to distinct seeds up to a 2^-128 collision probability.
    """
    words = np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(2, np.uint64)
    return int(words[0]) | (int(words[1]) << 64)


def uniforms(gen: np.random.Generator, shape) -> np.ndarray:
    """Uniform draws on the open interval (0, 1) at 53-bit resolution."""
    k = gen.integers(0, _TWO53, size=shape, dtype=np.uint64)
    return (k.astype(np.float64) + 0.5) * _INV_TWO53


def normals(gen: np.random.Generator, shape) -> np.ndarray:
    """Standard normal draws via inverse-CDF transform of 53-bit uniforms."""
    return ndtri(uniforms(gen, shape))
