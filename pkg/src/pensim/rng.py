"""Counter-based random streams.

Every random draw in the project is keyed by (seed, stream id) through a
Philox bit generator, so any stage can be re-derived in isolation and batches
of work can be generated in any order without correlating streams.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# Stream ids partition the key space per pipeline stage.
STREAM_DISTRIBUTE = 0xD1
STREAM_PROPERTIES = 0xD2
STREAM_FEASIBILITY = 0xD3
STREAM_TOPOLOGY = 0xD4
STREAM_TRAIN_LEVELS = 0xA1
STREAM_EVAL_LEVELS = 0xA2
STREAM_POLICY_INIT = 0xB1
STREAM_ROLLOUT = 0xB2
STREAM_UED = 0xB3
STREAM_BENCH = 0xC1

# Evaluation scenario seeds carry bit 62; training seed derivation clears it,
# so the two seed populations are disjoint by construction.
EVAL_SEED_BIT = 1 << 62
_SEED_MASK = (1 << 63) - 1


def stream(seed: int, stream_id: int) -> np.random.Generator:
    """Independent generator for (seed, stream_id).

    Streams are derived stateless from the pair, so they can be created in
    any order (and on any worker) without correlation. The seed material is
    fully deterministic; a default SeedSequence would pull OS entropy on
    every call.
    """
    ss = np.random.SeedSequence(entropy=(seed & _MASK64, stream_id & _MASK64))
    return np.random.Generator(np.random.Philox(ss))


def mix64(*parts: int) -> int:
    """Stateless 64-bit mix (splitmix64 finalizer chained over the parts)."""
    h = 0x9E3779B97F4A7C15
    for p in parts:
        h = (h ^ (p & _MASK64)) & _MASK64
        h = (h + 0x9E3779B97F4A7C15) & _MASK64
        h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _MASK64
        h = (h ^ (h >> 31)) & _MASK64
    return h


def train_level_seed(run_seed: int, index: int) -> int:
    """index-th training scenario seed for a run. Never collides with eval seeds."""
    return mix64(run_seed, STREAM_TRAIN_LEVELS, index) & _SEED_MASK & ~EVAL_SEED_BIT


def eval_level_seed(eval_base: int, set_id: int, index: int) -> int:
    """Frozen evaluation scenario seed for (set, index)."""
    return (mix64(eval_base, STREAM_EVAL_LEVELS, set_id, index) & _SEED_MASK) | EVAL_SEED_BIT
