"""Deterministic RNG substreams derived from a single root seed.

Every source of randomness in the toolkit (parameter init, epoch shuffling,
shift augmentation, synthetic data generation) draws from its own named
substream so that, e.g., changing the model architecture cannot perturb the
data order of an otherwise identical run.
"""

import numpy as np

_STREAM_IDS = {
    "init": 1,
    "shuffle": 2,
    "augment": 3,
    "datagen": 4,
}


def substream(seed: int, name: str, *indices: int) -> np.random.Generator:
    """Return the generator for substream `name` (optionally sub-indexed,
    e.g. by fold or record number) of the given root seed."""
    if name not in _STREAM_IDS:
        raise KeyError(f"unknown rng substream {name!r}; expected one of {sorted(_STREAM_IDS)}")
    entropy = [int(seed), _STREAM_IDS[name], *[int(i) for i in indices]]
    return np.random.default_rng(np.random.SeedSequence(entropy))
