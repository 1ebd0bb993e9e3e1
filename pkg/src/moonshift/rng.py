"""Seeded randomness for reproducible experiments.

Every random draw in the package flows through here. The generator is
numpy's PCG64 seeded through ``SeedSequence``, and Gaussian variates are
produced by an explicit Box-Muller transform of uniform draws, so the full
pipeline seed -> numbers is pinned down by this module alone.

A master seed is split into independent named streams (`STREAM_NAMES`), one
per stochastic component of a training run, so that e.g. drawing extra DA
batches never perturbs the classification batch order.
"""

from __future__ import annotations

import numpy as np

# Order is load-bearing: stream k is derived from child state k of the
# master SeedSequence.
STREAM_NAMES = (
    "data",
    "init",
    "class_batching",
    "da_batching",
    "mixup_class",
    "mixup_da",
)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for the given integer seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def split_seed(seed: int, n: int) -> list[int]:
    """Derive ``n`` independent child seeds from a master seed."""
    state = np.random.SeedSequence(int(seed)).generate_state(n, dtype=np.uint64)
    return [int(s) for s in state]


def stream_seeds(seed: int) -> dict[str, int]:
    """Map each named stream to its derived child seed."""
    children = split_seed(seed, len(STREAM_NAMES))
    return dict(zip(STREAM_NAMES, children))


def gaussian(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Standard-normal matrix via the Box-Muller transform.

    Uses ``1 - U`` for the radial uniform so the log argument stays in
    (0, 1] regardless of the generator returning exact zeros.
    """
    n = rows * cols
    half = (n + 1) // 2
    u1 = 1.0 - rng.random(half)
    u2 = rng.random(half)
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
    return z[:n].reshape(rows, cols)
