"""Counter-based random streams keyed by integer tuples.

Every random draw in the package comes from a Philox generator whose key is
derived from an explicit tuple such as ``(seed, prep, setting, outcome)``.
Results therefore do not depend on the order in which draws are requested,
which keeps bootstrap trials reproducible when run concurrently.
"""

from __future__ import annotations

import numpy as np

# stream tags keep independent uses of the same user seed uncorrelated
COUNTS = 1
BOOTSTRAP = 2
NOISE = 3
SELFTEST = 4


def keyed_generator(*key: int) -> np.random.Generator:
    if any(int(k) < 0 for k in key):
        raise ValueError("generator keys must be non-negative integers")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def keyed_poisson(means: np.ndarray, *prefix: int) -> np.ndarray:
    """One Poisson draw per cell, each from its own stream ``prefix + index``."""
    means = np.asarray(means, dtype=float)
    out = np.zeros(means.shape, dtype=np.int64)
    for idx in np.ndindex(means.shape):
        lam = means[idx]
        if lam > 0:
            out[idx] = keyed_generator(*prefix, *idx).poisson(lam)
    return out
