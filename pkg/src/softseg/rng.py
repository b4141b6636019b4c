"""Named deterministic random streams.

Every stochastic component draws from its own stream so that toggling one
feature (e.g. augmentation) never perturbs the draws of another (e.g.
weight init). Streams are derived from a single user seed through
``numpy.random.SeedSequence`` spawn keys: ``(purpose, *subkeys)``. Equal
seeds and keys always reproduce the same sequence, on any platform.
"""

from __future__ import annotations

import numpy as np

# Fixed purpose indices. Appending new purposes is safe; renumbering is not,
# it would silently change every seeded run.
_PURPOSES = {
    "init": 0,
    "batching": 1,
    "augment": 2,
    "synth": 3,
}


def stream(seed: int, purpose: str, *subkeys: int) -> np.random.Generator:
    """Return the generator for one named purpose.

    Parameters
    ----------
    seed : int
        The run-level seed shared by all streams.
    purpose : str
        One of ``"init"``, ``"batching"``, ``"augment"``, ``"synth"``.
    *subkeys : int
        Optional extra keys (epoch index, batch index, case index, ...)
        selecting an independent substream of the purpose.
    """
    if purpose not in _PURPOSES:
        raise ValueError(
            f"unknown rng purpose {purpose!r}; expected one of {sorted(_PURPOSES)}"
        )
    key = (_PURPOSES[purpose],) + tuple(int(k) for k in subkeys)
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))
