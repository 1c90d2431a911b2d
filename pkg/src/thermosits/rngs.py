"""Named, reproducible random substreams.

Every random draw in the package flows from one integer seed through a
substream named by string tags, so creation order never matters and any
single draw can be replayed in isolation.
"""

import hashlib

import numpy as np

__all__ = ["substream"]


def substream(seed: int, *tags) -> np.random.Generator:
    """Generator for the substream identified by (seed, tags).

    Tags are joined and hashed with SHA-256, which is stable across runs
    and platforms (unlike the builtin hash).
    """
    label = "/".join(str(t) for t in tags)
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))
