"""Counter-keyed random streams.

Every random quantity in the simulator is drawn from a generator keyed by
``(master_seed, tag, index...)`` so that a draw depends only on its key and
never on how many other draws were taken before it, or on which worker
produced it.
"""

import hashlib
import zlib

import numpy as np

# Stable integer tags for the different consumers of randomness.
TAGS = {
    "scenario": 1,
    "pilots": 2,
    "eval": 3,
    "sca": 4,
    "seeds": 5,
}


def _tag(tag):
    if isinstance(tag, str):
        return TAGS.get(tag, zlib.crc32(tag.encode()))
    return int(tag)


def stream(seed, tag, *index):
    """Return an independent Philox generator for ``(seed, tag, *index)``."""
    key = (_tag(tag),) + tuple(int(i) for i in index)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def complex_normal(rng, shape, var=1.0):
    """Circularly-symmetric complex Gaussian samples with variance ``var``."""
    shape = tuple(shape) if np.ndim(shape) else (int(shape),)
    # consecutive (real, imag) pairs viewed as complex numbers
    z = rng.standard_normal(shape + (2,)).view(np.complex128)[..., 0]
    z *= np.sqrt(var / 2.0)
    return z


def stream_hash(seed, tag, n):
    """Short fingerprint of the stream family used for ``n`` keyed draws."""
    h = hashlib.sha256(f"{int(seed)}:{_tag(tag)}:{int(n)}".encode())
    return h.hexdigest()[:16]
