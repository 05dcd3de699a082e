"""Deterministic seed derivation.

Every source of randomness in a run is a numpy Generator obtained from
``derive_rng(master, *parts)``, where the parts name the consumer (e.g.
``("partition",)`` or ``("trigger", client_id)``).  Streams are therefore
independent of evaluation order and of how many worker processes are used.
"""

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Hash an arbitrary tuple of ints/strings into a 63-bit seed."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def derive_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
