"""
Deterministic standard-normal streams for simulation replications.

Stream protocol (reproducible in any language with Philox4x64-10):

1. The bit generator is Philox4x64-10 with the 128-bit key
   ``(master_seed, replication_index)`` and the counter starting at 0.
2. Each uniform is ``(w >> 11) * 2**-53`` for the next 64-bit output ``w``;
   an exact 0 is replaced by ``2**-54`` so the inverse CDF stays finite.
3. Each normal deviate is ``Phi^{-1}(u)`` (``scipy.special.ndtri``).

Replication ``r`` therefore owns its stream regardless of which worker process
evaluates it.
"""

from typing import Sequence, Tuple, Union

import numpy as np
from scipy.special import ndtri

from errors import ValidationError

SeedLike = Union[int, Sequence[int]]

_SMALLEST_UNIFORM = 2.0 ** -54


def replication_key(seed: SeedLike) -> Tuple[int, int]:
    """Normalize ``seed`` (an int or ``(master_seed, replication_index)``) to a key pair."""
    if isinstance(seed, (int, np.integer)):
        pair = (int(seed), 0)
    else:
        pair = tuple(int(part) for part in seed)
        if len(pair) != 2:
            raise ValidationError(f"seed must be an int or a (master_seed, replication) pair, got {seed!r}")
    if any(part < 0 or part >= 2 ** 64 for part in pair):
        raise ValidationError(f"seed components must be unsigned 64-bit integers, got {pair}")
    return pair


def generator(seed: SeedLike) -> np.random.Generator:
    key = np.array(replication_key(seed), dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def uniforms(seed: SeedLike, n: int) -> np.ndarray:
    u = generator(seed).random(n)
    u[u == 0.0] = _SMALLEST_UNIFORM
    return u


def standard_normals(seed: SeedLike, n: int) -> np.ndarray:
    return ndtri(uniforms(seed, n))
