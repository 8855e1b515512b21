"""Counter-based random numbers (pure Python reference).

Every variate is a hash of ``(path key, stream, counter)``, so a path can be
regenerated from its index alone and the order in which paths are simulated
is irrelevant.  The mixing function is the splitmix64 finaliser.  The
compiled kernel implements exactly the same arithmetic.
"""
from __future__ import annotations

import math

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
STREAM_MUL = 0xD1B54A32D192ED03
TWO_PI = 6.283185307179586
INV_2_53 = 1.0 / 9007199254740992.0

# stream identifiers
EVENTS = 0
BROWNIAN = 1
LEAF_UP = 2
LEAF_DOWN = 3
LEAF_TIE = 4


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def path_key(seed: int, index: int) -> int:
    return mix64((mix64(seed & MASK) + index * GOLDEN) & MASK)


def draw(key: int, stream: int, ctr: int) -> int:
    return mix64(((key ^ ((stream * STREAM_MUL) & MASK)) + ctr * GOLDEN) & MASK)


def uniform(key: int, stream: int, ctr: int, flip: bool) -> float:
    """A uniform variate in ``(0, 1)``; ``flip`` gives the antithetic ``1 - u``."""
    u = ((draw(key, stream, ctr) >> 11) + 0.5) * INV_2_53
    return 1.0 - u if flip else u


def normal(key: int, stream: int, ctr: int, flip: bool) -> float:
    """Standard normal by Box-Muller; ``flip`` negates it."""
    c2 = (2 * ctr) & MASK
    u1 = ((draw(key, stream, c2) >> 11) + 0.5) * INV_2_53
    u2 = ((draw(key, stream, (c2 + 1) & MASK) >> 11) + 0.5) * INV_2_53
    z = math.sqrt(-2.0 * math.log(u1)) * math.cos(TWO_PI * u2)
    return -z if flip else z
