"""Threefry-2x32 (20 rounds) counter-based generator, vectorized with numpy.

A draw is a pure function of ``(key, counter)``, so particle ``i`` can own the
stream whose first counter word is ``i`` and results do not depend on how
particles are scheduled.  Known-answer vectors live in
``tests/data/threefry2x32_kat.json``.

Counter layout used by the particle engine: word 0 is the particle index,
word 1 is ``slot``; slots ``0 .. INIT_SLOTS-1`` are reserved for sampling the
initial law and step ``k`` uses slots ``INIT_SLOTS + SLOTS_PER_STEP*k + j``.
"""

from __future__ import annotations

import numpy as np

ROTATIONS = (13, 15, 26, 6, 17, 29, 16, 24)
PARITY = np.uint32(0x1BD11BDA)
ROUNDS = 20

INIT_SLOTS = 8
SLOTS_PER_STEP = 4

_M32 = np.uint32(0xFFFFFFFF)


def _rotl(x: np.ndarray, r: int) -> np.ndarray:
    return (x << np.uint32(r)) | (x >> np.uint32(32 - r))


def threefry2x32(key, counter0, counter1, rounds: int = ROUNDS) -> tuple[np.ndarray, np.ndarray]:
    """Threefry-2x32 block function.

    Parameters
    ----------
    key : pair of uint32
    counter0, counter1 : array_like of uint32, broadcastable

    Returns
    -------
    (x0, x1) : uint32 arrays
    """
    k0 = np.uint32(key[0])
    k1 = np.uint32(key[1])
    ks = (k0, k1, PARITY ^ k0 ^ k1)
    c0, c1 = np.broadcast_arrays(np.asarray(counter0, dtype=np.uint32),
                                 np.asarray(counter1, dtype=np.uint32))
    with np.errstate(over="ignore"):
        x0 = c0 + ks[0]
        x1 = c1 + ks[1]
        for r in range(rounds):
            x0 = x0 + x1
            x1 = _rotl(x1, ROTATIONS[r % 8])
            x1 = x1 ^ x0
            if r % 4 == 3:
                s = r // 4 + 1
                x0 = x0 + ks[s % 3]
                x1 = x1 + ks[(s + 1) % 3] + np.uint32(s)
    return x0, x1


def split_seed(seed: int) -> tuple[int, int]:
    """64-bit seed to a Threefry key."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must fit in 64 unsigned bits")
    return seed & 0xFFFFFFFF, seed >> 32


def uniforms(seed: int, stream, slot) -> np.ndarray:
    """One double in the open interval (0, 1) per (stream, slot), 53 random bits."""
    a, b = threefry2x32(split_seed(seed), stream, slot)
    hi = (a >> np.uint32(5)).astype(np.float64)
    lo = (b >> np.uint32(6)).astype(np.float64)
    return (hi * 67108864.0 + lo + 0.5) / 9007199254740992.0


def normals(seed: int, stream, first_slot: int, count: int) -> np.ndarray:
    """``count`` standard normals per stream via Box-Muller, shape (n, count).

    Consumes ``2 * ceil(count / 2)`` consecutive slots from ``first_slot``.
    """
    stream = np.asarray(stream, dtype=np.uint32)
    cols = []
    for pair in range((count + 1) // 2):
        u1 = uniforms(seed, stream, first_slot + 2 * pair)
        u2 = uniforms(seed, stream, first_slot + 2 * pair + 1)
        r = np.sqrt(-2.0 * np.log(u1))
        cols.append(r * np.cos(2.0 * np.pi * u2))
        cols.append(r * np.sin(2.0 * np.pi * u2))
    return np.stack(cols[:count], axis=-1)


def step_slot(k: int) -> int:
    return INIT_SLOTS + SLOTS_PER_STEP * int(k)
