"""Counter-based normals: the draw for index ``j`` depends only on ``(seed, stream, j)``.

Built on numpy's Philox-4x64 keyed by ``(seed, stream)``; index ``j`` owns the
``blocks`` consecutive counter blocks starting at ``j * blocks``.  Each block
is four 64-bit words, turned into four normals by the Box-Muller transform.
Any partition of the index range into chunks reproduces the same numbers.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_TWO_M53 = 2.0**-53


def _uniform(words: np.ndarray) -> np.ndarray:
    """Map 64-bit words to doubles in the open interval ``(0, 1)``."""
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def raw_blocks(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Counter blocks ``start .. start + count - 1`` as a ``(count, 4)`` uint64 array."""
    gen = np.random.Philox(key=np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64))
    if start:
        gen.advance(start)
    return gen.random_raw(4 * count).reshape(count, 4)


def block_normals(seed: int, stream: int, start: int, count: int) -> np.ndarray:
    """Four standard normals per counter block, shape ``(count, 4)``."""
    u = _uniform(raw_blocks(seed, stream, start, count))
    radius = np.sqrt(-2.0 * np.log(u[:, 0::2]))
    angle = 2.0 * np.pi * u[:, 1::2]
    out = np.empty((count, 4))
    out[:, 0::2] = radius * np.cos(angle)
    out[:, 1::2] = radius * np.sin(angle)
    return out


def indexed_normals(seed: int, stream: int, first: int, count: int, per_index: int,
                    chunk: int = 1 << 18) -> np.ndarray:
    """``per_index`` normals for each index ``first .. first + count - 1``.

    Returns ``(count, per_index)``; chunking only bounds memory and does not
    change any value.
    """
    blocks = -(-per_index // 4)
    out = np.empty((count, per_index))
    for s in range(0, count, chunk):
        c = min(chunk, count - s)
        z = block_normals(seed, stream, (first + s) * blocks, c * blocks)
        out[s:s + c] = z.reshape(c, 4 * blocks)[:, :per_index]
    return out


def normal_generator(seed: int, stream: int = 0) -> np.random.Generator:
    """A numpy ``Generator`` on the Philox stream ``(seed, stream)`` for bulk draws."""
    return np.random.Generator(
        np.random.Philox(key=np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)))


__all__ = ["raw_blocks", "block_normals", "indexed_normals", "normal_generator"]
