"""Seeded random streams.

Draws are generated in fixed-size blocks of rows, each block with its own
Philox substream keyed by ``(stream name, block index)``. The result for a
given ``(seed, name, shape)`` therefore does not depend on how blocks are
scheduled, and named streams never perturb each other.
"""

import zlib

import numpy as np

BLOCK_ROWS = 1 << 15


def _stream_key(name):
    return zlib.crc32(name.encode("utf-8"))


def _generator(seed, name, block):
    ss = np.random.SeedSequence(int(seed), spawn_key=(_stream_key(name), block))
    return np.random.Generator(np.random.Philox(ss))


def _blocked(seed, name, n_rows, n_cols, draw):
    out = np.empty((n_rows, n_cols))
    for b, start in enumerate(range(0, n_rows, BLOCK_ROWS)):
        stop = min(start + BLOCK_ROWS, n_rows)
        out[start:stop] = draw(_generator(seed, name, b), (stop - start, n_cols))
    return out


def uniforms(seed, name, n_rows, n_cols):
    """Uniform variates on [0, 1)."""
    return _blocked(seed, name, n_rows, n_cols, lambda g, shape: g.random(shape))


def normals(seed, name, n_rows, n_cols):
    return _blocked(seed, name, n_rows, n_cols, lambda g, shape: g.standard_normal(shape))


def exponentials(u, rate):
    """Inverse-CDF exponential draws from uniforms on [0, 1); rate 0 gives +inf."""
    rate = float(rate)
    if rate == 0.0:
        return np.full_like(u, np.inf, dtype=float)
    with np.errstate(over="ignore"):
        return -np.log1p(-u) / rate
