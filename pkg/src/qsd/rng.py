"""Counter-based random number generation.

Every variate is a pure function of (key, index, step), so a batch of
trajectories can be simulated in any partitioning, on any number of
workers, and still produce bit-identical output.  The mixer is the
splitmix64 finalizer (three xor-shift/multiply rounds), applied once per
counter component.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 2.0 ** -53


def mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on a uint64 array (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = (z + _GOLDEN).astype(np.uint64)
        z ^= z >> np.uint64(30)
        z *= _MIX1
        z ^= z >> np.uint64(27)
        z *= _MIX2
        z ^= z >> np.uint64(31)
    return z


def _mix_scalar(z: int) -> int:
    return int(mix64(np.array([np.uint64(z & 0xFFFFFFFFFFFFFFFF)]))[0])


def derive_key(*parts: int) -> int:
    """Fold integers into one 64-bit key; order-sensitive."""
    acc = 0
    for p in parts:
        acc = _mix_scalar(acc ^ (p & 0xFFFFFFFFFFFFFFFF))
    return acc


def counter_uniforms(key: int, index: np.ndarray, step: int) -> np.ndarray:
    """Uniforms in [0, 1) addressed by (key, index, step).

    ``index`` is an integer array (e.g. trajectory numbers); the result
    depends only on the address, never on call order or batch shape.
    """
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = mix64(mix64(mix64(np.array([np.uint64(key & 0xFFFFFFFFFFFFFFFF)])) ^ idx)
                  ^ np.uint64(step & 0xFFFFFFFFFFFFFFFF))
    return (h >> np.uint64(11)) * _INV53


def uniform_field(key: int, rows: int, cols: int) -> np.ndarray:
    """A (rows, cols) matrix of uniforms keyed by (key, row, col)."""
    out = np.empty((rows, cols))
    for i in range(rows):
        out[i] = counter_uniforms(derive_key(key, i), np.arange(cols), 0)
    return out
