"""Counter-based random numbers.

Every draw is a pure function of integer keys (master seed, stream, path
index, step index, component), so results do not depend on the order in
which paths or steps are evaluated.  The mixer is the SplitMix64 finaliser
chained over the keys.
"""
import numpy as np
from scipy.special import ndtri

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MASK = (1 << 64) - 1

# stream tags
NORMALS = 1
RANDOM_ACTIONS = 2
AUDIT = 3


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_keys(seed, *keys):
    """uint64 hash of ``seed`` and the broadcast non-negative integer ``keys``."""
    keys = [np.asarray(k).astype(np.uint64) for k in keys]
    shape = np.broadcast_shapes(*[k.shape for k in keys]) if keys else ()
    h = np.full(shape, int(seed) & _MASK, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _mix(h + _GOLDEN)
        for k in keys:
            h = _mix((h ^ k) + _GOLDEN)
    return h


def uniforms(seed, *keys):
    """Uniform draws in the open interval (0, 1)."""
    h = hash_keys(seed, *keys)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def normals(seed, *keys):
    """Standard normal draws by inverse CDF of :func:`uniforms`."""
    return ndtri(uniforms(seed, *keys))


def integers(seed, n, *keys):
    """Uniform integers in ``[0, n)``."""
    return np.minimum((uniforms(seed, *keys) * n).astype(np.int64), n - 1)
