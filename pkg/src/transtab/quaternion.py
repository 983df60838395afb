"""Quaternion arithmetic on float64 arrays laid out as ``[w, x, y, z]``.

Every function accepts a single quaternion of shape ``(4,)`` or a batch of
shape ``(..., 4)`` and broadcasts over the leading axes.
"""
import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

# exp_vector switches to the first-order series below this angle
SMALL_ANGLE = 1e-8
# tolerance on the scalar part of a "vector" quaternion
VECTOR_TOL = 1e-12


def quat(w, x=0.0, y=0.0, z=0.0):
    """Build a quaternion array from its four components."""
    return np.array([w, x, y, z], dtype=float)


def vector(x, y, z):
    """Vector (pure imaginary) quaternion ``(0, x, y, z)``."""
    return np.array([0.0, x, y, z])


def as_quat(q):
    q = np.asarray(q, dtype=float)
    if q.shape[-1:] != (4,):
        raise ValueError(f"expected trailing dimension 4, got shape {q.shape}")
    return q


def mul(a, b):
    """Hamilton product ``a * b``."""
    a = as_quat(a)
    b = as_quat(b)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def conj(q):
    q = as_quat(q)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def norm_squared(q):
    q = as_quat(q)
    return np.sum(q * q, axis=-1)


def norm(q):
    return np.sqrt(norm_squared(q))


def exp_vector(v):
    """Exponential of a vector quaternion: ``cos|v| + sin|v| v/|v|``.

    Raises ValueError if the scalar part is not (numerically) zero; this is
    not a general quaternion exponential.
    """
    v = as_quat(v)
    if np.any(np.abs(v[..., 0]) > VECTOR_TOL):
        raise ValueError("exp_vector expects a vector quaternion (zero scalar part)")
    u = v[..., 1:]
    theta = np.sqrt(np.sum(u * u, axis=-1))
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    scale = np.where(small, 1.0, np.sin(theta) / safe)
    w = np.where(small, 1.0, np.cos(theta))
    return np.concatenate([w[..., None], scale[..., None] * u], axis=-1)


def dist_to_s3(q):
    """Euclidean distance from ``q`` to the unit sphere S^3 in R^4."""
    return np.abs(norm(q) - 1.0)


def random_unit(rng, size=None):
    """Uniform sample(s) on S^3 by normalising four standard normals.

    ``size`` is the batch shape; ``None`` returns a single quaternion.
    """
    shape = () if size is None else tuple(np.atleast_1d(size))
    q = rng.standard_normal(shape + (4,))
    n = norm(q)
    # the all-zero draw has probability zero, but redraw rather than divide by it
    bad = n == 0.0
    while np.any(bad):
        q[bad] = rng.standard_normal((int(np.sum(bad)), 4))
        n = norm(q)
        bad = n == 0.0
    return q / n[..., None]


def norm_residual(q):
    """``|conj(q) q - 1|``; about twice ``dist_to_s3`` near the sphere."""
    return np.abs(norm_squared(q) - 1.0)
