"""Central finite differences used to audit analytic derivatives.

Functions take a batch of points ``x`` of shape ``(m, n)`` and callables that
are vectorised over the leading axis.
"""
import numpy as np


def _steps(x, h):
    # relative step, floored so points near the origin still move
    return h * np.maximum(1.0, np.abs(x))


def gradient(fun, x, h=1e-3):
    """Five-point central-difference gradient of a scalar field.

    Truncation error is O(h^4), so h=1e-3 keeps both truncation and
    cancellation error near 1e-11 for well-scaled polynomials.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, n = x.shape
    out = np.empty((m, n))
    for j in range(n):
        step = _steps(x[:, j], h)
        e = np.zeros_like(x)
        e[:, j] = step
        f2p, f1p = fun(x + 2 * e), fun(x + e)
        f1m, f2m = fun(x - e), fun(x - 2 * e)
        out[:, j] = (-f2p + 8 * f1p - 8 * f1m + f2m) / (12 * step)
    return out


def jacobian(fun, x, h=1e-3):
    """Five-point central-difference Jacobian of ``fun: (m, n) -> (m, k)``.

    Returns shape ``(m, k, n)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, n = x.shape
    cols = []
    for j in range(n):
        step = _steps(x[:, j], h)
        e = np.zeros_like(x)
        e[:, j] = step
        d = (
            -np.atleast_1d(fun(x + 2 * e)).reshape(m, -1)
            + 8 * np.atleast_1d(fun(x + e)).reshape(m, -1)
            - 8 * np.atleast_1d(fun(x - e)).reshape(m, -1)
            + np.atleast_1d(fun(x - 2 * e)).reshape(m, -1)
        ) / (12 * step[:, None])
        cols.append(d)
    return np.stack(cols, axis=-1)


def hessian_from_gradient(grad, x, h=1e-5):
    """Symmetrised Hessian from central differences of an analytic gradient.

    Returns shape ``(m, n, n)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, n = x.shape
    H = np.empty((m, n, n))
    for j in range(n):
        step = _steps(x[:, j], h)
        e = np.zeros_like(x)
        e[:, j] = step
        H[:, :, j] = (grad(x + e) - grad(x - e)) / (2 * step[:, None])
    return 0.5 * (H + np.swapaxes(H, 1, 2))


def max_relative_error(approx, exact, floor=1e-12):
    """Worst per-point relative error ``max_i |approx - exact| / |exact|``.

    Each row is scaled by the norm of its exact value (floored), so a zero
    component does not blow up the ratio.
    """
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    scale = np.linalg.norm(exact.reshape(exact.shape[0], -1), axis=-1)
    scale = np.maximum(scale, floor).reshape((-1,) + (1,) * (exact.ndim - 1))
    return float(np.max(np.abs(approx - exact) / scale))
