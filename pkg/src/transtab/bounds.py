"""Certified constants for the stabilized step.

``s3_bounds`` gives closed forms for the S^3 constraint ``V = (|x|^2 - 1)^2``.
``sampled_bounds`` estimates the same constants for an arbitrary constraint by
sampling the sublevel set and its delta-tube; the estimates are empirical
suprema/infima, so they are padded by a recorded safety margin.
"""
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import finite_diff
from .stabilizer import GRADIENT, ConstraintSpec, StabilizerGains

S3_CLOSED_FORM = "s3_closed_form"

SAFETY_MARGIN = 0.1
MIN_ACCEPTANCE = 1e-3
MIN_SAMPLES = 1000
# V values below this are treated as on the zero set when estimating b
ZERO_SET_TOL = 1e-14


class SamplingError(RuntimeError):
    pass


class DegenerateConstraintError(ValueError):
    pass


@dataclass(frozen=True)
class BoundsRequest:
    epsilon: float
    delta: float
    constraint: Union[ConstraintSpec, str] = S3_CLOSED_FORM
    alpha: Optional[float] = None
    sample_count: int = 10**5
    # (low, high) corner arrays of the proposal box for rejection sampling
    box: Optional[tuple] = None

    def __post_init__(self):
        if not (self.epsilon > 0 and self.delta > 0):
            raise ValueError("epsilon and delta must be positive")
        if self.constraint == S3_CLOSED_FORM and not self.epsilon < 1:
            raise ValueError(f"epsilon must be < 1 for the S^3 closed form, got {self.epsilon}")


def s3_bounds(epsilon, delta, alpha=None):
    """Closed-form constants for ``V(x) = (|x|^2 - 1)^2`` on R^4.

    The sublevel set ``V <= epsilon`` is the shell
    ``1 - sqrt(eps) <= |x|^2 <= 1 + sqrt(eps)``.

    * ``L``: ``|grad V| = 4 |x| ||x|^2 - 1|`` peaks on the outer shell.
    * ``b``: ``|grad V|^2 = 16 |x|^2 V``, so ``b = 16 (1 - sqrt(eps))``.
    * ``d``: bound ``12 |x|^2`` on the Hessian eigenvalues, maximised over the
      delta-tube, i.e. at radius ``sqrt(1 + sqrt(eps)) + delta``.
    """
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    root = np.sqrt(epsilon)
    outer = np.sqrt(1.0 + root)
    L = 4.0 * outer * root
    b = 16.0 * (1.0 - root)
    d = 12.0 * (outer + delta) ** 2
    raw = {"d_sublevel": 12.0 * (1.0 + root)}
    return StabilizerGains.from_constants(epsilon, delta, L, d, b, alpha=alpha, raw=raw)


def _propose(request, rng, n):
    low, high = (np.asarray(v, dtype=float) for v in request.box)
    return rng.uniform(low, high, (n,) + low.shape)


def _in_sublevel(spec, x, epsilon):
    if spec.mode == GRADIENT:
        return np.asarray(spec.value(x)) <= epsilon
    g = np.asarray(spec.value(x))
    return np.sqrt(np.sum(g * g, axis=-1)) < epsilon


def sample_sublevel(request, rng, max_rounds=1000):
    """Rejection-sample ``sample_count`` points of the sublevel set.

    Returns the points and the acceptance rate of the first round.
    """
    spec = request.constraint
    n = request.sample_count
    accepted = []
    total = 0
    rate = None
    for _ in range(max_rounds):
        x = _propose(request, rng, n)
        keep = x[_in_sublevel(spec, x, request.epsilon)]
        if rate is None:
            rate = len(keep) / n
            if rate < MIN_ACCEPTANCE:
                raise SamplingError(
                    f"acceptance rate {rate:.2e} below {MIN_ACCEPTANCE:g}; "
                    "the sublevel set is too thin for the proposal box"
                )
        accepted.append(keep)
        total += len(keep)
        if total >= n:
            break
    return np.concatenate(accepted)[:n], rate


def perturb_into_tube(points, delta, rng):
    """Uniform perturbation of each point inside the ball of radius ``delta``."""
    m, n = points.shape
    direction = rng.standard_normal((m, n))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = delta * rng.uniform(0.0, 1.0, m) ** (1.0 / n)
    return points + radius[:, None] * direction


def hessian_lambda_max(spec, x):
    """Largest Hessian eigenvalue of ``V`` (``1/2 |g|^2`` in submersion mode)."""
    if spec.hessian_lambda_max is not None:
        return np.asarray(spec.hessian_lambda_max(x), dtype=float)
    H = finite_diff.hessian_from_gradient(spec.correction, x)
    return np.linalg.eigvalsh(H)[:, -1]


def sampled_bounds(request, rng):
    """Empirical constants for a generic constraint.

    ``L`` and ``d`` are inflated and ``b`` deflated by ``SAFETY_MARGIN``; the
    unpadded estimates are kept in ``gains.raw``.
    """
    spec = request.constraint
    if not isinstance(spec, ConstraintSpec):
        raise TypeError("sampled_bounds needs a ConstraintSpec")
    if request.box is None:
        raise ValueError("sampled_bounds needs a proposal box")
    if request.sample_count < MIN_SAMPLES:
        raise ValueError(f"sample_count must be at least {MIN_SAMPLES}")

    pts, rate = sample_sublevel(request, rng)
    if spec.mode == GRADIENT:
        grad = np.asarray(spec.gradient(pts))
        gnorm2 = np.sum(grad * grad, axis=-1)
        L = float(np.sqrt(gnorm2.max()))
        v = np.asarray(spec.value(pts))
        off = v > ZERO_SET_TOL
        b = float(np.min(gnorm2[off] / v[off])) if np.any(off) else 0.0
    else:
        sv = np.linalg.svd(np.asarray(spec.jacobian(pts)), compute_uv=False)
        L = float(sv[:, 0].max())
        b = float(sv[:, -1].min())
    if not (np.isfinite(b) and b > 0):
        raise DegenerateConstraintError(
            f"gradient-dominance estimate b={b!r}; the constraint has no usable transversal direction"
        )

    tube = perturb_into_tube(pts, request.delta, rng)
    d = float(np.max(hessian_lambda_max(spec, tube)))

    raw = {"L": L, "d": d, "b": b, "acceptance": rate}
    return StabilizerGains.from_constants(
        request.epsilon,
        request.delta,
        L * (1 + SAFETY_MARGIN),
        d * (1 + SAFETY_MARGIN),
        b * (1 - SAFETY_MARGIN),
        alpha=request.alpha,
        mode=spec.mode,
        margin=SAFETY_MARGIN,
        raw=raw,
    )


def compute_bounds(request, rng=None):
    """Closed form for the S^3 tag, sampling otherwise."""
    if request.constraint == S3_CLOSED_FORM:
        return s3_bounds(request.epsilon, request.delta, request.alpha)
    if rng is None:
        raise ValueError("sampling mode needs an rng")
    return sampled_bounds(request, rng)


def reference_gains(alpha=0.01):
    """Reference S^3 constants (eps=0.5, delta=0.059, L=3.69, d=15.87).

    ``b`` follows ``16 (1 - sqrt(eps))``.
    """
    eps = 0.5
    return StabilizerGains.from_constants(
        eps, 0.059, 3.69, 15.87, 16.0 * (1.0 - np.sqrt(eps)), alpha=alpha
    )
