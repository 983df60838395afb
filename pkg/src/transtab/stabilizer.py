"""Transversal stabilization of a discrete-time step.

Given the raw image ``f(x)`` of one step of a system that preserves a
constraint function ``V`` (``V(f(x)) == V(x)``), the stabilized step is

    f(x) - alpha * grad V(f(x))                          (gradient mode)
    f(x) - alpha * Dg(f(x))^T g(f(x))                    (submersion mode)

which makes the zero set of ``V`` (or ``g``) an exponentially stable
attractor when ``alpha`` is inside the certified interval. The stepper only
sees the already-evaluated ``f(x)``, so controlled and autonomous systems go
through the same code path.
"""
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

GRADIENT = "gradient"
SUBMERSION = "submersion"
MODES = (GRADIENT, SUBMERSION)

# absolute slack on the one-step Lyapunov inequality; only absorbs rounding
CONTRACTION_SLACK = 1e-12


class NumericalError(ArithmeticError):
    """A constraint evaluation produced NaN or Inf."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class ConstraintSpec:
    """Constraint defining the attracting set and the correction direction.

    In gradient mode ``value`` is ``V: (..., n) -> (...)`` (non-negative) and
    ``gradient`` is its gradient. In submersion mode ``value`` is
    ``g: (..., n) -> (..., k)`` and ``jacobian`` returns ``(..., k, n)``.
    All callables must be vectorised over leading axes and reentrant.
    ``hessian_lambda_max`` optionally returns an upper bound on the largest
    Hessian eigenvalue of ``V`` (or of ``1/2 |g|^2``) at each point.
    """

    mode: str
    value: Callable
    gradient: Optional[Callable] = None
    jacobian: Optional[Callable] = None
    hessian_lambda_max: Optional[Callable] = None
    name: str = "constraint"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == GRADIENT and self.gradient is None:
            raise ValueError("gradient mode requires a gradient callable")
        if self.mode == SUBMERSION and self.jacobian is None:
            raise ValueError("submersion mode requires a jacobian callable")

    def lyapunov(self, x):
        """``V(x)``; in submersion mode this is ``1/2 |g(x)|^2``."""
        if self.mode == GRADIENT:
            return self.value(x)
        g = np.asarray(self.value(x))
        return 0.5 * np.sum(g * g, axis=-1)

    def correction(self, x, g_point=None):
        """Correction direction at ``x``: ``grad V(x)`` or ``Dg(x)^T g``.

        ``g_point`` (submersion mode only) evaluates ``g`` at a different point.
        """
        x = np.asarray(x, dtype=float)
        if self.mode == GRADIENT:
            if g_point is not None:
                raise ValueError("g_point only applies in submersion mode")
            return np.asarray(self.gradient(x), dtype=float)
        J = np.asarray(self.jacobian(x), dtype=float)
        g = np.asarray(self.value(x if g_point is None else g_point), dtype=float)
        return np.einsum("...kn,...k->...n", J, g)


def half_squared(spec, name=None):
    """Gradient-mode view ``V = 1/2 |g|^2`` of a submersion-mode spec."""
    if spec.mode != SUBMERSION:
        raise ValueError("half_squared expects a submersion-mode spec")
    return ConstraintSpec(
        mode=GRADIENT,
        value=spec.lyapunov,
        gradient=spec.correction,
        hessian_lambda_max=spec.hessian_lambda_max,
        name=name or f"half_squared({spec.name})",
    )


def _checked(direction, where):
    if not np.all(np.isfinite(direction)):
        bad = np.asarray(where)
        if bad.ndim > 1:
            idx = np.argwhere(~np.all(np.isfinite(direction), axis=-1))[0][0]
            bad = bad[idx]
        raise NumericalError(f"non-finite correction at point {bad.tolist()}", point=bad)
    return direction


def stabilized_step_gradient(f_of_x, spec, alpha):
    """``f(x) - alpha * grad V(f(x))`` for an already evaluated ``f(x)``."""
    if spec.mode != GRADIENT:
        raise ValueError("stabilized_step_gradient needs a gradient-mode spec")
    f_of_x = np.asarray(f_of_x, dtype=float)
    if alpha == 0:
        return f_of_x.copy()
    direction = _checked(spec.correction(f_of_x), f_of_x)
    return f_of_x - alpha * direction


def stabilized_step_submersion(f_of_x, spec, alpha, g_point=None):
    """``f(x) - alpha * Dg(f(x))^T g(.)`` for an already evaluated ``f(x)``.

    By default ``g`` is evaluated at ``f(x)`` as well, which makes the step
    identical to the gradient step for ``V = 1/2 |g|^2``. Passing the previous
    state as ``g_point`` gives the variant with ``g`` taken before the step;
    the two agree whenever the raw step preserves ``g``.
    """
    if spec.mode != SUBMERSION:
        raise ValueError("stabilized_step_submersion needs a submersion-mode spec")
    f_of_x = np.asarray(f_of_x, dtype=float)
    if alpha == 0:
        return f_of_x.copy()
    direction = _checked(spec.correction(f_of_x, g_point=g_point), f_of_x)
    return f_of_x - alpha * direction


def stabilized_step(f_of_x, spec, alpha, **kwargs):
    """Dispatch on ``spec.mode``."""
    if spec.mode == GRADIENT:
        return stabilized_step_gradient(f_of_x, spec, alpha)
    return stabilized_step_submersion(f_of_x, spec, alpha, **kwargs)


@dataclass(frozen=True)
class StabilizerGains:
    """Step size together with the constants that certify it.

    ``L`` bounds the correction norm on the sublevel set, ``d`` bounds the
    Hessian eigenvalues on the delta-tube and ``b`` is the gradient-dominance
    constant (``|grad V|^2 >= b V``). ``c = alpha - alpha^2 d / 2`` and the
    guaranteed per-step decay of ``V`` is ``contraction = 1 - b c``.
    """

    epsilon: float
    delta: float
    L: float
    d: float
    b: float
    alpha_max: float
    alpha: Optional[float] = None
    c: Optional[float] = None
    contraction: Optional[float] = None
    mode: str = GRADIENT
    margin: float = 0.0
    raw: Optional[dict] = field(default=None, compare=False)

    @classmethod
    def from_constants(cls, epsilon, delta, L, d, b, alpha=None, mode=GRADIENT, **extra):
        gains = cls(
            epsilon=float(epsilon),
            delta=float(delta),
            L=float(L),
            d=float(d),
            b=float(b),
            alpha_max=alpha_bound(epsilon, delta, L, d, mode),
            mode=mode,
            **extra,
        )
        return gains if alpha is None else gains.with_alpha(alpha)

    def with_alpha(self, alpha):
        alpha = float(alpha)
        c = alpha - alpha * alpha * self.d / 2
        return replace(self, alpha=alpha, c=c, contraction=1.0 - self.b * c)

    def as_dict(self):
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "L": self.L,
            "d": self.d,
            "b": self.b,
            "alpha_max": self.alpha_max,
            "alpha": self.alpha,
            "c": self.c,
            "contraction": self.contraction,
        }


def alpha_bound(epsilon, delta, L, d, mode=GRADIENT):
    """Supremum of admissible step sizes (the interval is open)."""
    if mode == GRADIENT:
        return min(2.0 / d, delta / L)
    if mode == SUBMERSION:
        return min(2.0 / d, 2.0 * delta / (L * epsilon**2))
    raise ValueError(f"unknown mode {mode!r}")


def validate_alpha(alpha, gains, mode=GRADIENT):
    """True iff ``0 < alpha < alpha_bound`` for the given mode."""
    bound = alpha_bound(gains.epsilon, gains.delta, gains.L, gains.d, mode)
    return bool(0.0 < alpha < bound)


@dataclass(frozen=True)
class ContractionReport:
    satisfied: bool
    ratio: float


def check_contraction(v_before, v_after, gains):
    """Check ``v_after <= contraction * v_before`` (plus rounding slack).

    Works elementwise on arrays; ``ratio`` is 0 where ``v_before`` is 0.
    """
    if gains.contraction is None:
        raise ValueError("gains carry no contraction factor; supply alpha first")
    v_before = np.asarray(v_before, dtype=float)
    v_after = np.asarray(v_after, dtype=float)
    ok = v_after <= gains.contraction * v_before + CONTRACTION_SLACK
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(v_before == 0, 0.0, v_after / np.where(v_before == 0, 1.0, v_before))
    if ok.ndim == 0:
        return ContractionReport(bool(ok), float(ratio))
    return ContractionReport(ok, ratio)
