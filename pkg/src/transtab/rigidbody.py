"""Rigid-body attitude on S^3, its stabilized extension and two observers.

The raw system is ``q_{k+1} = q_k exp(Omega_k / 2)``. With
``V(x) = |conj(x) x - 1|^2`` it preserves ``V``, so the stabilizer applies
with ``grad V(x) = 4 x (|x|^2 - 1)``.
"""
from dataclasses import dataclass, replace

import numpy as np

from . import quaternion as qt
from .stabilizer import GRADIENT, SUBMERSION, ConstraintSpec

# observer gain: approximate mean of exp(Omega/2) for Omega components uniform in (0, 10)
DEFAULT_GAIN = qt.quat(0.11, -0.18, -0.18, -0.18)


# -- constraint functions for S^3 ---------------------------------------------

def s3_value(x):
    """``V(x) = (|x|^2 - 1)^2``."""
    s = qt.norm_squared(x) - 1.0
    return s * s


def s3_gradient(x):
    x = np.asarray(x, dtype=float)
    return 4.0 * x * (qt.norm_squared(x) - 1.0)[..., None]


def s3_lambda_bound(x):
    # 12 x^T x dominates the exact top eigenvalue 12 x^T x - 4 of D^2 V
    return 12.0 * qt.norm_squared(x)


def s3_constraint():
    return ConstraintSpec(
        mode=GRADIENT,
        value=s3_value,
        gradient=s3_gradient,
        hessian_lambda_max=s3_lambda_bound,
        name="s3",
    )


def s3_g(x):
    """Submersion ``g(x) = |x|^2 - 1`` as a length-1 vector."""
    return (qt.norm_squared(x) - 1.0)[..., None]


def s3_dg(x):
    x = np.asarray(x, dtype=float)
    return 2.0 * x[..., None, :]


def s3_submersion():
    return ConstraintSpec(mode=SUBMERSION, value=s3_g, jacobian=s3_dg, name="s3_submersion")


def s3_half_value(x):
    """``1/2 (|x|^2 - 1)^2``, written out independently of ``s3_g``."""
    s = qt.norm_squared(x) - 1.0
    return 0.5 * s * s


def s3_half_gradient(x):
    x = np.asarray(x, dtype=float)
    return 2.0 * x * (qt.norm_squared(x) - 1.0)[..., None]


def s3_half_constraint():
    return ConstraintSpec(
        mode=GRADIENT, value=s3_half_value, gradient=s3_half_gradient, name="s3_half"
    )


# -- dynamics ------------------------------------------------------------------

def raw_step(q, omega):
    """One step of ``q exp(omega / 2)``; preserves ``|q|``."""
    return qt.mul(q, qt.exp_vector(np.asarray(omega, dtype=float) / 2.0))


def transversal_term(q, increment, alpha):
    """``4 alpha q (conj(q) q - 1) increment`` with ``increment = exp(omega/2)``."""
    q = np.asarray(q, dtype=float)
    scaled = q * (4.0 * alpha * (qt.norm_squared(q) - 1.0))[..., None]
    return qt.mul(scaled, increment)


def stabilized_step(q, omega, alpha):
    """Stabilized step ``q e - 4 alpha q (conj(q) q - 1) e``, ``e = exp(omega/2)``.

    Equal to ``stabilized_step_gradient(raw_step(q, omega), s3_constraint(), alpha)``
    because ``|q e| = |q|``.
    """
    e = qt.exp_vector(np.asarray(omega, dtype=float) / 2.0)
    return qt.mul(q, e) - transversal_term(q, e, alpha)


def noise_vector(rng, noise_std, size=None):
    """Vector quaternion(s) with i.i.d. N(0, noise_std^2) imaginary parts."""
    shape = () if size is None else tuple(np.atleast_1d(size))
    nu = np.zeros(shape + (4,))
    nu[..., 1:] = rng.normal(0.0, noise_std, shape + (3,))
    return nu


def measure(q_true, rng, noise_std):
    """Noisy measurement ``q_true exp(nu)``; the multiplier has unit norm."""
    q_true = np.asarray(q_true, dtype=float)
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    if noise_std == 0:
        return q_true.copy()
    nu = noise_vector(rng, noise_std, q_true.shape[:-1] or None)
    return qt.mul(q_true, qt.exp_vector(nu))


@dataclass(frozen=True)
class ObserverPair:
    """States of the observer with (``q_w``) and without (``q_wo``) the
    transversal term. Fields may hold batches of shape ``(runs, 4)``."""

    q_w: np.ndarray
    q_wo: np.ndarray
    gain: np.ndarray
    alpha: float

    @classmethod
    def start(cls, gain, alpha, batch=None):
        q0 = qt.IDENTITY if batch is None else np.tile(qt.IDENTITY, (batch, 1))
        return cls(q_w=q0.copy(), q_wo=q0.copy(), gain=np.asarray(gain, dtype=float), alpha=alpha)


def observer_step(pair, q_meas, omega):
    """Advance both observers with the same measurement and rotation.

    The innovation ``(q_meas - q_hat)`` multiplies the gain from the right.
    """
    e = qt.exp_vector(np.asarray(omega, dtype=float) / 2.0)
    q_meas = np.asarray(q_meas, dtype=float)
    q_w = (
        qt.mul(pair.q_w, e)
        + qt.mul(q_meas - pair.q_w, pair.gain)
        - transversal_term(pair.q_w, e, pair.alpha)
    )
    q_wo = qt.mul(pair.q_wo, e) + qt.mul(q_meas - pair.q_wo, pair.gain)
    return replace(pair, q_w=q_w, q_wo=q_wo)


def random_omega(rng, low, high, size=None):
    """Vector quaternion(s) with components uniform in ``[low, high)``."""
    shape = () if size is None else tuple(np.atleast_1d(size))
    om = np.zeros(shape + (4,))
    om[..., 1:] = rng.uniform(low, high, shape + (3,))
    return om


def default_gain(rng, omega_low, omega_high, samples=10**6, chunk=10**5):
    """Monte Carlo mean of ``exp(Omega / 2)`` over uniform ``Omega`` components."""
    total = np.zeros(4)
    left = int(samples)
    while left > 0:
        n = min(chunk, left)
        total += qt.exp_vector(random_omega(rng, omega_low, omega_high, n) / 2.0).sum(axis=0)
        left -= n
    return total / samples
