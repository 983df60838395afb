import math

import numpy as np
import pytest

from transtab import quaternion as qt
from transtab import rigidbody as rb
from transtab.bounds import reference_gains
from transtab.stabilizer import check_contraction, stabilized_step_gradient

from conftest import random_omegas, shell_points, sublevel_points, ulps

GAIN = rb.DEFAULT_GAIN


def test_raw_step_examples():
    np.testing.assert_array_equal(rb.raw_step(qt.IDENTITY, np.zeros(4)), qt.IDENTITY)
    np.testing.assert_allclose(rb.raw_step(qt.IDENTITY, qt.vector(math.pi, 0, 0)), [0, 1, 0, 0], atol=1e-15)
    with pytest.raises(ValueError):
        rb.raw_step(qt.IDENTITY, [0.5, 0, 0, 0])


def test_raw_step_preserves_norm(rng):
    q = rng.standard_normal((10_000, 4))
    q1 = rb.raw_step(q, random_omegas(rng, 10_000, 0, 10))
    n = qt.norm(q)
    assert np.all(np.abs(qt.norm(q1) - n) <= ulps(n, 8))


def test_raw_step_preserves_constraint(rng):
    q = shell_points(rng, 10_000, 0.0, 2.0)
    v1 = rb.s3_value(rb.raw_step(q, random_omegas(rng, 10_000, 0, 10)))
    assert np.max(np.abs(v1 - rb.s3_value(q))) <= 1e-12


def test_stabilized_step_examples(rng):
    np.testing.assert_allclose(rb.stabilized_step([1.2, 0, 0, 0], np.zeros(4), 0.01), [1.17888, 0, 0, 0], rtol=1e-14)
    u = qt.random_unit(rng, 100)
    om = random_omegas(rng, 100)
    np.testing.assert_allclose(rb.stabilized_step(u, om, 0.01), rb.raw_step(u, om), atol=1e-15)


def test_factorization_identity(rng):
    q = shell_points(rng, 10_000, 0.4, 1.5)
    om = random_omegas(rng, 10_000, 0, 10)
    direct = rb.stabilized_step(q, om, 0.01)
    via_core = stabilized_step_gradient(rb.raw_step(q, om), rb.s3_constraint(), 0.01)
    assert np.max(np.abs(direct - via_core)) <= 1e-12


def test_stabilized_step_contracts(rng):
    gains = reference_gains()
    q = sublevel_points(rng, 10_000)
    q1 = rb.stabilized_step(q, random_omegas(rng, 10_000), 0.01)
    assert np.all(check_contraction(rb.s3_value(q), rb.s3_value(q1), gains).satisfied)
    assert np.all(rb.s3_value(q1) <= 0.9569 * rb.s3_value(q) + 1e-12)


def test_measure(rng):
    q = rng.standard_normal((1000, 4))
    np.testing.assert_array_equal(rb.measure(q, rng, 0.0), q)
    m = rb.measure(q, rng, 0.1)
    assert np.max(np.abs(qt.norm(m) - qt.norm(q))) <= 1e-12
    assert rb.measure(qt.IDENTITY, rng, 0.1).shape == (4,)
    with pytest.raises(ValueError):
        rb.measure(q, rng, -1.0)


def test_measure_rotation_angle_spread():
    # the quaternion angle of exp(nu) is |nu|; oracle: |nu| simulated directly
    noise_std = 0.1
    rng = np.random.default_rng(11)
    m = rb.measure(np.tile(qt.IDENTITY, (100_000, 1)), rng, noise_std)
    angle = np.arctan2(np.linalg.norm(m[:, 1:], axis=1), m[:, 0])
    oracle = np.linalg.norm(np.random.default_rng(12).normal(0, noise_std, (100_000, 3)), axis=1)
    assert angle.std() == pytest.approx(oracle.std(), rel=0.05)
    # RMS of |nu| is noise_std * sqrt(3)
    assert math.sqrt(np.mean(angle**2)) == pytest.approx(noise_std * math.sqrt(3), rel=0.05)


def test_observer_fixed_point(rng):
    u = qt.random_unit(rng)
    om = random_omegas(rng, 1)[0]
    pair = rb.ObserverPair(q_w=u, q_wo=u, gain=GAIN, alpha=0.01)
    nxt = rb.observer_step(pair, u, om)
    np.testing.assert_allclose(nxt.q_w, rb.raw_step(u, om), atol=1e-15)
    np.testing.assert_allclose(nxt.q_wo, rb.raw_step(u, om), atol=1e-15)


def test_observer_without_gain_is_raw(rng):
    q_w, q_wo, meas = rng.standard_normal((3, 4))
    om = random_omegas(rng, 1)[0]
    nxt = rb.observer_step(rb.ObserverPair(q_w, q_wo, np.zeros(4), 0.0), meas, om)
    np.testing.assert_allclose(nxt.q_w, rb.raw_step(q_w, om), atol=1e-15)
    np.testing.assert_allclose(nxt.q_wo, rb.raw_step(q_wo, om), atol=1e-15)


def test_observer_one_step_hand_computed():
    # innovation (-1, 1, 0, 0) * (0.11, -0.18, -0.18, -0.18) = (0.07, 0.29, 0.36, 0)
    pair = rb.ObserverPair.start(GAIN, 0.01)
    nxt = rb.observer_step(pair, [0, 1, 0, 0], np.zeros(4))
    np.testing.assert_allclose(nxt.q_w, [1.07, 0.29, 0.36, 0.0], atol=1e-15)
    np.testing.assert_allclose(nxt.q_wo, [1.07, 0.29, 0.36, 0.0], atol=1e-15)


def test_observer_gain_multiplies_on_the_right():
    pair = rb.ObserverPair.start(GAIN, 0.0)
    nxt = rb.observer_step(pair, [0, 0, 1, 0], np.zeros(4))
    innovation = np.array([-1.0, 0, 1, 0])
    np.testing.assert_allclose(nxt.q_wo - qt.IDENTITY, qt.mul(innovation, GAIN), atol=1e-15)
    assert not np.allclose(qt.mul(innovation, GAIN), qt.mul(GAIN, innovation))


def test_observer_lines_differ_by_transversal_term(rng):
    q0 = rng.standard_normal((50, 4))
    meas = qt.random_unit(rng, 50)
    om = random_omegas(rng, 50, 0, 10)
    pair = rb.ObserverPair(q0, q0, GAIN, 0.01)
    nxt = rb.observer_step(pair, meas, om)
    term = rb.transversal_term(q0, qt.exp_vector(om / 2), 0.01)
    np.testing.assert_allclose(nxt.q_wo - nxt.q_w, term, atol=1e-14)


def test_observer_batch_matches_single(rng):
    q0 = rng.standard_normal((5, 4))
    meas = rng.standard_normal((5, 4))
    om = random_omegas(rng, 5, 0, 10)
    batch = rb.observer_step(rb.ObserverPair(q0, q0, GAIN, 0.01), meas, om)
    for i in range(5):
        one = rb.observer_step(rb.ObserverPair(q0[i], q0[i], GAIN, 0.01), meas[i], om[i])
        np.testing.assert_array_equal(one.q_w, batch.q_w[i])


def test_default_gain_matches_reported_value():
    L = rb.default_gain(np.random.default_rng(3), 0.0, 10.0, samples=10**6)
    np.testing.assert_allclose(L, GAIN, atol=0.02)


def test_default_gain_edge_cases(rng):
    np.testing.assert_array_equal(rb.default_gain(rng, 0.0, 0.0, samples=10**4), qt.IDENTITY)
    L = rb.default_gain(rng, -2.0, 2.0, samples=10**5)
    assert np.ptp(L[1:]) < 0.01
