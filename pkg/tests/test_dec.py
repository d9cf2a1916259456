import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import finite_difference, max_rel_error
from ifl.cluster import clustering_accuracy
from ifl.dec import DecConfig, dec_fit, kl_divergence, kl_gradients, soft_assign, target_distribution
from ifl.errors import ConfigError, DegenerateClusterError, ShapeError
from ifl.nn import train_autoencoder
from ifl.synthetic import gaussian_blobs


def random_problem(rng, n=None, s=None, e=None):
    n = n or int(rng.integers(1, 11))
    s = s or int(rng.integers(2, 5))
    e = e or int(rng.integers(1, 6))
    z = rng.normal(size=(n, e))
    mu = rng.normal(size=(s, e))
    return z, mu


def test_soft_assign_equidistant_uniform():
    mu = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    np.testing.assert_allclose(soft_assign(np.zeros((1, 2)), mu), np.full((1, 4), 0.25))


def test_soft_assign_two_thirds():
    q = soft_assign(np.array([[0.0, 0.0]]), np.array([[0.0, 0.0], [1.0, 0.0]]), alpha=1.0)
    np.testing.assert_allclose(q, [[2 / 3, 1 / 3]], atol=1e-15)


def test_soft_assign_errors():
    with pytest.raises(ShapeError):
        soft_assign(np.zeros((2, 3)), np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        soft_assign(np.zeros((2, 3)), np.zeros((0, 3)))
    with pytest.raises(ConfigError):
        soft_assign(np.zeros((2, 3)), np.zeros((2, 3)), alpha=0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.2, 5.0))
def test_rows_sum_to_one(seed, alpha):
    z, mu = random_problem(np.random.default_rng(seed))
    q = soft_assign(z, mu, alpha)
    p = target_distribution(q)
    assert np.all(np.abs(q.sum(axis=1) - 1) <= 1e-9)
    assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-9)
    assert np.all((q > 0) & (q < 1))
    assert np.all(p >= 0)
    assert kl_divergence(p, q) >= 0


def test_target_one_hot_fixed_point():
    q = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(target_distribution(q), q)


def test_target_single_row_fixed_point():
    q = np.array([[2 / 3, 1 / 3]])
    np.testing.assert_allclose(target_distribution(q), q, rtol=0, atol=1e-12)


def test_target_hand_computed():
    p = target_distribution(np.array([[0.8, 0.2], [0.2, 0.8]]))
    np.testing.assert_allclose(p[0], [0.64 / 0.68, 0.04 / 0.68])
    np.testing.assert_allclose(p[0], [0.9412, 0.0588], atol=1e-4)


def test_target_zero_column_is_degenerate():
    with pytest.raises(DegenerateClusterError):
        target_distribution(np.array([[1.0, 0.0], [1.0, 0.0]]))


def test_kl_values():
    q = np.array([[0.3, 0.7], [0.5, 0.5]])
    assert kl_divergence(q, q) == 0.0
    assert kl_divergence(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]])) == pytest.approx(np.log(2))
    with pytest.raises(ShapeError):
        kl_divergence(q, q[:1])


def kl_of(z, mu, p, alpha):
    return kl_divergence(p, soft_assign(z, mu, alpha))


def kl_fd_check(seed, alpha=1.0):
    rng = np.random.default_rng(seed)
    z, mu = random_problem(rng)
    p = target_distribution(soft_assign(z + rng.normal(scale=0.3, size=z.shape), mu, alpha))
    dz, dmu = kl_gradients(z, mu, p, soft_assign(z, mu, alpha), alpha)
    fz = finite_difference(lambda: kl_of(z, mu, p, alpha), z)
    fmu = finite_difference(lambda: kl_of(z, mu, p, alpha), mu)
    return max(max_rel_error(dz, fz), max_rel_error(dmu, fmu))


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("alpha", [1.0, 2.5])
def test_kl_gradients_finite_differences(seed, alpha):
    assert kl_fd_check(seed, alpha) < 1e-4


def test_kl_gradients_zero_at_match():
    rng = np.random.default_rng(0)
    z, mu = random_problem(rng, 6, 3, 2)
    q = soft_assign(z, mu)
    dz, dmu = kl_gradients(z, mu, q, q)
    assert np.all(dz == 0) and np.all(dmu == 0)


def test_kl_gradient_symmetric_centroids():
    z = np.array([[0.3, 0.2]])
    axis = np.array([1.0, 1.0]) / np.sqrt(2)
    mu = np.vstack([z[0] + axis, z[0] - axis])
    p = np.array([[0.9, 0.1]])
    dz, _ = kl_gradients(z, mu, p, soft_assign(z, mu))
    cross = dz[0, 0] * axis[1] - dz[0, 1] * axis[0]
    assert abs(cross) < 1e-15
    assert np.linalg.norm(dz) > 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_small_step_does_not_increase_kl(seed):
    rng = np.random.default_rng(seed)
    z, mu = random_problem(rng)
    p = target_distribution(soft_assign(z + rng.normal(scale=0.5, size=z.shape), mu))
    before = kl_of(z, mu, p, 1.0)
    dz, dmu = kl_gradients(z, mu, p, soft_assign(z, mu))
    after = kl_of(z - 1e-4 * dz, mu - 1e-4 * dmu, p, 1.0)
    assert after <= before + 1e-15


@pytest.fixture(scope="module")
def blobs_setup():
    x, y = gaussian_blobs(400, 4, 20, seed=3)
    ae, _ = train_autoencoder(x, [20, 32, 5, 32, 20], epochs=20, batch_size=64, seed=1)
    return x, y, ae


def test_dec_max_iter_zero_returns_kmeans_init(blobs_setup):
    x, _, ae = blobs_setup
    model = dec_fit(ae, x, 4, DecConfig(max_iter=0), seed=0)
    np.testing.assert_array_equal(model.hard.assignment, model.init.assignment)
    np.testing.assert_array_equal(model.centroids, model.init.centroids)
    assert model.n_iter == 0


def test_dec_refinement_not_worse_than_init(blobs_setup):
    x, y, ae = blobs_setup
    model = dec_fit(ae, x, 4, DecConfig(max_iter=400, batch_size=64), seed=0)
    assert clustering_accuracy(model.hard, y) >= clustering_accuracy(model.init, y)
    assert np.all(np.isfinite(model.centroids))
    assert model.sizes.sum() == len(x)


def test_dec_convergence_flag(blobs_setup):
    x, _, ae = blobs_setup
    model = dec_fit(ae, x, 4, DecConfig(max_iter=5000, tol=0.001, batch_size=64), seed=0)
    assert model.converged
    assert model.delta_history[-1] < 0.001
    assert all(d >= 0.001 for d in model.delta_history[:-1])


def test_dec_bit_reproducible(blobs_setup):
    x, _, ae = blobs_setup
    a = dec_fit(ae, x, 4, DecConfig(max_iter=50, batch_size=64), seed=5)
    b = dec_fit(ae, x, 4, DecConfig(max_iter=50, batch_size=64), seed=5)
    np.testing.assert_array_equal(a.centroids, b.centroids)
    for p, q in zip(a.encoder.parameters(), b.encoder.parameters()):
        np.testing.assert_array_equal(p, q)


def test_dec_does_not_mutate_input(blobs_setup):
    x, _, ae = blobs_setup
    before = [p.copy() for p in ae.parameters()]
    dec_fit(ae, x, 4, DecConfig(max_iter=10, batch_size=64), seed=0)
    for p, q in zip(before, ae.parameters()):
        np.testing.assert_array_equal(p, q)


def test_dec_config_validation():
    with pytest.raises(ConfigError):
        DecConfig(alpha=0)
    with pytest.raises(ConfigError):
        DecConfig(tol=1.5)
    with pytest.raises(ConfigError):
        DecConfig(update_interval=0)
