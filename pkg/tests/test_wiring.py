import numpy as np
import pytest

from bayescircuit.populations import (
    Concatenation,
    GaussianGrid,
    VonMisesGrid,
    colour_tuning,
    flat_prior,
    natural_encoding,
    response_posterior,
)
from bayescircuit.wiring import build_naive, build_orthogonal, decode, neural_bayes_update


def encodings():
    return {
        "colour": natural_encoding(colour_tuning(), 1.0),
        "track": natural_encoding(GaussianGrid(np.linspace(-7, 7, 10), 2.0), 2.0),
        "pendulum": natural_encoding(
            Concatenation(
                VonMisesGrid.evenly_spaced(10, 0.5),
                GaussianGrid(np.linspace(-12, 12, 10), 4.0),
            ),
            2.0,
        ),
    }


@pytest.fixture(params=["colour", "track", "pendulum"])
def enc(request):
    return encodings()[request.param]


@pytest.fixture(params=["naive", "orthogonal"])
def wiring_of(request):
    return build_naive if request.param == "naive" else build_orthogonal


class TestNaive:
    def test_identity_recoders(self, enc):
        w = build_naive(enc)
        assert np.array_equal(w.a, np.eye(enc.n_neurons))
        assert np.array_equal(w.b, np.eye(enc.n_neurons))
        assert np.array_equal(w.theta_z @ w.a, enc.theta_matrix)

    def test_decode_matches_flat_posterior(self, enc):
        w = build_naive(enc)
        rng = np.random.default_rng(0)
        n = rng.poisson(1.0, enc.n_neurons)
        z = neural_bayes_update(w, n, np.zeros(enc.n_neurons))
        decoded = decode(w.theta_z, z, w.family)
        post = response_posterior(enc, flat_prior(enc.family), n)
        assert np.allclose(decoded.theta, post.theta, atol=1e-10)


class TestOrthogonal:
    def test_rows_orthogonal(self, enc):
        w = build_orthogonal(enc)
        gram = w.theta_z @ w.theta_z.T
        off = gram - np.diag(np.diag(gram))
        assert np.max(np.abs(off)) < 1e-10

    def test_orthogonal_to_ones(self, enc):
        w = build_orthogonal(enc)
        assert np.max(np.abs(w.theta_z @ np.ones(w.d_z))) < 1e-10

    def test_exact_recoding_residual(self, enc):
        w = build_orthogonal(enc)
        assert np.max(np.abs(w.theta_z @ w.a - enc.theta_matrix)) < 1e-10

    def test_row_scales_match(self, enc):
        w = build_orthogonal(enc)
        assert np.allclose(
            np.linalg.norm(w.theta_z, axis=1),
            np.linalg.norm(enc.theta_matrix, axis=1),
        )

    def test_shift_invariance(self, enc):
        w = build_orthogonal(enc)
        rng = np.random.default_rng(1)
        z = rng.normal(size=w.d_z)
        base = decode(w.theta_z, z, w.family).theta
        for c in (-10.0, 1.0, 100.0):
            shifted = decode(w.theta_z, z + c, w.family).theta
            assert np.allclose(shifted, base, atol=1e-9)

    def test_too_small_population(self):
        enc = natural_encoding(GaussianGrid(np.array([-1.0, 0.0, 1.0]), 2.0), 1.0)
        with pytest.raises(ValueError):
            build_orthogonal(enc)


class TestNeuralBayesRule:
    def test_exact_identity_random_pairs(self, enc, wiring_of):
        # decode(A.n + B.y) == Theta_N.n + Theta_Y.y as an algebraic identity
        w = wiring_of(enc)
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = rng.poisson(1.5, enc.n_neurons)
            y = rng.normal(size=w.d_z)
            z = neural_bayes_update(w, n, y)
            decoded = decode(w.theta_z, z, w.family).theta
            prior = decode(w.theta_y, y, w.family)
            expected = response_posterior(enc, prior, n).theta
            assert np.allclose(decoded, expected, atol=1e-10)

    def test_zero_prior_rates(self, enc, wiring_of):
        w = wiring_of(enc)
        n = np.arange(enc.n_neurons)
        z = neural_bayes_update(w, n, np.zeros(w.d_z))
        assert np.allclose(z, w.a @ n)

    def test_dimension_policy(self, enc, wiring_of):
        w = wiring_of(enc)
        assert w.d_z == enc.n_neurons
        assert w.theta_y.shape == w.theta_z.shape

    def test_shape_mismatch(self, enc, wiring_of):
        w = wiring_of(enc)
        with pytest.raises(ValueError):
            neural_bayes_update(w, np.zeros(enc.n_neurons + 1), np.zeros(w.d_z))
