import numpy as np
import pytest

from _oracles import max_rel_err, numeric_grad
from gslearn import diffcore as dc
from gslearn import sampler


def random_pi(seed, n=6, c=5):
    gen = np.random.default_rng(seed)
    p = gen.uniform(0.05, 1.0, size=(n, c))
    return p / p.sum(axis=1, keepdims=True)


def test_rows_sum_to_one_over_random_configurations():
    for seed in range(30):
        gen = np.random.default_rng(seed)
        pi = random_pi(seed, n=int(gen.integers(2, 10)), c=int(gen.integers(2, 10)))
        tau = float(gen.uniform(0.05, 3.0))
        k = int(gen.integers(1, 8))
        adj = sampler.relaxed_sample(pi, tau, k, dc.RngState(seed))
        A = adj.A.value
        np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-9)
        assert A.min() >= 0.0
        assert A.max() <= 1.0
        assert adj.K == k
        assert adj.tau == tau


def test_same_rng_reproduces_draws():
    pi = random_pi(0)
    a = sampler.relaxed_sample(pi, 0.5, 3, dc.RngState(9)).A.value
    b = sampler.relaxed_sample(pi, 0.5, 3, dc.RngState(9)).A.value
    np.testing.assert_array_equal(a, b)
    c = sampler.relaxed_sample(pi, 0.5, 3, dc.RngState(10)).A.value
    assert not np.array_equal(a, c)


def test_consuming_generator_advances_noise():
    pi = random_pi(1)
    gen = dc.RngState(0).generator("gumbel")
    a = sampler.relaxed_sample(pi, 0.5, 2, gen).A.value
    b = sampler.relaxed_sample(pi, 0.5, 2, gen).A.value
    assert not np.array_equal(a, b)


def test_averaging_more_draws_shrinks_variance():
    pi = random_pi(2, n=1, c=4)
    spread = {}
    for k in (1, 20):
        samples = [
            sampler.relaxed_sample(pi, 0.25, k, dc.RngState(1000 + r)).A.value[0, 0]
            for r in range(200)
        ]
        spread[k] = np.std(samples)
    assert spread[20] < spread[1] / 2


def test_degenerate_row_yields_one_hot():
    pi = np.array([[1.0, 0.0, 0.0]])
    A = sampler.relaxed_sample(pi, 0.25, 4, dc.RngState(3)).A.value
    np.testing.assert_allclose(A, [[1.0, 0.0, 0.0]], atol=1e-10)


def test_hard_draw_frequencies_follow_pi():
    """The argmax of one noisy draw is a sample from pi itself, whatever
    the temperature, so empirical argmax frequencies track pi."""
    pi = np.array([[0.5, 0.3, 0.2]])
    counts = np.zeros(3)
    draws = 4000
    for r in range(draws):
        A = sampler.relaxed_sample(pi, 0.25, 1, dc.RngState(50_000 + r)).A.value
        counts[A[0].argmax()] += 1
    np.testing.assert_allclose(counts / draws, pi[0], atol=0.03)


def test_lower_temperature_sharpens_draws():
    pi = random_pi(4, n=1, c=6)
    max_entry = {}
    for tau in (0.05, 2.0):
        vals = [
            sampler.relaxed_sample(pi, tau, 1, dc.RngState(7_000 + r)).A.value.max()
            for r in range(100)
        ]
        max_entry[tau] = np.mean(vals)
    assert max_entry[0.05] > 0.9
    assert max_entry[2.0] < 0.6
    assert max_entry[0.05] > max_entry[2.0] + 0.2


def test_gradient_matches_finite_differences():
    """Backward through the averaged draws, checked against central
    differences on the pre-softmax scores with frozen noise."""
    gen = np.random.default_rng(5)
    scores0 = gen.normal(size=(4, 5))
    weights = gen.normal(size=(4, 5))

    def loss_from(scores_value):
        leaf = dc.param(scores_value)
        pi = dc.softmax_rows(leaf)
        adj = sampler.relaxed_sample(pi, 0.7, 3, dc.RngState(11))
        return leaf, dc.sum_all(dc.mul(adj.A, dc.constant(weights)))

    leaf, loss = loss_from(scores0)
    dc.backward(loss)
    fd = numeric_grad(lambda s: float(loss_from(s)[1].value[0, 0]), scores0)
    assert max_rel_err(leaf.grad, fd) < 1e-5


def test_straight_through_hardens_forward_keeps_gradient():
    pi = random_pi(6, n=5, c=4)
    adj = sampler.relaxed_sample(pi, 0.25, 4, dc.RngState(12), straight_through=True)
    quarters = adj.A.value * 4
    np.testing.assert_allclose(quarters, np.round(quarters), atol=1e-12)

    leaf = dc.param(np.log(pi))
    soft_pi = dc.softmax_rows(leaf)
    adj2 = sampler.relaxed_sample(soft_pi, 0.25, 4, dc.RngState(12),
                                  straight_through=True)
    dc.backward(dc.sum_all(dc.mul(adj2.A, dc.constant(np.ones((5, 4))))))
    assert np.abs(leaf.grad).max() > 0.0


def test_relaxed_sample_accepts_similarity_matrix():
    from gslearn.similarity import EmbeddingMatrix, linsim

    gen = np.random.default_rng(7)
    v = gen.normal(size=(4, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    Z = EmbeddingMatrix(dc.constant(v), True)
    out = linsim(Z, Z)
    adj = sampler.relaxed_sample(out, 0.25, 2, dc.RngState(13))
    assert adj.shape == (4, 4)


def test_relaxed_sample_validation():
    pi = random_pi(8)
    with pytest.raises(dc.ConfigError):
        sampler.relaxed_sample(pi, 0.0, 2, dc.RngState(0))
    with pytest.raises(dc.ConfigError):
        sampler.relaxed_sample(pi, 0.5, 0, dc.RngState(0))


def test_hard_knn_selects_top_k_per_row():
    S = np.array([[0.9, 0.1, 0.5, 0.3],
                  [0.0, 0.2, 0.8, 0.4]])
    A = sampler.hard_knn(S, 2)
    np.testing.assert_array_equal(A, [[1, 0, 1, 0], [0, 0, 1, 1]])
    np.testing.assert_array_equal(A.sum(axis=1), 2.0)


def test_hard_knn_breaks_ties_toward_lower_column():
    S = np.array([[2.0, 1.0, 2.0, 0.0]])
    A = sampler.hard_knn(S, 2)
    np.testing.assert_array_equal(A, [[1, 0, 1, 0]])
    S2 = np.array([[1.0, 2.0, 2.0, 0.0]])
    np.testing.assert_array_equal(sampler.hard_knn(S2, 2), [[0, 1, 1, 0]])


def test_hard_knn_validation():
    with pytest.raises(dc.ConfigError):
        sampler.hard_knn(np.zeros(3), 1)
    with pytest.raises(dc.ConfigError):
        sampler.hard_knn(np.zeros((2, 3)), 0)
    with pytest.raises(dc.ConfigError):
        sampler.hard_knn(np.zeros((2, 3)), 4)


def test_entropy_profile_increases_with_temperature():
    pi = np.array([0.6, 0.25, 0.1, 0.05])
    taus = [0.05, 0.25, 1.0, 4.0]
    h = sampler.entropy_profile(pi, taus, dc.RngState(14), draws=500)
    assert np.all(np.diff(h) > 0)
    assert h[0] < 0.2
    assert h[-1] < np.log(4) + 1e-9


def test_entropy_profile_validation():
    with pytest.raises(dc.ConfigError):
        sampler.entropy_profile(np.array([1.0, 0.0]), [0.0], dc.RngState(0))
    with pytest.raises(dc.ConfigError):
        sampler.entropy_profile(np.array([1.0, 0.0]), [0.5], dc.RngState(0), draws=0)
