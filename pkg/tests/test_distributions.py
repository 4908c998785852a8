import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from setscene import autodiff as ad
from setscene import distributions as dist

from test_autodiff import check_grads


def mixture(weights, means, scales):
    return dist.LogisticMixture1D(np.asarray(weights, float),
                                  np.asarray(means, float),
                                  np.asarray(scales, float))


def random_mixture(rng, k=4):
    w = rng.random(k) + 0.1
    return mixture(w / w.sum(), rng.uniform(-3, 3, k), rng.uniform(0.05, 1.5, k))


class TestLogProb:
    def test_peak_density_single_component(self):
        # logistic density at its mean is 1/(4*scale)
        d = mixture([1.0], [0.7], [0.5])
        assert abs(dist.logistic_mixture_log_prob(0.7, d) - np.log(0.5)) < 1e-12

    def test_identical_components_collapse(self):
        single = mixture([1.0], [0.3], [0.8])
        triple = mixture([1 / 3] * 3, [0.3] * 3, [0.8] * 3)
        for x in (-1.0, 0.3, 2.5):
            assert abs(dist.logistic_mixture_log_prob(x, triple)
                       - dist.logistic_mixture_log_prob(x, single)) < 1e-9

    def test_density_integrates_to_one(self):
        # quadrature oracle over [mu - 40s, mu + 40s]
        rng = np.random.default_rng(0)
        for _ in range(3):
            d = random_mixture(rng)
            lo = float(np.min(d.means - 40 * d.scales))
            hi = float(np.max(d.means + 40 * d.scales))
            total, err = integrate.quad(
                lambda x: np.exp(dist.logistic_mixture_log_prob(x, d)),
                lo, hi, limit=300, points=list(d.means))
            assert abs(total - 1.0) < 1e-6

    def test_invalid_mixture_rejected(self):
        with pytest.raises(dist.InvalidDistribution):
            dist.logistic_mixture_log_prob(0.0, mixture([0.5, 0.2], [0, 1], [1, 1]))
        with pytest.raises(dist.InvalidDistribution):
            dist.logistic_mixture_log_prob(0.0, mixture([1.0], [0.0], [1e-9]))

    @given(st.integers(-4000, 4000), st.integers(-4000, 4000), st.integers(-16, 16))
    @settings(max_examples=200, deadline=None)
    def test_translation_equivariance_exact(self, xi, mi, ci):
        # lattice values keep x+c and mu+c exact in float64, so the
        # shifted log-density must match bit for bit
        x, mu, c = xi / 1024.0, mi / 1024.0, float(ci)
        d0 = mixture([1.0], [mu], [0.25])
        d1 = mixture([1.0], [mu + c], [0.25])
        assert dist.logistic_mixture_log_prob(x, d0) == \
            dist.logistic_mixture_log_prob(x + c, d1)


class TestSampling:
    def test_degenerate_returns_first_mean(self):
        d = mixture([1.0, 0.0], [2.5, -9.0], [dist.SCALE_FLOOR] * 2)
        rng = np.random.default_rng(3)
        for _ in range(50):
            assert abs(dist.logistic_mixture_sample(d, rng, temperature=1e-9) - 2.5) < 1e-5

    def test_seed_reproducibility(self):
        d = random_mixture(np.random.default_rng(1))
        a = [dist.logistic_mixture_sample(d, np.random.default_rng(42)) for _ in range(5)]
        b = [dist.logistic_mixture_sample(d, np.random.default_rng(42)) for _ in range(5)]
        assert a == b

    def test_ks_against_analytic_cdf(self):
        # two-sided KS vs the closed-form mixture CDF, n=10000, alpha=0.01
        rng = np.random.default_rng(7)
        d = random_mixture(rng, k=3)
        samples = np.array([dist.logistic_mixture_sample(d, rng) for _ in range(10_000)])
        result = stats.kstest(samples, lambda x: dist.logistic_mixture_cdf(x, d))
        assert result.pvalue > 0.01

    def test_sample_score_entropy(self):
        # single logistic differential entropy is ln(scale) + 2 nats
        scale = 0.6
        d = mixture([1.0], [1.2], [scale])
        rng = np.random.default_rng(11)
        lp = np.mean([dist.logistic_mixture_log_prob(
            dist.logistic_mixture_sample(d, rng), d) for _ in range(10_000)])
        assert abs(lp + (np.log(scale) + 2.0)) < 0.05

    def test_bad_temperature(self):
        d = random_mixture(np.random.default_rng(2))
        with pytest.raises(ValueError):
            dist.logistic_mixture_sample(d, np.random.default_rng(0), temperature=0.0)


class TestCategorical:
    def test_uniform_two_way(self):
        d = dist.CategoricalDist(np.zeros(2))
        assert abs(dist.categorical_log_prob(d, 0) + np.log(2)) < 1e-12
        assert abs(dist.categorical_log_prob(d, 1) + np.log(2)) < 1e-12

    def test_saturated_logits(self):
        d = dist.CategoricalDist(np.array([1000.0, 0.0]))
        rng = np.random.default_rng(5)
        assert all(dist.categorical_sample(d, rng) == 0 for _ in range(1000))

    def test_softmax_frequency(self):
        # logits (0, ln 3) puts 0.75 on class 1
        d = dist.CategoricalDist(np.array([0.0, np.log(3.0)]))
        rng = np.random.default_rng(9)
        freq = np.mean([dist.categorical_sample(d, rng) == 1 for _ in range(10_000)])
        assert abs(freq - 0.75) < 0.03

    def test_out_of_range_rejected(self):
        d = dist.CategoricalDist(np.zeros(3))
        with pytest.raises(IndexError):
            dist.categorical_log_prob(d, 3)
        with pytest.raises(IndexError):
            dist.categorical_log_prob(d, -1)


class TestRawTransforms:
    def test_raw_roundtrip_shapes(self):
        rng = np.random.default_rng(4)
        raw = rng.standard_normal(dist.raw_param_count(5))
        d = dist.mixture_from_raw(raw).validate()
        assert d.weights.shape == (5,)
        assert np.all(d.scales >= dist.SCALE_FLOOR)

    def test_tensor_log_prob_matches_numpy(self):
        rng = np.random.default_rng(6)
        raw = rng.standard_normal((4, 9))
        x = rng.uniform(-2, 2, 4)
        got = dist.mixture_log_prob_tensor(ad.Tensor(raw), x).data
        want = [dist.logistic_mixture_log_prob(x[i], dist.mixture_from_raw(raw[i]))
                for i in range(4)]
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_log_prob_gradient_matches_fd(self):
        # gradient wrt raw means/scales/weight logits and wrt x
        rng = np.random.default_rng(8)
        raw = ad.Tensor(rng.standard_normal((3, 9)), requires_grad=True)
        x = ad.Tensor(rng.uniform(-1, 1, 3), requires_grad=True)

        def loss():
            return ad.sum_(dist.mixture_log_prob_tensor(raw, x))

        check_grads(loss, [raw, x], h=1e-5)

    def test_categorical_tensor_matches_numpy(self):
        rng = np.random.default_rng(10)
        logits = rng.standard_normal((5, 4))
        idx = rng.integers(0, 4, 5)
        got = dist.categorical_log_prob_tensor(ad.Tensor(logits), idx).data
        want = [dist.categorical_log_prob(dist.CategoricalDist(logits[i]), int(idx[i]))
                for i in range(5)]
        np.testing.assert_allclose(got, want, atol=1e-10)
