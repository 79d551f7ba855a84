import numpy as np
import pytest
import torch
from scipy.stats import kstest, multivariate_normal

from jointpost.catalog import make_library
from jointpost.model_space import ComplexityPrior, ModelMask
from jointpost.simulators import (
    JointSample,
    LinearGaussianTask,
    SymbolicTask,
    linear_gaussian_oracle,
    sample_joint,
)

BERN = ComplexityPrior(variant="bernoulli_lambda")


@pytest.fixture(scope="module")
def task():
    lib = make_library(
        ["Linear", "Linear", "Quadratic", "NoiseObserver", "NoiseIncreasing"]
    )
    return SymbolicTask(library=tuple(lib))


def mask_of(task, bits):
    return ModelMask(np.array(bits, dtype=np.int8), task.base_count,
                     task.noise_count)


class TestSymbolicTask:
    def test_shape_properties(self, task):
        assert task.n_points == 100
        assert task.C == 5
        assert task.base_count == 3
        assert task.noise_count == 2
        assert task.dims == (1, 1, 1, 1, 1)
        assert task.layout.d_max == 5

    def test_requires_noise_component(self):
        lib = make_library(["Linear", "NoiseObserver"])
        with pytest.raises(ValueError):
            SymbolicTask(library=(lib[0],))

    def test_natural_round_trip(self, task):
        rng = np.random.default_rng(0)
        z = rng.standard_normal((100, task.layout.d_max))
        theta = task.to_natural(z)
        assert np.abs(task.to_latent(theta) - z).max() < 1e-9

    def test_additivity_of_mean_curve(self, task):
        rng = np.random.default_rng(1)
        z = rng.standard_normal(task.layout.d_max)
        theta = task.to_natural(z)
        m12 = mask_of(task, [1, 1, 0, 1, 0])
        m1 = mask_of(task, [1, 0, 0, 1, 0])
        m2 = mask_of(task, [0, 1, 0, 1, 0])
        total = task.mean_curve(m12, theta)
        assert np.allclose(
            total, task.mean_curve(m1, theta) + task.mean_curve(m2, theta)
        )

    def test_two_identical_linears(self, task):
        # both Linear slots at c1=1 give a deterministic part of 2x
        theta = np.array([1.0, 1.0, 0.0, 0.5, 1.0])
        m = mask_of(task, [1, 1, 0, 1, 0])
        assert np.allclose(task.mean_curve(m, theta), 2.0 * task.grid)

    def test_simulate_moments(self, task):
        rng = np.random.default_rng(2)
        m = mask_of(task, [1, 0, 0, 1, 0])
        z = np.zeros(task.layout.d_max)
        theta = task.to_natural(z)
        c1 = theta[3]
        draws = np.stack([task.simulate(m, z, rng) for _ in range(10_000)])
        mean = task.mean_curve(m, theta)
        se = c1 / np.sqrt(10_000)
        assert np.abs(draws.mean(axis=0) - mean).max() < 5 * se
        assert np.abs(draws.std(axis=0) - c1).max() < 0.05

    def test_simulate_requires_single_noise(self, task):
        z = np.zeros(task.layout.d_max)
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            task.simulate(mask_of(task, [1, 0, 0, 0, 0]), z, rng)
        with pytest.raises(ValueError):
            task.simulate(mask_of(task, [1, 0, 0, 1, 1]), z, rng)

    def test_heteroscedastic_noise_profile(self, task):
        # NoiseIncreasing: std grows like c1 * (x + 1) across the grid
        rng = np.random.default_rng(3)
        m = mask_of(task, [0, 0, 0, 0, 1])
        z = np.zeros(task.layout.d_max)
        theta = task.to_natural(z)
        c1 = theta[4]
        draws = np.stack([task.simulate(m, z, rng) for _ in range(20_000)])
        profile = draws.std(axis=0)
        expected = c1 * (task.grid + 1.0)
        assert np.abs(profile / expected - 1.0).max() < 0.05

    def test_log_likelihood_matches_gaussian(self, task):
        rng = np.random.default_rng(4)
        z = rng.standard_normal(task.layout.d_max)
        theta = task.to_natural(z)
        m = mask_of(task, [1, 0, 1, 1, 0])
        y = task.simulate(m, z, rng)
        mean = task.mean_curve(m, theta)
        c1 = theta[3]
        expected = multivariate_normal.logpdf(
            y, mean=mean, cov=np.diag(np.full(task.n_points, c1**2))
        )
        got = float(task.log_likelihood(theta, m, y))
        assert got == pytest.approx(expected, rel=1e-9)

    def test_log_prior_natural(self, task):
        m = mask_of(task, [1, 0, 0, 1, 0])
        theta = np.array([0.3, 0.0, 0.0, 0.5, 0.0])
        # Linear c1 ~ U(-2,2), NoiseObserver c1 ~ U(0.1, 2)
        expected = -np.log(4.0) - np.log(1.9)
        assert task.log_prior_natural(theta, m) == pytest.approx(expected)
        theta_out = theta.copy()
        theta_out[0] = 3.0
        assert task.log_prior_natural(theta_out, m) == -np.inf

    def test_equation_string(self, task):
        m = mask_of(task, [1, 0, 1, 1, 0])
        assert task.equation_string(m) == "c_1*x + c_1*x*x"
        theta = np.array([1.5, 0.0, -0.25, 0.5, 0.0])
        assert task.equation_string(m, theta) == "1.5*x + -0.25*x*x"


class TestSampleJoint:
    def test_reproducible(self, task):
        a = sample_joint(task, BERN, np.random.default_rng(5))
        b = sample_joint(task, BERN, np.random.default_rng(5))
        assert a.lam == b.lam
        assert (a.mask.bits == b.mask.bits).all()
        assert np.allclose(a.x, b.x)

    def test_lambda_uniform(self, task):
        rng = np.random.default_rng(6)
        lams = [sample_joint(task, BERN, rng).lam for _ in range(20_000)]
        assert kstest(lams, "uniform").statistic < 0.01

    def test_bit_rate_tracks_lambda(self, task):
        rng = np.random.default_rng(7)
        rates = []
        for _ in range(60_000):
            s = sample_joint(task, BERN, rng)
            if 0.29 <= s.lam <= 0.31:
                rates.append(s.mask.base_bits.mean())
        assert abs(np.mean(rates) - 0.30) < 0.01

    def test_fields(self, task):
        s = sample_joint(task, BERN, np.random.default_rng(8))
        assert isinstance(s, JointSample)
        assert s.z.shape == (task.layout.d_max,)
        assert s.x.shape == (task.n_points,)
        assert np.isfinite(s.x).all()


class TestLinearGaussianOracle:
    def test_conjugate_1d_zero(self):
        m, S, lev = linear_gaussian_oracle(np.eye(1), 1.0, np.zeros(1))
        assert m == pytest.approx([0.0])
        assert np.allclose(S, [[0.5]])
        assert lev == pytest.approx(
            multivariate_normal.logpdf(0.0, mean=0.0, cov=2.0)
        )

    def test_conjugate_1d_update(self):
        m, S, _ = linear_gaussian_oracle(np.eye(1), 1.0, np.array([2.0]))
        assert m == pytest.approx([1.0])
        assert np.allclose(S, [[0.5]])

    def test_uninformative_limit(self):
        m, S, _ = linear_gaussian_oracle(np.eye(2), 1e6, np.array([3.0, -1.0]))
        assert np.abs(m).max() < 1e-5
        assert np.allclose(S, np.eye(2), atol=1e-5)

    def test_rejects_bad_sigma(self):
        with pytest.raises(ValueError):
            linear_gaussian_oracle(np.eye(1), 0.0, np.zeros(1))

    def test_posterior_matches_long_mc(self):
        # self-consistency: evidence equals E_prior[likelihood]
        rng = np.random.default_rng(9)
        A = rng.standard_normal((4, 2))
        x_o = rng.standard_normal(4)
        _, _, lev = linear_gaussian_oracle(A, 0.8, x_o)
        th = rng.standard_normal((200_000, 2))
        resid = x_o[None, :] - th @ A.T
        ll = (
            -0.5 * (resid**2).sum(axis=1) / 0.8**2
            - 4 * (0.5 * np.log(2 * np.pi) + np.log(0.8))
        )
        mc = np.log(np.mean(np.exp(ll - ll.max()))) + ll.max()
        assert lev == pytest.approx(mc, abs=0.02)


class TestLinearGaussianTask:
    def test_structure(self):
        t = LinearGaussianTask(A=np.eye(3), sigma=0.5)
        assert t.C == 1
        assert t.dims == (3,)
        assert t.full_mask().bits.tolist() == [1]

    def test_simulate_and_likelihood(self):
        rng = np.random.default_rng(10)
        A = rng.standard_normal((5, 3))
        t = LinearGaussianTask(A=A, sigma=0.3)
        z = rng.standard_normal(3)
        x = t.simulate(t.full_mask(), z, rng)
        expected = multivariate_normal.logpdf(
            x, mean=A @ z, cov=0.09 * np.eye(5)
        )
        got = float(t.log_likelihood(torch.tensor(z), t.full_mask(), x))
        assert got == pytest.approx(expected, rel=1e-9)

    def test_posterior_shortcut(self):
        rng = np.random.default_rng(11)
        A = rng.standard_normal((6, 3))
        t = LinearGaussianTask(A=A, sigma=0.4)
        x = rng.standard_normal(6)
        m1 = t.posterior(x)
        m2 = linear_gaussian_oracle(A, 0.4, x)
        assert np.allclose(m1[0], m2[0])
        assert np.allclose(m1[1], m2[1])
        assert m1[2] == m2[2]
