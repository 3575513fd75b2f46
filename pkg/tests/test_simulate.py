import math

import numpy as np
import numpy.testing as npt
import pytest
from scipy.special import expit
from scipy.stats import kstest

from conftest import unit_basis
from core.Base.basis import SplineFunction
from core.Base.quadrature import adaptive_integrate
from core.simulate import (
    SMOOTH_P,
    DGPSpec,
    TruthFunction,
    ar_log_spectral_density,
    check_stationary,
    design_density,
    generate,
    make_rng,
    periodogram,
    simulate_ar,
    simulate_replications,
    truth_eval,
    truth_smoothness,
)


class TestTruthFunctions:
    """真值函数及其光滑度"""

    def test_values(self):
        assert truth_eval(TruthFunction.power_kink(2.5, 0.5), 0.5) == 0.0
        npt.assert_allclose(truth_eval(TruthFunction.smooth_sin(), 0.25), 1.0)
        npt.assert_allclose(TruthFunction.smooth_sin(scale=2.0, shift=1.0)(0.25), 3.0)

    @pytest.mark.parametrize("s, p", [(2.5, 2), (1.5, 1), (3.5, 3), (2.0, SMOOTH_P), (1.0, 1)])
    def test_power_kink_smoothness(self, s, p):
        assert truth_smoothness(TruthFunction.power_kink(s)) == p

    def test_spline_truth_smoothness_is_degree(self):
        basis = unit_basis(3, 4)
        assert TruthFunction.spline_truth(SplineFunction(basis, np.zeros(basis.dim))).smoothness == 3

    def test_power_kink_roughness_scan(self):
        # J_2 收敛，J_3 随 δ → 0 对数发散
        s, c = 2.5, 0.5
        d2 = lambda x: (s * (s - 1) * np.abs(x - c) ** (s - 2)) ** 2
        d3 = lambda x: (s * (s - 1) * (s - 2) * np.abs(x - c) ** (s - 3)) ** 2
        grids = [c + np.geomspace(d, 1.0 - c, 60) for d in (1e-4, 1e-6, 1e-8)]
        j2 = [adaptive_integrate(d2, bp) for bp in grids]
        j3 = [adaptive_integrate(d3, bp) for bp in grids]
        assert abs(j2[2] - j2[0]) < 1e-6
        assert j3[1] - j3[0] > 1.0 and j3[2] - j3[1] > 1.0

    def test_centered_has_zero_mean(self):
        centered = TruthFunction.power_kink(2.5).centered()
        assert abs(adaptive_integrate(centered, np.array([0.0, 1.0]))) < 1e-9

    def test_dict_round_trip_for_configurable_kinds(self):
        truth = TruthFunction.power_kink(2.5, 0.4, scale=3.0, shift=-1.0)
        again = TruthFunction.from_dict(truth.to_dict())
        x = np.linspace(0, 1, 7)
        npt.assert_array_equal(again(x), truth(x))

    def test_invalid_truths(self):
        with pytest.raises(ValueError, match="unknown truth kind"):
            TruthFunction("wiggle")
        with pytest.raises(ValueError, match="positive"):
            TruthFunction.power_kink(-1.0)
        with pytest.raises(ValueError, match="not configurable"):
            TruthFunction.from_dict({"kind": "custom"})
        with pytest.raises(ValueError, match="cannot be serialized"):
            TruthFunction.custom(np.sin, declared_p=SMOOTH_P).to_dict()


class TestGenerators:
    """各模型的数据生成过程"""

    def test_noise_free_gaussian(self):
        truth = TruthFunction.power_kink(2.5)
        data = generate(DGPSpec("gaussian", truth, n=100, sigma=0.0, seed=1))
        npt.assert_array_equal(data.y, truth(data.x))

    @pytest.mark.parametrize("model", ["gaussian", "logistic", "poisson", "quantile", "hazard", "logdensity", "spectral"])
    def test_seed_determinism(self, model):
        truth = TruthFunction.ar_log_spectrum((0.5,)) if model == "spectral" else TruthFunction.smooth_sin(scale=0.5)
        spec = DGPSpec(model, truth, n=64, seed=42)
        a, b = generate(spec), generate(spec)
        for field in ("x", "y", "time", "event", "periodogram"):
            if hasattr(a, field):
                npt.assert_array_equal(getattr(a, field), getattr(b, field))

    def test_replications_use_consecutive_seeds(self):
        spec = DGPSpec("gaussian", TruthFunction.smooth_sin(), n=10, seed=7)
        reps = list(simulate_replications(spec, 3))
        assert [r for r, _ in reps] == [0, 1, 2]
        npt.assert_array_equal(reps[2][1].y, generate(spec.with_seed(9)).y)

    def test_flat_log_density_is_uniform(self):
        data = generate(DGPSpec("logdensity", TruthFunction.smooth_sin(scale=0.0), n=10_000, seed=3))
        assert kstest(data.x, "uniform").statistic < 1.63 / math.sqrt(10_000)

    def test_log_density_sample_matches_truth(self):
        truth = TruthFunction.power_kink(2.5, scale=2.0)
        data = generate(DGPSpec("logdensity", truth, n=2_000, seed=4))
        norm = adaptive_integrate(lambda x: np.exp(truth(x)), np.array([0.0, 0.5, 1.0]))
        cdf = lambda v: np.array([adaptive_integrate(lambda x: np.exp(truth(x)), np.array([0.0, t])) if t > 0 else 0.0
                                  for t in np.atleast_1d(v)]) / norm
        assert kstest(data.x, cdf).pvalue > 0.001

    def test_quantile_noise_is_centred(self):
        data = generate(DGPSpec("quantile", TruthFunction.smooth_sin(scale=0.0), n=1_000_000, tau=0.25, seed=5))
        assert abs(np.quantile(data.y, 0.25)) < 5e-3

    def test_quantile_t3_noise_is_centred(self):
        data = generate(DGPSpec("quantile", TruthFunction.smooth_sin(scale=0.0), n=1_000_000, tau=0.9, noise="t3", seed=6))
        assert abs(np.quantile(data.y, 0.9)) < 2e-2

    @pytest.mark.parametrize("model, mean", [("gaussian", lambda eta: eta), ("logistic", expit), ("poisson", np.exp)])
    def test_binned_means(self, model, mean):
        truth = TruthFunction.smooth_sin(scale=0.8)
        data = generate(DGPSpec(model, truth, n=100_000, seed=7))
        edges = np.linspace(0, 1, 11)
        for lo, hi in zip(edges[:-1], edges[1:]):
            inside = (data.x >= lo) & (data.x < hi)
            expected = adaptive_integrate(lambda x: mean(truth(x)), np.array([lo, hi])) / (hi - lo)
            se = data.y[inside].std(ddof=1) / math.sqrt(inside.sum())
            assert abs(data.y[inside].mean() - expected) < 4 * se

    def test_hazard_censoring_rate(self):
        data = generate(DGPSpec("hazard", TruthFunction.power_kink(2.5), n=5_000, seed=8))
        assert 0.1 <= data.censoring_rate <= 0.9
        assert np.all(data.time <= 2.0)

    def test_linear_design(self):
        data = generate(DGPSpec("gaussian", TruthFunction.smooth_sin(), n=100_000, design="linear", seed=9))
        npt.assert_allclose(data.x.mean(), (0.5 + 1.0 / 6.0) / 1.25, atol=5e-3)
        density, degree = design_density("linear")
        assert degree == 1
        npt.assert_allclose(adaptive_integrate(density, np.array([0.0, 1.0])), 1.0, rtol=1e-12)

    @pytest.mark.parametrize(
        "kwargs, match",
        [
            ({"sigma": -1.0}, "sigma"),
            ({"model": "poisson", "sigma": 0.0}, "sigma"),
            ({"tau": 1.0}, "tau"),
            ({"noise": "cauchy"}, "noise"),
            ({"design": "beta"}, "design"),
            ({"model": "spectral", "ar": (1.2,)}, "stationary"),
            ({"model": "probit"}, "unknown model"),
        ],
    )
    def test_invalid_specs(self, kwargs, match):
        params = {"model": "gaussian", "truth": TruthFunction.smooth_sin(), "n": 10, **kwargs}
        with pytest.raises(ValueError, match=match):
            DGPSpec(**params)


class TestSpectral:
    """AR 过程与周期图"""

    def test_ar1_log_spectrum(self):
        lam = np.linspace(0.1, 3.0, 7)
        expected = math.log(1 / (2 * math.pi)) - np.log(1 - 2 * 0.5 * np.cos(lam) + 0.25)
        npt.assert_allclose(ar_log_spectral_density(lam, (0.5,)), expected, rtol=1e-12)

    def test_stationarity(self):
        check_stationary((0.5, 0.3))
        with pytest.raises(ValueError, match="stationary"):
            check_stationary((0.5, 0.6))

    def test_periodogram_grid(self):
        pgram = periodogram(np.random.default_rng(0).standard_normal(10))
        npt.assert_allclose(pgram.lambda_k, 2 * np.pi * np.arange(1, 6) / 10)
        assert pgram.is_boundary.tolist() == [False, False, False, False, True]
        odd = periodogram(np.random.default_rng(0).standard_normal(9))
        assert odd.size == 4 and not odd.is_boundary.any()

    def test_periodogram_matches_direct_sum(self):
        x = np.random.default_rng(1).standard_normal(16)
        t = np.arange(1, 17)
        lam = 2 * np.pi * 3 / 16
        direct = abs(np.sum(x * np.exp(-1j * lam * t))) ** 2 / (2 * np.pi * 16)
        npt.assert_allclose(periodogram(x).periodogram[2], direct, rtol=1e-12)

    def test_mean_periodogram_tracks_spectral_density(self):
        rng = make_rng(11)
        ratios = []
        for _ in range(200):
            pgram = periodogram(simulate_ar(rng, (0.5,), 1.0, 512))
            ratios.append(pgram.periodogram / np.exp(ar_log_spectral_density(pgram.lambda_k, (0.5,))))
        assert abs(np.mean(ratios) - 1.0) < 0.05

    def test_generator_follows_declared_ar_process(self):
        truth = TruthFunction.ar_log_spectrum((-0.6,), sigma=2.0)
        dgp = DGPSpec("spectral", truth, n=512, seed=0)
        assert dgp.ar == (-0.6,) and dgp.ar_sigma == 2.0
        ratios = []
        for s in range(200):
            pgram = generate(dgp.with_seed(s))
            ratios.append(pgram.periodogram / np.exp(truth(pgram.lambda_k)))
        assert abs(np.mean(ratios) - 1.0) < 0.05

    def test_ar_parameters_must_match_truth(self):
        truth = TruthFunction.ar_log_spectrum((0.5,))
        assert DGPSpec("spectral", truth, n=64, ar=(0.5,), ar_sigma=1.0).ar == (0.5,)
        with pytest.raises(ValueError, match="disagree"):
            DGPSpec("spectral", truth, n=64, ar=(0.3,))
        with pytest.raises(ValueError, match="disagree"):
            DGPSpec("spectral", truth, n=64, ar_sigma=2.0)
