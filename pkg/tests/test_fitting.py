import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spincast.core.errors import DomainError, FitError
from spincast.core.fitting import (
    MODELS,
    biexp_argmax,
    evaluate,
    extract_peak_centers,
    fit,
    get_model,
    numeric_jacobian,
    parabolic_peak,
    synthetic_data,
)

# kind, x, truth, init, relative tolerance per checked parameter
RECOVERY_CASES = [
    (
        "lorentzian",
        np.arange(600.0, 780.01, 1.0),
        [1.0, 690.0, 20.0, 0.1],
        [0.8, 686.0, 25.0, 0.05],
        {"x0": 0.05, "w": 0.05},
    ),
    (
        "lorentzian_doublet",
        np.arange(500.0, 1900.01, 2.0),
        [1.0, 690.0, 20.0, 0.8, 1730.0, 30.0, 0.05],
        [0.9, 685.0, 25.0, 0.7, 1725.0, 25.0, 0.0],
        {"x1": 0.05, "w1": 0.05, "x2": 0.05, "w2": 0.05},
    ),
    ("biexp_diff", np.arange(0.5, 150.01, 0.5), [0.03, 55.0, 7.0], [0.03, 47.0, 6.0], {"tau_1": 0.05, "tau_eff": 0.05}),
    (
        "lifetime_diff",
        np.arange(0.0, 150.01, 0.25),
        [1.0, 54.0, 1.0, 1.9],
        [0.9, 45.0, 0.9, 2.5],
        {"tau_s": 0.05, "tau_0": 0.05},
    ),
    ("monoexp", np.linspace(0.0, 8.0, 81), [0.8, 2.1, 0.05], [0.7, 2.5, 0.0], {"a": 0.05, "tau": 0.05}),
    (
        "arrhenius_amplitude",
        np.linspace(4.0, 24.0, 41),
        [1.0, 2e4, 8.7],
        [0.95, 1e4, 8.0],
        {"c": 0.05, "E_a": 0.1},
    ),
    ("arrhenius_exp", np.linspace(10.0, 40.0, 61), [1.0, 2.0], [0.8, 1.5], {"a": 0.05, "E_a": 0.1}),
    (
        "damped_sinusoid",
        np.arange(0.0, 4.001, 0.01),
        [0.5, 2.0, 4.0, 0.3, 0.5],
        [0.45, 1.8, 3.95, 0.25, 0.45],
        {"A": 0.05, "tau": 0.05, "f": 0.05},
    ),
    ("sqrt_linear", np.linspace(0.25, 9.0, 36), [34.7, 0.5], [30.0, 0.0], {"a": 0.05}),
]


class TestModels:
    """Model evaluation and domains"""

    def test_biexp_vanishes_at_zero(self):
        assert evaluate("biexp_diff", [0.0], [0.03, 55.0, 7.0])[0] == 0.0

    def test_lorentzian_peak_value(self):
        assert evaluate("lorentzian", [690.0], [1.0, 690.0, 20.0, 0.1])[0] == pytest.approx(1.1)

    def test_lorentzian_half_width(self):
        assert evaluate("lorentzian", [700.0], [1.0, 690.0, 20.0, 0.0])[0] == pytest.approx(0.5)

    def test_arrhenius_low_temperature_limit(self):
        assert evaluate("arrhenius_amplitude", [1.0], [0.7, 2e4, 8.7])[0] == pytest.approx(0.7)

    def test_damped_sinusoid_harmonics(self):
        model = get_model("damped_sinusoid", harmonics=2)
        assert model.n_params == 7
        assert model.param_names[-2:] == ("A_2", "phi_2")

    def test_domain_violation(self):
        with pytest.raises(DomainError):
            evaluate("monoexp", [1.0], [1.0, -2.0, 0.0])

    def test_wrong_parameter_count(self):
        with pytest.raises(DomainError):
            evaluate("monoexp", [1.0], [1.0, 2.0])

    def test_unknown_model(self):
        with pytest.raises(DomainError):
            get_model("gaussian")


class TestJacobians:
    """Analytic derivatives agree with finite differences"""

    @pytest.mark.parametrize(
        "kind, params",
        [("monoexp", [0.8, 2.1, 0.05]), ("biexp_diff", [0.03, 55.0, 7.0])],
    )
    def test_analytic_matches_numeric(self, kind, params):
        model = MODELS[kind]
        x = np.linspace(0.0, 60.0, 121)
        np.testing.assert_allclose(
            model.jacobian(x, np.array(params)), numeric_jacobian(model, x, params), rtol=1e-6, atol=1e-9
        )


class TestFit:
    """Levenberg-Marquardt solver"""

    def test_noiseless_monoexp(self):
        x = np.linspace(0.0, 8.0, 81)
        truth = [0.8, 2.1, 0.05]
        result = fit("monoexp", x, evaluate("monoexp", x, truth), init=[0.7, 2.5, 0.0])
        np.testing.assert_allclose(result.values, truth, rtol=1e-6, atol=1e-9)

    def test_noiseless_biexp(self):
        x = np.arange(0.5, 150.01, 0.5)
        truth = [0.03, 55.0, 7.0]
        result = fit("biexp_diff", x, evaluate("biexp_diff", x, truth), init=[0.033, 50.0, 7.7])
        np.testing.assert_allclose(result.values, truth, rtol=1e-6)

    def test_noisy_biexp(self):
        x = np.arange(0.5, 150.01, 0.5)
        y = synthetic_data("biexp_diff", x, [0.03, 55.0, 7.0], noise=0.01, seed=12345)
        result = fit("biexp_diff", x, y, init=[0.03, 47.0, 6.0])
        assert result.converged
        assert result.value("tau_1") == pytest.approx(55.0, rel=0.05)
        assert result.value("tau_eff") == pytest.approx(7.0, rel=0.05)
        assert np.all(np.isfinite(result.errors))

    def test_arrhenius_activation_energy(self):
        temperatures = np.linspace(4.0, 24.0, 41)
        y = synthetic_data("arrhenius_amplitude", temperatures, [1.0, 2e4, 8.7], noise=0.01)
        result = fit("arrhenius_amplitude", temperatures, y, init=[0.95, 1e4, 8.0])
        assert result.value("E_a") == pytest.approx(8.7, rel=0.1)

    def test_amplitude_rescaling(self):
        x = np.arange(0.5, 100.01, 1.0)
        y = synthetic_data("biexp_diff", x, [0.03, 55.0, 7.0], noise=0.01)
        low = fit("biexp_diff", x, y, init=[0.03, 50.0, 6.0])
        high = fit("biexp_diff", x, 3.0 * y, init=[0.09, 50.0, 6.0])
        assert high.value("tau_1") == pytest.approx(low.value("tau_1"), rel=1e-6)
        assert high.value("tau_eff") == pytest.approx(low.value("tau_eff"), rel=1e-6)
        assert high.value("a") == pytest.approx(3.0 * low.value("a"), rel=1e-6)

    def test_sigma_gives_absolute_errors(self):
        x = np.linspace(0.0, 8.0, 81)
        y = synthetic_data("monoexp", x, [0.8, 2.1, 0.05], noise=0.01)
        result = fit("monoexp", x, y, init=[0.7, 2.5, 0.0], sigma=np.full_like(x, 0.008))
        assert result.converged
        assert 0.0 < result.error("tau") < 0.2

    def test_too_few_points(self):
        with pytest.raises(FitError):
            fit("monoexp", [0.0, 1.0, 2.0], [1.0, 0.5, 0.2], init=[1.0, 1.0, 0.0])

    def test_invalid_initial_parameters(self):
        x = np.linspace(0.0, 5.0, 20)
        with pytest.raises(DomainError):
            fit("monoexp", x, np.exp(-x), init=[1.0, -1.0, 0.0])

    def test_non_finite_data(self):
        x = np.linspace(0.0, 5.0, 20)
        y = np.exp(-x)
        y[3] = np.nan
        with pytest.raises(FitError):
            fit("monoexp", x, y, init=[1.0, 1.0, 0.0])

    def test_bad_sigma(self):
        x = np.linspace(0.0, 5.0, 20)
        with pytest.raises(FitError):
            fit("monoexp", x, np.exp(-x), init=[1.0, 1.0, 0.0], sigma=np.zeros(20))

    @given(st.integers(min_value=0, max_value=10_000))
    def test_never_returns_nan(self, seed):
        x = np.arange(0.5, 60.01, 1.0)
        y = synthetic_data("biexp_diff", x, [0.03, 40.0, 5.0], noise=0.05, seed=seed)
        result = fit("biexp_diff", x, y, init=[0.03, 30.0, 4.0], max_iterations=50)
        assert np.all(np.isfinite(result.values))
        assert np.isfinite(result.residual_norm)

    @pytest.mark.parametrize("kind, x, truth, init, rel", RECOVERY_CASES, ids=[c[0] for c in RECOVERY_CASES])
    def test_noisy_recovery(self, kind, x, truth, init, rel):
        y = synthetic_data(kind, x, truth, noise=0.01, seed=2024)
        result = fit(kind, x, y, init=init)
        assert result.converged
        for name, tolerance in rel.items():
            expected = truth[MODELS[kind].param_names.index(name)]
            assert result.value(name) == pytest.approx(expected, rel=tolerance)

    def test_every_model_has_recovery_case(self):
        assert {case[0] for case in RECOVERY_CASES} == set(MODELS)

    def test_as_dict(self):
        x = np.linspace(0.0, 8.0, 81)
        result = fit("monoexp", x, evaluate("monoexp", x, [0.8, 2.1, 0.05]), init=[0.7, 2.5, 0.0])
        document = result.as_dict()
        assert list(document["params"]) == ["a", "tau", "c"]
        assert document["model"] == "monoexp"


class TestPeaks:
    """Peak extraction from spectra"""

    def test_flat_spectrum(self):
        x = np.linspace(500.0, 1900.0, 281)
        assert extract_peak_centers(x, np.full_like(x, 0.01)) == []

    def test_noise_only(self):
        x = np.linspace(500.0, 1900.0, 281)
        rng = np.random.default_rng(12345)
        assert extract_peak_centers(x, rng.normal(0.0, 1e-3, x.size)) == []

    def test_two_lines(self):
        x = np.arange(500.0, 1900.01, 5.0)
        y = evaluate("lorentzian_doublet", x, [1.0, 690.0, 20.0, 0.8, 1730.0, 20.0, 0.0])
        peaks = extract_peak_centers(x, y)
        assert len(peaks) == 2
        assert peaks[0].center == pytest.approx(690.0, rel=0.03)
        assert peaks[1].center == pytest.approx(1730.0, rel=0.03)
        assert peaks[0].width == pytest.approx(20.0, rel=0.03)

    def test_parabolic_vertex(self):
        x = np.array([0.0, 1.0, 2.0])
        y = -((x - 1.2) ** 2)
        assert parabolic_peak(x, y, 1) == pytest.approx(1.2)

    def test_parabolic_at_edge(self):
        assert parabolic_peak([0.0, 1.0], [2.0, 1.0], 0) == 0.0


class TestHelpers:
    """Closed forms and synthetic data"""

    def test_biexp_argmax(self):
        assert biexp_argmax(55.0, 7.0) == pytest.approx(16.5, abs=0.1)

    def test_biexp_argmax_is_maximum(self):
        t = biexp_argmax(55.0, 7.0)
        values = evaluate("biexp_diff", [t - 0.1, t, t + 0.1], [1.0, 55.0, 7.0])
        assert values[1] > values[0] and values[1] > values[2]

    def test_equal_lifetimes(self):
        with pytest.raises(DomainError):
            biexp_argmax(7.0, 7.0)

    def test_synthetic_reproducible(self):
        x = np.linspace(0.0, 10.0, 11)
        a = synthetic_data("monoexp", x, [1.0, 2.0, 0.0], noise=0.05, seed=7)
        b = synthetic_data("monoexp", x, [1.0, 2.0, 0.0], noise=0.05, seed=7)
        np.testing.assert_array_equal(a, b)
