import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spincast.core.errors import DomainError
from spincast.core.photodynamics import (
    MixedDecay,
    PopulationState,
    RateParams,
    effective_decay_rate,
    evolve_populations,
    family_decays,
    harmonic_tau_1,
    integrate_window,
    lifetime_table,
    mixed_decay_rates,
    periodic_steady_state,
    propagate,
    rate_matrix,
    readout_overshoot,
    simulate_trpl_differential,
    tau_0_from_effective,
    window_integral,
)
from spincast.core.spin_model import enumerate_orientations


class TestRateParams:
    """Parameter validation"""

    def test_defaults(self, rates):
        assert rates.tau_e == 0.005
        assert rates.k_isc == 6.0
        assert sum(rates.branching) == pytest.approx(1.0)

    def test_isc_cannot_exceed_total_decay(self):
        with pytest.raises(DomainError):
            RateParams(k_isc=300.0)

    def test_branching_must_sum_to_one(self):
        with pytest.raises(DomainError):
            RateParams(branching=(0.5, 0.5, 0.5))

    def test_non_positive_lifetime(self):
        with pytest.raises(DomainError, match="tau_0"):
            RateParams(tau_0=0.0)


class TestRateMatrix:
    """Generator structure"""

    @given(st.floats(min_value=0.0, max_value=5000.0))
    def test_columns_sum_to_zero(self, power):
        rates = RateParams()
        M = rate_matrix(power, MixedDecay.intrinsic(rates), rates)
        np.testing.assert_allclose(M.sum(axis=0), 0.0, atol=1e-9 * max(1.0, np.abs(M).max()))

    def test_off_diagonal_non_negative(self, rates):
        M = rate_matrix(20.0, MixedDecay.complete(rates), rates)
        off = M - np.diag(np.diag(M))
        assert np.all(off >= 0)

    def test_negative_power(self, rates):
        with pytest.raises(DomainError):
            rate_matrix(-1.0, MixedDecay.intrinsic(rates), rates)


class TestMixing:
    """Dressed-state decay rates"""

    def test_complete_mixing_rates(self, rates):
        mixed = MixedDecay.complete(rates)
        np.testing.assert_allclose(mixed.rates, rates.intrinsic_rates.mean())

    def test_complete_mixing_matches_effective_rate(self):
        rates = RateParams(tau_0=2.5, tau_plus=55.0, tau_minus=55.0)
        np.testing.assert_allclose(MixedDecay.complete(rates).rates, effective_decay_rate(2.5, 55.0))

    def test_total_rate_conserved(self, zfs, rates):
        B = np.array([10.0, -20.0, 35.0])
        for orientation in enumerate_orientations():
            mixed = mixed_decay_rates(zfs, B, orientation, rates)
            assert mixed.rates.sum() == pytest.approx(rates.intrinsic_rates.sum())

    def test_feeding_conserves_branching(self, zfs, rates):
        mixed = mixed_decay_rates(zfs, [0, 0, 39.0], enumerate_orientations()[0], rates)
        assert mixed.feeding(rates.branching).sum() == pytest.approx(1.0)

    def test_zero_field_family(self, zfs, rates):
        decays = family_decays(zfs, np.zeros(3), rates)
        assert len(decays) == 1
        assert decays[0].weight == 1.0

    def test_family_weights_sum_to_one(self, zfs, rates):
        decays = family_decays(zfs, [30.0, 30.0, 30.0], rates)
        assert sum(d.weight for d in decays) == pytest.approx(1.0)


class TestLifetimeRelations:
    """Complete-mixing lifetime algebra"""

    def test_effective_lifetime(self):
        assert 1.0 / effective_decay_rate(2.5, 55.0) == pytest.approx(6.875)

    def test_tau_0_from_effective(self):
        assert tau_0_from_effective(7.0, 55.0) == pytest.approx(2.55, abs=0.01)

    def test_round_trip(self):
        tau_0 = tau_0_from_effective(1.0 / effective_decay_rate(1.9, 48.0), 48.0)
        assert tau_0 == pytest.approx(1.9)

    def test_no_positive_solution(self):
        with pytest.raises(DomainError):
            tau_0_from_effective(100.0, 55.0)

    def test_harmonic_tau_1(self):
        assert harmonic_tau_1(54.0, 42.0) == pytest.approx(47.25)
        assert harmonic_tau_1(55.0, 55.0) == pytest.approx(55.0)


class TestPopulationEvolution:
    """Propagation and window integrals"""

    def test_probability_conserved(self, rates):
        trace = evolve_populations(PopulationState.ground(), 20.0, MixedDecay.intrinsic(rates), rates, 2.0, 1e-3)
        np.testing.assert_allclose(trace.populations.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(trace.populations > -1e-12)

    def test_trace_matches_propagate(self, rates):
        mixed = MixedDecay.intrinsic(rates)
        trace = evolve_populations(PopulationState.ground(), 20.0, mixed, rates, 1.0, 0.01)
        exact = propagate(PopulationState.ground(), rate_matrix(20.0, mixed, rates), 1.0)
        np.testing.assert_allclose(trace.populations[-1], exact, atol=1e-10)
        assert trace.final_state.as_array() == pytest.approx(exact, abs=1e-9)

    def test_window_integral_matches_trapezoid(self, rates):
        mixed = MixedDecay.intrinsic(rates)
        start = PopulationState.uniform()
        trace = evolve_populations(start, 20.0, mixed, rates, 0.2, 1e-5)
        exact = window_integral(start, rate_matrix(20.0, mixed, rates), 0.0, 0.2, rates.tau_e)
        assert integrate_window(trace, 0.0, 0.2) == pytest.approx(exact, rel=1e-4)

    def test_window_outside_trace(self, rates):
        trace = evolve_populations(PopulationState.ground(), 20.0, MixedDecay.intrinsic(rates), rates, 0.2, 1e-3)
        with pytest.raises(DomainError):
            integrate_window(trace, 0.1, 0.2)

    def test_zero_width_window(self, rates):
        trace = evolve_populations(PopulationState.ground(), 20.0, MixedDecay.intrinsic(rates), rates, 0.2, 1e-3)
        assert integrate_window(trace, 0.0, 0.0) == 0.0

    def test_dark_state_relaxes_to_ground(self, rates):
        state = propagate([0.0, 0.0, 0.0, 0.5, 0.5], rate_matrix(0.0, MixedDecay.intrinsic(rates), rates), 2000.0)
        assert state[0] == pytest.approx(1.0, abs=1e-9)

    def test_invalid_step(self, rates):
        with pytest.raises(DomainError):
            evolve_populations(PopulationState.ground(), 20.0, MixedDecay.intrinsic(rates), rates, 1.0, 0.0)

    @pytest.mark.parametrize("values", [[0.5, 0.5, 0.5, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [1.2, -0.2, 0, 0, 0]])
    def test_invalid_state(self, values):
        with pytest.raises(DomainError):
            PopulationState.from_array(values)


class TestSteadyState:
    """Cyclic steady state of a pulse cycle"""

    def test_fixed_point(self, rates):
        mixed = MixedDecay.intrinsic(rates)
        cycle = propagate(np.eye(5), rate_matrix(0.0, mixed, rates), 10.0) @ propagate(
            np.eye(5), rate_matrix(20.0, mixed, rates), 1.0
        )
        state = periodic_steady_state(cycle)
        assert state.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(cycle @ state, state, atol=1e-10)


class TestTrpl:
    """Differential TRPL from the cyclic model"""

    def test_complete_mixing_shape(self, zfs, mixing_rates):
        delays = np.arange(0.5, 80.01, 0.5)
        curve = simulate_trpl_differential(
            mixing_rates, zfs, [0.0, 0.0, 50.0], delays, pulse=(1.0, 200.0), complete_mixing=True
        )
        assert np.all(curve.delta_s > 0)
        assert delays[np.argmax(curve.delta_s)] == pytest.approx(16.5, abs=0.5)

    def test_rejects_non_positive_delay(self, zfs, rates):
        with pytest.raises(DomainError):
            simulate_trpl_differential(rates, zfs, [0, 0, 50], [0.0, 1.0])

    def test_window_must_fit_pulse(self, zfs, rates):
        with pytest.raises(DomainError):
            simulate_trpl_differential(rates, zfs, [0, 0, 50], [1.0], pulse=(0.1, 20.0), window=0.2)


class TestOvershoot:
    """Readout overshoot vs laser power"""

    def test_decreases_with_power(self, zfs, rates):
        values = [readout_overshoot(rates, zfs, p) for p in (20.0, 100.0, 500.0, 2000.0)]
        assert values[0] > 0
        assert all(a > b for a, b in zip(values, values[1:]))

    @pytest.mark.parametrize("power", [1000.0, 2000.0, 5000.0])
    def test_never_negative(self, zfs, rates, power):
        assert readout_overshoot(rates, zfs, power) >= 0.0

    def test_vanishes_above_500_uW(self, zfs, rates):
        low = readout_overshoot(rates, zfs, 20.0)
        assert readout_overshoot(rates, zfs, 500.0) < 0.05 * low
        assert readout_overshoot(rates, zfs, 200.0) > 0.05 * low

    def test_requires_pulse_inside_period(self, zfs, rates):
        with pytest.raises(DomainError):
            readout_overshoot(rates, zfs, 20.0, pulse=2.0, period=1.0)


class TestLifetimeTable:
    """Temperature tables"""

    def test_rates_at(self, rates):
        table = lifetime_table([4.0, 10.0], [2.5, 2.1], [55.0, 46.2])
        local = table.rates_at(1, rates)
        assert (local.tau_0, local.tau_plus, local.tau_minus) == (2.1, 46.2, 46.2)

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            lifetime_table([4.0, 10.0], [2.5], [55.0, 46.2])

    def test_non_positive_temperature(self):
        with pytest.raises(DomainError):
            lifetime_table([0.0, 10.0], [2.5, 2.1], [55.0, 46.2])
