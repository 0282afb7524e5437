import numpy as np
import pytest

from spincast.core.coherence import DriveParams, Protocol
from spincast.core.errors import DomainError
from spincast.core.photodynamics import (
    PopulationState,
    lifetime_table,
    simulate_trpl_differential,
)
from spincast.core.sequencer import (
    ExperimentResult,
    Laser,
    Microwave,
    PulseSequence,
    ReadWindow,
    Wait,
    _OrientationRun,
    cyclic_steady_state,
    family_ratio,
    parallel_family,
    readout_pulse,
    recipe_coherence,
    recipe_contrast_map,
    recipe_field_split_spectrum,
    recipe_lac_sweep,
    recipe_lifetime_differential,
    recipe_odmr_spectrum,
    recipe_power_scan,
    recipe_rabi,
    recipe_temperature,
    recipe_trpl_differential,
    refine_peaks,
    run_sequence,
)
from spincast.core.spin_model import (
    build_hamiltonian,
    enumerate_orientations,
    field_in_defect_frame,
    group_by_field,
    lac_field,
)


def readout_cycle(delay=10.0, power=20.0):
    return PulseSequence(readout_pulse(power, 1.0, 0.2) + [Wait(delay)])


class TestPulseSequence:
    """Event validation"""

    def test_period(self):
        assert readout_cycle(10.0).period == pytest.approx(11.0)
        assert readout_cycle().labels == ["S", "R"]

    def test_window_needs_laser(self):
        with pytest.raises(DomainError):
            PulseSequence([ReadWindow(0.0, 0.2, "S"), Laser(20.0, 1.0)])

    def test_window_after_wait(self):
        with pytest.raises(DomainError):
            PulseSequence([Laser(20.0, 1.0), Wait(1.0), ReadWindow(0.0, 0.2, "S")])

    def test_window_past_pulse(self):
        with pytest.raises(DomainError):
            PulseSequence([Laser(20.0, 1.0), ReadWindow(0.9, 0.2, "S")])

    def test_duplicate_label(self):
        with pytest.raises(DomainError):
            PulseSequence([Laser(20.0, 1.0), ReadWindow(0.0, 0.2, "S"), ReadWindow(0.5, 0.2, "S")])

    def test_negative_duration(self):
        with pytest.raises(DomainError):
            PulseSequence([Laser(20.0, 1.0), Wait(-1.0)])

    def test_negative_power(self):
        with pytest.raises(DomainError):
            PulseSequence([Laser(-5.0, 1.0)])


class TestTransfer:
    """MW population exchange"""

    def test_ideal_pi_swaps_pair(self, zfs, rates):
        run = _OrientationRun(zfs, rates, np.zeros(3), enumerate_orientations()[0])
        drive = DriveParams(frequency=690.0, rabi_rate=34.7)
        T = run.transfer(Microwave(drive, 14.4, angle=np.pi))
        i, j = run.pair("plus")
        state = np.zeros(5)
        state[2 + i] = 1.0
        np.testing.assert_allclose(T @ state, np.eye(5)[2 + j], atol=1e-12)

    def test_transfer_doubly_stochastic(self, zfs, rates):
        run = _OrientationRun(zfs, rates, np.zeros(3), enumerate_orientations()[0])
        drive = DriveParams(frequency=700.0, rabi_rate=4.0)
        T = run.transfer(Microwave(drive, 120.0, broadening=20.0))
        np.testing.assert_allclose(T.sum(axis=0), 1.0, atol=1e-12)
        np.testing.assert_allclose(T.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(T >= 0)


class TestSteadyState:
    """Cyclic steady state"""

    def test_independent_of_initial_state(self, zfs, rates):
        seq = readout_cycle()
        a = cyclic_steady_state(seq, zfs, rates)
        b = cyclic_steady_state(seq, zfs, rates, initial=PopulationState.uniform())
        assert a.windows["S"] == pytest.approx(b.windows["S"], rel=1e-5)
        assert a.windows["R"] == pytest.approx(b.windows["R"], rel=1e-5)
        assert a.state.sum() == pytest.approx(1.0)

    def test_matches_photodynamics(self, zfs, rates):
        point = run_sequence(readout_cycle(10.0), zfs, rates)
        curve = simulate_trpl_differential(rates, zfs, [0.0, 0.0, 50.0], [10.0])
        assert family_ratio(point)["all"] == pytest.approx(curve.sr_zero[0], rel=1e-5)

    def test_deterministic(self, zfs, rates):
        B = [0.0, 0.0, 50.0]
        a = run_sequence(readout_cycle(), zfs, rates, B)
        b = run_sequence(readout_cycle(), zfs, rates, B)
        assert a.windows == b.windows


class TestFamilies:
    """Orientation averaging"""

    def test_total_is_weighted_family_sum(self, zfs, rates):
        B = 50.0 * np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
        point = run_sequence(readout_cycle(), zfs, rates, B)
        assert sum(point.weights.values()) == pytest.approx(1.0)
        for label in ("S", "R"):
            total = sum(point.weights[k] * point.per_family[k][label] for k in point.per_family)
            assert point.windows[label] == pytest.approx(total, rel=1e-12)

    def test_family_weights_along_111(self, zfs, rates):
        B = 50.0 * np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
        point = run_sequence(readout_cycle(), zfs, rates, B)
        assert sorted(point.weights.values()) == pytest.approx([0.25, 0.25, 0.5])

    def test_grouped_run_matches_representative(self, zfs, rates):
        B = 45.0 * np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
        representative = run_sequence(readout_cycle(), zfs, rates, B)
        grouped = run_sequence(readout_cycle(), zfs, rates, B, group_direction=B)
        for key, windows in representative.per_family.items():
            assert grouped.per_family[key]["S"] == pytest.approx(windows["S"], rel=1e-5)

    def test_zero_field_single_family(self, zfs, rates):
        point = run_sequence(readout_cycle(), zfs, rates)
        assert list(point.per_family) == ["all"]


class TestExperimentResult:
    """Tabular view"""

    def test_frame_columns(self):
        result = ExperimentResult(
            "demo",
            "delay",
            "us",
            [1.0, 2.0],
            "delta_s",
            "fraction",
            [0.1, 0.2],
            per_family={"a": np.array([0.1, 0.3]), "b": np.array([0.1, 0.1])},
            family_weights={"a": 0.5, "b": 0.5},
            extra={"t_b": ("us", np.array([3.0, 4.0]))},
        )
        assert list(result.to_frame().columns) == [
            "delay [us]",
            "delta_s [fraction]",
            "delta_s_a [fraction]",
            "delta_s_b [fraction]",
            "t_b [us]",
        ]
        np.testing.assert_allclose(result.family_total(), [0.1, 0.2])

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            ExperimentResult("demo", "x", "us", [1.0, 2.0], "y", "arb", [1.0])


class TestOdmr:
    """ODMR spectrum and contrast map"""

    def test_zero_field_lines(self, zfs, rates):
        frequencies = np.arange(500.0, 1900.01, 5.0)
        result = recipe_odmr_spectrum(frequencies, zfs, rates)
        peaks = result.summary["peaks"]
        assert len(peaks) == 2
        assert peaks[0] == pytest.approx(690.0, abs=2.5)
        assert peaks[1] == pytest.approx(1730.0, abs=2.5)
        assert result.signal.max() > 0

    def test_off_resonance_background_is_small(self, zfs, rates):
        result = recipe_odmr_spectrum([600.0, 690.0], zfs, rates)
        assert abs(result.signal[0]) < 0.05 * result.signal[1]

    def test_ideal_line_is_narrower(self, zfs, rates):
        frequencies = [690.0, 700.0]
        broad = recipe_odmr_spectrum(frequencies, zfs, rates)
        sharp = recipe_odmr_spectrum(frequencies, zfs, rates, ideal=True)
        assert sharp.signal[1] / sharp.signal[0] < broad.signal[1] / broad.signal[0]

    def test_rabi_scaling_table(self, zfs, rates):
        off = recipe_odmr_spectrum([690.0], zfs, rates, rabi_scaling=([500.0, 1900.0], [0.0, 0.0]))
        assert off.signal[0] == pytest.approx(0.0, abs=1e-9)

    def test_non_positive_frequency(self, zfs, rates):
        with pytest.raises(DomainError):
            recipe_odmr_spectrum([0.0, 690.0], zfs, rates)

    def test_contrast_map(self, zfs, rates):
        waits = [0.5, 1.0, 2.0, 3.0, 5.0, 8.0, 15.0]
        result = recipe_contrast_map(waits, waits, zfs, rates)
        t_b = result.extra["t_b"][1]
        grid = dict(zip(zip(result.sweep, t_b), result.signal))
        assert grid[(5.0, 5.0)] > grid[(0.5, 0.5)]
        assert np.all(result.signal > -1e-9)
        assert 3.0 <= result.summary["argmax_t_a"] <= 8.0
        assert 3.0 <= result.summary["argmax_t_b"] <= 8.0

    def test_contrast_near_one_percent(self, zfs, rates):
        result = recipe_contrast_map([0.5, 5.0], [0.5, 5.0], zfs, rates)
        grid = dict(zip(zip(result.sweep, result.extra["t_b"][1]), result.signal))
        assert 0.005 < grid[(5.0, 5.0)] < 0.02
        assert grid[(0.5, 0.5)] < grid[(5.0, 5.0)]

    def test_line_amplitudes(self, zfs, rates):
        result = recipe_odmr_spectrum([690.0, 1730.0], zfs, rates)
        assert np.all((result.signal > 0.005) & (result.signal < 0.02))

    def test_contrast_vanishes_at_long_waits(self, zfs, rates):
        result = recipe_contrast_map([5.0, 400.0], [5.0, 400.0], zfs, rates)
        t_b = result.extra["t_b"][1]
        grid = dict(zip(zip(result.sweep, t_b), result.signal))
        for (t_a, t_b_value), value in grid.items():
            if 400.0 in (t_a, t_b_value):
                assert abs(value) < 0.01 * grid[(5.0, 5.0)]


class TestFieldSplit:
    """Line positions per family"""

    def test_matches_direct_diagonalisation(self, zfs):
        fields = [0.0, 10.0, 25.0, 60.0]
        result = recipe_field_split_spectrum(fields, zfs)
        unit = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
        orientation = enumerate_orientations()[0]
        for b, line in zip(fields, result.per_family["theta0.00_phi0"]):
            energies = np.linalg.eigvalsh(build_hamiltonian(zfs, field_in_defect_frame(b * unit, orientation)))
            gaps = [abs(e1 - e2) for e1 in energies for e2 in energies if e1 != e2]
            assert min(abs(g - line) for g in gaps) < 1e-6

    def test_families_coincide_at_zero_field(self, zfs):
        result = recipe_field_split_spectrum([0.0], zfs)
        assert len(result.per_family) == 3
        for values in result.per_family.values():
            assert values[0] == pytest.approx(690.0)

    def test_total_is_weighted_mean(self, zfs):
        result = recipe_field_split_spectrum([0.0, 20.0, 40.0], zfs)
        np.testing.assert_allclose(result.signal, result.family_total())


@pytest.mark.slow
class TestLacSweep:
    """PL change near the level anticrossing"""

    fields = np.arange(35.0, 43.01, 0.1)

    def test_peak_near_lac(self, zfs, rates):
        result = recipe_lac_sweep(self.fields, zfs, rates)
        assert result.summary["parallel_family"] == "theta0.00_phi0"
        assert result.summary["peak_field"] == pytest.approx(lac_field(zfs), abs=1.0)
        assert result.summary["peak_signal"] > 0

    def test_aligned_field_has_no_peak(self, zfs, rates):
        tilted = recipe_lac_sweep(self.fields, zfs, rates)
        aligned = recipe_lac_sweep(self.fields, zfs, rates, misalignment_deg=0.0)
        column = aligned.per_family["theta0.00_phi0"]
        assert np.max(np.abs(column)) < 0.1 * tilted.summary["peak_signal"]

    def test_peak_insensitive_to_swapped_lifetimes(self, zfs, rates):
        swapped = rates.with_changes(tau_plus=rates.tau_minus, tau_minus=rates.tau_plus)
        a = recipe_lac_sweep(self.fields, zfs, rates)
        b = recipe_lac_sweep(self.fields, zfs, swapped)
        assert b.summary["peak_field"] == pytest.approx(a.summary["peak_field"], abs=0.2)

    def test_wide_sweep_shape(self, zfs, rates):
        fields = np.concatenate(
            [[20.0, 30.0, 35.0], np.arange(37.0, 41.01, 0.25), [42.0, 43.0, 45.0, 47.0, 50.0, 55.0, 60.0]]
        )
        result = recipe_lac_sweep(fields, zfs, rates)
        total = dict(zip(fields, result.signal))
        column = result.per_family[result.summary["parallel_family"]]
        peak = int(np.argmax(column))
        assert np.all(np.diff(column[peak:]) < 0)
        # off-axis families keep rising past the anticrossing
        assert total[35.0] < total[60.0] < result.signal.max()
        assert abs(total[55.0] - total[60.0]) < 0.05 * total[60.0]
        assert 0.01 < result.signal.max() < 0.2
        assert 0.01 < result.summary["peak_signal"] < 0.2


class TestParallelFamily:
    """Choice of the family along the field"""

    @pytest.mark.parametrize("order", [slice(None), slice(None, None, -1)])
    def test_independent_of_order(self, order):
        families = group_by_field(enumerate_orientations(), [1.0, 1.0, 1.0])[order]
        chosen = parallel_family(families)
        assert chosen.key == "theta0.00_phi0"
        assert chosen.theta_deg == pytest.approx(0.0, abs=1e-6)

    def test_shuffled(self):
        families = group_by_field(enumerate_orientations(), [1.0, 1.0, 1.0])
        shuffled = [families[i] for i in np.random.default_rng(7).permutation(len(families))]
        assert parallel_family(shuffled).key == "theta0.00_phi0"

    def test_closest_family_without_parallel(self):
        families = group_by_field(enumerate_orientations(), [0.0, 0.0, 1.0])
        chosen = parallel_family(families)
        assert chosen.theta_deg == min(f.theta_deg for f in families)
        assert chosen.theta_deg > 1.0


class TestTimeResolved:
    """TRPL, lifetime differential and power scan"""

    def test_trpl_complete_mixing(self, zfs, mixing_rates):
        delays = np.arange(0.5, 80.01, 0.5)
        result = recipe_trpl_differential(delays, zfs, mixing_rates, power=200.0, complete_mixing=True)
        assert result.summary["argmax_delay"] == pytest.approx(16.5, abs=0.5)
        fitted = result.fits["biexp_diff"]
        assert fitted.converged
        assert fitted.value("tau_1") == pytest.approx(55.0, rel=0.1)
        assert fitted.value("tau_eff") == pytest.approx(7.0, rel=0.1)

    def test_trpl_vanishes_at_long_delay(self, zfs, rates):
        result = recipe_trpl_differential([16.0, 400.0], zfs, rates, power=200.0)
        assert abs(result.signal[1]) < 0.05 * abs(result.signal[0])

    def test_trpl_rejects_zero_delay(self, zfs, rates):
        with pytest.raises(DomainError):
            recipe_trpl_differential([0.0, 1.0], zfs, rates)

    def test_lifetime_pi_pulse(self, zfs, rates, coh):
        delays = np.arange(0.0, 150.01, 1.0)
        result = recipe_lifetime_differential(delays, zfs, rates, coh)
        fitted = result.fits["lifetime_diff"]
        assert fitted.value("tau_s") == pytest.approx(rates.tau_plus, rel=0.1)
        assert fitted.value("tau_0") == pytest.approx(rates.tau_0, rel=0.1)
        assert result.summary["t_pi_ns"] == pytest.approx(14.4)

    def test_lifetime_2pi_is_null(self, zfs, rates, coh):
        result = recipe_lifetime_differential([0.0, 5.0, 20.0], zfs, rates, coh, rotation="2pi")
        np.testing.assert_allclose(result.signal, 0.0, atol=1e-10)
        assert result.fits == {}

    def test_lifetime_unknown_rotation(self, zfs, rates, coh):
        with pytest.raises(DomainError):
            recipe_lifetime_differential([1.0], zfs, rates, coh, rotation="3pi")

    def test_power_scan_threshold(self, zfs, rates):
        result = recipe_power_scan([20.0, 50.0, 100.0, 200.0, 500.0, 1000.0, 2000.0], zfs, rates)
        threshold = result.summary["threshold_power"]
        assert threshold == 500.0
        above = result.signal[result.sweep >= threshold]
        assert np.all(above < 0.05 * result.signal[0])
        assert np.all(above >= 0.0)

    def test_power_scan_workers_agree(self, zfs, rates):
        serial = recipe_power_scan([20.0, 200.0], zfs, rates)
        parallel = recipe_power_scan([20.0, 200.0], zfs, rates, workers=2)
        np.testing.assert_allclose(serial.signal, parallel.signal, rtol=1e-12)
        assert serial.signal[0] > serial.signal[1]


@pytest.mark.slow
class TestTemperature:
    """Thermally activated quench"""

    def test_activation_energy_recovered(self, zfs, rates):
        temperatures = np.arange(4.0, 24.01, 2.0)
        table = lifetime_table(temperatures, np.full(11, 2.5497), np.full(11, 55.0))
        result = recipe_temperature(table, zfs, rates, np.arange(0.5, 60.01, 1.5))
        fitted = result.fits["active_fraction"]
        assert fitted.value("E_a") == pytest.approx(8.7, rel=0.01)
        assert np.all(np.diff(result.signal) < 0)


class TestCoherentControl:
    """Rabi and protocol recipes"""

    def test_rabi_frequency(self, rates, coh):
        result = recipe_rabi(np.arange(0.0, 1.0001, 0.002), rates, coh, decay=False)
        assert result.summary["rabi_frequency"] == pytest.approx(coh.rabi_rate, rel=0.01)
        assert result.fits == {}

    def test_echo_decay_time(self, rates, ideal_coh):
        result = recipe_coherence(Protocol("echo"), rates, ideal_coh, np.arange(0.0, 8.01, 0.1))
        assert result.summary["decay_time"] == pytest.approx(2.1, rel=0.1)
        assert result.summary["lifetime_bound"] == pytest.approx(3.671, abs=1e-3)

    def test_ramsey_decay_time(self, rates, ideal_coh):
        result = recipe_coherence(Protocol("ramsey"), rates, ideal_coh, np.arange(0.0, 0.0501, 0.002))
        assert result.fits["monoexp"].value("tau") == pytest.approx(0.027, rel=0.05)


class TestRefinePeaks:
    """Parabolic peak refinement"""

    def test_symmetric_peak(self):
        x = np.arange(0.0, 10.0, 1.0)
        y = -((x - 4.0) ** 2) + 20.0
        assert refine_peaks(x, y) == [pytest.approx(4.0)]

    def test_non_positive(self):
        assert refine_peaks([0.0, 1.0, 2.0], [-1.0, -0.5, -1.0]) == []
