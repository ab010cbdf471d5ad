import math

import numpy as np
import pytest
from scipy.integrate import quad

from optispin.analysis import (
    fit_rabi_detuned,
    fit_ramsey_gaussian,
    fit_sinusoid,
    one_over_e_time,
    pi_time,
    sigma_from_t2star,
    visibility_per_pi,
)
from optispin.errors import SegmentError
from optispin.sequence import (
    EnsembleScheme,
    ExperimentResult,
    OverhauserEnsemble,
    PulseSequence,
    Segment,
    paired_sequence,
    pi_fidelity_low_power,
    run_phase_scan,
    run_rabi,
    run_ramsey,
    run_sequence,
    run_spinlock,
)
from optispin.spin import RelaxationParams


def test_segment_rotation_duration():
    segment = Segment.rotation(0.5 * math.pi, 10.0)

    assert segment.duration == pytest.approx(pi_time(10.0) / 2.0)
    assert segment.area == pytest.approx(0.5 * math.pi)


def test_segment_validation():
    with pytest.raises(ValueError):
        Segment.drive(-1.0, 10.0)
    with pytest.raises(ValueError):
        Segment('delay', 10.0, omega=5.0)
    with pytest.raises(ValueError):
        PulseSequence(())


def test_time_reversed_sequence_returns_to_up(fine_steps):
    sequence = PulseSequence((
        Segment.drive(17.0, 12.0, 0.3, 2.0),
        Segment.delay(40.0, 1.5),
        Segment.drive(9.0, 20.0, 2.1, -1.0),
    ))
    reversed_sequence = sequence.time_reversed()
    round_trip = PulseSequence(sequence.segments + reversed_sequence.segments)

    result = run_sequence(round_trip, RelaxationParams.none(), OverhauserEnsemble.single(), step=fine_steps)
    assert result.populations[0] == pytest.approx(0.0, abs=1e-8)
    assert reversed_sequence.duration == sequence.duration


def test_paired_sequences_share_pulse_area():
    pairs = paired_sequence(10.0, [0.0, 10.0, 25.0, 40.0])

    totals = [measured.area + partner.area for measured, partner in pairs]
    assert totals == pytest.approx([totals[0]] * 4)
    assert pairs[1][0].duration == 10.0
    assert pairs[1][1].duration == 25.0


def test_gauss_hermite_nodes_reproduce_gaussian_moments():
    shifts, weights = OverhauserEnsemble(4.8).nodes()

    assert weights.sum() == pytest.approx(1.0)
    assert np.dot(weights, shifts) == pytest.approx(0.0, abs=1e-12)
    assert np.dot(weights, shifts**2) == pytest.approx(4.8**2)
    assert np.dot(weights, shifts**4) == pytest.approx(3.0 * 4.8**4)


def test_monte_carlo_nodes_are_seeded():
    first = OverhauserEnsemble(4.8, EnsembleScheme.MONTE_CARLO, n_samples=20000, seed=7).nodes()
    again = OverhauserEnsemble(4.8, EnsembleScheme.MONTE_CARLO, n_samples=20000, seed=7).nodes()
    other = OverhauserEnsemble(4.8, EnsembleScheme.MONTE_CARLO, n_samples=20000, seed=8).nodes()

    assert np.array_equal(first[0], again[0])
    assert not np.array_equal(first[0], other[0])
    assert np.dot(first[1], first[0]**2) == pytest.approx(4.8**2, rel=1e-2)


def test_zero_width_ensemble_is_a_single_node():
    shifts, weights = OverhauserEnsemble(0.0).nodes()

    assert shifts.tolist() == [0.0]
    assert weights.tolist() == [1.0]


def test_ensemble_validation():
    with pytest.raises(ValueError):
        OverhauserEnsemble(-1.0)


def test_experiment_result_clips_populations():
    result = ExperimentResult(np.array([0.0, 1.0]), np.array([-1e-12, 1.0 + 1e-12]))

    assert result.populations.tolist() == [0.0, 1.0]
    assert result.rows() == [(0.0, 0.0), (1.0, 1.0)]


def test_rabi_without_dissipation_reaches_full_inversion():
    times = np.linspace(0.0, 100.0, 201)
    result = run_rabi(10.0, 0.0, times, RelaxationParams.none(), OverhauserEnsemble.single())

    assert np.interp(50.0, times, result.populations) == pytest.approx(1.0, abs=1e-8)
    assert result.populations[0] == pytest.approx(0.0, abs=1e-12)
    assert result.metadata['omega'] == 10.0


@pytest.mark.parametrize('omega', [8.0, 12.0, 20.0])
@pytest.mark.parametrize('delta', [0.0, 4.0, 9.0])
def test_detuned_rabi_amplitude_and_frequency(omega, delta):
    times = np.linspace(0.0, 600.0, 3001)
    result = run_rabi(omega, delta, times, RelaxationParams.none(), OverhauserEnsemble.single())
    fit = fit_rabi_detuned(result)

    omega_prime = math.hypot(omega, delta)
    assert fit.success
    assert fit['amplitude'] == pytest.approx(omega**2 / omega_prime**2, rel=1e-2)
    assert fit['frequency'] == pytest.approx(omega_prime, rel=1e-2)


def test_ramsey_decay_gives_t2star_of_overhauser_width():
    taus = np.linspace(0.0, 150.0, 301)
    result = run_ramsey(2000.0, taus, 0.0, RelaxationParams.none(), OverhauserEnsemble(4.8))
    fit = fit_ramsey_gaussian(result)

    assert fit.success
    assert fit['t2star'] == pytest.approx(46.9, rel=1e-2)
    assert sigma_from_t2star(fit['t2star']) == pytest.approx(4.8, rel=1e-2)


def test_ramsey_with_final_phase_pi_is_inverted():
    taus = np.linspace(0.0, 150.0, 151)
    plus = run_ramsey(2000.0, taus, 0.0, RelaxationParams.none(), OverhauserEnsemble(4.8))
    minus = run_ramsey(2000.0, taus, math.pi, RelaxationParams.none(), OverhauserEnsemble(4.8))

    assert plus.populations + minus.populations == pytest.approx(np.ones(len(taus)), abs=1e-4)
    assert fit_ramsey_gaussian(minus)['t2star'] == pytest.approx(fit_ramsey_gaussian(plus)['t2star'], rel=1e-3)


def test_phase_scan_contrast_without_dissipation():
    phases = np.linspace(0.0, 2.0 * math.pi, 24, endpoint=False)
    result = run_phase_scan(13.0, phases, 0.0, RelaxationParams.none(), OverhauserEnsemble.single())
    fit = fit_sinusoid(phases, result.populations)

    assert fit['visibility'] == pytest.approx(1.0, abs=1e-3)
    assert fit['offset'] == pytest.approx(0.5, abs=1e-3)
    assert result.populations[0] == pytest.approx(1.0, abs=1e-8)


def test_phase_scan_matches_explicit_phase_sequences(measured_relaxation):
    phases = np.linspace(0.0, 2.0 * math.pi, 9, endpoint=False)
    half = pi_time(13.0) / 2.0
    result = run_phase_scan(13.0, phases, 3.5, measured_relaxation, OverhauserEnsemble.single())

    for phi, value in zip(phases, result.populations):
        sequence = PulseSequence((Segment.drive(half, 13.0, 0.0, 3.5), Segment.drive(half, 13.0, phi, 3.5)))
        expected = run_sequence(sequence, measured_relaxation, OverhauserEnsemble.single()).populations[0]
        assert value == pytest.approx(expected, abs=1e-9)


def fringe_offset(phases, populations):
    """Phase of the fringe maximum relative to the resonant fringe (1 + cos phi)/2."""
    return math.remainder(fit_sinusoid(phases, populations)['phase'] - 0.5 * math.pi, 2.0 * math.pi)


@pytest.mark.parametrize('dissipative', [False, True])
def test_detuned_phase_scan_offset_matches_master_equation(dissipative, oracle, measured_relaxation):
    omega, delta = 13.0, 3.5
    relax = measured_relaxation if dissipative else RelaxationParams.none()
    gamma1, gamma2 = relax.gamma1(omega), relax.gamma2
    phases = np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False)
    half = pi_time(omega) / 2.0

    first = oracle(np.diag([1.0, 0.0]), omega, 0.0, delta, gamma1, gamma2, [0.0, half])[-1]
    expected = np.array([
        oracle(first, omega, phi, delta, gamma1, gamma2, [0.0, half])[-1][1, 1].real for phi in phases])
    result = run_phase_scan(omega, phases, delta, relax, OverhauserEnsemble.single())

    assert result.populations == pytest.approx(expected, abs=1e-6)
    offset = fringe_offset(phases, result.populations)
    assert abs(offset) > 0.05
    assert offset == pytest.approx(fringe_offset(phases, expected), rel=1e-2)


def test_low_power_pi_fidelity_matches_quadrature():
    sigma, omega = 4.8, 10.0
    fidelity = pi_fidelity_low_power(omega, RelaxationParams.none(), OverhauserEnsemble(sigma))

    def integrand(shift):
        u2 = (shift / omega)**2
        weight = math.exp(-0.5 * (shift / sigma)**2) / (math.sqrt(2.0 * math.pi) * sigma)
        return weight * math.sin(0.5 * math.pi * math.sqrt(1.0 + u2))**2 / (1.0 + u2)

    expected, _ = quad(integrand, -12.0 * sigma, 12.0 * sigma, epsabs=1e-12)
    assert fidelity == pytest.approx(expected, abs=1e-5)
    assert 0.77 <= fidelity <= 0.87


def test_solver_failure_names_the_segment(constant_rate):
    sequence = PulseSequence((Segment.delay(20.0), Segment.drive(200.0, 10.0)))

    with pytest.raises(SegmentError) as info:
        run_sequence(sequence, RelaxationParams.none(), OverhauserEnsemble.single(), rate_fn=constant_rate(-5.0))

    assert info.value.index == 1
    assert 'segment 1' in str(info.value)


EXPERIMENTS = {
    'rabi': lambda relax, ensemble: run_rabi(
        40.0, 0.0, np.linspace(0.0, 200.0, 101), relax, ensemble).populations,
    'ramsey': lambda relax, ensemble: run_ramsey(
        2000.0, np.linspace(0.0, 100.0, 51), 0.0, relax, ensemble).populations,
    'phase-scan': lambda relax, ensemble: run_phase_scan(
        13.0, np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False), 3.5, relax, ensemble).populations,
    'spinlock': lambda relax, ensemble: run_spinlock(
        40.0, np.linspace(0.0, 200.0, 5), np.linspace(0.0, 2.0 * math.pi, 8, endpoint=False),
        relax, ensemble).populations,
}


@pytest.mark.slow
@pytest.mark.parametrize('experiment', sorted(EXPERIMENTS))
def test_quadrature_and_sampled_ensembles_agree(experiment, measured_relaxation):
    quadrature = OverhauserEnsemble(4.8)
    sampled = OverhauserEnsemble(4.8, EnsembleScheme.MONTE_CARLO, n_samples=100000, seed=3)

    expected = EXPERIMENTS[experiment](measured_relaxation, quadrature)
    assert EXPERIMENTS[experiment](measured_relaxation, sampled) == pytest.approx(expected, abs=2e-3)


@pytest.mark.slow
@pytest.mark.parametrize('omega', [95.0, 120.0, 154.0])
def test_high_power_q_plateau(omega, measured_relaxation):
    spacing = pi_time(omega) / 25.0
    times = np.arange(int(800.0 / spacing) + 1) * spacing
    trace = run_rabi(omega, 0.0, times, measured_relaxation, OverhauserEnsemble(4.8))
    tau = one_over_e_time(visibility_per_pi(trace, omega))

    q = tau.tau_ns / pi_time(omega)
    assert not tau.censored
    assert 45.0 <= q <= 52.0


def test_spin_lock_without_dissipation_keeps_full_visibility():
    lock_times = np.linspace(0.0, 2000.0, 5)
    phases = np.linspace(0.0, 2.0 * math.pi, 8, endpoint=False)
    result = run_spinlock(16.0, lock_times, phases, RelaxationParams.none(), OverhauserEnsemble.single())

    assert result.fit_ok.all()
    assert result.visibility == pytest.approx(np.ones(5), abs=1e-6)


def test_locked_population_shows_residual_oscillations_at_the_drive_frequency():
    lock_times = np.arange(0.0, 801.0, 4.0)
    phases = np.linspace(0.0, 2.0 * math.pi, 3, endpoint=False)
    sampled = OverhauserEnsemble(4.8, EnsembleScheme.MONTE_CARLO, n_samples=2000, seed=1)
    locked = run_spinlock(11.0, lock_times, phases, RelaxationParams.none(), sampled).locked_populations[:, 0]
    steady = run_spinlock(11.0, lock_times, phases, RelaxationParams.none(),
                          OverhauserEnsemble.single()).locked_populations[:, 0]

    assert np.ptp(steady) < 1e-6

    early = locked[lock_times <= 300.0]
    late = locked[lock_times >= 600.0]
    assert 2e-3 < np.std(early) < 0.1
    assert np.std(early) > 3.0 * np.std(late)

    spectrum = np.abs(np.fft.rfft(early - early.mean(), n=4096))
    frequencies = np.fft.rfftfreq(4096, d=4.0) * 1000.0
    assert 8.0 <= frequencies[np.argmax(spectrum)] <= 15.0


@pytest.mark.slow
@pytest.mark.parametrize('omega', [11.0, 16.0, 25.0])
@pytest.mark.parametrize('sigma', [2.4, 4.8])
def test_spin_lock_outlasts_rabi_at_equal_drive(omega, sigma, measured_relaxation):
    ensemble = OverhauserEnsemble(sigma, EnsembleScheme.MONTE_CARLO, n_samples=2000, seed=5)
    lock_times = np.array([400.0, 800.0, 1200.0])
    phases = np.linspace(0.0, 2.0 * math.pi, 8, endpoint=False)
    locked = run_spinlock(omega, lock_times, phases, measured_relaxation, ensemble)

    spacing = pi_time(omega) / 20.0
    times = np.arange(int(1300.0 / spacing) + 1) * spacing
    rabi = visibility_per_pi(run_rabi(omega, 0.0, times, measured_relaxation, ensemble), omega)

    assert locked.fit_ok.all()
    assert np.all(locked.visibility >= np.interp(lock_times, rabi.times_ns, rabi.visibility))


@pytest.mark.slow
def test_spin_lock_decay_and_rabi_comparison():
    lock_times = np.linspace(0.0, 8000.0, 9)
    phases = np.linspace(0.0, 2.0 * math.pi, 8, endpoint=False)
    ensemble = OverhauserEnsemble(4.8, n_nodes=15)
    relax = RelaxationParams(alpha=0.027)
    result = run_spinlock(16.0, lock_times, phases, relax, ensemble)

    assert result.fit_ok.all()
    assert 1.95 <= result.tau_us <= 2.65
    assert result.locked_populations.shape == (9, 2)

    full = RelaxationParams(alpha=0.027, gamma2=1.0 / 2.8)
    locked = run_spinlock(16.0, lock_times, phases, full, ensemble)
    spacing = pi_time(16.0) / 20.0
    times = np.arange(int(3000.0 / spacing) + 1) * spacing
    rabi_tau = one_over_e_time(visibility_per_pi(run_rabi(16.0, 0.0, times, full, ensemble), 16.0))
    assert locked.tau_us * 1000.0 > 3.0 * rabi_tau.tau_ns
