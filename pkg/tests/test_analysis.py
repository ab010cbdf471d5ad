import math

import numpy as np
import pytest

from optispin.analysis import (
    DecayTime,
    FitResult,
    fit_exponential,
    fit_ramsey_gaussian,
    fit_rabi_detuned,
    fit_sinusoid,
    one_over_e_time,
    pi_fidelity,
    pi_fidelity_from_trace,
    pi_time,
    q_factor,
    sigma_from_t2star,
    t2star_from_sigma,
    visibility_per_pi,
)
from optispin.errors import UndersampledError


def damped_rabi(omega, tau, times):
    return 0.5 * (1.0 - np.exp(-times / tau) * np.cos(2.0 * math.pi * omega * times / 1000.0))


def test_pi_time():
    assert pi_time(50.0) == 10.0
    assert pi_time(16.0) == pytest.approx(31.25)


def test_visibility_and_decay_time_of_damped_rabi():
    times = np.linspace(0.0, 1500.0, 3001)
    vis = visibility_per_pi((times, damped_rabi(50.0, 500.0, times)), 50.0)

    assert len(vis) == 150
    assert vis.times_ns[0] == pytest.approx(5.0)
    assert np.all(np.diff(vis.visibility) < 0.0)

    tau = one_over_e_time(vis)
    assert not tau.censored
    assert tau.tau_ns == pytest.approx(500.0, rel=1e-3)
    assert q_factor(tau, 50.0) == pytest.approx(50.0, rel=1e-3)


def test_decay_time_is_censored_without_crossing():
    times = np.linspace(0.0, 200.0, 401)
    vis = visibility_per_pi((times, damped_rabi(50.0, 1e6, times)), 50.0)
    tau = one_over_e_time(vis)

    assert tau.censored
    assert tau.tau_ns == pytest.approx(vis.times_ns[-1] - vis.times_ns[0])


def test_visibility_needs_twenty_samples_per_pi():
    times = np.linspace(0.0, 200.0, 201)

    with pytest.raises(UndersampledError):
        visibility_per_pi((times, damped_rabi(50.0, 500.0, times)), 50.0)


def test_visibility_needs_a_full_window():
    times = np.linspace(0.0, 5.0, 101)

    with pytest.raises(UndersampledError):
        visibility_per_pi((times, damped_rabi(50.0, 500.0, times)), 50.0)


def test_pi_fidelity_from_q():
    assert pi_fidelity(49.4) == pytest.approx(0.9899, abs=1e-4)

    with pytest.raises(ValueError):
        pi_fidelity(0.0)


def test_pi_fidelity_from_trace():
    times = np.linspace(0.0, 100.0, 1001)
    values = np.sin(math.pi * 10.0 * times / 1000.0)**2

    assert pi_fidelity_from_trace((times, values), 10.0) == pytest.approx(1.0, abs=1e-6)


def test_sigma_and_t2star_are_inverse():
    assert sigma_from_t2star(47.2) == pytest.approx(4.77, rel=5e-3)
    assert sigma_from_t2star(t2star_from_sigma(4.8)) == pytest.approx(4.8)
    assert t2star_from_sigma(0.0) == math.inf
    assert sigma_from_t2star(math.inf) == 0.0


def test_fit_ramsey_gaussian():
    taus = np.linspace(0.0, 150.0, 151)
    values = 0.49 * (1.0 + np.exp(-(taus / 40.0)**2))
    fit = fit_ramsey_gaussian((taus, values))

    assert fit.success
    assert fit['t2star'] == pytest.approx(40.0, rel=1e-6)
    assert fit['rho0'] == pytest.approx(0.98, rel=1e-6)


def test_fit_ramsey_gaussian_with_inverted_fringe():
    taus = np.linspace(0.0, 150.0, 151)
    values = 0.49 * (1.0 - np.exp(-(taus / 40.0)**2))
    fit = fit_ramsey_gaussian((taus, values), final_phase=math.pi)

    assert fit.success
    assert fit['t2star'] == pytest.approx(40.0, rel=1e-6)


def test_fit_exponential():
    times = np.linspace(0.0, 8.0, 17)
    fit = fit_exponential((times, 0.9 * np.exp(-times / 2.3)))

    assert fit.success
    assert fit['tau'] == pytest.approx(2.3, rel=1e-6)
    assert fit['amplitude'] == pytest.approx(0.9, rel=1e-6)


def test_fit_sinusoid():
    phases = np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False)
    fit = fit_sinusoid(phases, 0.3 * np.sin(phases + 0.7) + 0.5)

    assert fit.success
    assert fit['amplitude'] == pytest.approx(0.3)
    assert fit['phase'] == pytest.approx(0.7)
    assert fit['offset'] == pytest.approx(0.5)
    assert fit['visibility'] == pytest.approx(0.6)


def test_fit_sinusoid_rejects_degenerate_grid():
    fit = fit_sinusoid(np.zeros(5), np.ones(5))

    assert not fit.success


def test_fit_rabi_detuned_on_closed_form():
    times = np.linspace(0.0, 500.0, 2001)
    values = 0.64 * np.sin(math.pi * 12.5 * times / 1000.0)**2
    fit = fit_rabi_detuned((times, values))

    assert fit.success
    assert fit['amplitude'] == pytest.approx(0.64, rel=1e-6)
    assert fit['frequency'] == pytest.approx(12.5, rel=1e-6)


def test_flat_data_fails_to_fit():
    times = np.linspace(0.0, 10.0, 11)
    fit = fit_exponential((times, np.zeros(11)))

    assert not fit.success
    assert fit.message


def test_fit_result_as_dict():
    fit = FitResult({'tau': 2.0}, {'tau': 0.1}, 1e-3, True)

    assert fit.as_dict() == {'success': True, 'residual_norm': 1e-3, 'tau': 2.0, 'tau_err': 0.1}
    assert float(DecayTime(12.5)) == 12.5
