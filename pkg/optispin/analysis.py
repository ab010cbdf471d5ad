"""
Metric extraction from simulated traces: per-pi visibility, 1/e times,
Q factors, pi fidelities and the least-squares fits used by the experiments.
"""
import math
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .config import FIT_RESIDUAL_THRESHOLD, FRINGE_NOISE_FLOOR, VISIBILITY_MIN_SAMPLES
from .errors import UndersampledError


@dataclass(frozen=True)
class VisibilityTrace:
    times_ns: np.ndarray
    visibility: np.ndarray

    def __len__(self):
        return len(self.times_ns)


@dataclass(frozen=True)
class FitResult:
    """
    Outcome of a least-squares fit.

    :param params dict: parameter estimates by name
    :param errors dict: 1-sigma uncertainties by name
    :param residual_norm float: rms residual
    :param success bool: False when the data could not be fitted
    :param message str: reason for a failure
    """
    params: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    residual_norm: float = math.nan
    success: bool = False
    message: str = ''

    def __getitem__(self, name):
        return self.params[name]

    @classmethod
    def failed(cls, message):
        logging.debug('Fit failed: %s' % message)
        return cls(success=False, message=message)

    def as_dict(self):
        record = {'success': self.success, 'residual_norm': self.residual_norm}
        for name, value in self.params.items():
            record[name] = value
            record[name + '_err'] = self.errors.get(name, math.nan)
        if self.message:
            record['message'] = self.message

        return record


@dataclass(frozen=True)
class DecayTime:
    """A 1/e time; when censored, tau_ns is only a lower bound."""
    tau_ns: float
    censored: bool = False

    def __float__(self):
        return float(self.tau_ns)


def _as_xy(trace):
    if hasattr(trace, 'grid') and hasattr(trace, 'populations'):
        return np.asarray(trace.grid, dtype=float), np.asarray(trace.populations, dtype=float)
    if hasattr(trace, 'times_ns') and hasattr(trace, 'visibility'):
        return np.asarray(trace.times_ns, dtype=float), np.asarray(trace.visibility, dtype=float)
    if hasattr(trace, 'times_ns') and hasattr(trace, 'populations_down'):
        return np.asarray(trace.times_ns, dtype=float), trace.populations_down

    x, y = trace
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)

def pi_time(omega):
    """:return: t_pi = 1/(2 Omega) in ns for Omega in MHz"""
    return 1000.0 / (2.0 * omega)

def visibility_per_pi(trace, omega):
    """
    Peak-to-peak amplitude of a Rabi trace in contiguous windows of one
    pi-period, using the sampled extrema of each window.

    :param trace ExperimentResult|tuple: times in ns and rho_dd values
    :param omega float: Rabi frequency in MHz
    :return: window centres and visibilities
    :rType: VisibilityTrace
    """
    times, values = _as_xy(trace)
    t_pi = pi_time(omega)
    spacing = float(np.median(np.diff(times)))
    if t_pi / spacing < VISIBILITY_MIN_SAMPLES - 1e-9:
        raise UndersampledError(
            '%.3g samples per pi-period, need %d' % (t_pi / spacing, VISIBILITY_MIN_SAMPLES))

    n_windows = int(math.floor((times[-1] - times[0]) / t_pi + 1e-9))
    if n_windows < 1:
        raise UndersampledError('trace shorter than one pi-period (%.6g ns)' % t_pi)

    guard = 1e-9 * t_pi
    centres = []
    visibility = []
    for k in range(n_windows):
        start = times[0] + k * t_pi
        inside = values[(times >= start - guard) & (times <= start + t_pi + guard)]
        centres.append(start + 0.5 * t_pi)
        visibility.append(float(inside.max() - inside.min()))

    return VisibilityTrace(np.array(centres), np.clip(np.array(visibility), 0.0, 1.0))

def one_over_e_time(vis):
    """
    Time for the visibility to fall to 1/e of its first value, taken from the
    first crossing by linear interpolation and measured from the first sample.

    :param vis VisibilityTrace: the visibility trace
    :return: the decay time, censored if no crossing occurs
    :rType: DecayTime
    """
    times, values = _as_xy(vis)
    threshold = values[0] / math.e
    below = np.nonzero(values <= threshold)[0]
    if len(below) == 0:
        logging.warning('Visibility never falls below 1/e, reporting a lower bound')
        return DecayTime(float(times[-1] - times[0]), censored=True)

    k = int(below[0])
    t0, t1 = times[k - 1], times[k]
    v0, v1 = values[k - 1], values[k]
    crossing = t1 if v0 == v1 else t0 + (v0 - threshold) * (t1 - t0) / (v0 - v1)
    return DecayTime(float(crossing - times[0]))

def q_factor(tau, omega):
    """
    :param tau float|DecayTime: 1/e time in ns
    :param omega float: Rabi frequency in MHz
    :return: tau / t_pi
    :rType: float
    """
    return float(tau) / pi_time(omega)

def pi_fidelity(q):
    """
    :param q float: quality factor
    :return: 1/2 (1 + exp(-1/Q))
    :rType: float
    """
    if q <= 0.0:
        raise ValueError('Q must be positive, got %r' % q)

    return 0.5 * (1.0 + math.exp(-1.0 / q))

def pi_fidelity_from_trace(trace, omega):
    """rho_dd of a Rabi trace interpolated at t_pi."""
    times, values = _as_xy(trace)
    return float(np.interp(pi_time(omega), times, values))

def sigma_from_t2star(t2star):
    """
    :param t2star float: Gaussian dephasing time in ns
    :return: Overhauser standard deviation in MHz, 1/(sqrt(2) pi T2*)
    :rType: float
    """
    if math.isinf(t2star):
        return 0.0

    return 1000.0 / (math.sqrt(2.0) * math.pi * t2star)

def t2star_from_sigma(sigma):
    """Inverse of sigma_from_t2star, in ns."""
    if sigma == 0.0:
        return math.inf

    return 1000.0 / (math.sqrt(2.0) * math.pi * sigma)

def _least_squares(model, x, y, guess, names):
    span = float(np.ptp(y))
    if span < FRINGE_NOISE_FLOOR:
        return FitResult.failed('data range %.3g below noise floor' % span)

    try:
        popt, pcov = curve_fit(model, x, y, p0=guess, method='lm', maxfev=20000)
    except (RuntimeError, ValueError) as e:
        return FitResult.failed(str(e))

    residual = float(np.sqrt(np.mean((model(x, *popt) - y)**2)))
    errors = np.sqrt(np.abs(np.diag(pcov))) if np.all(np.isfinite(pcov)) else np.full(len(popt), math.inf)
    params = dict(zip(names, (float(p) for p in popt)))
    success = residual <= FIT_RESIDUAL_THRESHOLD * span and bool(np.all(np.isfinite(popt)))
    return FitResult(
        params=params,
        errors=dict(zip(names, (float(e) for e in errors))),
        residual_norm=residual,
        success=success,
        message='' if success else 'residual %.3g too large' % residual,
    )

def fit_ramsey_gaussian(result, final_phase=None):
    """
    Fits rho0/2 (1 +- exp(-(tau/T2*)^2)) to a Ramsey trace. The sign is +
    for final_phase 0 and - for pi, read from result.metadata when not given.

    :param result ExperimentResult|tuple: tau in ns and rho_dd
    :return: fit with parameters t2star (ns) and rho0
    :rType: FitResult
    """
    if final_phase is None:
        final_phase = getattr(result, 'metadata', {}).get('final_phase', 0.0)
    sign = 1.0 if math.cos(final_phase) > 0.0 else -1.0
    tau, values = _as_xy(result)

    def model(t, t2star, rho0):
        return 0.5 * rho0 * (1.0 + sign * np.exp(-(t / t2star)**2))

    rho0 = float(values.max()) if sign > 0 else 2.0 * float(values.max())
    distance = np.abs(values - 0.5 * rho0)
    decayed = np.nonzero(distance <= 0.5 * rho0 / math.e)[0]
    t2_guess = float(tau[decayed[0]]) if len(decayed) and tau[decayed[0]] > 0 else float(np.ptp(tau)) / 2.0
    return _least_squares(model, tau, values, (t2_guess, rho0), ('t2star', 'rho0'))

def fit_exponential(vis):
    """
    Fits A exp(-t/tau), seeded by a log-linear regression.

    :param vis VisibilityTrace|tuple: times and decaying values
    :return: fit with parameters tau (time unit of the input) and amplitude
    :rType: FitResult
    """
    times, values = _as_xy(vis)

    def model(t, tau, amplitude):
        return amplitude * np.exp(-t / tau)

    positive = values > FRINGE_NOISE_FLOOR
    if positive.sum() >= 2:
        slope, intercept = np.polyfit(times[positive], np.log(values[positive]), 1)
        tau_guess = -1.0 / slope if slope < 0.0 else float(np.ptp(times))
        guess = (tau_guess, math.exp(intercept))
    else:
        guess = (float(np.ptp(times)), float(values[0]))

    return _least_squares(model, times, values, guess, ('tau', 'amplitude'))

def fit_sinusoid(phi, values):
    """
    Linear least-squares fit of A sin(phi + phi0) + B.

    :param phi ndarray: phases in rad
    :param values ndarray: populations
    :return: fit with amplitude, phase, offset and visibility = 2A
    :rType: FitResult
    """
    phi = np.asarray(phi, dtype=float)
    values = np.asarray(values, dtype=float)
    design = np.column_stack([np.sin(phi), np.cos(phi), np.ones_like(phi)])
    coefficients, _, rank, _ = np.linalg.lstsq(design, values, rcond=None)
    if rank < 3:
        return FitResult.failed('phase grid does not determine a sinusoid')

    a, b, offset = coefficients
    amplitude = math.hypot(a, b)
    residuals = values - design @ coefficients
    dof = max(len(values) - 3, 1)
    variance = float(residuals @ residuals) / dof
    covariance = variance * np.linalg.inv(design.T @ design)
    amplitude_err = math.sqrt(max(covariance[0, 0], covariance[1, 1]))
    params = {
        'amplitude': amplitude,
        'phase': math.atan2(b, a),
        'offset': float(offset),
        'visibility': 2.0 * amplitude,
    }
    errors = {
        'amplitude': amplitude_err,
        'phase': amplitude_err / amplitude if amplitude > 0.0 else math.inf,
        'offset': math.sqrt(covariance[2, 2]),
        'visibility': 2.0 * amplitude_err,
    }
    residual = float(np.sqrt(np.mean(residuals**2)))
    if amplitude < FRINGE_NOISE_FLOOR:
        return FitResult(params, errors, residual, False, 'fringe amplitude below noise floor')

    return FitResult(params, errors, residual, True)

def fit_rabi_detuned(trace):
    """
    Fits A sin^2(pi f t) to a detuned Rabi trace.

    :param trace ExperimentResult|tuple: times in ns and rho_dd
    :return: fit with amplitude (Omega^2/Omega'^2) and frequency f = Omega' in MHz
    :rType: FitResult
    """
    times, values = _as_xy(trace)

    def model(t, amplitude, frequency):
        return amplitude * np.sin(math.pi * frequency * t / 1000.0)**2

    spacing = float(np.median(np.diff(times)))
    padded = 8 * len(values)
    spectrum = np.abs(np.fft.rfft(values - values.mean(), n=padded))
    frequencies = np.fft.rfftfreq(padded, d=spacing / 1000.0)
    f_guess = float(frequencies[1 + np.argmax(spectrum[1:])])
    return _least_squares(model, times, values, (float(values.max()), f_guess), ('amplitude', 'frequency'))
