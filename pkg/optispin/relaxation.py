"""
Nuclear-induced decay rates of the driven electron, computed from a
SpectralDensity: the time-dependent rate, its Markov limit, the Lorentzian
(self-consistent) Markov rate, its Overhauser average and the fixed point
that ties the Lorentzian width to the total decay rate.
"""
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.integrate import trapezoid

from .analysis import one_over_e_time, pi_time, q_factor, visibility_per_pi
from .config import (
    CONVOLUTION_WINDOW,
    DEFAULT_GH_NODES,
    FIXED_POINT_MAX_ITER,
    FIXED_POINT_TOLERANCE,
    RATE_TABLE_POINTS,
    VISIBILITY_MIN_SAMPLES,
)
from .errors import IterationDivergedError, NyquistError
from .sequence import OverhauserEnsemble, run_rabi
from .spin import TWO_PI, NuclearRateMode, RelaxationParams, StepControl

# longest Rabi trace used to extract a 1/e time, in ns
MAX_RABI_DURATION = 20000.0


@dataclass(frozen=True)
class RateQuery:
    """
    Where a rate is evaluated: a Rabi frequency plus either a fixed
    Overhauser shift or an ensemble width (MHz).
    """
    omega: float
    overhauser: float = 0.0
    sigma_oh: Optional[float] = None

    def __post_init__(self):
        if self.omega < 0.0:
            raise ValueError('Rabi frequency must be non-negative')
        if self.sigma_oh is not None and self.sigma_oh < 0.0:
            raise ValueError('sigma_oh must be non-negative')

    @property
    def omega_prime(self):
        return math.hypot(self.omega, self.overhauser)

    @property
    def chi(self):
        return math.atan2(self.omega, self.overhauser)

    def evaluate(self, density, gamma_damp=None):
        """
        :param density SpectralDensity: the bath
        :param gamma_damp float: Lorentzian damping in 1/us, None for the Markov limit
        :rtype: float
        """
        if self.sigma_oh is not None:
            return gamma_scm_averaged(density, self.omega, self.sigma_oh, gamma_damp)
        if gamma_damp is None:
            return gamma_markov(density, self.omega_prime, self.chi)

        return gamma_scm(density, self.omega_prime, self.chi, gamma_damp)


@dataclass(frozen=True)
class FixedPointReport:
    """
    :param converged bool: relative change fell below tol
    :param iterations int: updates performed
    :param rate float: final nuclear rate in 1/us
    :param residuals tuple: relative change per iteration
    :param damped bool: whether averaged updates were switched on
    """
    converged: bool
    iterations: int
    rate: float
    residuals: Tuple[float, ...] = ()
    damped: bool = False


def _prefactor(chi):
    return 0.25 * np.sin(chi)**2

def gamma_nonmarkov(density, omega_prime, chi, t):
    """
    Time-dependent rate (sin^2 chi / 4)(1/pi) int df D(f) sin(2 pi (f - f') t)/(f - f'),
    by trapezoid on the spectral grid with the removable node value 2 pi t.

    :param density SpectralDensity: the bath
    :param omega_prime float: dressed splitting in MHz
    :param chi float: mixing angle in rad
    :param t float|ndarray: time since the drive was switched on, in ns
    :return: rate in 1/us, shaped like t
    :rType: float|ndarray
    """
    t_us = np.asarray(t, dtype=float) / 1000.0
    if np.any(t_us < 0.0):
        raise ValueError('time must be non-negative')
    if density.spacing * float(np.max(t_us, initial=0.0)) > 0.5:
        raise NyquistError(
            'grid spacing %.3g MHz too coarse for t=%.6g ns' % (density.spacing, 1000.0 * np.max(t_us)))

    offset = density.omega - omega_prime
    safe = np.where(offset == 0.0, 1.0, offset)
    phase = TWO_PI * np.multiply.outer(t_us, offset)
    kernel = np.where(offset == 0.0, TWO_PI * t_us[..., None], np.sin(phase) / safe)
    value = _prefactor(chi) / math.pi * trapezoid(density.values * kernel, density.omega, axis=-1)
    return value if np.ndim(t) else float(value)

def gamma_markov(density, omega_prime, chi):
    """
    Markov limit (sin^2 chi / 4) D(Omega').

    :raises OutOfRangeError: when Omega' lies outside the spectral grid
    """
    return _prefactor(chi) * density(omega_prime)

def _lorentzian_average(density, omega_prime, gamma_damp):
    """
    Exact integral of the piecewise-linear D against a normalized Lorentzian
    of half-width gamma_damp/(2 pi) MHz, with D held at its edge values
    beyond the grid.
    """
    f = density.omega
    d = density.values
    centres = np.atleast_1d(np.asarray(omega_prime, dtype=float))
    width = gamma_damp / TWO_PI
    u0 = f[None, :-1] - centres[:, None]
    u1 = f[None, 1:] - centres[:, None]
    area = np.arctan2((u1 - u0) * width, width**2 + u0 * u1) / math.pi
    first = width / TWO_PI * np.log((width**2 + u1**2) / (width**2 + u0**2))
    slope = np.diff(d) / np.diff(f)
    inside = np.sum(d[:-1] * area + slope * (first - u0 * area), axis=1)
    below = d[0] * (0.5 + np.arctan((f[0] - centres) / width) / math.pi)
    above = d[-1] * (0.5 - np.arctan((f[-1] - centres) / width) / math.pi)

    reach = CONVOLUTION_WINDOW * width
    truncated = ((centres - reach < f[0]) & (d[0] > 0.0)) | ((centres + reach > f[-1]) & (d[-1] > 0.0))
    if np.any(truncated):
        logging.warning('Lorentzian window of %.3g MHz leaves the spectral grid' % reach)

    return inside + below + above

def gamma_scm(density, omega_prime, chi, gamma_damp):
    """
    Self-consistent Markov rate: D convolved with a Lorentzian of damping
    gamma_damp (1/us), times sin^2 chi / 4.

    :param density SpectralDensity: the bath
    :param omega_prime float|ndarray: dressed splitting in MHz
    :param chi float|ndarray: mixing angle in rad
    :param gamma_damp float: total decay rate in 1/us, > 0
    :return: rate in 1/us
    :rType: float|ndarray
    """
    if not gamma_damp > 0.0:
        raise ValueError('gamma_damp must be positive, got %r' % gamma_damp)

    value = _prefactor(chi) * _lorentzian_average(density, omega_prime, gamma_damp).reshape(np.shape(omega_prime))
    return value if np.ndim(value) else float(value)

def gamma_scm_averaged(density, omega, sigma_oh, gamma_damp, n_nodes=DEFAULT_GH_NODES):
    """
    gamma_scm averaged over a Gaussian Overhauser shift of width sigma_oh,
    weighting each shift with Omega^2 / (Omega^2 + Delta^2). A gamma_damp of
    None averages the Markov limit instead.

    :param omega float: Rabi frequency in MHz
    :param sigma_oh float: Overhauser standard deviation in MHz
    :rType: float
    """
    if sigma_oh < 0.0:
        raise ValueError('sigma_oh must be non-negative')
    rate = gamma_markov if gamma_damp is None else partial(gamma_scm, gamma_damp=gamma_damp)
    if sigma_oh == 0.0:
        return float(rate(density, omega, 0.5 * math.pi))
    if omega == 0.0 or density.is_zero():
        return 0.0

    x, w = hermgauss(n_nodes)
    shifts = math.sqrt(2.0) * sigma_oh * x
    omega_prime = np.hypot(omega, shifts)
    rates = rate(density, omega_prime, np.arctan2(omega, shifts))
    return float(np.dot(w / math.sqrt(math.pi), rates))

def self_consistent_rate(density, omega, sigma_oh, gamma1, gamma2,
                         tol=FIXED_POINT_TOLERANCE, max_iter=FIXED_POINT_MAX_ITER, n_nodes=DEFAULT_GH_NODES):
    """
    Fixed point of rate = <gamma_scm>(gamma_damp = rate + 3/2 Gamma_1 + Gamma_2),
    started from D(Omega)/4. Two successive sign changes of the update, or
    two successive residual increases, switch to averaged updates.

    :param density SpectralDensity: the bath
    :param omega float: Rabi frequency in MHz
    :param sigma_oh float: Overhauser standard deviation in MHz
    :param gamma1 float: drive-induced relaxation in 1/us
    :param gamma2 float: pure dephasing in 1/us
    :return: the nuclear rate in 1/us and the iteration report
    :rType: tuple
    """
    if not tol > 0.0:
        raise ValueError('tol must be positive')

    if density.is_zero():
        report = FixedPointReport(True, 1, 0.0, (0.0,))
        return 0.0, report

    base = 1.5 * gamma1 + gamma2
    rate = 0.25 * float(density(omega))
    residuals = []
    damped = False
    flips = 0
    rises = 0
    last_update = 0.0
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        gamma_damp = max(rate + base, 1e-12)
        update = gamma_scm_averaged(density, omega, sigma_oh, gamma_damp, n_nodes)
        if not math.isfinite(update):
            report = FixedPointReport(False, iteration, rate, tuple(residuals), damped)
            raise IterationDivergedError('non-finite rate at iteration %d for Omega=%.6g MHz' % (iteration, omega), report)
        if damped:
            update = 0.5 * (update + rate)

        change = update - rate
        residual = abs(change) / max(abs(update), 1e-300)
        flips = flips + 1 if change * last_update < 0.0 else 0
        rises = rises + 1 if residuals and residual > residuals[-1] else 0
        if not damped and (flips >= 2 or rises >= 2):
            logging.debug('Fixed point oscillates at Omega=%.6g MHz, averaging updates' % omega)
            damped = True

        residuals.append(residual)
        last_update = change
        rate = update
        if residual <= tol:
            converged = True
            break

    if not converged:
        logging.warning('Fixed point at Omega=%.6g MHz not converged after %d iterations' % (omega, max_iter))

    logging.debug('Omega=%.6g MHz: nuclear rate %.9g 1/us after %d iterations' % (omega, rate, iteration))
    return rate, FixedPointReport(converged, iteration, rate, tuple(residuals), damped)


@dataclass(frozen=True)
class RateCurve:
    omega: np.ndarray
    rate: np.ndarray
    converged: np.ndarray
    reports: tuple = ()

    def to_rows(self):
        return list(zip(self.omega.tolist(), self.rate.tolist(), [int(c) for c in self.converged]))


def _map(function, items, workers):
    if workers <= 1:
        return [function(item) for item in items]

    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(function, items))

def rate_curve(density, omega_grid, relax, sigma_oh, tol=FIXED_POINT_TOLERANCE,
               max_iter=FIXED_POINT_MAX_ITER, workers=1):
    """
    Self-consistent nuclear rate over a sweep of Rabi frequencies, reduced
    in grid order.

    :param relax RelaxationParams: supplies Gamma_1(Omega) and Gamma_2
    :rType: RateCurve
    """
    omega_grid = np.asarray(omega_grid, dtype=float)

    def point(omega):
        return self_consistent_rate(density, omega, sigma_oh, relax.gamma1(omega), relax.gamma2, tol, max_iter)

    results = _map(point, omega_grid, workers)
    reports = tuple(report for _, report in results)
    return RateCurve(
        omega_grid,
        np.array([rate for rate, _ in results]),
        np.array([report.converged for report in reports]),
        reports,
    )


class MarkovRate:
    """
    Constant nuclear rate for evolve: the Lorentzian rate at a fixed damping,
    or the bare Markov limit when gamma_damp is None.
    """
    time_dependent = False

    def __init__(self, density, gamma_damp=None):
        self.density = density
        self.gamma_damp = gamma_damp

    def __call__(self, omega_prime, chi, t):
        if self.gamma_damp is None:
            return _prefactor(chi) * self.density(omega_prime)

        return gamma_scm(self.density, omega_prime, chi, self.gamma_damp)


class NonMarkovRate:
    """
    Time-dependent nuclear rate for evolve, tabulated on [0, duration] per
    dressed splitting and linearly interpolated.
    """
    time_dependent = True

    def __init__(self, density, duration, points=RATE_TABLE_POINTS):
        self.density = density
        self.times = np.linspace(0.0, duration, points)
        self._tables = {}

    def table(self, omega_prime):
        """Rate at chi = pi/2 over the time table, computed once per splitting."""
        key = float(omega_prime)
        if key not in self._tables:
            self._tables[key] = gamma_nonmarkov(self.density, key, 0.5 * math.pi, self.times)
        return self._tables[key]

    def __call__(self, omega_prime, chi, t):
        omega_prime, chi, t = np.broadcast_arrays(omega_prime, chi, t)
        splittings = omega_prime.reshape(-1)
        times = t.reshape(-1)
        out = np.empty(splittings.shape)
        for value in np.unique(splittings):
            mask = splittings == value
            out[mask] = np.interp(times[mask], self.times, self.table(value))

        return 4.0 * _prefactor(chi) * out.reshape(omega_prime.shape)


def nuclear_rate_function(relax, density, omega, sigma_oh, duration):
    """
    The rate function evolve needs for relax.nuclear_rate_mode.

    :param duration float: longest evolution in ns, sizes the time table
    :return: a rate function and the fixed-point report (None unless self-consistent)
    :rType: tuple
    """
    mode = relax.nuclear_rate_mode
    if mode is NuclearRateMode.OFF or density is None:
        return None, None
    if mode is NuclearRateMode.NON_MARKOVIAN:
        return NonMarkovRate(density, duration), None

    rate, report = self_consistent_rate(density, omega, sigma_oh, relax.gamma1(omega), relax.gamma2)
    gamma_damp = max(rate + 1.5 * relax.gamma1(omega) + relax.gamma2, 1e-12)
    return MarkovRate(density, gamma_damp), report


@dataclass(frozen=True)
class QCurve:
    omega: np.ndarray
    q: np.ndarray
    tau_ns: np.ndarray
    rate: np.ndarray
    censored: np.ndarray

    def to_rows(self):
        return list(zip(self.omega.tolist(), self.q.tolist(), self.tau_ns.tolist(),
                        self.rate.tolist(), [int(c) for c in self.censored]))


def _rabi_duration(omega, relax, rate):
    decay = 1.5 * relax.gamma1(omega) + rate + 0.5 * relax.gamma2
    duration = MAX_RABI_DURATION if decay <= 0.0 else min(3000.0 / decay, MAX_RABI_DURATION)
    return max(duration, 4.0 * pi_time(omega))

def q_point(omega, density, relax, ensemble, step=None):
    """
    Q and 1/e time at one Rabi frequency from a simulated Rabi trace.

    :rType: tuple
    """
    duration = _rabi_duration(omega, relax, 0.0)
    rate_fn, report = nuclear_rate_function(relax, density, omega, ensemble.sigma, duration)
    rate = report.rate if report is not None else 0.0
    duration = _rabi_duration(omega, relax, rate)
    if isinstance(rate_fn, NonMarkovRate):
        rate_fn = NonMarkovRate(density, duration)

    spacing = pi_time(omega) / VISIBILITY_MIN_SAMPLES
    times = np.arange(int(math.floor(duration / spacing)) + 1) * spacing
    trace = run_rabi(omega, 0.0, times, relax, ensemble, rate_fn, step)
    tau = one_over_e_time(visibility_per_pi(trace, omega))
    logging.debug('Omega=%.6g MHz: tau=%.6g ns, Q=%.6g' % (omega, tau.tau_ns, q_factor(tau, omega)))
    return q_factor(tau, omega), tau, rate

def model_q_curve(omega_grid, bath, alpha, gamma2, sigma_oh, nuclear_rate_mode=NuclearRateMode.SELF_CONSISTENT_MARKOV,
                  ensemble=None, step=None, workers=1):
    """
    Q factor and 1/e time versus Rabi frequency for Gamma_1 = alpha Omega,
    Gamma_2, Overhauser broadening and the nuclear rate.

    :param omega_grid ndarray: Rabi frequencies in MHz
    :param bath SpectralDensity: the bath, None to switch nuclear decay off
    :param alpha float: Gamma_1 proportionality
    :param gamma2 float: pure dephasing in 1/us
    :param sigma_oh float: Overhauser standard deviation in MHz
    :param ensemble OverhauserEnsemble: averaging scheme, Gauss-Hermite by default
    :rType: QCurve
    """
    relax = RelaxationParams(alpha=alpha, gamma2=gamma2, nuclear_rate_mode=nuclear_rate_mode)
    ensemble = ensemble or OverhauserEnsemble(sigma_oh)
    omega_grid = np.asarray(omega_grid, dtype=float)
    results = _map(lambda omega: q_point(omega, bath, relax, ensemble, step or StepControl()), omega_grid, workers)
    return QCurve(
        omega_grid,
        np.array([q for q, _, _ in results]),
        np.array([tau.tau_ns for _, tau, _ in results]),
        np.array([rate for _, _, rate in results]),
        np.array([tau.censored for _, tau, _ in results]),
    )
