"""
Pulse sequences and the experiments built from them. Every experiment starts
in |up>, reads out rho_dd and averages over a quasi-static Gaussian
Overhauser ensemble.
"""
import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import ndtri

from .analysis import FitResult, fit_exponential, fit_sinusoid, pi_time
from .config import DEFAULT_GH_NODES, DEFAULT_MC_SAMPLES, ENSEMBLE_CHUNK
from .errors import IntegratorError, SegmentError
from .spin import DensityMatrix, DriveParams, TWO_PI, _phase_rotation, evolve_batch


class SegmentKind(str, Enum):
    DRIVE = 'drive'
    DELAY = 'delay'


@dataclass(frozen=True)
class Segment:
    """
    One piecewise-constant part of a sequence.

    :param kind SegmentKind: drive or delay
    :param duration float: length in ns
    :param omega float: Rabi frequency in MHz, 0 for delays
    :param phase float: drive phase in rad
    :param delta float: two-photon detuning in MHz
    """
    kind: SegmentKind
    duration: float
    omega: float = 0.0
    phase: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'kind', SegmentKind(self.kind))
        if not self.duration >= 0.0:
            raise ValueError('segment duration must be non-negative, got %r' % self.duration)
        if self.omega < 0.0:
            raise ValueError('segment Rabi frequency must be non-negative')
        if self.kind is SegmentKind.DELAY and self.omega != 0.0:
            raise ValueError('a delay segment cannot carry a drive')

        object.__setattr__(self, 'phase', float(self.phase) % TWO_PI)

    @classmethod
    def drive(cls, duration, omega, phase=0.0, delta=0.0):
        return cls(SegmentKind.DRIVE, duration, omega, phase, delta)

    @classmethod
    def delay(cls, duration, delta=0.0):
        return cls(SegmentKind.DELAY, duration, 0.0, 0.0, delta)

    @classmethod
    def rotation(cls, angle, omega, phase=0.0, delta=0.0):
        """A drive segment rotating by angle (rad) on resonance."""
        return cls.drive(1000.0 * angle / (TWO_PI * omega), omega, phase, delta)

    @property
    def area(self):
        """Pulse area 2 pi Omega t in rad."""
        return TWO_PI * self.omega * self.duration / 1000.0

    def drive_params(self):
        return DriveParams(self.omega, self.phase, self.delta)

    def time_reversed(self):
        """The segment with inverted Hamiltonian: phase + pi and -delta."""
        return Segment(self.kind, self.duration, self.omega, self.phase + math.pi, -self.delta)


@dataclass(frozen=True)
class PulseSequence:
    """
    Ordered segments applied to |up>, read out as the |down> population.

    :param segments tuple: the segments
    :param readout str: readout descriptor, only 'down' is modelled
    """
    segments: Tuple[Segment, ...]
    readout: str = 'down'

    def __post_init__(self):
        object.__setattr__(self, 'segments', tuple(self.segments))
        if not self.segments:
            raise ValueError('a pulse sequence needs at least one segment')
        if not math.isfinite(self.duration):
            raise ValueError('pulse sequence duration must be finite')

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    @property
    def duration(self):
        return sum(segment.duration for segment in self.segments)

    @property
    def area(self):
        return sum(segment.area for segment in self.segments)

    def time_reversed(self):
        return PulseSequence(tuple(s.time_reversed() for s in reversed(self.segments)), self.readout)


def paired_sequence(omega, durations, phase=0.0, delta=0.0):
    """
    Pairs drive pulses of increasing length with pulses of decreasing length
    so every shot carries the same total Raman pulse area.

    :param omega float: Rabi frequency in MHz
    :param durations ndarray: sorted pulse lengths in ns
    :return: (measured, partner) sequences per duration
    :rType: list
    """
    durations = np.asarray(durations, dtype=float)
    pairs = []
    for measured, partner in zip(durations, durations[::-1]):
        pairs.append((
            PulseSequence((Segment.drive(measured, omega, phase, delta),)),
            PulseSequence((Segment.drive(partner, omega, phase, delta),)),
        ))

    return pairs


class EnsembleScheme(str, Enum):
    GAUSS_HERMITE = 'gauss_hermite'
    MONTE_CARLO = 'monte_carlo'


@dataclass(frozen=True)
class OverhauserEnsemble:
    """
    Gaussian distribution of quasi-static Overhauser shifts.

    :param sigma float: standard deviation in MHz
    :param scheme EnsembleScheme: Gauss-Hermite nodes or Monte-Carlo samples
    :param n_nodes int: Gauss-Hermite node count
    :param n_samples int: Monte-Carlo sample count
    :param seed int: Monte-Carlo seed
    """
    sigma: float = 0.0
    scheme: EnsembleScheme = EnsembleScheme.GAUSS_HERMITE
    n_nodes: int = DEFAULT_GH_NODES
    n_samples: int = DEFAULT_MC_SAMPLES
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'scheme', EnsembleScheme(self.scheme))
        if self.sigma < 0.0:
            raise ValueError('sigma_oh must be non-negative, got %r' % self.sigma)
        if self.n_nodes < 1 or self.n_samples < 1:
            raise ValueError('ensemble needs at least one node')

    @classmethod
    def single(cls):
        return cls(0.0)

    def nodes(self):
        """
        :return: (shifts in MHz, weights summing to 1)
        :rType: tuple
        """
        if self.sigma == 0.0:
            return np.zeros(1), np.ones(1)

        if self.scheme is EnsembleScheme.GAUSS_HERMITE:
            x, w = hermgauss(self.n_nodes)
            return math.sqrt(2.0) * self.sigma * x, w / math.sqrt(math.pi)

        # stratified sampling, one uniform draw per stratum from a counter-based stream
        generator = np.random.Generator(np.random.Philox(self.seed))
        u = generator.random(self.n_samples)
        quantiles = (np.arange(self.n_samples) + u) / self.n_samples
        return self.sigma * ndtri(quantiles), np.full(self.n_samples, 1.0 / self.n_samples)


@dataclass(frozen=True)
class ExperimentResult:
    """
    Ensemble-averaged readout of an experiment.

    :param grid ndarray: independent variable (ns or rad, see grid_unit)
    :param populations ndarray: mean rho_dd per grid point
    :param spread ndarray: ensemble standard deviation per point
    :param grid_unit str: 'ns' or 'rad'
    :param metadata dict: parameters and seed
    """
    grid: np.ndarray
    populations: np.ndarray
    spread: Optional[np.ndarray] = None
    grid_unit: str = 'ns'
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'populations', np.clip(self.populations, 0.0, 1.0))

    def __len__(self):
        return len(self.grid)

    def rows(self):
        return list(zip(self.grid.tolist(), self.populations.tolist()))


@dataclass(frozen=True)
class SpinLockResult:
    """
    Spin-locking tomography.

    :param lock_times ndarray: lock durations in ns
    :param phi_grid ndarray: tomography phases in rad
    :param populations ndarray: rho_dd per (lock time, phase)
    :param visibility ndarray: fringe visibility per lock time
    :param fit_ok ndarray: False where the fringe fit failed
    :param locked_populations ndarray: rho_dd for readout phase 0 and pi
    :param decay FitResult: exponential fit of the visibility
    """
    lock_times: np.ndarray
    phi_grid: np.ndarray
    populations: np.ndarray
    visibility: np.ndarray
    fit_ok: np.ndarray
    locked_populations: np.ndarray
    decay: FitResult
    metadata: dict = field(default_factory=dict)

    @property
    def tau_us(self):
        return self.decay['tau'] / 1000.0 if self.decay.success else math.nan


class _Accumulator:
    """Weighted mean and spread of rho_dd, reduced in node order."""
    def __init__(self, shape):
        self.total = np.zeros(shape)
        self.square = np.zeros(shape)

    def add(self, weights, populations):
        self.total += np.tensordot(weights, populations, axes=1)
        self.square += np.tensordot(weights, populations**2, axes=1)

    def result(self):
        return self.total, np.sqrt(np.clip(self.square - self.total**2, 0.0, None))


def _chunks(ensemble):
    shifts, weights = ensemble.nodes()
    for start in range(0, len(shifts), ENSEMBLE_CHUNK):
        yield shifts[start:start + ENSEMBLE_CHUNK], weights[start:start + ENSEMBLE_CHUNK]

def _initial(batch):
    return np.broadcast_to(DensityMatrix.up().to_array(), (batch, 2, 2))

def _apply(index, states, segment, relax, shifts, rate_fn, step, times=None):
    """Evolves states through one segment, returning the sampled states."""
    try:
        return evolve_batch(
            states, segment.drive_params(), relax, shifts, segment.duration,
            times=times, rate_fn=rate_fn, step=step)
    except IntegratorError as e:
        raise SegmentError(index, e) from e

def _rotate_phases(states, phases):
    """R(-phi) rho R(-phi)^dagger for every phase, adding a phase axis."""
    rotations = np.stack([_phase_rotation(-phi) for phi in phases])
    return np.einsum('pij,b...jk,plk->b...pil', rotations, states, np.conj(rotations))

def _metadata(ensemble, **parameters):
    parameters.update({
        'sigma_oh': ensemble.sigma,
        'scheme': ensemble.scheme.value,
        'seed': ensemble.seed,
    })
    return parameters

def run_sequence(seq, relax, ensemble, rate_fn=None, step=None):
    """
    Evolves |up> through every segment for each ensemble node and returns the
    weighted mean of rho_dd.

    :param seq PulseSequence: the sequence
    :param relax RelaxationParams: relaxation rates
    :param ensemble OverhauserEnsemble: Overhauser averaging
    :param rate_fn callable: optional nuclear rate function
    :param step StepControl: integrator step control
    :return: a single-point result at the total sequence duration
    :rType: ExperimentResult
    """
    accumulator = _Accumulator(())
    for shifts, weights in _chunks(ensemble):
        states = _initial(len(shifts))
        for index, segment in enumerate(seq):
            states = _apply(index, states, segment, relax, shifts, rate_fn, step)[:, -1]
        accumulator.add(weights, states[:, 1, 1].real)

    mean, spread = accumulator.result()
    logging.debug('Sequence of %d segments gives rho_dd=%.12g' % (len(seq), mean))
    return ExperimentResult(
        np.array([seq.duration]), np.atleast_1d(mean), np.atleast_1d(spread),
        metadata=_metadata(ensemble, segments=len(seq)))

def run_rabi(omega, delta, t_grid, relax, ensemble, rate_fn=None, step=None):
    """
    Rabi oscillation: rho_dd after a drive pulse of each length in t_grid.

    :param omega float: Rabi frequency in MHz
    :param delta float: two-photon detuning in MHz
    :param t_grid ndarray: sorted pulse lengths in ns
    :return: rho_dd versus pulse length
    :rType: ExperimentResult
    """
    t_grid = np.asarray(t_grid, dtype=float)
    segment = Segment.drive(float(t_grid[-1]), omega, 0.0, delta)
    accumulator = _Accumulator(t_grid.shape)
    for shifts, weights in _chunks(ensemble):
        states = _apply(0, _initial(len(shifts)), segment, relax, shifts, rate_fn, step, t_grid)
        accumulator.add(weights, states[..., 1, 1].real)

    mean, spread = accumulator.result()
    logging.debug('Rabi at %.6g MHz over %d points' % (omega, len(t_grid)))
    return ExperimentResult(t_grid, mean, spread, 'ns', _metadata(ensemble, omega=omega, delta=delta))

def run_detuned_rabi(omega, deltas, t_grid, relax, ensemble, rate_fn=None, step=None):
    """Rabi traces for each two-photon detuning in deltas."""
    return [run_rabi(omega, delta, t_grid, relax, ensemble, rate_fn, step) for delta in deltas]

def pi_fidelity_low_power(omega, relax, ensemble, delta=0.0, rate_fn=None, step=None):
    """
    Ensemble-averaged rho_dd after a nominal pi pulse.

    :param omega float: Rabi frequency in MHz
    :return: the pi-pulse fidelity
    :rType: float
    """
    sequence = PulseSequence((Segment.drive(pi_time(omega), omega, 0.0, delta),))
    return float(run_sequence(sequence, relax, ensemble, rate_fn, step).populations[0])

def run_ramsey(omega_pulse, tau_grid, final_phase, relax, ensemble, delta=0.0, rate_fn=None, step=None):
    """
    Ramsey fringes: pi/2 (phase 0), free delay tau, pi/2 (final_phase).

    :param omega_pulse float: Rabi frequency of the pi/2 pulses in MHz
    :param tau_grid ndarray: sorted delays in ns
    :param final_phase float: phase of the second pulse, 0 or pi
    :param delta float: two-photon detuning during pulses and delay in MHz
    :return: rho_dd versus delay
    :rType: ExperimentResult
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    t_half = pi_time(omega_pulse) / 2.0
    first = Segment.drive(t_half, omega_pulse, 0.0, delta)
    wait = Segment.delay(float(tau_grid[-1]), delta)
    last = Segment.drive(t_half, omega_pulse, final_phase, delta)
    accumulator = _Accumulator(tau_grid.shape)
    for shifts, weights in _chunks(ensemble):
        states = _apply(0, _initial(len(shifts)), first, relax, shifts, rate_fn, step)[:, -1]
        states = _apply(1, states, wait, relax, shifts, rate_fn, step, tau_grid)
        states = _apply(2, states, last, relax, shifts, rate_fn, step)[:, -1]
        accumulator.add(weights, states[..., 1, 1].real)

    mean, spread = accumulator.result()
    metadata = _metadata(ensemble, omega_pulse=omega_pulse, final_phase=float(final_phase), delta=delta)
    return ExperimentResult(tau_grid, mean, spread, 'ns', metadata)

def run_phase_scan(omega_pulse, phi_grid, delta, relax, ensemble, rate_fn=None, step=None):
    """
    Two pi/2 pulses, the second with phase phi. The second pulse is applied
    as a phase-0 pulse to the state rotated about z by -phi, which leaves the
    readout population unchanged.

    :param omega_pulse float: Rabi frequency of the pulses in MHz
    :param phi_grid ndarray: phases of the second pulse in rad
    :param delta float: systematic two-photon detuning in MHz
    :return: rho_dd versus phase
    :rType: ExperimentResult
    """
    phi_grid = np.asarray(phi_grid, dtype=float)
    half = Segment.drive(pi_time(omega_pulse) / 2.0, omega_pulse, 0.0, delta)
    accumulator = _Accumulator(phi_grid.shape)
    for shifts, weights in _chunks(ensemble):
        states = _apply(0, _initial(len(shifts)), half, relax, shifts, rate_fn, step)[:, -1]
        states = _apply(1, _rotate_phases(states, phi_grid), half, relax, shifts, rate_fn, step)[:, -1]
        accumulator.add(weights, states[..., 1, 1].real)

    mean, spread = accumulator.result()
    metadata = _metadata(ensemble, omega_pulse=omega_pulse, delta=delta)
    return ExperimentResult(phi_grid, mean, spread, 'rad', metadata)

def run_spinlock(omega_lock, lock_times, phi_grid, relax, ensemble, omega_pulse=None, rate_fn=None, step=None):
    """
    Spin locking with tomography: pi/2 (phase 0), lock at phase pi/2 for T,
    pi/2 at phase phi. The visibility per T is 2A of a fit A sin(phi + phi0) + B.

    :param omega_lock float: lock Rabi frequency in MHz
    :param lock_times ndarray: sorted lock durations in ns
    :param phi_grid ndarray: tomography phases in rad
    :param omega_pulse float: Rabi frequency of the pi/2 pulses, defaults to omega_lock
    :return: visibilities, locked populations and their exponential fit
    :rType: SpinLockResult
    """
    lock_times = np.asarray(lock_times, dtype=float)
    phi_grid = np.asarray(phi_grid, dtype=float)
    omega_pulse = omega_pulse or omega_lock
    half = Segment.drive(pi_time(omega_pulse) / 2.0, omega_pulse, 0.0)
    lock = Segment.drive(float(lock_times[-1]), omega_lock, math.pi / 2.0)
    phases = np.concatenate([phi_grid, [0.0, math.pi]])
    accumulator = _Accumulator((len(lock_times), len(phases)))
    for shifts, weights in _chunks(ensemble):
        states = _apply(0, _initial(len(shifts)), half, relax, shifts, rate_fn, step)[:, -1]
        states = _apply(1, states, lock, relax, shifts, rate_fn, step, lock_times)
        rotated = _rotate_phases(states, phases).reshape(len(shifts), -1, 2, 2)
        states = _apply(2, rotated, half, relax, shifts, rate_fn, step)[:, -1]
        accumulator.add(weights, states[..., 1, 1].real.reshape(len(shifts), len(lock_times), len(phases)))

    populations = np.clip(accumulator.result()[0], 0.0, 1.0)
    fringes = [fit_sinusoid(phi_grid, row[:len(phi_grid)]) for row in populations]
    fit_ok = np.array([fit.success for fit in fringes])
    visibility = np.array([min(fit['visibility'], 1.0) if fit.success else 0.0 for fit in fringes])
    if not fit_ok.all():
        logging.warning('Fringe fit failed for %d lock times' % (~fit_ok).sum())

    decay = fit_exponential((lock_times[fit_ok], visibility[fit_ok]))
    logging.debug('Spin lock at %.6g MHz decays with %s' % (omega_lock, decay.params))
    return SpinLockResult(
        lock_times, phi_grid, populations[:, :len(phi_grid)], visibility, fit_ok,
        populations[:, len(phi_grid):], decay,
        _metadata(ensemble, omega_lock=omega_lock, omega_pulse=omega_pulse))
