"""
Two-level electron spin: state types and the master-equation integrator.

Conventions used throughout the package:

* basis order is (|up>, |down>), spin operators are S_i = sigma_i / 2
* Bloch vector x = 2 Re(rho_ud), y = 2 Im(rho_du), z = rho_uu - rho_dd
* frequencies enter in MHz (ordinary) and are multiplied by 2*pi to rad/us,
  rates enter in 1/us unchanged, times enter in ns and are divided by 1000
"""
import math
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .config import (
    DEFAULT_STEPS_PER_RADIAN,
    MAX_INTEGRATOR_STEPS,
    POSITIVITY_TOLERANCE,
    POSITIVITY_TOLERANCE_TIME_DEPENDENT,
    TRACE_TOLERANCE,
)
from .errors import IntegratorError, StiffnessError, UnsupportedRegimeError

TWO_PI = 2.0 * math.pi

IDENTITY = np.eye(2, dtype=complex)
SX = 0.5 * np.array([[0, 1], [1, 0]], dtype=complex)
SY = 0.5 * np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = 0.5 * np.array([[1, 0], [0, -1]], dtype=complex)
SPLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SMINUS = np.array([[0, 0], [1, 0]], dtype=complex)

# A rate function maps (omega_prime MHz, chi rad, t ns) arrays to rates in 1/us.
RateFunction = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class DensityMatrix:
    """
    Electron spin state. Only rho_uu, rho_ud and rho_dd are stored, so
    rho_du = conj(rho_ud) holds by construction.
    """
    uu: float
    ud: complex
    dd: float

    @property
    def du(self):
        return self.ud.conjugate()

    @classmethod
    def from_array(cls, array):
        """
        Builds a density matrix from a 2x2 array, taking its Hermitian part.

        :param array ndarray: the matrix in the (up, down) basis
        :return: the density matrix
        :rType: DensityMatrix
        """
        a = np.asarray(array, dtype=complex)
        return cls(float(a[0, 0].real), complex(0.5 * (a[0, 1] + np.conj(a[1, 0]))), float(a[1, 1].real))

    @classmethod
    def pure(cls, amplitude_up, amplitude_down):
        norm = math.sqrt(abs(amplitude_up)**2 + abs(amplitude_down)**2)
        a, b = amplitude_up / norm, amplitude_down / norm
        return cls(abs(a)**2, complex(a * np.conj(b)), abs(b)**2)

    @classmethod
    def up(cls):
        return cls(1.0, 0j, 0.0)

    @classmethod
    def down(cls):
        return cls(0.0, 0j, 1.0)

    @classmethod
    def mixed(cls):
        return cls(0.5, 0j, 0.5)

    def to_array(self):
        return np.array([[self.uu, self.ud], [self.du, self.dd]], dtype=complex)

    @property
    def trace(self):
        return self.uu + self.dd

    @property
    def purity(self):
        return self.uu**2 + self.dd**2 + 2.0 * abs(self.ud)**2

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.to_array())


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    @property
    def norm(self):
        return math.sqrt(self.x**2 + self.y**2 + self.z**2)


def bloch_from_density(rho):
    """
    Maps a density matrix onto the Bloch sphere.

    :param rho DensityMatrix: the state
    :return: x = 2 Re(rho_ud), y = 2 Im(rho_du), z = rho_uu - rho_dd
    :rType: BlochVector
    """
    return BlochVector(2.0 * rho.ud.real, 2.0 * rho.du.imag, rho.uu - rho.dd)

def density_from_bloch(vector):
    """Inverse of bloch_from_density."""
    return DensityMatrix(
        0.5 * (1.0 + vector.z),
        complex(0.5 * vector.x, -0.5 * vector.y),
        0.5 * (1.0 - vector.z),
    )


@dataclass(frozen=True)
class DriveParams:
    """
    Piecewise-constant Raman drive seen by the electron.

    :param omega float: Rabi frequency in MHz, >= 0
    :param phase float: drive phase in rad, reduced to [0, 2pi)
    :param delta float: two-photon detuning in MHz
    :param overhauser_shift float: quasi-static Overhauser detuning in MHz
    """
    omega: float = 0.0
    phase: float = 0.0
    delta: float = 0.0
    overhauser_shift: float = 0.0

    def __post_init__(self):
        if not self.omega >= 0.0:
            raise ValueError('Rabi frequency must be non-negative, got %r' % self.omega)

        object.__setattr__(self, 'phase', float(self.phase) % TWO_PI)

    @property
    def detuning(self):
        return self.delta + self.overhauser_shift

    @property
    def omega_prime(self):
        return math.hypot(self.omega, self.detuning)


class NuclearRateMode(str, Enum):
    OFF = 'off'
    NON_MARKOVIAN = 'non_markovian'
    SELF_CONSISTENT_MARKOV = 'self_consistent_markov'


@dataclass(frozen=True)
class RelaxationParams:
    """
    Dissipative rates of the electron.

    :param alpha float: drive proportionality of Gamma_1 (Gamma_1 = alpha * Omega)
    :param gamma1_fixed float: fixed Gamma_1 in 1/us, replaces alpha when set
    :param gamma2 float: pure-dephasing rate of the L(S_z) term in 1/us
    :param nuclear_rate_mode NuclearRateMode: which nuclear rate feeds evolve
    """
    alpha: float = 0.0
    gamma1_fixed: Optional[float] = None
    gamma2: float = 0.0
    nuclear_rate_mode: NuclearRateMode = NuclearRateMode.OFF

    def __post_init__(self):
        if self.alpha < 0.0 or self.gamma2 < 0.0:
            raise ValueError('relaxation rates must be non-negative')
        if self.gamma1_fixed is not None:
            if self.gamma1_fixed < 0.0:
                raise ValueError('gamma1_fixed must be non-negative')
            if self.alpha != 0.0:
                raise ValueError('alpha and gamma1_fixed are mutually exclusive')

        object.__setattr__(self, 'nuclear_rate_mode', NuclearRateMode(self.nuclear_rate_mode))

    @classmethod
    def none(cls):
        return cls()

    def gamma1(self, omega):
        """
        :param omega float: Rabi frequency in MHz
        :return: the drive-induced relaxation rate in 1/us
        :rType: float
        """
        if self.gamma1_fixed is not None:
            return self.gamma1_fixed

        return self.alpha * abs(omega)


@dataclass(frozen=True)
class DressedAngle:
    """Mixing angle chi of the dressed states, sin(chi) = Omega/Omega'."""
    chi: float

    @property
    def sin(self):
        return math.sin(self.chi)

    @property
    def cos(self):
        return math.cos(self.chi)

def dressed_angle(omega, detuning):
    """
    :param omega float: Rabi frequency in MHz
    :param detuning float: longitudinal detuning in MHz
    :return: the mixing angle in [0, pi]
    :rType: DressedAngle
    """
    return DressedAngle(math.atan2(abs(omega), detuning))


@dataclass(frozen=True)
class StepControl:
    """
    Fixed-step RK4 control. The step is 1/(steps_per_radian * fastest rate),
    never larger than the sample spacing or max_step_ns.
    """
    steps_per_radian: float = DEFAULT_STEPS_PER_RADIAN
    max_step_ns: Optional[float] = None


@dataclass(frozen=True)
class Trajectory:
    times_ns: np.ndarray
    states: np.ndarray

    def __len__(self):
        return len(self.times_ns)

    def __getitem__(self, index):
        return DensityMatrix.from_array(self.states[index])

    @property
    def populations_down(self):
        return self.states[:, 1, 1].real.copy()

    @property
    def populations_up(self):
        return self.states[:, 0, 0].real.copy()

    @property
    def final(self):
        return self[-1]


def _kron(a, b):
    a, b = np.broadcast_arrays(a, b)
    return np.einsum('...ij,...kl->...ikjl', a, b).reshape(a.shape[:-2] + (4, 4))

def _hamiltonian_super(h):
    return -1j * (_kron(h, IDENTITY) - _kron(IDENTITY, np.swapaxes(h, -1, -2)))

def _dissipator_super(c):
    c_dag = np.conj(np.swapaxes(c, -1, -2))
    cdc = c_dag @ c
    return _kron(c, np.conj(c)) - 0.5 * _kron(cdc, IDENTITY) - 0.5 * _kron(IDENTITY, np.swapaxes(cdc, -1, -2))

def _phase_rotation(phase):
    return np.diag([np.exp(-0.5j * phase), np.exp(0.5j * phase)])

def hamiltonian(drive, shifts):
    """
    Rotating-frame Hamiltonian in rad/us for each Overhauser shift.

    :param drive DriveParams: the drive, its own overhauser_shift is added to shifts
    :param shifts ndarray: extra Overhauser shifts in MHz
    :return: stacked 2x2 Hamiltonians
    :rType: ndarray
    """
    shifts = np.atleast_1d(np.asarray(shifts, dtype=float))
    transverse = TWO_PI * drive.omega * (math.cos(drive.phase) * SX + math.sin(drive.phase) * SY)
    longitudinal = TWO_PI * (drive.detuning + shifts)
    return transverse[None, :, :] + longitudinal[:, None, None] * SZ[None, :, :]

def generator(drive, relax, shifts):
    """Liouvillian without the nuclear term, one 4x4 block per shift."""
    liouvillian = _hamiltonian_super(hamiltonian(drive, shifts))
    gamma1 = relax.gamma1(drive.omega)
    if gamma1 > 0.0:
        liouvillian = liouvillian + gamma1 * (_dissipator_super(SPLUS) + _dissipator_super(SMINUS))
    if relax.gamma2 > 0.0:
        liouvillian = liouvillian + relax.gamma2 * _dissipator_super(SZ)

    return liouvillian

def nuclear_dissipator(drive, shifts):
    """
    The L(S_chi) + L(S_chi^dagger) superoperator per shift, with
    S_chi = S_x cos(chi) + i S_y + S_z sin(chi) rotated by the drive phase.

    :return: (superoperators, omega_prime in MHz, chi in rad)
    :rType: tuple
    """
    shifts = np.atleast_1d(np.asarray(shifts, dtype=float))
    detuning = drive.detuning + shifts
    omega_prime = np.hypot(drive.omega, detuning)
    chi = np.arctan2(drive.omega, detuning)
    s_chi = (np.cos(chi)[:, None, None] * SX + 1j * SY[None, :, :]
             + np.sin(chi)[:, None, None] * SZ)
    u = _phase_rotation(drive.phase)
    s_chi = u @ s_chi @ np.conj(u.T)
    s_chi_dag = np.conj(np.swapaxes(s_chi, -1, -2))
    return _dissipator_super(s_chi) + _dissipator_super(s_chi_dag), omega_prime, chi

def _rk4_operator(liouvillian, h):
    hl = h * liouvillian
    eye = np.broadcast_to(np.eye(4, dtype=complex), hl.shape)
    hl2 = hl @ hl
    hl3 = hl2 @ hl
    return eye + hl + hl2 / 2.0 + hl3 / 6.0 + (hl3 @ hl) / 24.0

def _rate_table(rate_fn, omega_prime, chi, t_ns):
    rates = rate_fn(omega_prime[:, None], chi[:, None], np.asarray(t_ns, dtype=float)[None, :])
    return np.broadcast_to(np.asarray(rates, dtype=float), (len(omega_prime), len(t_ns)))

def _check_states(vectors, tolerance, time_ns):
    states = vectors.reshape(vectors.shape[:-1] + (2, 2))
    states = 0.5 * (states + np.conj(np.swapaxes(states, -1, -2)))
    trace = states[..., 0, 0].real + states[..., 1, 1].real
    worst = float(np.max(np.abs(trace - 1.0)))
    if worst > TRACE_TOLERANCE:
        raise IntegratorError('trace drifted by %.3g at t=%.6g ns' % (worst, time_ns))

    lowest = float(np.min(np.linalg.eigvalsh(states)))
    if lowest < -tolerance:
        raise IntegratorError(
            'negative eigenvalue %.3g at t=%.6g ns' % (lowest, time_ns), min_eigenvalue=lowest)

    return states

def _normalize_initial(rho0, batch):
    if isinstance(rho0, DensityMatrix):
        rho0 = rho0.to_array()
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.ndim == 2:
        rho0 = np.broadcast_to(rho0, (batch, 1, 2, 2))
    elif rho0.ndim == 3:
        rho0 = rho0[:, None, :, :]
    if rho0.shape[0] != batch:
        raise ValueError('expected %d initial states, got %d' % (batch, rho0.shape[0]))

    return np.array(rho0.reshape(batch, rho0.shape[1], 4))

def evolve_batch(rho0, drive, relax, shifts, duration, times=None, rate_fn=None, step=None):
    """
    Integrates the master equation for a batch of Overhauser shifts.

    :param rho0 DensityMatrix|ndarray: a single state, one per shift (B,2,2)
        or several per shift (B,M,2,2)
    :param drive DriveParams: the drive, common to the batch
    :param relax RelaxationParams: Gamma_1 / Gamma_2 settings
    :param shifts ndarray: Overhauser shifts in MHz, one per batch member
    :param duration float: total time in ns
    :param times ndarray: sample times in ns within [0, duration]
    :param rate_fn callable: nuclear rate function, None disables the term
    :param step StepControl: step-size control
    :return: states of shape (B, len(times), 2, 2) or (B, len(times), M, 2, 2)
    :rType: ndarray
    """
    if duration < 0.0:
        raise ValueError('duration must be non-negative, got %r' % duration)

    step = step or StepControl()
    shifts = np.atleast_1d(np.asarray(shifts, dtype=float))
    batch = len(shifts)
    input_rank = 2 if isinstance(rho0, DensityMatrix) else np.ndim(rho0)
    vectors = _normalize_initial(rho0, batch)

    times = np.array([0.0, duration] if times is None else times, dtype=float)
    if np.any(np.diff(times) < 0.0) or times[0] < 0.0 or times[-1] > duration * (1.0 + 1e-12) + 1e-12:
        raise ValueError('sample times must be sorted within [0, duration]')

    liouvillian = generator(drive, relax, shifts)
    nuclear = rate_fn is not None and drive.omega > 0.0
    time_dependent = nuclear and getattr(rate_fn, 'time_dependent', True)
    scale = np.hypot(drive.omega, drive.detuning + shifts).max() * TWO_PI
    scale = max(scale, relax.gamma1(drive.omega), relax.gamma2)

    if nuclear:
        dissipator, omega_prime, chi = nuclear_dissipator(drive, shifts)
        if not time_dependent:
            rates = _rate_table(rate_fn, omega_prime, chi, [0.0])[:, 0]
            liouvillian = liouvillian + rates[:, None, None] * dissipator
            scale = max(scale, float(np.max(np.abs(rates))))
        else:
            sampled = _rate_table(rate_fn, omega_prime, chi, np.linspace(0.0, duration, 33))
            scale = max(scale, float(np.max(np.abs(sampled))))

    h_max = math.inf if scale == 0.0 else 1.0 / (step.steps_per_radian * scale)
    if step.max_step_ns is not None:
        h_max = min(h_max, step.max_step_ns / 1000.0)

    tolerance = POSITIVITY_TOLERANCE_TIME_DEPENDENT if time_dependent else POSITIVITY_TOLERANCE
    samples = []
    powers = {}
    t_now = 0.0
    total_steps = 0
    for t_sample in times:
        dt = (t_sample - t_now) / 1000.0
        if dt > 0.0:
            n_sub = max(1, int(math.ceil(dt / h_max - 1e-9))) if math.isfinite(h_max) else 1
            h = dt / n_sub
            total_steps += n_sub
            if total_steps > MAX_INTEGRATOR_STEPS or h < 1e-15:
                raise StiffnessError('step size %.3g us underflows over %.6g ns' % (h, duration))

            if not time_dependent:
                key = (n_sub, round(h, 15))
                if key not in powers:
                    powers[key] = np.linalg.matrix_power(_rk4_operator(liouvillian, h), n_sub)
                vectors = np.einsum('bij,bmj->bmi', powers[key], vectors)
            else:
                stage_times = t_now + 1000.0 * h * 0.5 * np.arange(2 * n_sub + 1)
                rates = _rate_table(rate_fn, omega_prime, chi, stage_times)
                for k in range(n_sub):
                    l1 = liouvillian + rates[:, 2*k, None, None] * dissipator
                    l2 = liouvillian + rates[:, 2*k + 1, None, None] * dissipator
                    l4 = liouvillian + rates[:, 2*k + 2, None, None] * dissipator
                    k1 = np.einsum('bij,bmj->bmi', l1, vectors)
                    k2 = np.einsum('bij,bmj->bmi', l2, vectors + 0.5 * h * k1)
                    k3 = np.einsum('bij,bmj->bmi', l2, vectors + 0.5 * h * k2)
                    k4 = np.einsum('bij,bmj->bmi', l4, vectors + h * k3)
                    vectors = vectors + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t_now = t_sample

        samples.append(_check_states(vectors, tolerance, t_sample))

    logging.debug('Evolved %d members over %.6g ns in %d steps' % (batch, duration, total_steps))
    states = np.stack(samples, axis=1)
    if input_rank < 4:
        states = states[:, :, 0]

    return states

def evolve(rho0, drive, relax, duration, rate_fn=None, times=None, step=None):
    """
    Evolves one electron under the drive of the rotating-frame master
    equation with Gamma_1, Gamma_2 and the optional nuclear dissipator.

    :param rho0 DensityMatrix: the initial state
    :param drive DriveParams: drive parameters including the Overhauser shift
    :param relax RelaxationParams: relaxation rates
    :param duration float: evolution time in ns
    :param rate_fn callable: nuclear rate Gamma(Omega', chi, t), see relaxation
    :param times ndarray: sample grid in ns, defaults to [0, duration]
    :param step StepControl: step-size control
    :return: the sampled trajectory
    :rType: Trajectory
    """
    states = evolve_batch(rho0, drive, relax, [0.0], duration, times, rate_fn, step)[0]
    times = np.array([0.0, duration] if times is None else times, dtype=float)
    times.setflags(write=False)
    states.setflags(write=False)
    return Trajectory(times, states)

def analytic_rabi(omega, gamma1, t):
    """
    Closed-form upper-state population of a resonantly driven spin with
    symmetric drive-induced relaxation, starting in |up>.

    :param omega float: Rabi frequency in MHz
    :param gamma1 float: relaxation rate in 1/us
    :param t float|ndarray: time in ns
    :return: rho_uu(t)
    :rType: float|ndarray
    """
    omega_ang = TWO_PI * omega
    if 2.0 * omega_ang <= gamma1:
        raise UnsupportedRegimeError(
            'overdamped drive (2*Omega=%.6g rad/us <= Gamma_1=%.6g 1/us)' % (2.0 * omega_ang, gamma1))

    t_us = np.asarray(t, dtype=float) / 1000.0
    if np.any(t_us < 0.0):
        raise ValueError('time must be non-negative')

    omega_tilde = math.sqrt(4.0 * omega_ang**2 - gamma1**2)
    envelope = np.exp(-1.5 * gamma1 * t_us)
    phase = 0.5 * omega_tilde * t_us
    return 0.5 * (1.0 + envelope * (np.cos(phase) - gamma1 / omega_tilde * np.sin(phase)))

def rotate_about_z(rho, angle):
    """Applies exp(-i angle S_z) to a density matrix."""
    u = _phase_rotation(angle)
    return DensityMatrix.from_array(u @ rho.to_array() @ np.conj(u.T))
