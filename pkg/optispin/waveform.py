"""
Microwave synthesis and the electro-optic sideband model. The optical
carrier is kept as a complex envelope so only the microwave scale is sampled.
"""
import math
import logging
from dataclasses import dataclass

import numpy as np

from .config import EOM_AMPLITUDE_CEILING, POWER_TO_RABI_SLOPE, RAMAN_ADIABATIC_WARNING
from .errors import GridMismatchError, UndersampledError, UnsupportedRegimeError, WaveformError

# Square-wave levels over one period, sampled at four points.
_CH1_PATTERN = np.array([1.0, 1.0, -1.0, -1.0])
_CH2_PATTERN = np.array([1.0, -1.0, -1.0, 1.0])

SIDEBAND_THRESHOLD = 1e-4
LEAKAGE_TOLERANCE = 1e-6
MIN_SPECTRAL_PERIODS = 16


@dataclass(frozen=True)
class MicrowaveWaveform:
    """
    A real microwave waveform described by its base levels.

    Quadrature waveforms carry four levels per period, each held for a quarter
    period. ``sine`` waveforms are ideal point samples used as references.

    :param levels ndarray: base sample values
    :param frequency float: nominal frequency in MHz
    :param phase float: programmed phase in rad, the phase after any step
    :param a1 float: sine-channel amplitude
    :param a2 float: cosine-channel amplitude
    :param samples_per_period int: base samples per microwave period
    :param oversample int: repeat factor of the zero-order hold
    :param held bool: True when levels are held between samples
    """
    levels: np.ndarray
    frequency: float
    phase: float
    a1: float
    a2: float
    samples_per_period: int = 4
    oversample: int = 1
    held: bool = True

    def __post_init__(self):
        if self.frequency <= 0.0:
            raise WaveformError('microwave frequency must be positive, got %r' % self.frequency)
        if len(self.levels) % self.samples_per_period:
            raise WaveformError('waveform must span a whole number of periods')
        if self.oversample < 1:
            raise WaveformError('oversample must be at least 1, got %r' % self.oversample)

    @classmethod
    def sine(cls, amplitude, frequency, phase, n_periods, samples_per_period=64):
        """
        Ideal samples of amplitude * cos(2 pi f t - phase).

        :return: an unheld reference waveform
        :rType: MicrowaveWaveform
        """
        j = np.arange(n_periods * samples_per_period)
        levels = amplitude * np.cos(2.0 * math.pi * j / samples_per_period - phase)
        return cls(
            levels=levels,
            frequency=float(frequency),
            phase=float(phase),
            a1=amplitude * math.sin(phase),
            a2=amplitude * math.cos(phase),
            samples_per_period=samples_per_period,
            held=False,
        )

    @property
    def n_periods(self):
        return len(self.levels) // self.samples_per_period

    @property
    def sample_rate(self):
        """Base sample rate in samples/ns."""
        return self.samples_per_period * self.frequency / 1000.0

    @property
    def output_rate(self):
        return self.sample_rate * self.oversample

    @property
    def samples(self):
        if self.oversample == 1:
            return self.levels

        return np.repeat(self.levels, self.oversample)

    @property
    def times_ns(self):
        return np.arange(len(self.levels) * self.oversample) / self.output_rate

    def hold(self, oversample):
        """Resamples the zero-order-held signal at ``oversample`` points per level."""
        if not self.held:
            raise WaveformError('only held waveforms can be oversampled')

        return MicrowaveWaveform(
            self.levels, self.frequency, self.phase, self.a1, self.a2,
            self.samples_per_period, int(oversample), True)

    def _with_phase(self, phase):
        if not self.held:
            amplitude = math.hypot(self.a1, self.a2)
            return MicrowaveWaveform.sine(
                amplitude, self.frequency, phase, self.n_periods, self.samples_per_period)

        amplitude = math.hypot(self.a1, self.a2)
        a1 = amplitude * math.sin(phase)
        a2 = amplitude * math.cos(phase)
        return MicrowaveWaveform(
            _quadrature_levels(a1, a2, self.n_periods), self.frequency, phase, a1, a2,
            self.samples_per_period, self.oversample, True)

    def phase_stepped(self, t0_ns, delta_phase):
        """
        Shifts the programmed phase by delta_phase for base samples at or
        after t0_ns.

        :param t0_ns float: step time in ns
        :param delta_phase float: phase step in rad
        :rType: MicrowaveWaveform
        """
        shifted = self._with_phase(self.phase + delta_phase)
        start = int(math.ceil(t0_ns * self.sample_rate - 1e-9))
        start = min(max(start, 0), len(self.levels))
        levels = np.concatenate([self.levels[:start], shifted.levels[start:]])
        logging.debug('Phase step of %.6g rad at sample %d' % (delta_phase, start))
        return MicrowaveWaveform(
            levels, self.frequency, shifted.phase, shifted.a1, shifted.a2,
            self.samples_per_period, self.oversample, self.held)

    def fundamental(self):
        """
        Complex Fourier coefficient of the continuous waveform at the
        microwave frequency, from the DFT of the base levels. For held
        waveforms the hold transfer sinc(x) exp(-i x), x = pi/samples_per_period,
        is applied.

        :return: amplitude and phase of amplitude * cos(2 pi f t - phase)
        :rType: tuple
        """
        n = len(self.levels)
        spectrum = np.fft.fft(self.levels)
        coefficient = spectrum[self.n_periods] / n
        if self.held:
            x = math.pi / self.samples_per_period
            coefficient *= math.sin(x) / x * complex(math.cos(x), -math.sin(x))

        return 2.0 * abs(coefficient), float(np.angle(np.conj(coefficient)))

    def to_rows(self):
        return list(zip(self.times_ns.tolist(), self.samples.tolist()))


def _quadrature_levels(a1, a2, n_periods):
    return np.tile(a1 * _CH1_PATTERN + a2 * _CH2_PATTERN, n_periods)

def synth_quadrature(a1, a2, omega_uw, n_periods):
    """
    Sum of two square waves offset by a quarter period, four samples per
    period. The fundamental is (4/pi) sqrt(a1^2 + a2^2) cos(2 pi f t - phase)
    with tan(phase) = a1/a2.

    :param a1 float: amplitude of the quarter-period delayed channel
    :param a2 float: amplitude of the reference channel
    :param omega_uw float: microwave frequency in MHz
    :param n_periods int: number of periods
    :rType: MicrowaveWaveform
    """
    if a1 < 0.0 or a2 < 0.0:
        raise WaveformError('channel amplitudes must be non-negative, got %r, %r' % (a1, a2))
    if a1 == 0.0 and a2 == 0.0:
        raise WaveformError('at least one channel amplitude must be non-zero')
    if n_periods < 1:
        raise WaveformError('need at least one period, got %r' % n_periods)

    phase = math.atan2(a1, a2)
    logging.debug('Quadrature synthesis: a1=%.6g a2=%.6g phase=%.6g rad' % (a1, a2, phase))
    return MicrowaveWaveform(
        _quadrature_levels(a1, a2, n_periods), float(omega_uw), phase, float(a1), float(a2))


@dataclass(frozen=True)
class OpticalField:
    """
    Complex envelope of the optical field in the frame of the carrier.
    |envelope|^2 = 1 corresponds to an optical Rabi frequency of Omega_L.

    :param envelope ndarray: complex samples
    :param sample_rate float: samples/ns
    :param carrier_ghz float: carrier frequency, bookkeeping only
    """
    envelope: np.ndarray
    sample_rate: float
    carrier_ghz: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.envelope)):
            raise WaveformError('optical envelope contains non-finite samples')
        if self.sample_rate <= 0.0:
            raise WaveformError('sample rate must be positive, got %r' % self.sample_rate)

    @classmethod
    def monochromatic(cls, n_samples, sample_rate, amplitude=1.0, carrier_ghz=0.0):
        return cls(np.full(n_samples, complex(amplitude)), float(sample_rate), carrier_ghz)

    @property
    def duration_ns(self):
        return len(self.envelope) / self.sample_rate

    def power(self):
        return float(np.mean(np.abs(self.envelope)**2))

    def window(self, start_ns, stop_ns=None):
        start = int(round(start_ns * self.sample_rate))
        stop = len(self.envelope) if stop_ns is None else int(round(stop_ns * self.sample_rate))
        return OpticalField(self.envelope[start:stop], self.sample_rate, self.carrier_ghz)


def modulate(envelope_in, v_in, v_pi=1.0, ceiling=EOM_AMPLITUDE_CEILING):
    """
    Linear EOM response around the transmission minimum, E_out = V_in * E_in.

    :param envelope_in OpticalField: input field
    :param v_in MicrowaveWaveform: drive voltage on the same sample grid
    :param v_pi float: half-wave voltage
    :param ceiling float: largest allowed |V_in|/V_pi
    :rType: OpticalField
    """
    samples = v_in.samples
    if len(samples) != len(envelope_in.envelope) or \
            not math.isclose(v_in.output_rate, envelope_in.sample_rate, rel_tol=1e-12):
        raise GridMismatchError(
            'field has %d samples at %.6g/ns, waveform %d at %.6g/ns' % (
                len(envelope_in.envelope), envelope_in.sample_rate,
                len(samples), v_in.output_rate))

    peak = float(np.max(np.abs(samples))) / v_pi
    if peak > ceiling:
        raise WaveformError('drive amplitude %.3g V_pi exceeds the linear ceiling %.3g' % (peak, ceiling))

    return OpticalField(envelope_in.envelope * samples, envelope_in.sample_rate, envelope_in.carrier_ghz)


@dataclass(frozen=True)
class Sideband:
    offset: float
    magnitude: float
    phase: float


def full_spectrum(field):
    """
    :return: offsets in MHz and Fourier coefficients fft(envelope)/N
    :rType: tuple
    """
    n = len(field.envelope)
    coefficients = np.fft.fft(field.envelope) / n
    offsets = np.fft.fftfreq(n, d=1.0 / field.sample_rate) * 1000.0
    return offsets, coefficients

def sideband_spectrum(field, threshold=SIDEBAND_THRESHOLD, leakage_tolerance=LEAKAGE_TOLERANCE):
    """
    Spectral lines of the field with magnitude above threshold times the
    strongest line, sorted by decreasing magnitude. Phases are relative to the
    first sample in the carrier frame. Power outside the lines above
    leakage_tolerance is logged as a warning.

    :param field OpticalField: the modulated field
    :return: sidebands
    :rType: list
    """
    offsets, coefficients = full_spectrum(field)
    magnitudes = np.abs(coefficients)
    if magnitudes.max() == 0.0:
        return []

    lines = np.nonzero(magnitudes >= threshold * magnitudes.max())[0]
    nonzero = np.abs(offsets[lines])
    nonzero = nonzero[nonzero > 0.0]
    if len(nonzero):
        periods = field.duration_ns * nonzero.min() / 1000.0
        if periods < MIN_SPECTRAL_PERIODS - 1e-9:
            raise UndersampledError(
                'window holds %.3g periods of the lowest sideband, need %d' % (periods, MIN_SPECTRAL_PERIODS))

    total = float(np.sum(magnitudes**2))
    leakage = 1.0 - float(np.sum(magnitudes[lines]**2)) / total
    if leakage > leakage_tolerance:
        logging.warning('Spectral leakage %.3g exceeds tolerance %.3g' % (leakage, leakage_tolerance))

    order = lines[np.argsort(-magnitudes[lines], kind='stable')]
    return [Sideband(float(offsets[k]), float(magnitudes[k]), float(np.angle(coefficients[k]))) for k in order]

def sideband_relative_phase(field, offset):
    """
    :param offset float: sideband offset in MHz
    :return: arg c(-offset) - arg c(+offset), reduced to [0, 2 pi)
    :rType: float
    """
    offsets, coefficients = full_spectrum(field)
    upper = coefficients[np.argmin(np.abs(offsets - offset))]
    lower = coefficients[np.argmin(np.abs(offsets + offset))]
    return float(np.mod(np.angle(lower) - np.angle(upper), 2.0 * math.pi))


@dataclass(frozen=True)
class RamanParams:
    """
    :param optical_rabi float: Omega_L in MHz
    :param detuning float: single-photon detuning in GHz
    :param hole_zeeman float: hole Zeeman splitting in GHz
    :param electron_zeeman float: electron Zeeman splitting in GHz
    :param delta float: two-photon detuning in MHz
    """
    optical_rabi: float
    detuning: float
    hole_zeeman: float = 0.0
    electron_zeeman: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.detuning > 0.0:
            ratio = (self.optical_rabi / (1000.0 * self.detuning))**2
            if ratio > RAMAN_ADIABATIC_WARNING:
                logging.warning('(Omega_L/Delta)^2 = %.3g, excited state is not adiabatically eliminated' % ratio)


def effective_esr_rabi(params):
    """
    Sum of the two Raman paths through the split excited state,
    Omega_L^2/(2(Delta + w_h/2)) + Omega_L^2/(2(Delta - w_h/2)).

    :param params RamanParams: optical parameters
    :return: effective Rabi frequency in MHz
    :rType: float
    """
    detuning = 1000.0 * params.detuning
    half_split = 500.0 * abs(params.hole_zeeman)
    if detuning <= half_split:
        raise UnsupportedRegimeError(
            'detuning %.6g GHz crosses the excited-state resonance at %.6g GHz' % (
                params.detuning, half_split / 1000.0))

    omega_l2 = params.optical_rabi**2
    return omega_l2 / (2.0 * (detuning + half_split)) + omega_l2 / (2.0 * (detuning - half_split))

def power_to_rabi(power_uw, slope=POWER_TO_RABI_SLOPE):
    """:return: Omega in MHz from a linear power calibration"""
    if power_uw < 0.0:
        raise ValueError('optical power must be non-negative, got %r' % power_uw)

    return slope * power_uw

def two_photon_detuning(electron_zeeman, omega_uw):
    """
    :param electron_zeeman float: electron Zeeman splitting in GHz
    :param omega_uw float: microwave frequency in MHz
    :return: delta = w_e - 2 w_uw in MHz
    :rType: float
    """
    return 1000.0 * electron_zeeman - 2.0 * omega_uw
