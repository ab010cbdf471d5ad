"""
Experiment pipelines behind the command line: each action turns a RunConfig
into CSV files, a manifest with checksums and a summary.
"""
import os
import csv
import json
import math
import time
import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, trapezoid

from .analysis import (
    fit_ramsey_gaussian,
    fit_sinusoid,
    one_over_e_time,
    pi_time,
    pi_fidelity,
    pi_fidelity_from_trace,
    q_factor,
    sigma_from_t2star,
    visibility_per_pi,
)
from .bath import default_grid, monte_carlo_spectral_density, polar_angle_density, spectral_density
from .config import ACTIONS, CSV_COLUMNS, TOOL_VERSION, UNIT_CONVENTION
from .errors import FitError, OptispinError, PipelineError, UndersampledError
from .relaxation import model_q_curve, nuclear_rate_function, rate_curve
from .response import ErrorMessage
from .sequence import run_phase_scan, run_rabi, run_ramsey, run_spinlock
from .spin import DensityMatrix, DriveParams, NuclearRateMode, RelaxationParams, StepControl, analytic_rabi, evolve
from .waveform import (
    MicrowaveWaveform,
    OpticalField,
    RamanParams,
    effective_esr_rabi,
    modulate,
    power_to_rabi,
    sideband_relative_phase,
    sideband_spectrum,
    synth_quadrature,
    two_photon_detuning,
)

MANIFEST_FILE = 'manifest.txt'
CONFIG_FILE = 'config.ini'
ERROR_FILE = 'error.json'


@dataclass(frozen=True)
class Output:
    """
    One CSV table: file stem, column schema key and rows. A fit report, when
    given, is written next to the table as <name>.fit.json.
    """
    name: str
    columns: str
    rows: list
    fit: dict = None


@dataclass
class RunResult:
    """
    :param action str: the experiment kind
    :param files dict: output name -> path
    :param summary dict: scalar results of the pipeline
    :param passed bool: False when an oracle check failed
    """
    action: str
    files: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    passed: bool = True

    def as_data(self):
        return {'files': self.files, 'summary': self.summary, 'passed': self.passed}


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)

    return value

def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))

    return value

def write_csv(path, columns, rows, config_hash):
    """
    Writes an RFC-4180 table with LF line endings, preceded by comment lines
    carrying the config hash and the unit convention.
    """
    with open(path, 'w', newline='') as f:
        f.write('# optispin %s\n' % TOOL_VERSION)
        f.write('# config_hash=%s\n' % config_hash)
        f.write('# units: %s\n' % UNIT_CONVENTION)
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(value) for value in row])

    logging.debug('Wrote %d rows to %s' % (len(rows), path))

def write_fit(path, fit, config_hash):
    """Writes a fit report as a JSON sidecar of its table."""
    record = {'tool_version': TOOL_VERSION, 'config_hash': config_hash, 'fit': _plain(fit)}
    with open(path, 'w', newline='') as f:
        f.write(json.dumps(record, sort_keys=True, indent=2) + '\n')

def file_checksum(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(65536), b''):
            digest.update(chunk)

    return digest.hexdigest()

def write_manifest(path, config, files, wall_clock):
    """Flat key=value manifest: version, config hash, checksums and timing."""
    lines = [
        'tool_version=%s' % TOOL_VERSION,
        'config_hash=%s' % config.config_hash(),
        'kind=%s' % config.kind,
        'seed=%d' % config.seed,
    ]
    for name in sorted(files):
        lines.append('checksum.%s=%s' % (os.path.basename(files[name]), file_checksum(files[name])))
    lines.append('wall_clock_s=%.3f' % wall_clock)
    with open(path, 'w', newline='') as f:
        f.write('\n'.join(lines) + '\n')

def read_manifest(path):
    with open(path, 'r') as f:
        return dict(line.rstrip('\n').split('=', 1) for line in f if '=' in line)

def write_error(directory, action, error):
    """Writes the structured error record to <directory>/error.json."""
    message = ErrorMessage(action, error)
    try:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, ERROR_FILE), 'w') as f:
            f.write(message.to_json() + '\n')
    except OSError as e:
        logging.error('Could not write error record to %s: %s' % (directory, e))

    return message


def _times(config):
    grid = config.values['grid']
    return np.linspace(grid['t_start_ns'], grid['t_stop_ns'], grid['t_points'])

def _phases(config):
    return np.linspace(0.0, 2.0 * math.pi, config.get('grid', 'phi_points'), endpoint=False)

def _omegas(config):
    grid = config.values['grid']
    return np.linspace(grid['omega_start_mhz'], grid['omega_stop_mhz'], grid['omega_points'])

def _density(config, omega_max=None, points=None):
    species = config.species()
    omega_max = config.get('bath', 'omega_max_mhz') or omega_max
    grid = default_grid(species, omega_max, points or config.get('bath', 'grid_points'))
    return spectral_density(species, grid)

def _rate_function(config, relax, omega, duration):
    if relax.nuclear_rate_mode is NuclearRateMode.OFF:
        return None, None

    density = _density(config, omega)
    return nuclear_rate_function(relax, density, omega, config.get('ensemble', 'sigma_oh_mhz'), duration)

def _rabi_metrics(trace, omega):
    """Q, 1/e time and pi fidelity of a resonant Rabi trace, if it resolves them."""
    metrics = {'p_down_at_pi': pi_fidelity_from_trace(trace, omega)}
    try:
        tau = one_over_e_time(visibility_per_pi(trace, omega))
    except UndersampledError as e:
        logging.warning('Skipping Q extraction: %s' % e)
        return metrics

    q = q_factor(tau, omega)
    metrics.update({'tau_ns': tau.tau_ns, 'censored': tau.censored, 'q': q})
    if q > 0.0:
        metrics['pi_fidelity'] = pi_fidelity(q)

    return metrics


def run_rabi_action(config):
    relax, ensemble, step = config.relaxation(), config.ensemble(), config.step()
    omega, delta = config.get('drive', 'omega_mhz'), config.get('drive', 'delta_mhz')
    times = _times(config)
    rate_fn, report = _rate_function(config, relax, omega, float(times[-1]))
    trace = run_rabi(omega, delta, times, relax, ensemble, rate_fn, step)
    summary = {'omega_mhz': omega, 'delta_mhz': delta}
    if omega > 0.0:
        summary.update(_rabi_metrics(trace, omega))
    if report is not None:
        summary['nuclear_rate_per_us'] = report.rate

    return [Output('rabi', 'rabi', trace.rows())], summary

def run_ramsey_action(config):
    relax, ensemble, step = config.relaxation(), config.ensemble(), config.step()
    omega_pulse = config.get('drive', 'omega_pulse_mhz') or config.get('drive', 'omega_mhz')
    final_phase = config.get('drive', 'final_phase_rad')
    times = _times(config)
    rate_fn, _ = _rate_function(config, relax, omega_pulse, float(times[-1]) + pi_time(omega_pulse))
    result = run_ramsey(omega_pulse, times, final_phase, relax, ensemble,
                        config.get('drive', 'delta_mhz'), rate_fn, step)
    fit = fit_ramsey_gaussian(result)
    summary = {'omega_pulse_mhz': omega_pulse, 'final_phase_rad': final_phase, 'fit': fit.as_dict()}
    if fit.success:
        summary['sigma_oh_mhz_fitted'] = sigma_from_t2star(fit['t2star'])

    return [Output('ramsey', 'ramsey', result.rows(), fit.as_dict())], summary

def run_phase_scan_action(config):
    relax, ensemble, step = config.relaxation(), config.ensemble(), config.step()
    omega_pulse = config.get('drive', 'omega_pulse_mhz') or config.get('drive', 'omega_mhz')
    phases = _phases(config)
    rate_fn, _ = _rate_function(config, relax, omega_pulse, pi_time(omega_pulse))
    result = run_phase_scan(omega_pulse, phases, config.get('drive', 'delta_mhz'), relax, ensemble, rate_fn, step)
    fit = fit_sinusoid(phases, result.populations)
    summary = {'omega_pulse_mhz': omega_pulse, 'fit': fit.as_dict()}
    return [Output('phase-scan', 'phase-scan', result.rows(), fit.as_dict())], summary

def run_spinlock_action(config):
    relax, ensemble, step = config.relaxation(), config.ensemble(), config.step()
    omega = config.get('drive', 'omega_mhz')
    lock_stop = config.get('grid', 'lock_stop_ns')
    lock_times = np.linspace(0.0, lock_stop, config.get('grid', 'lock_points'))
    rate_fn, _ = _rate_function(config, relax, omega, lock_stop)
    result = run_spinlock(omega, lock_times, _phases(config), relax, ensemble,
                          config.get('drive', 'omega_pulse_mhz'), rate_fn, step)
    if not result.decay.success:
        raise FitError('spin-lock visibility decay could not be fitted: %s' % result.decay.message)

    # same-frequency Rabi drive over the lock window, for comparison
    spacing = 1000.0 / (2.0 * omega) / 20.0
    rabi_times = np.arange(int(math.floor(lock_stop / spacing)) + 1) * spacing
    rabi = run_rabi(omega, 0.0, rabi_times, relax, ensemble, rate_fn, step)
    rabi_metrics = _rabi_metrics(rabi, omega)

    tau_us = result.tau_us
    vis_rows = [(t, v, tau_us) for t, v in zip(result.lock_times.tolist(), result.visibility.tolist())]
    locked_rows = [(t, p[0], p[1]) for t, p in zip(result.lock_times.tolist(), result.locked_populations.tolist())]
    summary = {
        'omega_mhz': omega,
        'tau_us': tau_us,
        'decay': result.decay.as_dict(),
        'failed_fringe_fits': int((~result.fit_ok).sum()),
        'rabi_tau_ns': rabi_metrics.get('tau_ns'),
    }
    if rabi_metrics.get('tau_ns') and math.isfinite(tau_us):
        summary['lock_to_rabi_ratio'] = 1000.0 * tau_us / rabi_metrics['tau_ns']

    outputs = [
        Output('spinlock', 'spinlock', vis_rows, result.decay.as_dict()),
        Output('spinlock-populations', 'spinlock-populations', locked_rows),
        Output('spinlock-rabi', 'rabi', rabi.rows()),
    ]
    return outputs, summary

def run_spectral_density_action(config):
    density = _density(config)
    summary = {'integral': density.integral(), 'species': list(config.get('bath', 'species'))}
    for name, parts in density.components.items():
        summary['integral_%s' % name] = float(trapezoid(parts['D1'] + parts['D2'], density.omega))

    return [Output('spectral-density', 'spectral-density', density.to_rows())], summary

def run_rate_curve_action(config):
    relax = config.relaxation()
    omegas = _omegas(config)
    density = _density(config, float(omegas[-1]))
    curve = rate_curve(density, omegas, relax, config.get('ensemble', 'sigma_oh_mhz'), workers=config.workers)
    summary = {
        'converged': bool(curve.converged.all()),
        'max_iterations': max(report.iterations for report in curve.reports),
        'peak_omega_mhz': float(omegas[int(np.argmax(curve.rate))]),
    }
    return [Output('rate-curve', 'rate-curve', curve.to_rows())], summary

def run_q_curve_action(config):
    relax, ensemble, step = config.relaxation(), config.ensemble(), config.step()
    omegas = _omegas(config)
    density = None
    if relax.nuclear_rate_mode is not NuclearRateMode.OFF:
        density = _density(config, float(omegas[-1]))
    curve = model_q_curve(omegas, density, relax.alpha, relax.gamma2, ensemble.sigma,
                          relax.nuclear_rate_mode, ensemble, step, config.workers)
    summary = {
        'q_min': float(np.min(curve.q)),
        'q_max': float(np.max(curve.q)),
        'omega_at_q_min_mhz': float(omegas[int(np.argmin(curve.q))]),
        'censored_points': int(curve.censored.sum()),
    }
    return [Output('q-curve', 'q-curve', curve.to_rows())], summary

def run_waveform_action(config):
    settings = config.values['waveform']
    microwave = synth_quadrature(settings['a1_v'], settings['a2_v'], settings['frequency_mhz'], settings['periods'])
    amplitude, phase = microwave.fundamental()
    microwave = microwave.hold(settings['oversample'])
    if settings['step_time_ns'] is not None and settings['phase_step_rad'] != 0.0:
        microwave = microwave.phase_stepped(settings['step_time_ns'], settings['phase_step_rad'])

    field = OpticalField.monochromatic(len(microwave.samples), microwave.output_rate)
    modulated = modulate(field, microwave, settings['v_pi_v'])
    sidebands = sideband_spectrum(modulated)
    raman = RamanParams(settings['optical_rabi_mhz'], settings['detuning_ghz'], settings['hole_zeeman_ghz'],
                        settings['electron_zeeman_ghz'])
    summary = {
        'fundamental_amplitude': amplitude,
        'fundamental_phase_rad': phase,
        'sideband_relative_phase_rad': sideband_relative_phase(modulated, settings['frequency_mhz']),
        'effective_rabi_mhz': effective_esr_rabi(raman),
        'calibrated_rabi_mhz': power_to_rabi(settings['power_uw'], settings['power_slope_mhz_per_uw']),
        'two_photon_detuning_mhz': two_photon_detuning(settings['electron_zeeman_ghz'], settings['frequency_mhz']),
    }
    spectrum_rows = [(s.offset, s.magnitude, s.phase) for s in sidebands]
    outputs = [
        Output('waveform', 'waveform', microwave.to_rows()),
        Output('spectrum', 'spectrum', spectrum_rows),
    ]
    return outputs, summary


def _check_analytic_rabi(config):
    omega, gamma1 = 20.0, 0.54
    times = np.linspace(0.0, 790.0, 1581)
    trajectory = evolve(DensityMatrix.up(), DriveParams(omega), RelaxationParams(gamma1_fixed=gamma1), 790.0,
                        times=times, step=StepControl(steps_per_radian=80.0))
    return float(np.max(np.abs(trajectory.populations_up - analytic_rabi(omega, gamma1, times)))), 1e-6

def _check_spectral_density(config):
    species = config.species()
    grid = default_grid(species, points=1024)
    semi = spectral_density(species, grid)
    sampled = monte_carlo_spectral_density(species, grid, config.get('bath', 'mc_samples'), config.seed)
    difference = trapezoid(np.abs(semi.values - sampled.values), grid) / semi.integral()
    return float(difference), 0.05

def _check_polar_normalization(config):
    norms = [quad(polar_angle_density, 0.0, math.pi, args=(s,), limit=200)[0] for s in config.species()]
    return float(max(abs(norm - 1.0) for norm in norms)), 1e-6

def _check_quadrature_phase(config):
    _, phase = synth_quadrature(1.0, math.sqrt(3.0), config.get('waveform', 'frequency_mhz'), 16).fundamental()
    return abs(phase - math.pi / 6.0), 1e-9

def _check_phase_doubling(config):
    frequency = config.get('waveform', 'frequency_mhz')
    periods = 64
    field = OpticalField.monochromatic(periods * 64, 64 * frequency / 1000.0)
    reference = sideband_relative_phase(
        modulate(field, MicrowaveWaveform.sine(0.1, frequency, 0.0, periods)), frequency)
    errors = []
    for step in np.arange(64) * 2.0 * math.pi / 64:
        stepped = MicrowaveWaveform.sine(0.1, frequency, 0.0, periods).phase_stepped(0.0, step)
        measured = sideband_relative_phase(modulate(field, stepped), frequency) - reference
        error = (measured - 2.0 * step + math.pi) % (2.0 * math.pi) - math.pi
        errors.append(abs(error))

    return float(max(errors)), 1e-6

def _check_fixed_point(config):
    relax = config.relaxation()
    omegas = _omegas(config)
    curve = rate_curve(_density(config, float(omegas[-1])), omegas, relax,
                       config.get('ensemble', 'sigma_oh_mhz'), workers=config.workers)
    iterations = max(report.iterations for report in curve.reports)
    return float(iterations if curve.converged.all() else math.inf), 25

ORACLE_CHECKS = (
    ('analytic_rabi', _check_analytic_rabi),
    ('spectral_density_monte_carlo', _check_spectral_density),
    ('polar_density_normalization', _check_polar_normalization),
    ('quadrature_phase', _check_quadrature_phase),
    ('sideband_phase_doubling', _check_phase_doubling),
    ('fixed_point_iterations', _check_fixed_point),
)

def run_oracle_action(config):
    rows = []
    for name, check in ORACLE_CHECKS:
        value, tolerance = check(config)
        passed = value <= tolerance
        if not passed:
            logging.warning('Oracle %s failed: %.6g > %.6g' % (name, value, tolerance))
        rows.append((name, float(value), float(tolerance), passed))

    summary = {name: passed for name, _, _, passed in rows}
    summary['passed'] = all(passed for _, _, _, passed in rows)
    return [Output('oracle', 'oracle', rows)], summary


PIPELINES = {
    ACTIONS['RABI']: run_rabi_action,
    ACTIONS['RAMSEY']: run_ramsey_action,
    ACTIONS['PHASE_SCAN']: run_phase_scan_action,
    ACTIONS['SPINLOCK']: run_spinlock_action,
    ACTIONS['SPECTRAL_DENSITY']: run_spectral_density_action,
    ACTIONS['RATE_CURVE']: run_rate_curve_action,
    ACTIONS['Q_CURVE']: run_q_curve_action,
    ACTIONS['WAVEFORM']: run_waveform_action,
    ACTIONS['ORACLE']: run_oracle_action,
}

def run(config, output_dir=None):
    """
    Runs the configured experiment and writes its CSV tables, the resolved
    configuration and the manifest. On failure an error record is written
    to the output directory and the error is re-raised.

    :param config RunConfig: the resolved configuration
    :param output_dir str: overrides [output] directory
    :rType: RunResult
    """
    directory = output_dir or config.output_dir
    action = config.kind
    started = time.perf_counter()
    try:
        os.makedirs(directory, exist_ok=True)
        logging.debug('Running %s into %s' % (action, directory))
        outputs, summary = PIPELINES[action](config)

        config_path = os.path.join(directory, CONFIG_FILE)
        with open(config_path, 'w', newline='') as f:
            f.write(config.to_text())

        files = {'config': config_path}
        config_hash = config.config_hash()
        for output in outputs:
            path = os.path.join(directory, '%s.csv' % output.name)
            write_csv(path, CSV_COLUMNS[output.columns], output.rows, config_hash)
            files[output.name] = path
            if output.fit is not None:
                fit_path = os.path.join(directory, '%s.fit.json' % output.name)
                write_fit(fit_path, output.fit, config_hash)
                files['%s.fit' % output.name] = fit_path

        write_manifest(os.path.join(directory, MANIFEST_FILE), config, files, time.perf_counter() - started)
    except OptispinError as e:
        logging.error('%s failed: %s' % (action, e))
        write_error(directory, action, e)
        raise
    except Exception as e:
        logging.exception('%s failed unexpectedly' % action)
        error = PipelineError(action, e)
        write_error(directory, action, error)
        raise error from e

    files['manifest'] = os.path.join(directory, MANIFEST_FILE)
    passed = summary.get('passed', True)
    return RunResult(action, files, _plain(summary), passed)
