import json
import math

import pytest

from optispin.config import TOOL_VERSION, UNIT_CONVENTION
from optispin import runner
from optispin.errors import ConfigError, PipelineError, UnsupportedRegimeError
from optispin.runconfig import load_preset, parse_config
from optispin.runner import (
    ERROR_FILE,
    MANIFEST_FILE,
    file_checksum,
    read_manifest,
    run,
    write_csv,
)

SPECTRAL = '[experiment]\nkind = spectral-density\n[bath]\ngrid_points = 256\n'
RATES = ('[experiment]\nkind = rate-curve\n[grid]\nomega_start_mhz = 20\nomega_stop_mhz = 65\nomega_points = 4\n'
         '[bath]\ngrid_points = 1024\n')
RAMSEY = ('[experiment]\nkind = ramsey\n[drive]\nomega_pulse_mhz = 2000\n[grid]\nt_stop_ns = 150\nt_points = 76\n'
          '[ensemble]\nnodes = 21\n')
PHASE_SCAN = ('[experiment]\nkind = phase-scan\n[drive]\nomega_mhz = 13\ndelta_mhz = 3.5\n[grid]\nphi_points = 16\n'
              '[ensemble]\nnodes = 11\n')
SPINLOCK = ('[experiment]\nkind = spinlock\n[drive]\nomega_mhz = 16\n[grid]\nlock_stop_ns = 2000\nlock_points = 5\n'
            'phi_points = 8\n[ensemble]\nnodes = 11\n')


def read_bytes(path):
    with open(path, 'rb') as f:
        return f.read()


def test_csv_layout(tmp_path):
    path = tmp_path / 'table.csv'
    write_csv(str(path), ('t_ns', 'p_down', 'flag'), [(0.0, 0.1, True), (0.5, 1.0 / 3.0, False)], 'abc')

    lines = path.read_text().split('\n')
    assert lines[0] == '# optispin %s' % TOOL_VERSION
    assert lines[1] == '# config_hash=abc'
    assert lines[2] == '# units: %s' % UNIT_CONVENTION
    assert lines[3] == 't_ns,p_down,flag'
    assert lines[4] == '0.0,0.1,1'
    assert lines[5] == '0.5,%r,0' % (1.0 / 3.0)
    assert b'\r' not in read_bytes(str(path))


def test_spectral_density_run_writes_tables_and_manifest(tmp_path):
    config = parse_config(SPECTRAL)
    result = run(config, str(tmp_path))

    assert result.action == 'spectral-density'
    assert result.passed
    assert set(result.files) == {'config', 'spectral-density', 'manifest'}
    assert result.summary['integral'] > 0.0

    manifest = read_manifest(str(tmp_path / MANIFEST_FILE))
    assert manifest['config_hash'] == config.config_hash()
    assert manifest['kind'] == 'spectral-density'
    assert manifest['seed'] == '0'
    assert manifest['checksum.spectral-density.csv'] == file_checksum(result.files['spectral-density'])
    assert manifest['checksum.config.ini'] == file_checksum(result.files['config'])

    assert parse_config((tmp_path / 'config.ini').read_text()).config_hash() == config.config_hash()
    assert (tmp_path / 'spectral-density.csv').read_text().split('\n')[3] == 'omega_MHz,D_MHz'


def test_repeated_runs_are_byte_identical(tmp_path):
    config = parse_config(SPECTRAL)
    first = run(config, str(tmp_path / 'first'))
    second = run(config, str(tmp_path / 'second'))

    assert read_bytes(first.files['spectral-density']) == read_bytes(second.files['spectral-density'])
    assert read_bytes(first.files['config']) == read_bytes(second.files['config'])


def test_worker_count_does_not_change_results(tmp_path):
    serial = run(parse_config(RATES, ['output.workers=1']), str(tmp_path / 'serial'))
    threaded = run(parse_config(RATES, ['output.workers=3']), str(tmp_path / 'threaded'))

    serial_rows = (tmp_path / 'serial' / 'rate-curve.csv').read_text().split('\n')[3:]
    threaded_rows = (tmp_path / 'threaded' / 'rate-curve.csv').read_text().split('\n')[3:]
    assert serial_rows == threaded_rows
    assert serial.summary['converged']
    assert threaded.summary['max_iterations'] <= 25


def test_waveform_run(tmp_path):
    result = run(load_preset('waveform'), str(tmp_path))

    assert result.summary['fundamental_phase_rad'] == pytest.approx(math.pi / 6.0, abs=1e-9)
    assert result.summary['two_photon_detuning_mhz'] == 0.0
    assert result.summary['calibrated_rabi_mhz'] == pytest.approx(13.4)
    rows = (tmp_path / 'spectrum.csv').read_text().strip().split('\n')[4:]
    offsets = sorted(abs(float(row.split(',')[0])) for row in rows[:2])
    assert offsets == pytest.approx([12250.0, 12250.0])


def test_failed_run_leaves_an_error_record(tmp_path):
    config = load_preset('waveform', ['waveform.detuning_ghz=3.0'])

    with pytest.raises(UnsupportedRegimeError):
        run(config, str(tmp_path))

    record = json.loads((tmp_path / ERROR_FILE).read_text())
    assert record['success'] is False
    assert record['action'] == 'waveform'
    assert record['data']['type'] == 'UnsupportedRegimeError'
    assert 'resonance' in record['error']
    assert not (tmp_path / MANIFEST_FILE).exists()


def test_summary_is_json_serializable(tmp_path):
    result = run(parse_config(SPECTRAL), str(tmp_path))

    assert json.loads(json.dumps(result.as_data()))['passed'] is True


@pytest.mark.slow
def test_rabi_preset_q_factor(tmp_path):
    result = run(load_preset('rabi'), str(tmp_path))

    assert not result.summary['censored']
    assert 45.0 <= result.summary['q'] <= 52.0
    assert result.summary['pi_fidelity'] > 0.98


@pytest.mark.slow
def test_oracle_preset_passes(tmp_path):
    result = run(load_preset('oracle'), str(tmp_path))

    assert result.passed
    rows = (tmp_path / 'oracle.csv').read_text().strip().split('\n')[4:]
    assert len(rows) == 6
    assert all(row.endswith(',1') for row in rows)


@pytest.mark.parametrize('kind', ['ramsey', 'phase-scan', 'spinlock'])
def test_pulsed_experiments_need_a_drive(kind):
    with pytest.raises(ConfigError) as info:
        parse_config('[experiment]\nkind = %s\n[drive]\nomega_mhz = 0\n' % kind)

    assert info.value.key == 'omega_mhz'
    assert info.value.line == 4


def test_pulse_frequency_stands_in_for_a_zero_drive():
    config = parse_config('[experiment]\nkind = ramsey\n[drive]\nomega_mhz = 0\nomega_pulse_mhz = 2000\n')

    assert config.get('drive', 'omega_pulse_mhz') == 2000.0


def test_unexpected_failure_leaves_an_error_record(tmp_path, monkeypatch):
    def divide(config):
        return 1.0 / 0.0

    monkeypatch.setitem(runner.PIPELINES, 'spectral-density', divide)

    with pytest.raises(PipelineError) as info:
        run(parse_config(SPECTRAL), str(tmp_path))

    assert isinstance(info.value.__cause__, ZeroDivisionError)
    record = json.loads((tmp_path / ERROR_FILE).read_text())
    assert record['success'] is False
    assert record['data'] == {'type': 'PipelineError', 'error_type': 'ZeroDivisionError'}
    assert 'division by zero' in record['error']


def test_output_path_that_is_a_file_is_reported(tmp_path):
    blocker = tmp_path / 'taken'
    blocker.write_text('')

    with pytest.raises(PipelineError) as info:
        run(parse_config(SPECTRAL), str(blocker))

    assert info.value.error_type == 'FileExistsError'


@pytest.mark.parametrize('name, text', [
    ('ramsey', RAMSEY),
    ('phase-scan', PHASE_SCAN),
    ('spinlock', SPINLOCK),
])
def test_fit_reports_are_written_next_to_tables(name, text, tmp_path):
    config = parse_config(text)
    result = run(config, str(tmp_path))

    path = tmp_path / ('%s.fit.json' % name)
    assert result.files['%s.fit' % name] == str(path)
    record = json.loads(path.read_text())
    assert record['config_hash'] == config.config_hash()
    assert record['fit']['success'] == result.summary['fit']['success']
    assert 'residual_norm' in record['fit']
    assert read_manifest(str(tmp_path / MANIFEST_FILE))['checksum.%s.fit.json' % name] == file_checksum(str(path))


@pytest.mark.parametrize('kind, text, omega, duration', [
    ('ramsey', RAMSEY, 2000.0, 150.25),
    ('phase-scan', PHASE_SCAN, 13.0, 1000.0 / 26.0),
])
def test_nuclear_rate_reaches_pulsed_experiments(kind, text, omega, duration, tmp_path, monkeypatch, constant_rate):
    calls = []

    def rate_function(config, relax, omega, duration):
        calls.append((omega, duration))
        return constant_rate(0.5), None

    run(parse_config(text), str(tmp_path / 'plain'))
    monkeypatch.setattr(runner, '_rate_function', rate_function)
    run(parse_config(text, ['relaxation.nuclear_rate_mode=self_consistent_markov']),
        str(tmp_path / 'with-rate'))

    assert calls == [(omega, pytest.approx(duration))]
    plain_rows = (tmp_path / 'plain' / ('%s.csv' % kind)).read_text().split('\n')[4:]
    rate_rows = (tmp_path / 'with-rate' / ('%s.csv' % kind)).read_text().split('\n')[4:]
    assert plain_rows != rate_rows
