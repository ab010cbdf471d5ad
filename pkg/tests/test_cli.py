import json
import logging
from logging.handlers import RotatingFileHandler

import pytest

from optispin import __main__ as cli
from optispin.errors import ConfigError, SegmentError, StiffnessError
from optispin.response import ErrorMessage, Message
from optispin.utils.logger import create_rotating_log, setup_logging
from optispin.watcher import ConfigChangeHandler, Watcher

SPECTRAL = '[experiment]\nkind = spectral-density\n[bath]\ngrid_points = 256\n'


@pytest.fixture(autouse=True)
def quiet_logging(monkeypatch):
    monkeypatch.setattr(cli, 'setup_logging', lambda verbose, print_mode: None)


def invoke(argv):
    with pytest.raises(SystemExit) as info:
        cli.handle_args(cli.parser.parse_args(argv))
    return info.value.code


def test_version(capsys):
    assert invoke(['-v']) == 0
    assert capsys.readouterr().out.strip().startswith('v')


def test_presets_are_listed(capsys):
    assert invoke(['presets']) == 0
    assert 'fig2a' in capsys.readouterr().out.split()


def test_action_runs_config_and_prints_summary(tmp_path, capsys):
    config = tmp_path / 'run.ini'
    config.write_text(SPECTRAL)

    assert invoke(['run', '-c', str(config), '-o', str(tmp_path / 'out')]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary['success'] is True
    assert summary['action'] == 'spectral-density'
    assert (tmp_path / 'out' / 'manifest.txt').exists()


def test_action_name_sets_the_kind(tmp_path, capsys):
    config = tmp_path / 'run.ini'
    config.write_text('[experiment]\nkind = rabi\n[bath]\ngrid_points = 256\n')

    assert invoke(['spectral-density', '-c', str(config), '-o', str(tmp_path / 'out')]) == 0
    assert json.loads(capsys.readouterr().out)['action'] == 'spectral-density'


def test_seed_and_workers_flags_become_overrides():
    args = cli.parser.parse_args(['rabi', '--seed', '5', '-w', '2', '--set', 'drive.omega_mhz=30'])

    assert cli.collect_overrides(args, 'rabi') == [
        'drive.omega_mhz=30', 'experiment.kind=rabi', 'experiment.seed=5', 'output.workers=2']


def test_config_error_is_reported(tmp_path, capsys):
    config = tmp_path / 'run.ini'
    config.write_text('[experiment]\nkind = rabi\n[drive]\nomega = 3\n')

    assert invoke(['run', '-c', str(config), '-o', str(tmp_path / 'out')]) == 1
    err = capsys.readouterr().err
    record = json.loads(err[err.index('{'):])
    assert record['success'] is False
    assert record['data'] == {'type': 'ConfigError', 'section': 'drive', 'key': 'omega', 'line': 4}
    assert json.loads((tmp_path / 'out' / 'error.json').read_text()) == record


def test_unwritable_output_is_reported(tmp_path, capsys):
    config = tmp_path / 'run.ini'
    config.write_text(SPECTRAL)
    taken = tmp_path / 'taken'
    taken.write_text('')

    assert invoke(['run', '-c', str(config), '-o', str(taken)]) == 1
    err = capsys.readouterr().err
    record = json.loads(err[err.index('{\n  "action"'):])
    assert record['success'] is False
    assert record['data'] == {'type': 'PipelineError', 'error_type': 'FileExistsError'}


def test_run_without_config_prints_help(capsys):
    cli.handle_args(cli.parser.parse_args(['run']))

    assert 'usage' in capsys.readouterr().out


def test_message_json():
    message = json.loads(Message('rabi', data={'q': 48.0}).to_json())

    assert message == {'action': 'rabi', 'success': True, 'data': {'q': 48.0}}


def test_error_message_carries_error_details():
    record = ErrorMessage('rabi', SegmentError(2, StiffnessError('step underflow', min_eigenvalue=-0.1))).getMessage()

    assert record['success'] is False
    assert record['data'] == {'type': 'SegmentError', 'index': 2}
    assert record['error'] == 'segment 2: step underflow'


def test_config_error_message_names_its_location():
    error = ConfigError('bad value', section='drive', key='omega_mhz', line=7)

    assert str(error) == 'bad value (line 7, [drive] omega_mhz)'


def test_rotating_log(tmp_path):
    path = tmp_path / 'logs' / 'optispin.log'
    handler = create_rotating_log('optispin-test', logging.WARNING, str(path))
    try:
        logging.getLogger('optispin-test').warning('disk almost full')
        handler.flush()
        assert 'disk almost full' in path.read_text()
    finally:
        logging.getLogger('optispin-test').removeHandler(handler)
        handler.close()


def test_setup_logging_attaches_a_rotating_file(tmp_path):
    root = logging.getLogger()
    before = list(root.handlers)
    level = root.level
    setup_logging(False, False, str(tmp_path / 'optispin.log'))
    try:
        added = [h for h in root.handlers if h not in before]
        assert len(added) == 1
        assert isinstance(added[0], RotatingFileHandler)
    finally:
        for handler in root.handlers[:]:
            if handler not in before:
                root.removeHandler(handler)
                handler.close()
        root.setLevel(level)


def test_watcher_runs_and_reports(tmp_path):
    config = tmp_path / 'run.ini'
    config.write_text(SPECTRAL)
    reports = []
    watcher = Watcher(str(config), output_dir=str(tmp_path / 'out'), report=reports.append)

    assert watcher.run_once().success
    config.write_text('[experiment]\nkind = nonsense\n')
    assert not watcher.run_once().success

    assert watcher.runs == 2
    assert json.loads(reports[1])['data']['type'] == 'ConfigError'


def test_change_handler_filters_by_path(tmp_path):
    calls = []
    handler = ConfigChangeHandler(str(tmp_path / 'run.ini'), lambda: calls.append(1))

    class Event:
        is_directory = False
        event_type = 'modified'

        def __init__(self, path):
            self.src_path = path

    handler.on_modified(Event(str(tmp_path / 'other.ini')))
    handler.on_modified(Event(str(tmp_path / 'run.ini')))
    assert calls == [1]
