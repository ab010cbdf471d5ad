import os
import sys
import atexit
import logging
import argparse
import subprocess

from .config import ACTIONS, LOG_FILE_PATH, TOOL_VERSION
from .errors import ConfigError, OptispinError
from .response import ErrorMessage, Message
from .runconfig import list_presets, load_config, load_preset
from .runner import run, write_error
from .utils.logger import setup_logging

parser = argparse.ArgumentParser(description='optispin - optically driven spin qubit simulator')
run_group = parser.add_argument_group('run')
log_group = parser.add_argument_group('logging')
parser.add_argument('action',
        nargs='?',
        default=None,
        metavar='ACTION',
        help="available actions are %s, run (kind taken from the config), watch, presets and log" % ', '.join(ACTIONS.values()))
parser.add_argument('-v', '--version',
        dest='version',
        action='store_true',
        help='displays the current version')
run_group.add_argument('-c', '--config',
        dest='config',
        default=None,
        help='INI run configuration to read')
run_group.add_argument('--preset',
        dest='preset',
        default=None,
        help='loads a shipped preset instead of a configuration file')
run_group.add_argument('--set',
        dest='overrides',
        action='append',
        default=[],
        metavar='SECTION.KEY=VALUE',
        help='overrides a configuration value, may be repeated')
run_group.add_argument('--seed',
        dest='seed',
        type=int,
        default=None,
        help='overrides [experiment] seed')
run_group.add_argument('-o', '--output',
        dest='output',
        default=None,
        help='output directory, overrides [output] directory')
run_group.add_argument('-w', '--workers',
        dest='workers',
        type=int,
        default=None,
        help='threads used for frequency sweeps')
log_group.add_argument('-p', '--print',
        dest='print_mode',
        action='store_true',
        help='writes debugging output to the terminal')
log_group.add_argument('--verbose',
        dest='verbose',
        action='store_true',
        help='logs debugging output')

def open_log_file():
    """Opens the log file in an editor."""
    if os.path.isfile(LOG_FILE_PATH):
        editor = os.getenv('EDITOR', 'vi')
        subprocess.call([editor, LOG_FILE_PATH])
    else:
        print('No log file exists')

def print_version():
    print('v%s' % TOOL_VERSION)

def print_presets():
    for name in list_presets():
        print(name)

def collect_overrides(args, action=None):
    """Turns the flags that mirror config keys into section.key=value overrides."""
    overrides = list(args.overrides)
    if action in ACTIONS.values():
        overrides.append('experiment.kind=%s' % action)
    if args.seed is not None:
        overrides.append('experiment.seed=%d' % args.seed)
    if args.workers is not None:
        overrides.append('output.workers=%d' % args.workers)

    return overrides

def load_run_config(args, action=None):
    overrides = collect_overrides(args, action)
    if args.preset is not None:
        return load_preset(args.preset, overrides)
    if args.config is not None:
        return load_config(args.config, overrides)
    if action in ACTIONS.values():
        return load_preset(action, overrides)

    raise ConfigError('no configuration given, use --config or --preset')

def run_action(args, action):
    """
    Runs one experiment and prints its summary.

    :return: the exit code
    :rType: int
    """
    try:
        config = load_run_config(args, action)
        result = run(config, args.output)
    except OptispinError as e:
        logging.error('%s failed: %s' % (action, e))
        if isinstance(e, ConfigError) and args.output is not None:
            write_error(args.output, action, e)
        message = ErrorMessage(action, e)
        sys.stderr.write(message.to_json() + '\n')
        return 1

    print(Message(result.action, data=result.as_data(), success=result.passed).to_json())
    return 0 if result.passed else 1

def run_watch(args):
    from .watcher import Watcher

    if args.config is None:
        print('watch needs --config')
        return 1

    watcher = Watcher(args.config, collect_overrides(args), args.output)
    atexit.register(watcher.close)
    try:
        watcher.start()
    except KeyboardInterrupt:
        watcher.close()

    return 0

def handle_args(args):
    """Handles CLI arguments."""
    if args.version:
        print_version()
        sys.exit(0)

    if args.action == 'log':
        open_log_file()
        sys.exit(0)

    if args.action == 'presets':
        print_presets()
        sys.exit(0)

    if args.action == 'watch':
        setup_logging(args.verbose, args.print_mode)
        sys.exit(run_watch(args))

    if args.action in ACTIONS.values() or (args.action == 'run' and (args.config or args.preset)):
        setup_logging(args.verbose, args.print_mode)
        sys.exit(run_action(args, args.action))

    # If no action was specified
    parser.print_help()

def main():
    """Application entry point."""
    args = parser.parse_args()
    handle_args(args)

if __name__ == '__main__':
    main()
