"""
Run configuration: INI documents read with configparser, validated against
a fixed schema, with defaults applied and the provenance of every value kept.
"""
import os
import re
import hashlib
import logging
import configparser
from dataclasses import dataclass, field

from .bath import NuclearSpeciesConfig
from .config import (
    ACTIONS,
    DEFAULT_ALPHA,
    DEFAULT_GAMMA2,
    DEFAULT_GH_NODES,
    DEFAULT_MC_SAMPLES,
    DEFAULT_SIGMA_OH,
    DEFAULT_SPECIES,
    DEFAULT_STEPS_PER_RADIAN,
    POWER_TO_RABI_SLOPE,
    PRESETS_PATH,
    SPECTRAL_GRID_POINTS,
)
from .errors import ConfigError
from .sequence import EnsembleScheme, OverhauserEnsemble
from .spin import NuclearRateMode, RelaxationParams, StepControl

REQUIRED = object()
SPECIES_PREFIX = 'species.'


@dataclass(frozen=True)
class Option:
    """
    One schema entry.

    :param parse callable: converts the text value
    :param default any: value used when the key is absent, REQUIRED if none
    :param check callable: returns an error message for invalid values
    :param optional bool: an empty value means None
    """
    parse: object
    default: object = REQUIRED
    check: object = None
    optional: bool = False


def _choice(values):
    values = tuple(values)

    def parse(text):
        if text not in values:
            raise ValueError('expected one of %s' % ', '.join(values))
        return text

    return parse

def _names(text):
    return tuple(name.strip() for name in text.split(',') if name.strip())

def _at_least(bound):
    return lambda value: None if value >= bound else 'must be >= %r' % bound

def _positive(value):
    return None if value > 0.0 else 'must be positive'

_non_negative = _at_least(0)

SCHEMA = {
    'experiment': {
        'kind': Option(_choice(ACTIONS.values())),
        'seed': Option(int, 0, _non_negative),
        'description': Option(str, ''),
    },
    'drive': {
        'omega_mhz': Option(float, 16.0, _non_negative),
        'delta_mhz': Option(float, 0.0),
        'omega_pulse_mhz': Option(float, None, _positive, optional=True),
        'final_phase_rad': Option(float, 0.0),
    },
    'grid': {
        't_start_ns': Option(float, 0.0, _non_negative),
        't_stop_ns': Option(float, 1000.0, _positive),
        't_points': Option(int, 1001, _at_least(2)),
        'phi_points': Option(int, 33, _at_least(4)),
        'lock_stop_ns': Option(float, 8000.0, _positive),
        'lock_points': Option(int, 17, _at_least(3)),
        'omega_start_mhz': Option(float, 5.0, _positive),
        'omega_stop_mhz': Option(float, 160.0, _positive),
        'omega_points': Option(int, 40, _at_least(1)),
    },
    'relaxation': {
        'alpha': Option(float, DEFAULT_ALPHA, _non_negative),
        'gamma1_fixed_per_us': Option(float, None, _non_negative, optional=True),
        'gamma2_per_us': Option(float, DEFAULT_GAMMA2, _non_negative),
        'nuclear_rate_mode': Option(_choice(mode.value for mode in NuclearRateMode), NuclearRateMode.OFF.value),
    },
    'ensemble': {
        'sigma_oh_mhz': Option(float, DEFAULT_SIGMA_OH, _non_negative),
        'scheme': Option(_choice(scheme.value for scheme in EnsembleScheme), EnsembleScheme.GAUSS_HERMITE.value),
        'nodes': Option(int, DEFAULT_GH_NODES, _at_least(1)),
        'samples': Option(int, DEFAULT_MC_SAMPLES, _at_least(1)),
        'steps_per_radian': Option(float, DEFAULT_STEPS_PER_RADIAN, _positive),
    },
    'bath': {
        'species': Option(_names, tuple(DEFAULT_SPECIES)),
        'grid_points': Option(int, SPECTRAL_GRID_POINTS, _at_least(16)),
        'omega_max_mhz': Option(float, None, _positive, optional=True),
        'mc_samples': Option(int, DEFAULT_MC_SAMPLES, _at_least(1)),
    },
    'waveform': {
        'a1_v': Option(float, 0.05, _non_negative),
        'a2_v': Option(float, 0.05, _non_negative),
        'v_pi_v': Option(float, 1.0, _positive),
        'frequency_mhz': Option(float, 12250.0, _positive),
        'periods': Option(int, 64, _at_least(16)),
        'oversample': Option(int, 16, _at_least(1)),
        'phase_step_rad': Option(float, 0.0),
        'step_time_ns': Option(float, None, _non_negative, optional=True),
        'power_uw': Option(float, 1.0, _non_negative),
        'power_slope_mhz_per_uw': Option(float, POWER_TO_RABI_SLOPE, _positive),
        'optical_rabi_mhz': Option(float, 3000.0, _positive),
        'detuning_ghz': Option(float, 700.0, _positive),
        'hole_zeeman_ghz': Option(float, 7.0),
        'electron_zeeman_ghz': Option(float, 24.5, _positive),
    },
    'output': {
        'directory': Option(str, 'optispin-output'),
        'workers': Option(int, 1, _at_least(1)),
    },
}

SPECIES_SCHEMA = {
    'spin': Option(str),
    'count': Option(float, check=_non_negative),
    'a2_mhz2': Option(float, check=_non_negative),
    'bq_mean_mhz': Option(float),
    'bq_std_mhz': Option(float, check=_non_negative),
    'theta_std_rad': Option(float, check=_non_negative),
    'omega_nuc_mhz': Option(float, check=_positive),
}

_SECTION_LINE = re.compile(r'^\s*\[([^\]]+)\]')
_KEY_LINE = re.compile(r'^\s*([^=:#;\s][^=:]*?)\s*[=:]')


def _locate(text):
    """Maps sections and (section, key) pairs to their 1-based line numbers."""
    lines = {}
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        header = _SECTION_LINE.match(line)
        if header:
            section = header.group(1).strip()
            lines.setdefault(section, number)
            continue
        key = _KEY_LINE.match(line)
        if key and section is not None and not line[:1].isspace():
            lines.setdefault((section, key.group(1).strip().lower()), number)

    return lines

def _format(value):
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ', '.join(value)

    return str(value)

def _schema_for(section):
    if section.startswith(SPECIES_PREFIX):
        return SPECIES_SCHEMA

    return SCHEMA.get(section)


@dataclass(frozen=True)
class RunConfig:
    """
    A fully resolved run configuration.

    :param values dict: section -> key -> parsed value
    :param provenance dict: (section, key) -> 'file', 'default' or 'override'
    """
    values: dict
    provenance: dict = field(default_factory=dict)

    def get(self, section, key):
        return self.values[section][key]

    @property
    def kind(self):
        return self.get('experiment', 'kind')

    @property
    def seed(self):
        return self.get('experiment', 'seed')

    @property
    def output_dir(self):
        return self.get('output', 'directory')

    @property
    def workers(self):
        return self.get('output', 'workers')

    def relaxation(self):
        fixed = self.get('relaxation', 'gamma1_fixed_per_us')
        return RelaxationParams(
            alpha=0.0 if fixed is not None else self.get('relaxation', 'alpha'),
            gamma1_fixed=fixed,
            gamma2=self.get('relaxation', 'gamma2_per_us'),
            nuclear_rate_mode=self.get('relaxation', 'nuclear_rate_mode'),
        )

    def ensemble(self):
        return OverhauserEnsemble(
            sigma=self.get('ensemble', 'sigma_oh_mhz'),
            scheme=self.get('ensemble', 'scheme'),
            n_nodes=self.get('ensemble', 'nodes'),
            n_samples=self.get('ensemble', 'samples'),
            seed=self.seed,
        )

    def step(self):
        return StepControl(steps_per_radian=self.get('ensemble', 'steps_per_radian'))

    def species(self):
        return [NuclearSpeciesConfig.from_mapping(name, self.values[SPECIES_PREFIX + name])
                for name in self.get('bath', 'species')]

    def sections(self):
        names = list(SCHEMA)
        names.extend(SPECIES_PREFIX + name for name in self.get('bath', 'species'))
        return names

    def to_text(self):
        """
        Canonical serialization: every section and key in schema order,
        including defaults.

        :rType: str
        """
        blocks = []
        for section in self.sections():
            lines = ['[%s]' % section]
            for key in _schema_for(section):
                value = _format(self.values[section][key])
                lines.append('%s = %s' % (key, value) if value else '%s =' % key)
            blocks.append('\n'.join(lines))

        return '\n\n'.join(blocks) + '\n'

    def config_hash(self):
        return hashlib.sha256(self.to_text().encode('utf-8')).hexdigest()

    def with_overrides(self, overrides):
        """Re-parses the canonical text with ``section.key=value`` overrides applied."""
        result = parse_config(self.to_text(), overrides)
        provenance = dict(self.provenance)
        provenance.update({k: v for k, v in result.provenance.items() if v == 'override'})
        return RunConfig(result.values, provenance)


def _split_override(item):
    if '=' not in item:
        raise ConfigError('override %r is not of the form section.key=value' % item)
    target, value = item.split('=', 1)
    if '.' not in target:
        raise ConfigError('override %r does not name a section' % item)
    section, key = target.strip().rsplit('.', 1)
    return section.strip(), key.strip().lower(), value.strip()

def _read(text):
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section='__defaults__')
    try:
        parser.read_string(text)
    except configparser.DuplicateSectionError as e:
        raise ConfigError('duplicate section [%s]' % e.section, section=e.section, line=e.lineno)
    except configparser.DuplicateOptionError as e:
        raise ConfigError('duplicate key %r' % e.option, section=e.section, key=e.option, line=e.lineno)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError('key outside of any section', line=e.lineno)
    except configparser.ParsingError as e:
        line = e.errors[0][0] if e.errors else None
        raise ConfigError('malformed line', line=line)

    return parser

def _convert(section, key, option, raw, line):
    if raw == '' and option.optional:
        return None

    try:
        value = option.parse(raw)
    except ValueError as e:
        raise ConfigError('invalid value %r for %s.%s: %s' % (raw, section, key, e), section, key, line)

    problem = option.check(value) if option.check is not None else None
    if problem is not None:
        raise ConfigError('%s.%s %s, got %r' % (section, key, problem, value), section, key, line)

    return value

def parse_config(text, overrides=None):
    """
    Parses and validates a run configuration.

    :param text str: the INI document
    :param overrides list: 'section.key=value' strings applied over the file
    :return: the resolved configuration
    :rType: RunConfig
    """
    parser = _read(text)
    lines = _locate(text)
    supplied = {section: dict(parser.items(section)) for section in parser.sections()}
    for section, keys in supplied.items():
        schema = _schema_for(section)
        if schema is None:
            raise ConfigError('unknown section [%s]' % section, section=section, line=lines.get(section))
        for key in keys:
            if key not in schema:
                raise ConfigError('unknown key %r in [%s]' % (key, section), section, key, lines.get((section, key)))

    provenance = {}
    for item in overrides or ():
        section, key, value = _split_override(item)
        schema = _schema_for(section)
        if schema is None or key not in schema:
            raise ConfigError('unknown override target %s.%s' % (section, key), section, key)
        supplied.setdefault(section, {})[key] = value
        provenance[(section, key)] = 'override'

    values = {}
    for section, schema in SCHEMA.items():
        values[section] = _resolve(section, schema, supplied.get(section, {}), {}, lines, provenance)

    for name in values['bath']['species']:
        section = SPECIES_PREFIX + name
        defaults = DEFAULT_SPECIES.get(name, {})
        values[section] = _resolve(section, SPECIES_SCHEMA, supplied.get(section, {}), defaults, lines, provenance)

    unused = [s for s in supplied if s.startswith(SPECIES_PREFIX) and s not in values]
    if unused:
        logging.warning('Species sections not listed in [bath] species are ignored: %s' % ', '.join(unused))

    config = RunConfig(values, provenance)
    _validate(config, lines)
    logging.debug('Parsed %s configuration with hash %s' % (config.kind, config.config_hash()))
    return config

def _resolve(section, schema, supplied, defaults, lines, provenance):
    resolved = {}
    for key, option in schema.items():
        line = lines.get((section, key))
        if key in supplied:
            resolved[key] = _convert(section, key, option, supplied[key].strip(), line)
            provenance.setdefault((section, key), 'file')
        elif key in defaults:
            resolved[key] = _convert(section, key, option, str(defaults[key]), line)
            provenance[(section, key)] = 'default'
        elif option.default is REQUIRED:
            raise ConfigError('missing required key %r in [%s]' % (key, section), section, key, lines.get(section))
        else:
            resolved[key] = option.default
            provenance[(section, key)] = 'default'

    return resolved

def _validate(config, lines):
    """Cross-key checks and the domain constructors' own validation."""
    grid = config.values['grid']
    if grid['t_stop_ns'] <= grid['t_start_ns']:
        raise ConfigError('grid.t_stop_ns must exceed grid.t_start_ns', 'grid', 't_stop_ns',
                          lines.get(('grid', 't_stop_ns')))
    if grid['omega_stop_mhz'] < grid['omega_start_mhz']:
        raise ConfigError('grid.omega_stop_mhz must not be below grid.omega_start_mhz', 'grid', 'omega_stop_mhz',
                          lines.get(('grid', 'omega_stop_mhz')))
    if config.get('relaxation', 'gamma1_fixed_per_us') is not None and \
            config.provenance.get(('relaxation', 'alpha')) != 'default' and config.get('relaxation', 'alpha') != 0.0:
        raise ConfigError('relaxation.alpha and relaxation.gamma1_fixed_per_us are mutually exclusive',
                          'relaxation', 'alpha', lines.get(('relaxation', 'alpha')))
    pulsed = config.kind == ACTIONS['SPINLOCK'] or (
        config.kind in (ACTIONS['RAMSEY'], ACTIONS['PHASE_SCAN']) and config.get('drive', 'omega_pulse_mhz') is None)
    if pulsed and config.get('drive', 'omega_mhz') <= 0.0:
        raise ConfigError('%s needs a positive drive to time its pulses' % config.kind, 'drive', 'omega_mhz',
                          lines.get(('drive', 'omega_mhz'), lines.get('drive')))
    if not config.get('bath', 'species'):
        raise ConfigError('[bath] species lists no species', 'bath', 'species', lines.get(('bath', 'species')))

    for section, build in (('relaxation', config.relaxation), ('ensemble', config.ensemble)):
        try:
            build()
        except ValueError as e:
            raise ConfigError(str(e), section=section, line=lines.get(section))

    for name in config.get('bath', 'species'):
        section = SPECIES_PREFIX + name
        try:
            NuclearSpeciesConfig.from_mapping(name, config.values[section])
        except ValueError as e:
            raise ConfigError(str(e), section=section, line=lines.get(section))

def load_config(path, overrides=None):
    """Reads and parses a configuration file."""
    try:
        with open(path, 'r') as f:
            text = f.read()
    except IOError as e:
        raise ConfigError('could not read %s: %s' % (path, e))

    logging.debug('Loaded configuration from %s' % path)
    return parse_config(text, overrides)

def preset_path(name):
    return os.path.join(PRESETS_PATH, '%s.ini' % name)

def list_presets():
    """:return: the names of the shipped presets"""
    return sorted(f[:-4] for f in os.listdir(PRESETS_PATH) if f.endswith('.ini'))

def load_preset(name, overrides=None):
    path = preset_path(name)
    if not os.path.isfile(path):
        raise ConfigError('no preset named %r, available: %s' % (name, ', '.join(list_presets())))

    return load_config(path, overrides)
