import os

TOOL_VERSION = '1.0.0'

HOME_PATH = os.path.expanduser('~')
XDG_CACHE_DIR = os.getenv('XDG_CACHE_HOME', os.path.join(HOME_PATH, '.cache'))

APP_PATH = os.path.dirname(os.path.abspath(__file__))
PRESETS_PATH = os.path.join(APP_PATH, 'assets/presets')

LOG_FILE_COUNT = 1
LOG_FILE_MAX_SIZE = 1000*200 # 0.2 mb
LOG_FILE_DATE_FORMAT = '%m-%d-%Y %I:%M:%S'
LOG_FILE_FORMAT = '[%(asctime)s] %(levelname)s:%(message)s'
LOG_FILE_PATH = os.path.join(XDG_CACHE_DIR, 'optispin.log')

# Frequencies are ordinary MHz, times ns, rates 1/us.
UNIT_CONVENTION = 'frequency=MHz(ordinary) time=ns rate=1/us phase=rad power=uW'

# Drive-induced relaxation, Gamma_1 = alpha * Omega
DEFAULT_ALPHA = 2.7e-2
# Hahn-echo coherence rate, 1/(2.8 us)
DEFAULT_GAMMA2 = 1.0 / 2.8
DEFAULT_SIGMA_OH = 4.8
# MHz of Rabi frequency per uW of Raman power
POWER_TO_RABI_SLOPE = 13.4

DEFAULT_GH_NODES = 31
DEFAULT_MC_SAMPLES = 100000
DEFAULT_STEPS_PER_RADIAN = 40.0
# ensemble members propagated together
ENSEMBLE_CHUNK = 2048
MAX_INTEGRATOR_STEPS = 10**8

TRACE_TOLERANCE = 1e-9
POSITIVITY_TOLERANCE = 1e-9
POSITIVITY_TOLERANCE_TIME_DEPENDENT = 1e-6

FIXED_POINT_TOLERANCE = 1e-6
FIXED_POINT_MAX_ITER = 100
CONVOLUTION_WINDOW = 40.0
RATE_TABLE_POINTS = 513

SPECTRAL_GRID_POINTS = 4096
SPECTRAL_GRID_SPAN = 3.0
MAGIC_ANGLE_GUARD = 1e-12
# points tabulating the quadrupolar angle density on [0, pi/2]
THETA_TABLE_POINTS = 2049
# stand-in width for a fixed growth-axis angle
DEGENERATE_ANGLE_STD = 1e-3
# the grid should reach this multiple of the largest nuclear Zeeman frequency
GRID_COVERAGE = 2.5

VISIBILITY_MIN_SAMPLES = 20
FRINGE_NOISE_FLOOR = 1e-6
# rms residual over data range above which a fit is rejected
FIT_RESIDUAL_THRESHOLD = 0.05

EOM_AMPLITUDE_CEILING = 0.2
RAMAN_ADIABATIC_WARNING = 1e-2

# Shipped bath parameters are ILLUSTRATIVE: chosen to put the Hartmann-Hahn
# features inside the 18-80 MHz window, not measured values.
DEFAULT_SPECIES = {
    'In': {
        'spin': '9/2',
        'count': 1.0e4,
        'a2_mhz2': 0.16,
        'bq_mean_mhz': 0.4,
        'bq_std_mhz': 0.2,
        'theta_std_rad': 0.25,
        'omega_nuc_mhz': 30.8,
    },
    'As': {
        'spin': '3/2',
        'count': 1.0e4,
        'a2_mhz2': 0.95,
        'bq_mean_mhz': 0.8,
        'bq_std_mhz': 0.3,
        'theta_std_rad': 0.25,
        'omega_nuc_mhz': 24.0,
    },
}

ACTIONS = {
    'RABI': 'rabi',
    'RAMSEY': 'ramsey',
    'PHASE_SCAN': 'phase-scan',
    'SPINLOCK': 'spinlock',
    'SPECTRAL_DENSITY': 'spectral-density',
    'RATE_CURVE': 'rate-curve',
    'Q_CURVE': 'q-curve',
    'WAVEFORM': 'waveform',
    'ORACLE': 'oracle',
}

CSV_COLUMNS = {
    'rabi': ('t_ns', 'p_down'),
    'ramsey': ('tau_ns', 'p_down'),
    'phase-scan': ('phi_rad', 'p_down'),
    'spinlock': ('T_ns', 'visibility', 'fit_tau_us'),
    'spinlock-populations': ('T_ns', 'p_down_phi0', 'p_down_phipi'),
    'spectral-density': ('omega_MHz', 'D_MHz'),
    'rate-curve': ('omega_MHz', 'rate_MHz', 'converged'),
    'q-curve': ('omega_MHz', 'Q', 'tau_ns', 'rate_MHz', 'censored'),
    'waveform': ('t_ns', 'value'),
    'spectrum': ('offset_MHz', 'magnitude', 'phase_rad'),
    'oracle': ('check', 'value', 'tolerance', 'passed'),
}
