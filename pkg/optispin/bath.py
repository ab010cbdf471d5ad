"""
Strain-enabled nuclear spectral density.

Each species contributes D1 (nuclear polarisation change of one, lines at
omega_nuc + (2m+1) Delta_Q) and D2 (change of two, lines at
2 omega_nuc + 4(m+1) Delta_Q) with Delta_Q = B_Q (sin^2 theta - cos^2 theta / 2).
Couplings are in MHz; the stored density is a rate density in 1/us.
"""
import math
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.integrate import quad, quad_vec, trapezoid

from .config import (
    DEFAULT_SPECIES,
    DEGENERATE_ANGLE_STD,
    GRID_COVERAGE,
    MAGIC_ANGLE_GUARD,
    SPECTRAL_GRID_POINTS,
    SPECTRAL_GRID_SPAN,
    THETA_TABLE_POINTS,
)
from .errors import OutOfRangeError

TWO_PI = 2.0 * math.pi
MAGIC_ANGLE = math.atan(1.0 / math.sqrt(2.0))


@dataclass(frozen=True)
class NuclearSpeciesConfig:
    """
    Bath parameters of one nuclear species.

    :param name str: species label, e.g. 'In'
    :param spin float: total nuclear spin I (half-integer or integer)
    :param count float: number of nuclei N
    :param a2 float: mean-square hyperfine coupling <A^2> in MHz^2
    :param bq_mean float: mean quadrupolar coupling B_Q in MHz
    :param bq_std float: standard deviation of B_Q in MHz
    :param theta_std float: std of the quadrupolar polar angle about the growth axis in rad
    :param omega_nuc float: nuclear Zeeman frequency in MHz
    """
    name: str
    spin: float
    count: float
    a2: float
    bq_mean: float
    bq_std: float
    theta_std: float
    omega_nuc: float

    def __post_init__(self):
        object.__setattr__(self, 'spin', float(Fraction(str(self.spin))))
        twice = 2.0 * self.spin
        if twice < 1.0 or abs(twice - round(twice)) > 1e-12:
            raise ValueError('nuclear spin of %s must be a positive half-integer, got %r' % (self.name, self.spin))
        if self.count < 0.0 or self.a2 < 0.0:
            raise ValueError('count and <A^2> of %s must be non-negative' % self.name)
        if self.bq_std < 0.0 or self.theta_std < 0.0:
            raise ValueError('distribution widths of %s must be non-negative' % self.name)
        if not self.omega_nuc > 0.0:
            raise ValueError('nuclear Zeeman frequency of %s must be positive' % self.name)

    @classmethod
    def from_mapping(cls, name, values):
        """Builds a species from config-style keys (spin, count, a2_mhz2, ...)."""
        return cls(
            name=name,
            spin=values['spin'],
            count=float(values['count']),
            a2=float(values['a2_mhz2']),
            bq_mean=float(values['bq_mean_mhz']),
            bq_std=float(values['bq_std_mhz']),
            theta_std=float(values['theta_std_rad']),
            omega_nuc=float(values['omega_nuc_mhz']),
        )

    @property
    def prefactor(self):
        """pi/2 N <A^2> / ((2I+1) omega_nuc^2), shared by every line family."""
        return 0.5 * math.pi * self.count * self.a2 / ((2.0 * self.spin + 1.0) * self.omega_nuc**2)

    def scaled(self, count=1.0, a2=1.0):
        return NuclearSpeciesConfig(
            self.name, self.spin, self.count * count, self.a2 * a2,
            self.bq_mean, self.bq_std, self.theta_std, self.omega_nuc)


def default_species():
    """The shipped (illustrative) In and As species."""
    return [NuclearSpeciesConfig.from_mapping(name, values) for name, values in DEFAULT_SPECIES.items()]


@dataclass(frozen=True)
class SpectralDensity:
    """
    Rate density D(f) in 1/us sampled on an ordinary-frequency grid in MHz.

    :param omega ndarray: strictly increasing grid in MHz
    :param values ndarray: total D
    :param components dict: species name -> {'D1': ndarray, 'D2': ndarray}
    """
    omega: np.ndarray
    values: np.ndarray
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if omega.ndim != 1 or len(omega) < 2 or np.any(np.diff(omega) <= 0.0):
            raise ValueError('spectral grid must be strictly increasing')
        if values.shape != omega.shape:
            raise ValueError('spectral density does not match its grid')
        if np.any(values < 0.0):
            raise ValueError('spectral density must be non-negative')

        object.__setattr__(self, 'omega', omega)
        object.__setattr__(self, 'values', values)

    @classmethod
    def flat(cls, omega, value):
        omega = np.asarray(omega, dtype=float)
        return cls(omega, np.full(omega.shape, float(value)))

    @classmethod
    def zeros(cls, omega):
        return cls.flat(omega, 0.0)

    def __call__(self, f):
        """Linear interpolation of D at f (MHz), refusing to extrapolate."""
        f = np.asarray(f, dtype=float)
        if np.any(f < self.omega[0]) or np.any(f > self.omega[-1]):
            raise OutOfRangeError(
                'frequency outside spectral grid [%.6g, %.6g] MHz' % (self.omega[0], self.omega[-1]))

        return np.interp(f, self.omega, self.values)

    def __add__(self, other):
        if not np.array_equal(self.omega, other.omega):
            raise ValueError('spectral densities live on different grids')

        components = dict(self.components)
        components.update(other.components)
        return SpectralDensity(self.omega, self.values + other.values, components)

    @property
    def spacing(self):
        return float(np.min(np.diff(self.omega)))

    def is_zero(self):
        return not np.any(self.values)

    def integral(self):
        return float(trapezoid(self.values, self.omega))

    def to_rows(self):
        return list(zip(self.omega.tolist(), self.values.tolist()))


def m_plus(I, m):
    """
    Ladder matrix element sqrt(I(I+1) - m(m+1)).

    :param I float: total spin
    :param m float: magnetic quantum number in {-I, ..., I-1}
    :return: the matrix element
    :rType: float
    """
    steps = m + I
    if steps < -1e-12 or m > I - 1.0 + 1e-12 or abs(steps - round(steps)) > 1e-12:
        raise OutOfRangeError('m=%r is not in {-I, ..., I-1} for I=%r' % (m, I))

    return math.sqrt(max(I * (I + 1.0) - m * (m + 1.0), 0.0))

def quadrupolar_factor(theta):
    """sin^2 theta - cos^2 theta / 2, vanishing at the magic angle."""
    return np.sin(theta)**2 - 0.5 * np.cos(theta)**2

def _effective_std(theta_std):
    return theta_std if theta_std > 0.0 else DEGENERATE_ANGLE_STD

@lru_cache(maxsize=None)
def _polar_normalization(theta_std):
    value, _ = quad(lambda x: math.exp(-0.5 * (x / theta_std)**2) * math.sin(x), 0.0, math.pi,
                    points=[theta_std], limit=200)
    return 1.0 / value

def _polar_density(theta, theta_std):
    lower = min(theta, math.pi - theta)
    upper = math.pi - lower
    if upper - lower < 1e-12:
        return 0.0

    norm = _polar_normalization(theta_std)

    # sin^2 x - sin^2 lower = sin(x - lower) sin(upper - x); the square-root
    # endpoint factors are left to the algebraic weight
    def smooth(x):
        ratio = np.sinc((x - lower) / math.pi) * np.sinc((upper - x) / math.pi)
        if ratio <= 0.0:
            # only reached at x = 0 or pi for theta = 0, where the integrand vanishes
            return 0.0
        return norm * math.exp(-0.5 * (x / theta_std)**2) * math.sin(x) / math.sqrt(ratio)

    value, _ = quad(smooth, lower, upper, weight='alg', wvar=(-0.5, -0.5),
                    limit=200, epsabs=1e-14, epsrel=1e-11)
    return abs(math.cos(theta)) * value / math.pi

def polar_angle_density(theta, species):
    """
    Density of the quadrupolar angle theta in [0, pi] relative to the
    in-plane magnetic field, for axes Gaussian-distributed in polar angle
    about the growth axis with uniform azimuth. A zero width is replaced by
    DEGENERATE_ANGLE_STD, which concentrates the mass at theta = 0 and pi.

    :param theta float|ndarray: angle in rad
    :param species NuclearSpeciesConfig|float: species or polar-angle std
    :return: p(theta)
    :rType: float|ndarray
    """
    theta_std = _effective_std(getattr(species, 'theta_std', species))
    if np.ndim(theta) == 0:
        return _polar_density(float(theta), theta_std)

    return np.array([_polar_density(t, theta_std) for t in np.ravel(theta)]).reshape(np.shape(theta))

@lru_cache(maxsize=None)
def _polar_table(theta_std):
    half = np.linspace(0.0, 0.5 * math.pi, THETA_TABLE_POINTS)
    values = np.array([_polar_density(t, theta_std) for t in half])
    theta = np.concatenate([half, math.pi - half[-2::-1]])
    density = np.concatenate([values, values[-2::-1]])
    logging.debug('Tabulated polar angle density for std %.6g rad' % theta_std)
    return theta, density

def sample_polar_angles(species, n, rng):
    """
    Draws quadrupolar angles the way they arise physically: polar angle
    theta' from the growth-axis Gaussian, azimuth uniform, then the angle to
    the field axis folded into [0, pi].

    :param species NuclearSpeciesConfig|float: species or polar-angle std
    :param n int: number of samples
    :param rng Generator: random source
    :return: n angles
    :rType: ndarray
    """
    theta_std = _effective_std(getattr(species, 'theta_std', species))
    polar = np.empty(0)
    while len(polar) < n:
        # Rayleigh proposal, accepted with sin(x)/x to weight by the sphere measure
        proposal = theta_std * np.sqrt(-2.0 * np.log1p(-rng.random(n)))
        keep = (proposal <= math.pi) & (rng.random(n) * proposal <= np.sin(proposal))
        polar = np.concatenate([polar, proposal[keep]])

    polar = polar[:n]
    azimuth = TWO_PI * rng.random(n)
    s = np.sin(polar) * np.cos(azimuth)
    return np.where(s >= 0.0, np.arcsin(s), math.pi + np.arcsin(s))

def _line_families(species):
    """(component, k, coefficient, centre) per m, with the line at centre + k Delta_Q."""
    I = species.spin
    ms = np.arange(-I, I)
    families = []
    for m in ms:
        coefficient = (m_plus(I, m) * (2.0 * m + 1.0))**2
        if coefficient > 0.0:
            families.append(('D1', 2.0 * m + 1.0, coefficient, species.omega_nuc))
    for m in ms[:-1]:
        coefficient = (m_plus(I, m) * m_plus(I, m + 1.0))**2
        families.append(('D2', 4.0 * (m + 1.0), coefficient, 2.0 * species.omega_nuc))

    return families

def _angular_weight(component, theta):
    if component == 'D1':
        return np.sin(2.0 * theta)**2
    return np.cos(theta)**4

def _deposit(grid, positions, weights):
    """Bins delta lines onto the grid as a density."""
    edges = np.concatenate([
        [grid[0] - 0.5 * (grid[1] - grid[0])],
        0.5 * (grid[1:] + grid[:-1]),
        [grid[-1] + 0.5 * (grid[-1] - grid[-2])],
    ])
    histogram, _ = np.histogram(positions, bins=edges, weights=weights)
    return histogram / np.diff(edges)

def _species_density(species, grid):
    theta_table, p_table = _polar_table(_effective_std(species.theta_std))
    families = _line_families(species)
    index = {'D1': 0, 'D2': 1}
    out = np.zeros((2, len(grid)))
    second_moment = species.bq_mean**2 + species.bq_std**2
    step = theta_table[1] - theta_table[0]
    angle_mass = p_table * step

    for component, k, coefficient, centre in families:
        if k == 0.0:
            weight = coefficient * second_moment * trapezoid(p_table * _angular_weight(component, theta_table), theta_table)
            out[index[component]] += _deposit(grid, np.array([centre]), np.array([weight]))
        elif species.bq_std == 0.0:
            positions = centre + k * species.bq_mean * quadrupolar_factor(theta_table)
            weights = coefficient * species.bq_mean**2 * _angular_weight(component, theta_table) * angle_mass
            out[index[component]] += _deposit(grid, positions, weights)

    spread = [f for f in families if f[1] != 0.0]
    if species.bq_std > 0.0 and spread:
        norm = 1.0 / (species.bq_std * math.sqrt(TWO_PI))

        def integrand(theta):
            values = np.zeros((2, len(grid)))
            p = np.interp(theta, theta_table, p_table)
            g = quadrupolar_factor(theta)
            if p == 0.0 or abs(g) < MAGIC_ANGLE_GUARD:
                return values

            for component, k, coefficient, centre in spread:
                b = (grid - centre) / (k * g)
                gaussian = norm * np.exp(-0.5 * ((b - species.bq_mean) / species.bq_std)**2)
                values[index[component]] += (
                    coefficient * p * gaussian * b**2 * _angular_weight(component, theta) / abs(k * g))
            return values

        result, error = quad_vec(
            integrand, 0.0, math.pi, epsrel=1e-6, norm='max',
            points=[MAGIC_ANGLE, 0.5 * math.pi, math.pi - MAGIC_ANGLE])
        logging.debug('Species %s integrated with error estimate %.3g' % (species.name, error))
        out += result

    return TWO_PI * species.prefactor * np.clip(out, 0.0, None)

def default_grid(species, omega_max=None, points=SPECTRAL_GRID_POINTS):
    """
    Uniform grid on [0, max(3 max omega_nuc, 1.25 omega_max)] MHz.

    :param species list: the species
    :param omega_max float: the largest Rabi frequency a sweep will query
    :rType: ndarray
    """
    upper = SPECTRAL_GRID_SPAN * max(s.omega_nuc for s in species)
    if omega_max is not None:
        upper = max(upper, 1.25 * omega_max)

    return np.linspace(0.0, upper, points)

def _check_coverage(species, grid):
    needed = GRID_COVERAGE * max(s.omega_nuc for s in species)
    if grid[0] > 0.0 or grid[-1] < needed:
        logging.warning('Spectral grid [%.6g, %.6g] MHz does not cover [0, %.6g] MHz' % (grid[0], grid[-1], needed))

def spectral_density(species, omega_grid=None):
    """
    Semi-analytic spectral density: for each line family the quadrupolar
    coupling is integrated out against its Gaussian, leaving an adaptive
    integral over the quadrupolar angle. Lines with no quadrupolar shift and
    a zero B_Q width are binned onto the grid.

    :param species list: NuclearSpeciesConfig per species
    :param omega_grid ndarray: frequency grid in MHz, see default_grid
    :return: total density with per-species D1 and D2 components
    :rType: SpectralDensity
    """
    species = list(species)
    grid = default_grid(species) if omega_grid is None else np.asarray(omega_grid, dtype=float)
    _check_coverage(species, grid)

    total = np.zeros(len(grid))
    components = {}
    for s in species:
        d1, d2 = _species_density(s, grid)
        components[s.name] = {'D1': d1, 'D2': d2}
        total = total + (d1 + d2)

    return SpectralDensity(grid, total, components)

def monte_carlo_spectral_density(species, omega_grid=None, n_samples=100000, seed=0):
    """
    Direct evaluation of the sum over nuclei: every sampled nucleus places
    its delta lines on the grid.

    :param species list: NuclearSpeciesConfig per species
    :param omega_grid ndarray: frequency grid in MHz
    :param n_samples int: nuclei sampled per species
    :param seed int: Philox seed
    :rType: SpectralDensity
    """
    species = list(species)
    grid = default_grid(species) if omega_grid is None else np.asarray(omega_grid, dtype=float)
    rng = np.random.Generator(np.random.Philox(seed))
    total = np.zeros(len(grid))
    components = {}
    for s in species:
        theta = sample_polar_angles(s, n_samples, rng)
        bq = s.bq_mean + s.bq_std * rng.standard_normal(n_samples)
        g = quadrupolar_factor(theta)
        density = {'D1': np.zeros(len(grid)), 'D2': np.zeros(len(grid))}
        for component, k, coefficient, centre in _line_families(s):
            weights = coefficient * bq**2 * _angular_weight(component, theta) / n_samples
            density[component] += _deposit(grid, centre + k * bq * g, weights)

        d1 = TWO_PI * s.prefactor * density['D1']
        d2 = TWO_PI * s.prefactor * density['D2']
        components[s.name] = {'D1': d1, 'D2': d2}
        total = total + (d1 + d2)

    return SpectralDensity(grid, total, components)

def analytic_weight(species):
    """
    Total integrated weight of D1 + D2 for one species, which depends on the
    distributions only through <B_Q^2> and angular moments.

    :rType: float
    """
    theta_table, p_table = _polar_table(_effective_std(species.theta_std))
    second_moment = species.bq_mean**2 + species.bq_std**2
    total = 0.0
    for component, k, coefficient, centre in _line_families(species):
        total += coefficient * trapezoid(p_table * _angular_weight(component, theta_table), theta_table)

    return TWO_PI * species.prefactor * second_moment * total
