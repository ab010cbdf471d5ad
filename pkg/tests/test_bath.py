import math

import numpy as np
import pytest
from scipy.integrate import quad, trapezoid

from optispin.bath import (
    MAGIC_ANGLE,
    NuclearSpeciesConfig,
    SpectralDensity,
    analytic_weight,
    default_grid,
    default_species,
    m_plus,
    monte_carlo_spectral_density,
    polar_angle_density,
    quadrupolar_factor,
    sample_polar_angles,
    spectral_density,
)
from optispin.errors import OutOfRangeError


@pytest.fixture(scope='module')
def species():
    return default_species()


@pytest.fixture(scope='module')
def semi_analytic(species):
    return spectral_density(species, default_grid(species, points=1024))


def test_m_plus_matrix_elements():
    assert m_plus(1.5, -1.5) == pytest.approx(math.sqrt(3.0))
    assert m_plus(1.5, -0.5) == pytest.approx(2.0)
    assert m_plus(4.5, 3.5) == pytest.approx(3.0)
    assert m_plus(0.5, -0.5) == pytest.approx(1.0)


@pytest.mark.parametrize('m', [1.5, 2.0, -2.5, 0.25])
def test_m_plus_rejects_out_of_range(m):
    with pytest.raises(OutOfRangeError):
        m_plus(1.5, m)


def test_quadrupolar_factor_vanishes_at_magic_angle():
    assert quadrupolar_factor(MAGIC_ANGLE) == pytest.approx(0.0, abs=1e-15)
    assert quadrupolar_factor(0.0) == -0.5
    assert quadrupolar_factor(0.5 * math.pi) == pytest.approx(1.0)


def test_species_spin_parsing_and_validation():
    indium = NuclearSpeciesConfig('In', '9/2', 1e4, 0.16, 0.4, 0.2, 0.25, 30.8)
    assert indium.spin == 4.5

    with pytest.raises(ValueError):
        NuclearSpeciesConfig('X', 1.3, 1e4, 0.16, 0.4, 0.2, 0.25, 30.8)
    with pytest.raises(ValueError):
        NuclearSpeciesConfig('X', 1.5, 1e4, 0.16, 0.4, 0.2, 0.25, 0.0)


@pytest.mark.parametrize('theta_std', [0.1, 0.25, 0.6])
def test_polar_angle_density_is_normalized(theta_std):
    norm, _ = quad(polar_angle_density, 0.0, math.pi, args=(theta_std,), points=[0.5 * math.pi], limit=200)

    assert norm == pytest.approx(1.0, abs=1e-6)


def test_polar_angle_density_is_symmetric():
    theta = np.array([0.1, 0.4, 1.2])

    assert polar_angle_density(theta, 0.25) == pytest.approx(polar_angle_density(math.pi - theta, 0.25))
    assert polar_angle_density(0.5 * math.pi, 0.25) == pytest.approx(0.0, abs=1e-12)


def test_sampled_angles_follow_the_density():
    rng = np.random.Generator(np.random.Philox(11))
    n = 200000
    samples = sample_polar_angles(0.25, n, rng)
    edges = np.linspace(0.0, math.pi, 51)
    counts, _ = np.histogram(samples, bins=edges)

    expected = np.array([
        n * quad(polar_angle_density, lo, hi, args=(0.25,), limit=100)[0] for lo, hi in zip(edges[:-1], edges[1:])
    ])
    outside = np.abs(counts - expected) > 3.0 * np.sqrt(np.maximum(expected, 1.0))
    assert outside.sum() <= 2


def test_sum_rule_matches_analytic_weight(species, semi_analytic):
    for s in species:
        parts = semi_analytic.components[s.name]
        weight = trapezoid(parts['D1'] + parts['D2'], semi_analytic.omega)
        assert weight == pytest.approx(analytic_weight(s), rel=1e-2)


def test_monte_carlo_agrees_with_semi_analytic(species, semi_analytic):
    sampled = monte_carlo_spectral_density(species, semi_analytic.omega, n_samples=100000, seed=0)
    difference = trapezoid(np.abs(semi_analytic.values - sampled.values), semi_analytic.omega)

    assert difference / semi_analytic.integral() < 0.05


def test_monte_carlo_is_seeded(species):
    grid = default_grid(species, points=256)
    first = monte_carlo_spectral_density(species, grid, n_samples=2000, seed=4)
    again = monte_carlo_spectral_density(species, grid, n_samples=2000, seed=4)

    assert np.array_equal(first.values, again.values)


def test_lines_sit_near_nuclear_zeeman_frequencies(species, semi_analytic):
    for s in species:
        parts = semi_analytic.components[s.name]
        d1_peak = semi_analytic.omega[np.argmax(parts['D1'])]
        d2_peak = semi_analytic.omega[np.argmax(parts['D2'])]
        assert d1_peak == pytest.approx(s.omega_nuc, rel=0.1)
        assert d2_peak == pytest.approx(2.0 * s.omega_nuc, rel=0.1)


def test_density_scales_with_count_and_coupling(species):
    grid = default_grid(species, points=512)
    base = spectral_density(species[:1], grid)
    scaled = spectral_density([species[0].scaled(count=2.0, a2=3.0)], grid)

    assert scaled.values == pytest.approx(6.0 * base.values, rel=1e-9, abs=1e-15)


def test_density_refuses_to_extrapolate(semi_analytic):
    with pytest.raises(OutOfRangeError):
        semi_analytic(-1.0)
    with pytest.raises(OutOfRangeError):
        semi_analytic(semi_analytic.omega[-1] + 1.0)

    assert semi_analytic(semi_analytic.omega[3]) == pytest.approx(semi_analytic.values[3])


def test_zero_density():
    density = SpectralDensity.zeros(np.linspace(0.0, 10.0, 11))

    assert density.is_zero()
    assert density.integral() == 0.0
    assert len(density.to_rows()) == 11


def test_density_validation():
    with pytest.raises(ValueError):
        SpectralDensity(np.array([0.0, 1.0, 1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        SpectralDensity(np.array([0.0, 1.0]), np.array([0.0, -1.0]))


def test_default_grid_covers_the_sweep(species):
    assert default_grid(species)[-1] == pytest.approx(3.0 * 30.8)
    assert default_grid(species, omega_max=160.0)[-1] == pytest.approx(200.0)
    assert len(default_grid(species, points=100)) == 100
