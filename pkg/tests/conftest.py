import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from optispin.config import DEFAULT_ALPHA, DEFAULT_GAMMA2
from optispin.spin import SMINUS, SPLUS, SX, SY, SZ, TWO_PI, RelaxationParams, StepControl


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long-running acceptance pipelines')


class ConstantRate:
    """Nuclear rate function returning one value for every argument."""
    time_dependent = False

    def __init__(self, value):
        self.value = value

    def __call__(self, omega_prime, chi, t):
        return np.full(np.broadcast(omega_prime, chi, t).shape, float(self.value))


def lindblad_oracle(rho0, omega, phase, detuning, gamma1, gamma2, times_ns):
    """Brute-force master equation with solve_ivp, rho in the (up, down) basis."""
    h = TWO_PI * (omega * (math.cos(phase) * SX + math.sin(phase) * SY) + detuning * SZ)
    collapse = [math.sqrt(gamma1) * SPLUS, math.sqrt(gamma1) * SMINUS, math.sqrt(gamma2) * SZ]

    def rhs(t, y):
        rho = y.reshape(2, 2)
        d = -1j * (h @ rho - rho @ h)
        for c in collapse:
            cd = c.conj().T
            d += c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c)
        return d.reshape(-1)

    times_us = np.asarray(times_ns, dtype=float) / 1000.0
    solution = solve_ivp(rhs, (0.0, times_us[-1]), np.asarray(rho0, dtype=complex).reshape(-1),
                         method='DOP853', t_eval=times_us, rtol=1e-12, atol=1e-12)
    return solution.y.T.reshape(-1, 2, 2)


@pytest.fixture
def constant_rate():
    return ConstantRate


@pytest.fixture
def oracle():
    return lindblad_oracle


@pytest.fixture
def measured_relaxation():
    return RelaxationParams(alpha=DEFAULT_ALPHA, gamma2=DEFAULT_GAMMA2)


@pytest.fixture
def fine_steps():
    return StepControl(steps_per_radian=80.0)
