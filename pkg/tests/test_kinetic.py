import numpy as np
import pytest

from pfsi.errors import CFLViolation, TruncationTooSmall
from pfsi.kinetic import (ConfigurationGrid, ProbabilityDensity, build_maxwellian, calibrate_relaxation,
                          close_moments, closed_stress_ode, gaussian_density, probability_mass,
                          step_fokker_planck, verify_closure)
from pfsi.solute import identity_components


@pytest.fixture(scope="module")
def model():
    return build_maxwellian(ConfigurationGrid(6.0, 48, 2))


def test_maxwellian_moments(model):
    rho, T = close_moments(ProbabilityDensity(model.maxwellian), model)
    assert rho == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(T, identity_components(2), atol=5e-3)


def test_truncation_too_small():
    with pytest.raises(TruncationTooSmall):
        build_maxwellian(ConfigurationGrid(3.0, 32, 2))
    assert ConfigurationGrid(6.0, 32, 2).tail_mass() < 1e-8


def test_maxwellian_is_stationary(model):
    f = ProbabilityDensity(model.maxwellian.copy())
    for _ in range(5):
        f = step_fokker_planck(f, model, np.zeros((2, 2)), 1e-2)
    assert np.max(np.abs(f.values - model.maxwellian)) < 1e-13 * np.max(model.maxwellian)


def test_mass_conserved_under_shear(model):
    f = gaussian_density(model, np.diag([1.5, 0.8]))
    m0 = probability_mass(f, model)
    G = np.array([[0.0, 1.0], [0.0, 0.0]])
    for _ in range(50):
        f = step_fokker_planck(f, model, G, 1e-2)
    assert abs(probability_mass(f, model) - m0) / m0 < 1e-12
    assert np.min(f.values) >= -1e-12 * np.max(f.values)


def test_gaussian_density_covariance(model):
    C = np.array([[1.4, 0.3], [0.3, 0.9]])
    rho, T = close_moments(gaussian_density(model, C, mass=2.0), model)
    assert rho == pytest.approx(2.0)
    np.testing.assert_allclose(T, 2.0 * np.array([1.4, 0.3, 0.9]), rtol=1e-2)


def test_relaxation_rate_is_two(model):
    assert calibrate_relaxation(model, 1e-2, horizon=1.0) == pytest.approx(2.0, rel=1e-2)


def test_closed_ode_equilibrium():
    T = closed_stress_ode(np.eye(2), 1.0, np.zeros((2, 2)), 2.0, np.array([0.0, 1.0]))
    np.testing.assert_allclose(T[-1], np.eye(2), atol=1e-10)


def test_closure_short_run(model):
    G = np.array([[0.0, 0.5], [0.0, 0.0]])
    rep = verify_closure(model, ProbabilityDensity(model.maxwellian.copy()), G, 1e-2, 30)
    assert rep.max_relative_error < 2e-2
    assert rep.density_drift < 1e-12


def test_resolved_transport_conserves_mass(model):
    nx = 8
    f = ProbabilityDensity(np.stack([model.maxwellian * (1 + 0.3 * np.cos(2 * np.pi * i / nx))
                                     for i in range(nx)]), x_period=1.0)
    m0 = probability_mass(f, model)
    G = np.zeros((2, 2, nx))
    G[0, 1] = 0.5 * np.sin(2 * np.pi * np.arange(nx) / nx)
    u = 0.5 + 0.2 * np.cos(2 * np.pi * np.arange(nx) / nx)
    for _ in range(20):
        f = step_fokker_planck(f, model, G, 1e-2, velocity=u)
    assert abs(probability_mass(f, model) - m0) / m0 < 1e-12


def test_configuration_cfl(model):
    with pytest.raises(CFLViolation):
        step_fokker_planck(ProbabilityDensity(model.maxwellian.copy()), model, 50 * np.eye(2), 0.1)
