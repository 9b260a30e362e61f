import numpy as np
import pytest
from numpy.testing import assert_allclose

from odediscover.basis import enumerate_basis, evaluate_library, integrated_library
from odediscover.errors import ConfigError
from odediscover.operators import build_trapezoid
from odediscover.pareto import GAMMA_WINDOW, SocpGammaCurve, gamma_pareto
from odediscover.pipeline import (
    METHOD_NAMES,
    DsindyOptions,
    denoise_states,
    format_equations,
    resolve_sigma,
    run_method,
)
from odediscover.analysis import relative_error
from odediscover.regression import gamma_theory, support
from odediscover.systems import add_noise, builtin_system, simulate


def test_options_validation():
    with pytest.raises(ConfigError):
        DsindyOptions(gamma_mode="corner")
    with pytest.raises(ConfigError):
        DsindyOptions(irw_iters=0)
    assert DsindyOptions().gamma_mode == "theory"


def test_unknown_method_is_a_config_error():
    system = builtin_system("duffing_ps2")
    truth = simulate(system, n=100)
    with pytest.raises(ConfigError) as info:
        run_method("sindy-pi", truth, system.basis)
    for name in METHOD_NAMES:
        assert name in str(info.value)


def test_format_equations():
    basis = enumerate_basis(2, 2)
    coefficients = np.array([
        [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        [0.0, -0.5, 0.0, 0.0, 2.0, 0.0],
    ])
    assert format_equations(coefficients, basis) == ["u1' = 1 u2", "u2' = -0.5 u1 + 2 u1 u2"]
    assert format_equations(np.zeros((2, 6)), basis) == ["u1' = 0", "u2' = 0"]
    constant = np.array([[3.0, 0, 0, 0, 0, 0], [0, 0, 0, -1.25, 0, 0]])
    assert format_equations(constant, basis, names=["x", "y"]) == ["x' = 3", "y' = -1.25 x^2"]


def test_format_equations_hides_coefficients_below_cutoff():
    basis = enumerate_basis(1, 2)
    assert format_equations(np.array([[0.0, 1.0, 1e-5]]), basis) == ["u1' = 1 u1"]


def test_resolve_sigma():
    system = builtin_system("duffing_ps2")
    noisy = add_noise(simulate(system, n=2000), 0.1, seed=4)
    assert_allclose(resolve_sigma(noisy, DsindyOptions(sigma=0.1)), [0.1, 0.1])
    assert_allclose(resolve_sigma(noisy, DsindyOptions(sigma=[0.1, 0.2])), [0.1, 0.2])
    assert_allclose(resolve_sigma(noisy, DsindyOptions()), [0.1, 0.1], rtol=0.1)
    with pytest.raises(ConfigError):
        resolve_sigma(noisy, DsindyOptions(sigma=[0.1, 0.1, 0.1]))


def test_wsindy_lite_result_layout():
    system = builtin_system("duffing_ps2")
    noisy = add_noise(simulate(system, n=500), 0.01, seed=1)
    result = run_method("wsindy-lite", noisy, system.basis, DsindyOptions(sigma=0.01))
    assert result.method == "wsindy-lite"
    assert result.coefficients.shape == (2, system.basis.p)
    assert result.denoised is None
    assert result.discovery.derivatives is None


@pytest.mark.slow
@pytest.mark.parametrize("name", ["duffing_ps2", "van_der_pol"])
def test_dsindy_recovers_clean_systems(name):
    system = builtin_system(name)
    truth = simulate(system, n=1000)
    result = run_method("dsindy", truth, system.basis, DsindyOptions())
    assert np.all(result.sigma < 1e-2)
    assert np.array_equal(support(result.coefficients), system.true_coefficients != 0)
    error = np.linalg.norm(result.coefficients - system.true_coefficients)
    assert error < 1e-3 * np.linalg.norm(system.true_coefficients)


@pytest.mark.slow
def test_pareto_gamma_stays_in_the_theory_window():
    system = builtin_system("duffing_ps2")
    noisy = add_noise(simulate(system, n=500), 0.1, seed=2)
    options = DsindyOptions(sigma=0.1)
    u_tilde = denoise_states(noisy, system.basis, resolve_sigma(noisy, options), options).denoised.values
    theta = evaluate_library(system.basis, u_tilde)
    phi = integrated_library(theta, build_trapezoid(noisy.n, noisy.t_end))
    gamma_exp = gamma_theory(0.1, system.basis.p)
    low, high = GAMMA_WINDOW
    for k in range(system.m):
        gamma = gamma_pareto(SocpGammaCurve(u_tilde[:, k], theta, phi, noisy.t_end), gamma_exp)
        assert low * gamma_exp <= gamma <= high * gamma_exp


@pytest.mark.slow
def test_dsindy_bookkeeping_on_noisy_data():
    system = builtin_system("duffing_ps2")
    truth = simulate(system, n=500)
    noisy = add_noise(truth, 0.05, seed=3)
    result = run_method("dsindy", noisy, system.basis, DsindyOptions(sigma=0.05))
    assert result.coefficients.shape == system.true_coefficients.shape
    assert np.all(np.isfinite(result.coefficients))
    assert result.discovery.derivatives.shape == truth.values.shape
    assert_allclose(result.sigma, [0.05, 0.05])
    assert result.denoise.iterations >= 1


@pytest.mark.slow
def test_l1sindy_returns_two_lambdas_per_state():
    system = builtin_system("duffing_ps2")
    noisy = add_noise(simulate(system, n=400), 0.05, seed=5)
    result = run_method("l1sindy", noisy, system.basis, DsindyOptions(sigma=0.05))
    assert len(result.lambdas) == 2 * system.m
    assert all(lam >= 0 for lam in result.lambdas)
    assert np.all(np.isfinite(result.coefficients))
    assert result.discovery.u0.shape == (system.m,)


def _duffing_noisy(n, sigma, seed):
    system = builtin_system("duffing_ps2")
    truth = simulate(system, n=n)
    return system, truth, add_noise(truth, sigma, seed=seed)


@pytest.mark.slow
def test_l1sindy_recovers_duffing_support():
    system, truth, noisy = _duffing_noisy(1000, 0.1, seed=0)
    result = run_method("l1sindy", noisy, system.basis, DsindyOptions(sigma=0.1))
    true_support = system.true_coefficients != 0
    assert np.all(support(result.coefficients)[true_support])
    assert relative_error(result.coefficients, system.true_coefficients) < 0.5
    assert relative_error(result.discovery.derivatives, system(truth.values)) < 0.3


@pytest.mark.slow
def test_dsindy_beats_l1sindy_on_most_seeds():
    wins = 0
    for seed in range(10):
        system, _, noisy = _duffing_noisy(1000, 0.1, seed)
        options = DsindyOptions(sigma=0.1)
        errors = {method: relative_error(run_method(method, noisy, system.basis, options).coefficients,
                                         system.true_coefficients)
                  for method in ("dsindy", "l1sindy")}
        wins += errors["dsindy"] <= errors["l1sindy"]
    assert wins >= 7


@pytest.mark.slow
def test_pareto_gamma_mode_tracks_theory_mode():
    low, high = GAMMA_WINDOW
    errors = {"theory": [], "pareto": []}
    for seed in range(5):
        system, _, noisy = _duffing_noisy(1000, 0.1, seed)
        gamma_exp = gamma_theory(0.1, system.basis.p)
        for mode in errors:
            result = run_method("dsindy", noisy, system.basis, DsindyOptions(sigma=0.1, gamma_mode=mode))
            errors[mode].append(relative_error(result.coefficients, system.true_coefficients))
            if mode == "pareto":
                for gammas in result.discovery.gamma_used:
                    assert all(low * gamma_exp <= g <= high * gamma_exp for g in gammas)
    assert np.mean(errors["pareto"]) <= 2.0 * np.mean(errors["theory"])
