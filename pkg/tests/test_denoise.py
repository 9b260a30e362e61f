import numpy as np
import pytest
from numpy.testing import assert_allclose

from odediscover.analysis import relative_error, replication_seed
from odediscover.basis import enumerate_basis
from odediscover.denoise import DenoiseConfig, iter_psdn, library_projector, psdn
from odediscover.errors import InvalidDimensionError
from odediscover.systems import Trajectory, add_noise, builtin_system, simulate


@pytest.fixture(scope="module")
def duffing_ps1():
    system = builtin_system("duffing_ps1")
    return system, simulate(system, n=1000)


def test_config_validation():
    with pytest.raises(InvalidDimensionError):
        DenoiseConfig(alpha=1.5)
    with pytest.raises(InvalidDimensionError):
        DenoiseConfig(check_diverg=True)
    with pytest.raises(InvalidDimensionError):
        DenoiseConfig(sigma_per_state=[-0.1])
    cfg = DenoiseConfig(sigma_per_state=0.2)
    assert_allclose(cfg.sigma_for(3), [0.2, 0.2, 0.2])


def test_psdn_leaves_clean_polynomial_states_nearly_unchanged():
    # u' = -u is in the span of the degree-1 library
    t = np.linspace(0.0, 2.0, 400)
    clean = Trajectory(times=t, values=np.exp(-t), kind="true")
    denoised = psdn(clean, enumerate_basis(1, 1))
    assert denoised.kind == "denoised"
    assert relative_error(denoised.values, clean.values) < 1e-4


def test_psdn_reduces_noise(duffing_ps1):
    system, truth = duffing_ps1
    noisy = add_noise(truth, np.sqrt(0.1), seed=11)
    denoised = psdn(noisy, system.basis, sigma=np.sqrt(0.1))
    for k in range(2):
        assert (relative_error(denoised.values[:, k], truth.values[:, k])
                < relative_error(noisy.values[:, k], truth.values[:, k]))


def test_psdn_needs_enough_samples():
    basis = enumerate_basis(2, 4)
    t = np.linspace(0.0, 1.0, basis.p)
    with pytest.raises(InvalidDimensionError):
        psdn(Trajectory(times=t, values=np.ones((t.size, 2)), kind="noisy"), basis)


def test_alpha_zero_keeps_the_measurements(duffing_ps1):
    system, truth = duffing_ps1
    noisy = add_noise(truth, 0.1, seed=2)
    result = iter_psdn(noisy, system.basis, DenoiseConfig(alpha=0.0))
    assert result.converged
    assert result.iterations == 1
    assert np.array_equal(result.denoised.values, noisy.values)


def test_alpha_one_first_step_is_a_full_projection(duffing_ps1):
    system, truth = duffing_ps1
    noisy = add_noise(truth, 0.1, seed=3)
    one_step = iter_psdn(noisy, system.basis, DenoiseConfig(alpha=1.0, max_iters=1,
                                                            use_centered_library=False))
    assert_allclose(one_step.denoised.values, psdn(noisy, system.basis).values, atol=1e-12)


def test_iter_psdn_bookkeeping_and_divergence_check(duffing_ps1):
    system, truth = duffing_ps1
    sigma = np.sqrt(0.1)
    noisy = add_noise(truth, sigma, seed=replication_seed(0, 0, 0))
    result = iter_psdn(noisy, system.basis, DenoiseConfig(alpha=0.1, check_diverg=True,
                                                          sigma_per_state=sigma, max_iters=400))
    assert result.iterations == len(result.per_iter_change) == len(result.reverted_states)
    drift = np.linalg.norm(result.denoised.values - noisy.values, axis=0) / np.sqrt(noisy.n)
    assert np.all(drift <= sigma + 1e-12)
    for k in range(2):
        assert (relative_error(result.denoised.values[:, k], truth.values[:, k])
                < relative_error(noisy.values[:, k], truth.values[:, k]))


def test_sigma_zero_with_divergence_check_reverts_every_move(duffing_ps1):
    system, truth = duffing_ps1
    result = iter_psdn(add_noise(truth, 0.05, seed=5), system.basis,
                       DenoiseConfig(check_diverg=True, sigma_per_state=0.0, max_iters=5))
    assert result.stalled
    assert not result.converged
    assert result.iterations == 1
    assert result.reverted_states == [[0, 1]]
    assert np.array_equal(result.denoised.values, add_noise(truth, 0.05, seed=5).values)


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_partial_step_contracts_the_projection_residual(duffing_ps1, alpha):
    system, truth = duffing_ps1
    noisy = add_noise(truth, 0.1, seed=13)
    projected = library_projector(system.basis, noisy.values, noisy.t_end).apply(noisy.values)
    step = iter_psdn(noisy, system.basis, DenoiseConfig(alpha=alpha, max_iters=1,
                                                         use_centered_library=False))
    for k in range(system.m):
        before = np.linalg.norm(noisy.values[:, k] - projected[:, k])
        after = np.linalg.norm(step.denoised.values[:, k] - projected[:, k])
        assert after == pytest.approx((1.0 - alpha) * before, rel=1e-10)
