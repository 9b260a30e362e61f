import numpy as np
import pytest
from numpy.testing import assert_allclose

from odediscover.errors import InvalidDimensionError, NonUniformGridError
from odediscover.operators import (
    Projector,
    build_difference_stack,
    build_trapezoid,
    check_uniform_grid,
    numerical_rank,
    project,
    pseudoinverse,
    pseudoinverse_apply,
    pseudoinverse_norm,
)


def test_trapezoid_matches_dense_form():
    rng = np.random.default_rng(0)
    trapezoid = build_trapezoid(9, 2.0)
    dense = trapezoid.toarray()
    x = rng.standard_normal((9, 3))
    assert_allclose(trapezoid.apply(x), dense @ x, atol=1e-14)
    assert_allclose(trapezoid.rmatvec(x), dense.T @ x, atol=1e-14)


def test_trapezoid_small_example():
    # n = 3, dt = 1: rows [0 0 0], [1/2 1/2 0], [1/2 1 1/2]
    dense = build_trapezoid(3, 2.0).toarray()
    assert_allclose(dense, [[0, 0, 0], [0.5, 0.5, 0], [0.5, 1.0, 0.5]])


def test_trapezoid_integrates_linear_functions_exactly():
    t = np.linspace(0.0, 3.0, 31)
    trapezoid = build_trapezoid(t.size, 3.0)
    assert_allclose(trapezoid.apply(np.ones_like(t)), t, atol=1e-13)
    assert_allclose(trapezoid.apply(2.0 * t), t ** 2, atol=1e-12)


def test_trapezoid_null_vector_alternates():
    trapezoid = build_trapezoid(12, 1.0)
    alternating = (-1.0) ** np.arange(12)
    assert_allclose(trapezoid.apply(alternating), 0.0, atol=1e-15)
    assert numerical_rank(trapezoid.toarray()) == 11


def test_trapezoid_rejects_bad_sizes():
    with pytest.raises(InvalidDimensionError):
        build_trapezoid(1, 1.0)
    with pytest.raises(InvalidDimensionError):
        build_trapezoid(5, 0.0)
    with pytest.raises(InvalidDimensionError):
        build_trapezoid(5, 1.0).apply(np.ones(4))


def test_difference_stack_shape_and_action():
    stack = build_difference_stack(6, 5.0)
    assert stack.shape == (15, 6)
    assert stack.toarray().shape == stack.shape
    t = np.linspace(0.0, 5.0, 6)
    applied = stack.apply(t ** 2)
    assert_allclose(applied, stack.tosparse() @ (t ** 2))
    # second differences of t^2 are exactly 2
    assert_allclose(applied[-4:], 2.0)
    assert_allclose(stack.apply(np.ones(6))[6:], 0.0)


def test_difference_stack_needs_three_samples():
    with pytest.raises(InvalidDimensionError):
        build_difference_stack(2, 1.0)


def test_uniform_grid_check():
    assert check_uniform_grid(np.linspace(0.0, 1.0, 11)) == pytest.approx(0.1)
    with pytest.raises(NonUniformGridError):
        check_uniform_grid(np.array([0.0, 0.1, 0.3]))
    with pytest.raises(NonUniformGridError):
        check_uniform_grid(np.array([0.0, -0.1, -0.2]))


def test_projector_is_idempotent_and_symmetric():
    rng = np.random.default_rng(1)
    source = rng.standard_normal((20, 4))
    projector = Projector.from_matrix(source)
    P = projector.apply(np.eye(20))
    assert projector.rank == 4
    assert_allclose(P @ P, P, atol=1e-12)
    assert_allclose(P, P.T, atol=1e-12)
    assert_allclose(projector.apply(source), source, atol=1e-12)
    assert_allclose(projector.complement(source), 0.0, atol=1e-12)


def test_projector_drops_dependent_columns():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((15, 2))
    source = np.column_stack([a, a[:, 0] + a[:, 1]])
    assert Projector.from_matrix(source).rank == 2
    assert numerical_rank(source) == 2


def test_projector_of_zero_matrix_is_zero():
    projector = Projector.from_matrix(np.zeros((5, 3)))
    assert projector.rank == 0
    assert_allclose(projector.apply(np.ones(5)), 0.0)


def test_project_small_examples():
    assert_allclose(project(np.eye(4), np.array([1.0, -2.0, 3.0, 0.5])), [1.0, -2.0, 3.0, 0.5], atol=1e-12)
    assert_allclose(project(np.array([[1.0], [1.0]]), np.array([1.0, 3.0])), [2.0, 2.0], atol=1e-12)
    duplicated = np.array([[1.0, 1.0], [0.0, 0.0]])
    assert_allclose(project(duplicated, np.array([5.0, 7.0])), [5.0, 0.0], atol=1e-12)
    assert Projector.from_matrix(duplicated).rank == 1


def test_project_checks_lengths():
    with pytest.raises(InvalidDimensionError):
        project(np.ones((5, 2)), np.ones(4))


def test_pseudoinverse_matches_numpy():
    rng = np.random.default_rng(3)
    source = rng.standard_normal((12, 5))
    x = rng.standard_normal(12)
    assert_allclose(pseudoinverse(source), np.linalg.pinv(source), atol=1e-12)
    assert_allclose(pseudoinverse_apply(source, x), np.linalg.pinv(source) @ x, atol=1e-12)
    smallest = np.linalg.svd(source, compute_uv=False)[-1]
    assert pseudoinverse_norm(source) == pytest.approx(1.0 / smallest)
