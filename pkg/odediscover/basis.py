"""
Monomial libraries.

A MonomialBasis is the ordered set of multi-indices alpha with |alpha| <= d
over m states. Ordering is graded (total degree nondecreasing) and, within a
degree, lexicographically descending, so m=2, d=2 gives
[0,0] [1,0] [0,1] [2,0] [1,1] [0,2].

The unbiased library and the consistent Gramian both subtract Gaussian noise
moments of strictly smaller multi-indices; the correction terms are shared
and computed once per (basis, sigma).
"""

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations_with_replacement
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import comb, factorial2

from .errors import InvalidDimensionError
from .operators import DEFAULT_RANK_TOL, Projector, TrapezoidMatrix

SigmaLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class MonomialBasis:
    m: int
    d: int
    indices: Tuple[Tuple[int, ...], ...] = field(repr=False)

    @property
    def p(self) -> int:
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.array(self.indices, dtype=int).reshape(self.p, self.m)

    def position(self, alpha: Sequence[int]) -> int:
        return self.indices.index(tuple(int(a) for a in alpha))

    def labels(self, names: Optional[Sequence[str]] = None) -> List[str]:
        """Readable column names, e.g. ['1', 'u1', 'u2', 'u1^2', 'u1 u2', 'u2^2']."""
        names = list(names) if names is not None else [f"u{k + 1}" for k in range(self.m)]
        out = []
        for alpha in self.indices:
            factors = [names[k] if a == 1 else f"{names[k]}^{a}"
                       for k, a in enumerate(alpha) if a > 0]
            out.append(" ".join(factors) if factors else "1")
        return out


def enumerate_basis(m: int, d: int) -> MonomialBasis:
    if m < 1:
        raise InvalidDimensionError(f"state count must be >= 1, got {m}")
    if d < 0:
        raise InvalidDimensionError(f"degree must be >= 0, got {d}")

    indices: List[Tuple[int, ...]] = []
    for degree in range(d + 1):
        level = []
        for combo in combinations_with_replacement(range(m), degree):
            alpha = [0] * m
            for k in combo:
                alpha[k] += 1
            level.append(tuple(alpha))
        level.sort(reverse=True)
        indices.extend(level)
    return MonomialBasis(m=m, d=d, indices=tuple(indices))


def _state_values(states) -> np.ndarray:
    values = getattr(states, "values", states)
    return np.atleast_2d(np.asarray(values, dtype=float))


def _check_states(basis: MonomialBasis, values: np.ndarray):
    if values.ndim != 2 or values.shape[1] != basis.m:
        raise InvalidDimensionError(
            f"basis expects {basis.m} state columns, got shape {values.shape}")


def _per_state_sigma(sigma: SigmaLike, m: int) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim == 0:
        sigma = np.full(m, float(sigma))
    if sigma.shape != (m,):
        raise InvalidDimensionError(f"expected {m} noise levels, got shape {sigma.shape}")
    if np.any(sigma < 0):
        raise InvalidDimensionError("noise standard deviations must be nonnegative")
    return sigma


def evaluate_library(basis: MonomialBasis, states) -> np.ndarray:
    """N x p matrix of monomial evaluations; column 0 is ones."""
    values = _state_values(states)
    _check_states(basis, values)
    exponents = basis.as_array()
    # 0 ** 0 == 1 in numpy, which keeps the constant column exact
    return np.prod(values[:, None, :] ** exponents[None, :, :], axis=2)


def gaussian_moment(alpha: Sequence[int], sigma: SigmaLike) -> float:
    """E[eps^alpha] for independent zero-mean Gaussian components."""
    alpha = np.asarray(alpha, dtype=int)
    sigma = _per_state_sigma(sigma, alpha.size)
    if np.any(alpha < 0):
        raise InvalidDimensionError("multi-index entries must be nonnegative")
    if np.any(alpha % 2 == 1):
        return 0.0
    moment = 1.0
    for a, s in zip(alpha, sigma):
        if a > 0:
            moment *= s ** a * factorial2(a - 1, exact=True)
    return float(moment)


def multi_binomial(upper: Sequence[int], lower: Sequence[int]) -> float:
    """prod_k binom(upper_k, lower_k)."""
    return float(np.prod([comb(a, b, exact=True) for a, b in zip(upper, lower)]))


def centering_terms(basis: MonomialBasis, sigma: SigmaLike) -> List[List[Tuple[int, float]]]:
    """For each column j, the pairs (k, C_jk * E[eps^(alpha_j - alpha_k)]) over alpha_k < alpha_j.

    Zero-moment pairs are dropped.
    """
    sigma = _per_state_sigma(sigma, basis.m)
    exponents = basis.as_array()
    terms: List[List[Tuple[int, float]]] = []
    for j in range(basis.p):
        row = []
        for k in range(j):
            diff = exponents[j] - exponents[k]
            if np.any(diff < 0) or not np.any(diff):
                continue
            moment = gaussian_moment(diff, sigma)
            if moment != 0.0:
                row.append((k, multi_binomial(exponents[j], exponents[k]) * moment))
        terms.append(row)
    return terms


def evaluate_unbiased_library(basis: MonomialBasis, noisy_states, sigma: SigmaLike) -> np.ndarray:
    """Noise-centered library whose expectation is the library of the true states."""
    theta = evaluate_library(basis, noisy_states)
    for j, row in enumerate(centering_terms(basis, sigma)):
        for k, weight in row:
            # graded order: every k < j is already centered
            theta[:, j] -= weight * theta[:, k]
    return theta


def gramian_tilde(theta_tilde: np.ndarray) -> np.ndarray:
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    return theta_tilde.T @ theta_tilde


def gramian_consistent(theta_tilde: np.ndarray, noisy_states, basis: MonomialBasis,
                       sigma: SigmaLike) -> np.ndarray:
    """N * H_hat, a consistent estimate of theta_tilde^T theta_true."""
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    theta_noisy = evaluate_library(basis, noisy_states)
    if theta_tilde.shape != theta_noisy.shape:
        raise InvalidDimensionError(
            f"smoothed library shape {theta_tilde.shape} does not match {theta_noisy.shape}")
    n = theta_noisy.shape[0]
    h = theta_tilde.T @ theta_noisy / n
    for k, row in enumerate(centering_terms(basis, sigma)):
        for ell, weight in row:
            h[:, k] -= weight * h[:, ell]
    return n * h


def integrated_library(theta: np.ndarray, trapezoid: TrapezoidMatrix) -> np.ndarray:
    """[1 | T theta]."""
    theta = np.asarray(theta, dtype=float)
    return np.hstack([np.ones((theta.shape[0], 1)), trapezoid.apply(theta)])


@dataclass(frozen=True)
class LibraryMatrices:
    theta: np.ndarray
    phi: np.ndarray
    theta_hat: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None
    rank_tol: float = DEFAULT_RANK_TOL

    @property
    def centered(self) -> bool:
        return self.theta_hat is not None

    @cached_property
    def projector(self) -> Projector:
        return Projector.from_matrix(self.phi, self.rank_tol)


def build_library_matrices(basis: MonomialBasis, states, trapezoid: TrapezoidMatrix,
                           sigma: Optional[SigmaLike] = None,
                           rank_tol: float = DEFAULT_RANK_TOL) -> LibraryMatrices:
    """Library, optional centered library and the integrated matrix built from the one in use."""
    theta = evaluate_library(basis, states)
    if theta.shape[0] != trapezoid.n:
        raise InvalidDimensionError(
            f"{theta.shape[0]} samples do not match trapezoid size {trapezoid.n}")
    if sigma is None:
        return LibraryMatrices(theta=theta, phi=integrated_library(theta, trapezoid),
                               rank_tol=rank_tol)
    sigma = _per_state_sigma(sigma, basis.m)
    theta_hat = evaluate_unbiased_library(basis, states, sigma)
    return LibraryMatrices(theta=theta, phi=integrated_library(theta_hat, trapezoid),
                           theta_hat=theta_hat, sigma=sigma, rank_tol=rank_tol)
