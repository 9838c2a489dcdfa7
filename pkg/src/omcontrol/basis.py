"""Monomial test functions and their LP constraint coefficients.

The basis enumerates every exponent tuple (i_1, ..., i_m) with each
component capped by ``max_degree``, ordered by total degree with
lexicographic tie-break, so the constant monomial always comes first and
the count is (max_degree + 1)**m.  The constraint coefficient of a
state-control pair against test function phi is

    alpha * (phi(f(y, u)) - phi(y)) + (1 - alpha) * (phi(y0) - phi(y)),

the integrand whose vanishing against every test function defines the
feasible measures of the LP.
"""

from __future__ import annotations

import itertools

import numpy as np

from .model import DiscreteControlProblem, StateActionPoint


class MonomialBasis:
    """Monomials on R^m with per-coordinate degree cap."""

    def __init__(self, dim: int, max_degree: int):
        if dim < 1:
            raise ValueError("dimension must be positive")
        if max_degree < 0:
            raise ValueError("degree cap must be nonnegative")
        self.dim = int(dim)
        self.max_degree = int(max_degree)
        exps = sorted(
            itertools.product(range(self.max_degree + 1), repeat=self.dim),
            key=lambda e: (sum(e), e),
        )
        self.exponents = np.array(exps, dtype=np.int64)

    @property
    def count(self) -> int:
        """Number N of test functions."""
        return self.exponents.shape[0]

    def index_of(self, exponent) -> int:
        exponent = tuple(int(v) for v in exponent)
        hits = np.where((self.exponents == np.array(exponent)).all(axis=1))[0]
        if hits.size == 0:
            raise KeyError(f"exponent {exponent} not in basis")
        return int(hits[0])

    def evaluate(self, y) -> np.ndarray:
        """Evaluate all monomials at y: (N,) for one point, (K, N) for a batch."""
        pts = np.asarray(y, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.dim:
            raise ValueError(f"points of dimension {pts.shape[1]}, basis has {self.dim}")
        out = np.ones((pts.shape[0], self.count))
        degs = np.arange(self.max_degree + 1)
        for a in range(self.dim):
            powers = pts[:, a][:, None] ** degs[None, :]
            out *= powers[:, self.exponents[:, a]]
        return out[0] if single else out

    def __repr__(self) -> str:
        return f"MonomialBasis(dim={self.dim}, max_degree={self.max_degree}, count={self.count})"


def constraint_columns(basis: MonomialBasis, problem: DiscreteControlProblem,
                       states, controls) -> np.ndarray:
    """(N, K) coefficients of aligned pairs against every test function.

    Row 0 belongs to the constant monomial and is identically zero; the LP
    carries the probability-normalization row instead.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    controls = np.atleast_2d(np.asarray(controls, dtype=float))
    phi_y = basis.evaluate(states)
    phi_f = basis.evaluate(problem.f(states, controls))
    phi_y0 = basis.evaluate(problem.initial_state)
    a = problem.discount
    cols = a * (phi_f - phi_y) + (1.0 - a) * (phi_y0[None, :] - phi_y)
    return cols.T


def constraint_coefficient(basis: MonomialBasis, problem: DiscreteControlProblem,
                           p: StateActionPoint, i: int) -> float:
    """Coefficient of one admissible pair against test function i (0-based)."""
    if not 0 <= i < basis.count:
        raise IndexError(f"basis index {i} out of range 0..{basis.count - 1}")
    cols = constraint_columns(basis, problem,
                              np.asarray(p.state, dtype=float)[None, :],
                              np.asarray(p.control, dtype=float)[None, :])
    return float(cols[i, 0])
