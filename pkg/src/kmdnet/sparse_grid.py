"""Smolyak sparse grids and Chebyshev tensor-product approximants.

Chebyshev polynomials here use 1-based indexing: ``T_1 = 1``, ``T_2 = x``,
``T_{i+1} = 2 x T_i - T_{i-1}``, so ``T_l`` is the classical ``T_{l-1}``.
The same offset applies to the second-kind polynomials (``U_1 = 1``,
``U_2 = 2x``).

A basis lives on a symmetric box ``[-a_1, a_1] x ... x [-a_n, a_n]`` that is
mapped affinely onto ``[-1, 1]^n``.  The approximant is stored in the
flattened form ``f(x) = sum_i theta_i T_{l^i_1}(u_1) ... T_{l^i_n}(u_n)``
with ``u = x / a``; coefficients come from collocation on the sparse grid.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionError, OutOfDomain, SingularSystem


def chebyshev_t(i: int, x):
    """First-kind Chebyshev polynomial ``T_i`` (1-based) evaluated at ``x``."""
    if i < 1:
        raise ValueError("Chebyshev index must be >= 1")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x.copy()
    if i == 1:
        return prev if prev.ndim else float(prev)
    for _ in range(i - 2):
        prev, cur = cur, 2.0 * x * cur - prev
    return cur if cur.ndim else float(cur)


def chebyshev_u(i: int, x):
    """Second-kind Chebyshev polynomial ``U_i`` (1-based) evaluated at ``x``."""
    if i < 1:
        raise ValueError("Chebyshev index must be >= 1")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), 2.0 * x
    if i == 1:
        return prev if prev.ndim else float(prev)
    for _ in range(i - 2):
        prev, cur = cur, 2.0 * x * cur - prev
    return cur if cur.ndim else float(cur)


def level_size(i: int) -> int:
    """Number of points ``m(i)`` at Smolyak level ``i``."""
    if i < 1:
        raise ValueError("level must be >= 1")
    return 1 if i == 1 else 2 ** (i - 1) + 1


def _extrema_keys(m: int) -> list[Fraction]:
    # angle fraction k/(m-1) of pi; nested levels share exact keys
    if m == 1:
        return [Fraction(1, 2)]
    return [Fraction(j, m - 1) for j in range(m)]


def _key_to_point(key: Fraction) -> float:
    if key == Fraction(1, 2):
        return 0.0
    return float(-np.cos(np.pi * float(key)))


def extrema_points(i: int) -> np.ndarray:
    """The set ``G^i``: ``{0}`` for ``i = 1``, else the ``i`` extrema
    ``-cos(pi (j-1)/(i-1))``, sorted ascending."""
    if i < 1:
        raise ValueError("number of points must be >= 1")
    return np.array([_key_to_point(k) for k in _extrema_keys(i)])


def _compositions(total: int, n: int):
    """All ``(i_1..i_n)`` with ``i_j >= 1`` summing to ``total``."""
    if n == 1:
        if total >= 1:
            yield (total,)
        return
    for first in range(1, total - n + 2):
        for rest in _compositions(total - first, n - 1):
            yield (first,) + rest


def _chebyshev_table(u: np.ndarray, lmax: int) -> np.ndarray:
    """``T_1..T_lmax`` at every entry of ``u``; result shape ``u.shape + (lmax,)``."""
    out = np.empty(u.shape + (lmax,))
    out[..., 0] = 1.0
    if lmax > 1:
        out[..., 1] = u
    for k in range(2, lmax):
        out[..., k] = 2.0 * u * out[..., k - 1] - out[..., k - 2]
    return out


def _derivative_table(u: np.ndarray, lmax: int) -> np.ndarray:
    """``d/du T_l(u) = (l-1) U_{l-1}(u)`` for ``l = 1..lmax`` (1-based)."""
    out = np.zeros(u.shape + (lmax,))
    if lmax == 1:
        return out
    uu = np.empty(u.shape + (lmax - 1,))
    uu[..., 0] = 1.0
    if lmax > 2:
        uu[..., 1] = 2.0 * u
    for k in range(2, lmax - 1):
        uu[..., k] = 2.0 * u * uu[..., k - 1] - uu[..., k - 2]
    out[..., 1:] = uu * np.arange(1, lmax)
    return out


@dataclass(frozen=True, eq=False)
class SmolyakBasis:
    """Smolyak index set and grid of order ``order`` on a symmetric box.

    Attributes
    ----------
    dim : int
        Number of coordinates ``n``.
    order : int
        Smolyak order ``mu``.
    index_set : ndarray of int, shape (M, n)
        1-based Chebyshev indices of each tensor term.
    grid : ndarray, shape (M, n)
        Collocation points in ``[-1, 1]^n`` (unit coordinates).
    half_width : ndarray, shape (n,)
        Box half-widths ``a``; physical point ``x = a * u``.
    """

    dim: int
    order: int
    index_set: np.ndarray
    grid: np.ndarray
    half_width: np.ndarray
    eps: float = 1e-12
    _lmax: int = field(init=False, repr=False)
    _active: tuple = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_lmax", int(self.index_set.max()))
        # each term depends on at most ``mu`` coordinates; list those first
        idx = self.index_set - 1
        width = max(1, int((idx > 0).sum(axis=1).max()))
        cols = np.argsort(idx == 0, axis=1, kind="stable")[:, :width]
        degs = np.take_along_axis(idx, cols, axis=1)
        object.__setattr__(self, "_active", (cols, degs))

    @property
    def size(self) -> int:
        return self.index_set.shape[0]

    @property
    def points(self) -> np.ndarray:
        """Grid points in physical (box) coordinates."""
        return self.grid * self.half_width

    @property
    def max_degree(self) -> int:
        """Largest total polynomial degree over the terms."""
        return int((self.index_set - 1).sum(axis=1).max())

    def with_half_width(self, half_width) -> "SmolyakBasis":
        hw = np.broadcast_to(np.asarray(half_width, dtype=float), (self.dim,)).copy()
        return SmolyakBasis(self.dim, self.order, self.index_set, self.grid, hw, self.eps)

    def to_unit(self, x, check: bool = True) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.dim:
            raise DimensionError(f"expected points of dimension {self.dim}, got {x.shape[-1]}")
        u = x / self.half_width
        if check:
            bad = np.abs(u) > 1.0 + self.eps
            if bad.any():
                k = int(np.argwhere(bad.any(axis=1))[0, 0])
                raise OutOfDomain(f"point {x[k].tolist()} lies outside the box "
                                  f"of half-width {self.half_width.tolist()}")
        return u

    def values(self, x, check: bool = True) -> np.ndarray:
        """Matrix of term values ``T_i(x_k)``, shape (K, M)."""
        u = self.to_unit(x, check)
        table = _chebyshev_table(u, self._lmax)                 # (K, n, L)
        cols, degs = self._active
        return table[:, cols, degs].prod(axis=-1)

    def partials(self, x, check: bool = True) -> np.ndarray:
        """Physical partial derivatives ``dT_i/dx_j``, shape (K, M, n)."""
        u = self.to_unit(x, check)
        table = _chebyshev_table(u, self._lmax)
        dtable = _derivative_table(u, self._lmax)
        cols = np.arange(self.dim)
        factors = table[:, cols, self.index_set - 1]            # (K, M, n)
        dfactors = dtable[:, cols, self.index_set - 1]
        out = np.empty_like(factors)
        for j in range(self.dim):
            # product of every other factor, never a division
            others = np.delete(factors, j, axis=-1).prod(axis=-1)
            out[:, :, j] = others * dfactors[:, :, j] / self.half_width[j]
        return out

    def directional_derivative(self, x, v, check: bool = True) -> np.ndarray:
        """``sum_j v_j(x_k) dT_i/dx_j (x_k)``, shape (K, M).

        Same as contracting ``partials`` with ``v`` but only touches the
        coordinates each term depends on.
        """
        u = self.to_unit(x, check)
        v = np.atleast_2d(np.asarray(v, dtype=float)) / self.half_width
        if v.shape != u.shape:
            raise DimensionError("direction field must match the points' shape")
        table = _chebyshev_table(u, self._lmax)
        dtable = _derivative_table(u, self._lmax)
        cols, degs = self._active
        factors = table[:, cols, degs]                          # (K, M, r)
        out = np.zeros(factors.shape[:2])
        for s in range(cols.shape[1]):
            others = np.delete(factors, s, axis=-1).prod(axis=-1)
            out += others * dtable[:, cols[:, s], degs[:, s]] * v[:, cols[:, s]]
        return out

    def evaluate(self, coefficients, x, check: bool = True) -> np.ndarray:
        return self.values(x, check) @ np.asarray(coefficients)

    def gradient(self, coefficients, x, check: bool = True) -> np.ndarray:
        """Gradient of the approximant with the given coefficients, shape (K, n)
        (or (K, n, p) for a coefficient matrix with p columns)."""
        p = self.partials(x, check)
        return np.einsum("kmj,m...->kj...", p, np.asarray(coefficients))


def build_basis(n: int, mu: int, half_width=1.0, eps: float = 1e-12) -> SmolyakBasis:
    """Build the Smolyak index set and grid for dimension ``n`` and order ``mu``.

    The grid is the union over ``|i| = n + mu`` of products of Chebyshev
    extrema sets; the index set is the union over ``max(n, mu+1) <= |i| <= n + mu``
    of the boxes ``l_j <= m(i_j)``.  Both are deduplicated and sorted.
    """
    if n < 1 or mu < 1:
        raise DimensionError(f"need n >= 1 and mu >= 1, got n={n}, mu={mu}")
    point_keys = set()
    for multi in _compositions(n + mu, n):
        sets = [_extrema_keys(level_size(i)) for i in multi]
        point_keys.update(itertools.product(*sets))
    q = max(n, mu + 1)
    terms = set()
    for total in range(q, n + mu + 1):
        for multi in _compositions(total, n):
            terms.update(itertools.product(*[range(1, level_size(i) + 1) for i in multi]))
    grid = np.array([[_key_to_point(k) for k in key] for key in sorted(point_keys)])
    index_set = np.array(sorted(terms, key=lambda t: (sum(t), t)), dtype=int)
    if grid.shape[0] != index_set.shape[0]:
        raise SingularSystem(f"grid has {grid.shape[0]} points but index set has "
                             f"{index_set.shape[0]} terms")
    hw = np.broadcast_to(np.asarray(half_width, dtype=float), (n,)).copy()
    if np.any(hw <= 0):
        raise DimensionError("box half-widths must be positive")
    return SmolyakBasis(n, mu, index_set, grid, hw, eps)


def eval_term(basis: SmolyakBasis, term_index: int, x) -> float:
    """Value of a single tensor term at one point."""
    return float(basis.values(np.asarray(x, dtype=float)[None, :])[0, term_index])


def eval_term_partial(basis: SmolyakBasis, term_index: int, j: int, x) -> float:
    """Partial derivative of a single tensor term with respect to ``x_j``.

    Includes the ``1/a_j`` box factor; zero whenever the term is constant
    in coordinate ``j``.
    """
    return float(basis.partials(np.asarray(x, dtype=float)[None, :])[0, term_index, j])


@dataclass(frozen=True, eq=False)
class SparseApproximant:
    basis: SmolyakBasis
    coefficients: np.ndarray

    def __call__(self, x) -> np.ndarray:
        return self.basis.evaluate(self.coefficients, x)

    def gradient(self, x) -> np.ndarray:
        return self.basis.gradient(self.coefficients, x)


def solve_pivoted_qr(matrix: np.ndarray, rhs: np.ndarray, rcond: float = 1e-13) -> np.ndarray:
    """Solve a square system with column-pivoted QR; raise on numerical singularity."""
    q, r, perm = scipy.linalg.qr(matrix, pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[-1] <= rcond * diag[0]:
        raise SingularSystem("collocation matrix is numerically singular")
    y = scipy.linalg.solve_triangular(r, q.T @ rhs)
    out = np.empty_like(y)
    out[perm] = y
    return out


def fit_collocation(basis: SmolyakBasis, values: Sequence[float]) -> SparseApproximant:
    """Coefficients that interpolate ``values`` (one per grid point, or a
    matrix with one column per target) on the basis grid."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != basis.size:
        raise DimensionError(f"expected {basis.size} values, got {values.shape[0]}")
    theta = solve_pivoted_qr(basis.values(basis.points), values)
    return SparseApproximant(basis, theta)
