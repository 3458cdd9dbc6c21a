"""Koopman eigenfunctions, inverse eigenfunction map and mode decomposition.

Principal eigenfunctions solve ``F(x) . grad phi(x) = -lam phi(x)`` for each
decay rate ``lam`` of the linearized disagreement dynamics.  Each one is
approximated on a Smolyak basis by

    minimize ||A theta||^2  subject to  grad phi(0) = r,  phi(0) = 0,

where row ``k`` of ``A`` is the PDE residual at grid point ``x_k`` and ``r``
is the matching unit eigenvector.  Stacking the eigenfunctions gives the
map ``H``; its inverse is fitted on the images ``z_k = H(x_k)`` and
expanded in monomials, which yields the mode decomposition

    y(t) = sum_gamma c_gamma exp(-lam_gamma t) prod_k H_k(y0)^gamma_k,
    lam_gamma = sum_k gamma_k lam_k.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from numpy.polynomial import chebyshev as npcheb

from .errors import DegenerateImage, IllConditioned, InfeasibleConstraints
from .network import LinearSpectrum, Network
from .sparse_grid import SmolyakBasis, build_basis


def constrained_lstsq(a: np.ndarray, e: np.ndarray, b: np.ndarray,
                      rcond: float = 1e-12, cond_limit: float = 1e12):
    """``argmin ||a x||`` subject to ``e x = b``.

    The constraints are eliminated with a complete QR factorization of
    ``e^T``; the reduced least-squares problem is solved by pivoted QR, taking the
    minimum-norm solution when the objective is flat along some feasible
    direction.  Returns ``(x, info)``.
    """
    p, m = e.shape
    q, r = scipy.linalg.qr(e.T)                       # e^T = q r, q is (m, m)
    rdiag = np.abs(np.diag(r[:p, :p]))
    if rdiag.min() <= 1e-13 * max(rdiag.max(), 1.0):
        raise InfeasibleConstraints("constraint rows are linearly dependent")
    cond = rdiag.max() / rdiag.min()
    if cond > cond_limit:
        warnings.warn(f"constraint block condition estimate {cond:.2e}", IllConditioned)
    y = scipy.linalg.solve_triangular(r[:p, :p], b, trans="T")
    q1, q2 = q[:, :p], q[:, p:]
    x_part = q1 @ y
    # complete orthogonal factorization: minimum-norm solution without an SVD
    w, _, rank, _ = scipy.linalg.lstsq(a @ q2, -(a @ x_part), cond=rcond,
                                       lapack_driver="gelsy")
    x = x_part + q2 @ w
    if np.abs(e @ x - b).max() > 1e-8 * max(1.0, np.abs(b).max()):
        raise InfeasibleConstraints("constraints not met after the solve")
    return x, {"rank": int(rank), "constraint_cond": float(cond)}


@dataclass(frozen=True, eq=False)
class EigenfunctionApprox:
    """Approximate principal eigenfunction with decay rate ``eigenvalue``."""

    eigenvalue: float
    eigenvector: np.ndarray
    basis: SmolyakBasis
    coefficients: np.ndarray
    residual: float = np.nan

    def __call__(self, x, check: bool = True) -> np.ndarray:
        return self.basis.evaluate(self.coefficients, x, check)

    def gradient(self, x, check: bool = True) -> np.ndarray:
        return self.basis.gradient(self.coefficients, x, check)


def transport_matrices(network: Network, basis: SmolyakBasis):
    """``(P, V)`` with ``P[k, i] = F(x_k) . grad T_i(x_k)`` and ``V[k, i] = T_i(x_k)``
    on the grid; the residual matrix for decay rate ``lam`` is ``P + lam V``."""
    x = basis.points
    return basis.directional_derivative(x, network.disagreement_vector_field(x)), basis.values(x)


def eigenfunction_system(network: Network, basis: SmolyakBasis, lam: float, transport=None):
    """Residual matrix ``A`` and constraint rows ``B`` (gradient at 0), ``C`` (value at 0)."""
    p, v = transport_matrices(network, basis) if transport is None else transport
    a = p + lam * v
    origin = np.zeros((1, basis.dim))
    b = basis.partials(origin)[0].T
    c = basis.values(origin)
    return a, b, c


def fit_eigenfunction(network: Network, basis: SmolyakBasis, lam: float, r,
                      rcond: float = 1e-12, transport=None) -> EigenfunctionApprox:
    """Fit one principal eigenfunction by equality-constrained least squares.

    ``transport`` may carry precomputed ``transport_matrices`` so that several
    eigenfunctions on the same basis share the grid evaluation.
    """
    if not lam > 0:
        raise ValueError("decay rate must be positive")
    r = np.asarray(r, dtype=float)
    if basis.dim != network.n or r.shape != (network.n,):
        raise ValueError("basis, network and eigenvector dimensions differ")
    a, b, c = eigenfunction_system(network, basis, lam, transport)
    theta, _ = constrained_lstsq(a, np.vstack([b, c]), np.concatenate([r, [0.0]]), rcond=rcond)
    return EigenfunctionApprox(float(lam), r, basis, theta, float(np.linalg.norm(a @ theta)))


def pde_residual(network: Network, phi: EigenfunctionApprox, test_points) -> float:
    """``max |F(x) . grad phi(x) + lam phi(x)|`` over the test points."""
    x = np.atleast_2d(np.asarray(test_points, dtype=float))
    f = network.disagreement_vector_field(x)
    res = np.einsum("kj,kj->k", f, phi.gradient(x)) + phi.eigenvalue * phi(x)
    return float(np.abs(res).max())


@dataclass(frozen=True, eq=False)
class InverseMapApprox:
    """Chebyshev-tensor approximation of ``H^{-1}``: column ``j`` gives ``x_j``."""

    basis: SmolyakBasis
    coefficients: np.ndarray
    residuals: np.ndarray

    def __call__(self, z) -> np.ndarray:
        return self.basis.evaluate(self.coefficients, z, check=False)


def eigenfunction_map(eigenfunctions: Sequence[EigenfunctionApprox], x, check: bool = True) -> np.ndarray:
    """Stack the eigenfunctions into ``H(x)``, shape (K, len(eigenfunctions))."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.column_stack([phi(x, check) for phi in eigenfunctions])


def fit_inverse_map(eigenfunctions: Sequence[EigenfunctionApprox], basis_z: SmolyakBasis | None = None,
                    margin: float = 0.1, rcond: float = 1e-10,
                    extra_points: np.ndarray | None = None) -> InverseMapApprox:
    """Least-squares fit of ``H^{-1}`` from images of sample states.

    ``z_k = H(x_k)`` for every point of the eigenfunctions' grid, plus any
    ``extra_points`` in the state box.  The z-basis (default: same order as
    the state basis) is rescaled to the box ``(1 + margin) max_k |z_k|`` per
    coordinate.  Without extra points the square system is solved with a
    truncated pseudoinverse; with them it is an overdetermined least-squares
    fit, which is far better conditioned when ``H`` rotates the grid.
    """
    basis_x = eigenfunctions[0].basis
    x = basis_x.points
    if extra_points is not None and len(extra_points):
        x = np.vstack([x, np.asarray(extra_points, dtype=float)])
    z = eigenfunction_map(eigenfunctions, x)
    if basis_z is None:
        basis_z = build_basis(len(eigenfunctions), basis_x.order)
    if basis_z.dim != z.shape[1]:
        raise ValueError("z-basis dimension must equal the number of eigenfunctions")
    extent = np.abs(z).max(axis=0)
    if np.linalg.matrix_rank(z, tol=1e-10 * max(extent.max(), 1e-300)) < z.shape[1]:
        raise DegenerateImage("eigenfunction images of the sample states are rank deficient")
    basis_z = basis_z.with_half_width((1.0 + margin) * extent)
    d = basis_z.values(z)
    if d.shape[0] == d.shape[1]:
        phi = scipy.linalg.pinv(d, rtol=rcond) @ x
    else:
        phi = scipy.linalg.lstsq(d, x, cond=rcond, lapack_driver="gelsy")[0]
    residuals = np.linalg.norm(d @ phi - x, axis=0)
    return InverseMapApprox(basis_z, phi, residuals)


def chebyshev_to_monomial(basis: SmolyakBasis, coefficients: np.ndarray):
    """Exact change from scaled Chebyshev tensor terms to monomials ``z^gamma``.

    Returns ``(exponents, coeffs)`` with ``exponents`` of shape (T, n) and
    ``coeffs`` of shape (T,) or (T, p) for a coefficient matrix.
    """
    coefficients = np.asarray(coefficients, dtype=float)
    lmax = int(basis.index_set.max())
    # 1-D tables: monomial coefficients of T_l(z / a_j)
    one_d = []
    for j in range(basis.dim):
        rows = []
        for l in range(1, lmax + 1):
            mono = npcheb.cheb2poly(np.eye(lmax)[l - 1])[:l]
            rows.append(mono / basis.half_width[j] ** np.arange(l))
        one_d.append(rows)
    acc: dict[tuple, np.ndarray] = {}
    for term, coef in zip(basis.index_set, coefficients):
        factors = [one_d[j][term[j] - 1] for j in range(basis.dim)]
        nz = [np.nonzero(np.abs(fa) > 0)[0] for fa in factors]
        for expo in np.array(np.meshgrid(*nz, indexing="ij")).reshape(basis.dim, -1).T:
            w = np.prod([factors[j][expo[j]] for j in range(basis.dim)])
            key = tuple(int(e) for e in expo)
            acc[key] = acc.get(key, 0.0) + w * coef
    keys = sorted(acc, key=lambda k: (sum(k), k))
    return np.array(keys, dtype=int), np.array([acc[k] for k in keys])


def eval_monomials(exponents: np.ndarray, coeffs: np.ndarray, z) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=float))
    powers = np.prod(z[:, None, :] ** exponents[None, :, :], axis=-1)
    return powers @ coeffs


@dataclass(frozen=True, eq=False)
class KoopmanDecomposition:
    """Truncated mode decomposition of the disagreement flow.

    ``exponents[t]`` is the multi-index over the nontrivial eigenfunctions
    ``H_2..H_n``; ``rates[t]`` its induced decay rate and ``modes[t]`` the
    mode vector ``c_t``.
    """

    exponents: np.ndarray
    rates: np.ndarray
    modes: np.ndarray
    eigenfunctions: tuple
    degree_bound: int
    spectrum: LinearSpectrum | None = None
    consensus: EigenfunctionApprox | None = None
    inverse: InverseMapApprox | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_terms(self) -> int:
        return len(self.rates)

    @property
    def half_width(self) -> np.ndarray:
        return self.eigenfunctions[0].basis.half_width

    def eigenfunction_values(self, y, check: bool = True) -> np.ndarray:
        """Products ``prod_k H_k(y)^gamma_k`` for every term, shape (K, T)."""
        h = eigenfunction_map(self.eigenfunctions, y, check)
        return np.prod(h[:, None, :] ** self.exponents[None, :, :], axis=-1)

    def flow(self, y0, t) -> np.ndarray:
        return kmd_flow(self, y0, t)

    def to_csv(self, path) -> None:
        k = self.exponents.shape[1]
        n = self.modes.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"gamma{i + 2}" for i in range(k)] + ["rate"]
                            + [f"c{i + 1}" for i in range(n)])
            for g, lam, c in zip(self.exponents, self.rates, self.modes):
                writer.writerow([int(v) for v in g] + [repr(float(lam))] + [repr(float(v)) for v in c])


def expand_modes(inverse: InverseMapApprox, spectrum: LinearSpectrum, degree_bound: int | None = None,
                 eigenfunctions: Sequence[EigenfunctionApprox] = (), drop_tol: float = 1e-12,
                 consensus_index: int = 0) -> KoopmanDecomposition:
    """Monomial form of ``H^{-1}`` as a mode decomposition on the consensus complement.

    Terms that involve the consensus eigenfunction (index
    ``consensus_index``) vanish on the complement and are dropped, as is the
    constant term; its size is reported in ``diagnostics["constant_term"]``.
    """
    exps, coeffs = chebyshev_to_monomial(inverse.basis, inverse.coefficients)
    if degree_bound is None:
        degree_bound = inverse.basis.max_degree
    if degree_bound < 1:
        raise ValueError("degree bound must be >= 1")
    total = exps.sum(axis=1)
    const = np.linalg.norm(coeffs[total == 0]) if np.any(total == 0) else 0.0
    keep = (total >= 1) & (total <= degree_bound) & (exps[:, consensus_index] == 0)
    keep &= np.linalg.norm(coeffs, axis=1) > drop_tol
    exps, coeffs = exps[keep], coeffs[keep]
    rates = exps @ spectrum.eigenvalues
    others = [k for k in range(exps.shape[1]) if k != consensus_index]
    eig = tuple(eigenfunctions[k] for k in others) if eigenfunctions else ()
    cons = eigenfunctions[consensus_index] if eigenfunctions else None
    return KoopmanDecomposition(exps[:, others], rates, coeffs, eig, int(degree_bound),
                                spectrum, cons, inverse, {"constant_term": float(const)})


def kmd_flow(decomp: KoopmanDecomposition, y0, t) -> np.ndarray:
    """Evaluate ``sum_gamma c_gamma exp(-lam_gamma t) phi_gamma(y0)``.

    ``t`` may be a scalar (result shape (K, n)) or a 1-D array (shape (len(t), K, n)).
    """
    phi = decomp.eigenfunction_values(y0)
    t_arr = np.asarray(t, dtype=float)
    decay = np.exp(-np.multiply.outer(t_arr, decomp.rates))
    out = np.einsum("...t,kt,tj->...kj", decay, phi, decomp.modes)
    return out


def decompose(network: Network, order: int, half_width, degree_bound: int | None = None,
              inverse_order: int | None = None, margin: float = 0.1,
              rcond: float = 1e-12, inverse_oversampling: float = 2.0,
              seed: int = 0) -> KoopmanDecomposition:
    """Full pipeline: spectrum, eigenfunction fits, inverse map and mode expansion.

    ``inverse_oversampling`` adds ``round(factor * M)`` seeded uniform states
    from the box to the grid for the inverse fit; ``0`` fits on the grid alone.
    """
    _, spectrum = network.jacobian_at_origin()
    basis = build_basis(network.n, order, half_width)
    transport = transport_matrices(network, basis)
    eigs = [fit_eigenfunction(network, basis, lam, r, rcond=rcond, transport=transport)
            for lam, r in zip(spectrum.eigenvalues, spectrum.eigenvectors.T)]
    basis_z = build_basis(network.n, inverse_order or order)
    extra = None
    if inverse_oversampling > 0:
        count = int(round(inverse_oversampling * basis_z.size))
        rng = np.random.default_rng(seed)
        extra = rng.uniform(-basis.half_width, basis.half_width, size=(count, network.n))
    inverse = fit_inverse_map(eigs, basis_z, margin=margin, extra_points=extra)
    decomp = expand_modes(inverse, spectrum, degree_bound, eigs)
    decomp.diagnostics.update({
        "basis_size": basis.size,
        "pde_residuals": [e.residual for e in eigs],
        "inverse_residuals": inverse.residuals.tolist(),
        "inverse_samples": int(basis.size + (0 if extra is None else len(extra))),
    })
    return decomp
