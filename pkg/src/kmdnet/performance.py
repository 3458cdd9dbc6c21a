"""Performance measure: expected output energy of the disagreement dynamics.

From a mode decomposition ``y(t) = sum_i c_i exp(-lam_i t) phi_i(y0)`` the
energy integral is

    rho = sum_{i,j} E[phi_i(y0) phi_j(y0)] (c_i^T Q c_j) / (lam_i + lam_j).
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .errors import OutOfBox
from .flow import InitialDistribution, _check_psd, measure_by_simulation
from .koopman import KoopmanDecomposition, decompose
from .network import LinearSpectrum, Network, center


@dataclass
class PerformanceReport:
    rho_koopman: float
    rho_simulation: float | None = None
    rho_analytic: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def relative_error(self) -> float | None:
        if self.rho_simulation is None or self.rho_simulation <= 0:
            return None
        return abs(self.rho_koopman - self.rho_simulation) / self.rho_simulation

    def as_row(self) -> dict:
        row = asdict(self)
        row.pop("metadata")
        row["relative_error"] = self.relative_error
        return row


def term_gram(decomp: KoopmanDecomposition, q) -> np.ndarray:
    """``(c_i^T Q c_j) / (lam_i + lam_j)`` for all term pairs."""
    c = decomp.modes
    return (c @ q @ c.T) / np.add.outer(decomp.rates, decomp.rates)


def measure_by_koopman(decomp: KoopmanDecomposition, dist: InitialDistribution, q=None) -> float:
    """Expected energy from the decomposition over a discrete initial law."""
    n = decomp.modes.shape[1]
    q = np.eye(n) if q is None else _check_psd(q)
    y0 = center(dist.atoms)
    hw = decomp.half_width
    outside = np.abs(y0) > hw * (1 + 1e-12)
    if outside.any():
        k = int(np.argwhere(outside.any(axis=1))[0, 0])
        raise OutOfBox(f"centered atom {y0[k].tolist()} lies outside the basis box; "
                       f"need half-width >= {np.abs(y0).max():.6g}")
    phi = decomp.eigenfunction_values(y0)                        # (K, T)
    gram = term_gram(decomp, q)
    per_atom = np.einsum("ki,ij,kj->k", phi, gram, phi)
    return float(np.dot(dist.probabilities, per_atom))


def linear_closed_form(spectrum: LinearSpectrum) -> float:
    """``sum_{i>=2} 1 / (2 lambda_i)`` over the nonzero linearized Laplacian rates."""
    return float(np.sum(0.5 / np.asarray(spectrum.laplacian_eigenvalues)))


def linear_measure(network: Network, dist: InitialDistribution, q=None) -> float:
    """Performance of the linearized network over ``dist``.

    Solves ``L_d P + P L_d = Q`` for the disagreement Laplacian at the
    origin; the energy from ``y0`` is ``y0^T P y0``.  Equals
    ``linear_closed_form`` for isotropic atoms and ``Q = I``.
    """
    n = network.n
    q = np.eye(n) if q is None else _check_psd(q)
    jac, _ = network.jacobian_at_origin()
    p = scipy.linalg.solve_continuous_lyapunov(jac, -q)
    y0 = center(dist.atoms)
    return float(np.dot(dist.probabilities, np.einsum("ki,ij,kj->k", y0, p, y0)))


def box_for(dist: InitialDistribution, margin: float = 0.05) -> float:
    """Smallest symmetric half-width covering the centered atoms, plus a margin."""
    return float((1.0 + margin) * np.abs(dist.centered).max())


def compare(network: Network, order: int, dist: InitialDistribution, q=None,
            half_width: float | None = None, degree_bound: int | None = None,
            simulate: bool = True, tol: float = 1e-10, **options) -> PerformanceReport:
    """Koopman pipeline value against the simulation oracle."""
    if half_width is None:
        half_width = box_for(dist)
    t0 = time.perf_counter()
    decomp = decompose(network, order, half_width, degree_bound, **options)
    rho_k = measure_by_koopman(decomp, dist, q)
    t1 = time.perf_counter()
    rho_s = measure_by_simulation(network, dist, q, tol=tol) if simulate else None
    t2 = time.perf_counter()
    meta = {
        "n": network.n,
        "edges": len(network.graph.edges),
        "coupling": network.coupling.kind,
        "parameter": network.coupling.parameter,
        "delta": network.delta,
        "order": order,
        "half_width": half_width,
        "atoms": len(dist.probabilities),
        "terms": decomp.n_terms,
        "koopman_seconds": t1 - t0,
        "simulation_seconds": t2 - t1,
        **decomp.diagnostics,
    }
    return PerformanceReport(rho_k, rho_s, None, meta)
