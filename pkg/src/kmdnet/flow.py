"""Trajectory integration and the brute-force output-energy oracle."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .errors import NonPSD, StepSizeUnderflow
from .network import Network, center


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def to_csv(self, path) -> None:
        n = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"x{i + 1}" for i in range(n)])
            for t, x in zip(self.times, self.states):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in x])


@dataclass(frozen=True, eq=False)
class InitialDistribution:
    """Finite probability distribution over initial states."""

    atoms: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        p = np.asarray(self.probabilities, dtype=float)
        if p.shape != (atoms.shape[0],):
            raise ValueError("need one probability per atom")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be positive and sum to 1")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probabilities", p)

    @classmethod
    def uniform(cls, atoms) -> "InitialDistribution":
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        return cls(atoms, np.full(atoms.shape[0], 1.0 / atoms.shape[0]))

    @classmethod
    def two_agent(cls, values) -> "InitialDistribution":
        """Uniform atoms ``(p, -p)`` for each ``p`` in ``values``."""
        v = np.asarray(values, dtype=float)
        return cls.uniform(np.column_stack([v, -v]))

    @classmethod
    def example2(cls) -> "InitialDistribution":
        return cls.two_agent([0.0, 0.1, 0.2, 0.3, 0.4])

    @classmethod
    def example3(cls) -> "InitialDistribution":
        return cls.two_agent(np.round(np.arange(63) * 0.01, 12))

    @classmethod
    def uniform_box(cls, n: int, samples: int, seed=None, half_width: float = 1.0):
        rng = np.random.default_rng(seed)
        return cls.uniform(rng.uniform(-half_width, half_width, size=(samples, n)))

    @classmethod
    def isotropic(cls, n: int) -> "InitialDistribution":
        """Atoms ``+-sqrt(n-1) u_k`` over an orthonormal basis ``u_k`` of
        the consensus complement, so that ``E[y y^T]`` is the centering projector."""
        basis = scipy.linalg.null_space(np.ones((1, n)))
        atoms = np.sqrt(n - 1) * np.concatenate([basis.T, -basis.T])
        return cls.uniform(atoms)

    @property
    def centered(self) -> np.ndarray:
        return center(self.atoms)

    def second_moment(self) -> np.ndarray:
        y = self.centered
        return (y.T * self.probabilities) @ y


def _check_psd(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1] or not np.allclose(q, q.T, atol=1e-12):
        raise NonPSD("Q must be a symmetric square matrix")
    if np.linalg.eigvalsh(q).min() < -1e-10:
        raise NonPSD("Q has a negative eigenvalue")
    return q


def integrate(network: Network, x0, t_end: float, tol: float = 1e-9,
              t_eval: Sequence[float] | None = None, method: str = "RK45") -> Trajectory:
    """Integrate ``dx/dt = -L(x) x`` with an adaptive Dormand-Prince 5(4) scheme.

    ``tol`` is used for both the relative and absolute tolerance.  The
    returned samples are at ``t_eval`` (dense output) if given, else at the
    accepted steps.
    """
    if not t_end > 0 or not tol > 0:
        raise ValueError("t_end and tol must be positive")
    x0 = np.asarray(x0, dtype=float)
    sol = solve_ivp(lambda t, x: network.vector_field(x), (0.0, t_end), x0,
                    method=method, rtol=tol, atol=tol, t_eval=t_eval)
    if sol.status < 0:
        raise StepSizeUnderflow(sol.message)
    return Trajectory(sol.t, sol.y.T)


def output_energy(network: Network, x0, q=None, tol: float = 1e-10,
                  method: str = "RK45", return_details: bool = False):
    """``int_0^inf y^T Q y dt`` for ``y = center(x(t))``.

    The integrand is carried as an extra state so the integrator's error
    control covers the quadrature.  Integration stops once
    ``|y|_inf <= 1e-8 |y0|_inf`` or at ``t = 50 / lambda_2``; the remainder is
    approximated by the exponential tail ``y^T Q y / (2 lambda_2)``.
    """
    n = network.n
    q = np.eye(n) if q is None else _check_psd(q)
    x0 = np.asarray(x0, dtype=float)
    y0 = center(x0)
    scale = np.abs(y0).max()
    if scale <= 4 * np.finfo(float).eps * np.abs(x0).max():     # consensus up to round-off
        return (0.0, {"t_end": 0.0, "tail": 0.0}) if return_details else 0.0
    lam2 = network.spectrum.algebraic_connectivity
    t_max = 50.0 / lam2
    threshold = 1e-8 * scale

    def rhs(t, s):
        x = s[:n]
        y = x - x.mean()
        return np.concatenate([network.vector_field(x), [y @ q @ y]])

    def converged(t, s):
        x = s[:n]
        return np.abs(x - x.mean()).max() - threshold

    converged.terminal = True
    converged.direction = -1
    # energy accumulator is scaled to the initial energy so atol stays relative
    sol = solve_ivp(rhs, (0.0, t_max), np.concatenate([x0, [0.0]]), method=method,
                    rtol=tol, atol=np.concatenate([np.full(n, tol * scale), [tol * scale ** 2]]),
                    events=converged)
    if sol.status < 0:
        raise StepSizeUnderflow(sol.message)
    final = sol.y[:, -1]
    yf = final[:n] - final[:n].mean()
    tail = float(yf @ q @ yf) / (2.0 * lam2)
    total = float(final[n]) + tail
    if return_details:
        return total, {"t_end": float(sol.t[-1]), "tail": tail, "nfev": int(sol.nfev)}
    return total


def _energy_job(args):
    network, x0, q, tol, method = args
    return output_energy(network, x0, q, tol, method)


def default_workers() -> int:
    return max(1, int(os.environ.get("KMDNET_WORKERS", "1")))


def measure_by_simulation(network: Network, dist: InitialDistribution, q=None,
                          tol: float = 1e-10, method: str = "RK45",
                          workers: int | None = None) -> float:
    """Exact expectation of the output energy over a discrete initial law."""
    workers = default_workers() if workers is None else workers
    jobs = [(network, x0, q, tol, method) for x0 in dist.atoms]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            energies = list(pool.map(_energy_job, jobs))
    else:
        energies = [_energy_job(j) for j in jobs]
    return float(np.dot(dist.probabilities, energies))
