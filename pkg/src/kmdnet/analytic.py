"""Closed-form and truncated-series performance values for small networks.

Covers the two-agent networks whose
restricted Koopman eigenfunction is known in closed form:

* power-decay coupling ``(1 + z^2)^(-alpha)``:
  ``phi(z) = z exp(sum_k alpha(alpha-1)...(alpha-k+1) z^(2k) / (2k k!))``
* Kuramoto coupling ``K sin(z)/z``: ``phi(z) = tan(z/2)``

with ``z = x_1 - x_2``.  The inverse map comes from series reversion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotInvertible, SeriesRangeError
from .flow import InitialDistribution

DEFAULT_ORDER = 17

#: largest |p| for two-agent atoms (p, -p) accepted by the series routes
ALPHA_RANGE = 0.4
KURAMOTO_RANGE = np.pi / 5


def series_mul(a, b, order: int) -> np.ndarray:
    return np.convolve(a, b)[: order + 1]


def series_reciprocal(a, order: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a[0] == 0:
        raise NotInvertible("series with zero constant term has no reciprocal")
    out = np.zeros(order + 1)
    out[0] = 1.0 / a[0]
    for k in range(1, order + 1):
        m = min(k, len(a) - 1)
        out[k] = -np.dot(a[1 : m + 1], out[k - 1 :: -1][:m]) / a[0]
    return out


def series_exp(a, order: int) -> np.ndarray:
    """``exp(a)`` for a series with zero constant term (k e_k = sum j a_j e_{k-j})."""
    a = np.zeros(order + 1) if len(a) == 0 else np.pad(np.asarray(a, float), (0, max(0, order + 1 - len(a))))[: order + 1]
    if a[0] != 0:
        raise ValueError("series_exp expects a zero constant term")
    out = np.zeros(order + 1)
    out[0] = 1.0
    j = np.arange(order + 1)
    for k in range(1, order + 1):
        out[k] = np.dot(j[1 : k + 1] * a[1 : k + 1], out[k - 1 :: -1][:k]) / k
    return out


def series_compose(outer, inner, order: int) -> np.ndarray:
    """``outer(inner(z))`` for ``inner`` with zero constant term (Horner)."""
    inner = np.asarray(inner, dtype=float)
    if inner[0] != 0:
        raise ValueError("inner series must vanish at zero")
    out = np.zeros(order + 1)
    for c in np.asarray(outer, dtype=float)[::-1]:
        out = series_mul(out, inner, order)
        out = np.pad(out, (0, order + 1 - len(out)))
        out[0] += c
    return out


def series_reversion(a, order: int) -> np.ndarray:
    """Compositional inverse by Lagrange inversion.

    For ``f(z) = a_1 z + a_2 z^2 + ...`` with ``a_1 != 0`` the inverse has
    coefficients ``[w^k] f^{-1} = (1/k) [z^(k-1)] (z / f(z))^k``.
    """
    a = np.pad(np.asarray(a, dtype=float), (0, order + 2))
    if a[0] != 0:
        raise NotInvertible("series must vanish at zero")
    if a[1] == 0:
        raise NotInvertible("linear coefficient is zero")
    h = series_reciprocal(a[1 : order + 2], order)     # z / f(z)
    out = np.zeros(order + 1)
    power = np.zeros(order + 1)
    power[0] = 1.0
    for k in range(1, order + 1):
        power = series_mul(power, h, order)
        out[k] = power[k - 1] / k
    return out


@dataclass(frozen=True)
class MaclaurinSeries:
    """Truncated Maclaurin series ``sum_k c_k z^k`` (ascending coefficients)."""

    coefficients: np.ndarray
    radius_hint: float = np.inf

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, z):
        return np.polynomial.polynomial.polyval(np.asarray(z, dtype=float), self.coefficients)

    def derivative(self) -> "MaclaurinSeries":
        return MaclaurinSeries(np.polynomial.polynomial.polyder(self.coefficients), self.radius_hint)

    def compose(self, inner: "MaclaurinSeries") -> "MaclaurinSeries":
        order = max(self.order, inner.order)
        return MaclaurinSeries(series_compose(self.coefficients, inner.coefficients, order))

    def scaled(self, factor: float) -> "MaclaurinSeries":
        """Series of ``z -> f(factor z)``."""
        return MaclaurinSeries(self.coefficients * factor ** np.arange(self.order + 1),
                               self.radius_hint / abs(factor))


def _falling(alpha: float, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= alpha - i
    return out


def alpha_eigenfunction_series(alpha: float, order: int = DEFAULT_ORDER) -> MaclaurinSeries:
    """Restricted eigenfunction of the two-agent power-decay network as a
    series in ``z = x_1 - x_2``, truncated at degree ``order``."""
    if order < 1:
        raise ValueError("order must be >= 1")
    inner = np.zeros(order + 1)
    for k in range(1, order // 2 + 1):
        inner[2 * k] = _falling(alpha, k) / (2 * k * math.factorial(k))
    expo = series_exp(inner, order)
    coeffs = np.zeros(order + 1)
    coeffs[1:] = expo[:order]
    return MaclaurinSeries(coeffs, radius_hint=1.0)


def kuramoto_eigenfunction_series(order: int = DEFAULT_ORDER) -> MaclaurinSeries:
    """``tan(z/2)`` as a series in ``z``, from the sine and cosine series."""
    k = np.arange(order + 1)
    sin = np.zeros(order + 1)
    cos = np.zeros(order + 1)
    fact = np.array([math.factorial(int(i)) for i in k], dtype=float)
    sin[1::2] = (-1.0) ** ((k[1::2] - 1) // 2) / fact[1::2]
    cos[0::2] = (-1.0) ** (k[0::2] // 2) / fact[0::2]
    tan = series_mul(sin, series_reciprocal(cos, order), order)
    return MaclaurinSeries(tan, radius_hint=np.pi / 2).scaled(0.5)


def alpha_inverse_series(series: MaclaurinSeries, order: int | None = None) -> MaclaurinSeries:
    order = series.order if order is None else order
    return MaclaurinSeries(series_reversion(series.coefficients, order))


def two_agent_measure_analytic(kind: str, parameter: float, dist: InitialDistribution,
                               order: int = DEFAULT_ORDER, edge_weight: float = 1.0,
                               q=None) -> float:
    """Performance value of a two-agent network from truncated series.

    ``kind`` is ``"alpha"`` (power-decay exponent ``parameter``) or
    ``"kuramoto"`` (gain ``parameter``).  Atoms must have the form
    ``(p, -p)``; the restricted decomposition has modes
    ``c_j = psi_j (1, -1) / 2`` and rates ``j * lambda_2``.
    """
    atoms = dist.atoms
    if atoms.shape[1] != 2 or not np.allclose(atoms[:, 0], -atoms[:, 1], atol=1e-12):
        raise ValueError("two-agent series need atoms of the form (p, -p)")
    p = atoms[:, 0]
    if kind == "alpha":
        phi = alpha_eigenfunction_series(parameter, order)
        lam = 2.0 * edge_weight
        limit = ALPHA_RANGE
    elif kind == "kuramoto":
        phi = kuramoto_eigenfunction_series(order)
        lam = 2.0 * parameter * edge_weight
        limit = KURAMOTO_RANGE
    else:
        raise ValueError(f"unknown two-agent family {kind!r}")
    bad = np.abs(p) > limit + 1e-12
    if bad.any():
        raise SeriesRangeError(f"|p| = {np.abs(p[bad]).max():g} exceeds the validated "
                               f"range {limit:g} for the {kind} series")
    # the eigenfunction is scaled in z, so the decomposition is independent of edge_weight
    psi = series_reversion(phi.coefficients, order)
    w = phi(2.0 * p)
    q = np.eye(2) if q is None else np.asarray(q, dtype=float)
    mode = np.array([0.5, -0.5])
    qfac = float(mode @ q @ mode)
    j = np.arange(1, order + 1)
    cij = qfac * np.outer(psi[1:], psi[1:])
    denom = lam * (j[:, None] + j[None, :])
    powers = w[:, None] ** j[None, :]                     # (K, order)
    per_atom = np.einsum("ki,ij,kj->k", powers, cij / denom, powers)
    return float(np.dot(dist.probabilities, per_atom))
