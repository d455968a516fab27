"""Value types shared across the package: phase-space vectors, the canonical
Poisson tensor, second moments and covariances, potentials, and energy
functionals of the moment couple.

Phase-space vectors are ordered ``(q_1..q_n, p_1..p_n)``.  The Poisson tensor
uses the convention ``{q, p} = +1`` so that ``dz/dt = J grad H`` gives
``dq/dt = dH/dp``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import make_interp_spline
from scipy.special import ndtr

__all__ = [
    "SimulationAbort",
    "make_symplectic_form",
    "phase_vector",
    "dof_count",
    "symmetrize",
    "Covariance",
    "covariance_from_moments",
    "second_moment_from_covariance",
    "symplectic_eigenvalues",
    "uncertainty_admissible",
    "PotentialModel",
    "Harmonic",
    "Quartic",
    "Morse",
    "Step",
    "PolynomialPotential",
    "TabulatedPotential",
    "potential_derivative",
    "MomentFunctional",
    "fd_partials",
    "flatten_moments",
    "unflatten_moments",
    "matrix_from_upper_gradient",
    "upper_gradient_from_matrix",
]


class SimulationAbort(RuntimeError):
    """Raised when a running simulation cannot continue (boundary breach,
    step-size underflow, non-finite state).  ``record`` carries whatever
    partial trajectory was collected before the abort."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


# ---------------------------------------------------------------------------
# Phase space
# ---------------------------------------------------------------------------

def make_symplectic_form(n: int) -> np.ndarray:
    """Canonical 2n x 2n Poisson tensor with J[q_i, p_i] = +1 (read-only)."""
    if int(n) != n or n < 1:
        raise ValueError(f"dof count must be a positive integer, got {n!r}")
    return _symplectic_form(int(n))


@lru_cache(maxsize=None)
def _symplectic_form(n):
    J = np.zeros((2 * n, 2 * n), dtype=np.int64)
    J[:n, n:] = np.eye(n, dtype=np.int64)
    J[n:, :n] = -np.eye(n, dtype=np.int64)
    J = J.astype(float)
    J.setflags(write=False)
    return J


def phase_vector(z, n: Optional[int] = None) -> np.ndarray:
    z = np.array(z, dtype=float).reshape(-1)
    if z.size == 0 or z.size % 2:
        raise ValueError(f"phase vector must have even length, got {z.size}")
    if n is not None and z.size != 2 * n:
        raise ValueError(f"phase vector length {z.size} does not match n={n}")
    if not np.all(np.isfinite(z)):
        raise ValueError("phase vector has non-finite entries")
    return z


def dof_count(z) -> int:
    return np.asarray(z).shape[-1] // 2


def symmetrize(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def _square_symmetric(M, name, tol=1e-12) -> np.ndarray:
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
        raise ValueError(f"{name} must be a square matrix of even size, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > tol * scale:
        raise ValueError(f"{name} is not symmetric")
    return symmetrize(M)


def covariance_from_moments(z, X) -> np.ndarray:
    """Sigma = 2X - z z^T."""
    z = np.asarray(z, dtype=float)
    return 2.0 * np.asarray(X, dtype=float) - np.outer(z, z)


def second_moment_from_covariance(z, Sigma) -> np.ndarray:
    """X = (Sigma + z z^T) / 2, i.e. <zeta zeta>/2."""
    z = np.asarray(z, dtype=float)
    return 0.5 * (np.asarray(Sigma, dtype=float) + np.outer(z, z))


@dataclass(frozen=True)
class Covariance:
    """Dimensionless covariance ``matrix``; the physical covariance is
    ``hbar * matrix``."""

    matrix: np.ndarray
    hbar: float = 1.0

    def __post_init__(self):
        M = _square_symmetric(self.matrix, "covariance")
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            raise ValueError("covariance is not positive definite") from None
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @property
    def n(self) -> int:
        return self.matrix.shape[0] // 2

    @property
    def physical(self) -> np.ndarray:
        return self.hbar * self.matrix


def symplectic_eigenvalues(S) -> np.ndarray:
    """Williamson symplectic spectrum of a symmetric positive-definite matrix,
    ascending, one value per degree of freedom."""
    S = _square_symmetric(S, "matrix")
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise ValueError("matrix is not positive definite") from None
    n = S.shape[0] // 2
    J = make_symplectic_form(n)
    # eigenvalues of J S come in pairs +-i nu
    nu = np.sort(np.abs(np.linalg.eigvals(J @ S).imag))
    return nu[::2].copy() if n > 0 else nu


def uncertainty_admissible(cov: Covariance, tol: float = 1e-12) -> bool:
    """True iff every symplectic eigenvalue of hbar*Sigma is >= hbar/2."""
    if not isinstance(cov, Covariance):
        cov = Covariance(np.asarray(cov))
    nu = symplectic_eigenvalues(cov.physical)
    return bool(np.all(nu >= 0.5 * cov.hbar - tol))


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialModel:
    """Base class for one-dimensional potentials V(q) with analytic
    derivatives up to ``derivative_order``."""

    derivative_order: int = field(default=5, kw_only=True)
    kind = "abstract"

    def __call__(self, q):
        return self.derivative(0, q)

    def derivative(self, k: int, q):
        if k < 0 or k > self.derivative_order:
            raise ValueError(
                f"{self.kind} potential provides derivatives up to order "
                f"{self.derivative_order}, requested {k}")
        q = np.asarray(q, dtype=float)
        if not np.all(np.isfinite(q)):
            raise ValueError("potential evaluated at non-finite q")
        out = self._derivative(k, q)
        return float(out) if out.ndim == 0 else out

    def _derivative(self, k, q):
        raise NotImplementedError

    def gaussian_average(self, q, variance, order: int):
        """<V(q + x)> for x ~ N(0, variance), from the Taylor expansion of V
        truncated at ``order`` (odd central moments vanish, even ones are
        (2k-1)!! variance^k)."""
        total = 0.0
        for k in range(order // 2 + 1):
            total = total + self.derivative(2 * k, q) * gaussian_taylor_weight(k) * variance ** k
        return total


def gaussian_taylor_weight(k: int) -> float:
    """(2k-1)!! / (2k)!  =  1 / (2^k k!)."""
    return 1.0 / (2.0 ** k * float(np.prod(np.arange(1, k + 1)) if k else 1.0))


@dataclass(frozen=True)
class Harmonic(PotentialModel):
    k: float = 1.0
    kind = "harmonic"

    def _derivative(self, order, q):
        if order == 0:
            return 0.5 * self.k * q ** 2
        if order == 1:
            return self.k * q
        if order == 2:
            return np.full_like(q, self.k)
        return np.zeros_like(q)


@dataclass(frozen=True)
class Quartic(PotentialModel):
    """V = lam q^4 / 4."""

    lam: float = 1.0
    kind = "quartic"

    def _derivative(self, order, q):
        c = (0.25, 1.0, 3.0, 6.0, 6.0)
        if order > 4:
            return np.zeros_like(q)
        return self.lam * c[order] * q ** (4 - order)


@dataclass(frozen=True)
class Morse(PotentialModel):
    """V = D (1 - exp(-a q))^2."""

    D: float = 1.0
    a: float = 1.0
    kind = "morse"

    def _derivative(self, order, q):
        e1 = np.exp(-self.a * q)
        if order == 0:
            return self.D * (1.0 - e1) ** 2
        return self.D * (-2.0 * (-self.a) ** order * e1 + (-2.0 * self.a) ** order * e1 ** 2)


@dataclass(frozen=True)
class Step(PotentialModel):
    """mu * Theta(q).  Only the value is available pointwise."""

    mu: float = 1.0
    derivative_order: int = field(default=0, kw_only=True)
    kind = "step"

    def __post_init__(self):
        if self.derivative_order != 0:
            raise ValueError("step potential has no pointwise derivatives")

    def _derivative(self, order, q):
        return self.mu * np.heaviside(q, 0.5)

    def smeared(self, q, variance):
        """<mu Theta(q + x)> for x ~ N(0, variance)."""
        return self.mu * ndtr(np.asarray(q) / np.sqrt(variance))

    def gaussian_average(self, q, variance, order=None):
        return self.smeared(q, variance)


@dataclass(frozen=True)
class PolynomialPotential(PotentialModel):
    """V = sum_k coeffs[k] q^k."""

    coeffs: tuple = (0.0, 0.0, 0.5)
    kind = "polynomial"

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def _derivative(self, order, q):
        return Polynomial(self.coeffs).deriv(order)(q) if order else Polynomial(self.coeffs)(q)


@dataclass(frozen=True, eq=False)
class TabulatedPotential(PotentialModel):
    """Interpolating spline through tabulated values.  A degree-7 spline keeps
    derivatives through order 5 continuous."""

    nodes: np.ndarray = None
    values: np.ndarray = None
    kind = "tabulated"

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if nodes.ndim != 1 or nodes.shape != values.shape or nodes.size < 9:
            raise ValueError("tabulated potential needs >= 9 matching nodes and values")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("tabulated nodes must be strictly increasing")
        if self.derivative_order > 5:
            raise ValueError("tabulated potential supports derivatives up to order 5")
        object.__setattr__(self, "_spline", make_interp_spline(nodes, values, k=7))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    def _derivative(self, order, q):
        if np.any(q < self.nodes[0]) or np.any(q > self.nodes[-1]):
            raise ValueError("tabulated potential evaluated outside its table")
        return self._spline(q, nu=order)


def potential_derivative(pot: PotentialModel, k: int, q):
    """k-th derivative of the potential at q (analytic)."""
    return pot.derivative(k, q)


# ---------------------------------------------------------------------------
# Functionals of the moment couple
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _upper_indices(d):
    iu = np.triu_indices(d)
    off = iu[0] != iu[1]
    for a in (*iu, off):
        a.setflags(write=False)
    return iu, off


def flatten_moments(z, M) -> np.ndarray:
    """Concatenate z with the upper triangle (row-major, diagonal included) of M."""
    M = np.asarray(M, dtype=float)
    iu, _ = _upper_indices(M.shape[0])
    return np.concatenate([np.asarray(z, dtype=float), M[iu]])


def unflatten_moments(y, n: int):
    y = np.asarray(y, dtype=float)
    d = 2 * n
    iu, _ = _upper_indices(d)
    M = np.empty((d, d))
    M[iu] = y[d:]
    M[iu[1], iu[0]] = y[d:]
    return y[:d].copy(), M


def matrix_from_upper_gradient(g_upper, d: int) -> np.ndarray:
    """Symmetric partial dF/dM (dF = Tr(dF/dM dM)) from derivatives with
    respect to the upper-triangle coordinates of M."""
    iu, off = _upper_indices(d)
    g = np.array(g_upper, dtype=float)
    g[off] *= 0.5
    A = np.empty((d, d))
    A[iu] = g
    A[iu[1], iu[0]] = g
    return A


def upper_gradient_from_matrix(A) -> np.ndarray:
    """Inverse of :func:`matrix_from_upper_gradient`."""
    A = np.asarray(A, dtype=float)
    iu, off = _upper_indices(A.shape[0])
    g = A[iu].copy()
    g[off] *= 2.0
    return g


def fd_partials(func, z, M, step=1e-5):
    """Central-difference partials of func(z, M).  Matrix entries are perturbed
    on the upper triangle together with their mirror and the result is
    returned in the symmetric convention."""
    z = np.asarray(z, dtype=float)
    M = np.asarray(M, dtype=float)
    n = z.size // 2
    y0 = flatten_moments(z, M)
    g = np.empty_like(y0)
    for i in range(y0.size):
        yp = y0.copy()
        ym = y0.copy()
        yp[i] += step
        ym[i] -= step
        fp = func(*unflatten_moments(yp, n))
        fm = func(*unflatten_moments(ym, n))
        g[i] = (fp - fm) / (2.0 * step)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite finite-difference partials")
    d = 2 * n
    return g[:d], matrix_from_upper_gradient(g[d:], d)


@dataclass(frozen=True)
class MomentFunctional:
    """Scalar functional F(z, M) of a mean and a symmetric matrix (either the
    second moment X or the covariance Sigma).

    ``partials`` returns ``(dF/dz, dF/dM)`` with dF/dM symmetric; when absent,
    central differences are used.
    """

    value: Callable[[np.ndarray, np.ndarray], float]
    partials: Optional[Callable] = None
    name: str = ""

    def __call__(self, z, M) -> float:
        return float(self.value(np.asarray(z, dtype=float), np.asarray(M, dtype=float)))

    @property
    def analytic(self) -> bool:
        return self.partials is not None

    def gradients(self, z, M, fd_step=1e-5):
        z = np.asarray(z, dtype=float)
        M = np.asarray(M, dtype=float)
        if self.partials is not None:
            gz, gM = self.partials(z, M)
            return np.asarray(gz, dtype=float), np.asarray(gM, dtype=float)
        return fd_partials(self.value, z, M, fd_step)
