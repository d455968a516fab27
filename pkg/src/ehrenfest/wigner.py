"""One-dof Wigner functions on a uniform phase-space grid.

Arrays are indexed ``values[i_q, j_p]``.  Derivatives use fourth-order
finite differences (central in the interior, one-sided near the edges) and
integrals use the trapezoid rule.  The Moyal bracket is truncated at O(hbar^2)
or taken at classical order; with {f, g} = f_q g_p - f_p g_q the evolution is
dW/dt = {{H, W}}.

In the co-moving frame the state is the pair (z, W~) where W~ is centred on
the mean z.  Its evolution is

    dz/dt  = J grad_z <H~>
    dW~/dt = {{H~, W~}} + {zeta~ . J <{zeta~, H~}>, W~}

and the second term equals -(g_q W~_p - g_p W~_q) with g = <grad H~>.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import factorial
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from .core import (
    Covariance,
    PotentialModel,
    SimulationAbort,
    make_symplectic_form,
    phase_vector,
    uncertainty_admissible,
)

__all__ = [
    "WignerGrid",
    "ComovingState",
    "GroupElement",
    "PhaseField",
    "BoundaryError",
    "gaussian_init",
    "moments",
    "grid_covariance",
    "boundary_mass_fraction",
    "check_boundary",
    "derivative",
    "poisson_bracket",
    "moyal_bracket",
    "moyal_rhs",
    "lab_vector_field",
    "TranslatedHamiltonian",
    "LinearizedHamiltonian",
    "StepHamiltonian",
    "CallableHamiltonian",
    "comoving_step_rhs",
    "comoving_vector_field",
    "step_potential_scenario",
    "step_vector_field",
    "grid_dissipation",
    "smoothed_step",
    "hat_delta",
    "q_marginal",
    "group_action",
    "moyal_permutation_check",
    "write_csv",
    "write_binary",
    "read_binary",
]

ORDERS = ("classical", "hbar2")
BOUNDARY_TOL = 1e-8
MIN_POINTS = 7


class BoundaryError(SimulationAbort):
    """Probability reached the edge of the grid."""


@dataclass(frozen=True, eq=False)
class WignerGrid:
    values: np.ndarray
    q_axis: np.ndarray
    p_axis: np.ndarray
    frame: str = "lab"
    hbar: float = 1.0

    def __post_init__(self):
        q = np.asarray(self.q_axis, dtype=float)
        p = np.asarray(self.p_axis, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (q.size, p.size):
            raise ValueError(f"values have shape {v.shape}, axes give {(q.size, p.size)}")
        for ax, name in ((q, "q"), (p, "p")):
            if ax.size < 2:
                raise ValueError(f"{name} axis needs at least two points")
            d = np.diff(ax)
            if np.any(d <= 0) or np.ptp(d) > 1e-9 * d[0]:
                raise ValueError(f"{name} axis must be uniform and increasing")
        if self.frame not in ("lab", "comoving"):
            raise ValueError("frame must be 'lab' or 'comoving'")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        object.__setattr__(self, "q_axis", q)
        object.__setattr__(self, "p_axis", p)
        object.__setattr__(self, "values", v)

    @property
    def dq(self) -> float:
        return (self.q_axis[-1] - self.q_axis[0]) / (self.q_axis.size - 1)

    @property
    def dp(self) -> float:
        return (self.p_axis[-1] - self.p_axis[0]) / (self.p_axis.size - 1)

    @property
    def shape(self):
        return self.values.shape

    def mesh(self):
        return np.meshgrid(self.q_axis, self.p_axis, indexing="ij")

    def with_values(self, values) -> "WignerGrid":
        return replace(self, values=np.asarray(values, dtype=float).reshape(self.shape))

    def integrate(self, f) -> float:
        """Trapezoid integral of an array on this grid."""
        return float(np.trapezoid(np.trapezoid(f, dx=self.dp, axis=1), dx=self.dq))


@dataclass(frozen=True, eq=False)
class ComovingState:
    grid: WignerGrid
    z: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.grid.frame != "comoving":
            raise ValueError("co-moving state needs a grid in the comoving frame")
        object.__setattr__(self, "z", phase_vector(self.z, 1))

    def pack(self) -> np.ndarray:
        return np.concatenate([self.z, self.grid.values.ravel()])

    def unpack(self, y, t=None) -> "ComovingState":
        return ComovingState(self.grid.with_values(y[2:]), y[:2], self.t if t is None else t)


def _axis(lo, hi, n):
    return np.linspace(lo, hi, int(n))


def gaussian_init(z, Sigma, domain, resolution, hbar: float = 1.0, frame: str = "lab",
                  require_admissible: bool = True) -> WignerGrid:
    """Sample (2 pi hbar)^-1 det(Sigma)^-1/2 exp(-(x-z).Sigma^-1(x-z) / (2 hbar)).

    ``Sigma`` is dimensionless; the physical covariance is hbar * Sigma.
    ``domain`` is ((qmin, qmax), (pmin, pmax)); ``resolution`` is an int or
    an (nq, np) pair.  In the comoving frame the grid is centred on zero and
    ``z`` is only carried alongside.
    """
    z = phase_vector(z, 1)
    cov = Sigma if isinstance(Sigma, Covariance) else Covariance(np.asarray(Sigma, dtype=float), hbar)
    if cov.n != 1:
        raise ValueError("grids are one degree of freedom only")
    if require_admissible and not uncertainty_admissible(Covariance(cov.matrix, hbar)):
        raise ValueError("covariance violates the uncertainty bound (symplectic eigenvalue < 1/2)")
    S = cov.matrix
    nq, npts = (resolution, resolution) if np.isscalar(resolution) else resolution
    (qmin, qmax), (pmin, pmax) = domain
    center = np.zeros(2) if frame == "comoving" else z
    half = 6.0 * np.sqrt(hbar * np.diag(S))
    if (center[0] - half[0] < qmin or center[0] + half[0] > qmax
            or center[1] - half[1] < pmin or center[1] + half[1] > pmax):
        raise ValueError(
            f"domain {domain} does not contain the mean +- 6 standard deviations "
            f"({center - half}, {center + half})")
    q, p = _axis(qmin, qmax, nq), _axis(pmin, pmax, npts)
    Q, P = np.meshgrid(q - center[0], p - center[1], indexing="ij")
    Si = np.linalg.inv(S)
    quad = Si[0, 0] * Q * Q + 2.0 * Si[0, 1] * Q * P + Si[1, 1] * P * P
    W = np.exp(-quad / (2.0 * hbar)) / (2.0 * np.pi * hbar * np.sqrt(np.linalg.det(S)))
    grid = WignerGrid(W, q, p, frame, hbar)
    check_boundary(grid)
    return grid


def moments(grid: WignerGrid):
    """(mass, mean, <zeta zeta>/2) by the trapezoid rule."""
    Q, P = grid.mesh()
    W = grid.values
    mass = grid.integrate(W)
    mean = np.array([grid.integrate(Q * W), grid.integrate(P * W)])
    qq, qp, pp = grid.integrate(Q * Q * W), grid.integrate(Q * P * W), grid.integrate(P * P * W)
    return mass, mean, 0.5 * np.array([[qq, qp], [qp, pp]])


def grid_covariance(grid: WignerGrid):
    """(mean, physical covariance) of a normalized grid."""
    mass, mean, second = moments(grid)
    return mean / mass, 2.0 * second / mass - np.outer(mean / mass, mean / mass)


def boundary_mass_fraction(grid: WignerGrid, width: int = 3) -> float:
    """Share of the integral of |W| carried by the outer ``width`` rows and columns."""
    A = np.abs(grid.values)
    total = A.sum()
    if total == 0:
        return 0.0
    inner = A[width:-width, width:-width].sum()
    return float((total - inner) / total)


def check_boundary(grid: WignerGrid, tol: float = BOUNDARY_TOL, t: Optional[float] = None):
    frac = boundary_mass_fraction(grid)
    if frac > tol:
        when = "" if t is None else f" at t={t:.6g}"
        raise BoundaryError(
            f"boundary mass fraction {frac:.3g} exceeds {tol:.1g}{when}; enlarge the domain")


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

def _fd_weights(offsets, order):
    """Weights w with sum_k w_k f(x + s_k h) = h^order f^(order)(x) + O(h^len)."""
    s = np.asarray(offsets, dtype=float)
    m = s.size
    A = np.vander(s, m, increasing=True).T
    b = np.zeros(m)
    b[order] = factorial(order)
    return np.linalg.solve(A, b)


CLOSURES = ("one_sided", "zero")


@lru_cache(maxsize=64)
def _operator(n: int, h: float, order: int, closure: str = "one_sided") -> sp.csr_matrix:
    """Fourth-order accurate derivative matrix of the given order.

    ``one_sided`` shifts the stencil inward near the edges.  ``zero`` keeps
    the central stencil and treats values outside the grid as zero; for odd
    orders the matrix is then exactly antisymmetric, which makes transport
    of a decaying W energy-stable.
    """
    if n < MIN_POINTS:
        raise ValueError(f"grid needs at least {MIN_POINTS} points per axis for the stencils")
    if closure not in CLOSURES:
        raise ValueError(f"closure must be one of {CLOSURES}")
    width = order + 4 if order % 2 else order + 3
    half = width // 2
    rows, cols, vals = [], [], []
    cache = {}
    for i in range(n):
        if closure == "zero":
            start = i - half
        else:
            start = min(max(i - half, 0), n - width)
        offs = tuple(range(start - i, start - i + width))
        if offs not in cache:
            cache[offs] = _fd_weights(offs, order) / h ** order
        for j, w in zip(range(start, start + width), cache[offs]):
            if 0 <= j < n:
                rows.append(i)
                cols.append(j)
                vals.append(w)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def derivative(values, grid: WignerGrid, a: int, b: int, closure: str = "one_sided") -> np.ndarray:
    """d^(a+b) f / dq^a dp^b on the grid."""
    out = np.asarray(values, dtype=float)
    if a:
        out = _operator(grid.q_axis.size, grid.dq, a, closure) @ out
    if b:
        out = (_operator(grid.p_axis.size, grid.dp, b, closure) @ out.T).T
    return out


@dataclass(eq=False)
class PhaseField:
    """A scalar field on a grid with optional exact derivatives.

    ``exact`` maps (a, b) to the sampled derivative d^(a+b)/dq^a dp^b; any
    derivative not listed is computed by finite differences.
    """

    values: np.ndarray
    exact: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)
    exact_only: bool = False
    closure: str = "one_sided"

    def derivative(self, grid: WignerGrid, a: int, b: int) -> np.ndarray:
        if (a, b) in self.exact:
            return self.exact[(a, b)]
        if self.exact_only:
            raise ValueError(f"derivative {(a, b)} is not available for this field")
        key = (a, b)
        cache = self.__dict__.setdefault("_cache", {})
        if key not in cache:
            cache[key] = derivative(self.values, grid, a, b, self.closure)
        return cache[key]

    @classmethod
    def polynomial(cls, coeffs: Dict[Tuple[int, int], float], grid: WignerGrid, max_order: int = 3):
        """Field sum c q^i p^j with every derivative up to ``max_order`` exact."""
        Q, P = grid.mesh()

        def term(a, b):
            out = np.zeros(grid.shape)
            for (i, j), c in coeffs.items():
                if i >= a and j >= b:
                    fa = factorial(i) / factorial(i - a)
                    fb = factorial(j) / factorial(j - b)
                    out = out + c * fa * fb * Q ** (i - a) * P ** (j - b)
            return out

        exact = {(a, b): term(a, b) for a in range(max_order + 1)
                 for b in range(max_order + 1 - a) if a + b > 0}
        return cls(term(0, 0), exact)


def _as_field(H, grid, closure="one_sided"):
    if isinstance(H, PhaseField):
        return H
    H = np.asarray(H, dtype=float)
    if H.shape != grid.shape:
        raise ValueError(f"field has shape {H.shape}, grid is {grid.shape}")
    return PhaseField(H, closure=closure)


def _density(W, grid):
    """W is transported, so it gets the zero-extension stencils."""
    return _as_field(W, grid, "zero")


def poisson_bracket(f, g, grid: WignerGrid) -> np.ndarray:
    """{f, g} = f_q g_p - f_p g_q."""
    f, g = _as_field(f, grid), _as_field(g, grid)
    return (f.derivative(grid, 1, 0) * g.derivative(grid, 0, 1)
            - f.derivative(grid, 0, 1) * g.derivative(grid, 1, 0))


def _hbar2_correction(f, g, grid):
    d = lambda u, a, b: u.derivative(grid, a, b)
    return -(grid.hbar ** 2 / 24.0) * (
        d(f, 3, 0) * d(g, 0, 3) - 3.0 * d(f, 2, 1) * d(g, 1, 2)
        + 3.0 * d(f, 1, 2) * d(g, 2, 1) - d(f, 0, 3) * d(g, 3, 0))


def moyal_bracket(f, g, grid: WignerGrid, order: str = "hbar2") -> np.ndarray:
    """Moyal bracket truncated at classical order or at O(hbar^2)."""
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}")
    f, g = _as_field(f, grid), _as_field(g, grid)
    out = poisson_bracket(f, g, grid)
    if order == "hbar2":
        out = out + _hbar2_correction(f, g, grid)
    return out


def moyal_rhs(H, grid: WignerGrid, order: str = "hbar2") -> np.ndarray:
    """dW/dt = {{H, W}} with H a PhaseField or an array sampled on the grid."""
    return moyal_bracket(H, _density(grid.values, grid), grid, order)


def lab_vector_field(H_of_t: Callable, template: WignerGrid, order: str = "hbar2",
                     guard: bool = True) -> Callable:
    """f(t, y) for a flattened lab-frame grid.  ``H_of_t(t, grid)`` returns
    the Hamiltonian field at time t."""

    def f(t, y):
        grid = template.with_values(y)
        return moyal_rhs(H_of_t(t, grid), grid, order).ravel()

    return f


# ---------------------------------------------------------------------------
# Co-moving Hamiltonians H~(z, zeta~)
# ---------------------------------------------------------------------------

class _ComovingHamiltonian:
    classical_only = False

    def field(self, z, grid: WignerGrid) -> PhaseField:
        raise NotImplementedError

    def mean_gradient(self, z, grid: WignerGrid, H: PhaseField) -> np.ndarray:
        """g = <grad_zeta~ H~> by quadrature."""
        W = grid.values
        return np.array([grid.integrate(H.derivative(grid, 1, 0) * W),
                         grid.integrate(H.derivative(grid, 0, 1) * W)])

    def z_gradient(self, z, grid: WignerGrid, H: PhaseField, g: np.ndarray) -> np.ndarray:
        """grad_z <H~>.  Translation-family Hamiltonians depend on z + zeta~
        only, so this equals g."""
        return g

    def energy(self, z, grid: WignerGrid) -> float:
        return grid.integrate(self.field(z, grid).values * grid.values)


@dataclass(frozen=True)
class TranslatedHamiltonian(_ComovingHamiltonian):
    """H~ = (p + p~)^2 / 2 + V(q + q~)."""

    potential: PotentialModel

    def field(self, z, grid):
        Q, P = grid.mesh()
        x, mom = Q + z[0], P + z[1]
        V = self.potential
        exact = {(0, 1): mom, (0, 2): np.ones(grid.shape)}
        for a, b in ((1, 1), (0, 3), (2, 1), (1, 2)):
            exact[(a, b)] = np.zeros(grid.shape)
        for k in (1, 2, 3):
            if k <= V.derivative_order:
                exact[(k, 0)] = np.broadcast_to(V.derivative(k, x), grid.shape)
        return PhaseField(0.5 * mom ** 2 + V.derivative(0, x), exact)


@dataclass(frozen=True)
class LinearizedHamiltonian(_ComovingHamiltonian):
    """H~ = h(z) + grad h(z) . zeta~ with h = p^2/2 + V(q); the coherent case."""

    potential: PotentialModel

    def _parts(self, z):
        V = self.potential
        h = 0.5 * z[1] ** 2 + float(V.derivative(0, z[0]))
        return h, np.array([float(V.derivative(1, z[0])), z[1]])

    def field(self, z, grid):
        Q, P = grid.mesh()
        h, dh = self._parts(z)
        zero = np.zeros(grid.shape)
        exact = {(1, 0): np.full(grid.shape, dh[0]), (0, 1): np.full(grid.shape, dh[1])}
        for a in range(4):
            for b in range(4 - a):
                if a + b > 1:
                    exact[(a, b)] = zero
        return PhaseField(h + dh[0] * Q + dh[1] * P, exact)

    def z_gradient(self, z, grid, H, g):
        W = grid.values
        mass = grid.integrate(W)
        Q, P = grid.mesh()
        mean = np.array([grid.integrate(Q * W), grid.integrate(P * W)])
        _, dh = self._parts(z)
        V2 = float(self.potential.derivative(2, z[0]))
        return dh * mass + np.array([V2 * mean[0], mean[1]])


def smoothed_step(x, width):
    """Integral of the hat function max(0, 1 - |x|/width)/width."""
    u = np.clip(np.asarray(x, dtype=float) / width, -1.0, 1.0)
    return np.where(u < 0, 0.5 * (1.0 + u) ** 2, 1.0 - 0.5 * (1.0 - u) ** 2)


def hat_delta(x, width):
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(x, dtype=float)) / width) / width


@dataclass(frozen=True)
class StepHamiltonian(_ComovingHamiltonian):
    """H~ = (p + p~)^2 / 2 + mu Theta(q + q~).

    Theta is smoothed so its derivative is a hat function one q-cell wide on
    each side.  Quadrature of the hat against W~ then equals the linearly
    interpolated q-marginal at -q, which keeps the force and the
    counter-term consistent.
    """

    mu: float = 1.0
    classical_only = True

    def field(self, z, grid):
        Q, P = grid.mesh()
        x, mom = Q + z[0], P + z[1]
        exact = {(1, 0): self.mu * hat_delta(x, grid.dq), (0, 1): mom}
        return PhaseField(0.5 * mom ** 2 + self.mu * smoothed_step(x, grid.dq), exact,
                          exact_only=True)


@dataclass(frozen=True)
class CallableHamiltonian(_ComovingHamiltonian):
    """H~ given as ``func(z, q~, p~)``; grid derivatives by finite differences
    and grad_z <H~> by central differences in z."""

    func: Callable
    z_step: float = 1e-5

    def field(self, z, grid):
        Q, P = grid.mesh()
        return PhaseField(np.broadcast_to(self.func(z, Q, P), grid.shape).astype(float))

    def z_gradient(self, z, grid, H, g):
        out = np.zeros(2)
        for i in range(2):
            e = np.zeros(2)
            e[i] = self.z_step
            out[i] = (self.energy(z + e, grid) - self.energy(z - e, grid)) / (2 * self.z_step)
        return out


_SIXTH = np.array([1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0])


@lru_cache(maxsize=16)
def _sixth_difference(n: int) -> sp.csr_matrix:
    return sp.diags([np.full(n - abs(k), w) for k, w in zip(range(-3, 4), _SIXTH)],
                    list(range(-3, 4)), format="csr")


def grid_dissipation(W, grid: WignerGrid, speed_q: float, speed_p: float,
                     strength: float) -> np.ndarray:
    """Sixth-difference damping of grid-scale noise.

    The undivided sixth difference annihilates polynomials up to degree
    five, so away from the edges it leaves mass, mean and second moments
    unchanged.  The highest grid mode decays at rate strength * speed / spacing.
    """
    W = np.asarray(W, dtype=float)
    out = (speed_q / grid.dq) * (_sixth_difference(grid.q_axis.size) @ W)
    out += (speed_p / grid.dp) * (_sixth_difference(grid.p_axis.size) @ W.T).T
    return (strength / 64.0) * out


def _field_speeds(H, grid):
    return (float(np.max(np.abs(H.derivative(grid, 0, 1)))),
            float(np.max(np.abs(H.derivative(grid, 1, 0)))))


def comoving_step_rhs(state: ComovingState, H_tilde, order: str = "classical",
                      dissipation: float = 0.0):
    """(dz, dW~) for the co-moving pair.  ``dissipation`` > 0 adds
    grid_dissipation scaled by the local transport speeds."""
    grid, z = state.grid, state.z
    if order == "hbar2" and H_tilde.classical_only:
        raise ValueError(f"{type(H_tilde).__name__} supports classical order only")
    H = H_tilde.field(z, grid)
    g = H_tilde.mean_gradient(z, grid, H)
    dz = make_symplectic_form(1) @ H_tilde.z_gradient(z, grid, H, g)
    W = _density(grid.values, grid)
    dW = moyal_bracket(H, W, grid, order) - (g[0] * W.derivative(grid, 0, 1)
                                             - g[1] * W.derivative(grid, 1, 0))
    if dissipation:
        dW = dW + grid_dissipation(W.values, grid, *_field_speeds(H, grid), dissipation)
    return dz, dW


def comoving_vector_field(H_tilde, template: WignerGrid, order: str = "classical",
                          dissipation: float = 0.0) -> Callable:
    """f(t, y) with y = (q, p, W~ flattened)."""

    def f(t, y):
        state = ComovingState(template.with_values(y[2:]), y[:2], t)
        dz, dW = comoving_step_rhs(state, H_tilde, order, dissipation)
        return np.concatenate([dz, dW.ravel()])

    return f


def q_marginal(grid: WignerGrid) -> np.ndarray:
    """Integral over p at every q node."""
    return np.trapezoid(grid.values, dx=grid.dp, axis=1)


def _interior_check(grid, x):
    lo, hi = grid.q_axis[MIN_POINTS // 2], grid.q_axis[-1 - MIN_POINTS // 2]
    if not lo <= x <= hi:
        raise BoundaryError(
            f"step location {x:.6g} lies outside the grid interior [{lo:.6g}, {hi:.6g}]")


def step_potential_scenario(mu: float, state: ComovingState, dissipation: float = 0.0):
    """(dz, dW~) for H~ = (p + p~)^2/2 + mu Theta(q + q~).

    q' = p and p' = -mu * (q-marginal of W~ at q~ = -q, linearly
    interpolated).  W~ is moved by the smoothed-step transport plus the
    nonlocal term -mu dW~/dp~ times the same marginal.
    """
    grid, (q, p) = state.grid, state.z
    _interior_check(grid, -q)
    m = float(np.interp(-q, grid.q_axis, q_marginal(grid)))
    W = _density(grid.values, grid)
    H = StepHamiltonian(mu).field(state.z, grid)
    transport = poisson_bracket(H, W, grid)
    Wp, Wq = W.derivative(grid, 0, 1), W.derivative(grid, 1, 0)
    mean_p = grid.integrate(H.derivative(grid, 0, 1) * W.values)
    dW = transport - mu * m * Wp + mean_p * Wq
    if dissipation:
        dW = dW + grid_dissipation(W.values, grid, *_field_speeds(H, grid), dissipation)
    return np.array([p, -mu * m]), dW


def step_vector_field(mu: float, template: WignerGrid, dissipation: float = 0.0) -> Callable:
    def f(t, y):
        state = ComovingState(template.with_values(y[2:]), y[:2], t)
        dz, dW = step_potential_scenario(mu, state, dissipation)
        return np.concatenate([dz, dW.ravel()])

    return f


# ---------------------------------------------------------------------------
# Group action and bracket identities
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GroupElement:
    """Pullback W(zeta) -> W(S zeta + shift).  ``phase`` is carried only."""

    S: np.ndarray = field(default_factory=lambda: np.eye(2))
    shift: np.ndarray = field(default_factory=lambda: np.zeros(2))
    phase: float = 0.0

    def __post_init__(self):
        S = np.array(self.S, dtype=float)
        if S.shape != (2, 2):
            raise ValueError("S must be 2x2")
        J = make_symplectic_form(1)
        defect = np.max(np.abs(S.T @ J @ S - J))
        if defect > 1e-10:
            raise ValueError(f"S is not symplectic (defect {defect:.3g})")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "shift", phase_vector(self.shift, 1))

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.S == np.eye(2)) and np.all(self.shift == 0))

    def transform_moments(self, mean, cov):
        """Mean and covariance of the pulled-back distribution."""
        Si = np.linalg.inv(self.S)
        return Si @ (np.asarray(mean) - self.shift), Si @ np.asarray(cov) @ Si.T


def group_action(g: GroupElement, grid: WignerGrid, clip_tol: float = 1e-6) -> WignerGrid:
    """Pull back by zeta -> S zeta + shift with bilinear interpolation.

    Raises if more than ``clip_tol`` of the mass of |W| would land outside
    the domain.
    """
    if g.is_identity:
        return grid.with_values(grid.values.copy())
    Q, P = grid.mesh()
    Si = np.linalg.inv(g.S)
    dq, dp = Q - g.shift[0], P - g.shift[1]
    img_q = Si[0, 0] * dq + Si[0, 1] * dp
    img_p = Si[1, 0] * dq + Si[1, 1] * dp
    outside = ((img_q < grid.q_axis[0]) | (img_q > grid.q_axis[-1])
               | (img_p < grid.p_axis[0]) | (img_p > grid.p_axis[-1]))
    A = np.abs(grid.values)
    clipped = float(A[outside].sum() / A.sum())
    if clipped > clip_tol:
        raise ValueError(
            f"transformed support does not fit the domain ({clipped:.3g} of the mass is clipped)")
    pts = np.stack([g.S[0, 0] * Q + g.S[0, 1] * P + g.shift[0],
                    g.S[1, 0] * Q + g.S[1, 1] * P + g.shift[1]], axis=-1)
    interp = RegularGridInterpolator((grid.q_axis, grid.p_axis), grid.values,
                                     method="linear", bounds_error=False, fill_value=0.0)
    return grid.with_values(interp(pts))


def moyal_permutation_check(a, b, c, grid: WignerGrid, order: str = "classical") -> float:
    """|int a {{b, c}} - int c {{a, b}}|."""
    a = _as_field(a, grid)
    c = _as_field(c, grid)
    left = grid.integrate(a.values * moyal_bracket(b, c, grid, order))
    right = grid.integrate(c.values * moyal_bracket(a, b, grid, order))
    return abs(left - right)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def write_csv(grid: WignerGrid, path):
    """(q, p, W) triples, q varying slowest."""
    Q, P = grid.mesh()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "p", "W"])
        for row in zip(Q.ravel(), P.ravel(), grid.values.ravel()):
            w.writerow([format(v, ".17g") for v in row])


def write_binary(grid: WignerGrid, path):
    """Five text header lines then float64 values in row-major (q, p) order."""
    q, p = grid.q_axis, grid.p_axis
    lo_q, hi_q, lo_p, hi_p = (repr(float(v)) for v in (q[0], q[-1], p[0], p[-1]))
    header = f"nq {q.size}\nnp {p.size}\nqmin {lo_q}\nqmax {hi_q}\npmin {lo_p} pmax {hi_p}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())


def read_binary(path, frame: str = "lab", hbar: float = 1.0) -> WignerGrid:
    with open(path, "rb") as fh:
        lines = [fh.readline().decode("ascii").split() for _ in range(5)]
        data = np.frombuffer(fh.read(), dtype="<f8")
    nq, npts = int(lines[0][1]), int(lines[1][1])
    qmin, qmax = float(lines[2][1]), float(lines[3][1])
    pmin, pmax = float(lines[4][1]), float(lines[4][3])
    if data.size != nq * npts:
        raise ValueError(f"expected {nq * npts} values, found {data.size}")
    return WignerGrid(data.reshape(nq, npts).copy(), _axis(qmin, qmax, nq),
                      _axis(pmin, pmax, npts), frame, hbar)
