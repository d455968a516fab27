"""Gaussian moment flows.

The state is the moment couple (z, X) with X = <zeta zeta>/2, or equivalently
(z, Sigma) with Sigma = 2X - z z^T.  For an energy functional h the flows are

    dz/dt = J h_z + J h_X z
    dX/dt = J h_X X - X h_X J + (J h_z z^T - z h_z^T J) / 2

in moment variables and

    dz/dt = J h_z,        dSigma/dt = 2 (J h_S Sigma - Sigma h_S J)

in covariance variables.  Both are what the corresponding brackets generate
for coordinate observables; the matrix terms are written in the form that
keeps dX and dSigma symmetric.

Gaussian closure energies are built from a Taylor expansion of V about <q>
with odd central moments dropped and even ones replaced by (2k-1)!! s^k.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.stats import norm

from .core import (
    MomentFunctional,
    PotentialModel,
    Step,
    covariance_from_moments,
    flatten_moments,
    make_symplectic_form,
    phase_vector,
    second_moment_from_covariance,
    unflatten_moments,
)
from .core import gaussian_taylor_weight

__all__ = [
    "MomentState",
    "ClosureSpec",
    "gaussian_energy",
    "closure_energy",
    "moment_energy_from_covariance",
    "moment_rhs",
    "covariance_rhs",
    "FiveMoments",
    "five_moments",
    "conservative_fourth_order_rhs",
    "nonconservative_fourth_order_rhs",
    "fourth_order_energy",
    "moment_vector_field",
    "covariance_vector_field",
    "fourth_order_vector_field",
]

_SYM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MomentState:
    """Mean z and second moment X = <zeta zeta>/2 at time t."""

    z: np.ndarray
    X: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        z = phase_vector(self.z)
        X = np.array(self.X, dtype=float)
        if X.shape != (z.size, z.size):
            raise ValueError(f"X has shape {X.shape}, expected {(z.size, z.size)}")
        if np.max(np.abs(X - X.T)) > _SYM_TOL * max(1.0, np.max(np.abs(X))):
            raise ValueError("second moment is not symmetric")
        X = 0.5 * (X + X.T)
        try:
            np.linalg.cholesky(2.0 * X - np.outer(z, z))
        except np.linalg.LinAlgError:
            raise ValueError("2X - z z^T is not positive definite") from None
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "X", X)

    @classmethod
    def from_covariance(cls, z, Sigma, t=0.0):
        return cls(z, second_moment_from_covariance(z, Sigma), t)

    @property
    def n(self) -> int:
        return self.z.size // 2

    @property
    def Sigma(self) -> np.ndarray:
        return covariance_from_moments(self.z, self.X)


@dataclass(frozen=True)
class ClosureSpec:
    """Gaussian closure of <p^2/2 + V(q)>: V is Taylor-expanded about <q> to
    ``truncation_order``.  ``conservative`` selects the bracket-derived
    equations for the explicit fourth-order system."""

    potential: PotentialModel
    truncation_order: int = 4
    conservative: bool = True

    def __post_init__(self):
        if isinstance(self.potential, Step):
            return
        if self.truncation_order < 0:
            raise ValueError("truncation order must be non-negative")
        if self.truncation_order > self.potential.derivative_order:
            raise ValueError(
                f"truncation order {self.truncation_order} exceeds the potential's "
                f"derivative order {self.potential.derivative_order}")

    @property
    def odd_truncation(self) -> bool:
        """Odd truncations conserve energy even without the extra terms."""
        return self.truncation_order % 2 == 1


def _split(z, S):
    n = z.size // 2
    return z[:n], z[n:], np.diag(S)[:n], np.diag(S)[n:]


def closure_energy(spec: ClosureSpec) -> MomentFunctional:
    """Closure energy h(z, Sigma) with analytic partials.

    For n > 1 the potential acts separably on each position coordinate.
    """
    pot, N = spec.potential, spec.truncation_order
    kmax = N // 2
    w = [gaussian_taylor_weight(k) for k in range(kmax + 1)]

    def value(z, S):
        q, p, sq, sp = _split(z, S)
        kinetic = 0.5 * (p @ p + np.sum(sp))
        if isinstance(pot, Step):
            return kinetic + float(np.sum(pot.smeared(q, sq)))
        potential = sum(pot.derivative(2 * k, q) * w[k] * sq ** k
                        for k in range(kmax + 1))
        return kinetic + float(np.sum(potential))

    def partials(z, S):
        n = z.size // 2
        q, p, sq, sp = _split(z, S)
        hS = np.zeros_like(S)
        if isinstance(pot, Step):
            s = np.sqrt(sq)
            dens = pot.mu * norm.pdf(q / s)
            hq = dens / s
            hS[:n, :n] = np.diag(-0.5 * dens * q / s ** 3)
        else:
            if 2 * kmax + 1 > pot.derivative_order:
                raise ValueError(
                    f"closure partials need V^({2 * kmax + 1}), potential provides "
                    f"up to order {pot.derivative_order}")
            hq = sum(pot.derivative(2 * k + 1, q) * w[k] * sq ** k
                     for k in range(kmax + 1))
            hs = sum(pot.derivative(2 * k, q) * w[k] * k * sq ** (k - 1)
                     for k in range(1, kmax + 1))
            hS[:n, :n] = np.diag(np.broadcast_to(hs, (n,)))
        hS[n:, n:] = 0.5 * np.eye(n)
        hz = np.concatenate([np.broadcast_to(hq, (n,)), p])
        return hz, hS

    return MomentFunctional(value, partials, f"closure[{pot.kind},N={N}]")


def gaussian_energy(spec: ClosureSpec, state: Union[MomentState, tuple]) -> float:
    """Closure energy of a Gaussian state (MomentState or a (z, Sigma) pair)."""
    if isinstance(state, MomentState):
        z, S = state.z, state.Sigma
    else:
        z, S = np.asarray(state[0], dtype=float), np.asarray(state[1], dtype=float)
    return closure_energy(spec)(z, S)


def moment_energy_from_covariance(h: MomentFunctional) -> MomentFunctional:
    """Rewrite h(z, Sigma) as H(z, X) = h(z, 2X - z z^T) by the chain rule."""

    def value(z, X):
        return h(z, covariance_from_moments(z, X))

    partials = None
    if h.analytic:
        def partials(z, X):
            hz, hS = h.gradients(z, covariance_from_moments(z, X))
            return hz - 2.0 * hS @ z, 2.0 * hS

    return MomentFunctional(value, partials, h.name)


def _checked_partials(h, z, M, fd_step):
    hz, hM = h.gradients(z, M, fd_step)
    if np.max(np.abs(hM - hM.T)) > _SYM_TOL * max(1.0, np.max(np.abs(hM))):
        raise ValueError("energy partial with respect to the matrix is not symmetric")
    return hz, 0.5 * (hM + hM.T)


def _moment_flow(hz, hX, z, X):
    J = make_symplectic_form(z.size // 2)
    dz = J @ hz + J @ hX @ z
    A = J @ hX @ X
    B = np.outer(J @ hz, z)
    dX = (A + A.T) + 0.5 * (B + B.T)
    return dz, dX


def _covariance_flow(hz, hS, S):
    J = make_symplectic_form(hz.size // 2)
    A = J @ hS @ S
    return J @ hz, 2.0 * (A + A.T)


def _raw_pair(state, covariance):
    if isinstance(state, MomentState):
        return state.z, (state.Sigma if covariance else state.X)
    z = phase_vector(state[0])
    return z, np.asarray(state[1], dtype=float)


def moment_rhs(h: MomentFunctional, state, fd_step=1e-5):
    """(dz/dt, dX/dt) for the energy H(z, X).

    ``state`` is a MomentState or a raw (z, X) pair; raw pairs skip the
    admissibility check.
    """
    z, X = _raw_pair(state, False)
    hz, hX = _checked_partials(h, z, X, fd_step)
    return _moment_flow(hz, hX, z, X)


def covariance_rhs(h: MomentFunctional, state, fd_step=1e-5):
    """(dz/dt, dSigma/dt) for the energy h(z, Sigma).

    ``state`` is a MomentState or a raw (z, Sigma) pair.
    """
    z, S = _raw_pair(state, True)
    hz, hS = _checked_partials(h, z, S, fd_step)
    return _covariance_flow(hz, hS, S)


# ---------------------------------------------------------------------------
# Explicit one-dof fourth-order system in expectation-value notation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiveMoments:
    """<Q>, <P>, <Q^2>, <P^2> and <QP>_s = <(QP + PQ)/2>."""

    Q: float
    P: float
    Q2: float
    P2: float
    QP: float

    def as_array(self):
        return np.array([self.Q, self.P, self.Q2, self.P2, self.QP])

    @classmethod
    def from_array(cls, a):
        return cls(*(float(x) for x in a))

    def covariance(self):
        s = self.Q2 - self.Q ** 2
        c = self.QP - self.Q * self.P
        r = self.P2 - self.P ** 2
        return np.array([self.Q, self.P]), np.array([[s, c], [c, r]])


def five_moments(z, Sigma) -> FiveMoments:
    q, p = (float(v) for v in z)
    Sigma = np.asarray(Sigma, dtype=float)
    return FiveMoments(q, p, Sigma[0, 0] + q * q, Sigma[1, 1] + p * p, Sigma[0, 1] + q * p)


def _as_five(m):
    return m if isinstance(m, FiveMoments) else FiveMoments.from_array(m)


def _fourth_order(pot, m, conservative):
    if pot.derivative_order < 5:
        raise ValueError("the fourth-order system needs V up to the fifth derivative")
    m = _as_five(m)
    Q, P = m.Q, m.P
    s = m.Q2 - Q ** 2
    c = m.QP - Q * P
    V1, V2, V3, V4 = (pot.derivative(k, Q) for k in (1, 2, 3, 4))
    V5 = pot.derivative(5, Q) if conservative else 0.0
    dQ = P
    dP = -V1 - 0.5 * V3 * s - 0.125 * V5 * s ** 2
    dQ2 = 2.0 * m.QP
    dP2 = (-2.0 * V1 * P - 2.0 * V2 * c - V3 * P * s
           - V4 * c * s - 0.25 * V5 * P * s ** 2)
    dQP = (m.P2 - V1 * Q - V2 * s - 0.5 * V3 * Q * s
           - 0.5 * V4 * s ** 2 - 0.125 * V5 * Q * s ** 2)
    return np.array([dQ, dP, dQ2, dP2, dQP])


def conservative_fourth_order_rhs(pot: PotentialModel, m) -> np.ndarray:
    """Five-moment derivative including the fifth-derivative terms that make
    the fourth-order Gaussian closure energy conserving."""
    return _fourth_order(pot, m, True)


def nonconservative_fourth_order_rhs(pot: PotentialModel, m) -> np.ndarray:
    """The same system with every V^(5) term removed."""
    return _fourth_order(pot, m, False)


def fourth_order_energy(pot: PotentialModel, m) -> float:
    """<P^2>/2 + V + V'' s / 2 + V'''' s^2 / 8 with s = <Q^2> - <Q>^2."""
    m = _as_five(m)
    s = m.Q2 - m.Q ** 2
    return (0.5 * m.P2 + pot.derivative(0, m.Q) + 0.5 * pot.derivative(2, m.Q) * s
            + 0.125 * pot.derivative(4, m.Q) * s ** 2)


# ---------------------------------------------------------------------------
# Flat vector fields for the integrators
# ---------------------------------------------------------------------------

def moment_vector_field(h: MomentFunctional, n: int) -> Callable:
    """f(t, y) with y = z followed by the upper triangle of X.  No
    admissibility check is made inside the loop."""

    def f(t, y):
        z, X = unflatten_moments(y, n)
        hz, hX = _checked_partials(h, z, X, 1e-5)
        return flatten_moments(*_moment_flow(hz, hX, z, X))

    return f


def covariance_vector_field(h: MomentFunctional, n: int) -> Callable:
    """f(t, y) with y = z followed by the upper triangle of Sigma."""

    def f(t, y):
        z, S = unflatten_moments(y, n)
        hz, hS = _checked_partials(h, z, S, 1e-5)
        return flatten_moments(*_covariance_flow(hz, hS, S))

    return f


def fourth_order_vector_field(pot: PotentialModel, conservative: bool = True) -> Callable:
    return lambda t, y: _fourth_order(pot, y, conservative)
