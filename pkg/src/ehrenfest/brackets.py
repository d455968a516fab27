"""Poisson brackets on phase-space functions and on functionals of the
Gaussian moments, the moment Casimirs, and a randomized checker for the
bracket axioms.

Three brackets are provided:

* canonical:  {f, g} = grad f . J grad g
* moment:     {F, G}(z, X) = {F, G}_c + z.(F_X J G_z - G_X J F_z)
                             + Tr(X [F_X J G_X - G_X J F_X])
* covariance: {f, g}(z, S) = {f, g}_z + 2 Tr(S [f_S J g_S - g_S J f_S])

Matrix partials follow the symmetric convention dF = Tr(F_X dX).
"""
from __future__ import annotations

import io
import csv
import itertools
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from .core import (
    MomentFunctional,
    covariance_from_moments,
    flatten_moments,
    make_symplectic_form,
    matrix_from_upper_gradient,
    unflatten_moments,
    upper_gradient_from_matrix,
)

__all__ = [
    "BracketReport",
    "MomentObservable",
    "canonical_bracket",
    "moment_bracket",
    "covariance_bracket",
    "canonical_formula",
    "moment_formula",
    "covariance_formula",
    "casimir",
    "casimir_det",
    "casimir_functional",
    "casimir_det_functional",
    "covariance_casimir_functional",
    "z_coordinate",
    "matrix_coordinate",
    "AxiomReport",
    "bracket_axiom_suite",
]

DEFAULT_FD_STEP = 1e-5

#: Observables of the moment couple share the functional container.
MomentObservable = MomentFunctional


@dataclass(frozen=True)
class BracketReport:
    value: float
    method: str
    fd_step: Optional[float] = None

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise FloatingPointError("bracket evaluated to a non-finite value")
        if self.method not in ("analytic", "finite_difference"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "finite_difference" and not (self.fd_step and self.fd_step > 0):
            raise ValueError("finite-difference report needs a positive step")

    def __float__(self):
        return float(self.value)


# ---------------------------------------------------------------------------
# Formulas (bilinear in the partials, affine in the state)
# ---------------------------------------------------------------------------

def canonical_formula(df, dg) -> float:
    df = np.asarray(df)
    J = make_symplectic_form(df.size // 2)
    return float(df @ J @ np.asarray(dg))


def moment_formula(Fz, FX, Gz, GX, z, X) -> float:
    J = make_symplectic_form(len(z) // 2)
    canonical = Fz @ J @ Gz
    mixed = z @ (FX @ J @ Gz - GX @ J @ Fz)
    matrix = np.trace(X @ (FX @ J @ GX - GX @ J @ FX))
    return float(canonical + mixed + matrix)


def covariance_formula(fz, fS, gz, gS, z, S) -> float:
    J = make_symplectic_form(len(z) // 2)
    return float(fz @ J @ gz + 2.0 * np.trace(S @ (fS @ J @ gS - gS @ J @ fS)))


# ---------------------------------------------------------------------------
# Public bracket evaluations
# ---------------------------------------------------------------------------

def _phase_gradient(f, at, step):
    grad = getattr(f, "gradient", None)
    if grad is not None:
        return np.asarray(grad(at), dtype=float), True
    g = np.empty_like(at)
    for i in range(at.size):
        e = np.zeros_like(at)
        e[i] = step
        g[i] = (f(at + e) - f(at - e)) / (2.0 * step)
    return g, False


def canonical_bracket(f, g, at, step: float = DEFAULT_FD_STEP) -> float:
    """{f, g}_c at a phase-space point.  ``f`` and ``g`` are callables on
    phase vectors; objects exposing ``gradient(at)`` are differentiated
    analytically, others by central differences with ``step``."""
    at = np.asarray(at, dtype=float)
    df, _ = _phase_gradient(f, at, step)
    dg, _ = _phase_gradient(g, at, step)
    if not (np.all(np.isfinite(df)) and np.all(np.isfinite(dg))):
        raise FloatingPointError("non-finite field evaluation near the bracket point")
    return canonical_formula(df, dg)


def _functional_report(formula, F, G, z, M, fd_step):
    z = np.asarray(z, dtype=float)
    M = np.asarray(M, dtype=float)
    Fz, FM = F.gradients(z, M, fd_step)
    Gz, GM = G.gradients(z, M, fd_step)
    analytic = F.analytic and G.analytic
    value = formula(Fz, FM, Gz, GM, z, M)
    if analytic:
        return BracketReport(value, "analytic", None)
    return BracketReport(value, "finite_difference", fd_step)


def moment_bracket(F: MomentFunctional, G: MomentFunctional, z, X,
                   fd_step: float = DEFAULT_FD_STEP) -> BracketReport:
    """Lie-Poisson bracket of two functionals of (z, X), X = <zeta zeta>/2."""
    return _functional_report(moment_formula, F, G, z, X, fd_step)


def covariance_bracket(F: MomentFunctional, G: MomentFunctional, z, Sigma,
                       fd_step: float = DEFAULT_FD_STEP) -> BracketReport:
    """Direct-sum bracket of two functionals of (z, Sigma)."""
    return _functional_report(covariance_formula, F, G, z, Sigma, fd_step)


def z_coordinate(i: int, n: int) -> MomentFunctional:
    """The observable (z, M) -> z_i with exact partials."""
    d = 2 * n
    e = np.zeros(d)
    e[i] = 1.0
    return MomentFunctional(lambda z, M: z[i], lambda z, M: (e, np.zeros((d, d))), f"z{i}")


def matrix_coordinate(i: int, j: int, n: int) -> MomentFunctional:
    """The observable (z, M) -> M_ij (a symmetric entry) with exact partials."""
    d = 2 * n
    E = np.zeros((d, d))
    E[i, j] += 0.5
    E[j, i] += 0.5
    return MomentFunctional(lambda z, M: M[i, j], lambda z, M: (np.zeros(d), E), f"M{i}{j}")


# ---------------------------------------------------------------------------
# Casimirs
# ---------------------------------------------------------------------------

def casimir(j: int, z, X) -> float:
    """C_j = Tr[((X - z z^T / 2) J)^(2j)] / (2j)."""
    if j not in (1, 2, 3):
        raise ValueError("Casimir index must be 1, 2 or 3")
    z = np.asarray(z, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.shape != (z.size, z.size):
        raise ValueError("shape mismatch between z and X")
    A = X - 0.5 * np.outer(z, z)
    AJ = A @ make_symplectic_form(z.size // 2)
    return float(np.trace(np.linalg.matrix_power(AJ, 2 * j)) / (2 * j))


def casimir_det(z, X) -> float:
    """det(2X - z z^T), the determinant form of the first Casimir."""
    return float(np.linalg.det(covariance_from_moments(z, X)))


def _casimir_partials(j, z, X):
    J = make_symplectic_form(z.size // 2)
    A = X - 0.5 * np.outer(z, z)
    M = J @ np.linalg.matrix_power(A @ J, 2 * j - 1)
    CA = 0.5 * (M + M.T)
    return -CA @ z, CA


def casimir_functional(j: int) -> MomentFunctional:
    if j not in (1, 2, 3):
        raise ValueError("Casimir index must be 1, 2 or 3")
    return MomentFunctional(lambda z, X: casimir(j, z, X),
                            lambda z, X: _casimir_partials(j, z, X), f"C{j}")


def _det_partials(z, X):
    S = covariance_from_moments(z, X)
    adj = np.linalg.det(S) * np.linalg.inv(S)
    adj = 0.5 * (adj + adj.T)
    return -2.0 * adj @ z, 2.0 * adj


def casimir_det_functional() -> MomentFunctional:
    return MomentFunctional(casimir_det, _det_partials, "Cdet")


def covariance_casimir_functional(j: int) -> MomentFunctional:
    """Casimirs of the covariance bracket: Tr[(S J / 2)^(2j)] / (2j), i.e. the
    moment Casimirs written in terms of S = 2X - z z^T."""
    zero = lambda S: np.zeros(S.shape[0])

    def value(z, S):
        return casimir(j, zero(S), 0.5 * S)

    def partials(z, S):
        _, CX = _casimir_partials(j, zero(S), 0.5 * S)
        return np.zeros_like(z), 0.5 * CX

    return MomentFunctional(value, partials, f"K{j}")


# ---------------------------------------------------------------------------
# Axiom suite
# ---------------------------------------------------------------------------

class _FlatObservable:
    """Observable on flat coordinates y (phase vector, or z followed by the
    upper triangle of the matrix)."""

    gradient = None
    hessian = None


class _Polynomial(_FlatObservable):
    """c0 + c1.y + y.c2.y/2 + c3[y,y,y]/6 with symmetric c2, c3."""

    def __init__(self, c0, c1, c2, c3, analytic):
        self.c0, self.c1, self.c2, self.c3 = c0, c1, c2, c3
        if analytic:
            self.gradient = self._gradient
            self.hessian = self._hessian

    @classmethod
    def random(cls, rng, m, degree, analytic):
        c = [rng.uniform(-1, 1), rng.uniform(-1, 1, m), np.zeros((m, m)), np.zeros((m, m, m))]
        if degree >= 2:
            c2 = rng.uniform(-1, 1, (m, m))
            c[2] = 0.5 * (c2 + c2.T)
        if degree >= 3:
            c3 = rng.uniform(-1, 1, (m, m, m))
            c[3] = sum(np.transpose(c3, p) for p in itertools.permutations(range(3))) / 6.0
        return cls(*c, analytic=analytic)

    def __call__(self, y):
        return float(self.c0 + self.c1 @ y + 0.5 * y @ self.c2 @ y
                     + np.einsum("ijk,i,j,k->", self.c3, y, y, y) / 6.0)

    def _gradient(self, y):
        return self.c1 + self.c2 @ y + 0.5 * np.einsum("ijk,j,k->i", self.c3, y, y)

    def _hessian(self, y):
        return self.c2 + np.einsum("ijk,k->ij", self.c3, y)


class _Product(_FlatObservable):
    def __init__(self, F, G):
        self.F, self.G = F, G
        if F.gradient is not None and G.gradient is not None:
            self.gradient = self._gradient

    def __call__(self, y):
        return self.F(y) * self.G(y)

    def _gradient(self, y):
        return self.F(y) * self.G.gradient(y) + self.G(y) * self.F.gradient(y)


class _Wrapped(_FlatObservable):
    def __init__(self, value, gradient=None):
        self._value = value
        self.gradient = gradient

    def __call__(self, y):
        return self._value(y)


class _Structure:
    """Adapter between flat coordinates and one of the public brackets."""

    def __init__(self, kind, n, fd_step):
        if kind not in ("canonical", "moment", "covariance"):
            raise ValueError(f"unknown bracket {kind!r}")
        self.kind, self.n, self.fd_step = kind, n, fd_step
        d = 2 * n
        self.d = d
        self.dim = d if kind == "canonical" else d + d * (d + 1) // 2

    def sample(self, rng):
        d = self.d
        z = rng.uniform(-1, 1, d)
        if self.kind == "canonical":
            return z
        A = rng.uniform(-0.5, 0.5, (d, d))
        S = A @ A.T + 0.5 * np.eye(d)
        M = S if self.kind == "covariance" else 0.5 * (S + np.outer(z, z))
        return flatten_moments(z, M)

    def split(self, y):
        return unflatten_moments(y, self.n)

    def native(self, g):
        if self.kind == "canonical":
            return (g,)
        return g[: self.d], matrix_from_upper_gradient(g[self.d:], self.d)

    def formula(self, dF, dG, y):
        if self.kind == "canonical":
            return canonical_formula(dF[0], dG[0])
        z, M = self.split(y)
        f = moment_formula if self.kind == "moment" else covariance_formula
        return f(*dF, *dG, z, M)

    def _as_functional(self, F):
        value = lambda z, M: F(flatten_moments(z, M))
        partials = None
        if F.gradient is not None:
            partials = lambda z, M: self.native(F.gradient(flatten_moments(z, M)))
        return MomentFunctional(value, partials)

    def bracket(self, F, G, y):
        """Value of {F, G} at y through the public bracket functions."""
        if self.kind == "canonical":
            return canonical_bracket(F, G, y, self.fd_step)
        z, M = self.split(y)
        op = moment_bracket if self.kind == "moment" else covariance_bracket
        return op(self._as_functional(F), self._as_functional(G), z, M, self.fd_step).value

    def fd_gradient(self, f, y):
        h = self.fd_step
        g = np.empty(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            g[i] = (f(y + e) - f(y - e)) / (2.0 * h)
        return g

    def bracketed(self, F, G):
        """{F, G} as an observable.  Its gradient is exact (product rule on
        the bilinear formula) when F and G carry Hessians, else numerical."""
        value = lambda y: self.bracket(F, G, y)
        if F.hessian is None or G.hessian is None:
            return _Wrapped(value, lambda y: self.fd_gradient(value, y))

        def gradient(y):
            dF, dG = self.native(F.gradient(y)), self.native(G.gradient(y))
            HF, HG = F.hessian(y), G.hessian(y)
            zero = np.zeros(self.dim)
            base = self.formula(dF, dG, zero)
            out = np.empty(self.dim)
            for c in range(self.dim):
                e = np.zeros(self.dim)
                e[c] = 1.0
                out[c] = (self.formula(self.native(HF[:, c]), dG, y)
                          + self.formula(dF, self.native(HG[:, c]), y)
                          + self.formula(dF, dG, e) - base)
            return out

        return _Wrapped(value, gradient)

    def casimirs(self):
        if self.kind == "canonical":
            return []
        out = []
        for j in (1, 2, 3):
            C = (casimir_functional(j) if self.kind == "moment"
                 else covariance_casimir_functional(j))
            out.append(_Wrapped(
                lambda y, C=C: C(*self.split(y)),
                lambda y, C=C: np.concatenate([
                    C.gradients(*self.split(y))[0],
                    _upper(C.gradients(*self.split(y))[1])])))
        if self.kind == "moment":
            C = casimir_det_functional()
            out.append(_Wrapped(lambda y: C(*self.split(y)),
                                lambda y: np.concatenate([
                                    C.gradients(*self.split(y))[0],
                                    _upper(C.gradients(*self.split(y))[1])])))
        return out


_upper = upper_gradient_from_matrix


@dataclass
class AxiomReport:
    bracket: str
    method: str
    samples: int
    seed: int
    fd_step: Optional[float]
    antisymmetry: float
    leibniz: float
    jacobi: float
    casimir: Optional[float]

    def max_defect(self) -> float:
        vals = [self.antisymmetry, self.leibniz, self.jacobi]
        if self.casimir is not None:
            vals.append(self.casimir)
        return max(vals)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        row = asdict(self)
        writer.writerow(row.keys())
        writer.writerow(["" if v is None else (f"{v:.17g}" if isinstance(v, float) else v)
                         for v in row.values()])
        return buf.getvalue()

    def __str__(self):
        cas = "n/a" if self.casimir is None else f"{self.casimir:.3e}"
        return (f"{self.bracket:<10s} {self.method:<17s} samples={self.samples} "
                f"antisymmetry={self.antisymmetry:.3e} leibniz={self.leibniz:.3e} "
                f"jacobi={self.jacobi:.3e} casimir={cas}")


def bracket_axiom_suite(bracket: str, samples: int = 50, seed: int = 0, *,
                        method: str = "analytic", n: int = 1, degree: int = 3,
                        fd_step: float = 1e-4) -> AxiomReport:
    """Maximum defects of antisymmetry, Leibniz and Jacobi over random
    polynomial observables (degree <= ``degree``, coefficients in [-1, 1]) at
    random admissible points, plus max |{C, F}| over the Casimirs.

    ``method="analytic"`` differentiates the polynomials exactly;
    ``"finite_difference"`` hides their gradients so every partial is taken
    numerically with ``fd_step``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if method not in ("analytic", "finite_difference"):
        raise ValueError(f"unknown method {method!r}")
    analytic = method == "analytic"
    st = _Structure(bracket, n, fd_step)
    rng = np.random.default_rng(seed)
    anti = leib = jac = 0.0
    cas = None if bracket == "canonical" else 0.0
    casimirs = st.casimirs()
    for _ in range(samples):
        F, G, H = (_Polynomial.random(rng, st.dim, degree, analytic) for _ in range(3))
        y = st.sample(rng)
        fg = st.bracket(F, G, y)
        anti = max(anti, abs(fg + st.bracket(G, F, y)))
        lhs = st.bracket(_Product(F, G), H, y)
        rhs = st.bracket(F, H, y) * G(y) + F(y) * st.bracket(G, H, y)
        leib = max(leib, abs(lhs - rhs))
        cyc = (st.bracket(st.bracketed(F, G), H, y)
               + st.bracket(st.bracketed(G, H), F, y)
               + st.bracket(st.bracketed(H, F), G, y))
        jac = max(jac, abs(cyc))
        for C in casimirs:
            cas = max(cas, abs(st.bracket(C, F, y)))
    return AxiomReport(bracket, method, samples, seed, None if analytic else fd_step,
                       anti, leib, jac, cas)
