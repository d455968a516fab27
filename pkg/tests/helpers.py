"""Random observables shared by the test modules."""
import numpy as np

from ehrenfest.core import (
    MomentFunctional,
    flatten_moments,
    matrix_from_upper_gradient,
)


def random_polynomial_energy(rng, n=1, scale=1.0):
    """Cubic polynomial in the flat (z, upper-triangle) coordinates with
    exact partials in the symmetric matrix convention."""
    d = 2 * n
    m = d + d * (d + 1) // 2
    c1 = rng.uniform(-1, 1, m) * scale
    A = rng.uniform(-1, 1, (m, m)) * scale
    c2 = A + A.T
    c3 = rng.uniform(-1, 1, (m, m, m)) * scale * 0.3
    c3 = sum(np.transpose(c3, p) for p in
             [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]) / 6.0

    def value(z, M):
        y = flatten_moments(z, M)
        return float(c1 @ y + 0.5 * y @ c2 @ y + np.einsum("ijk,i,j,k", c3, y, y, y) / 6.0)

    def partials(z, M):
        y = flatten_moments(z, M)
        g = c1 + c2 @ y + 0.5 * np.einsum("ijk,j,k->i", c3, y, y)
        return g[:d], matrix_from_upper_gradient(g[d:], d)

    return MomentFunctional(value, partials, "random-cubic")
