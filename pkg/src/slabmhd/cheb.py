"""Chebyshev-Lobatto collocation on an interval [a, b].

Points are returned in ascending order (index 0 at a, index n-1 at b), which
keeps the "bottom face / top face" bookkeeping of the slab domains readable.
"""

import numpy as np
from scipy.linalg import lu_factor, lu_solve


def lobatto_points(n, a=-1.0, b=1.0):
    """n Chebyshev-Lobatto nodes on [a, b], ascending."""
    if n < 2:
        raise ValueError("need at least two points")
    x = -np.cos(np.pi * np.arange(n) / (n - 1))
    return a + (b - a) * (x + 1.0) / 2.0


def diff_matrix(n, a=-1.0, b=1.0):
    """First-derivative collocation matrix on the ascending Lobatto grid."""
    if n < 2:
        raise ValueError("need at least two points")
    m = n - 1
    x = -np.cos(np.pi * np.arange(n) / m)
    c = np.ones(n)
    c[0] = 2.0
    c[-1] = 2.0
    c *= (-1.0) ** np.arange(n)
    X = np.tile(x, (n, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(n))
    D -= np.diag(D.sum(axis=1))
    return D * (2.0 / (b - a))


def clenshaw_curtis_weights(n, a=-1.0, b=1.0):
    """Quadrature weights matching the ascending Lobatto grid."""
    m = n - 1
    theta = np.pi * np.arange(n) / m
    w = np.zeros(n)
    v = np.ones(m - 1)
    if m % 2 == 0:
        w[0] = 1.0 / (m**2 - 1)
        w[m] = w[0]
        for k in range(1, m // 2):
            v -= 2.0 * np.cos(2.0 * k * theta[1:m]) / (4.0 * k**2 - 1)
        v -= np.cos(m * theta[1:m]) / (m**2 - 1)
    else:
        w[0] = 1.0 / m**2
        w[m] = w[0]
        for k in range(1, (m - 1) // 2 + 1):
            v -= 2.0 * np.cos(2.0 * k * theta[1:m]) / (4.0 * k**2 - 1)
    w[1:m] = 2.0 * v / m
    return w * (b - a) / 2.0


class VerticalOperator:
    """Prefactored 1-D Helmholtz solves (d_ss - k^2) on a Lobatto grid.

    One LU factorization is stored per horizontal wavenumber magnitude and
    per boundary-condition pair.  Boundary conditions are 'dirichlet'
    (value) or 'flux' (first derivative) at the bottom (index 0) and top
    (index -1) faces; for the k=0 mode of double-flux problems the bottom
    condition row is replaced by a mean constraint to pin the constant.
    """

    def __init__(self, n, a, b):
        self.n = n
        self.a = a
        self.b = b
        self.s = lobatto_points(n, a, b)
        self.D = diff_matrix(n, a, b)
        self.D2 = self.D @ self.D
        self.w = clenshaw_curtis_weights(n, a, b)
        self._lu = {}

    def _factor(self, k2, bc_bottom, bc_top, pinned):
        key = (float(k2), bc_bottom, bc_top, pinned)
        if key not in self._lu:
            A = self.D2 - k2 * np.eye(self.n)
            A[0, :] = self.D[0, :] if bc_bottom == "flux" else 0.0
            if bc_bottom == "dirichlet":
                A[0, 0] = 1.0
            A[-1, :] = self.D[-1, :] if bc_top == "flux" else 0.0
            if bc_top == "dirichlet":
                A[-1, -1] = 1.0
            if pinned:
                A[0, :] = self.w
            self._lu[key] = lu_factor(A)
        return self._lu[key]

    def solve(self, k2, rhs, bottom, top, bc_bottom, bc_top):
        """Solve (d_ss - k2) y = rhs with boundary data bottom/top.

        rhs has shape (..., n); boundary data broadcast over leading axes.
        For the singular k2=0 double-flux case the solution is returned with
        zero Clenshaw-Curtis mean and the rhs is used as given (any
        incompatibility shows up in the defect, handled by the caller).
        """
        pinned = k2 == 0.0 and bc_bottom == "flux" and bc_top == "flux"
        lu = self._factor(k2, bc_bottom, bc_top, pinned)
        r = np.array(rhs, dtype=rhs.dtype if np.iscomplexobj(rhs) else float)
        r[..., 0] = 0.0 if pinned else bottom
        r[..., -1] = top
        if np.iscomplexobj(r):
            out = lu_solve(lu, r.real.reshape(-1, self.n).T).T + 1j * lu_solve(
                lu, r.imag.reshape(-1, self.n).T
            ).T
        else:
            out = lu_solve(lu, r.reshape(-1, self.n).T).T
        return out.reshape(r.shape)

    def antiderivative(self, rhs, bottom_value=0.0):
        """Solve d_s y = rhs with y(bottom) = bottom_value."""
        A = self.D.copy()
        A[0, :] = 0.0
        A[0, 0] = 1.0
        r = np.array(rhs, dtype=rhs.dtype if np.iscomplexobj(rhs) else float)
        r[..., 0] = bottom_value
        if np.iscomplexobj(r):
            out = np.linalg.solve(A, r.real.reshape(-1, self.n).T).T + 1j * np.linalg.solve(
                A, r.imag.reshape(-1, self.n).T
            ).T
        else:
            out = np.linalg.solve(A, r.reshape(-1, self.n).T).T
        return out.reshape(r.shape)
