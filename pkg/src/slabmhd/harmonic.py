"""Harmonic extensions, Dirichlet-Neumann operators and fractional powers.

The Dirichlet-Neumann operator of one side maps interface data f to the
outward normal derivative of its harmonic extension (zero Neumann data on
the wall), N f = +/- n . grad(H f)|_Gamma with n the plasma-outward unit
normal.  Dense matrices are assembled column by column through the actual
extension solver and cached per interface geometry; their eigenstructure in
the dS-weighted inner product drives inverses, square roots and the
fractional surface operators used by the energy functionals.
"""

import hashlib

import numpy as np

from . import fourier, surface as surf
from .bulk import BulkGrid
from .elliptic import DIRICHLET, FLUX, ScalarSolver
from .errors import NegativeEigenvalue, SingularInverse

DEFAULT_NZ = 17


def geometry_key(geom, side, n_z):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(geom.gamma.values).tobytes())
    h.update(f"{side}|{n_z}|{geom.ref.z0}|{geom.ref.n_u}x{geom.ref.n_v}".encode())
    return h.hexdigest()


class _Cache:
    def __init__(self, maxsize=8):
        self.maxsize = maxsize
        self.data = {}
        self.order = []

    def get(self, key, builder):
        if key in self.data:
            return self.data[key]
        val = builder()
        self.data[key] = val
        self.order.append(key)
        if len(self.order) > self.maxsize:
            old = self.order.pop(0)
            self.data.pop(old, None)
        return val


_grid_cache = _Cache(maxsize=12)
_dn_cache = _Cache(maxsize=6)
_fracop_cache = _Cache(maxsize=6)


def bulk_grid(geom, side, n_z=DEFAULT_NZ):
    """Cached mapped grid + scalar solver for one side of the interface."""
    key = geometry_key(geom, side, n_z)

    def build():
        grid = BulkGrid(geom, side, n_z)
        return grid, ScalarSolver(grid)

    return _grid_cache.get(key, build)


def _interface_bc(grid, kind, data):
    """Order (bottom_bc, top_bc) so that `kind/data` sits on the interface
    and the wall carries zero outward flux."""
    zero = np.zeros((grid.n_u, grid.n_v) + np.shape(data)[2:])
    if grid.side == "plus":
        return (kind, data), (FLUX, zero)
    return (FLUX, zero), (kind, data)


def harmonic_extend(geom, side, f, n_z=DEFAULT_NZ, tol=1e-10):
    """Harmonic extension of interface data with zero wall Neumann data."""
    grid, solver = bulk_grid(geom, side, n_z)
    f = np.asarray(f, dtype=float)
    grid.check_finite(f, "boundary data")
    bc_b, bc_t = _interface_bc(grid, DIRICHLET, f)
    P, info = solver.solve(None, bc_b, bc_t, tol=tol)
    return P, info


def poisson_bulk(geom, side, source, dirichlet_on_interface=None,
                 outer_neumann=None, n_z=DEFAULT_NZ, tol=1e-10):
    """Poisson solve with Dirichlet interface data and wall Neumann data.

    outer_neumann is the physical normal derivative on the wall (outward
    unit normal of the slab); None means zero.
    """
    grid, solver = bulk_grid(geom, side, n_z)
    f = np.zeros((grid.n_u, grid.n_v)) if dirichlet_on_interface is None \
        else np.asarray(dirichlet_on_interface, dtype=float)
    wall = np.zeros((grid.n_u, grid.n_v)) if outer_neumann is None \
        else np.asarray(outer_neumann, dtype=float)
    if grid.side == "plus":
        bc = ((DIRICHLET, f), (FLUX, wall))
    else:
        bc = ((FLUX, wall), (DIRICHLET, f))
    P, info = solver.solve(source, *bc, tol=tol)
    return P, info


def dn_apply(geom, side, f, n_z=DEFAULT_NZ, tol=1e-10):
    """Apply the one-sided Dirichlet-Neumann operator to interface data."""
    grid, solver = bulk_grid(geom, side, n_z)
    P, _ = harmonic_extend(geom, side, f, n_z=n_z, tol=tol)
    return dn_from_extension(grid, P)


def dn_from_extension(grid, P):
    """Outward normal derivative of an extension, per unit interface area.

    Only the interface trace of the flux vector is formed.
    """
    i = grid.interface_index
    Ps = np.einsum("j,uvj...->uv...", grid.vo.D[i, :], P)
    if grid.is_flat:
        w3 = Ps
    else:
        face = np.take(P, i, axis=2)
        fu, fv = fourier.deriv_uv(face)
        zu = grid._expand_surface(grid.Zu[:, :, i], Ps)
        zv = grid._expand_surface(grid.Zv[:, :, i], Ps)
        g33 = grid._expand_surface(
            (1.0 + grid.Zu[:, :, i]**2 + grid.Zv[:, :, i]**2) / grid.Zs[:, :, i], Ps)
        w3 = -zu * fu - zv * fv + g33 * Ps
    out = -w3 if grid.side == "plus" else w3
    return out / grid._expand_surface(grid.geom.area_elem, out)


class DNOperator:
    """Dense one-sided Dirichlet-Neumann operator with eigen cache."""

    def __init__(self, geom, side, matrix, quad_weights, tol_dn=1e-8,
                 tol_eig=1e-9):
        self.geom = geom
        self.side = side
        self.matrix = matrix
        self.quad = quad_weights.ravel()
        self.tol_dn = tol_dn
        sq = np.sqrt(self.quad)
        B = (sq[:, None] * matrix) / sq[None, :]
        self.symmetry_defect = float(
            np.max(np.abs(B - B.T)) / max(np.max(np.abs(B)), 1e-30))
        Bs = 0.5 * (B + B.T)
        vals, vecs = np.linalg.eigh(Bs)
        self.eigenvalues = vals
        self._vecs = vecs
        self._sq = sq
        scale = max(abs(vals[0]), abs(vals[-1]))
        if vals[0] < -tol_eig * scale:
            raise NegativeEigenvalue(
                f"DN operator has eigenvalue {vals[0]:.3e} < 0")
        self._zero_tol = max(tol_eig * scale, 1e-300)

    @property
    def shape(self):
        return self.geom.ref.shape

    def _to_sym(self, f):
        return self._vecs.T @ (self._sq * f.ravel())

    def _from_sym(self, c):
        return ((self._vecs @ c) / self._sq).reshape(self.shape)

    def apply(self, f):
        return self._from_sym(self.eigenvalues * self._to_sym(f))

    def apply_power(self, f, p):
        lam = np.where(self.eigenvalues > self._zero_tol, self.eigenvalues, 0.0)
        vals = np.where(lam > 0.0, lam**p, 0.0)
        return self._from_sym(vals * self._to_sym(f))

    def sqrt_apply(self, f):
        return self.apply_power(f, 0.5)

    def inverse_apply(self, f):
        fv = np.asarray(f, dtype=float).ravel()
        mean = float(np.sum(fv * self.quad))
        norm = float(np.sqrt(np.sum(fv**2 * self.quad)))
        if abs(mean) > self.tol_dn * max(norm, 1e-30) * np.sqrt(self.quad.sum()):
            raise SingularInverse(
                "inverse requested on data with a nonzero mean (kernel = constants)")
        lam = self.eigenvalues
        inv = np.where(lam > self._zero_tol, 1.0 / np.where(lam > 0, lam, 1.0), 0.0)
        return self._from_sym(inv * self._to_sym(f))

    def kernel_dimension(self):
        return int(np.sum(np.abs(self.eigenvalues) <= self._zero_tol))


def dn_assemble(geom, side, n_z=DEFAULT_NZ, tol=1e-10, chunk=256,
                tol_dn=1e-8, tol_eig=1e-9):
    """Assemble the dense DN matrix column by column (cached per geometry)."""
    key = geometry_key(geom, side, n_z) + f"|{tol}"

    def build():
        grid, solver = bulk_grid(geom, side, n_z)
        n = grid.n_u * grid.n_v
        M = np.empty((n, n))
        for start in range(0, n, chunk):
            cols = min(chunk, n - start)
            data = np.zeros((grid.n_u, grid.n_v, cols))
            for c in range(cols):
                j = start + c
                data[j // grid.n_v, j % grid.n_v, c] = 1.0
            bc_b, bc_t = _interface_bc(grid, DIRICHLET, data)
            P, _ = solver.solve(None, bc_b, bc_t, tol=tol)
            out = dn_from_extension(grid, P)
            M[:, start:start + cols] = out.reshape(n, cols)
        return DNOperator(geom, side, M, geom.quad_weights(),
                          tol_dn=tol_dn, tol_eig=tol_eig)

    return _dn_cache.get(key, build)


def laplace_beltrami_matrix(geom):
    """Dense surface Laplacian in the grid-value basis."""
    n_u, n_v = geom.ref.shape
    n = n_u * n_v
    basis = np.zeros((n_u, n_v, n))
    idx = np.arange(n)
    basis[idx // n_v, idx % n_v, idx] = 1.0
    # laplace_beltrami treats trailing axes as a batch.
    out = surf.laplace_beltrami(geom, basis)
    return out.reshape(n, n)


class FractionalSurfaceOperator:
    """Spectral calculus for D = (-N^{1/2} lap_Gamma N^{1/2})^{1/2}.

    Everything is expressed in the dS-weighted symmetric coordinates, so the
    composite operator is symmetrized once and diagonalized; powers are then
    exact up to the eigensolver.
    """

    def __init__(self, geom, dn, tol_eig=1e-9):
        self.geom = geom
        self.dn = dn
        sq = dn._sq
        L = laplace_beltrami_matrix(geom)
        BL = 0.5 * ((sq[:, None] * L) / sq[None, :]
                    + ((sq[:, None] * L) / sq[None, :]).T)
        lam = np.where(dn.eigenvalues > dn._zero_tol, dn.eigenvalues, 0.0)
        Bn_half = (dn._vecs * np.sqrt(lam)) @ dn._vecs.T
        C = Bn_half @ (-BL) @ Bn_half
        C = 0.5 * (C + C.T)
        vals, vecs = np.linalg.eigh(C)
        scale = max(abs(vals[0]), abs(vals[-1]), 1e-30)
        if vals[0] < -tol_eig * scale:
            raise NegativeEigenvalue(
                f"symmetrized N^1/2 (-lap) N^1/2 has eigenvalue {vals[0]:.3e}")
        self._sq = sq
        self._Bn_half = Bn_half
        self.eigenvalues = np.maximum(vals, 0.0)
        self._vecs = vecs
        self.shape = geom.ref.shape

    def apply(self, f, l):
        """Apply (-N^{1/2} lap N^{1/2})^{l/2} N^{1/2} to interface data."""
        x = self._sq * np.asarray(f, dtype=float).ravel()
        y = self._Bn_half @ x
        if l > 0:
            c = self._vecs.T @ y
            c *= self.eigenvalues ** (0.5 * l)
            y = self._vecs @ c
        return (y / self._sq).reshape(self.shape)

    def apply_power_only(self, f, l):
        """Apply (-N^{1/2} lap N^{1/2})^{l/2} alone (no trailing N^{1/2})."""
        x = self._sq * np.asarray(f, dtype=float).ravel()
        c = self._vecs.T @ x
        c *= self.eigenvalues ** (0.5 * l)
        y = self._vecs @ c
        return (y / self._sq).reshape(self.shape)


def fractional_operator(geom, side, n_z=DEFAULT_NZ, tol=1e-10, tol_eig=1e-9):
    key = geometry_key(geom, side, n_z) + "|frac"

    def build():
        dn = dn_assemble(geom, side, n_z=n_z, tol=tol, tol_eig=tol_eig)
        return FractionalSurfaceOperator(geom, dn, tol_eig=tol_eig)

    return _fracop_cache.get(key, build)


def fractional_surface_power(geom, side, l, f, n_z=DEFAULT_NZ, tol=1e-10):
    """(-N^{1/2} lap_Gamma N^{1/2})^{l/2} N^{1/2} f on the interface grid."""
    op = fractional_operator(geom, side, n_z=n_z, tol=tol)
    return op.apply(f, l)
