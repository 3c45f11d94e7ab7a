"""Mapped bulk domains between the interface and the slab walls.

Each side of the interface is pulled back to a fixed reference product grid
(T^2 Fourier) x (Chebyshev-Lobatto in s).  The coordinate map is purely
vertical, X(u, v, s) = (u, v, Z(u, v, s)) with Z harmonic in the reference
slab, equal to the interface height on Gamma* and to the wall height on the
wall.  Because the reference surface is flat, Z is available in closed form
per horizontal Fourier mode (sinh profiles), so the map costs one FFT and is
exact to round-off; the same formula applied to d(gamma)/dt yields the exact
grid velocity needed by the ALE forms.

Index conventions: arrays are (n_u, n_v, n_z [, extra]); vertical index 0 is
the bottom face.  For the plasma side ('plus', s in [z0, 1]) the interface is
the bottom face and the wall the top; for the vacuum side ('minus',
s in [-1, z0]) the wall is the bottom face and the interface the top.
"""

import numpy as np

from . import cheb, fourier
from .errors import FoldedMap, NonFiniteInput


def _ratio_sinh(a, b):
    """sinh(a)/sinh(b) for 0 <= a <= b, overflow-safe."""
    return np.exp(a - b) * (1.0 - np.exp(-2.0 * a)) / (1.0 - np.exp(-2.0 * b))


def _ratio_cosh_sinh(a, b):
    """cosh(a)/sinh(b) for 0 <= a <= b, overflow-safe."""
    return np.exp(a - b) * (1.0 + np.exp(-2.0 * a)) / (1.0 - np.exp(-2.0 * b))


class BulkGrid:
    """Mapped product grid for one side of the interface."""

    def __init__(self, geom, side, n_z):
        if side not in ("plus", "minus"):
            raise ValueError("side must be 'plus' or 'minus'")
        self.geom = geom
        self.side = side
        self.n_z = n_z
        ref = geom.ref
        self.n_u, self.n_v = ref.shape
        z0 = ref.z0
        if side == "plus":
            self.s_lo, self.s_hi = z0, 1.0
            self.interface_index = 0
            self.wall_index = n_z - 1
        else:
            self.s_lo, self.s_hi = -1.0, z0
            self.interface_index = n_z - 1
            self.wall_index = 0
        self.vo = cheb.VerticalOperator(n_z, self.s_lo, self.s_hi)
        self.s = self.vo.s
        self.kmag = fourier.kmag(self.n_u, self.n_v)

        self._build_map()

    # -- coordinate map -----------------------------------------------------

    def _mode_profiles(self, s):
        """sinh-profile and its s-derivative for each (k, s), shapes
        (n_u, n_v, n_s).  Profile is 1 at the interface, 0 at the wall."""
        k = self.kmag[..., None]
        z0 = self.geom.ref.z0
        if self.side == "plus":
            a = k * (1.0 - s)          # distance factor to the wall
            b = k * (1.0 - z0)
            lin = (1.0 - s) / (1.0 - z0)
            dlin = -1.0 / (1.0 - z0)
            sgn = -1.0
        else:
            a = k * (s + 1.0)
            b = k * (z0 + 1.0)
            lin = (s + 1.0) / (z0 + 1.0)
            dlin = 1.0 / (z0 + 1.0)
            sgn = 1.0
        with np.errstate(invalid="ignore", divide="ignore"):
            prof = _ratio_sinh(a, b)
            dprof = sgn * k * _ratio_cosh_sinh(a, b)
        zero = self.kmag == 0.0
        prof[zero, :] = lin
        dprof[zero, :] = dlin
        return prof, dprof

    def _build_map(self):
        geom = self.geom
        gam_hat = fourier.fft2(geom.gamma.values)[..., None]
        s = self.s[None, None, :]
        prof, dprof = self._mode_profiles(s)
        dZ = fourier.ifft2(-gam_hat * prof)
        dZs = fourier.ifft2(-gam_hat * dprof)
        self.Z = s + dZ
        self.Zs = 1.0 + dZs
        self.Zu = np.stack(
            [fourier.deriv(dZ[..., j], 0) for j in range(self.n_z)], axis=-1)
        self.Zv = np.stack(
            [fourier.deriv(dZ[..., j], 1) for j in range(self.n_z)], axis=-1)
        if np.min(self.Zs) <= 0.0:
            raise FoldedMap(
                f"vertical Jacobian min {np.min(self.Zs):.3e} <= 0 on side {self.side}")
        gap_top, gap_bot = wall_gap(self.geom)
        gap = gap_top if self.side == "plus" else gap_bot
        if gap < self.geom.ref.c0:
            raise FoldedMap(
                f"interface within c0 of the {'top' if self.side == 'plus' else 'bottom'} "
                f"wall (gap {gap:.3e} < c0 {self.geom.ref.c0:.3e})")
        self.is_flat = bool(np.max(np.abs(self.geom.gamma.values)) == 0.0)
        # Metric-weighted coefficient matrix G = det * DX^-1 DX^-T.
        G = np.empty((self.n_u, self.n_v, self.n_z, 3, 3))
        G[..., 0, 0] = self.Zs
        G[..., 0, 1] = 0.0
        G[..., 0, 2] = -self.Zu
        G[..., 1, 0] = 0.0
        G[..., 1, 1] = self.Zs
        G[..., 1, 2] = -self.Zv
        G[..., 2, 0] = -self.Zu
        G[..., 2, 1] = -self.Zv
        G[..., 2, 2] = (1.0 + self.Zu**2 + self.Zv**2) / self.Zs
        self.G = G
        self.det = self.Zs

    def grid_velocity_z(self, dgamma_dt):
        """Vertical grid velocity dZ/dt induced by a height-field rate."""
        gh = fourier.fft2(np.asarray(dgamma_dt))[..., None]
        prof, _ = self._mode_profiles(self.s[None, None, :])
        return fourier.ifft2(-gh * prof)

    def laplace_residual(self):
        """Max residual of the flat Laplace equation for the map Z."""
        r = self.ref_div(self.ref_grad(self.Z))
        return float(np.max(np.abs(r[..., 1:-1])))

    # -- derivative machinery ------------------------------------------------

    def d_u(self, f, mask=None):
        return fourier.deriv(f, 0, mask)

    def d_v(self, f, mask=None):
        return fourier.deriv(f, 1, mask)

    def d_s(self, f):
        return np.einsum("ij,uvj...->uvi...", self.vo.D, f)

    def ref_grad(self, f):
        """Flat reference gradient (f_u, f_v, f_s), stacked on a new last axis."""
        fu, fv = fourier.deriv_uv(f)
        return np.stack([fu, fv, self.d_s(f)], axis=-1)

    def ref_div(self, W):
        """Flat reference divergence of a field with components on the last axis."""
        return fourier.div_uv(W[..., 0], W[..., 1]) + self.d_s(W[..., 2])

    def _expand(self, coeff, f):
        """Broadcast a (nu,nv,nz) coefficient against f with trailing axes."""
        return coeff.reshape(coeff.shape + (1,) * (f.ndim - 3))

    @staticmethod
    def _expand_surface(coeff, f):
        """Broadcast an (nu,nv) surface coefficient over trailing axes of f."""
        return coeff.reshape(coeff.shape + (1,) * (f.ndim - 2))

    def grad(self, f, mask=None):
        """Physical gradient of a scalar sampled on the mapped grid.

        Returns an array with a new final axis of length 3; trailing batch
        axes of f are preserved before it.
        """
        fu, fv = fourier.deriv_uv(f, mask)
        fs = self.d_s(f)
        zu = self._expand(self.Zu / self.Zs, f)
        zv = self._expand(self.Zv / self.Zs, f)
        zs = self._expand(self.Zs, f)
        gx = fu - zu * fs
        gy = fv - zv * fs
        gz = fs / zs
        return np.stack([gx, gy, gz], axis=-1)

    def div(self, u, mask=None):
        """Physical divergence; u has Cartesian components on the last axis."""
        g0 = self.grad(u[..., 0], mask)
        g1 = self.grad(u[..., 1], mask)
        g2 = self.grad(u[..., 2], mask)
        return g0[..., 0] + g1[..., 1] + g2[..., 2]

    def curl(self, u, mask=None):
        g0 = self.grad(u[..., 0], mask)
        g1 = self.grad(u[..., 1], mask)
        g2 = self.grad(u[..., 2], mask)
        return np.stack([
            g2[..., 1] - g1[..., 2],
            g0[..., 2] - g2[..., 0],
            g1[..., 0] - g0[..., 1],
        ], axis=-1)

    def grad_tensor(self, u, mask=None):
        """Full Jacobian J[..., i, j] = d u^i / d x_j."""
        return np.stack([self.grad(u[..., i], mask) for i in range(3)], axis=-2)

    def directional(self, a, u, mask=None):
        """(a . grad) u for Cartesian vector fields a, u."""
        J = self.grad_tensor(u, mask)
        return np.einsum("...ij,...j->...i", J, a)

    def lap_flat(self, f):
        """Exact flat reference Laplacian (horizontal symbol -|k|^2 with
        Nyquist included + Chebyshev D^2)."""
        return fourier.lap_uv(f) + np.einsum("ij,uvj...->uvi...", self.vo.D2, f)

    def flux_laplacian(self, f):
        """div_ref(G grad_ref f) = det * (physical Laplacian of f).

        Split as exact flat Laplacian + variable-coefficient correction so
        the composition stays collocation-exact at the Nyquist modes.
        """
        gradf = self.ref_grad(f)
        Wc = self.flux_vector_from_grad(gradf) - gradf
        return self.lap_flat(f) + self.ref_div(Wc)

    def flux_vector_from_grad(self, gradf):
        return np.einsum("uvsij,uvs...j->uvs...i", self.G, gradf)

    def flux_vector(self, f):
        """G grad_ref f (reference flux form of the physical gradient)."""
        return np.einsum("uvsij,uvs...j->uvs...i", self.G, self.ref_grad(f))

    # -- Piola / one-form transforms ----------------------------------------

    def to_one_form(self, u):
        """U = DX^T u (1-form pullback; exactly transforms curls)."""
        U = np.empty_like(u)
        zu = self._expand(self.Zu, u[..., 0])
        zv = self._expand(self.Zv, u[..., 0])
        zs = self._expand(self.Zs, u[..., 0])
        U[..., 0] = u[..., 0] + zu * u[..., 2]
        U[..., 1] = u[..., 1] + zv * u[..., 2]
        U[..., 2] = zs * u[..., 2]
        return U

    def from_one_form(self, U):
        u = np.empty_like(U)
        zu = self._expand(self.Zu, U[..., 0])
        zv = self._expand(self.Zv, U[..., 0])
        zs = self._expand(self.Zs, U[..., 0])
        u[..., 2] = U[..., 2] / zs
        u[..., 0] = U[..., 0] - zu * u[..., 2]
        u[..., 1] = U[..., 1] - zv * u[..., 2]
        return u

    def to_flux_form(self, u):
        """W = det DX^{-1} u (2-form pullback; exactly transforms divergences)."""
        W = np.empty_like(u)
        zu = self._expand(self.Zu, u[..., 0])
        zv = self._expand(self.Zv, u[..., 0])
        zs = self._expand(self.Zs, u[..., 0])
        W[..., 0] = zs * u[..., 0]
        W[..., 1] = zs * u[..., 1]
        W[..., 2] = u[..., 2] - zu * u[..., 0] - zv * u[..., 1]
        return W

    # -- traces, quadrature ---------------------------------------------------

    def interface_trace(self, f):
        return np.take(f, self.interface_index, axis=2)

    def wall_trace(self, f):
        return np.take(f, self.wall_index, axis=2)

    def interface_outward_sign(self):
        """Sign of the reference outward vertical direction at the interface."""
        return -1.0 if self.side == "plus" else 1.0

    def normal_flux_at_interface(self, u):
        """Pointwise u . n dS/dudv on the interface, n the plasma-outward
        normal (shared by both sides)."""
        W = self.to_flux_form(u)
        w3 = self.interface_trace(W[..., 2])
        return -w3 if self.side == "plus" else -w3

    def quad_weights(self):
        """Physical volume quadrature weights on the mapped grid."""
        area = fourier.TORUS_AREA / (self.n_u * self.n_v)
        return self.det * self.vo.w[None, None, :] * area

    def integrate(self, f):
        return float(np.sum(f * self.quad_weights()))

    def check_finite(self, f, what="bulk field"):
        if not np.all(np.isfinite(f)):
            raise NonFiniteInput(f"{what} contains NaN/Inf")


def wall_gap(geom):
    """Distance from the interface to each wall (top, bottom)."""
    eta = geom.eta
    return float(1.0 - np.max(eta)), float(np.min(eta) + 1.0)
