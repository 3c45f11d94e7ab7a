"""Reference surface, height-field interface and surface calculus.

The reference surface is the flat torus cross-section z = z0 of the slab
T^2 x (-1, 1).  The plasma occupies the region above the interface (touching
the top wall), so the outward plasma normal of the flat reference surface is
n* = (0, 0, -1) and the transversal field nu points the same way.  A height
field gamma then describes the interface

    Phi(u, v) = (u, v, z0) + gamma(u, v) * nu = (u, v, z0 - gamma),

i.e. positive gamma pushes the interface down, enlarging the plasma region.
All extrinsic quantities (normal, metric, second fundamental form II(t) =
D_t n, mean curvature kappa = tr II) follow the orientation of n, so for a
graph of height eta the mean curvature is div(grad eta / sqrt(1+|grad eta|^2)).
Tangential derivatives are spectral with 2/3 dealiasing.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import fourier
from .errors import (
    ChartOverflow,
    DegenerateMetric,
    NewtonDiverged,
    NonFiniteInput,
)


def _check_finite(name, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteInput(f"{name} contains NaN/Inf")


@dataclass(frozen=True)
class ReferenceSurface:
    """Flat reference cross-section z = z0 with its transversal field."""

    n_u: int
    n_v: int
    z0: float
    delta0: float
    c0: float
    sigma_nu: float = 2.0

    def __post_init__(self):
        if not (-1.0 < self.z0 < 1.0):
            raise ValueError("z0 must lie strictly inside the slab")
        if self.delta0 <= 0.0 or self.c0 <= 0.0:
            raise ValueError("delta0 and c0 must be positive")
        if min(1.0 - self.z0, 1.0 + self.z0) < 2.0 * self.c0:
            raise ValueError("reference surface too close to a wall: need "
                             "dist(Gamma*, walls) >= 2*c0")

    @property
    def shape(self):
        return (self.n_u, self.n_v)

    def param_grid(self):
        return fourier.grid(self.n_u, self.n_v)

    def embedding(self):
        """X*: points of the reference surface, shape (n_u, n_v, 3)."""
        U, V = self.param_grid()
        X = np.empty((self.n_u, self.n_v, 3))
        X[..., 0] = U
        X[..., 1] = V
        X[..., 2] = self.z0
        return X

    def normal(self):
        """Unit normal of the reference surface, outward from the plasma."""
        n = np.zeros((self.n_u, self.n_v, 3))
        n[..., 2] = -1.0
        return n

    def transversal(self):
        """Mollified reference normal, renormalized (here: exactly n*)."""
        n = self.normal()
        nu = np.stack(
            [fourier.gaussian_smooth(n[..., i], self.sigma_nu) for i in range(3)],
            axis=-1,
        )
        nu /= np.linalg.norm(nu, axis=-1, keepdims=True)
        if np.min(np.sum(nu * n, axis=-1)) < 0.9:
            raise ValueError("transversal field violates nu . n* >= 0.9")
        return nu

    def wall_distances(self):
        """Distances from Gamma* to the top (+) and bottom (-) walls."""
        return 1.0 - self.z0, 1.0 + self.z0


@dataclass(frozen=True)
class HeightField:
    """Scalar chart gamma on the reference surface."""

    values: np.ndarray
    spectral_coeffs: np.ndarray = field(default=None)

    def __post_init__(self):
        _check_finite("height field", self.values)
        if self.spectral_coeffs is None:
            object.__setattr__(
                self, "spectral_coeffs",
                np.fft.fft2(self.values) / self.values.size,
            )

    @classmethod
    def zero(cls, ref):
        return cls(np.zeros(ref.shape))

    @classmethod
    def from_function(cls, ref, fn):
        U, V = ref.param_grid()
        return cls(np.asarray(fn(U, V), dtype=float))

    def hs(self, s):
        """Spectral Sobolev norm |gamma|_{H^s}."""
        return fourier.hs_norm(self.values, s)

    def max_abs(self):
        return float(np.max(np.abs(self.values)))


@dataclass
class SurfaceGeometry:
    """Derived pointwise geometry of the interface Gamma = graph(z0 - gamma)."""

    ref: ReferenceSurface
    gamma: HeightField
    eta: np.ndarray            # surface height z(u, v)
    phi: np.ndarray            # embedding, (n_u, n_v, 3)
    normal: np.ndarray         # unit normal (outward from plasma), (n_u, n_v, 3)
    tau_u: np.ndarray
    tau_v: np.ndarray
    metric: np.ndarray         # (n_u, n_v, 2, 2)
    metric_inv: np.ndarray
    area_elem: np.ndarray      # dS / du dv = sqrt(det g)
    second_form: np.ndarray    # II_ab = <d_a n, tau_b>, (n_u, n_v, 2, 2)
    shape_op: np.ndarray       # g^{-1} II
    kappa: np.ndarray          # tr(shape_op)
    ii_norm2: np.ndarray       # |II|^2 = tr(shape_op^2)
    w: np.ndarray              # sqrt(1 + |grad eta|^2) = 1 / (nu . n)
    mask: np.ndarray           # dealias mask

    @cached_property
    def christoffel(self):
        """Christoffel symbols Gamma^c_{ab} of the induced metric."""
        n_u, n_v = self.ref.shape
        d = lambda f, ax: fourier.deriv(f, ax, self.mask)
        g = self.metric
        dg = np.empty((n_u, n_v, 2, 2, 2))
        for a in range(2):
            for b in range(2):
                dg[..., 0, a, b] = d(g[..., a, b], 0)
                dg[..., 1, a, b] = d(g[..., a, b], 1)
        chris = np.empty((n_u, n_v, 2, 2, 2))
        for c in range(2):
            for a in range(2):
                for b in range(2):
                    acc = 0.0
                    for e in range(2):
                        acc = acc + self.metric_inv[..., c, e] * (
                            dg[..., a, e, b] + dg[..., b, e, a] - dg[..., e, a, b])
                    chris[..., c, a, b] = 0.5 * acc
        return chris

    def quad_weights(self):
        """Pointwise dS weights for surface quadrature."""
        n_u, n_v = self.ref.shape
        return self.area_elem * (fourier.TORUS_AREA / (n_u * n_v))

    def integrate(self, f):
        return float(np.sum(f * self.quad_weights()))

    def area(self):
        return self.integrate(np.ones(self.ref.shape))

    def chart_vector(self, X):
        """Chart components a^b of a tangential R^3 field: X = a^b tau_b."""
        xu = np.sum(X * self.tau_u, axis=-1)
        xv = np.sum(X * self.tau_v, axis=-1)
        a_low = np.stack([xu, xv], axis=-1)
        return np.einsum("...ab,...b->...a", self.metric_inv, a_low)

    def tangent_project(self, X):
        xn = np.sum(X * self.normal, axis=-1)
        return X - xn[..., None] * self.normal


def build_geometry(ref, gamma, check_chart=True):
    """Construct the full surface geometry from a height field."""
    if isinstance(gamma, np.ndarray):
        gamma = HeightField(np.asarray(gamma, dtype=float))
    _check_finite("gamma", gamma.values)
    if check_chart and gamma.max_abs() >= ref.delta0:
        raise ChartOverflow(
            f"max|gamma| = {gamma.max_abs():.3e} >= delta0 = {ref.delta0:.3e}")

    n_u, n_v = ref.shape
    mask = fourier.dealias_mask(n_u, n_v)
    d = lambda f, ax: fourier.deriv(f, ax, mask)

    eta = ref.z0 - gamma.values
    eta_u = d(eta, 0)
    eta_v = d(eta, 1)

    U, V = ref.param_grid()
    phi = np.stack([U, V, eta], axis=-1)
    tau_u = np.stack([np.ones_like(eta), np.zeros_like(eta), eta_u], axis=-1)
    tau_v = np.stack([np.zeros_like(eta), np.ones_like(eta), eta_v], axis=-1)

    w2 = 1.0 + eta_u**2 + eta_v**2
    w = np.sqrt(w2)
    normal = np.stack([eta_u, eta_v, -np.ones_like(eta)], axis=-1) / w[..., None]

    g = np.empty((n_u, n_v, 2, 2))
    g[..., 0, 0] = 1.0 + eta_u**2
    g[..., 0, 1] = eta_u * eta_v
    g[..., 1, 0] = g[..., 0, 1]
    g[..., 1, 1] = 1.0 + eta_v**2
    detg = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    if np.min(detg) <= 0.0:
        raise DegenerateMetric("det g <= 0 on the surface grid")
    g_inv = np.empty_like(g)
    g_inv[..., 0, 0] = g[..., 1, 1] / detg
    g_inv[..., 1, 1] = g[..., 0, 0] / detg
    g_inv[..., 0, 1] = -g[..., 0, 1] / detg
    g_inv[..., 1, 0] = g_inv[..., 0, 1]

    # Second fundamental form II_ab = <d_a n, tau_b> = eta_ab / w.
    eta_uu = d(eta_u, 0)
    eta_uv = d(eta_u, 1)
    eta_vv = d(eta_v, 1)
    II = np.empty_like(g)
    II[..., 0, 0] = eta_uu / w
    II[..., 0, 1] = eta_uv / w
    II[..., 1, 0] = II[..., 0, 1]
    II[..., 1, 1] = eta_vv / w
    shape_op = np.einsum("...ab,...bc->...ac", g_inv, II)
    kappa = shape_op[..., 0, 0] + shape_op[..., 1, 1]
    ii_norm2 = np.einsum("...ab,...ba->...", shape_op, shape_op)

    return SurfaceGeometry(
        ref=ref, gamma=gamma, eta=eta, phi=phi, normal=normal,
        tau_u=tau_u, tau_v=tau_v, metric=g, metric_inv=g_inv,
        area_elem=np.sqrt(detg), second_form=II, shape_op=shape_op,
        kappa=kappa, ii_norm2=ii_norm2, w=w, mask=mask,
    )


# ---------------------------------------------------------------------------
# Tangential calculus
# ---------------------------------------------------------------------------

def _d(geom, f, ax):
    return fourier.deriv(f, ax, geom.mask)


def _exp2(coeff, f):
    """Broadcast an (n_u, n_v) coefficient over trailing batch axes of f."""
    return coeff.reshape(coeff.shape + (1,) * (f.ndim - 2))


def grad_surface(geom, f):
    """Tangential gradient of a surface scalar as an R^3 field."""
    _check_finite("grad_surface input", f)
    up = grad_surface_chart(geom, f)
    return up[..., 0, None] * geom.tau_u + up[..., 1, None] * geom.tau_v


def grad_surface_chart(geom, f):
    """Chart components (raised) of the tangential gradient.

    Trailing axes of f are treated as a batch.
    """
    df = np.stack([_d(geom, f, 0), _d(geom, f, 1)], axis=-1)
    return np.einsum("uvab,uv...b->uv...a", geom.metric_inv, df)


def laplace_beltrami(geom, f):
    """Scalar Laplace-Beltrami via the divergence form (batch-safe)."""
    _check_finite("laplace_beltrami input", f)
    sg = geom.area_elem
    up = grad_surface_chart(geom, f)
    flux_u = _exp2(sg, f) * up[..., 0]
    flux_v = _exp2(sg, f) * up[..., 1]
    return (_d(geom, flux_u, 0) + _d(geom, flux_v, 1)) / _exp2(sg, f)


def surface_divergence(geom, X):
    """Tangential divergence of an R^3 field sampled on the surface."""
    _check_finite("surface_divergence input", X)
    dXu = np.stack([_d(geom, X[..., i], 0) for i in range(3)], axis=-1)
    dXv = np.stack([_d(geom, X[..., i], 1) for i in range(3)], axis=-1)
    low = np.empty(geom.eta.shape + (2, 2))
    low[..., 0, 0] = np.sum(dXu * geom.tau_u, axis=-1)
    low[..., 0, 1] = np.sum(dXu * geom.tau_v, axis=-1)
    low[..., 1, 0] = np.sum(dXv * geom.tau_u, axis=-1)
    low[..., 1, 1] = np.sum(dXv * geom.tau_v, axis=-1)
    return np.einsum("...ab,...ab->...", geom.metric_inv, low)


def directional_derivative(geom, f, X):
    """D_X f for a surface scalar and a tangential R^3 field X."""
    a = geom.chart_vector(X)
    return a[..., 0] * _d(geom, f, 0) + a[..., 1] * _d(geom, f, 1)


def hessian(geom, f):
    """Covariant Hessian of a surface scalar, (0,2)-tensor."""
    df = np.stack([_d(geom, f, 0), _d(geom, f, 1)], axis=-1)
    H = np.empty(geom.eta.shape + (2, 2))
    for a in range(2):
        for b in range(2):
            H[..., a, b] = _d(geom, df[..., b], a)
            for c in range(2):
                H[..., a, b] -= geom.christoffel[..., c, a, b] * df[..., c]
    return H


def tensor_covariant_derivative(geom, T):
    """Covariant derivative of a (0,2)-tensor: returns (nabla T)_{c,ab}."""
    out = np.empty(geom.eta.shape + (2, 2, 2))
    for c in range(2):
        for a in range(2):
            for b in range(2):
                out[..., c, a, b] = _d(geom, T[..., a, b], c)
                for e in range(2):
                    out[..., c, a, b] -= geom.christoffel[..., e, c, a] * T[..., e, b]
                    out[..., c, a, b] -= geom.christoffel[..., e, c, b] * T[..., a, e]
    return out


def tensor_laplacian(geom, T):
    """Rough (connection) Laplacian of a (0,2)-tensor."""
    nT = tensor_covariant_derivative(geom, T)
    out = np.zeros(geom.eta.shape + (2, 2))
    for a in range(2):
        for b in range(2):
            for c in range(2):
                for dd in range(2):
                    term = _d(geom, nT[..., dd, a, b], c)
                    for e in range(2):
                        term = term - geom.christoffel[..., e, c, dd] * nT[..., e, a, b]
                        term = term - geom.christoffel[..., e, c, a] * nT[..., dd, e, b]
                        term = term - geom.christoffel[..., e, c, b] * nT[..., dd, a, e]
                    out[..., a, b] += geom.metric_inv[..., c, dd] * term
    return out


def second_form_and_identities(geom):
    """Simons and Codazzi-normal identity residuals (grid max norms).

    Simons:   lap II = Hess(kappa) + kappa II.g^{-1}.II - |II|^2 II
    Codazzi:  lap_Gamma n = -|II|^2 n + grad_Gamma kappa   (componentwise)
    """
    II = geom.second_form
    lapII = tensor_laplacian(geom, II)
    Hk = hessian(geom, geom.kappa)
    II2 = np.einsum("...ab,...bc,...cd->...ad", II, geom.metric_inv, II)
    simons = lapII - Hk - geom.kappa[..., None, None] * II2 \
        + geom.ii_norm2[..., None, None] * II
    # Tensor magnitude with both indices raised against g.
    simons_mag = np.einsum(
        "...ac,...bd,...ab,...cd->...", geom.metric_inv, geom.metric_inv,
        simons, simons)
    simons_res = float(np.sqrt(np.max(np.abs(simons_mag))))

    lap_n = np.stack(
        [laplace_beltrami(geom, geom.normal[..., i]) for i in range(3)], axis=-1)
    gk = grad_surface(geom, geom.kappa)
    codazzi = lap_n + geom.ii_norm2[..., None] * geom.normal - gk
    codazzi_res = float(np.max(np.linalg.norm(codazzi, axis=-1)))

    return {
        "II": II,
        "simons_residual": simons_res,
        "codazzi_normal_residual": codazzi_res,
    }


# ---------------------------------------------------------------------------
# Modified curvature map and its Newton inversion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModifiedCurvature:
    """kappa_a = kappa o Phi + a^2 gamma, with stiffness a."""

    values: np.ndarray
    stiffness: float


def kappa_a_forward(ref, gamma, a):
    """Forward stiffened-curvature map."""
    if isinstance(gamma, np.ndarray):
        gamma = HeightField(np.asarray(gamma, dtype=float))
    geom = build_geometry(ref, gamma)
    return ModifiedCurvature(values=geom.kappa + a * a * gamma.values,
                             stiffness=float(a))


def _forward_values(ref, gvals, a):
    return kappa_a_forward(ref, HeightField(gvals), a).values


def assemble_forward_jacobian(ref, gvals, a, eps=1e-7):
    """Frechet derivative of the forward map by finite differences on real
    spectral coefficients.  Returns (J, base) with J acting on packed
    coefficient vectors."""
    n_u, n_v = ref.shape
    ndof = n_u * n_v
    x0 = fourier.pack_real_spectrum(gvals)
    base = _forward_values(ref, gvals, a)
    b0 = fourier.pack_real_spectrum(base)
    J = np.empty((ndof, ndof))
    for j in range(ndof):
        xp = x0.copy()
        xp[j] += eps
        gp = fourier.unpack_real_spectrum(xp, n_u, n_v)
        J[:, j] = (fourier.pack_real_spectrum(_forward_values(ref, gp, a)) - b0) / eps
    return J, base


def kappa_a_invert(ref, kappa_a_target, a, gamma_guess=None, *,
                   a_min=1.0, tol=1e-11, max_iter=25, refresh_every=0):
    """Recover the height field from its stiffened curvature.

    Newton iteration on packed real spectral coefficients; the Jacobian is
    assembled by finite differences at the initial guess and refreshed every
    `refresh_every` iterations (0 = frozen) or whenever the residual stalls.
    """
    target = kappa_a_target.values if isinstance(kappa_a_target, ModifiedCurvature) \
        else np.asarray(kappa_a_target, dtype=float)
    _check_finite("kappa_a target", target)
    if a < a_min:
        raise ValueError(f"stiffness a = {a} below configured a_min = {a_min}")
    n_u, n_v = ref.shape
    gvals = np.zeros(ref.shape) if gamma_guess is None else \
        np.array(gamma_guess.values if isinstance(gamma_guess, HeightField)
                 else gamma_guess, dtype=float)

    from scipy.linalg import lu_factor, lu_solve

    lu = None
    res_prev = np.inf
    for it in range(max_iter):
        resid = _forward_values(ref, gvals, a) - target
        res = float(np.max(np.abs(resid)))
        if res <= tol:
            return HeightField(gvals), it, res
        stalled = res > 0.5 * res_prev
        if lu is None or (refresh_every and it % refresh_every == 0) or stalled:
            J, _ = assemble_forward_jacobian(ref, gvals, a)
            lu = lu_factor(J)
        rp = fourier.pack_real_spectrum(resid)
        step = lu_solve(lu, rp)
        gvals = gvals - fourier.unpack_real_spectrum(step, n_u, n_v)
        if np.max(np.abs(gvals)) >= ref.delta0:
            raise ChartOverflow("Newton iterate left the admissible chart")
        res_prev = res

    resid = _forward_values(ref, gvals, a) - target
    res = float(np.max(np.abs(resid)))
    if res <= tol:
        return HeightField(gvals), max_iter, res
    raise NewtonDiverged(
        f"curvature inversion stalled at residual {res:.3e} after {max_iter} iterations")
