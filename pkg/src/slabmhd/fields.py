"""Field recovery, pressure decomposition and surface force diagnostics.

The effective pressure splits as p = q + alpha^2 H+(kappa) + H+(|hhat|^2/2)
with q = p_vv - p_hh, where p_ab solves -lap p = tr(Da . Db) with zero
Dirichlet data on the interface and zero Neumann data on the (flat) top
wall.  Its interface trace is therefore alpha^2 kappa + |hhat|^2/2, the
stress balance of the free boundary.
"""

from dataclasses import dataclass, field

import numpy as np

from . import elliptic, fourier, harmonic
from .errors import IncompatibleData, NonFiniteInput


@dataclass
class VectorState:
    """Velocity and magnetic fields of one instant: v, h on the plasma grid,
    hhat on the vacuum grid (all Cartesian components, mapped sampling)."""

    v: np.ndarray
    h: np.ndarray
    hh: np.ndarray

    def validate(self, geom, n_z=None, tol_div=1e-8, tol_bc=1e-8):
        """Constraint residuals; raises nothing, returns the report so the
        caller decides (the stepper re-projects, tests assert)."""
        n_z = n_z if n_z is not None else self.v.shape[2]
        grid_p, _ = harmonic.bulk_grid(geom, "plus", n_z)
        grid_m, _ = harmonic.bulk_grid(geom, "minus", n_z)
        rep = {
            "div_v": float(np.max(np.abs(grid_p.div(self.v)))),
            "div_h": float(np.max(np.abs(grid_p.div(self.h)))),
            "div_hh": float(np.max(np.abs(grid_m.div(self.hh)))),
            "hn_interface": float(np.max(np.abs(
                grid_p.normal_flux_at_interface(self.h)
                / geom.area_elem))),
            "hhn_interface": float(np.max(np.abs(
                grid_m.normal_flux_at_interface(self.hh)
                / geom.area_elem))),
            "vn_wall": float(np.max(np.abs(grid_p.wall_trace(self.v[..., 2])))),
            "hn_wall": float(np.max(np.abs(grid_p.wall_trace(self.h[..., 2])))),
        }
        rep["ok"] = (max(rep["div_v"], rep["div_h"], rep["div_hh"]) <= tol_div
                     and max(rep["hn_interface"], rep["hhn_interface"],
                             rep["vn_wall"], rep["hn_wall"]) <= tol_bc)
        return rep


@dataclass
class Fluxes:
    """Mean tangential fluxes of v and h through the top wall."""

    v_flux: np.ndarray
    h_flux: np.ndarray

    def __post_init__(self):
        self.v_flux = np.asarray(self.v_flux, dtype=float).reshape(2)
        self.h_flux = np.asarray(self.h_flux, dtype=float).reshape(2)
        if not (np.all(np.isfinite(self.v_flux)) and np.all(np.isfinite(self.h_flux))):
            raise NonFiniteInput("fluxes contain NaN/Inf")


@dataclass
class SurfaceCurrentInput:
    """Tangential wall current J(t) = ramp(t) * base, with its time
    derivative; base is an (n_u, n_v, 2) tangential field on the bottom
    wall with zero surface divergence."""

    base: np.ndarray
    law: str = "constant"      # constant | ramp | sine | zero
    rate: float = 0.0          # ramp slope or angular frequency
    check_tol: float = 1e-10

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        if not np.all(np.isfinite(self.base)):
            raise NonFiniteInput("surface current contains NaN/Inf")
        div = fourier.deriv(self.base[..., 0], 0) + fourier.deriv(self.base[..., 1], 1)
        scale = max(float(np.max(np.abs(self.base))), 1e-300)
        if np.max(np.abs(div)) > max(self.check_tol * scale, 1e-13):
            raise IncompatibleData(
                f"surface current base is not divergence-free ({np.max(np.abs(div)):.2e})")

    def _scale(self, t):
        if self.law == "zero":
            return 0.0, 0.0
        if self.law == "constant":
            return 1.0, 0.0
        if self.law == "ramp":
            return self.rate * t, self.rate
        if self.law == "sine":
            return np.sin(self.rate * t), self.rate * np.cos(self.rate * t)
        raise ValueError(f"unknown current law {self.law!r}")

    def at(self, t):
        s, ds = self._scale(t)
        return s * self.base, ds * self.base

    def is_zero(self):
        return self.law == "zero" or float(np.max(np.abs(self.base))) == 0.0

    @classmethod
    def zero(cls, n_u, n_v):
        return cls(base=np.zeros((n_u, n_v, 2)), law="zero")


def solve_divcurl_plus(geom, curl_rhs, div_rhs, theta, flux, n_z=harmonic.DEFAULT_NZ,
                       tol=1e-10, check_tol=1e-6):
    """Plasma-side div-curl recovery (see elliptic.solve_divcurl_plus)."""
    grid, solver = harmonic.bulk_grid(geom, "plus", n_z)
    return elliptic.solve_divcurl_plus(grid, curl_rhs, div_rhs, theta, flux,
                                       tol=tol, check_tol=check_tol, solver=solver)


def solve_vacuum_field(geom, current, t=0.0, n_z=harmonic.DEFAULT_NZ, tol=1e-10):
    """Vacuum magnetic field induced by the wall surface current at time t.

    A literal zero current short-circuits to the zero field (the unique
    solution of the homogeneous problem).
    """
    grid, solver = harmonic.bulk_grid(geom, "minus", n_z)
    if isinstance(current, SurfaceCurrentInput):
        if current.is_zero():
            return np.zeros(grid.Z.shape + (3,)), {"skipped": "zero current"}
        j_now, _ = current.at(t)
    else:
        j_now = np.asarray(current, dtype=float)
        if float(np.max(np.abs(j_now))) == 0.0:
            return np.zeros(grid.Z.shape + (3,)), {"skipped": "zero current"}
    return elliptic.solve_vacuum_field(grid, j_now, tol=tol, solver=solver)


def solve_time_derivative_vacuum(geom, v, hh, djdt, n_z=harmonic.DEFAULT_NZ,
                                 tol=1e-10):
    """d_t hhat from the moving-interface Faraday data.

    Interface normal trace: d_t hhat . n = n . (D_hhat v - D_v hhat); the
    first term uses only surface traces (hhat is tangential), the second
    the bulk gradient of hhat on the vacuum side.
    """
    grid, solver = harmonic.bulk_grid(geom, "minus", n_z)
    hh_t = grid.interface_trace(hh)
    # v lives on the plasma grid, whose interface is the bottom face.
    v_t = v if v.ndim == 3 else np.take(v, 0, axis=2)
    # D_hhat v: tangential derivative of the v trace along hhat.
    hh_chart = geom.chart_vector(hh_t)
    dv = np.stack(
        [hh_chart[..., 0] * fourier.deriv(v_t[..., i], 0, geom.mask)
         + hh_chart[..., 1] * fourier.deriv(v_t[..., i], 1, geom.mask)
         for i in range(3)], axis=-1)
    # D_v hhat: full vacuum-side gradient traced on the interface.
    Jhh = grid.grad_tensor(hh)
    Jhh_t = grid.interface_trace(Jhh)
    dh = np.einsum("uvij,uvj->uvi", Jhh_t, v_t)
    theta_hat = np.sum((dv - dh) * geom.normal, axis=-1)
    return elliptic.solve_vacuum_field(grid, djdt, theta_hat=theta_hat,
                                       tol=tol, solver=solver)


@dataclass
class PressureParts:
    p_vv: np.ndarray
    p_hh: np.ndarray
    p_hat: np.ndarray
    kappa_ext: np.ndarray
    alpha: float
    info: dict = field(default_factory=dict)

    @property
    def q(self):
        return self.p_vv - self.p_hh

    @property
    def p_total(self):
        return self.q + self.alpha**2 * self.kappa_ext + self.p_hat


def _tr_grad_product(grid, a, b, mask=None):
    """tr(Da . Db) = sum_ij d_i a^j d_j b^i on the mapped grid."""
    Ja = grid.grad_tensor(a, mask)
    Jb = Ja if b is a else grid.grad_tensor(b, mask)
    return np.einsum("...ij,...ji->...", Ja, Jb)


def pressure_decomposition(geom, v, h, hh, alpha, n_z=harmonic.DEFAULT_NZ,
                           tol=1e-10):
    """Solve the three elliptic pieces of the effective pressure."""
    grid, solver = harmonic.bulk_grid(geom, "plus", n_z)
    grid_m, _ = harmonic.bulk_grid(geom, "minus", n_z)
    zero = np.zeros((grid.n_u, grid.n_v))
    info = {}

    def dirichlet_poisson(src, name):
        if src is None or np.max(np.abs(src)) == 0.0:
            info[name] = {"skipped": "zero source"}
            return np.zeros(grid.Z.shape)
        P, inf = solver.solve(src, (elliptic.DIRICHLET, zero),
                              (elliptic.FLUX, zero), tol=tol)
        info[name] = inf
        return P

    p_vv = dirichlet_poisson(-_tr_grad_product(grid, v, v, geom.mask), "p_vv")
    p_hh = dirichlet_poisson(-_tr_grad_product(grid, h, h, geom.mask), "p_hh")

    def extension(f, name):
        if np.max(np.abs(f - f.flat[0])) == 0.0:
            # Constants extend exactly (wall data is zero Neumann).
            info[name] = {"skipped": "constant data"}
            return np.full(grid.Z.shape, f.flat[0])
        P, inf = solver.solve(None, (elliptic.DIRICHLET, f),
                              (elliptic.FLUX, zero), tol=tol)
        info[name] = inf
        return P

    hh_trace = grid_m.interface_trace(hh) if hh.ndim == 4 else hh
    p_hat = extension(0.5 * np.sum(hh_trace**2, axis=-1), "p_hat")
    kappa_ext = extension(geom.kappa, "kappa_ext") if alpha != 0.0 \
        else np.zeros(grid.Z.shape)
    return PressureParts(p_vv=p_vv, p_hh=p_hh, p_hat=p_hat,
                         kappa_ext=kappa_ext, alpha=float(alpha), info=info)


def interface_normal_derivative(grid, P):
    """(n . grad p)|_Gamma with n the plasma-outward normal (either side)."""
    i = grid.interface_index
    Ps = np.einsum("j,uvj->uv", grid.vo.D[i, :], P)
    face = np.take(P, i, axis=2)
    fu, fv = fourier.deriv_uv(face)
    zu = grid.Zu[:, :, i]
    zv = grid.Zv[:, :, i]
    g33 = (1.0 + zu**2 + zv**2) / grid.Zs[:, :, i]
    w3 = -zu * fu - zv * fv + g33 * Ps
    return -w3 / grid.geom.area_elem


def rt_indicator(geom, parts, which="q", n_z=harmonic.DEFAULT_NZ):
    """Rayleigh-Taylor sign weight t = -grad_n p on the interface.

    `which` selects the pressure: 'q' (the dynamic part, the stability
    weight of the curvature evolution) or 'total'.
    """
    grid, _ = harmonic.bulk_grid(geom, "plus", n_z)
    p = parts.q if which == "q" else parts.p_total
    return -interface_normal_derivative(grid, p)


def w_residual(geom, v, h, parts, dt_v, n_z=harmonic.DEFAULT_NZ):
    """Momentum defect W = Dt v - D_h h + grad(p_total), with Dt v supplied.

    Returns (W bulk field, Theta = W.n interface trace).
    """
    grid, _ = harmonic.bulk_grid(geom, "plus", n_z)
    adv = grid.directional(h, h, geom.mask)
    W = dt_v - adv + grid.grad(parts.p_total)
    theta = np.sum(grid.interface_trace(W) * geom.normal, axis=-1)
    return W, theta
