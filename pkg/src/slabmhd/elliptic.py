"""Elliptic kernels on the mapped bulk grids.

The pullback by the vertical harmonic coordinates turns every physical
elliptic problem into a variable-coefficient problem on a fixed product grid:

    Delta_x p = f      <=>   div_ref(G grad_ref P) = det * F,
    curl_x u  = f      <=>   curl_ref U = det DX^{-1} f   (U = DX^T u),
    div_x u   = g      <=>   div_ref(det DX^{-1} u) = det * g,

with G = det DX^{-1} DX^{-T} equal to the identity for a flat interface.
Scalar problems are solved by defect iteration preconditioned with the exact
flat-slab inverse (per-mode Chebyshev solves), with a GMRES fallback on the
preconditioned system.  The div-curl solves need no iteration beyond one such
scalar solve: the curl equation is constant-coefficient in reference
coordinates and is integrated mode by mode; the slab cohomology (two constant
horizontal fields) carries the wall flux constraints.
"""

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import fourier
from .errors import EllipticNoConverge, IncompatibleData

DIRICHLET = "dirichlet"
FLUX = "flux"


class ScalarSolver:
    """Mixed Dirichlet/flux scalar elliptic solver on one bulk grid.

    Flux boundary data are outward flux densities per unit reference area:
    at the bottom face -(G grad P)_3, at the top face +(G grad P)_3.  For a
    gradient field this equals the physical outward normal derivative times
    the face area element.
    """

    def __init__(self, grid):
        self.grid = grid
        ku, kv = fourier.rwavenumbers(grid.n_u, grid.n_v)
        k2 = (ku**2 + kv**2).ravel()
        self._half_cols = grid.n_v // 2 + 1
        self._groups = {}
        for idx, val in enumerate(k2):
            self._groups.setdefault(float(val), []).append(idx)

    # -- flat preconditioner -------------------------------------------------

    def flat_solve_rows(self, rows, bc_bottom, bc_top):
        """Exact flat-slab solve; `rows` holds the interior residual in rows
        1..n_z-2 and boundary-row residuals at the faces (outward-flux
        convention).  Returns the physical-space correction."""
        g = self.grid
        nz = g.n_z
        rh = fourier.rfft2(rows)
        flat = np.moveaxis(rh, 2, -1).reshape(g.n_u * self._half_cols, -1, nz)
        out = np.empty_like(flat)
        for k2, idx in self._groups.items():
            sub = flat[idx]
            m = sub.shape[0] * sub.shape[1]
            r = sub.reshape(m, nz)
            bot = r[:, 0].copy()
            top = r[:, -1].copy()
            if bc_bottom == FLUX:
                bot = -bot
            out[idx] = g.vo.solve(
                k2, r, bot, top, bc_bottom, bc_top).reshape(sub.shape)
        outh = np.moveaxis(
            out.reshape((g.n_u, self._half_cols) + rh.shape[3:] + (nz,)), -1, 2)
        return fourier.irfft2(outh, (g.n_u, g.n_v))

    # -- residual rows ---------------------------------------------------------

    def rows(self, P, det_src, bot_data, top_data, bc_bottom, bc_top):
        """Residual rows (data - operator) in the stacked layout."""
        g = self.grid
        if g.is_flat:
            lap = g.lap_flat(P)
            Ps = g.d_s(P)
            out_bot = -np.take(Ps, 0, axis=2)
            out_top = np.take(Ps, -1, axis=2)
        else:
            gradP = g.ref_grad(P)
            W = g.flux_vector_from_grad(gradP)
            lap = g.lap_flat(P) + g.ref_div(W - gradP)
            out_bot = -np.take(W[..., 2], 0, axis=2)
            out_top = np.take(W[..., 2], -1, axis=2)
        r = det_src - lap
        if bc_bottom == DIRICHLET:
            r[:, :, 0, ...] = bot_data - np.take(P, 0, axis=2)
        else:
            r[:, :, 0, ...] = bot_data - out_bot
        if bc_top == DIRICHLET:
            r[:, :, -1, ...] = top_data - np.take(P, -1, axis=2)
        else:
            r[:, :, -1, ...] = top_data - out_top
        return r

    def _res_norm(self, rows):
        return float(np.max(np.abs(rows)))

    def solve(self, source_phys, bc_bottom, bc_top, *, tol=1e-10,
              max_iter=200, x0=None, gmres_restart=40, abs_floor=0.0):
        """Solve Delta_x p = source with the given face conditions.

        source_phys is the physical Laplacian target; boundary data are
        attached to the condition tuples: ('dirichlet', arr) or
        ('flux', arr) with arrays shaped (n_u, n_v [, batch]).
        Returns (P, info dict).
        """
        g = self.grid
        kb, bot_data = bc_bottom
        kt, top_data = bc_top
        batch = ()
        if np.ndim(bot_data) > 2:
            batch = np.shape(bot_data)[2:]
        src = np.zeros(g.Z.shape + batch) if source_phys is None \
            else np.broadcast_to(
                np.asarray(source_phys, dtype=float), g.Z.shape + batch).copy()
        det_src = src * g._expand(g.det, src)
        bot = np.broadcast_to(np.asarray(bot_data, dtype=float),
                              (g.n_u, g.n_v) + batch).copy()
        top = np.broadcast_to(np.asarray(top_data, dtype=float),
                              (g.n_u, g.n_v) + batch).copy()

        info = {"compat_defect": 0.0}
        if kb == FLUX and kt == FLUX:
            # Enforce the discrete solvability condition exactly; the
            # adjustment is reported, not hidden.
            area = fourier.TORUS_AREA / (g.n_u * g.n_v)
            vol = np.sum(det_src * g.vo.w[None, None, :].reshape(
                (1, 1, g.n_z) + (1,) * len(batch)), axis=(0, 1, 2)) * area
            bnd = (np.sum(bot, axis=(0, 1)) + np.sum(top, axis=(0, 1))) * area
            defect = vol - bnd
            info["compat_defect"] = float(np.max(np.abs(defect)))
            top = top + defect / fourier.TORUS_AREA

        P = np.zeros(g.Z.shape + batch) if x0 is None else x0.copy()
        r = self.rows(P, det_src, bot, top, kb, kt)
        # Scale from the data rows, independent of any warm start.
        scale = max(float(np.max(np.abs(det_src[:, :, 1:-1]))),
                    float(np.max(np.abs(bot))), float(np.max(np.abs(top))),
                    1e-30)
        target = max(tol * scale, abs_floor)
        res_prev = np.inf
        stall = 0
        res = np.inf
        for it in range(max_iter):
            res = self._res_norm(r)
            if res <= target:
                info.update(iterations=it, residual=res / scale, method="defect")
                return P, info
            stall = stall + 1 if res > 0.7 * res_prev else 0
            if stall >= 3:
                break
            P = P + self.flat_solve_rows(r, kb, kt)
            res_prev = res
            r = self.rows(P, det_src, bot, top, kb, kt)

        if res <= 30.0 * target:
            # Round-off floor of the residual rows; the defect can contract
            # no further but the solution is converged for all practical
            # tolerances below it.
            info.update(iterations=it, residual=res / scale, method="defect-floor")
            return P, info

        # GMRES on the flat-preconditioned system, one batch column at a time.
        shape = P.shape
        nflat = int(np.prod(shape[:3]))
        cols = int(np.prod(batch)) if batch else 1
        Pc = P.reshape(shape[:3] + (cols,))
        detc = det_src.reshape(shape[:3] + (cols,))
        botc = bot.reshape((g.n_u, g.n_v, cols))
        topc = top.reshape((g.n_u, g.n_v, cols))
        for c in range(cols):
            def mv(x):
                xa = x.reshape(shape[:3])
                rows = -self.rows(xa, np.zeros(shape[:3]),
                                  np.zeros((g.n_u, g.n_v)),
                                  np.zeros((g.n_u, g.n_v)), kb, kt)
                return self.flat_solve_rows(rows, kb, kt).ravel()

            data_rows = self.rows(np.zeros(shape[:3]), detc[..., c],
                                  botc[..., c], topc[..., c], kb, kt)
            rhs = self.flat_solve_rows(data_rows, kb, kt).ravel()
            op = LinearOperator((nflat, nflat), matvec=mv)
            sol, code = gmres(op, rhs, x0=Pc[..., c].ravel(),
                              rtol=max(tol, 1e-14), restart=gmres_restart,
                              maxiter=max_iter)
            Pc[..., c] = sol.reshape(shape[:3])
        P = Pc.reshape(shape)
        r = self.rows(P, det_src, bot, top, kb, kt)
        res = self._res_norm(r)
        if res > 10.0 * target:
            raise EllipticNoConverge(
                f"scalar solve stalled at relative residual {res / scale:.3e}")
        info.update(iterations=max_iter, residual=res / scale, method="gmres")
        return P, info


# ---------------------------------------------------------------------------
# Constant-coefficient curl integration (reference coordinates)
# ---------------------------------------------------------------------------

def _curl_particular(grid, F):
    """Solve curl_ref W = F, div_ref W = 0, W3 = 0 on both faces.

    F is the flux-form curl target (complex work happens per mode); requires
    div_ref F ~ 0 and vanishing horizontal mean of F3.  Returns W (real).
    """
    g = grid
    nz = g.n_z
    ku, kv = fourier.wavenumbers(g.n_u, g.n_v)
    k2 = ku**2 + kv**2
    Fh = np.stack([fourier.fft2(F[..., i]) for i in range(3)], axis=-1)

    rhs3 = -(1j * ku[..., None] * Fh[..., 1] - 1j * kv[..., None] * Fh[..., 0])
    w3 = np.empty_like(rhs3)
    flat = rhs3.reshape(-1, nz)
    out = np.empty_like(flat)
    groups = {}
    for idx, val in enumerate(k2.ravel()):
        groups.setdefault(float(val), []).append(idx)
    for val, idx in groups.items():
        r = flat[idx]
        out[idx] = g.vo.solve(val, r, np.zeros(len(idx)), np.zeros(len(idx)),
                              DIRICHLET, DIRICHLET)
    w3 = out.reshape(rhs3.shape)
    w3s = np.einsum("ij,uvj->uvi", g.vo.D, w3)

    k2s = k2.copy()
    k2s[0, 0] = 1.0
    iku = 1j * ku[..., None]
    ikv = 1j * kv[..., None]
    w1 = (iku * w3s + ikv * Fh[..., 2]) / k2s[..., None]
    w2 = (ikv * w3s - iku * Fh[..., 2]) / k2s[..., None]
    # k = 0 column: integrate the horizontal components upward from zero.
    w1[0, 0, :] = g.vo.antiderivative(Fh[0, 0, :, 1])
    w2[0, 0, :] = g.vo.antiderivative(-Fh[0, 0, :, 0])
    W = np.stack([fourier.ifft2(w1), fourier.ifft2(w2), fourier.ifft2(w3)], axis=-1)
    return W


def _g_dot(grid, U):
    return np.einsum("uvsij,uvsj->uvsi", grid.G, U)


def solve_divcurl_plus(grid, curl_rhs, div_rhs, theta, flux, *, tol=1e-11,
                       check_tol=1e-6, solver=None, warm_start=False):
    """Recover a plasma-side vector field from curl, divergence, interface
    normal trace, and wall flux.

    curl_rhs: (n_u,n_v,n_z,3) Cartesian curl target sampled on the grid;
    div_rhs: scalar divergence target (or None); theta: interface normal
    trace u.n (plasma-outward n); flux: length-2 wall flux vector
    (integral of the horizontal components over the top wall).
    """
    g = grid
    assert g.side == "plus"
    g.check_finite(curl_rhs, "curl target")
    theta = np.asarray(theta, dtype=float)
    div_arr = np.zeros(g.Z.shape) if div_rhs is None else np.asarray(div_rhs)

    # Solvability guards (compatibility conditions of the continuous problem).
    wall_fz = fourier.mean(g.wall_trace(curl_rhs[..., 2])) * fourier.TORUS_AREA
    scale = max(np.max(np.abs(curl_rhs)), np.max(np.abs(theta)),
                np.max(np.abs(div_arr)), 1.0)
    if abs(wall_fz) > check_tol * scale * fourier.TORUS_AREA:
        raise IncompatibleData(
            f"curl target has nonzero wall flux {wall_fz:.3e}")
    divf = g.div(curl_rhs)
    if np.max(np.abs(divf)) > check_tol * scale * max(1.0, g.kmag.max()):
        raise IncompatibleData(
            f"curl target is not solenoidal (max div = {np.max(np.abs(divf)):.3e})")
    qs = g.geom.quad_weights()
    theta_int = float(np.sum(theta * qs))
    div_int = g.integrate(div_arr)
    if abs(theta_int - div_int) > check_tol * scale * fourier.TORUS_AREA:
        raise IncompatibleData(
            f"int theta dS = {theta_int:.3e} != int g dx = {div_int:.3e}")

    F = g.to_flux_form(curl_rhs)
    Wp = _curl_particular(g, F)

    t_const = np.asarray(flux, dtype=float) / fourier.TORUS_AREA \
        - fourier.mean(g.wall_trace(Wp[..., :2]))
    U0 = Wp.copy()
    U0[..., 0] += t_const[0]
    U0[..., 1] += t_const[1]

    GU0 = _g_dot(g, U0)
    jgam = g.geom.area_elem
    bot_data = theta * jgam + np.take(GU0[..., 2], 0, axis=2)
    top_data = -np.take(GU0[..., 2], -1, axis=2)
    src = div_arr - g.ref_div(GU0) / g.det

    sol = solver if solver is not None else ScalarSolver(g)
    x0 = None
    if warm_start:
        # Alternative iteration path for uniqueness cross-checks: start from
        # the exact flat-slab solution instead of zero.
        data_rows = sol.rows(np.zeros(g.Z.shape), src * g.det, bot_data,
                             top_data, FLUX, FLUX)
        x0 = sol.flat_solve_rows(data_rows, FLUX, FLUX)
    P, info = sol.solve(src, (FLUX, bot_data), (FLUX, top_data), tol=tol,
                        x0=x0)
    U = U0 + g.ref_grad(P)
    u = g.from_one_form(U)

    report = {
        "curl_residual": float(np.max(np.abs(g.curl(u) - curl_rhs))),
        "div_residual": float(np.max(np.abs(g.div(u) - div_arr))),
        "theta_residual": float(np.max(np.abs(
            g.normal_flux_at_interface(u) / jgam - theta))),
        "wall_normal_residual": float(np.max(np.abs(g.wall_trace(u[..., 2])))),
        "flux_residual": float(np.max(np.abs(
            fourier.mean(g.wall_trace(u[..., :2])) * fourier.TORUS_AREA
            - np.asarray(flux)))),
    }
    report.update(info)
    return u, report


def solve_vacuum_field(grid, j_wall, theta_hat=None, *, tol=1e-11,
                       check_tol=1e-8, solver=None):
    """Curl-free, divergence-free vacuum field from the wall surface current.

    j_wall: (n_u,n_v,2) tangential current components (J1, J2) on the bottom
    wall, required surface-divergence-free; theta_hat: optional normal trace
    h.n on the interface (default 0, the physical boundary condition).
    """
    g = grid
    assert g.side == "minus"
    g.check_finite(j_wall, "surface current")
    jd = fourier.deriv(j_wall[..., 0], 0) + fourier.deriv(j_wall[..., 1], 1)
    jscale = max(float(np.max(np.abs(j_wall))), 1e-30)
    if np.max(np.abs(jd)) > check_tol * jscale * max(1.0, float(g.kmag.max())):
        raise IncompatibleData(
            f"surface current is not divergence-free (max {np.max(np.abs(jd)):.3e})")

    # Tangential wall trace of the field: n- x h = J  =>  (h1, h2) = (-J2, J1).
    wall_t = np.stack([-j_wall[..., 1], j_wall[..., 0]], axis=-1)
    t_const = fourier.mean(wall_t)
    psi_wall, grad_res = fourier.invert_surface_gradient(
        wall_t[..., 0] - t_const[0], wall_t[..., 1] - t_const[1])
    if grad_res > check_tol * jscale * max(1.0, float(g.kmag.max())):
        raise IncompatibleData(
            f"wall tangential data has a non-gradient part ({grad_res:.3e})")

    T = np.zeros(g.Z.shape + (3,))
    T[..., 0] = t_const[0]
    T[..., 1] = t_const[1]
    GT = _g_dot(g, T)
    jgam = g.geom.area_elem
    theta = np.zeros((g.n_u, g.n_v)) if theta_hat is None else np.asarray(theta_hat)
    top_data = -theta * jgam - np.take(GT[..., 2], -1, axis=2)
    src = -g.ref_div(GT) / g.det

    sol = solver if solver is not None else ScalarSolver(g)
    P, info = sol.solve(src, (DIRICHLET, psi_wall), (FLUX, top_data), tol=tol)
    U = T + g.ref_grad(P)
    hh = g.from_one_form(U)

    report = {
        "curl_residual": float(np.max(np.abs(g.curl(hh)))),
        "div_residual": float(np.max(np.abs(g.div(hh)))),
        "normal_residual": float(np.max(np.abs(
            g.normal_flux_at_interface(hh) / jgam - theta))),
        "wall_tangential_residual": float(np.max(np.abs(
            g.wall_trace(hh[..., :2]) - wall_t))),
        "gradient_lsq_residual": grad_res,
    }
    report.update(info)
    return hh, report


def reconstruct_efield(grid, minus_dthh, tangential_target, *, tol=1e-10,
                       solver=None):
    """Vacuum electric field from Faraday's law and mixed boundary data.

    curl E = -d_t hhat, div E = 0, n x E given on the interface (passed as
    the 1-form tangential components (E.tau_u, E.tau_v)), and zero normal
    trace on the bottom wall.  The interface data over-determines the scalar
    correction potential; the non-gradient part is dropped by least squares
    and its magnitude reported.
    """
    g = grid
    assert g.side == "minus"
    F = g.to_flux_form(-minus_dthh)
    Wp = _curl_particular(g, F)

    r = tangential_target - g.interface_trace(Wp[..., :2])
    t_const = fourier.mean(r)
    d_top, lsq_res = fourier.invert_surface_gradient(
        r[..., 0] - t_const[0], r[..., 1] - t_const[1])

    T = np.zeros(g.Z.shape + (3,))
    T[..., 0] = t_const[0]
    T[..., 1] = t_const[1]
    U0 = Wp + T
    GU0 = _g_dot(g, U0)
    bot_data = np.take(GU0[..., 2], 0, axis=2)
    src = -g.ref_div(GU0) / g.det

    sol = solver if solver is not None else ScalarSolver(g)
    P, info = sol.solve(src, (FLUX, bot_data), (DIRICHLET, d_top), tol=tol)
    E = g.from_one_form(U0 + g.ref_grad(P))
    report = {
        "tangential_lsq_residual": float(lsq_res),
        "curl_residual": float(np.max(np.abs(g.curl(E) + minus_dthh))),
        "div_residual": float(np.max(np.abs(g.div(E)))),
        "wall_normal_residual": float(np.max(np.abs(g.wall_trace(E[..., 2])))),
    }
    report.update(info)
    return E, report
