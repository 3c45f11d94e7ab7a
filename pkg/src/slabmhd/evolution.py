"""Time integration of the coupled free-boundary system.

The state (gamma, v, h, fluxes) is advanced with classical fixed-step RK4.
Bulk fields are stored on the mapped plasma grid, so their stored-array time
derivative is the physical one plus advection by the grid velocity; the grid
velocity comes from differentiating the harmonic coordinate map with respect
to its boundary data (the same closed-form mode solve applied to d_t gamma),
not from finite differences in time.  After every accepted step the magnetic
field is re-projected onto its constraint manifold (div h = 0, h.n = 0 on
the interface, h.n = 0 on the wall), the velocity divergence is removed, and
all correction magnitudes are recorded.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import elliptic, fields, fourier, harmonic, surface as surf
from .errors import (
    EllipticNoConverge,
    FoldedMap,
    ChartOverflow,
    IncompatibleData,
    StepRejected,
    TransversalityLoss,
)


@dataclass
class StepperConfig:
    dt: float
    t_end: float
    alpha: float
    scheme: str = "rk4"
    filter_enabled: bool = False
    filter_strength: float = 36.0
    filter_order: int = 8
    n_z: int = harmonic.DEFAULT_NZ
    tol_ell: float = 1e-10
    tol_div: float = 1e-8
    tol_bc: float = 1e-8
    transport_check: bool = False

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.scheme != "rk4":
            raise ValueError("only the rk4 scheme is implemented")


@dataclass
class TransportPair:
    """Elsasser-symmetrized vorticity/current combinations."""

    xi: np.ndarray    # omega - j, transported by v + h
    eta: np.ndarray   # omega + j, transported by v - h

    def omega(self):
        return 0.5 * (self.xi + self.eta)

    def current(self):
        return 0.5 * (self.eta - self.xi)


@dataclass
class SimState:
    t: float
    gamma: surf.HeightField
    v: np.ndarray
    h: np.ndarray
    fluxes: fields.Fluxes
    transport: TransportPair = None

    def copy(self):
        return SimState(
            t=self.t, gamma=surf.HeightField(self.gamma.values.copy()),
            v=self.v.copy(), h=self.h.copy(),
            fluxes=fields.Fluxes(self.fluxes.v_flux.copy(),
                                 self.fluxes.h_flux.copy()),
            transport=None if self.transport is None else TransportPair(
                self.transport.xi.copy(), self.transport.eta.copy()))


@dataclass
class _Rates:
    dgamma: np.ndarray
    dv: np.ndarray
    dh: np.ndarray
    dvf: np.ndarray
    dhf: np.ndarray
    dxi: np.ndarray = None
    deta: np.ndarray = None


class RunContext:
    """Static problem data shared by all stages of a run."""

    def __init__(self, ref, cfg, current=None):
        self.ref = ref
        self.cfg = cfg
        self.current = current if current is not None else \
            fields.SurfaceCurrentInput.zero(ref.n_u, ref.n_v)
        self._filter_half = None

    def frame(self, gamma):
        geom = surf.build_geometry(self.ref, gamma)
        grid_p, solver_p = harmonic.bulk_grid(geom, "plus", self.cfg.n_z)
        grid_m, solver_m = harmonic.bulk_grid(geom, "minus", self.cfg.n_z)
        return geom, grid_p, solver_p, grid_m, solver_m

    def filter_mask(self):
        if self._filter_half is None:
            self._filter_half = fourier.exp_filter_mask(
                self.ref.n_u, self.ref.n_v, self.cfg.filter_strength,
                self.cfg.filter_order)
        return self._filter_half


def kinematic_rhs(geom, v_interface):
    """d_t gamma = (v.n) o Phi / (nu.n o Phi) on the reference grid."""
    nu_dot_n = 1.0 / geom.w
    if np.min(nu_dot_n) < 0.5:
        raise TransversalityLoss(
            f"nu.n dropped to {np.min(nu_dot_n):.3f} < 0.5")
    vn = np.sum(v_interface * geom.normal, axis=-1)
    return vn * geom.w


def bulk_rhs(state, ctx):
    """Full coupled right-hand side; returns (_Rates, stage diagnostics)."""
    cfg = ctx.cfg
    geom, grid_p, solver_p, grid_m, solver_m = ctx.frame(state.gamma)
    mask = geom.mask

    hh, hh_info = fields.solve_vacuum_field(
        geom, ctx.current, t=state.t, n_z=cfg.n_z, tol=cfg.tol_ell)
    parts = fields.pressure_decomposition(
        geom, state.v, state.h, hh, cfg.alpha, n_z=cfg.n_z, tol=cfg.tol_ell)

    v_iface = grid_p.interface_trace(state.v)
    dgamma = kinematic_rhs(geom, v_iface)

    zdot = grid_p.grid_velocity_z(dgamma)
    Jv = grid_p.grad_tensor(state.v, mask)
    Jh = grid_p.grad_tensor(state.h, mask)
    grad_p = grid_p.grad(parts.p_total)

    rel = state.v.copy()
    rel[..., 2] -= zdot
    adv_v = np.einsum("...ij,...j->...i", Jv, rel)
    str_h = np.einsum("...ij,...j->...i", Jh, state.h)
    adv_h = np.einsum("...ij,...j->...i", Jh, rel)
    str_v = np.einsum("...ij,...j->...i", Jv, state.h)
    dv = -adv_v + str_h - grad_p
    dh = -adv_h + str_v

    # Wall integrals: the grid is fixed there, so the stored rates are the
    # physical ones.
    dvf = fourier.mean(grid_p.wall_trace(dv[..., :2])) * fourier.TORUS_AREA
    dhf = fourier.mean(grid_p.wall_trace(dh[..., :2])) * fourier.TORUS_AREA

    rates = _Rates(dgamma=dgamma, dv=dv, dh=dh, dvf=dvf, dhf=dhf)
    if state.transport is not None:
        rates.dxi, rates.deta = transport_rhs(
            state, geom, grid_p, zdot, Jv=Jv, Jh=Jh)
    diag = {"parts": parts, "hh": hh, "geom": geom,
            "pressure_info": parts.info, "vacuum_info": hh_info}
    return rates, diag


def transport_rhs(state, geom=None, grid_p=None, zdot=None, Jv=None, Jh=None,
                  ctx=None):
    """Rates for the Elsasser pair: d_t xi = -(u+ . grad) xi + (xi . grad) u+
    + 2 tr(grad v x grad h), and the mirrored equation for eta."""
    if geom is None:
        geom, grid_p, _, _, _ = ctx.frame(state.gamma)
        v_iface = grid_p.interface_trace(state.v)
        zdot = grid_p.grid_velocity_z(kinematic_rhs(geom, v_iface))
        Jv = grid_p.grad_tensor(state.v, geom.mask)
        Jh = grid_p.grad_tensor(state.h, geom.mask)
    mask = geom.mask
    xi, eta = state.transport.xi, state.transport.eta
    up = state.v + state.h
    um = state.v - state.h
    up_rel = up.copy()
    up_rel[..., 2] -= zdot
    um_rel = um.copy()
    um_rel[..., 2] -= zdot
    Jxi = grid_p.grad_tensor(xi, mask)
    Jeta = grid_p.grad_tensor(eta, mask)
    Jup = Jv + Jh
    Jum = Jv - Jh
    # 2 tr(grad v x grad h) = 2 sum_l grad v^l x grad h^l
    twist = 2.0 * np.sum(np.cross(Jv, Jh), axis=-2)
    dxi = (-np.einsum("...ij,...j->...i", Jxi, up_rel)
           + np.einsum("...ij,...j->...i", Jup, xi) + twist)
    deta = (-np.einsum("...ij,...j->...i", Jeta, um_rel)
            + np.einsum("...ij,...j->...i", Jum, eta) - twist)
    return dxi, deta


def flux_rhs(state, ctx):
    """Wall-flux rates from the momentum and Faraday integrands."""
    rates, _ = bulk_rhs(state, ctx)
    return rates.dvf, rates.dhf


def _advance(state, rates, dt):
    tr = None
    if state.transport is not None:
        tr = TransportPair(state.transport.xi + dt * rates.dxi,
                           state.transport.eta + dt * rates.deta)
    return SimState(
        t=state.t + dt,
        gamma=surf.HeightField(state.gamma.values + dt * rates.dgamma),
        v=state.v + dt * rates.dv,
        h=state.h + dt * rates.dh,
        fluxes=fields.Fluxes(state.fluxes.v_flux + dt * rates.dvf,
                             state.fluxes.h_flux + dt * rates.dhf),
        transport=tr)


def _combine_rk4(state, k1, k2, k3, k4, dt):
    def mix(a, b, c, d):
        return (a + 2.0 * b + 2.0 * c + d) / 6.0
    rates = _Rates(
        dgamma=mix(k1.dgamma, k2.dgamma, k3.dgamma, k4.dgamma),
        dv=mix(k1.dv, k2.dv, k3.dv, k4.dv),
        dh=mix(k1.dh, k2.dh, k3.dh, k4.dh),
        dvf=mix(k1.dvf, k2.dvf, k3.dvf, k4.dvf),
        dhf=mix(k1.dhf, k2.dhf, k3.dhf, k4.dhf))
    if state.transport is not None:
        rates.dxi = mix(k1.dxi, k2.dxi, k3.dxi, k4.dxi)
        rates.deta = mix(k1.deta, k2.deta, k3.deta, k4.deta)
    return _advance(state, rates, dt)


def _project_solenoidal(grid, solver, u, interface_mode, tol, tol_div,
                        tol_bc):
    """Remove the divergence of u; interface_mode 'zero' pins u.n there
    (magnetic constraint), 'free' only absorbs the mean defect.

    The solve is skipped when the constraint defects already sit well below
    their maintenance tolerances (nothing to clean up)."""
    assert grid.side == "plus"
    div = grid.div(u)
    div_max = float(np.max(np.abs(div)))
    defects = [div_max / max(tol_div, 1e-300)]
    c = 0.0
    if interface_mode == "div-only":
        # no boundary constraints on the field; the solver absorbs the
        # solvability defect of the pure-Neumann problem (logged)
        bot = np.zeros((grid.n_u, grid.n_v))
        top = np.zeros((grid.n_u, grid.n_v))
    else:
        top = grid.wall_trace(u[..., 2])
        defects.append(float(np.max(np.abs(top))) / max(tol_bc, 1e-300))
        if interface_mode == "zero":
            bot = grid.normal_flux_at_interface(u)
            defects.append(float(np.max(np.abs(bot))) / max(tol_bc, 1e-300))
        else:
            area = fourier.TORUS_AREA / (grid.n_u * grid.n_v)
            defect = grid.integrate(div) - float(np.sum(top)) * area
            c = defect / float(np.sum(grid.geom.quad_weights()))
            bot = c * grid.geom.area_elem
    if max(defects) <= 0.25:
        return u, {"correction": 0.0, "mean_shift": 0.0, "skipped": True,
                   "div_max": div_max}
    P, info = solver.solve(div, (elliptic.FLUX, bot), (elliptic.FLUX, top),
                           tol=tol, abs_floor=0.02 * min(tol_div, tol_bc))
    gp = grid.grad(P)
    unew = u - gp
    rep = {"correction": float(np.max(np.abs(gp))),
           "mean_shift": float(c),
           "compat_defect": info.get("compat_defect", 0.0),
           "div_max": div_max}
    return unew, rep


def project_state(state, ctx):
    """Constraint projection after a step; returns (state, report)."""
    cfg = ctx.cfg
    geom, grid_p, solver_p, _, _ = ctx.frame(state.gamma)
    rep = {}
    v, rep["v"] = _project_solenoidal(grid_p, solver_p, state.v, "free",
                                      cfg.tol_ell, cfg.tol_div, cfg.tol_bc)
    h, rep["h"] = _project_solenoidal(grid_p, solver_p, state.h, "zero",
                                      cfg.tol_ell, cfg.tol_div, cfg.tol_bc)
    tr = state.transport
    if tr is not None:
        xi, rep["xi"] = _project_solenoidal(grid_p, solver_p, tr.xi, "div-only",
                                            cfg.tol_ell, cfg.tol_div, cfg.tol_bc)
        eta, rep["eta"] = _project_solenoidal(grid_p, solver_p, tr.eta, "div-only",
                                              cfg.tol_ell, cfg.tol_div, cfg.tol_bc)
        tr = TransportPair(xi, eta)
    return replace(state, v=v, h=h, transport=tr), rep


def apply_filter(state, ctx):
    mask = ctx.filter_mask()
    g = fourier.ifft2(fourier.fft2(state.gamma.values) * mask)
    v = fourier.ifft2(fourier.fft2(state.v) * mask[:, :, None, None])
    h = fourier.ifft2(fourier.fft2(state.h) * mask[:, :, None, None])
    tr = state.transport
    if tr is not None:
        tr = TransportPair(
            fourier.ifft2(fourier.fft2(tr.xi) * mask[:, :, None, None]),
            fourier.ifft2(fourier.fft2(tr.eta) * mask[:, :, None, None]))
    return replace(state, gamma=surf.HeightField(g), v=v, h=h, transport=tr)


def step(state, ctx):
    """One RK4 step with projection; raises StepRejected on stage failure."""
    cfg = ctx.cfg
    dt = cfg.dt
    try:
        k1, diag = bulk_rhs(state, ctx)
        k2, _ = bulk_rhs(_advance(state, k1, 0.5 * dt), ctx)
        k3, _ = bulk_rhs(_advance(state, k2, 0.5 * dt), ctx)
        k4, _ = bulk_rhs(_advance(state, k3, dt), ctx)
        new = _combine_rk4(state, k1, k2, k3, k4, dt)
        new, proj = project_state(new, ctx)
        if cfg.filter_enabled:
            new = apply_filter(new, ctx)
    except (FoldedMap, ChartOverflow, EllipticNoConverge, TransversalityLoss,
            IncompatibleData) as exc:
        raise StepRejected(f"step at t={state.t:.6g} failed: {exc}",
                           t=state.t, cause=exc) from exc
    report = {"projection": proj,
              "cfl": _cfl_estimate(state, ctx, dt),
              "filter": cfg.filter_enabled}
    return new, report


def _cfl_estimate(state, ctx, dt):
    vmax = float(np.max(np.linalg.norm(state.v, axis=-1)))
    du = fourier.TWO_PI / ctx.ref.n_u
    return vmax * dt / du


def initial_state(ref, gamma, v, h, ctx=None, v_flux=None, h_flux=None,
                  with_transport=False, n_z=harmonic.DEFAULT_NZ):
    """Bundle an initial condition; fluxes default to the wall integrals of
    the supplied fields, the transport pair to their curls."""
    gamma = gamma if isinstance(gamma, surf.HeightField) else surf.HeightField(gamma)
    geom = surf.build_geometry(ref, gamma)
    grid_p, _ = harmonic.bulk_grid(geom, "plus", n_z)
    if v_flux is None:
        v_flux = fourier.mean(grid_p.wall_trace(v[..., :2])) * fourier.TORUS_AREA
    if h_flux is None:
        h_flux = fourier.mean(grid_p.wall_trace(h[..., :2])) * fourier.TORUS_AREA
    tr = None
    if with_transport:
        om = grid_p.curl(v, geom.mask)
        jc = grid_p.curl(h, geom.mask)
        tr = TransportPair(xi=om - jc, eta=om + jc)
    return SimState(t=0.0, gamma=gamma, v=v, h=h,
                    fluxes=fields.Fluxes(v_flux, h_flux), transport=tr)


@dataclass
class Snapshot:
    t: float
    gamma: np.ndarray
    v: np.ndarray
    h: np.ndarray
    v_flux: np.ndarray
    h_flux: np.ndarray
    step_report: dict = field(default_factory=dict)
    transport: TransportPair = None


def run(ctx, state, *, cadence=1, on_snapshot=None, on_step=None,
        max_steps=None):
    """Advance to cfg.t_end, collecting snapshots every `cadence` steps.

    Raises StepRejected (with time and cause) if a stage fails; snapshots
    collected so far stay valid on the returned trajectory object.
    """
    cfg = ctx.cfg
    snaps = [snapshot_of(state)]
    if on_snapshot:
        on_snapshot(snaps[-1])
    n = 0
    while state.t < cfg.t_end - 1e-12 * max(1.0, cfg.t_end):
        state, report = step(state, ctx)
        n += 1
        if on_step:
            on_step(state, report)
        if n % cadence == 0 or state.t >= cfg.t_end - 1e-12:
            snaps.append(snapshot_of(state, report))
            if on_snapshot:
                on_snapshot(snaps[-1])
        if max_steps is not None and n >= max_steps:
            break
    return state, snaps


def snapshot_of(state, report=None):
    return Snapshot(t=state.t, gamma=state.gamma.values.copy(),
                    v=state.v.copy(), h=state.h.copy(),
                    v_flux=state.fluxes.v_flux.copy(),
                    h_flux=state.fluxes.h_flux.copy(),
                    step_report=report or {},
                    transport=None if state.transport is None else
                    TransportPair(state.transport.xi.copy(),
                                  state.transport.eta.copy()))
