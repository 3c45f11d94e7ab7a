import numpy as np
import pytest

from slabmhd import evolution, fields, harmonic, surface as surf
from slabmhd.errors import StepRejected

NZ = 13


def make_ctx(ref, alpha=1.0, dt=0.05, t_end=1.0, current=None, **kw):
    cfg = evolution.StepperConfig(dt=dt, t_end=t_end, alpha=alpha, n_z=NZ, **kw)
    return evolution.RunContext(ref, cfg, current)


def capillary_state(ref, eps=0.01, mode=(1, 0)):
    hf = surf.HeightField.from_function(
        ref, lambda U, V: eps * np.cos(mode[0] * U + mode[1] * V))
    z = np.zeros((ref.n_u, ref.n_v, NZ, 3))
    return evolution.initial_state(ref, hf, z, z.copy(), n_z=NZ)


class TestKinematic:
    def test_zero_normal_velocity(self, flat16):
        v = np.zeros((16, 16, 3))
        assert np.max(np.abs(evolution.kinematic_rhs(flat16, v))) == 0.0

    def test_flat_vertical_velocity(self, flat16):
        # nu = n = (0,0,-1): upward velocity w makes gamma shrink at rate w
        v = np.zeros((16, 16, 3))
        v[..., 2] = 0.3
        out = evolution.kinematic_rhs(flat16, v)
        assert np.max(np.abs(out + 0.3)) < 1e-14

    def test_tilted_algebraic_oracle(self, wavy16):
        rngv = np.random.default_rng(5)
        v = rngv.standard_normal((16, 16, 3)) * 0.1
        out = evolution.kinematic_rhs(wavy16, v)
        vn = np.sum(v * wavy16.normal, axis=-1)
        assert np.max(np.abs(out - vn * wavy16.w)) < 1e-13

    def test_transversality_loss(self, ref16):
        hf = surf.HeightField.from_function(
            ref16, lambda U, V: 0.38 * np.sin(5 * U))
        geom = surf.build_geometry(ref16, hf, check_chart=False)
        v = np.zeros((16, 16, 3))
        with pytest.raises(evolution.TransversalityLoss):
            evolution.kinematic_rhs(geom, v)


class TestBulkRHS:
    def test_static_equilibrium(self, ref16):
        hh_t = np.array([0.5, 0.2])
        jb = np.zeros((16, 16, 2))
        jb[..., 0], jb[..., 1] = hh_t[1], -hh_t[0]
        ctx = make_ctx(ref16, alpha=0.7,
                       current=fields.SurfaceCurrentInput(jb, law="constant"))
        z = np.zeros((16, 16, NZ, 3))
        h = z.copy()
        h[..., 0] = 1.2
        st = evolution.initial_state(ref16, surf.HeightField.zero(ref16), z, h,
                                     n_z=NZ)
        rates, _ = evolution.bulk_rhs(st, ctx)
        assert np.max(np.abs(rates.dgamma)) < 1e-13
        assert np.max(np.abs(rates.dv)) < 1e-12
        assert np.max(np.abs(rates.dh)) < 1e-13
        assert np.max(np.abs(rates.dvf)) < 1e-11
        assert np.max(np.abs(rates.dhf)) < 1e-11

    def test_alfvenic_h_frozen(self, ref16):
        ctx = make_ctx(ref16, alpha=0.0)
        grid, _ = harmonic.bulk_grid(
            surf.build_geometry(ref16, surf.HeightField.zero(ref16)), "plus", NZ)
        U, V = ref16.param_grid()
        u = np.zeros(grid.Z.shape + (3,))
        u[..., 0] = 0.1 * np.cos(V[..., None]) * np.cos(np.pi * (grid.Z - 1))
        u[..., 2] = 0.0
        st = evolution.initial_state(ref16, surf.HeightField.zero(ref16),
                                     u, u.copy(), n_z=NZ)
        rates, _ = evolution.bulk_rhs(st, ctx)
        # (v.grad)h = (h.grad)v when v = h, so dh reduces to grid advection
        zdot = grid.grid_velocity_z(rates.dgamma)
        Jh = grid.grad_tensor(u, None)
        corr = np.einsum("...ij,...j->...i", Jh,
                         np.stack([np.zeros_like(zdot)] * 2 + [zdot], axis=-1))
        assert np.max(np.abs(rates.dh - corr)) < 1e-10


class TestTransport:
    def test_euler_reduction_and_twist_cancellation(self, ref16):
        ctx = make_ctx(ref16, alpha=0.0)
        grid, _ = harmonic.bulk_grid(
            surf.build_geometry(ref16, surf.HeightField.zero(ref16)), "plus", NZ)
        U, V = ref16.param_grid()
        v = np.zeros(grid.Z.shape + (3,))
        v[..., 0] = 0.1 * np.sin(V[..., None]) * np.sin(np.pi * grid.Z)
        st = evolution.initial_state(ref16, surf.HeightField.zero(ref16),
                                     v, v.copy(), n_z=NZ, with_transport=True)
        # v = h: tr(grad v x grad h) = 0, xi and eta both advect by v -+ h
        dxi, deta = evolution.transport_rhs(st, ctx=ctx)
        # with v=h: omega = j so xi = 0 identically
        assert np.max(np.abs(st.transport.xi)) < 1e-12
        assert np.max(np.abs(dxi - 0.0 - np.zeros_like(dxi))) < 1e-8

    def test_two_dimensional_symmetry_preserved(self, ref16):
        # no v3/h3 and no z-dependence: xi, eta stay aligned with e3
        ctx = make_ctx(ref16, alpha=0.0)
        U, V = ref16.param_grid()
        v = np.zeros((16, 16, NZ, 3))
        v[..., 0] = 0.1 * np.sin(V)[..., None]
        h = np.zeros_like(v)
        h[..., 1] = 0.1 * np.sin(U)[..., None]
        st = evolution.initial_state(ref16, surf.HeightField.zero(ref16),
                                     v, h, n_z=NZ, with_transport=True)
        dxi, deta = evolution.transport_rhs(st, ctx=ctx)
        assert np.max(np.abs(dxi[..., :2])) < 1e-12
        assert np.max(np.abs(deta[..., :2])) < 1e-12


class TestFluxRHS:
    def test_equilibrium_zero(self, ref16):
        ctx = make_ctx(ref16, alpha=0.0)
        z = np.zeros((16, 16, NZ, 3))
        st = evolution.initial_state(ref16, surf.HeightField.zero(ref16), z,
                                     z.copy(), n_z=NZ)
        dvf, dhf = evolution.flux_rhs(st, ctx)
        assert np.max(np.abs(dvf)) < 1e-13
        assert np.max(np.abs(dhf)) < 1e-13

    def test_alfvenic_h_flux_frozen(self, ref16):
        ctx = make_ctx(ref16, alpha=0.0)
        grid, _ = harmonic.bulk_grid(
            surf.build_geometry(ref16, surf.HeightField.zero(ref16)), "plus", NZ)
        u = np.zeros(grid.Z.shape + (3,))
        U, V = ref16.param_grid()
        u[..., 0] = 0.1 * np.cos(V[..., None]) * np.cos(np.pi * (grid.Z - 1))
        st = evolution.initial_state(ref16, surf.HeightField.zero(ref16),
                                     u, u.copy(), n_z=NZ)
        _, dhf = evolution.flux_rhs(st, ctx)
        assert np.max(np.abs(dhf)) < 1e-11

    def test_rigid_translation(self, ref16):
        ctx = make_ctx(ref16, alpha=0.0)
        v = np.zeros((16, 16, NZ, 3))
        v[..., 0], v[..., 1] = 0.3, -0.1
        st = evolution.initial_state(ref16, surf.HeightField.zero(ref16), v,
                                     np.zeros_like(v), n_z=NZ)
        dvf, _ = evolution.flux_rhs(st, ctx)
        assert np.max(np.abs(dvf)) < 1e-12


class TestStep:
    def test_equilibrium_hundred_steps(self, ref16):
        hh_t = np.array([0.3, 0.4])
        jb = np.zeros((16, 16, 2))
        jb[..., 0], jb[..., 1] = hh_t[1], -hh_t[0]
        ctx = make_ctx(ref16, alpha=0.5, dt=0.05,
                       current=fields.SurfaceCurrentInput(jb, law="constant"))
        z = np.zeros((16, 16, NZ, 3))
        h = z.copy()
        h[..., 0] = 1.0
        st = evolution.initial_state(ref16, surf.HeightField.zero(ref16), z, h,
                                     n_z=NZ)
        for _ in range(100):
            st, _ = evolution.step(st, ctx)
        assert np.max(np.abs(st.gamma.values)) < 1e-10
        assert np.max(np.abs(st.v)) < 1e-10
        assert np.max(np.abs(st.h - h)) < 1e-10

    def test_fourth_order_refinement(self, ref16):
        # Richardson: halving dt cuts the endpoint error ~16x
        t_end = 0.4
        sols = {}
        for dt in (0.1, 0.05, 0.025):
            ctx = make_ctx(ref16, alpha=1.0, dt=dt, t_end=t_end)
            st = capillary_state(ref16, eps=0.02)
            while st.t < t_end - 1e-12:
                st, _ = evolution.step(st, ctx)
            sols[dt] = st.gamma.values.copy()
        e1 = np.max(np.abs(sols[0.1] - sols[0.025]))
        e2 = np.max(np.abs(sols[0.05] - sols[0.025]))
        ratio = e1 / max(e2, 1e-30)
        assert 8.0 < ratio < 40.0  # ~ 2^4 with Richardson slack

    def test_step_rejected_wraps_wall_contact(self, ref16):
        ctx = make_ctx(ref16, alpha=0.0, dt=0.1)
        # strong upward velocity pushes the interface into the wall gap
        v = np.zeros((16, 16, NZ, 3))
        v[..., 2] = 4.0
        st = evolution.initial_state(ref16, surf.HeightField.zero(ref16), v,
                                     np.zeros_like(v), n_z=NZ)
        with pytest.raises(StepRejected):
            for _ in range(30):
                st, _ = evolution.step(st, ctx)

    def test_filter_reported(self, ref16):
        ctx = make_ctx(ref16, alpha=1.0, dt=0.05, filter_enabled=True)
        st = capillary_state(ref16)
        st, rep = evolution.step(st, ctx)
        assert rep["filter"] is True

    def test_constraints_maintained(self, ref16):
        ctx = make_ctx(ref16, alpha=1.0, dt=0.05)
        st = capillary_state(ref16, eps=0.02)
        geom = surf.build_geometry(ref16, st.gamma)
        grid, _ = harmonic.bulk_grid(geom, "plus", NZ)
        for _ in range(10):
            st, rep = evolution.step(st, ctx)
        geom = surf.build_geometry(ref16, st.gamma)
        grid, _ = harmonic.bulk_grid(geom, "plus", NZ)
        assert np.max(np.abs(grid.div(st.v))) < 1e-7
        assert np.max(np.abs(grid.div(st.h))) < 1e-7
        assert np.max(np.abs(grid.normal_flux_at_interface(st.h))) < 1e-7


class TestTrajectoryProperties:
    def test_run_collects_snapshots(self, ref16):
        ctx = make_ctx(ref16, alpha=1.0, dt=0.1, t_end=0.5)
        st = capillary_state(ref16)
        state, snaps = evolution.run(ctx, st, cadence=1)
        assert len(snaps) == 6
        assert state.t == pytest.approx(0.5)

    def test_time_reversal(self, ref16):
        # ideal dynamics: negate v, run back, recover the initial interface
        dt, n = 0.05, 8
        ctx = make_ctx(ref16, alpha=1.0, dt=dt)
        st0 = capillary_state(ref16, eps=0.02)
        st = st0.copy()
        for _ in range(n):
            st, _ = evolution.step(st, ctx)
        st_rev = evolution.SimState(
            t=0.0, gamma=st.gamma, v=-st.v, h=st.h, fluxes=st.fluxes)
        for _ in range(n):
            st_rev, _ = evolution.step(st_rev, ctx)
        err = np.max(np.abs(st_rev.gamma.values - st0.gamma.values))
        assert err < 5e-9  # integrator-order error, not identity

    def test_transport_consistency_with_curl(self, ref16):
        # curl of the stepped v tracks the transported vorticity
        ctx = make_ctx(ref16, alpha=1.0, dt=0.05)
        hf = surf.HeightField.from_function(ref16, lambda U, V: 0.02 * np.cos(U))
        grid, _ = harmonic.bulk_grid(surf.build_geometry(ref16, hf), "plus", NZ)
        v = np.zeros(grid.Z.shape + (3,))
        U, V = ref16.param_grid()
        v[..., 0] = 0.05 * np.cos(V[..., None]) * np.cos(np.pi * (grid.Z - 1))
        st = evolution.initial_state(ref16, hf, v, np.zeros_like(v), n_z=NZ,
                                     with_transport=True)
        for _ in range(8):
            st, _ = evolution.step(st, ctx)
        geom = surf.build_geometry(ref16, st.gamma)
        grid, _ = harmonic.bulk_grid(geom, "plus", NZ)
        omega_direct = grid.curl(st.v, geom.mask)
        omega_transport = st.transport.omega()
        scale = max(np.max(np.abs(omega_direct)), 1e-10)
        assert np.max(np.abs(omega_direct - omega_transport)) / scale < 5e-3
