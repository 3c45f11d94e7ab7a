import numpy as np
import pytest

from slabmhd import fourier, surface as surf
from slabmhd.errors import (ChartOverflow, NewtonDiverged, NonFiniteInput)


def graph_kappa(amplitude, ku, kv, U, V):
    """Symbolic oracle: mean curvature of z = z0 - A cos(k.x) with respect
    to the downward (plasma-outward) normal is eta_ss / (1+eta_s^2)^{3/2}
    along the wave direction."""
    kn = np.hypot(ku, kv)
    th = ku * U + kv * V
    eta_s = amplitude * kn * np.sin(th)
    eta_ss = amplitude * kn**2 * np.cos(th)
    return eta_ss / (1.0 + eta_s**2) ** 1.5


class TestBuildGeometry:
    def test_flat_plane(self, ref16, flat16):
        assert np.max(np.abs(flat16.kappa)) == 0.0
        assert np.allclose(flat16.normal[..., 2], -1.0)
        assert np.allclose(flat16.metric, np.eye(2))
        assert flat16.area() == pytest.approx(fourier.TORUS_AREA)

    def test_unit_normal_everywhere(self, wavy16):
        assert np.max(np.abs(np.linalg.norm(wavy16.normal, axis=-1) - 1.0)) < 1e-14

    def test_sin_mode_kappa_matches_graph_oracle(self, ref16):
        eps = 0.1
        hf = surf.HeightField.from_function(ref16, lambda U, V: eps * np.sin(U))
        geom = surf.build_geometry(ref16, hf)
        U, V = ref16.param_grid()
        oracle = eps * np.sin(U) / (1 + eps**2 * np.cos(U) ** 2) ** 1.5
        assert np.max(np.abs(geom.kappa - oracle)) < 1e-10

    def test_constant_lift_translation_invariance(self, ref16, flat16):
        hf = surf.HeightField(np.full(ref16.shape, 0.05))
        geom = surf.build_geometry(ref16, hf)
        assert np.max(np.abs(geom.kappa)) < 1e-14
        assert np.allclose(geom.area_elem, flat16.area_elem)
        assert np.allclose(geom.metric, flat16.metric)
        assert np.allclose(geom.second_form, flat16.second_form, atol=1e-14)

    def test_chart_overflow(self, ref16):
        with pytest.raises(ChartOverflow):
            surf.build_geometry(ref16, surf.HeightField(
                np.full(ref16.shape, ref16.delta0 + 0.01)))

    def test_nan_rejected(self, ref16):
        bad = np.zeros(ref16.shape)
        bad[0, 0] = np.nan
        with pytest.raises(NonFiniteInput):
            surf.HeightField(bad)

    def test_trace_of_shape_operator_is_kappa(self, wavy16):
        tr = wavy16.shape_op[..., 0, 0] + wavy16.shape_op[..., 1, 1]
        assert np.allclose(tr, wavy16.kappa)


class TestTangentialCalculus:
    def test_constant_in_kernel(self, wavy16):
        c = np.full(wavy16.ref.shape, 1.7)
        assert np.max(np.abs(surf.grad_surface(wavy16, c))) < 1e-12
        assert np.max(np.abs(surf.laplace_beltrami(wavy16, c))) < 1e-11

    def test_flat_eigenfunction(self, flat16):
        U, _ = flat16.ref.param_grid()
        f = np.sin(U)
        assert np.max(np.abs(surf.laplace_beltrami(flat16, f) + f)) < 1e-12

    def test_divergence_of_normal_is_kappa(self):
        ref = surf.ReferenceSurface(32, 32, 0.0, delta0=0.3, c0=0.2)
        hf = surf.HeightField.from_function(
            ref, lambda U, V: 0.08 * np.sin(U) + 0.05 * np.cos(U + V))
        geom = surf.build_geometry(ref, hf)
        div_n = surf.surface_divergence(geom, geom.normal)
        assert np.max(np.abs(div_n - geom.kappa)) < 1e-10

    def test_lb_integrates_to_zero(self, wavy16, rng):
        f = fourier.random_band_limited(16, 16, 4, rng)
        lb = surf.laplace_beltrami(wavy16, f)
        assert abs(wavy16.integrate(lb)) < 1e-10

    def test_curvature_flux_identity(self, wavy16):
        # closed-surface identity: int kappa n dS = 0 (no boundary terms)
        val = np.stack([wavy16.integrate(wavy16.kappa * wavy16.normal[..., i])
                        for i in range(3)])
        assert np.max(np.abs(val)) < 1e-8


class TestSecondFormIdentities:
    def test_flat_residuals_vanish(self, flat16):
        ids = surf.second_form_and_identities(flat16)
        assert ids["simons_residual"] < 1e-13
        assert ids["codazzi_normal_residual"] < 1e-13

    def test_refinement_decay_exceeds_fourth_order(self):
        vals = {}
        for n in (16, 32):
            ref = surf.ReferenceSurface(n, n, 0.0, delta0=0.3, c0=0.2)
            hf = surf.HeightField.from_function(
                ref, lambda U, V: 0.1 * np.sin(U) + 0.05 * np.cos(U + V))
            vals[n] = surf.second_form_and_identities(
                surf.build_geometry(ref, hf))
        # spectral: much faster than N^-4 (ratio 2^4 = 16) between 16 and 32
        for key in ("simons_residual", "codazzi_normal_residual"):
            assert vals[32][key] < vals[16][key] / 16.0
        assert vals[32]["simons_residual"] < 1e-8
        assert vals[32]["codazzi_normal_residual"] < 1e-8

    def test_random_band_limited_small(self, rng):
        ref = surf.ReferenceSurface(48, 48, 0.0, delta0=0.3, c0=0.2)
        g = fourier.random_band_limited(48, 48, 3, rng, amplitude=0.02)
        ids = surf.second_form_and_identities(
            surf.build_geometry(ref, surf.HeightField(g)))
        assert ids["simons_residual"] < 1e-6
        assert ids["codazzi_normal_residual"] < 1e-6


class TestModifiedCurvature:
    def test_zero_gamma(self, ref16):
        ka = surf.kappa_a_forward(ref16, surf.HeightField.zero(ref16), 10.0)
        assert np.max(np.abs(ka.values)) == 0.0

    def test_constant_lift(self, ref16):
        ka = surf.kappa_a_forward(ref16, surf.HeightField(
            np.full(ref16.shape, 0.04)), 10.0)
        assert np.max(np.abs(ka.values - 100.0 * 0.04)) < 1e-12

    def test_forward_is_kappa_plus_stiffness(self, ref16):
        eps = 0.1
        hf = surf.HeightField.from_function(ref16, lambda U, V: eps * np.sin(U))
        geom = surf.build_geometry(ref16, hf)
        ka = surf.kappa_a_forward(ref16, hf, 10.0)
        assert np.allclose(ka.values, geom.kappa + 100.0 * hf.values)

    def test_roundtrip_random(self, ref16, rng):
        g = fourier.random_band_limited(16, 16, 3, rng, amplitude=0.08)
        ka = surf.kappa_a_forward(ref16, surf.HeightField(g), 10.0)
        rec, iters, res = surf.kappa_a_invert(ref16, ka, 10.0, tol=1e-11)
        assert np.max(np.abs(rec.values - g)) < 1e-10
        assert iters <= 8

    def test_zero_target_one_step(self, ref16):
        rec, iters, _ = surf.kappa_a_invert(
            ref16, np.zeros(ref16.shape), 10.0, tol=1e-11)
        assert np.max(np.abs(rec.values)) < 1e-11
        assert iters <= 1

    def test_stiffness_doubling_same_gamma(self, ref16, rng):
        g = fourier.random_band_limited(16, 16, 3, rng, amplitude=0.05)
        for a in (10.0, 20.0):
            ka = surf.kappa_a_forward(ref16, surf.HeightField(g), a)
            rec, _, _ = surf.kappa_a_invert(ref16, ka, a, tol=1e-11)
            assert np.max(np.abs(rec.values - g)) < 1e-10

    def test_a_min_guard(self, ref16):
        with pytest.raises(ValueError):
            surf.kappa_a_invert(ref16, np.zeros(ref16.shape), 0.5, a_min=1.0)

    def test_newton_diverges_outside_basin(self, ref16):
        target = np.full(ref16.shape, 1e4)
        with pytest.raises((NewtonDiverged, ChartOverflow)):
            surf.kappa_a_invert(ref16, target, 10.0, tol=1e-11, max_iter=4)


def test_translation_of_reference_plane():
    # shifting the reference height z0 leaves all intrinsic quantities alone
    out = {}
    for z0 in (0.0, 0.3):
        ref = surf.ReferenceSurface(16, 16, z0, delta0=0.2, c0=0.15)
        hf = surf.HeightField.from_function(ref, lambda U, V: 0.05 * np.sin(U + V))
        geom = surf.build_geometry(ref, hf)
        out[z0] = geom
    assert np.allclose(out[0.0].kappa, out[0.3].kappa)
    assert np.allclose(out[0.0].metric, out[0.3].metric)
    assert np.allclose(out[0.0].second_form, out[0.3].second_form)
    assert np.allclose(out[0.0].phi[..., 2] + 0.3, out[0.3].phi[..., 2])
