"""Unit tests for displacement interpolation, the single-Dirac metric and
the diffusion texture demo."""

import math

import numpy as np
import pytest

from helpers import random_instance, random_psd

from qot.interpolate import (
    InterpolationParams,
    anisotropic_diffuse,
    displacement_interpolate,
    grid_shape,
    single_dirac_distance,
)
from qot.measure import Coupling, TensorMeasure
from qot.solver import SolverConfig, sinkhorn_solve


def solved_instance(seed=3, rows=5, cols=5):
    rng = np.random.default_rng(seed)
    mu, nu, cost = random_instance(rng, rows, cols, 2)
    cfg = SolverConfig(eps=0.05, tol=1e-11, max_iter=30000)
    coupling, _, report = sinkhorn_solve(mu, nu, cost, cfg)
    assert report.converged
    return mu, nu, coupling


class TestParams:
    def test_t_range(self):
        with pytest.raises(ValueError):
            InterpolationParams(t=1.5)
        with pytest.raises(ValueError):
            InterpolationParams(t=0.5, merge_radius=-1.0)


class TestEndpoints:
    def test_t0_recovers_mu(self):
        mu, nu, coupling = solved_instance()
        params = InterpolationParams(t=0.0, trace_threshold=0.0,
                                     merge_radius=1e-9)
        out = displacement_interpolate(mu, nu, coupling, params)
        assert out.n_atoms == mu.n_atoms
        order = np.lexsort(mu.points.T)
        order_out = np.lexsort(out.points.T)
        assert np.allclose(out.points[order_out], mu.points[order])
        err = np.linalg.norm(
            out.tensors[order_out] - mu.tensors[order], axis=(-2, -1)
        )
        assert err.max() < 1e-8

    def test_t1_recovers_nu(self):
        mu, nu, coupling = solved_instance(seed=5)
        params = InterpolationParams(t=1.0, trace_threshold=0.0,
                                     merge_radius=1e-9)
        out = displacement_interpolate(mu, nu, coupling, params)
        order = np.lexsort(nu.points.T)
        order_out = np.lexsort(out.points.T)
        assert np.allclose(out.points[order_out], nu.points[order])
        err = np.linalg.norm(
            out.tensors[order_out] - nu.tensors[order], axis=(-2, -1)
        )
        assert err.max() < 1e-8


class TestSinglePair:
    def test_constant_tensor_travels(self):
        rng = np.random.default_rng(7)
        p = random_psd(rng, 2)
        x0 = np.array([[0.0, 0.0]])
        y0 = np.array([[1.0, 1.0]])
        mu = TensorMeasure(x0, p[None])
        nu = TensorMeasure(y0, p[None])
        g = Coupling(p[None, None])
        for t in (0.0, 0.3, 0.7, 1.0):
            out = displacement_interpolate(
                mu, nu, g, InterpolationParams(t=t, trace_threshold=0.0)
            )
            assert out.n_atoms == 1
            assert np.allclose(out.points[0], [t, t])
            assert np.abs(out.tensors[0] - p).max() < 1e-12


class TestThresholdAndMerge:
    def test_neutral_settings_change_nothing(self):
        mu, nu, coupling = solved_instance(seed=11)
        base = displacement_interpolate(
            mu, nu, coupling, InterpolationParams(t=0.4, trace_threshold=0.0)
        )
        neutral = displacement_interpolate(
            mu, nu, coupling,
            InterpolationParams(t=0.4, trace_threshold=0.0, merge_radius=0.0),
        )
        assert base.n_atoms == mu.n_atoms * nu.n_atoms
        assert np.array_equal(base.points, neutral.points)
        assert np.array_equal(base.tensors, neutral.tensors)

    def test_threshold_drops_small_pairs(self):
        mu, nu, coupling = solved_instance(seed=13)
        out = displacement_interpolate(
            mu, nu, coupling, InterpolationParams(t=0.5, trace_threshold=1e-3)
        )
        assert out.n_atoms < mu.n_atoms * nu.n_atoms

    def test_zero_mass_coupling_empty_measure(self):
        mu = TensorMeasure(np.zeros((1, 2)), np.eye(2)[None])
        nu = TensorMeasure(np.ones((1, 2)), np.eye(2)[None])
        g = Coupling(np.zeros((1, 1, 2, 2)))
        out = displacement_interpolate(mu, nu, g, InterpolationParams(t=0.5))
        assert out.n_atoms == 0

    def test_total_trace_between_endpoint_bounds(self):
        mu, nu, coupling = solved_instance(seed=17)
        params = [InterpolationParams(t=t, trace_threshold=0.0)
                  for t in np.linspace(0.0, 1.0, 7)]
        totals = [
            np.trace(
                displacement_interpolate(mu, nu, coupling, p).tensors,
                axis1=-2, axis2=-1,
            ).sum()
            for p in params
        ]
        lo = min(totals[0], totals[-1]) * 0.9
        hi = max(totals[0], totals[-1]) * 1.1
        assert all(lo <= s <= hi for s in totals)


class TestSingleDiracDistance:
    def test_identical_inputs(self):
        rng = np.random.default_rng(19)
        p = random_psd(rng, 2)
        assert single_dirac_distance(p, p) < 1e-12

    def test_commuting_case_sqrt_frobenius(self):
        p = np.diag([4.0, 1.0])
        q = np.diag([1.0, 4.0])
        assert abs(single_dirac_distance(p, q) - math.sqrt(2.0)) < 1e-10

    def test_scalar_case(self):
        assert abs(single_dirac_distance([[4.0]], [[1.0]]) - 1.0) < 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            p = random_psd(rng, 2)
            q = random_psd(rng, 2)
            d_pq = single_dirac_distance(p, q)
            d_qp = single_dirac_distance(q, p)
            assert abs(d_pq - d_qp) < 1e-12

    def test_negative_radicand_reported(self):
        from qot.interpolate import NumericalConsistencyError

        # indefinite inputs break the nonnegativity the formula relies on
        bad = np.diag([-2.0, -2.0])
        with pytest.raises(NumericalConsistencyError):
            single_dirac_distance(bad, np.diag([-2.0, -1.0]))

    def test_triangle_inequality_logged_not_asserted(self):
        rng = np.random.default_rng(29)
        violations = 0
        for _ in range(200):
            a, b, c = random_psd(rng, 2, n=3)
            if single_dirac_distance(a, c) > (
                single_dirac_distance(a, b) + single_dirac_distance(b, c) + 1e-12
            ):
                violations += 1
        print(f"triangle inequality violations: {violations}/200")


class TestGridShape:
    def test_recognizes_grid(self):
        xs = np.linspace(0, 1, 4)
        ys = np.linspace(0, 1, 3)
        gx, gy = np.meshgrid(xs, ys)
        pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        field = TensorMeasure(pts, np.broadcast_to(np.eye(2), (12, 2, 2)).copy())
        nx, ny, order = grid_shape(field)
        assert (nx, ny) == (4, 3)
        assert np.array_equal(
            field.points[order],
            np.stack([np.tile(xs, 3), np.repeat(ys, 4)], axis=-1),
        )

    def test_rejects_scatter(self):
        rng = np.random.default_rng(31)
        pts = rng.uniform(size=(7, 2))
        field = TensorMeasure(pts, np.broadcast_to(np.eye(2), (7, 2, 2)).copy())
        with pytest.raises(ValueError):
            grid_shape(field)


def grid_field(n, tensor):
    xs = np.linspace(0.0, 1.0, n)
    gx, gy = np.meshgrid(xs, xs)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    return TensorMeasure(pts, np.broadcast_to(tensor, (n * n, 2, 2)).copy())


def autocorr_halfwidth(f, axis):
    g = f - f.mean()
    spec = np.abs(np.fft.fft2(g)) ** 2
    ac = np.fft.ifft2(spec).real
    ac = ac / ac[0, 0]
    profile = ac[0, :] if axis == 0 else ac[:, 0]
    half = len(profile) // 2
    for k in range(1, half):
        if profile[k] < 0.5:
            prev, cur = profile[k - 1], profile[k]
            return (k - 1) + (prev - 0.5) / (prev - cur)
    return float(half)


class TestAnisotropicDiffuse:
    def test_zero_field_returns_noise(self):
        field = grid_field(16, np.zeros((2, 2)))
        out = anisotropic_diffuse(field, noise_seed=4, steps=25, dt=0.1)
        assert np.array_equal(out, np.random.default_rng(4).standard_normal((16, 16)))

    def test_deterministic_given_seed(self):
        field = grid_field(16, np.eye(2))
        a = anisotropic_diffuse(field, noise_seed=9, steps=10, dt=0.1)
        b = anisotropic_diffuse(field, noise_seed=9, steps=10, dt=0.1)
        assert np.array_equal(a, b)

    def test_isotropic_variance_decreases(self):
        field = grid_field(24, np.eye(2))
        variances = [
            anisotropic_diffuse(field, noise_seed=2, steps=s, dt=0.2).var()
            for s in (0, 10, 40)
        ]
        assert variances[0] > variances[1] > variances[2]

    def test_anisotropic_stretch_along_x(self):
        field = grid_field(48, np.diag([1.0, 0.01]))
        out = anisotropic_diffuse(field, noise_seed=7, steps=60, dt=0.2)
        wx = autocorr_halfwidth(out, axis=0)
        wy = autocorr_halfwidth(out, axis=1)
        assert wx > 2.0 * wy

    def test_isotropic_blobs(self):
        field = grid_field(64, np.eye(2))
        out = anisotropic_diffuse(field, noise_seed=5, steps=40, dt=0.2)
        wx = autocorr_halfwidth(out, axis=0)
        wy = autocorr_halfwidth(out, axis=1)
        assert abs(wx / wy - 1.0) < 0.1

    def test_cfl_bound_enforced(self):
        field = grid_field(8, np.eye(2))
        with pytest.raises(ValueError):
            anisotropic_diffuse(field, noise_seed=0, steps=1, dt=0.3)


class TestRawProducts:
    def test_sym_projection_is_noop_for_commuting(self):
        from qot.interpolate import raw_interpolation_products

        mu = TensorMeasure(np.zeros((1, 2)), np.diag([2.0, 1.0])[None])
        nu = TensorMeasure(np.ones((1, 2)), np.diag([4.0, 3.0])[None])
        g = Coupling(np.diag([1.0, 0.5])[None, None])
        raw = raw_interpolation_products(mu, nu, g, 0.5)
        assert np.allclose(raw[0, 0], raw[0, 0].T)
