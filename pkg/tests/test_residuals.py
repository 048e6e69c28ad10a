import numpy as np
import pytest
import torch

from picsb.fields import Field, RngStream
from picsb.observation import observe, project, sample_mask
from picsb.pde.burgers import BurgersSpec, sample_burgers_ic, simulate_burgers
from picsb.pde.darcy import DarcySpec, sample_darcy_permeability, solve_darcy
from picsb.pde.kolmogorov import KolmogorovSpec, sample_vorticity_ic, simulate_kolmogorov
from picsb.residuals import (
    ResidualField,
    burgers_error_bound,
    burgers_residual_op,
    darcy_residual_op,
    estimate_residual_floor,
    kolmogorov_forcing,
    residual_burgers,
    residual_darcy,
    residual_kolmogorov,
    residual_norm,
    stream_function,
    velocity_from_vorticity,
)


class TestResidualNorm:
    def test_zero(self):
        r = ResidualField(np.zeros((3, 3)), np.ones((3, 3), dtype=bool))
        assert residual_norm(r) == 0.0

    def test_constant(self):
        valid = np.zeros((2, 4), dtype=bool)
        valid[:, :2] = True  # 4 valid nodes
        r = ResidualField(np.full((2, 4), 2.0), valid)
        assert residual_norm(r) == pytest.approx(2.0)

    def test_hand_rms(self):
        valid = np.array([True, True, False])
        r = ResidualField(np.array([3.0, 4.0, 99.0]), valid)
        assert residual_norm(r) == pytest.approx(np.sqrt(12.5))


class TestBurgersResidual:
    def test_constant_field_zero_residual(self):
        x = Field(np.full((8, 5), 1.3), ("space", "time"))
        r = residual_burgers(x, 0.01, 0.125, 0.25)
        assert np.all(r.values[r.valid_mask] == 0.0)

    def test_hand_stencil_value(self):
        # 3 space points periodic, 2 columns; node (1,1): time 1, advection 0,
        # diffusion -2*nu
        nu = 0.3
        x = Field(np.array([[0.0, 0.0], [0.0, 1.0], [0.0, 0.0]]), ("space", "time"))
        r = residual_burgers(x, nu, 1.0, 1.0)
        assert r.values[1, 1] == pytest.approx(1.0 + 2.0 * nu)
        assert not r.valid_mask[1, 0]

    def test_valid_region_excludes_first_column(self):
        r = residual_burgers(Field(np.zeros((4, 3))), 0.1, 1.0, 1.0)
        assert not r.valid_mask[:, 0].any()
        assert r.valid_mask[:, 1:].all()

    def test_solver_residual_within_truncation_budget(self):
        # Richardson: |u_dt - u_dt/2| estimates the dt-truncation scale
        nx, nt, nu = 64, 65, 0.05
        u0 = sample_burgers_ic(RngStream(0), nx)
        spec = BurgersSpec(nx, nt, nu)
        sol = simulate_burgers(u0, spec)
        sol2 = simulate_burgers(u0, BurgersSpec(nx, 2 * nt - 1, nu))
        trunc = np.sqrt(np.mean((sol.values - sol2.values[:, ::2]) ** 2)) / spec.dt
        rms = residual_norm(residual_burgers(sol, nu, spec.h, spec.dt))
        assert rms <= 10.0 * trunc

    def test_linear_part_consistency(self):
        # with the advection term removed the operator is linear in the state
        def linear_op(x, nu, h, dt):
            full, valid = burgers_residual_op(nu, h, dt)(x)
            adv = x[:, 1:] * (torch.roll(x, -1, 0)[:, 1:] - torch.roll(x, 1, 0)[:, 1:]) / (2 * h)
            out = full.clone()
            out[:, 1:] -= adv
            return out, valid

        rng = RngStream(1)
        x = torch.from_numpy(rng.fork("x").standard_normal((8, 6)))
        e = torch.from_numpy(rng.fork("e").standard_normal((8, 6)))
        base, valid = linear_op(x, 0.02, 0.125, 0.2)
        for eps in (1e-3, 1.0, 17.0):
            pert, _ = linear_op(x + eps * e, 0.02, 0.125, 0.2)
            unit, _ = linear_op(x + e, 0.02, 0.125, 0.2)
            lhs = (pert - base)[valid]
            rhs = eps * (unit - base)[valid]
            assert torch.allclose(lhs, rhs, atol=1e-9, rtol=1e-12)

    def test_grid_too_small_rejected(self):
        with pytest.raises(ValueError):
            residual_burgers(Field(np.zeros((2, 4))), 0.1, 1.0, 1.0)


class TestDarcyResidual:
    def test_solver_output_below_tolerance(self):
        a = sample_darcy_permeability(RngStream(2), 33)
        spec = DarcySpec(33)
        u = solve_darcy(a, spec)
        assert residual_norm(residual_darcy(u, a, 1.0, spec.h)) <= 1e-8

    def test_zero_field_gives_minus_forcing(self):
        n = 9
        a = Field(np.ones((n, n)))
        r = residual_darcy(Field(np.zeros((n, n))), a, 1.0, 1.0 / (n - 1))
        assert np.all(r.values[r.valid_mask] == -1.0)

    def test_manufactured_solution(self):
        # u = x(1-x)y(1-y), a = 1: the 5-point Laplacian is exact here
        n, h = 33, 1.0 / 32
        xx = np.arange(n) * h
        X, Y = np.meshgrid(xx, xx, indexing="ij")
        u = Field(X * (1 - X) * Y * (1 - Y))
        r = residual_darcy(u, Field(np.ones((n, n))), 1.0, h)
        analytic = 2 * Y * (1 - Y) + 2 * X * (1 - X) - 1.0
        assert np.abs(r.values[1:-1, 1:-1] - analytic[1:-1, 1:-1]).max() < 1e-11

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValueError):
            residual_darcy(Field(np.zeros((8, 8))), Field(np.ones((9, 9))), 1.0, 0.1)


class TestStreamFunctionAndVelocity:
    def test_poisson_eigenmode(self):
        n = 32
        x1 = 2 * np.pi * np.arange(n) / n
        w = Field(np.outer(np.sin(x1), np.ones(n)))
        psi = stream_function(w)
        assert np.abs(psi.values - np.outer(-np.sin(x1), np.ones(n))).max() < 1e-12

    def test_zero_field(self):
        w = Field(np.zeros((16, 16)) + 0.0)
        psi = stream_function(w)
        assert np.all(psi.values == 0.0)

    def test_constant_rejected(self):
        with pytest.raises(ValueError, match="zero-mean"):
            stream_function(Field(np.ones((16, 16))))

    def test_laplacian_inverse_roundtrip(self):
        w = sample_vorticity_ic(RngStream(3), 64)
        psi = stream_function(w)
        n = 64
        k1 = np.fft.fftfreq(n, 1 / n)[:, None]
        k2 = np.fft.rfftfreq(n, 1 / n)[None, :]
        lap = np.fft.irfft2(-(k1**2 + k2**2) * np.fft.rfft2(psi.values), s=(n, n))
        assert np.abs(lap - w.values).max() < 1e-10

    def test_velocity_eigenmode(self):
        n = 32
        x1 = 2 * np.pi * np.arange(n) / n
        v1, v2 = velocity_from_vorticity(Field(np.outer(np.sin(x1), np.ones(n))))
        assert np.abs(v1.values).max() < 1e-12
        assert np.abs(v2.values - np.outer(np.cos(x1), np.ones(n))).max() < 1e-12

    def test_zero_vorticity_zero_velocity(self):
        v1, v2 = velocity_from_vorticity(Field(np.zeros((16, 16))))
        assert np.all(v1.values == 0.0) and np.all(v2.values == 0.0)

    def test_divergence_free_random_field(self):
        w = sample_vorticity_ic(RngStream(4), 32)
        v1, v2 = velocity_from_vorticity(w)
        n = 32
        k1 = np.fft.fftfreq(n, 1 / n)[:, None]
        k2 = np.fft.rfftfreq(n, 1 / n)[None, :]
        div = np.fft.irfft2(
            1j * k1 * np.fft.rfft2(v1.values) + 1j * k2 * np.fft.rfft2(v2.values),
            s=(n, n),
        )
        assert np.abs(div).max() < 1e-10


class TestKolmogorovResidual:
    def test_zero_vorticity_leaves_forcing(self):
        n = 16
        w = Field(np.zeros((2, n, n)), ("frame", "row", "col"))
        r = residual_kolmogorov(w, 1000.0, 0.1)
        assert np.abs(r.values[1] - (-kolmogorov_forcing(n))).max() < 1e-12

    def test_steady_state_zero_residual(self):
        # two identical frames of a field solving the steady balance with the
        # forcing replaced by exactly the terms it must cancel
        n = 32
        w_field = sample_vorticity_ic(RngStream(5), n)
        w2 = Field(np.stack([w_field.values, w_field.values]), ("frame", "row", "col"))
        r = residual_kolmogorov(w2, 1000.0, 0.5, forcing_on=False)
        # residual reduces to v.grad w - lap w / Re for the repeated frame
        v1, v2 = velocity_from_vorticity(w_field)
        k1 = np.fft.fftfreq(n, 1 / n)[:, None]
        k2 = np.fft.rfftfreq(n, 1 / n)[None, :]
        w_hat = np.fft.rfft2(w_field.values)
        wx1 = np.fft.irfft2(1j * k1 * w_hat, s=(n, n))
        wx2 = np.fft.irfft2(1j * k2 * w_hat, s=(n, n))
        lap = np.fft.irfft2(-(k1**2 + k2**2) * w_hat, s=(n, n))
        manual = v1.values * wx1 + v2.values * wx2 - lap / 1000.0
        assert np.abs(r.values[1] - manual).max() < 1e-10

    def test_solver_frames_within_truncation_budget(self):
        spec = KolmogorovSpec(32, 8)
        out = simulate_kolmogorov(sample_vorticity_ic(RngStream(6), 32), spec)
        w = out.values
        # three-frame second difference as the d2w/dgamma2 proxy
        d2 = (w[2:] - 2 * w[1:-1] + w[:-2]) / spec.dgamma**2
        trunc = spec.dgamma * np.abs(d2).max()
        rms = residual_norm(residual_kolmogorov(out, spec.re, spec.dgamma))
        assert rms <= 10.0 * trunc

    def test_single_frame_rejected(self):
        with pytest.raises(ValueError):
            residual_kolmogorov(Field(np.zeros((1, 8, 8))), 100.0, 0.1)

    def test_nonzero_mean_frame_rejected(self):
        w = np.zeros((2, 8, 8))
        w[1] = 1.0
        with pytest.raises(ValueError, match="zero-mean"):
            residual_kolmogorov(Field(w), 100.0, 0.1)


class TestResidualFloor:
    def _burgers_setup(self, seed=0, nx=16, nt=8):
        rng = RngStream(seed)
        spec = BurgersSpec(nx, nt, 0.05)
        u0 = sample_burgers_ic(rng.fork("ic"), nx)
        truth = simulate_burgers(u0, spec)
        op = burgers_residual_op(spec.nu, spec.h, spec.dt)
        return truth, op, rng

    def test_full_mask_returns_residual_of_y(self):
        truth, op, rng = self._burgers_setup()
        obs = observe(truth, Field(np.ones(truth.dims), truth.axis_tags))
        est = estimate_residual_floor(obs, op, Field(np.zeros(truth.dims)), iters=5)
        expected = residual_norm(residual_burgers(truth, 0.05, 1 / 16, 1 / 7))
        assert est.value == pytest.approx(expected, rel=1e-12)
        assert est.iterations == 0
        assert est.converged

    def test_nested_mask_monotonicity(self):
        truth, op, rng = self._burgers_setup(seed=1)
        big = sample_mask("R2", 0.4, (16,), 8, rng.fork("m")).T
        small = big.copy()
        on = np.argwhere(big == 1.0)
        for r, c in on[: len(on) // 2]:
            small[r, c] = 0.0
        obs_b = observe(truth, Field(big, truth.axis_tags))
        obs_a = observe(truth, Field(small, truth.axis_tags))
        init = Field(rng.fork("init").standard_normal(truth.dims), truth.axis_tags)
        est_b = estimate_residual_floor(obs_b, op, init, iters=150, step=1e-3)
        est_a = estimate_residual_floor(obs_a, op, est_b.best, iters=150, step=1e-3)
        assert est_a.value <= est_b.value + 1e-6

    def test_iterates_feasible(self):
        truth, op, rng = self._burgers_setup(seed=2)
        mask = Field(sample_mask("R2", 0.25, (16,), 8, rng.fork("m")).T, truth.axis_tags)
        obs = observe(truth, mask)
        est = estimate_residual_floor(obs, op, Field(np.zeros(truth.dims)), iters=20)
        m = mask.values == 1.0
        assert np.array_equal(est.best.values[m], obs.values.values[m])

    def test_empty_mask_darcy_solver_floor(self):
        a = sample_darcy_permeability(RngStream(7), 17)
        spec = DarcySpec(17)
        u = solve_darcy(a, spec)
        obs = observe(u, Field(np.zeros((17, 17))))
        op = darcy_residual_op(a, 1.0, spec.h)
        est = estimate_residual_floor(obs, op, u, iters=10, step=1e-6)
        assert est.value <= 1e-8

    def test_requires_positive_iters(self):
        truth, op, _ = self._burgers_setup()
        obs = observe(truth, Field(np.ones(truth.dims), truth.axis_tags))
        with pytest.raises(ValueError):
            estimate_residual_floor(obs, op, truth, iters=0)


class TestBurgersErrorBound:
    def test_hand_value(self):
        ref = Field(np.full((8, 4), 2.0), ("space", "time"))
        val = burgers_error_bound(ref, 1.0, 0.01, 0.125, 0.1, length=1.0)
        assert val == pytest.approx(1.0 / (10.0 + 0.01 * np.pi**2), abs=1e-5)
        assert val == pytest.approx(0.09902, abs=1e-5)

    def test_zero_delta(self):
        ref = Field(np.full((8, 4), 1.0), ("space", "time"))
        assert burgers_error_bound(ref, 0.0, 0.01, 0.125, 0.1) == 0.0

    def test_monotone_in_delta(self):
        ref = Field(np.zeros((8, 4)), ("space", "time"))
        vals = [burgers_error_bound(ref, d, 0.01, 0.125, 0.1) for d in np.linspace(0.1, 2, 5)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_decreasing_under_dt_halving(self):
        ref = Field(np.zeros((8, 4)), ("space", "time"))
        dts = [0.1 / 2**k for k in range(5)]
        vals = [burgers_error_bound(ref, 1.0, 0.01, 0.125, dt) for dt in dts]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_decreasing_in_viscosity_increase(self):
        ref = Field(np.zeros((8, 4)), ("space", "time"))
        vals = [burgers_error_bound(ref, 1.0, nu, 0.125, 0.1) for nu in (0.01, 0.1, 1.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_inapplicable_denominator(self):
        # steep negative gradient makes the denominator nonpositive
        x = np.zeros((4, 2))
        x[:, 1] = [0.0, -100.0, 0.0, 100.0]
        ref = Field(x, ("space", "time"))
        with pytest.raises(ValueError, match="inapplicable"):
            burgers_error_bound(ref, 1.0, 0.01, 0.25, 10.0)
