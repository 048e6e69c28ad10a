import numpy as np
import pytest

from picsb.fields import Field, RngStream
from picsb.pde.darcy import DarcySpec, sample_darcy_permeability, solve_darcy


class TestPermeability:
    def test_two_valued(self):
        a = sample_darcy_permeability(RngStream(0), 32)
        assert set(np.unique(a.values)) == {3.0, 12.0}

    def test_median_split_near_half(self):
        fracs = [
            (sample_darcy_permeability(RngStream(0).fork(f"{i}"), 32).values == 12.0).mean()
            for i in range(20)
        ]
        assert all(abs(f - 0.5) <= 0.05 for f in fracs)

    def test_deterministic(self):
        assert sample_darcy_permeability(RngStream(5), 24) == sample_darcy_permeability(
            RngStream(5), 24
        )

    def test_custom_levels(self):
        a = sample_darcy_permeability(RngStream(1), 16, a_low=1.0, a_high=2.0)
        assert set(np.unique(a.values)) == {1.0, 2.0}

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            sample_darcy_permeability(RngStream(0), 4)


class TestSolve:
    def test_unit_coefficients_center_value(self):
        n = 65  # odd so the center is a grid node
        u = solve_darcy(Field(np.ones((n, n))), DarcySpec(n))
        assert abs(u.values[n // 2, n // 2] - 0.0737) < 1e-3

    def test_zero_forcing_gives_zero(self):
        u = solve_darcy(Field(np.ones((17, 17))), DarcySpec(17, forcing=0.0))
        assert np.allclose(u.values, 0.0, atol=1e-14)

    def test_doubling_a_halves_u(self):
        n = 33
        u1 = solve_darcy(Field(np.ones((n, n))), DarcySpec(n))
        u2 = solve_darcy(Field(2.0 * np.ones((n, n))), DarcySpec(n))
        assert np.abs(u2.values - u1.values / 2.0).max() < 1e-10

    def test_maximum_principle(self):
        a = sample_darcy_permeability(RngStream(7), 33)
        u = solve_darcy(a, DarcySpec(33))
        assert u.values.min() >= 0.0

    def test_boundary_zero(self):
        a = sample_darcy_permeability(RngStream(8), 17)
        u = solve_darcy(a, DarcySpec(17))
        assert np.all(u.values[0, :] == 0) and np.all(u.values[-1, :] == 0)
        assert np.all(u.values[:, 0] == 0) and np.all(u.values[:, -1] == 0)

    def test_nonpositive_a_rejected(self):
        a = np.ones((17, 17))
        a[3, 3] = 0.0
        with pytest.raises(ValueError, match="positive"):
            solve_darcy(Field(a), DarcySpec(17))

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValueError):
            solve_darcy(Field(np.ones((8, 8))), DarcySpec(17))


def test_spec_validation():
    with pytest.raises(ValueError):
        DarcySpec(4)
