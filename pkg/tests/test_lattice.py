import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qboltz.lattice import (
    DispersionSpec,
    LatticeError,
    MomentumGrid,
    PairPotential,
    PotentialSpec,
    build_grid,
    grid_integral,
    mom_combine,
    vertex_coefficient,
)


def nn_chain(L=4, vrange=1):
    return build_grid(
        1, L, DispersionSpec("nearest-neighbor"), PotentialSpec("neighbor", vrange, 1.0)
    )


class TestGrid:
    def test_modes_d1_L4(self):
        grid, _, _ = nn_chain()
        assert grid.n_modes == 4
        np.testing.assert_allclose(grid.momenta[:, 0], [0, np.pi / 2, np.pi, 3 * np.pi / 2])

    def test_mode_count_and_range(self):
        grid = MomentumGrid(2, 3)
        assert grid.n_modes == 9
        assert np.all(grid.momenta >= 0) and np.all(grid.momenta < 2 * np.pi)

    def test_combine_identity(self):
        grid = MomentumGrid(1, 4)
        for k in range(4):
            assert mom_combine(grid, [1, 1], [k, 0]) == k

    def test_combine_wraparound(self):
        grid = MomentumGrid(1, 4)
        # pi/2 + 3pi/2 = 2pi = 0
        assert mom_combine(grid, [1, 1], [1, 3]) == 0

    def test_combine_cancellation(self):
        grid = MomentumGrid(2, 3)
        for k1 in range(9):
            for k2 in range(9):
                assert mom_combine(grid, [1, 1, -1], [k1, k2, k1]) == k2

    def test_rejects_bad_sizes(self):
        with pytest.raises(LatticeError):
            MomentumGrid(0, 4)
        with pytest.raises(LatticeError):
            MomentumGrid(1, 1)
        with pytest.raises(LatticeError):
            MomentumGrid(3, 20, mode_cap=4096)

    def test_tables_match_scalar_ops(self):
        grid = MomentumGrid(2, 4)
        add, sub = grid.addition_table(), grid.subtraction_table()
        rng = np.random.default_rng(0)
        for _ in range(50):
            i, j = rng.integers(0, grid.n_modes, 2)
            assert add[i, j] == grid.add(i, j)
            assert sub[i, j] == grid.sub(i, j)


class TestDispersion:
    def test_nearest_neighbor_zero_at_origin(self):
        _, disp, _ = nn_chain()
        assert disp(0) == 0.0

    def test_nearest_neighbor_values(self):
        _, disp, _ = nn_chain()
        np.testing.assert_allclose(disp.energies, [0.0, 2.0, 4.0, 2.0])

    def test_even_in_p(self):
        for model, gamma in (("nearest-neighbor", 0.0), ("next-nearest-neighbor", 0.4)):
            grid = MomentumGrid(2, 5)
            from qboltz.lattice import Dispersion

            disp = Dispersion(grid, DispersionSpec(model, gamma))
            for i in range(grid.n_modes):
                assert disp(i) == pytest.approx(disp(grid.negate(i)), abs=1e-14)

    def test_table_length_checked(self):
        grid = MomentumGrid(1, 4)
        from qboltz.lattice import Dispersion

        with pytest.raises(LatticeError):
            Dispersion(grid, DispersionSpec("table", table=np.zeros(3)))


class TestPotential:
    def test_vhat_nearest_neighbor_chain(self):
        # v(x) = 1 at x = +-1: vhat(k) = 2 cos k, so vhat(pi) = -2
        _, _, pot = nn_chain()
        np.testing.assert_allclose(pot.vhat, [2.0, 0.0, -2.0, 0.0], atol=1e-12)

    def test_vhat_real_and_even_random_symmetric(self):
        rng = np.random.default_rng(3)
        grid = MomentumGrid(2, 4)
        v = rng.standard_normal(grid.n_modes)
        for i in range(grid.n_modes):
            j = grid.negate(i)
            v[j] = v[i]
        pot = PairPotential(grid, PotentialSpec("table", table=v))
        assert pot.vhat.dtype == np.float64
        for i in range(grid.n_modes):
            assert pot.vhat[i] == pytest.approx(pot.vhat[grid.negate(i)], abs=1e-10)

    def test_rejects_asymmetric(self):
        grid = MomentumGrid(1, 4)
        v = np.array([0.0, 1.0, 0.0, 0.5])  # v(1) != v(-1)
        with pytest.raises(LatticeError):
            PairPotential(grid, PotentialSpec("table", table=v))

    def test_axis_kind_on_l3_torus(self):
        grid = MomentumGrid(2, 3)
        pot = PairPotential(grid, PotentialSpec("axis", 1, 1.0))
        # v = 1 exactly on the 4 axis sites
        assert pot.v.sum() == pytest.approx(4.0)
        assert pot.v[0] == 0.0


class TestVertex:
    def test_zero_potential(self):
        grid, _, pot = build_grid(1, 4, potential=PotentialSpec("zero"))
        for quad in [(0, 1, 2, 3), (0, 0, 0, 0), (1, 3, 0, 0)]:
            assert vertex_coefficient(grid, pot, *quad) == 0.0

    def test_swap_antisymmetry(self):
        grid, _, pot = nn_chain()
        rng = np.random.default_rng(1)
        for _ in range(30):
            k1, k2, k3 = rng.integers(0, 4, 3)
            k4 = mom_combine(grid, [1, 1, -1], [k1, k2, k3])
            w = vertex_coefficient(grid, pot, k1, k2, k3, k4)
            assert vertex_coefficient(grid, pot, k2, k1, k3, k4) == pytest.approx(-w, abs=1e-14)
            assert vertex_coefficient(grid, pot, k1, k2, k4, k3) == pytest.approx(-w, abs=1e-14)

    def test_specific_quadruple_vanishes(self):
        # (0, pi, pi/2, pi/2): (vhat(-pi/2) - vhat(pi/2) - vhat(-pi/2) + vhat(pi/2))/4 = 0
        grid, _, pot = nn_chain()
        assert vertex_coefficient(grid, pot, 0, 2, 1, 1) == pytest.approx(0.0, abs=1e-14)

    def test_momentum_conservation_support_exhaustive(self):
        grid, _, pot = build_grid(2, 4, potential=PotentialSpec("neighbor", 1, 0.7))
        M = grid.n_modes
        rng = np.random.default_rng(2)
        for _ in range(500):
            k = rng.integers(0, M, 4)
            w = vertex_coefficient(grid, pot, *k)
            if mom_combine(grid, [1, 1, -1, -1], k) != 0:
                assert w == 0.0

    def test_hermiticity_exhaustive_small(self):
        grid, _, pot = nn_chain()
        for k1 in range(4):
            for k2 in range(4):
                for k3 in range(4):
                    for k4 in range(4):
                        a = vertex_coefficient(grid, pot, k1, k2, k3, k4)
                        b = vertex_coefficient(grid, pot, k4, k3, k2, k1)
                        assert a == pytest.approx(b, abs=1e-14)


class TestGridIntegral:
    def test_constant(self):
        grid = MomentumGrid(2, 3)
        assert grid_integral(grid, np.ones(9)) == pytest.approx(1.0)

    def test_scaled_indicator_is_delta(self):
        # the L^d-scaled Kronecker integrates to 1 under the grid measure
        grid = MomentumGrid(1, 4)
        f = np.zeros(4)
        f[2] = grid.n_modes
        assert grid_integral(grid, f) == pytest.approx(1.0)

    def test_dispersion_mean(self):
        grid, disp, _ = nn_chain()
        assert grid_integral(grid, disp.energies) == pytest.approx(2.0)

    def test_callable_form(self):
        grid, disp, _ = nn_chain()
        assert grid_integral(grid, lambda i: disp(i)) == pytest.approx(2.0)


@settings(max_examples=30, deadline=None)
@given(
    L=st.integers(min_value=2, max_value=8),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_vhat_even_property(L, seed):
    rng = np.random.default_rng(seed)
    grid = MomentumGrid(1, L)
    v = rng.standard_normal(L)
    for i in range(L):
        v[grid.negate(i)] = v[i]
    pot = PairPotential(grid, PotentialSpec("table", table=v))
    for i in range(L):
        assert pot.vhat[i] == pytest.approx(pot.vhat[grid.negate(i)], abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(
    L=st.integers(min_value=2, max_value=6),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_vertex_symmetries_property(L, seed):
    rng = np.random.default_rng(seed)
    grid = MomentumGrid(1, L)
    v = rng.standard_normal(L)
    for i in range(L):
        v[grid.negate(i)] = v[i]
    pot = PairPotential(grid, PotentialSpec("table", table=v))
    k = rng.integers(0, L, 4)
    w = vertex_coefficient(grid, pot, *k)
    assert vertex_coefficient(grid, pot, k[1], k[0], k[2], k[3]) == pytest.approx(-w, abs=1e-12)
    assert vertex_coefficient(grid, pot, k[0], k[1], k[3], k[2]) == pytest.approx(-w, abs=1e-12)
    assert vertex_coefficient(grid, pot, k[3], k[2], k[1], k[0]) == pytest.approx(w, abs=1e-12)
    if mom_combine(grid, [1, 1, -1, -1], k) != 0:
        assert w == 0.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31))
def test_combine_against_momentum_sum(seed):
    rng = np.random.default_rng(seed)
    grid = MomentumGrid(2, 5)
    n = int(rng.integers(1, 5))
    signs = rng.choice([-1, 1], n)
    idx = rng.integers(0, grid.n_modes, n)
    out = mom_combine(grid, signs, idx)
    total = (signs[:, None] * grid.momenta[idx]).sum(axis=0) % (2 * np.pi)
    np.testing.assert_allclose(grid.momenta[out] % (2 * np.pi), total, atol=1e-9)
