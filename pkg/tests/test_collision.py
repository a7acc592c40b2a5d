import numpy as np
import pytest

from qboltz import collision
from qboltz.collision import (
    CollisionError,
    MollifierSpec,
    build_quadruple_table,
    collision_invariants,
    collision_operator,
    default_eta,
    kernel_table,
    kernel_value,
)
from qboltz.lattice import (
    Dispersion,
    DispersionSpec,
    MomentumGrid,
    PairPotential,
    PotentialSpec,
    build_grid,
)


def chain(L=8, gamma=0.4, vrange=1, strength=1.0):
    return build_grid(
        1, L, DispersionSpec("next-nearest-neighbor", gamma), PotentialSpec("neighbor", vrange, strength)
    )


def jitter_instance(d, L, amp=0.15, seed=5, mode_cap=100000):
    """NNN dispersion plus a seeded even jitter: dense, incommensurate
    delta-e spectrum (the quasi-continuum regime of the eta studies)."""
    grid = MomentumGrid(d, L, mode_cap=mode_cap)
    p = grid.momenta
    e = 2 * np.sum(1 - np.cos(p), axis=1) + 0.8 * np.sum(1 - np.cos(2 * p), axis=1)
    rng = np.random.default_rng(seed)
    z = rng.uniform(-1, 1, grid.n_modes)
    zs = np.array([0.5 * (z[i] + z[grid.negate(i)]) for i in range(grid.n_modes)])
    disp = Dispersion(grid, DispersionSpec("table", table=e + amp * zs))
    pot = PairPotential(grid, PotentialSpec("neighbor", 1, 1.0))
    return grid, disp, pot


class TestMollifier:
    @pytest.mark.parametrize("kind", ["gaussian", "lorentzian", "box"])
    def test_even_nonnegative_normalized(self, kind):
        moll = MollifierSpec(kind, 0.7)
        E = np.linspace(-30, 30, 1001)
        vals = moll(E)
        assert np.all(vals >= 0)
        np.testing.assert_allclose(vals, moll(-E), atol=1e-14)
        span = 200.0 if kind == "lorentzian" else 30.0
        assert moll.quadrature_mass(span) == pytest.approx(1.0, rel=2e-2)

    def test_rejects_bad_width(self):
        with pytest.raises(CollisionError):
            MollifierSpec("gaussian", -0.1)
        with pytest.raises(CollisionError):
            MollifierSpec("triangle", 1.0)

    def test_default_eta_positive(self):
        grid, disp, _ = chain()
        eta = default_eta(grid, disp)
        assert eta > 0


class TestQuadrupleTable:
    def test_wide_box_keeps_all_pairs(self):
        grid, disp, _ = chain(L=4)
        table = build_quadruple_table(grid, disp, MollifierSpec("box", 1e6))
        # every (k2, k3) pair per k1 survives under a box covering all energies
        assert table.n_entries == 4**3
        counts, _ = table.row_stats()
        assert np.all(counts == 16)

    def test_1d_nearest_neighbor_degeneracy_odd_l(self):
        # pure NN dispersion in 1d, odd L: tiny eta keeps only {k3,k4} = {k1,k2}
        grid, disp, _ = build_grid(1, 5, DispersionSpec("nearest-neighbor"))
        table = build_quadruple_table(grid, disp, MollifierSpec("gaussian", 1e-3))
        for i in range(table.n_entries):
            k1, k2 = int(table.k1[i]), int(table.k2[i])
            k3, k4 = int(table.k3[i]), int(table.k4[i])
            assert {k3, k4} == {k1, k2}

    def test_1d_nearest_neighbor_degeneracy_even_l(self):
        # even L adds one genuine shell: pairs with total momentum pi all
        # share energy 4 (cos(s/2) = 0 branch), e.g. (0, pi) <-> (pi/2, pi/2)
        grid, disp, _ = build_grid(1, 4, DispersionSpec("nearest-neighbor"))
        table = build_quadruple_table(grid, disp, MollifierSpec("gaussian", 1e-3))
        half = 4 // 2
        for i in range(table.n_entries):
            k1, k2 = int(table.k1[i]), int(table.k2[i])
            k3, k4 = int(table.k3[i]), int(table.k4[i])
            trivial = {k3, k4} == {k1, k2}
            pi_shell = (k1 + k2) % 4 == half
            assert trivial or pi_shell

    def test_momentum_conservation_exact(self):
        grid, disp, _ = chain(L=6)
        table = build_quadruple_table(grid, disp, MollifierSpec("gaussian", 0.5))
        add = grid.addition_table()
        assert np.all(add[table.k1, table.k2] == add[table.k3, table.k4])

    def test_swap_closure_with_equal_weight(self):
        grid, disp, _ = chain(L=6)
        table = build_quadruple_table(grid, disp, MollifierSpec("gaussian", 0.5))
        stored = {
            (int(a), int(b), int(c), int(d)): w
            for a, b, c, d, w in zip(table.k1, table.k2, table.k3, table.k4, table.weight)
        }
        for (k1, k2, k3, k4), w in stored.items():
            assert (k3, k4, k1, k2) in stored
            assert stored[(k3, k4, k1, k2)] == pytest.approx(w, rel=1e-14)

    def test_unmollified_table_keeps_everything(self):
        grid, disp, _ = chain(L=5)
        table = build_quadruple_table(grid, disp, None)
        assert table.n_entries == 5**3
        assert np.all(table.weight == 1.0)


class TestKernel:
    def test_forward_substitution(self):
        grid, disp, pot = chain(L=4)
        # k3 = k1 (hence k4 = k2): plain kernel = |vhat(k1-k2) - vhat(0)|^2
        for k1 in range(4):
            for k2 in range(4):
                expect = (pot.vhat[grid.sub(k1, k2)] - pot.vhat[0]) ** 2
                assert kernel_value(pot, k1, k2, k1, k2) == pytest.approx(expect)

    def test_flat_potential_scatters_nothing(self):
        grid, disp, pot = build_grid(1, 6, potential=PotentialSpec("onsite", 1, 2.0))
        # vhat is constant: kernel vanishes for every quadruple
        table = build_quadruple_table(grid, disp, None)
        kv = kernel_table(table, pot)
        assert np.max(np.abs(kv)) < 1e-14

    def test_plain_equals_symmetrized_on_shell(self):
        grid, disp, pot = chain(L=4)
        table = build_quadruple_table(grid, disp, None)
        plain = kernel_table(table, pot)
        table_s = build_quadruple_table(grid, disp, None, mode="symmetrized")
        sym = kernel_table(table_s, pot)
        np.testing.assert_allclose(plain, sym, atol=1e-12)

    def test_plain_equals_symmetrized_2d(self):
        grid, disp, pot = build_grid(2, 3, potential=PotentialSpec("axis", 1, 1.0))
        table = build_quadruple_table(grid, disp, None)
        np.testing.assert_allclose(
            kernel_table(table, pot),
            0.25
            * (
                pot.vhat[grid.subtraction_table()[table.k1, table.k4]]
                - pot.vhat[grid.subtraction_table()[table.k2, table.k4]]
                - pot.vhat[grid.subtraction_table()[table.k1, table.k3]]
                + pot.vhat[grid.subtraction_table()[table.k2, table.k3]]
            )
            ** 2,
            atol=1e-12,
        )


class TestCollisionOperator:
    def setup_method(self):
        self.grid, self.disp, self.pot = chain(L=8)
        self.table = build_quadruple_table(self.grid, self.disp, MollifierSpec("gaussian", 0.6))
        self.kv = kernel_table(self.table, self.pot)

    def test_constant_occupation_is_fixed(self):
        for c in (0.0, 0.3, 1.0):
            Q = collision_operator(self.table, self.kv, np.full(8, c))
            np.testing.assert_allclose(Q, 0.0, atol=1e-15)

    def test_mass_sum_vanishes(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            F = rng.uniform(0, 1, 8)
            Q = collision_operator(self.table, self.kv, F)
            assert abs(Q.sum()) < 1e-12 * np.abs(Q).sum() + 1e-300

    def test_rejects_out_of_range(self):
        with pytest.raises(CollisionError):
            collision_operator(self.table, self.kv, np.full(8, 1.5))
        with pytest.raises(CollisionError):
            collision_operator(self.table, self.kv, np.full(8, -0.5), statistics="boson")

    def test_boson_statistics_changes_blocking(self):
        F = np.random.default_rng(1).uniform(0.1, 0.9, 8)
        qf = collision_operator(self.table, self.kv, F, "fermion")
        qb = collision_operator(self.table, self.kv, F, "boson")
        assert np.max(np.abs(qf - qb)) > 1e-8

    def test_real_output(self):
        F = np.random.default_rng(2).uniform(0, 1, 8)
        Q = collision_operator(self.table, self.kv, F)
        assert Q.dtype == np.float64

    def test_potential_accepted_directly(self):
        F = np.random.default_rng(3).uniform(0.2, 0.8, 8)
        a = collision_operator(self.table, self.kv, F)
        b = collision_operator(self.table, self.pot, F)
        np.testing.assert_allclose(a, b, atol=1e-15)


class TestInvariants:
    def test_mass_rate_tiny(self):
        grid, disp, pot = chain(L=8)
        table = build_quadruple_table(grid, disp, MollifierSpec("gaussian", 0.5))
        kv = kernel_table(table, pot)
        rng = np.random.default_rng(4)
        for _ in range(3):
            F = rng.uniform(0, 1, 8)
            inv = collision_invariants(table, kv, F)
            Q = collision_operator(table, kv, F)
            assert abs(inv.mass_rate) < 1e-12 * np.abs(Q).sum() + 1e-300

    def test_energy_rate_eta_squared(self):
        # three halvings on a quasi-continuum instance: factors in [3, 5]
        grid, disp, pot = jitter_instance(1, 48)
        e = disp.energies
        p = grid.momenta[:, 0]
        F = np.clip(1 / (1 + np.exp(0.8 * (e - np.median(e)))) + 0.1 * np.sin(p), 0.02, 0.98)
        rates = []
        for k in range(4):
            moll = MollifierSpec("gaussian", 0.8 / 2**k)
            table = build_quadruple_table(grid, disp, moll)
            kv = kernel_table(table, pot)
            rates.append(abs(collision_invariants(table, kv, F).energy_rate))
        for i in range(3):
            ratio = rates[i] / rates[i + 1]
            assert 3.0 <= ratio <= 5.0, f"halving {i}: ratio {ratio}"

    def test_fd_entropy_production_nonnegative(self):
        grid, disp, pot = chain(L=8)
        table = build_quadruple_table(grid, disp, MollifierSpec("gaussian", 0.5))
        kv = kernel_table(table, pot)
        e = disp.energies
        F = 1.0 / (1.0 + np.exp(0.9 * (e - 2.0)))
        inv = collision_invariants(table, kv, F)
        assert inv.entropy_production >= -1e-10

    def test_entropy_production_nonnegative_generic(self):
        # forward collision bracket: entropy production >= 0 summand by summand
        grid, disp, pot = chain(L=8)
        table = build_quadruple_table(grid, disp, MollifierSpec("gaussian", 0.7))
        kv = kernel_table(table, pot)
        rng = np.random.default_rng(5)
        for _ in range(5):
            F = rng.uniform(0.01, 0.99, 8)
            inv = collision_invariants(table, kv, F)
            assert inv.entropy_production >= -1e-12

    def test_boundary_occupation_flags_clamp(self):
        grid, disp, pot = chain(L=8)
        table = build_quadruple_table(grid, disp, MollifierSpec("gaussian", 0.5))
        kv = kernel_table(table, pot)
        F = np.zeros(8)
        F[[1, 2]] = 1.0
        inv = collision_invariants(table, kv, F)
        assert inv.log_clamped
        assert np.isfinite(inv.entropy_production)

    def test_fd_fixed_point_eta_halving(self):
        # sup|Q[F_FD]| drops by ~4 per halving in the quasi-continuum window
        grid, disp, pot = jitter_instance(2, 8)
        e = disp.energies
        F = 1.0 / (1.0 + np.exp(0.7 * (e - np.median(e))))
        sups = []
        for eta in (0.8, 0.4):
            table = build_quadruple_table(grid, disp, MollifierSpec("gaussian", eta))
            kv = kernel_table(table, pot)
            sups.append(np.max(np.abs(collision_operator(table, kv, F))))
        assert 3.0 <= sups[0] / sups[1] <= 5.0


class TestRowStats:
    def test_counts_sum_to_entries(self):
        grid, disp, pot = chain(L=6)
        table = build_quadruple_table(grid, disp, MollifierSpec("gaussian", 0.4))
        counts, mass = table.row_stats()
        assert counts.sum() == table.n_entries
        assert np.all(mass >= 0)


from hypothesis import given, settings
from hypothesis import strategies as st


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31))
def test_mass_conservation_property(seed):
    rng = np.random.default_rng(seed)
    grid, disp, pot = chain(L=6)
    table = build_quadruple_table(grid, disp, MollifierSpec("gaussian", float(rng.uniform(0.2, 1.5))))
    kv = kernel_table(table, pot)
    F = rng.uniform(0.0, 1.0, 6)
    Q = collision_operator(table, kv, F)
    assert abs(Q.sum()) < 1e-12 * np.abs(Q).sum() + 1e-300


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31))
def test_entropy_production_property(seed):
    rng = np.random.default_rng(seed)
    grid, disp, pot = chain(L=6)
    table = build_quadruple_table(grid, disp, MollifierSpec("gaussian", 0.6))
    kv = kernel_table(table, pot)
    F = rng.uniform(0.01, 0.99, 6)
    inv = collision_invariants(table, kv, F)
    assert inv.entropy_production >= -1e-12
