"""Discrete momentum torus, dispersion and pair-potential tables.

Everything downstream (exact simulator, collision kernel, hierarchy
machinery) works with Kronecker-normalized mode operators; see the
normalization ledger in the README.  Momentum arithmetic is exact
integer arithmetic on grid coordinates, never floating point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_MODE_CAP = 4096


class LatticeError(ValueError):
    pass


class MomentumGrid:
    """The discrete torus (2*pi/L)Z^d / 2*pi Z^d with exact index arithmetic.

    Modes are stored in row-major order over integer coordinates
    (c_1, ..., c_d), c_i in {0, ..., L-1}; mode i has momentum
    (2*pi/L) * coords[i].
    """

    def __init__(self, d: int, L: int, mode_cap: int = DEFAULT_MODE_CAP):
        if d < 1:
            raise LatticeError(f"dimension must be >= 1, got {d}")
        if L < 2:
            raise LatticeError(f"side length must be >= 2, got {L}")
        if L**d > mode_cap:
            raise LatticeError(
                f"L^d = {L**d} exceeds the mode cap {mode_cap}; "
                "raise mode_cap explicitly if this size is intended"
            )
        self.d = d
        self.L = L
        self.n_modes = L**d
        grids = np.meshgrid(*[np.arange(L)] * d, indexing="ij")
        self.coords = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
        # row-major strides: index = sum_i c_i * L^(d-1-i)
        self._strides = L ** np.arange(d - 1, -1, -1, dtype=np.int64)
        self.momenta = 2.0 * np.pi / L * self.coords

    def index_of(self, coords) -> int:
        c = np.asarray(coords, dtype=np.int64) % self.L
        return int(c @ self._strides)

    def negate(self, idx: int) -> int:
        return self.index_of(-self.coords[idx])

    def add(self, i: int, j: int) -> int:
        return self.index_of(self.coords[i] + self.coords[j])

    def sub(self, i: int, j: int) -> int:
        return self.index_of(self.coords[i] - self.coords[j])

    def combine(self, signs, indices) -> int:
        """Grid index of sum_i signs[i] * k_i, componentwise mod 2*pi."""
        signs = np.asarray(signs, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        if signs.shape != indices.shape:
            raise LatticeError("signs and momenta lists must have equal length")
        if np.any(indices < 0) or np.any(indices >= self.n_modes):
            raise LatticeError("mode index out of range")
        total = (signs[:, None] * self.coords[indices]).sum(axis=0)
        return self.index_of(total)

    def addition_table(self) -> np.ndarray:
        """(M, M) table of add(i, j); built once, cached by callers."""
        c = self.coords
        sums = (c[:, None, :] + c[None, :, :]) % self.L
        return (sums @ self._strides).astype(np.int64)

    def subtraction_table(self) -> np.ndarray:
        c = self.coords
        diffs = (c[:, None, :] - c[None, :, :]) % self.L
        return (diffs @ self._strides).astype(np.int64)

    def __repr__(self):
        return f"MomentumGrid(d={self.d}, L={self.L}, modes={self.n_modes})"


@dataclass
class DispersionSpec:
    """Built-in lattice Laplacian family; gamma != 0 (or d >= 2) is needed
    for kinetics beyond exchange-degenerate collisions."""

    model: str = "nearest-neighbor"  # nearest-neighbor | next-nearest-neighbor | table
    gamma: float = 0.4
    table: np.ndarray | None = None


class Dispersion:
    """Single-particle energy table e(p) on the grid."""

    def __init__(self, grid: MomentumGrid, spec: DispersionSpec):
        self.grid = grid
        self.spec = spec
        p = grid.momenta
        if spec.model == "nearest-neighbor":
            e = 2.0 * np.sum(1.0 - np.cos(p), axis=1)
        elif spec.model == "next-nearest-neighbor":
            e = 2.0 * np.sum(1.0 - np.cos(p), axis=1) + 2.0 * spec.gamma * np.sum(
                1.0 - np.cos(2.0 * p), axis=1
            )
        elif spec.model == "table":
            e = np.asarray(spec.table, dtype=float)
            if e.shape != (grid.n_modes,):
                raise LatticeError(
                    f"dispersion table must have length {grid.n_modes}, got {e.shape}"
                )
        else:
            raise LatticeError(f"unknown dispersion model {spec.model!r}")
        if not np.all(np.isfinite(e)):
            raise LatticeError("dispersion table contains non-finite entries")
        self.energies = e

    def __call__(self, idx):
        return self.energies[idx]


@dataclass
class PotentialSpec:
    kind: str = "neighbor"  # zero | onsite | neighbor | axis | table
    range: int = 1
    strength: float = 1.0
    table: np.ndarray | None = None  # real-space v(x) on the L^d torus


def _torus_distance_components(coords: np.ndarray, L: int) -> np.ndarray:
    return np.minimum(coords, L - coords)


class PairPotential:
    """Real symmetric pair potential v(x) on the torus and its Fourier table.

    vhat(k) = sum_x v(x) e^{-i k.x}; real and even because v(x) = v(-x).
    """

    def __init__(self, grid: MomentumGrid, spec: PotentialSpec):
        self.grid = grid
        self.spec = spec
        L, d, M = grid.L, grid.d, grid.n_modes
        if spec.kind == "table":
            v = np.asarray(spec.table, dtype=float).reshape(M)
        else:
            v = np.zeros(M)
            dist = _torus_distance_components(grid.coords, L)
            chebyshev = dist.max(axis=1)
            if spec.kind == "zero":
                pass
            elif spec.kind == "onsite":
                v[0] = spec.strength
            elif spec.kind == "neighbor":
                mask = (chebyshev >= 1) & (chebyshev <= spec.range)
                v[mask] = spec.strength
            elif spec.kind == "axis":
                # sites at distance 1..range along a single lattice axis
                on_axis = (dist > 0).sum(axis=1) == 1
                mask = on_axis & (chebyshev >= 1) & (chebyshev <= spec.range)
                v[mask] = spec.strength
            else:
                raise LatticeError(f"unknown potential kind {spec.kind!r}")
        # symmetry v(x) = v(-x) is required, not assumed
        for i in range(M):
            j = grid.negate(i)
            if abs(v[i] - v[j]) > 1e-12:
                raise LatticeError("pair potential must satisfy v(x) = v(-x)")
        self.v = v
        phases = np.exp(-1j * grid.momenta @ grid.coords.T)  # (M modes, M sites)
        vhat = phases @ v
        if np.max(np.abs(vhat.imag)) > 1e-10 * max(1.0, np.max(np.abs(vhat.real))):
            raise LatticeError("Fourier table of a symmetric v must be real")
        self.vhat = vhat.real.copy()

    def vhat_at(self, idx):
        return self.vhat[idx]


def build_grid(
    d: int,
    L: int,
    dispersion: DispersionSpec | None = None,
    potential: PotentialSpec | None = None,
    mode_cap: int = DEFAULT_MODE_CAP,
):
    """Build the grid plus dispersion/potential tables in one shot."""
    grid = MomentumGrid(d, L, mode_cap=mode_cap)
    disp = Dispersion(grid, dispersion or DispersionSpec())
    pot = PairPotential(grid, potential or PotentialSpec())
    return grid, disp, pot


def mom_combine(grid: MomentumGrid, signs, momenta) -> int:
    """Grid index of sum_i s_i k_i (exact integer arithmetic mod L)."""
    return grid.combine(signs, momenta)


def vertex_coefficient(grid: MomentumGrid, potential: PairPotential, k1, k2, k3, k4) -> float:
    """Antisymmetrized two-body vertex.

    Returns 0 unless k1+k2 = k3+k4 on the torus, else
    (vhat(k1-k4) - vhat(k2-k4) - vhat(k1-k3) + vhat(k2-k3)) / 4.
    The L^d carried by scaled-delta conventions is NOT included;
    callers apply the normalization ledger.
    """
    if grid.combine([1, 1, -1, -1], [k1, k2, k3, k4]) != 0:
        return 0.0
    vh = potential.vhat
    return 0.25 * (
        vh[grid.sub(k1, k4)]
        - vh[grid.sub(k2, k4)]
        - vh[grid.sub(k1, k3)]
        + vh[grid.sub(k2, k3)]
    )


def grid_integral(grid: MomentumGrid, f):
    """L^{-d} sum_p f(p): the discrete stand-in for the momentum integral.

    `f` may be an array over modes or a callable on mode indices.
    """
    if callable(f):
        vals = np.array([f(i) for i in range(grid.n_modes)])
    else:
        vals = np.asarray(f)
        if vals.shape[0] != grid.n_modes:
            raise LatticeError("value table length does not match mode count")
    return vals.sum(axis=0) / grid.n_modes
