"""Discretized collision operator: quadruple tables, mollified energy
delta, kernel values, and conservation diagnostics.

Discretization of the collision integral (normalization ledger):

    Q[F](k1) = 4*pi * L^{-2d} * sum_{k2,k3} delta_eta(De) * K *
               [ F3 F4 (1 -/+ F1)(1 -/+ F2) - F1 F2 (1 -/+ F3)(1 -/+ F4) ]

with k4 = k1 + k2 - k3 grid-exact and K the pair-potential kernel.
Gain-minus-loss ordering makes the fermionic entropy production
nonnegative term by term.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .lattice import Dispersion, MomentumGrid, PairPotential, grid_integral

DROP_THRESHOLD = 1e-14


class CollisionError(ValueError):
    pass


@dataclass
class MollifierSpec:
    """Normalized even bump standing in for the energy delta."""

    kind: str = "gaussian"  # gaussian | lorentzian | box
    eta: float = 1.0

    def __post_init__(self):
        if self.eta <= 0:
            raise CollisionError("mollifier width must be positive")
        if self.kind not in ("gaussian", "lorentzian", "box"):
            raise CollisionError(f"unknown mollifier kind {self.kind!r}")

    def __call__(self, E):
        E = np.asarray(E, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-(E**2) / (2.0 * self.eta**2)) / (self.eta * np.sqrt(2.0 * np.pi))
        if self.kind == "lorentzian":
            return self.eta / np.pi / (E**2 + self.eta**2)
        return np.where(np.abs(E) <= self.eta, 0.5 / self.eta, 0.0)

    def quadrature_mass(self, span: float, n: int = 20001) -> float:
        """Trapezoid integral of the bump over [-span, span]."""
        E = np.linspace(-span, span, n)
        return float(np.trapezoid(self(E), E))


def conserving_quadruple_energies(grid: MomentumGrid, dispersion: Dispersion) -> np.ndarray:
    """Delta-e over all momentum-conserving ordered quadruples."""
    M = grid.n_modes
    e = dispersion.energies
    add = grid.addition_table()
    sub = grid.subtraction_table()
    k1 = np.repeat(np.arange(M), M * M)
    k2 = np.tile(np.repeat(np.arange(M), M), M)
    k3 = np.tile(np.arange(M), M * M)
    k4 = sub[add[k1, k2], k3]
    return e[k1] + e[k2] - e[k3] - e[k4]


def default_eta(grid: MomentumGrid, dispersion: Dispersion) -> float:
    """Twice the median nearest-neighbor spacing of the distinct delta-e values."""
    de = conserving_quadruple_energies(grid, dispersion)
    uniq = np.unique(np.round(de, 12))
    gaps = np.diff(uniq)
    gaps = gaps[gaps > 1e-12]
    if gaps.size == 0:
        # fully degenerate spectrum (e.g. flat dispersion): any width works
        return 1.0
    return float(2.0 * np.median(gaps))


class QuadrupleTable:
    """Momentum-conserving quadruples grouped by k1, with mollified weights.

    Built with mollifier=None the table keeps every conserving quadruple at
    unit weight (used by the memory kernel and the beta audits, which apply
    their own energy windows).
    """

    def __init__(
        self,
        grid: MomentumGrid,
        dispersion: Dispersion,
        mollifier: MollifierSpec | None,
        mode: str = "plain",
        drop_threshold: float = DROP_THRESHOLD,
    ):
        if mode not in ("plain", "symmetrized"):
            raise CollisionError(f"kernel mode must be plain|symmetrized, got {mode!r}")
        self.grid = grid
        self.dispersion = dispersion
        self.mollifier = mollifier
        self.mode = mode
        M = grid.n_modes
        e = dispersion.energies
        add = grid.addition_table()
        sub = grid.subtraction_table()
        k1 = np.repeat(np.arange(M), M * M)
        k2 = np.tile(np.repeat(np.arange(M), M), M)
        k3 = np.tile(np.arange(M), M * M)
        k4 = sub[add[k1, k2], k3]
        de = e[k1] + e[k2] - e[k3] - e[k4]
        if mollifier is None:
            keep = np.ones(de.shape, dtype=bool)
            w = np.ones(de.shape)
        else:
            w = mollifier(de)
            keep = w >= drop_threshold * w.max() if w.max() > 0 else np.zeros_like(w, bool)
        self.k1 = k1[keep].astype(np.int64)
        self.k2 = k2[keep].astype(np.int64)
        self.k3 = k3[keep].astype(np.int64)
        self.k4 = k4[keep].astype(np.int64)
        self.delta_e = de[keep]
        self.weight = w[keep]
        counts = np.bincount(self.k1, minlength=M)
        self.offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.n_entries = len(self.k1)

    def row_stats(self):
        """Per-k1 quadruple counts and weight mass (for eta tuning dumps)."""
        M = self.grid.n_modes
        counts = np.diff(self.offsets)
        mass = np.bincount(self.k1, weights=self.weight, minlength=M)
        return counts, mass


def build_quadruple_table(
    grid: MomentumGrid,
    dispersion: Dispersion,
    mollifier: MollifierSpec | None,
    mode: str = "plain",
    drop_threshold: float = DROP_THRESHOLD,
) -> QuadrupleTable:
    return QuadrupleTable(grid, dispersion, mollifier, mode, drop_threshold)


def kernel_value(potential: PairPotential, k1: int, k2: int, k3: int, k4: int, mode: str = "plain") -> float:
    """Collision kernel for one quadruple (assumed momentum-conserving)."""
    g = potential.grid
    vh = potential.vhat
    if mode == "plain":
        return float((vh[g.sub(k1, k4)] - vh[g.sub(k1, k3)]) ** 2)
    if mode == "symmetrized":
        s = (
            vh[g.sub(k1, k4)]
            - vh[g.sub(k2, k4)]
            - vh[g.sub(k1, k3)]
            + vh[g.sub(k2, k3)]
        )
        return float(0.25 * s**2)
    raise CollisionError(f"kernel mode must be plain|symmetrized, got {mode!r}")


def kernel_table(table: QuadrupleTable, potential: PairPotential) -> np.ndarray:
    """Kernel values aligned with the table entries."""
    g = table.grid
    sub = g.subtraction_table()
    vh = potential.vhat
    if table.mode == "plain":
        diff = vh[sub[table.k1, table.k4]] - vh[sub[table.k1, table.k3]]
        return diff**2
    s = (
        vh[sub[table.k1, table.k4]]
        - vh[sub[table.k2, table.k4]]
        - vh[sub[table.k1, table.k3]]
        + vh[sub[table.k2, table.k3]]
    )
    return 0.25 * s**2


def _blocking(values: np.ndarray, statistics: str) -> np.ndarray:
    if statistics == "fermion":
        return 1.0 - values
    if statistics == "boson":
        return 1.0 + values
    raise CollisionError(f"statistics must be fermion|boson, got {statistics!r}")


def validate_occupations(values: np.ndarray, statistics: str, tol: float = 1e-6) -> None:
    if statistics == "fermion":
        if values.min() < -tol or values.max() > 1.0 + tol:
            raise CollisionError(
                f"fermion occupations outside [0,1] beyond {tol:g}: "
                f"range [{values.min():.3e}, {values.max():.3e}]"
            )
    elif statistics == "boson":
        if values.min() < -tol:
            raise CollisionError(f"boson occupations must be nonnegative, min {values.min():.3e}")
    else:
        raise CollisionError(f"statistics must be fermion|boson, got {statistics!r}")


def collision_operator(
    table: QuadrupleTable,
    kernel: np.ndarray | PairPotential,
    F: np.ndarray,
    statistics: str = "fermion",
    bound_tol: float = 1e-6,
) -> np.ndarray:
    """Collision rate Q[F] on the grid (same shape as F)."""
    if isinstance(kernel, PairPotential):
        kernel = kernel_table(table, kernel)
    F = np.asarray(F, dtype=float)
    M = table.grid.n_modes
    if F.shape != (M,):
        raise CollisionError(f"occupation table must have length {M}")
    validate_occupations(F, statistics, tol=bound_tol)
    fb = _blocking(F, statistics)
    wk = table.weight * kernel
    bracket = _kernels.collision_bracket(table.k1, table.k2, table.k3, table.k4, wk, F, fb, M)
    return 4.0 * np.pi / M**2 * bracket


class InvariantRates(NamedTuple):
    mass_rate: float
    energy_rate: float
    momentum_rate: np.ndarray
    entropy_production: float
    log_clamped: bool


def collision_invariants(
    table: QuadrupleTable,
    kernel: np.ndarray | PairPotential,
    F: np.ndarray,
    statistics: str = "fermion",
) -> InvariantRates:
    """Mass/energy/momentum rates and the entropy production of Q[F]."""
    grid = table.grid
    Q = collision_operator(table, kernel, F, statistics)
    mass = float(grid_integral(grid, Q))
    energy = float(grid_integral(grid, table.dispersion.energies * Q))
    mom = np.zeros(grid.d)
    for j in range(grid.d):
        phase = np.exp(1j * grid.momenta[:, j])
        z = grid_integral(grid, F * phase)
        zdot = grid_integral(grid, Q * phase)
        mom[j] = float(np.imag(zdot / z)) if abs(z) > 1e-12 else 0.0
    clamped = bool(np.any(F <= 0.0) or np.any(F >= 1.0))
    Fc = np.clip(F, 1e-300, None)
    Fbc = np.clip(1.0 - F, 1e-300, None)
    entropy = float(-grid_integral(grid, Q * (np.log(Fc) - np.log(Fbc))))
    return InvariantRates(mass, energy, mom, entropy, clamped)
