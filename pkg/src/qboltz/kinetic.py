"""Time integration of the homogeneous quantum Boltzmann equation.

dF/dT = Q[F] with Q from :mod:`qboltz.collision`; classic RK4 or an
embedded Cash-Karp 4(5) pair, with conservation and H-theorem monitors.
Fermion occupations are box-constrained diagnostics: violations are
logged and fatal beyond threshold, never clamped silently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .collision import CollisionError, QuadrupleTable, collision_operator, kernel_table
from .lattice import Dispersion, MomentumGrid, PairPotential, grid_integral


class SolverAbort(RuntimeError):
    """Numerical-guard abort (bound violation signalling dt too large)."""


@dataclass
class OccupationFunction:
    grid: MomentumGrid
    values: np.ndarray
    statistics: str = "fermion"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).copy()
        if self.values.shape != (self.grid.n_modes,):
            raise CollisionError("occupation table length must equal the mode count")
        if self.statistics not in ("fermion", "boson"):
            raise CollisionError(f"statistics must be fermion|boson, got {self.statistics!r}")

    def copy(self) -> "OccupationFunction":
        return OccupationFunction(self.grid, self.values.copy(), self.statistics)

    def mass(self) -> float:
        return float(grid_integral(self.grid, self.values))


def fermi_dirac_profile(grid: MomentumGrid, dispersion: Dispersion, beta: float, mu: float) -> OccupationFunction:
    """F(k) = 1 / (1 + exp(beta * (e(k) - mu))), computed overflow-safe."""
    x = beta * (dispersion.energies - mu)
    return OccupationFunction(grid, 0.5 * (1.0 - np.tanh(0.5 * x)), "fermion")


def entropy(F: OccupationFunction) -> float:
    """Fermionic entropy -integral(F ln F + (1-F) ln(1-F)), 0 ln 0 := 0."""
    if F.statistics != "fermion":
        raise CollisionError("entropy monitor is defined for fermion statistics")
    v = F.values
    s = -(xlogy(v, v) + xlogy(1.0 - v, 1.0 - v))
    return float(grid_integral(F.grid, s))


@dataclass
class SolverConfig:
    t_end: float = 1.0
    dt: float | None = None  # None: 0.01 / max(1, ||Q[F0]||_inf)
    method: str = "rk4"  # rk4 | rk45-adaptive
    monitor_every: int = 1
    tol: float = 1e-8
    bound_tol: float = 1e-6
    boson_guard: float = 1e6


@dataclass
class RunLog:
    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    entropy: list = field(default_factory=list)
    min_f: list = field(default_factory=list)
    max_f: list = field(default_factory=list)
    q_inf: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def append(self, T, F: OccupationFunction, Q: np.ndarray, dispersion: Dispersion):
        self.times.append(float(T))
        self.mass.append(F.mass())
        self.energy.append(float(grid_integral(F.grid, dispersion.energies * F.values)))
        self.entropy.append(entropy(F) if F.statistics == "fermion" else float("nan"))
        self.min_f.append(float(F.values.min()))
        self.max_f.append(float(F.values.max()))
        self.q_inf.append(float(np.max(np.abs(Q))))

    def rows(self):
        for i in range(len(self.times)):
            yield (
                self.times[i],
                self.mass[i],
                self.energy[i],
                self.entropy[i],
                self.min_f[i],
                self.max_f[i],
                self.q_inf[i],
            )


# Cash-Karp embedded 4(5) coefficients
_CK_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [3 / 10, -9 / 10, 6 / 5],
    [-11 / 54, 5 / 2, -70 / 27, 35 / 27],
    [1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096],
]
_CK_B5 = [37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771]
_CK_B4 = [2825 / 27648, 0.0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4]


def _check_bounds(values: np.ndarray, statistics: str, bound_tol: float, guard: float):
    if statistics == "fermion":
        if values.min() < -bound_tol or values.max() > 1.0 + bound_tol:
            raise SolverAbort(
                f"fermion box violated beyond {bound_tol:g} "
                f"(range [{values.min():.3e}, {values.max():.3e}]); reduce dt"
            )
        return None
    if values.max() > guard:
        return "blowup_guard"
    return None


def integrate(
    F0: OccupationFunction,
    table: QuadrupleTable,
    kernel: np.ndarray | PairPotential,
    config: SolverConfig,
) -> tuple[OccupationFunction, RunLog]:
    """March dF/dT = Q[F] from F0 to t_end; returns final state and log."""
    if isinstance(kernel, PairPotential):
        kernel = kernel_table(table, kernel)
    stat = F0.statistics

    def rhs(values: np.ndarray) -> np.ndarray:
        return collision_operator(table, kernel, values, stat, bound_tol=10.0 * config.bound_tol)

    f = F0.values.copy()
    q0 = rhs(f)
    dt = config.dt if config.dt is not None else 0.01 / max(1.0, float(np.max(np.abs(q0))))
    if dt <= 0:
        raise CollisionError("dt must be positive")
    log = RunLog()
    log.append(0.0, OccupationFunction(F0.grid, f, stat), q0, table.dispersion)

    T = 0.0
    step = 0
    while T < config.t_end - 1e-12 * config.t_end:
        h = min(dt, config.t_end - T)
        if config.method == "rk4":
            k1 = rhs(f)
            k2 = rhs(f + 0.5 * h * k1)
            k3 = rhs(f + 0.5 * h * k2)
            k4 = rhs(f + h * k3)
            f_new = f + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            accepted = True
        elif config.method == "rk45-adaptive":
            ks = [rhs(f)]
            for i in range(1, 6):
                fi = f + h * sum(a * k for a, k in zip(_CK_A[i], ks))
                ks.append(rhs(fi))
            f5 = f + h * sum(b * k for b, k in zip(_CK_B5, ks))
            f4 = f + h * sum(b * k for b, k in zip(_CK_B4, ks))
            err = float(np.max(np.abs(f5 - f4)))
            if err <= config.tol:
                f_new = f5
                accepted = True
            else:
                accepted = False
            scale = 0.9 * (config.tol / err) ** 0.2 if err > 0 else 5.0
            dt = h * min(5.0, max(0.2, scale))
        else:
            raise CollisionError(f"unknown method {config.method!r}")
        if not accepted:
            continue
        f = f_new
        T += h
        step += 1
        event = _check_bounds(f, stat, config.bound_tol, config.boson_guard)
        q_now = rhs(f)
        if step % config.monitor_every == 0 or T >= config.t_end - 1e-12 or event:
            log.append(T, OccupationFunction(F0.grid, f, stat), q_now, table.dispersion)
        if event:
            log.events.append((T, event))
            break
    return OccupationFunction(F0.grid, f, stat), log


def equilibrium_fit(
    grid: MomentumGrid,
    dispersion: Dispersion,
    mass: float,
    energy: float,
    beta_max: float = 200.0,
):
    """Fermi-Dirac parameters (beta, mu) matching given mass and energy.

    Nested one-dimensional solves: at fixed beta the mass is strictly
    increasing in mu (bisection), then beta is bracketed on the energy
    residual.  Robust for any admissible (mass, energy) pair.
    """
    from scipy.optimize import brentq

    e = dispersion.energies
    if not 0.0 < mass < 1.0:
        raise RuntimeError(f"mass {mass} must lie strictly inside (0, 1)")

    # parametrize by x = beta*mu: F = 1/(1 + exp(beta*e - x)) is increasing
    # in x for every beta, so the mass solve is a clean bisection
    def profile(beta, x):
        return 0.5 * (1.0 - np.tanh(0.5 * (beta * e - x)))

    def x_for(beta):
        def mass_res(x):
            return float(np.mean(profile(beta, x))) - mass

        width = abs(beta) * (float(e.max() - e.min()) + 1.0) + 60.0
        return brentq(mass_res, -width, width, xtol=1e-13)

    def energy_res(beta):
        if abs(beta) < 1e-12:
            return mass * float(np.mean(e)) - energy  # F -> uniform = mass
        F = profile(beta, x_for(beta))
        return float(np.mean(e * F)) - energy

    lo, hi = -1.0, 1.0
    while energy_res(lo) * energy_res(hi) > 0:
        lo *= 2.0
        hi *= 2.0
        if hi > beta_max:
            raise RuntimeError(
                f"no Fermi-Dirac profile with mass {mass:.6g} and energy {energy:.6g} "
                f"for |beta| <= {beta_max}"
            )
    beta = brentq(energy_res, lo, hi, xtol=1e-13)
    if abs(beta) < 1e-12:
        return 0.0, 0.0
    return float(beta), float(x_for(beta) / beta)
