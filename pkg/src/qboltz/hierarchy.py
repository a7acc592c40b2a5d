"""Correlation-hierarchy machinery: quartic commutator coefficients, the
restricted-quasifree closure of the two-step Duhamel expansion, the
homogeneous memory-kernel equation, and its Markovian limit.

Conventions (see normalization ledger in the README):

* states evolve as psi(t) = exp(-i t H) psi(0); the two-point equation of
  motion is d/dt nu_pq = i (e(p) - e(q)) nu_pq + i lam <[Phi, a^+_p a_q]>;
* the internal quartic vertex is phi(k) = L^{-d} * 1[k1+k2=k3+k4] * W(k)
  so that Phi = sum_k phi(k) a^+_{k1} a^+_{k2} a_{k3} a_{k4};
* the memory-kernel evolution marches

      df_p/dt = -4 lam^2 L^{-2d} * int_0^t ds
                sum_{k2,k3; k1=p} cos((t-s) De) K [f1 f2 fb3 fb4
                                                   - f4 f3 fb2 fb1](s),

  whose local-in-time limit is exactly the collision operator of
  :mod:`qboltz.collision` (checked, not assumed, via the beta audit).
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .collision import CollisionError, MollifierSpec, QuadrupleTable, kernel_table
from .correlation import CorrelationMatrix
from .lattice import Dispersion, MomentumGrid, PairPotential


class HierarchyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Quartic coefficient tensors
# ---------------------------------------------------------------------------


def interaction_tensor(grid: MomentumGrid, potential: PairPotential) -> np.ndarray:
    """Dense (M,M,M,M) internal interaction vertex phi(k1,k2,k3,k4)."""
    M = grid.n_modes
    add = grid.addition_table()
    sub = grid.subtraction_table()
    vh = potential.vhat
    k1 = np.repeat(np.arange(M), M * M)
    k2 = np.tile(np.repeat(np.arange(M), M), M)
    k3 = np.tile(np.arange(M), M * M)
    k4 = sub[add[k1, k2], k3]
    w = 0.25 * (vh[sub[k1, k4]] - vh[sub[k2, k4]] - vh[sub[k1, k3]] + vh[sub[k2, k3]])
    phi = np.zeros((M, M, M, M))
    phi[k1, k2, k3, k4] = w / M
    return phi


def delta_e_tensor(grid: MomentumGrid, dispersion: Dispersion) -> np.ndarray:
    e = dispersion.energies
    return (
        e[:, None, None, None]
        + e[None, :, None, None]
        - e[None, None, :, None]
        - e[None, None, None, :]
    )


def transfer_commutator_coeff(p: int, q: int, k1: int, k2: int, k3: int, k4: int, grid: MomentumGrid, potential: PairPotential) -> complex:
    """Coefficient of a^+_{k1} a^+_{k2} a_{k3} a_{k4} in [Phi, a^+_p a_q]."""
    phi = interaction_tensor(grid, potential)
    val = 0.0
    if q == k4:
        val -= phi[k1, k2, p, k3]
    if q == k3:
        val += phi[k1, k2, p, k4]
    if p == k1:
        val += phi[k2, q, k3, k4]
    if p == k2:
        val -= phi[k1, q, k3, k4]
    return complex(val)


def transfer_commutator_tensor(grid: MomentumGrid, potential: PairPotential, p: int, q: int, phi: np.ndarray | None = None) -> np.ndarray:
    """Dense coefficient tensor of the quartic commutator [Phi, a^+_p a_q]."""
    if phi is None:
        phi = interaction_tensor(grid, potential)
    M = grid.n_modes
    out = np.zeros((M, M, M, M))
    out[:, :, :, q] -= phi[:, :, p, :]
    out[:, :, q, :] += phi[:, :, p, :]
    out[p, :, :, :] += phi[:, q, :, :]
    out[:, p, :, :] -= phi[:, q, :, :]
    return out


def propagated_commutator_coeff(
    p: int,
    q: int,
    tau: float,
    k1: int,
    k2: int,
    k3: int,
    k4: int,
    grid: MomentumGrid,
    potential: PairPotential,
    dispersion: Dispersion,
) -> complex:
    """Phase-decorated propagated coefficient e^{-i tau De} [four Phi terms]."""
    phi = interaction_tensor(grid, potential)
    val = 0.0
    if k4 == q:
        val += phi[k1, k2, k3, p]
    if k3 == q:
        val -= phi[k1, k2, k4, p]
    if k1 == p:
        val -= phi[q, k2, k3, k4]
    if k2 == p:
        val += phi[q, k1, k3, k4]
    e = dispersion.energies
    de = e[k1] + e[k2] - e[k3] - e[k4]
    return complex(np.exp(-1j * tau * de) * val)


def propagated_commutator_tensor(
    grid: MomentumGrid,
    potential: PairPotential,
    dispersion: Dispersion,
    p: int,
    q: int,
    tau: float,
    phi: np.ndarray | None = None,
) -> np.ndarray:
    """Dense tensor of the lag-propagated commutator coefficients.

    Each quadruple carries the free phase e^{-i tau De(k)}; at tau = 0
    this reduces to transfer_commutator_tensor.
    """
    if phi is None:
        phi = interaction_tensor(grid, potential)
    M = grid.n_modes
    bracket = np.zeros((M, M, M, M))
    bracket[:, :, :, q] += phi[:, :, :, p]
    bracket[:, :, q, :] -= phi[:, :, :, p]
    bracket[p, :, :, :] -= phi[q, :, :, :]
    bracket[:, p, :, :] += phi[q, :, :, :]
    if tau == 0.0:
        return bracket.astype(complex)
    return np.exp(-1j * tau * delta_e_tensor(grid, dispersion)) * bracket


# ---------------------------------------------------------------------------
# Restricted-quasifree closure of the second-order commutator expectation
# ---------------------------------------------------------------------------


def quasifree_closure_rhs(
    p: int,
    q: int,
    tau: float,
    nu: CorrelationMatrix,
    grid: MomentumGrid,
    potential: PairPotential,
    dispersion: Dispersion,
    phi: np.ndarray | None = None,
) -> complex:
    """rho([Phi, G(tau)]) closed over the two-point matrix, where G(tau) is
    the lag-propagated transfer commutator of (p, q).

    On a restricted-quasifree state the eight-point expectation factorizes;
    after the Laplace expansion, the antisymmetries collapse it to

        sum_{k,l} m(k,l) * 4 (nu_{k1l1} nu_{k2l2} nut_{k3l3} nut_{k4l4}
                              + 4 nu_{k1l1} nu_{k2l3} nu_{k4l2} nut_{k3l4})

    with m(k,l) = phi(k1,k2,l4,l3) g(k3,k4,l2,l1) - g(k1,k2,l4,l3)
    phi(k3,k4,l2,l1); the disconnected pairing cancels by the commutator
    antisymmetry.  The eightfold sum is never materialized: the momentum
    deltas inside the phi tensors keep every pairwise contraction small.
    """
    if phi is None:
        phi = interaction_tensor(grid, potential)
    g = propagated_commutator_tensor(grid, potential, dispersion, p, q, tau, phi=phi)
    n = nu.nu
    nt = nu.nu_tilde
    phic = phi.astype(complex)

    # indices: phi[a,b,c,d] = phi(k1,k2,l4,l3), g[e,f,g,h] = g(k3,k4,l2,l1)
    def term1(A, B):
        return np.einsum("abcd,efgh,ah,bg,ed,fc->", A, B, n, n, nt, nt, optimize=True)

    def term2(A, B):
        return np.einsum("abcd,efgh,ah,bd,fg,ec->", A, B, n, n, n, nt, optimize=True)

    t1 = term1(phic, g) - term1(g, phic)
    t2 = term2(phic, g) - term2(g, phic)
    return complex(4.0 * (t1 + 4.0 * t2))


def exact_commutator_expectation(psi, phi_op, g_op) -> complex:
    """<psi| [Phi, G] |psi> via sparse matvecs (the exact side of the closure)."""
    a = psi.amplitudes
    phi_m = phi_op.matrix
    g_m = g_op.matrix
    return complex(np.vdot(a, phi_m @ (g_m @ a)) - np.vdot(a, g_m @ (phi_m @ a)))


def make_vertex(grid: MomentumGrid, potential: PairPotential, conserve: bool = True):
    """Vectorized evaluator of the internal vertex phi(k1,k2,k3,k4).

    With conserve=False the momentum Kronecker is dropped (mutation
    testing only; the physical vertex always conserves momentum).
    """
    sub = grid.subtraction_table()
    add = grid.addition_table()
    vh = potential.vhat
    M = grid.n_modes

    def vertex(k1, k2, k3, k4):
        w = 0.25 * (
            vh[sub[k1, k4]] - vh[sub[k2, k4]] - vh[sub[k1, k3]] + vh[sub[k2, k3]]
        ) / M
        if conserve:
            w = np.where(add[k1, k2] == add[k3, k4], w, 0.0)
        return w

    return vertex


def second_term_cancellation_check(grid: MomentumGrid, vertex, dispersion: Dispersion, tau: float) -> float:
    """Evaluates the homogeneous second-closure-term identity.

    Returns max over p of |sum_k 32 (1[k1=p] - 1[k3=p]) V(k1,k2,k3,k2)
    V(k3,k4,k4,k1) cos(tau (e3 - e1))| for a vectorized vertex evaluator V.
    For the physical vertex this is structurally zero: the momentum deltas
    in both factors force k1 = k3.  A deliberately broken vertex (see the
    mutation test) makes it generically nonzero.
    """
    M = grid.n_modes
    e = dispersion.energies
    K1, K2 = np.meshgrid(np.arange(M), np.arange(M), indexing="ij")
    # A[k1, k3] = sum_k2 V(k1, k2, k3, k2); B[k3, k1] = sum_k4 V(k3, k4, k4, k1)
    A = np.zeros((M, M))
    B = np.zeros((M, M))
    for k3 in range(M):
        A[:, k3] = vertex(K1, K2, np.full_like(K1, k3), K2).sum(axis=1)
    for k1 in range(M):
        B[:, k1] = vertex(K1, K2, K2, np.full_like(K1, k1)).sum(axis=1)
    cosmat = np.cos(tau * (e[:, None] - e[None, :]))  # cos(tau (e3 - e1)) at [k3, k1]
    worst = 0.0
    for p in range(M):
        term_k1 = 32.0 * float(np.sum(A[p, :] * B[:, p] * cosmat[:, p]))
        term_k3 = 32.0 * float(np.sum(A[:, p] * B[p, :] * cosmat[p, :]))
        worst = max(worst, abs(term_k1 - term_k3))
    return worst


# ---------------------------------------------------------------------------
# Homogeneous memory-kernel equation
# ---------------------------------------------------------------------------


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    n = len(times)
    w = np.zeros(n)
    if n < 2:
        return w
    dt = np.diff(times)
    w[0] = dt[0] / 2.0
    w[-1] = dt[-1] / 2.0
    w[1:-1] = (dt[:-1] + dt[1:]) / 2.0
    return w


def memory_rate(
    times: np.ndarray,
    f_history: np.ndarray,
    lam: float,
    table: QuadrupleTable,
    kernel: np.ndarray,
    imag_tol: float = 1e-12,
) -> np.ndarray:
    """Per-mode rate df_p/dt at t = times[-1] from the full history.

    Assembles the complex summand 2 (1[k4=p] - 1[k1=p]) e^{-i(t-s)De} K
    [f1 f2 fb3 fb4 - f4 f3 fb2 fb1](s) with trapezoidal s-quadrature; the
    imaginary part must cancel by the (k1,k2)<->(k3,k4) relabeling symmetry
    and is asserted small.  Sign convention: forward evolution (states
    propagated with exp(-itH)), so the rate is MINUS the phase-decorated
    bracket sum; see the README normalization ledger.
    """
    times = np.asarray(times, dtype=float)
    f_history = np.asarray(f_history, dtype=float)
    if f_history.shape[0] != times.shape[0]:
        raise HierarchyError("history and time grid lengths differ")
    if np.any(np.diff(times) <= 0):
        raise HierarchyError("history time points must be strictly increasing")
    M = table.grid.n_modes
    t = times[-1]
    sw = _trapezoid_weights(times)
    acc = np.zeros(M, dtype=complex)
    for j in range(len(times)):
        f = f_history[j]
        fb = 1.0 - f
        bracket = (
            f[table.k1] * f[table.k2] * fb[table.k3] * fb[table.k4]
            - f[table.k4] * f[table.k3] * fb[table.k2] * fb[table.k1]
        )
        val = np.exp(-1j * (t - times[j]) * table.delta_e) * kernel * bracket
        pinned = np.bincount(table.k4, weights=val.real, minlength=M) - np.bincount(
            table.k1, weights=val.real, minlength=M
        )
        pinned_im = np.bincount(table.k4, weights=val.imag, minlength=M) - np.bincount(
            table.k1, weights=val.imag, minlength=M
        )
        acc += sw[j] * 2.0 * (pinned + 1j * pinned_im)
    rate = lam**2 / M**2 * acc
    scale = max(float(np.max(np.abs(rate.real))), 1e-30)
    if float(np.max(np.abs(rate.imag))) > imag_tol * scale + 1e-300:
        raise HierarchyError(
            f"memory rate has spurious imaginary part {np.max(np.abs(rate.imag)):.2e}"
        )
    return rate.real


def memory_rate_fast(
    times: np.ndarray,
    f_history: np.ndarray,
    lam: float,
    table: QuadrupleTable,
    kernel: np.ndarray,
) -> np.ndarray:
    """Hot-loop twin of memory_rate using the loss-pinned cosine form."""
    times = np.asarray(times, dtype=float)
    f_history = np.asarray(f_history, dtype=float)
    M = table.grid.n_modes
    sw = _trapezoid_weights(times)
    taus = times[-1] - times
    fb_history = 1.0 - f_history
    bracket = _kernels.memory_bracket_sum(
        table.k1,
        table.k2,
        table.k3,
        table.k4,
        table.delta_e,
        kernel,
        f_history,
        fb_history,
        taus,
        sw,
        M,
    )
    return -4.0 * lam**2 / M**2 * bracket


def solve_memory_equation(
    f0: np.ndarray,
    lam: float,
    t_end: float,
    dt: float,
    table: QuadrupleTable,
    kernel: np.ndarray | PairPotential,
    bound_tol: float = 1e-2,
    use_fast: bool = True,
):
    """Volterra march of the memory-kernel equation.

    Second-order predictor-corrector (Heun) over trapezoidal history
    quadrature; cost O((t_end/dt)^2 * table entries).  Returns
    (times, f_history) with f_history[j] the occupation table at times[j].

    The box guard is looser than the kinetic solver's: the finite-coupling
    closure intrinsically overshoots [0, 1] from hard-indicator data
    (measured up to ~8e-3 at lam = 0.35 on small instances, converged in
    dt), so the guard is a blowup detector, not a positivity assertion.
    """
    if isinstance(kernel, PairPotential):
        kernel = kernel_table(table, kernel)
    f0 = np.asarray(f0, dtype=float)
    if f0.min() < -1e-12 or f0.max() > 1.0 + 1e-12:
        raise CollisionError("initial occupations must lie in [0, 1]")
    rhs = memory_rate_fast if use_fast else (
        lambda ts, fh, l, tb, kv: memory_rate(ts, fh, l, tb, kv)
    )
    n_steps = int(round(t_end / dt))
    times = [0.0]
    hist = [f0.copy()]
    for step in range(n_steps):
        t_next = (step + 1) * dt
        ts = np.asarray(times)
        fh = np.asarray(hist)
        r_now = rhs(ts, fh, lam, table, kernel)
        predictor = hist[-1] + dt * r_now
        ts_next = np.append(ts, t_next)
        fh_pred = np.vstack([fh, predictor])
        r_pred = rhs(ts_next, fh_pred, lam, table, kernel)
        f_next = hist[-1] + 0.5 * dt * (r_now + r_pred)
        if f_next.min() < -bound_tol or f_next.max() > 1.0 + bound_tol:
            raise SolverAbortMemory(
                f"memory solution left [0,1] beyond {bound_tol:g} at t={t_next:.6g}; reduce dt"
            )
        times.append(t_next)
        hist.append(f_next)
    return np.asarray(times), np.asarray(hist)


class SolverAbortMemory(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# beta(E, p) and the Markov limit
# ---------------------------------------------------------------------------


def collision_density(
    E: float,
    p: int,
    f: np.ndarray,
    table: QuadrupleTable,
    kernel: np.ndarray,
    mollifier: MollifierSpec,
) -> float:
    """Energy-resolved collision density beta(E, p) with delta -> delta_eta.

    beta is symmetric in E for symmetric potentials; pi * beta(0, p)
    reproduces the collision operator at matched eta (the Markov limit).
    """
    f = np.asarray(f, dtype=float)
    fb = 1.0 - f
    M = table.grid.n_modes
    bracket = (
        f[table.k1] * f[table.k2] * fb[table.k3] * fb[table.k4]
        - f[table.k4] * f[table.k3] * fb[table.k2] * fb[table.k1]
    )
    val = mollifier(E - table.delta_e) * kernel * bracket
    pin4 = float(val[table.k4 == p].sum())
    pin1 = float(val[table.k1 == p].sum())
    return 2.0 / M**2 * (pin4 - pin1)


def markov_limit_value(
    p: int,
    f: np.ndarray,
    table: QuadrupleTable,
    kernel: np.ndarray,
    mollifier: MollifierSpec,
) -> float:
    """pi * beta(0, p): the local-in-time limit of the memory equation."""
    return float(np.pi * collision_density(0.0, p, f, table, kernel, mollifier))
