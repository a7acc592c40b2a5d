"""Exact many-fermion dynamics in a fixed particle-number sector.

Basis states are occupation bitmasks over the L^d momentum modes; ladder
operators carry the Jordan-Wigner sign (-1)^(# occupied modes below).
All operators are Kronecker-normalized (see normalization ledger in the
README): H = sum_p e(p) n_p + lam * L^{-d} sum' W(k1,k2,k3,k4)
a^+_{k1} a^+_{k2} a_{k3} a_{k4} over momentum-conserving quadruples.

Time evolution is the standard Schroedinger propagation
psi(t) = exp(-i t H) psi(0).
"""

from __future__ import annotations

import struct
from math import comb

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh_tridiagonal

from .correlation import CorrelationMatrix
from .lattice import Dispersion, MomentumGrid, PairPotential

DEFAULT_MODE_CAP = 20
DENSE_EIG_LIMIT = 4096
KRYLOV_DIM = 30
KRYLOV_LOCAL_TOL = 1e-10
NORM_DRIFT_TOL = 1e-8


class FockError(ValueError):
    pass


class NormDriftError(RuntimeError):
    """Evolution produced a state whose norm drifted beyond tolerance."""


_sector_cache: dict[tuple[int, int], "FockBasisSector"] = {}


class FockBasisSector:
    """All bitmasks over M modes with exactly n bits set, in increasing order."""

    def __init__(self, n_modes: int, n_particles: int, mode_cap: int = DEFAULT_MODE_CAP):
        if not 0 <= n_particles <= n_modes:
            raise FockError(f"need 0 <= n <= M, got n={n_particles}, M={n_modes}")
        if n_modes > mode_cap:
            raise FockError(
                f"M={n_modes} exceeds the sector cap {mode_cap} "
                f"(sector would hold {comb(n_modes, n_particles)} states)"
            )
        self.n_modes = n_modes
        self.n_particles = n_particles
        masks = [m for m in range(1 << n_modes) if bin(m).count("1") == n_particles]
        self.masks = np.array(masks, dtype=np.int64)
        self.dim = len(masks)
        self.rank = {m: i for i, m in enumerate(masks)}

    def __repr__(self):
        return f"FockBasisSector(M={self.n_modes}, n={self.n_particles}, dim={self.dim})"


def build_sector(n_modes: int, n_particles: int, mode_cap: int = DEFAULT_MODE_CAP) -> FockBasisSector:
    key = (n_modes, n_particles)
    sec = _sector_cache.get(key)
    if sec is None:
        sec = FockBasisSector(n_modes, n_particles, mode_cap=mode_cap)
        _sector_cache[key] = sec
    return sec


def ladder_on_mask(mask: int, mode: int, create: bool):
    """Apply a^+_mode or a_mode to a basis mask.

    Returns (new_mask, sign) or None when the state is annihilated.
    Sign is (-1)^(number of occupied modes with index below `mode`).
    """
    bit = 1 << mode
    occupied = bool(mask & bit)
    if create == occupied:
        return None
    sign = 1 - 2 * (bin(mask & (bit - 1)).count("1") & 1)
    return (mask | bit) if create else (mask & ~bit), sign


def apply_ladder(sector: FockBasisSector, mask: int, mode: int, kind: str):
    """Sector-aware wrapper around ladder_on_mask; kind is 'create'|'annihilate'."""
    if not 0 <= mode < sector.n_modes:
        raise FockError(f"mode {mode} out of range for M={sector.n_modes}")
    if kind not in ("create", "annihilate"):
        raise FockError(f"kind must be 'create' or 'annihilate', got {kind!r}")
    return ladder_on_mask(mask, mode, kind == "create")


class StateVector:
    def __init__(self, sector: FockBasisSector, amplitudes: np.ndarray):
        amps = np.asarray(amplitudes, dtype=complex)
        if amps.shape != (sector.dim,):
            raise FockError(f"amplitude vector must have length {sector.dim}")
        self.sector = sector
        self.amplitudes = amps

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        return StateVector(self.sector, self.amplitudes / self.norm)

    def copy(self) -> "StateVector":
        return StateVector(self.sector, self.amplitudes.copy())


def slater_state(sector: FockBasisSector, modes) -> StateVector:
    """Product state occupying exactly the given modes."""
    modes = sorted(set(int(m) for m in modes))
    if len(modes) != sector.n_particles:
        raise FockError(
            f"slater state needs {sector.n_particles} distinct modes, got {len(modes)}"
        )
    mask = 0
    for m in modes:
        if not 0 <= m < sector.n_modes:
            raise FockError(f"mode {m} out of range")
        mask |= 1 << m
    amps = np.zeros(sector.dim, dtype=complex)
    amps[sector.rank[mask]] = 1.0
    return StateVector(sector, amps)


def random_state(sector: FockBasisSector, rng: np.random.Generator) -> StateVector:
    amps = rng.standard_normal(sector.dim) + 1j * rng.standard_normal(sector.dim)
    amps /= np.linalg.norm(amps)
    return StateVector(sector, amps)


class ManyBodyOperator:
    def __init__(self, sector: FockBasisSector, matrix: sp.spmatrix, hermitian: bool = False):
        self.sector = sector
        self.matrix = matrix.tocsr()
        self.hermitian = hermitian
        if hermitian:
            resid = abs(self.matrix - self.matrix.conj().T)
            if resid.nnz and resid.max() > 1e-12:
                raise FockError("operator flagged hermitian fails the hermiticity check")
        self._eig = None

    def apply(self, psi: StateVector) -> StateVector:
        return StateVector(self.sector, self.matrix @ psi.amplitudes)

    def expectation(self, psi: StateVector) -> complex:
        return complex(np.vdot(psi.amplitudes, self.matrix @ psi.amplitudes))

    def dense_eig(self):
        if self._eig is None:
            dense = self.matrix.toarray()
            w, u = np.linalg.eigh(dense)
            self._eig = (w, u)
        return self._eig

    def __add__(self, other: "ManyBodyOperator") -> "ManyBodyOperator":
        return ManyBodyOperator(
            self.sector, self.matrix + other.matrix, hermitian=self.hermitian and other.hermitian
        )

    def commutator(self, other: "ManyBodyOperator") -> "ManyBodyOperator":
        return ManyBodyOperator(
            self.sector, self.matrix @ other.matrix - other.matrix @ self.matrix
        )


def _conserving_pairs(grid: MomentumGrid):
    """For each total-momentum index, the ordered pairs (k1, k2), k1 != k2."""
    add = grid.addition_table()
    pairs: list[list[tuple[int, int]]] = [[] for _ in range(grid.n_modes)]
    for k1 in range(grid.n_modes):
        for k2 in range(grid.n_modes):
            if k1 != k2:
                pairs[add[k1, k2]].append((k1, k2))
    return pairs


def build_interaction(grid: MomentumGrid, potential: PairPotential, sector: FockBasisSector) -> ManyBodyOperator:
    """The quartic interaction Phi = L^{-d} sum' W a^+ a^+ a a (no coupling factor)."""
    if sector.n_modes != grid.n_modes:
        raise FockError("sector mode count does not match the grid")
    M = grid.n_modes
    sub = grid.subtraction_table()
    vh = potential.vhat
    pairs = _conserving_pairs(grid)
    scale = 1.0 / M  # L^{-d}
    rows, cols, vals = [], [], []
    for col, mask in enumerate(sector.masks):
        occupied = [m for m in range(M) if mask >> m & 1]
        for k4 in occupied:
            r4 = ladder_on_mask(mask, k4, create=False)
            m4, s4 = r4
            for k3 in occupied:
                if k3 == k4:
                    continue
                m3, s3 = ladder_on_mask(m4, k3, create=False)
                base_sign = s4 * s3
                for k1, k2 in pairs[grid.add(k3, k4)]:
                    r2 = ladder_on_mask(m3, k2, create=True)
                    if r2 is None:
                        continue
                    m2, s2 = r2
                    r1 = ladder_on_mask(m2, k1, create=True)
                    if r1 is None:
                        continue
                    m1, s1 = r1
                    w = 0.25 * (
                        vh[sub[k1, k4]] - vh[sub[k2, k4]] - vh[sub[k1, k3]] + vh[sub[k2, k3]]
                    )
                    if w == 0.0:
                        continue
                    rows.append(sector.rank[m1])
                    cols.append(col)
                    vals.append(scale * w * base_sign * s2 * s1)
    mat = sp.csr_matrix(
        (np.array(vals, dtype=complex), (rows, cols)), shape=(sector.dim, sector.dim)
    )
    mat.sum_duplicates()
    return ManyBodyOperator(sector, mat, hermitian=True)


def build_kinetic(dispersion: Dispersion, sector: FockBasisSector) -> ManyBodyOperator:
    e = dispersion.energies
    diag = np.zeros(sector.dim)
    for i, mask in enumerate(sector.masks):
        diag[i] = sum(e[m] for m in range(sector.n_modes) if mask >> m & 1)
    return ManyBodyOperator(sector, sp.diags(diag).tocsr(), hermitian=True)


def build_hamiltonian(
    grid: MomentumGrid,
    dispersion: Dispersion,
    potential: PairPotential,
    sector: FockBasisSector,
    lam: float,
) -> ManyBodyOperator:
    """H = H0 + lam * Phi on the sector."""
    h0 = build_kinetic(dispersion, sector)
    if lam == 0.0:
        return h0
    phi = build_interaction(grid, potential, sector)
    return ManyBodyOperator(sector, h0.matrix + lam * phi.matrix, hermitian=True)


def transfer_operator(sector: FockBasisSector, p: int, q: int) -> ManyBodyOperator:
    """The quadratic monomial a^+_p a_q on the sector."""
    rows, cols, vals = [], [], []
    for col, mask in enumerate(sector.masks):
        r = ladder_on_mask(mask, q, create=False)
        if r is None:
            continue
        m, s = r
        r2 = ladder_on_mask(m, p, create=True)
        if r2 is None:
            continue
        m2, s2 = r2
        rows.append(sector.rank[m2])
        cols.append(col)
        vals.append(s * s2)
    mat = sp.csr_matrix(
        (np.array(vals, dtype=complex), (rows, cols)), shape=(sector.dim, sector.dim)
    )
    return ManyBodyOperator(sector, mat, hermitian=(p == q))


def quartic_operator(sector: FockBasisSector, coeff: np.ndarray) -> ManyBodyOperator:
    """Assemble sum_k coeff[k1,k2,k3,k4] a^+_{k1} a^+_{k2} a_{k3} a_{k4}.

    `coeff` is a dense (M, M, M, M) tensor; zero entries are skipped.
    """
    M = sector.n_modes
    if coeff.shape != (M, M, M, M):
        raise FockError("coefficient tensor shape must be (M, M, M, M)")
    nz = np.argwhere(coeff != 0)
    rows, cols, vals = [], [], []
    for col, mask in enumerate(sector.masks):
        for k1, k2, k3, k4 in nz:
            r4 = ladder_on_mask(mask, int(k4), create=False)
            if r4 is None:
                continue
            m4, s4 = r4
            r3 = ladder_on_mask(m4, int(k3), create=False)
            if r3 is None:
                continue
            m3, s3 = r3
            r2 = ladder_on_mask(m3, int(k2), create=True)
            if r2 is None:
                continue
            m2, s2 = r2
            r1 = ladder_on_mask(m2, int(k1), create=True)
            if r1 is None:
                continue
            m1, s1 = r1
            rows.append(sector.rank[m1])
            cols.append(col)
            vals.append(coeff[k1, k2, k3, k4] * s4 * s3 * s2 * s1)
    mat = sp.csr_matrix(
        (np.array(vals, dtype=complex), (rows, cols)), shape=(sector.dim, sector.dim)
    )
    mat.sum_duplicates()
    return ManyBodyOperator(sector, mat)


def _lanczos_expm_apply(matrix: sp.spmatrix, v: np.ndarray, t: float, m: int):
    """One Krylov approximation of exp(-i t H) v plus an error estimate.

    The estimate is the classic last-component bound: |beta_residual *
    [exp(-i t T)]_{m,1}|; an exact breakdown (invariant subspace) makes the
    result exact and the estimate zero.
    """
    nrm = np.linalg.norm(v)
    V = np.zeros((m, v.size), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v / nrm
    k_used = m
    beta_residual = 0.0
    for j in range(m):
        w = matrix @ V[j]
        alpha[j] = np.vdot(V[j], w).real
        w -= alpha[j] * V[j]
        if j > 0:
            w -= beta[j - 1] * V[j - 1]
        # one re-orthogonalization pass keeps the basis clean at small m
        w -= V[: j + 1].T @ (V[: j + 1].conj() @ w)
        wnorm = float(np.linalg.norm(w))
        if j + 1 < m:
            beta[j] = wnorm
            if wnorm < 1e-14:
                k_used = j + 1
                break
            V[j + 1] = w / wnorm
        else:
            beta_residual = wnorm
    k = k_used
    w_t, u_t = eigh_tridiagonal(alpha[:k], beta[: k - 1])
    small = u_t @ (np.exp(-1j * t * w_t) * u_t[0].conj())
    result = nrm * (V[:k].T @ small)
    err = nrm * abs(beta_residual * small[k - 1]) if k == m else 0.0
    return result, err


def evolve(H: ManyBodyOperator, psi: StateVector, t: float, engine: str = "auto") -> StateVector:
    """psi(t) = exp(-i t H) psi.

    Engine 'dense' uses a cached eigendecomposition (dim <= 4096 by
    default), 'krylov' uses Lanczos propagation with adaptive substeps.
    """
    if not H.hermitian:
        raise FockError("evolution requires a hermitian Hamiltonian")
    if abs(psi.norm - 1.0) > 1e-9:
        raise FockError("state must be normalized before evolution")
    if t == 0.0:
        return psi.copy()
    if engine == "auto":
        engine = "dense" if H.sector.dim <= DENSE_EIG_LIMIT else "krylov"
    if engine == "dense":
        w, u = H.dense_eig()
        amps = u @ (np.exp(-1j * t * w) * (u.conj().T @ psi.amplitudes))
    elif engine == "krylov":
        amps = psi.amplitudes.copy()
        remaining = t
        dt = t
        while abs(remaining) > 1e-15 * abs(t):
            step = dt if abs(dt) <= abs(remaining) else remaining
            cand, err = _lanczos_expm_apply(H.matrix, amps, step, KRYLOV_DIM)
            if err > KRYLOV_LOCAL_TOL:
                dt = step / 2.0
                continue
            amps = cand
            remaining -= step
            drift = abs(np.linalg.norm(amps) - 1.0)
            if drift > NORM_DRIFT_TOL:
                raise NormDriftError(
                    f"norm drift {drift:.3e} beyond {NORM_DRIFT_TOL} at t-remaining "
                    f"{remaining:.6g} (substep {step:.3e}); reduce substeps or check H"
                )
    else:
        raise FockError(f"unknown evolution engine {engine!r}")
    out = StateVector(psi.sector, amps)
    drift = abs(out.norm - 1.0)
    if drift > NORM_DRIFT_TOL:
        raise NormDriftError(f"norm drift {drift:.3e} beyond tolerance after evolution")
    return out


def _annihilated_states(psi: StateVector):
    """chi[q] = a_q psi as vectors in the (n-1)-particle sector."""
    sector = psi.sector
    M = sector.n_modes
    lower = build_sector(M, sector.n_particles - 1)
    chi = np.zeros((M, lower.dim), dtype=complex)
    for i, mask in enumerate(sector.masks):
        amp = psi.amplitudes[i]
        if amp == 0:
            continue
        for q in range(M):
            r = ladder_on_mask(mask, q, create=False)
            if r is None:
                continue
            m, s = r
            chi[q, lower.rank[m]] += s * amp
    return chi


def two_point_matrix(psi: StateVector) -> CorrelationMatrix:
    """nu[p, q] = <psi| a^+_p a_q |psi> (hermitian, eigenvalues in [0, 1])."""
    if psi.sector.n_particles == 0:
        return CorrelationMatrix(np.zeros((psi.sector.n_modes,) * 2, dtype=complex))
    chi = _annihilated_states(psi)
    nu = chi.conj() @ chi.T
    return CorrelationMatrix(nu)


def n_point_function(psi: StateVector, creation, annihilation, pattern: str | None = None) -> complex:
    """Expectation of a ladder-operator string, applied exactly as written.

    `pattern` gives the left-to-right operator order as '+' (creation) and
    '-' (annihilation) characters, consuming the two mode lists in order;
    default is all creations followed by all annihilations.  Non-normal-
    ordered strings (e.g. '++--++--') are evaluated verbatim, never
    reordered.
    """
    creation = [int(m) for m in creation]
    annihilation = [int(m) for m in annihilation]
    if len(creation) != len(annihilation):
        return 0.0 + 0.0j
    if pattern is None:
        pattern = "+" * len(creation) + "-" * len(annihilation)
    if pattern.count("+") != len(creation) or pattern.count("-") != len(annihilation):
        raise FockError("pattern does not match the operator lists")
    ops = []
    ic = iter(creation)
    ia = iter(annihilation)
    for ch in pattern:
        ops.append((ch == "+", next(ic) if ch == "+" else next(ia)))
    # apply right-to-left on a sector-resolved amplitude map
    M = psi.sector.n_modes
    current = {int(m): a for m, a in zip(psi.sector.masks, psi.amplitudes) if a != 0}
    for create, mode in reversed(ops):
        nxt: dict[int, complex] = {}
        for mask, amp in current.items():
            r = ladder_on_mask(mask, mode, create)
            if r is None:
                continue
            m2, s = r
            nxt[m2] = nxt.get(m2, 0.0) + s * amp
        current = nxt
        if not current:
            return 0.0 + 0.0j
    ref = {int(m): a for m, a in zip(psi.sector.masks, psi.amplitudes)}
    return complex(sum(ref.get(mask, 0.0).conjugate() * amp for mask, amp in current.items()))


def total_momentum_distribution(psi: StateVector, grid: MomentumGrid) -> np.ndarray:
    """Probability mass on each total-momentum class (componentwise mod L)."""
    out = np.zeros(grid.n_modes)
    for i, mask in enumerate(psi.sector.masks):
        coords = np.zeros(grid.d, dtype=np.int64)
        for m in range(psi.sector.n_modes):
            if mask >> m & 1:
                coords += grid.coords[m]
        out[grid.index_of(coords)] += abs(psi.amplitudes[i]) ** 2
    return out


def wigner_hat(grid: MomentumGrid, nu: CorrelationMatrix, eps: float, xi, V: int) -> complex:
    """Rescaled Wigner transform entry: nu at (V - eps*xi/2, V + eps*xi/2).

    `xi` is an integer offset in units of the grid spacing 2*pi/L; the
    half-shift eps*xi/2 must land on grid points.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (grid.d,):
        raise FockError(f"offset must have {grid.d} components")
    steps = eps * xi / 2.0
    rounded = np.round(steps)
    if np.max(np.abs(steps - rounded)) > 1e-9:
        nz = np.abs(xi) > 0
        scale = np.max(np.abs(xi[nz])) if np.any(nz) else 1.0
        eps_near = 2.0 * np.round(eps * scale / 2.0) / scale
        raise FockError(
            f"half-shift eps*xi/2 = {steps} is off-grid; nearest representable "
            f"eps for this offset is {eps_near:.12g}"
        )
    shift = rounded.astype(np.int64)
    row = grid.index_of(grid.coords[V] - shift)
    col = grid.index_of(grid.coords[V] + shift)
    return complex(nu.nu[row, col])


_CHECKPOINT_MAGIC = b"QBFS"
_CHECKPOINT_VERSION = 1


def save_state(psi: StateVector, path) -> None:
    """Binary checkpoint: header (M, n, dim) + little-endian complex doubles."""
    header = struct.pack(
        "<4sIIIQ",
        _CHECKPOINT_MAGIC,
        _CHECKPOINT_VERSION,
        psi.sector.n_modes,
        psi.sector.n_particles,
        psi.sector.dim,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(psi.amplitudes.astype("<c16").tobytes())


def load_state(path) -> StateVector:
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<4sIIIQ"))
        magic, version, M, n, dim = struct.unpack("<4sIIIQ", header)
        if magic != _CHECKPOINT_MAGIC or version != _CHECKPOINT_VERSION:
            raise FockError("not a state checkpoint file")
        data = np.frombuffer(fh.read(16 * dim), dtype="<c16")
    sector = build_sector(M, n)
    if sector.dim != dim:
        raise FockError("checkpoint dimension mismatch")
    return StateVector(sector, data.astype(complex))
