"""Quasifree states, Wick determinants, and restricted-quasifreeness audits.

The determinant formula for a gauge-invariant quasifree state rho:

    rho(a^+_{p_1} .. a^+_{p_m} a_{q_1} .. a_{q_m'})
        = delta_{mm'} (-1)^{m(m-1)/2} det( nu[p_n, q_{n'}] )

Downward-ordered annihilation indices (as in the four- and eight-point
factorizations used by the hierarchy closure) absorb the sign factor, so
those predictions carry no prefactor.  The independent ground truth for
all of this is a brute-force trace over the full 2^M Fock space (M <= 6).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fock
from .correlation import CorrelationMatrix


class QuasifreeError(ValueError):
    pass


def quasifree_two_point(Q: np.ndarray) -> CorrelationMatrix:
    """Two-point matrix of the Gibbs state of H = sum_ij Q_ij a^+_i a_j.

    nu[i, i'] = <a^+_i a_{i'}> = [(1 + e^Q)^{-1}]_{i'i}; note the index
    transposition relative to the resolvent.
    """
    Q = np.asarray(Q, dtype=complex)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise QuasifreeError("Q must be square")
    if np.max(np.abs(Q - Q.conj().T)) > 1e-10:
        raise QuasifreeError("Q must be hermitian")
    w, u = np.linalg.eigh(Q)
    occ = 1.0 / (1.0 + np.exp(w))
    resolvent = (u * occ) @ u.conj().T  # (1 + e^Q)^{-1}
    return CorrelationMatrix(resolvent.T.copy())


@dataclass
class QuasifreeSpec:
    """A quadratic-Hamiltonian coefficient matrix and its derived tables."""

    Q: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=complex)
        self.nu = quasifree_two_point(self.Q)
        self.eigenvalues, self.basis = np.linalg.eigh(self.Q)
        # reconstruction check: (1 + e^Q) nu^T = 1
        from scipy.linalg import expm

        resid = np.max(np.abs((np.eye(len(self.Q)) + expm(self.Q)) @ self.nu.nu.T - np.eye(len(self.Q))))
        if resid > 1e-10:
            raise QuasifreeError(f"two-point reconstruction residual {resid:.2e}")
        lo, hi = self.nu.eigenvalue_range()
        if lo <= 0.0 or hi >= 1.0:
            raise QuasifreeError("quasifree spectrum must lie strictly inside (0, 1)")


def wick_expectation(nu: CorrelationMatrix | np.ndarray, creation, annihilation) -> complex:
    """Normal-ordered monomial expectation by the determinant formula.

    `annihilation` is given in operator order (left to right), matching
    rho(a^+_{p_1}..a^+_{p_m} a_{q_1}..a_{q_m'}).
    """
    m = len(creation)
    if m != len(annihilation):
        return 0.0 + 0.0j
    if m == 0:
        return 1.0 + 0.0j
    mat = np.asarray(nu.nu if isinstance(nu, CorrelationMatrix) else nu)
    sub = mat[np.ix_(list(creation), list(annihilation))]
    sign = -1.0 if (m * (m - 1) // 2) % 2 else 1.0
    return complex(sign * np.linalg.det(sub))


def four_point_prediction(nu, k1: int, k2: int, l2: int, l1: int) -> complex:
    """Quasifree four-point value of rho(a^+_{k1} a^+_{k2} a_{l2} a_{l1})."""
    mat = np.asarray(nu.nu if isinstance(nu, CorrelationMatrix) else nu)
    sub = mat[np.ix_([k1, k2], [l1, l2])]
    return complex(np.linalg.det(sub))


def eight_point_prediction(nu, k1, k2, k3, k4, l1, l2, l3, l4) -> complex:
    """Quasifree prediction for the non-normal-ordered eight-point monomial
    rho(a^+_{k1} a^+_{k2} a_{l4} a_{l3} a^+_{k3} a^+_{k4} a_{l2} a_{l1}).

    Rows k3, k4 against columns l3, l4 carry nu_tilde = nu - 1 because the
    middle annihilation block stands left of the second creation block.
    """
    cm = nu if isinstance(nu, CorrelationMatrix) else CorrelationMatrix(nu, check=False)
    n = cm.nu
    nt = cm.nu_tilde
    ks = [k1, k2, k3, k4]
    ls = [l1, l2, l3, l4]
    mat = np.empty((4, 4), dtype=complex)
    for i, k in enumerate(ks):
        for j, l in enumerate(ls):
            mat[i, j] = nt[k, l] if (i >= 2 and j >= 2) else n[k, l]
    return complex(np.linalg.det(mat))


def eight_point_exact(psi: fock.StateVector, ks, ls) -> complex:
    """The monomial of eight_point_prediction evaluated verbatim on a state."""
    k1, k2, k3, k4 = ks
    l1, l2, l3, l4 = ls
    return fock.n_point_function(
        psi, [k1, k2, k3, k4], [l4, l3, l2, l1], pattern="++--++--"
    )


# ---------------------------------------------------------------------------
# Brute-force oracle on the full 2^M Fock space (small M only)
# ---------------------------------------------------------------------------

FULL_FOCK_CAP = 6


class FullFockSpace:
    """Dense ladder matrices over all 2^M occupation states.

    This is the independent ground truth for the determinant formulas;
    capped at M <= 6 (64-dimensional space).
    """

    def __init__(self, n_modes: int):
        if n_modes > FULL_FOCK_CAP:
            raise QuasifreeError(
                f"brute-force oracle is capped at M <= {FULL_FOCK_CAP}, got {n_modes}"
            )
        self.n_modes = n_modes
        self.dim = 1 << n_modes
        self.annihilators = []
        for mode in range(n_modes):
            a = np.zeros((self.dim, self.dim))
            for mask in range(self.dim):
                r = fock.ladder_on_mask(mask, mode, create=False)
                if r is not None:
                    m2, s = r
                    a[m2, mask] = s
            self.annihilators.append(a)
        self.creators = [a.T.copy() for a in self.annihilators]

    def quadratic_hamiltonian(self, Q: np.ndarray) -> np.ndarray:
        Q = np.asarray(Q, dtype=complex)
        H = np.zeros((self.dim, self.dim), dtype=complex)
        for i in range(self.n_modes):
            for j in range(self.n_modes):
                if Q[i, j] != 0:
                    H += Q[i, j] * (self.creators[i] @ self.annihilators[j])
        return H

    def gibbs_density(self, Q: np.ndarray) -> np.ndarray:
        H = self.quadratic_hamiltonian(Q)
        w, u = np.linalg.eigh(H)
        boltz = np.exp(-(w - w.min()))
        rho = (u * boltz) @ u.conj().T
        return rho / np.trace(rho).real

    def operator_string(self, ops) -> np.ndarray:
        """Matrix of a ladder string given as [(kind, mode), ...] left to right."""
        X = np.eye(self.dim)
        for kind, mode in ops:
            mat = self.creators[mode] if kind == "+" else self.annihilators[mode]
            X = X @ mat
        return X

    def expectation(self, rho: np.ndarray, ops) -> complex:
        return complex(np.trace(rho @ self.operator_string(ops)))

    def monomial_expectation(self, rho: np.ndarray, creation, annihilation) -> complex:
        ops = [("+", p) for p in creation] + [("-", q) for q in annihilation]
        return self.expectation(rho, ops)

    def two_point(self, rho: np.ndarray) -> CorrelationMatrix:
        M = self.n_modes
        nu = np.empty((M, M), dtype=complex)
        for i in range(M):
            for j in range(M):
                nu[i, j] = np.trace(rho @ self.creators[i] @ self.annihilators[j])
        return CorrelationMatrix(nu)


# ---------------------------------------------------------------------------
# Restricted-quasifreeness residuals of exactly evolved states
# ---------------------------------------------------------------------------


@dataclass
class SampleSpec:
    """Tuple-sampling policy for quasifreeness audits.

    Four-point tuples are exhaustive for M <= 8, sampled otherwise;
    eight-point tuples are always a seeded random sample of n_tuples
    (the exhaustive M^8 set is out of reach even at desk scale).
    """

    n_tuples: int = 200
    seed: int = 0


@dataclass
class ResidualRow:
    kind: str  # '4pt' | '8pt'
    indices: tuple
    exact: complex
    predicted: complex

    @property
    def abs_err(self) -> float:
        return abs(self.exact - self.predicted)


class ResidualReport:
    def __init__(self, rows: list[ResidualRow]):
        self.rows = rows

    def _errs(self, kind):
        return np.array([r.abs_err for r in self.rows if r.kind == kind] or [0.0])

    @property
    def max4(self) -> float:
        return float(self._errs("4pt").max())

    @property
    def max8(self) -> float:
        return float(self._errs("8pt").max())

    @property
    def rms4(self) -> float:
        return float(np.sqrt((self._errs("4pt") ** 2).mean()))

    @property
    def rms8(self) -> float:
        return float(np.sqrt((self._errs("8pt") ** 2).mean()))

    def summary(self) -> dict:
        return {"max4": self.max4, "rms4": self.rms4, "max8": self.max8, "rms8": self.rms8}


def quasifreeness_residual(psi: fock.StateVector, spec: SampleSpec | None = None) -> ResidualReport:
    """Compare exact four-/eight-point functions against their quasifree
    predictions built from the state's own two-point matrix."""
    spec = spec or SampleSpec()
    M = psi.sector.n_modes
    nu = fock.two_point_matrix(psi)
    rng = np.random.default_rng(spec.seed)
    rows: list[ResidualRow] = []

    if M**4 <= 8**4:
        four_tuples = [
            (k1, k2, l2, l1)
            for k1 in range(M)
            for k2 in range(M)
            for l2 in range(M)
            for l1 in range(M)
        ]
    else:
        four_tuples = [tuple(rng.integers(0, M, size=4)) for _ in range(spec.n_tuples)]
    for k1, k2, l2, l1 in four_tuples:
        exact = fock.n_point_function(psi, [k1, k2], [l2, l1])
        pred = four_point_prediction(nu, k1, k2, l2, l1)
        rows.append(ResidualRow("4pt", (k1, k2, l2, l1), exact, pred))

    for _ in range(spec.n_tuples):
        idx = tuple(int(i) for i in rng.integers(0, M, size=8))
        ks, ls = idx[:4], idx[4:]
        exact = eight_point_exact(psi, ks, ls)
        pred = eight_point_prediction(nu, *ks, *ls)
        rows.append(ResidualRow("8pt", idx, exact, pred))

    return ResidualReport(rows)
