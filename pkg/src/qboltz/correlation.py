"""Two-point correlation matrix with the nu-tilde companion convention."""

from __future__ import annotations

import numpy as np


class CorrelationMatrix:
    """nu[p, q] = <alpha^+_p alpha_q> in Kronecker normalization.

    The companion entries nu_tilde = nu - identity show up whenever a
    monomial is not normal ordered.
    """

    def __init__(self, nu: np.ndarray, check: bool = True, tol: float = 1e-9):
        nu = np.asarray(nu, dtype=complex)
        if nu.ndim != 2 or nu.shape[0] != nu.shape[1]:
            raise ValueError("correlation matrix must be square")
        if check and np.max(np.abs(nu - nu.conj().T)) > tol:
            raise ValueError("correlation matrix must be hermitian")
        self.nu = nu

    @property
    def n_modes(self) -> int:
        return self.nu.shape[0]

    @property
    def nu_tilde(self) -> np.ndarray:
        return self.nu - np.eye(self.n_modes)

    def occupations(self) -> np.ndarray:
        return self.nu.diagonal().real.copy()

    def __getitem__(self, key):
        return self.nu[key]

    def eigenvalue_range(self):
        w = np.linalg.eigvalsh(self.nu)
        return float(w.min()), float(w.max())

    def is_diagonal(self, tol: float = 1e-12) -> bool:
        off = self.nu - np.diag(self.nu.diagonal())
        return float(np.max(np.abs(off))) <= tol
