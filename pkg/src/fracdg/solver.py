"""Dense direct solves and 2-norm condition numbers."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
SVD_LIMIT = 2000


class SingularMatrixError(ArithmeticError):
    def __init__(self, pivot: int, value: float):
        super().__init__(f"numerically singular pivot at index {pivot} (|u_ii| = {value:.3e})")
        self.pivot = pivot
        self.value = value


@dataclass(frozen=True)
class Factorization:
    """LU with partial pivoting; ``perm`` satisfies A[perm] = L @ U."""

    lu: np.ndarray
    piv: np.ndarray
    perm: np.ndarray

    @classmethod
    def compute(cls, A, pivot_tol: float = 1e-14) -> "Factorization":
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"square matrix required, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise FloatingPointError("matrix has non-finite entries")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            lu, piv = linalg.lu_factor(A, check_finite=False)
        diag = np.abs(np.diag(lu))
        scale = max(np.abs(A).max(), np.finfo(float).tiny)
        bad = np.flatnonzero(diag <= pivot_tol * scale)
        if bad.size:
            raise SingularMatrixError(int(bad[0]), float(diag[bad[0]]))
        perm = np.arange(A.shape[0])
        for i, p in enumerate(piv):
            perm[i], perm[p] = perm[p], perm[i]
        return cls(lu, piv, perm)

    @property
    def L(self) -> np.ndarray:
        return np.tril(self.lu, -1) + np.eye(self.lu.shape[0])

    @property
    def U(self) -> np.ndarray:
        return np.triu(self.lu)

    def solve(self, b) -> np.ndarray:
        return linalg.lu_solve((self.lu, self.piv), np.asarray(b, dtype=float), check_finite=False)


def relative_residual(A, U, b) -> float:
    A = np.asarray(A)
    r = A @ U - b
    denom = np.linalg.norm(A, "fro") * np.linalg.norm(U) + np.linalg.norm(b)
    return float(np.linalg.norm(r) / denom) if denom > 0 else float(np.linalg.norm(r))


def solve_dense(A, b, check: bool = True) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"rhs length {b.shape[0]} does not match matrix size {A.shape[0]}")
    U = Factorization.compute(A).solve(b)
    if check:
        res = relative_residual(A, U, b)
        if not res <= RESIDUAL_TOL:
            raise FloatingPointError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g}")
    return U


def _power_sigma_max(A, tol, maxiter, rng):
    x = rng.standard_normal(A.shape[1])
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(maxiter):
        y = A.T @ (A @ x)
        new = np.sqrt(np.linalg.norm(y))
        x = y / np.linalg.norm(y)
        if abs(new - sigma) <= tol * new:
            return new
        sigma = new
    return sigma


def _inverse_sigma_min(fac: Factorization, n, tol, maxiter, rng):
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lu = (fac.lu, fac.piv)
    sigma = np.inf
    for _ in range(maxiter):
        # (A^T A)^{-1} x = A^{-1} A^{-T} x
        y = linalg.lu_solve(lu, linalg.lu_solve(lu, x, trans=1, check_finite=False), check_finite=False)
        ny = np.linalg.norm(y)
        new = 1.0 / np.sqrt(ny)
        x = y / ny
        if abs(new - sigma) <= tol * new:
            return new
        sigma = new
    return sigma


def condition_number(A, method: str | None = None, tol: float = 1e-6,
                     maxiter: int = 5000, seed: int = 0) -> float:
    """kappa_2 = sigma_max / sigma_min; +inf for a singular matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"square matrix required, got shape {A.shape}")
    n = A.shape[0]
    if method is None:
        method = "svd" if n <= SVD_LIMIT else "power"
    if method == "svd":
        s = linalg.svdvals(A, check_finite=False)
        if s[-1] <= s[0] * np.finfo(float).eps:
            log.warning("matrix is numerically singular (sigma_min = %.3e)", s[-1])
            return float("inf")
        return float(s[0] / s[-1])
    if method != "power":
        raise ValueError(f"unknown method {method!r}")
    try:
        fac = Factorization.compute(A)
    except SingularMatrixError as exc:
        log.warning("%s", exc)
        return float("inf")
    rng = np.random.default_rng(seed)
    smax = _power_sigma_max(A, tol * 0.01, maxiter, rng)
    smin = _inverse_sigma_min(fac, n, tol * 0.01, maxiter, rng)
    return float(smax / smin)
