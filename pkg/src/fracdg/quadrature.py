"""Gauss rules on [-1, 1] and a collapsed rule on the reference triangle."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

MAX_POINTS = 64


@dataclass(frozen=True)
class QuadRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.nodes)

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


def _jacobi_recurrence(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the Jacobi matrix (monic recurrence)."""
    k = np.arange(n, dtype=float)
    ab = a + b
    diag = np.empty(n)
    diag[0] = (b - a) / (ab + 2.0)
    if n > 1:
        kk = k[1:]
        diag[1:] = (b * b - a * a) / ((2 * kk + ab) * (2 * kk + ab + 2))
    beta = np.empty(max(n - 1, 0))
    if n > 1:
        beta[0] = 4 * (1 + a) * (1 + b) / ((2 + ab) ** 2 * (3 + ab))
        kk = k[2:]
        beta[1:] = (4 * kk * (kk + a) * (kk + b) * (kk + ab)
                    / ((2 * kk + ab) ** 2 * (2 * kk + ab + 1) * (2 * kk + ab - 1)))
    return diag, np.sqrt(beta)


@lru_cache(maxsize=256)
def _gauss_jacobi_cached(n: int, a: float, b: float) -> QuadRule:
    diag, off = _jacobi_recurrence(n, a, b)
    if n == 1:
        nodes, vecs = diag.copy(), np.ones((1, 1))
    else:
        nodes, vecs = eigh_tridiagonal(diag, off)
    log_mu0 = ((a + b + 1) * math.log(2.0) + math.lgamma(a + 1) + math.lgamma(b + 1)
               - math.lgamma(a + b + 2))
    weights = math.exp(log_mu0) * vecs[0, :] ** 2
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadRule(nodes, weights)


def gauss_jacobi(n: int, a: float, b: float) -> QuadRule:
    """n-point Gauss rule on [-1, 1] for the weight (1 - x)**a (1 + x)**b.

    Nodes come from the symmetric tridiagonal eigenproblem of the Jacobi
    three-term recurrence (Golub-Welsch).
    """
    if not 1 <= n <= MAX_POINTS:
        raise ValueError(f"point count must be in [1, {MAX_POINTS}], got {n}")
    if a <= -1 or b <= -1:
        raise ValueError(f"Jacobi exponents must exceed -1, got a={a}, b={b}")
    return _gauss_jacobi_cached(int(n), float(a), float(b))


def gauss_legendre(n: int) -> QuadRule:
    """n-point Gauss-Legendre rule on [-1, 1]."""
    rule = gauss_jacobi(n, 0.0, 0.0)
    # symmetrize away the last-ulp asymmetry of the eigensolver
    x = 0.5 * (rule.nodes - rule.nodes[::-1])
    w = 0.5 * (rule.weights + rule.weights[::-1])
    return QuadRule(x, w)


@dataclass(frozen=True)
class TriangleRule:
    """Rule on the reference triangle (-1,-1), (1,-1), (-1,1); weights sum to 2."""

    r: np.ndarray
    s: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=32)
def triangle_rule(degree: int) -> TriangleRule:
    """Collapsed tensor-product Gauss rule exact for total degree ``degree``."""
    n = degree // 2 + 1
    ga = gauss_legendre(n)
    gb = gauss_jacobi(n, 1.0, 0.0)
    a, b = np.meshgrid(ga.nodes, gb.nodes, indexing="ij")
    wa, wb = np.meshgrid(ga.weights, gb.weights, indexing="ij")
    r = 0.5 * (1 + a) * (1 - b) - 1
    return TriangleRule(r.ravel(), b.ravel(), (0.5 * wa * wb).ravel(), degree)
