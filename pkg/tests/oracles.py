"""Independent reference implementations used only by the tests.

Nothing here imports the package's assembly, basis or quadrature code: the
classical DG Laplacian below uses a physical monomial basis, numpy's
Gauss-Legendre nodes on a Duffy-collapsed square and a dictionary edge table.
"""
from __future__ import annotations

import math
from itertools import product

import numpy as np
from scipy.integrate import quad


def monomial_exponents(N):
    return [(i, j) for i in range(N + 1) for j in range(N + 1 - i)]


def monomials(N, pts, center):
    """Values and gradients of (x-cx)^i (y-cy)^j at pts (n,2)."""
    dx = pts[:, 0] - center[0]
    dy = pts[:, 1] - center[1]
    exps = monomial_exponents(N)
    val = np.stack([dx**i * dy**j for i, j in exps], axis=1)
    gx = np.stack([i * dx ** max(i - 1, 0) * dy**j if i else 0 * dx for i, j in exps], axis=1)
    gy = np.stack([j * dx**i * dy ** max(j - 1, 0) if j else 0 * dy for i, j in exps], axis=1)
    return val, np.stack([gx, gy], axis=2)


def triangle_points(tri, n):
    """Duffy map of an n x n Gauss-Legendre grid onto the triangle tri (3,2)."""
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1)
    w = 0.5 * w
    pts, wts = [], []
    a, b, c = tri
    area = 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    for (u, wu), (v, wv) in product(zip(g, w), zip(g, w)):
        l1 = u
        l2 = (1 - u) * v
        pts.append(a + l1 * (b - a) + l2 * (c - a))
        wts.append(wu * wv * (1 - u) * 2 * area)
    return np.array(pts), np.array(wts)


def edge_points(p, q, n):
    g, w = np.polynomial.legendre.leggauss(n)
    L = np.linalg.norm(q - p)
    pts = p[None] + (0.5 * (g + 1))[:, None] * (q - p)[None]
    return pts, 0.5 * L * w


def classical_dg_laplacian(vertices, triangles, N, penalty, flux="central"):
    """Dense classical DG Laplacian in a per-element monomial basis.

    flux='central': sum_d Q_d^T M^-1 Q_d + S with p = grad u - L(u).
    flux='ip': symmetric interior penalty.
    penalty(h) gives the edge penalty from h = min adjacent diameters.
    Returns (A, centers) where block k uses monomials about centers[k].
    """
    V = np.asarray(vertices, float)
    T = np.asarray(triangles, int)
    K = len(T)
    exps = monomial_exponents(N)
    nb = len(exps)
    n = K * nb
    centers = V[T].mean(axis=1)
    diam = np.array([max(np.linalg.norm(V[t[a]] - V[t[b]]) for a, b in ((0, 1), (1, 2), (2, 0))) for t in T])
    nq = N + 3
    M = np.zeros((n, n))
    Q = [np.zeros((n, n)), np.zeros((n, n))]
    Avol = np.zeros((n, n))
    for k, t in enumerate(T):
        pts, w = triangle_points(V[t], nq)
        val, grad = monomials(N, pts, centers[k])
        sl = slice(k * nb, (k + 1) * nb)
        M[sl, sl] = val.T @ (w[:, None] * val)
        for d in range(2):
            Q[d][sl, sl] = val.T @ (w[:, None] * grad[:, :, d])
        Avol[sl, sl] = sum(grad[:, :, d].T @ (w[:, None] * grad[:, :, d]) for d in range(2))
    edges = {}
    for k, t in enumerate(T):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = (min(t[a], t[b]), max(t[a], t[b]))
            edges.setdefault(key, []).append(k)
    S = np.zeros((n, n))
    C = np.zeros((n, n))  # -int {grad u}.[[v]] for IP
    for (ia, ib), owners in edges.items():
        p, q = V[ia], V[ib]
        pts, w = edge_points(p, q, N + 2)
        k0 = owners[0]
        tang = (q - p) / np.linalg.norm(q - p)
        nrm = np.array([tang[1], -tang[0]])
        if np.dot(nrm, centers[k0] - 0.5 * (p + q)) > 0:
            nrm = -nrm  # outward from k0
        h = min(diam[k] for k in owners)
        lam = penalty(h)
        sides = [(k, s) for k, s in zip(owners, (1.0, -1.0))]
        avg = 1.0 if len(owners) == 1 else 0.5
        trace = {}
        for k, _ in sides:
            trace[k] = monomials(N, pts, centers[k])
        for (ki, si), (kj, sj) in product(sides, sides):
            vi, gi = trace[ki]
            vj, gj = trace[kj]
            ri = slice(ki * nb, (ki + 1) * nb)
            cj = slice(kj * nb, (kj + 1) * nb)
            # jumps: [[v]] = s n v; average weight avg
            S[ri, cj] += lam * si * sj * (vi.T @ (w[:, None] * vj))
            for d in range(2):
                # lifting part of Q: int L(u).pi = int {pi}.[[u]] (boundary: n.pi u)
                Q[d][ri, cj] -= avg * sj * nrm[d] * (vi.T @ (w[:, None] * vj))
                C[ri, cj] -= avg * si * nrm[d] * (vi.T @ (w[:, None] * gj[:, :, d]))
    if flux == "ip":
        return Avol + C + C.T + S, centers
    Minv = np.linalg.inv(M)
    return sum(Q[d].T @ Minv @ Q[d] for d in range(2)) + S, centers


def change_of_basis(mesh, basis_eval, N, centers):
    """Block matrix P with phi_package = monomials @ P on every element."""
    exps = monomial_exponents(N)
    nb = len(exps)
    K = len(centers)
    P = np.zeros((K * nb, K * nb))
    rng = np.random.default_rng(7)
    for k in range(K):
        tri = mesh.vertices[mesh.elements[k]]
        bary = rng.dirichlet(np.ones(3), size=3 * nb)
        pts = bary @ tri
        mono, _ = monomials(N, pts, centers[k])
        phi = basis_eval(np.full(len(pts), k), pts)
        coef, *_ = np.linalg.lstsq(mono, phi, rcond=None)
        P[k * nb:(k + 1) * nb, k * nb:(k + 1) * nb] = coef
    return P


def segment_oracle(mesh, order, elem, j, mu, target, eval_physical):
    """Left I^mu along x of basis function j of element ``elem`` at ``target``.

    Adaptive quadrature over the chord of the element cut by y = y0; the
    package supplies only the basis evaluation.
    """
    x0, y0 = target
    tri = mesh.vertices[mesh.elements[elem]]
    cuts = []
    for k in range(3):
        a, b = tri[k], tri[(k + 1) % 3]
        if (a[1] - y0) * (b[1] - y0) < 0:
            cuts.append(a[0] + (y0 - a[1]) / (b[1] - a[1]) * (b[0] - a[0]))
    if len(cuts) != 2:
        return 0.0
    lo, hi = min(cuts), min(max(cuts), x0)
    if hi <= lo:
        return 0.0

    def phi(s):
        return eval_physical(mesh, order, [elem], np.array([[s, y0]]))[0, j]

    if hi == x0:
        val, _ = quad(phi, lo, hi, weight="alg", wvar=(0.0, mu - 1.0), epsabs=1e-14,
                      epsrel=1e-12)
    else:
        val, _ = quad(lambda s: phi(s) * (x0 - s) ** (mu - 1.0), lo, hi, epsabs=1e-14,
                      epsrel=1e-12)
    return val / math.gamma(mu)


def coupling_oracle(mesh, order, mu, points, weights, phi, eval_physical):
    """F[i, j] = sum_q w_q phi_i(x_q) (I^mu phi_j)(x_q) with adaptive inner integrals."""
    K, nq = weights.shape
    nb = phi.shape[2]
    F = np.zeros((K * nb, K * nb))
    for k in range(K):
        for q in range(nq):
            for e in range(K):
                for j in range(nb):
                    val = segment_oracle(mesh, order, e, j, mu, points[k, q], eval_physical)
                    F[k * nb:(k + 1) * nb, e * nb + j] += weights[k, q] * phi[k, q] * val
    return F
