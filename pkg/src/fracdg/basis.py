"""Orthonormal modal basis on the reference triangle.

The reference triangle has vertices (-1,-1), (1,-1), (-1,1). Modes are the
collapsed-coordinate Jacobi products psi_ij, i + j <= N, evaluated through the
scaled-Legendre form ``y**i P_i(x / y)`` so that points outside the triangle
(needed when a polynomial is extended along a ray) never divide by zero.

Physical basis functions are ``psi(ref(x)) / sqrt(det J)``, which makes every
element mass matrix the identity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .quadrature import QuadRule, TriangleRule, gauss_legendre, triangle_rule

MAX_ORDER = 8
REF_VERTICES = np.array([[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])


def jacobi_table(x: np.ndarray, alpha: float, beta: float, n: int) -> np.ndarray:
    """Orthonormal Jacobi polynomials P_0..P_n at ``x``; shape (n + 1, len(x))."""
    x = np.asarray(x, dtype=float)
    out = np.empty((n + 1,) + x.shape)
    ab = alpha + beta
    gamma0 = (2.0 ** (ab + 1) / (ab + 1) * math.gamma(alpha + 1) * math.gamma(beta + 1)
              / math.gamma(ab + 1))
    out[0] = 1.0 / math.sqrt(gamma0)
    if n == 0:
        return out
    gamma1 = (alpha + 1) * (beta + 1) / (ab + 3) * gamma0
    out[1] = ((ab + 2) * x / 2 + (alpha - beta) / 2) / math.sqrt(gamma1)
    aold = 2 / (2 + ab) * math.sqrt((alpha + 1) * (beta + 1) / (ab + 3))
    for i in range(1, n):
        h1 = 2 * i + ab
        anew = 2 / (h1 + 2) * math.sqrt(
            (i + 1) * (i + 1 + ab) * (i + 1 + alpha) * (i + 1 + beta) / (h1 + 1) / (h1 + 3))
        bnew = -(alpha * alpha - beta * beta) / h1 / (h1 + 2)
        out[i + 1] = (-aold * out[i - 1] + (x - bnew) * out[i]) / anew
        aold = anew
    return out


def _scaled_legendre(x, y, n):
    """y**i P_i(x/y) for i <= n with x- and y-derivatives."""
    q = np.zeros((n + 1,) + x.shape)
    qx = np.zeros_like(q)
    qy = np.zeros_like(q)
    q[0] = 1.0
    if n >= 1:
        q[1] = x
        qx[1] = 1.0
    y2 = y * y
    for i in range(1, n):
        q[i + 1] = ((2 * i + 1) * x * q[i] - i * y2 * q[i - 1]) / (i + 1)
        qx[i + 1] = ((2 * i + 1) * (q[i] + x * qx[i]) - i * y2 * qx[i - 1]) / (i + 1)
        qy[i + 1] = ((2 * i + 1) * x * qy[i]
                     - i * (2 * y * q[i - 1] + y2 * qy[i - 1])) / (i + 1)
    return q, qx, qy


def modes(order: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(order + 1) for j in range(order + 1 - i)]


def eval_modes(order: int, r, s, derivatives: bool = False):
    """Reference modes at (r, s); returns (npts, Np) or (psi, psi_r, psi_s)."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    x = 0.5 * (1 + 2 * r + s)
    y = 0.5 * (1 - s)
    q, qx, qy = _scaled_legendre(x, y, order)
    mlist = modes(order)
    psi = np.empty(r.shape + (len(mlist),))
    if derivatives:
        dr = np.empty_like(psi)
        ds = np.empty_like(psi)
    tables = {}
    for m, (i, j) in enumerate(mlist):
        if i not in tables:
            a = 2.0 * i + 1
            p = jacobi_table(s, a, 0.0, order - i)
            dp = np.zeros_like(p)
            if order - i >= 1:
                pd = jacobi_table(s, a + 1, 1.0, order - i - 1)
                for jj in range(1, order - i + 1):
                    dp[jj] = math.sqrt(jj * (jj + a + 1)) * pd[jj - 1]
            tables[i] = (p, dp)
        p, dp = tables[i]
        c = math.sqrt(2.0) * math.sqrt((2 * i + 1) / 2.0) * 2.0 ** i
        psi[..., m] = c * q[i] * p[j]
        if derivatives:
            dr[..., m] = c * qx[i] * p[j]
            ds[..., m] = c * (0.5 * (qx[i] - qy[i]) * p[j] + q[i] * dp[j])
    if derivatives:
        return psi, dr, ds
    return psi


@dataclass(frozen=True)
class ReferenceBasis:
    """Tabulated orthonormal basis of total degree ``order``."""

    order: int
    volume: TriangleRule
    face: QuadRule
    phi: np.ndarray = field(repr=False)
    phi_r: np.ndarray = field(repr=False)
    phi_s: np.ndarray = field(repr=False)
    face_points: np.ndarray = field(repr=False)  # (3, nf, 2) reference coords
    face_phi: np.ndarray = field(repr=False)  # (3, nf, Np)

    @property
    def np(self) -> int:
        return (self.order + 1) * (self.order + 2) // 2

    def eval(self, r, s) -> np.ndarray:
        return eval_modes(self.order, r, s)

    def eval_grad(self, r, s):
        return eval_modes(self.order, r, s, derivatives=True)


def build_reference_basis(order: int, volume_degree: int | None = None,
                          face_points: int | None = None) -> ReferenceBasis:
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"polynomial order must be in [1, {MAX_ORDER}], got {order}")
    # I^mu phi has fractional-power kinks, so the mass-level rule 2N+2 is too coarse
    vol = triangle_rule(volume_degree if volume_degree is not None else 2 * order + 10)
    face = gauss_legendre(face_points if face_points is not None else order + 2)
    phi, phi_r, phi_s = eval_modes(order, vol.r, vol.s, derivatives=True)
    t = face.nodes
    fpts = np.empty((3, len(t), 2))
    fphi = np.empty((3, len(t), (order + 1) * (order + 2) // 2))
    for f in range(3):
        a, b = REF_VERTICES[f], REF_VERTICES[(f + 1) % 3]
        fpts[f] = np.outer(0.5 * (1 - t), a) + np.outer(0.5 * (1 + t), b)
        fphi[f] = eval_modes(order, fpts[f, :, 0], fpts[f, :, 1])
    return ReferenceBasis(order, vol, face, phi, phi_r, phi_s, fpts, fphi)


@dataclass(frozen=True)
class ElementMap:
    """Affine map from the reference triangle onto one physical element."""

    origin: np.ndarray
    jacobian: np.ndarray
    inverse: np.ndarray
    det: float

    @classmethod
    def from_vertices(cls, verts) -> "ElementMap":
        verts = np.asarray(verts, dtype=float)
        jac = 0.5 * np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
        det = float(np.linalg.det(jac))
        if det <= 0:
            raise ValueError("element vertices must be counter-clockwise and non-degenerate")
        return cls(verts[0] + jac @ np.array([1.0, 1.0]), jac, np.linalg.inv(jac), det)

    def to_physical(self, r, s) -> np.ndarray:
        rs = np.stack([np.asarray(r, float), np.asarray(s, float)], axis=-1)
        return rs @ self.jacobian.T + self.origin

    def to_reference(self, points) -> np.ndarray:
        return (np.asarray(points, float) - self.origin) @ self.inverse.T


def _inside_reference(rs: np.ndarray, tol: float) -> np.ndarray:
    r, s = rs[..., 0], rs[..., 1]
    return (r >= -1 - tol) & (s >= -1 - tol) & (r + s <= tol)


def evaluate_field(emap: ElementMap, basis: ReferenceBasis, coefficients, point):
    """Value and physical gradient of a modal field at one physical point."""
    rs = emap.to_reference(point)
    if not _inside_reference(rs, 1e-10):
        raise ValueError(f"point {tuple(point)} lies outside the element")
    psi, pr, ps = basis.eval_grad(rs[0], rs[1])
    c = np.asarray(coefficients, dtype=float)
    scale = 1.0 / math.sqrt(emap.det)
    value = scale * float(psi[0] @ c)
    gref = scale * np.array([pr[0] @ c, ps[0] @ c])
    return value, emap.inverse.T @ gref


def project(emap: ElementMap, basis: ReferenceBasis, f) -> np.ndarray:
    """L2 projection of ``f(x, y)`` onto the element's modal space."""
    vol = basis.volume
    xy = emap.to_physical(vol.r, vol.s)
    fv = np.asarray(f(xy[:, 0], xy[:, 1]), dtype=float) * np.ones(len(vol))
    return math.sqrt(emap.det) * (basis.phi.T @ (vol.weights * fv))


def to_reference(mesh, elems, pts) -> np.ndarray:
    """Reference coordinates of physical points ``pts`` in elements ``elems``."""
    elems = np.asarray(elems)
    jac = mesh.jacobians[elems]
    inv = np.linalg.inv(jac)
    v0 = mesh.vertices[mesh.elements[elems, 0]]
    return np.einsum("nij,nj->ni", inv, np.asarray(pts, float) - v0) - 1.0


def eval_physical(mesh, order: int, elems, pts, derivatives: bool = False):
    """Physical basis values (n, Np) at points owned by ``elems``.

    With ``derivatives`` also returns physical gradients, shape (n, Np, 2).
    Points may lie outside their element; the polynomial is simply extended.
    """
    elems = np.asarray(elems)
    rs = to_reference(mesh, elems, pts)
    det = np.linalg.det(mesh.jacobians[elems])
    scale = 1.0 / np.sqrt(det)
    if not derivatives:
        return eval_modes(order, rs[:, 0], rs[:, 1]) * scale[:, None]
    psi, pr, ps = eval_modes(order, rs[:, 0], rs[:, 1], derivatives=True)
    inv = np.linalg.inv(mesh.jacobians[elems])
    gref = np.stack([pr, ps], axis=2)
    grad = np.einsum("kji,knj->kni", inv, gref)
    return psi * scale[:, None], grad * scale[:, None, None]


@dataclass(frozen=True)
class VolumeData:
    """Volume quadrature mapped onto every element of a mesh."""

    points: np.ndarray  # (K, nq, 2)
    weights: np.ndarray  # (K, nq), include det J
    phi: np.ndarray  # (K, nq, Np)
    grad: np.ndarray  # (K, nq, Np, 2)

    @property
    def flat_points(self) -> np.ndarray:
        return self.points.reshape(-1, 2)

    @property
    def owners(self) -> np.ndarray:
        K, nq = self.weights.shape
        return np.repeat(np.arange(K), nq)


def volume_data(mesh, basis: ReferenceBasis, rule: TriangleRule | None = None) -> VolumeData:
    rule = rule or basis.volume
    if rule is basis.volume:
        psi, pr, ps = basis.phi, basis.phi_r, basis.phi_s
    else:
        psi, pr, ps = basis.eval_grad(rule.r, rule.s)
    jac = mesh.jacobians
    det = np.linalg.det(jac)
    inv = np.linalg.inv(jac)
    v0 = mesh.vertices[mesh.elements[:, 0]]
    rs1 = np.stack([rule.r + 1, rule.s + 1], axis=1)
    pts = v0[:, None, :] + np.einsum("kij,qj->kqi", jac, rs1)
    scale = 1.0 / np.sqrt(det)
    phi = psi[None, :, :] * scale[:, None, None]
    gref = np.stack([pr, ps], axis=2)
    grad = np.einsum("kji,qnj->kqni", inv, gref) * scale[:, None, None, None]
    return VolumeData(pts, rule.weights[None, :] * det[:, None], phi, grad)
