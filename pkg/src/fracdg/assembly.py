"""Global DG operators for the central, LDG and interior-penalty fluxes.

Unknowns are modal coefficients of u_h, element-major (element k owns rows
k*Np .. k*Np + Np - 1). The physical basis is orthonormal, so the auxiliary
variables of the mixed form are eliminated exactly:

    p = G u,  G = D - L_eta          (broken gradient minus lifting)
    q = F p                          (F: fractional coupling per axis)
    A = sum_d G_d^T F_d G_d + S      (central and LDG)

The interior-penalty operator keeps the fractional integral of the broken
gradient and evaluates it pointwise on the faces instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .basis import ReferenceBasis, VolumeData, eval_physical, volume_data
from .fracint import FracParams, RayCache, assemble_frac_coupling, rl_operator, trace_rays
from .mesh import Mesh
from .quadrature import triangle_rule

FLUX_KINDS = ("central", "ldg", "ip")
AXIS_NAMES = ("x", "y")


@dataclass(frozen=True)
class FluxScheme:
    """Numerical flux choice.

    ``eta_rule`` only matters for LDG: ``"min-id"`` takes u-hat from the
    element with the smaller id on every interior edge, ``"max-id"`` from the
    larger one. This is eta = +-n/2 in the jump convention used here.
    """

    kind: str = "central"
    eta_rule: str = "min-id"

    def __post_init__(self):
        if self.kind not in FLUX_KINDS:
            raise ValueError(f"unknown flux {self.kind!r}; expected one of {FLUX_KINDS}")
        if self.eta_rule not in ("min-id", "max-id"):
            raise ValueError(f"unknown eta rule {self.eta_rule!r}")

    def eta_signs(self, mesh: Mesh) -> np.ndarray:
        """Per-edge sigma with eta = sigma * n_minus / 2 (0 on boundary edges)."""
        sig = np.zeros(mesh.n_edges)
        if self.kind == "ldg":
            sig[mesh.interior_edges] = 1.0 if self.eta_rule == "min-id" else -1.0
        return sig


PENALTY_LAWS = ("analysis", "constant")


@dataclass(frozen=True)
class PenaltyConfig:
    """Edge penalty: lambda = lambda_tilde / h (``analysis``) or lambda_tilde (``constant``).

    Unset fields take flux-dependent defaults. The mixed central/LDG forms are
    coercive for any positive penalty and a mesh-independent lambda = 1 keeps
    them optimal for orders close to 1, where a 1/h penalty over-constrains
    the jumps. The symmetric interior-penalty form needs lambda to dominate a
    trace constant of order (N+1)**2 / h, hence its own default.
    """

    lambda_tilde: float | None = None
    law: str | None = None

    def __post_init__(self):
        if self.lambda_tilde is not None and not self.lambda_tilde > 0:
            raise ValueError("lambda_tilde must be positive")
        if self.law is not None and self.law not in PENALTY_LAWS:
            raise ValueError(f"unknown penalty law {self.law!r}")

    def resolved_law(self, kind: str = "central") -> str:
        if self.law is not None:
            return self.law
        return "analysis" if kind == "ip" else "constant"

    def tilde(self, order: int, kind: str = "central") -> float:
        if self.lambda_tilde is not None:
            return float(self.lambda_tilde)
        if kind == "ip":
            return 2.0 * (order + 1) ** 2
        if self.resolved_law(kind) == "constant":
            return 1.0
        return (order + 1) ** 2 / 4.0

    def edge_values(self, mesh: Mesh, order: int, kind: str = "central") -> np.ndarray:
        lt = self.tilde(order, kind)
        if self.resolved_law(kind) == "constant":
            return np.full(mesh.n_edges, lt)
        return lt / mesh.edge_h()


@dataclass(frozen=True)
class FaceData:
    """Face quadrature on every edge; plus-side arrays are zero on the boundary."""

    points: np.ndarray  # (E, nf, 2)
    weights: np.ndarray  # (E, nf), include edge length / 2
    normals: np.ndarray  # (E, 2) out of the minus element
    phi_minus: np.ndarray  # (E, nf, Np)
    phi_plus: np.ndarray  # (E, nf, Np)


def face_data(mesh: Mesh, basis: ReferenceBasis) -> FaceData:
    E = mesh.n_edges
    m = mesh.edge_elements[:, 0]
    p = mesh.edge_elements[:, 1]
    fm = mesh.edge_faces[:, 0]
    va = mesh.vertices[mesh.edge_vertices[:, 0]]
    vb = mesh.vertices[mesh.edge_vertices[:, 1]]
    t = basis.face.nodes
    pts = va[:, None, :] * (0.5 * (1 - t))[None, :, None] + vb[:, None, :] * (0.5 * (1 + t))[None, :, None]
    w = basis.face.weights[None, :] * (0.5 * mesh.edge_lengths)[:, None]
    nf = len(t)
    det_m = np.linalg.det(mesh.jacobians[m])
    phi_m = basis.face_phi[fm] / np.sqrt(det_m)[:, None, None]
    phi_p = np.zeros_like(phi_m)
    inner = p >= 0
    if inner.any():
        flat = eval_physical(mesh, basis.order, np.repeat(p[inner], nf), pts[inner].reshape(-1, 2))
        phi_p[inner] = flat.reshape(-1, nf, basis.np)
    return FaceData(pts, w, mesh.edge_normals, phi_m, phi_p)


@dataclass
class Discretization:
    """Mesh, basis and the quadrature/ray tables shared by all assemblies."""

    mesh: Mesh
    basis: ReferenceBasis
    rays: RayCache = field(init=False, repr=False)
    faces: FaceData = field(init=False, repr=False)
    _couplings: dict = field(default_factory=dict, repr=False)
    _face_ops: dict = field(default_factory=dict, repr=False)
    _face_bundles: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mesh.K == 0:
            raise ValueError("empty mesh")
        self.rays = RayCache(self.mesh, self.basis)
        self.faces = face_data(self.mesh, self.basis)

    @property
    def volume(self) -> VolumeData:
        return self.rays.volume

    @property
    def n_dofs(self) -> int:
        return self.mesh.K * self.basis.np

    def coupling(self, mu: float, axis: str, side: str = "left") -> np.ndarray:
        key = (round(mu, 15), axis, side)
        if key not in self._couplings:
            self._couplings[key] = assemble_frac_coupling(
                self.mesh, self.basis, mu, axis, side, cache=self.rays).matrix
        return self._couplings[key]

    def _face_bundle(self, axis: str, side: str, which: str):
        """Rays to face points owned by the minus (or plus) element.

        Edges parallel to the ray get their fixed coordinate nudged into the
        owner so the ray does not run along the edge; other edges are not
        moved since shifting along the ray changes I^mu at O(shift**mu).
        Both sides are kept for every interior edge: for mu = 0 the trace
        jumps across any edge.
        """
        key = (axis, side, which)
        if key in self._face_bundles:
            return self._face_bundles[key]
        mesh, fd = self.mesh, self.faces
        nf = fd.points.shape[1]
        col = 0 if which == "minus" else 1
        edges = np.arange(mesh.n_edges) if which == "minus" else mesh.interior_edges
        ia = AXIS_NAMES.index(axis)
        parallel = np.abs(fd.normals[edges, ia]) < 1e-12
        owners = mesh.edge_elements[edges, col]
        pts = fd.points[edges].reshape(-1, 2)
        towards = mesh.centroids[owners, 1 - ia] - fd.points[edges, 0, 1 - ia]
        shift = np.where(parallel, np.sign(towards) * 1e-10 * mesh.extent, 0.0)
        bundle = trace_rays(mesh, pts, axis, side, owners=np.repeat(owners, nf),
                            t_shift=np.repeat(shift, nf))
        self._face_bundles[key] = (edges, bundle)
        return self._face_bundles[key]

    def face_average_operator(self, mu: float, axis: str, side: str):
        """Sparse (E*nf, K*Np): average over both sides of I^mu at face points."""
        key = (round(mu, 15), axis, side)
        if key in self._face_ops:
            return self._face_ops[key]
        mesh, nf = self.mesh, self.faces.points.shape[1]
        _, bm = self._face_bundle(axis, side, "minus")
        op = rl_operator(mesh, self.basis, bm, mu).tolil()
        pe, bp = self._face_bundle(axis, side, "plus")
        if len(pe):
            plus = rl_operator(mesh, self.basis, bp, mu)
            rows = (pe[:, None] * nf + np.arange(nf)).ravel()
            op[rows] = 0.5 * (op[rows] + plus)
        self._face_ops[key] = op.tocsr()
        return self._face_ops[key]


def _block_indices(elems_a, elems_b, np_):
    r = elems_a[:, None, None] * np_ + np.arange(np_)[None, :, None]
    c = elems_b[:, None, None] * np_ + np.arange(np_)[None, None, :]
    return np.broadcast_arrays(r, c)


def _face_mass(fd: FaceData, a: str, b: str) -> np.ndarray:
    pa = fd.phi_minus if a == "m" else fd.phi_plus
    pb = fd.phi_minus if b == "m" else fd.phi_plus
    return np.einsum("eq,eqi,eqj->eij", fd.weights, pa, pb)


def _sparse_from_blocks(n, blocks):
    rows, cols, vals = [], [], []
    for ea, eb, data in blocks:
        r, c = _block_indices(ea, eb, data.shape[-1])
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(data.ravel())
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n))


def assemble_lifting(disc: Discretization, eta_signs=None) -> tuple:
    """Lifting matrices (L_x, L_y) acting on u coefficients.

    Column j of L_d holds the d-component coefficients of L(phi_j), defined by
    int L(theta).pi = int_Gb (n.pi) theta + int_Gi {pi}.[[theta]]
                      - int_Gi (eta.[[theta]]) [[pi]].
    """
    mesh, fd, n = disc.mesh, disc.faces, disc.n_dofs
    sig = np.zeros(mesh.n_edges) if eta_signs is None else np.asarray(eta_signs, float)
    m = mesh.edge_elements[:, 0]
    p = mesh.edge_elements[:, 1]
    inner = p >= 0
    Mmm, Mmp = _face_mass(fd, "m", "m"), _face_mass(fd, "m", "p")
    Mpm, Mpp = _face_mass(fd, "p", "m"), _face_mass(fd, "p", "p")
    cm = np.where(inner, 0.5 * (1 - sig), 1.0)[:, None, None]
    cp = (0.5 * (1 + sig))[:, None, None]
    out = []
    for d in range(2):
        nd = fd.normals[:, d][:, None, None]
        blocks = [(m, m, nd * cm * Mmm)]
        i = inner
        blocks += [(m[i], p[i], -(nd * cm * Mmp)[i]),
                   (p[i], m[i], (nd * cp * Mpm)[i]),
                   (p[i], p[i], -(nd * cp * Mpp)[i])]
        out.append(_sparse_from_blocks(n, blocks))
    return tuple(out)


def broken_gradient(disc: Discretization) -> tuple:
    """Block-diagonal (D_x, D_y): coefficients of the elementwise gradient."""
    vd, mesh = disc.volume, disc.mesh
    K = mesh.K
    out = []
    for d in range(2):
        blocks = np.einsum("kq,kqi,kqj->kij", vd.weights, vd.phi, vd.grad[..., d])
        out.append(_sparse_from_blocks(disc.n_dofs, [(np.arange(K), np.arange(K), blocks)]))
    return tuple(out)


def assemble_gradient_op(disc: Discretization, scheme: FluxScheme) -> tuple:
    """(G_x, G_y) with p = G u = grad_h u - L(u) for the scheme's u-hat."""
    Dx, Dy = broken_gradient(disc)
    Lx, Ly = assemble_lifting(disc, scheme.eta_signs(disc.mesh))
    return (Dx - Lx).tocsr(), (Dy - Ly).tocsr()


def penalty_matrix(disc: Discretization, penalty: PenaltyConfig,
                   kind: str = "central") -> sparse.csr_matrix:
    mesh, fd = disc.mesh, disc.faces
    lam = penalty.edge_values(mesh, disc.basis.order, kind)[:, None, None]
    m = mesh.edge_elements[:, 0]
    p = mesh.edge_elements[:, 1]
    i = p >= 0
    blocks = [(m, m, lam * _face_mass(fd, "m", "m")),
              (m[i], p[i], -(lam * _face_mass(fd, "m", "p"))[i]),
              (p[i], m[i], -(lam * _face_mass(fd, "p", "m"))[i]),
              (p[i], p[i], (lam * _face_mass(fd, "p", "p"))[i])]
    return _sparse_from_blocks(disc.n_dofs, blocks)


def jump_operator(disc: Discretization, d: int) -> sparse.csr_matrix:
    """Sparse (E*nf, K*Np): d-component of [[u]] = n_minus (u_minus - u_plus) at face points."""
    mesh, fd = disc.mesh, disc.faces
    E, nf, np_ = fd.phi_minus.shape
    n = disc.n_dofs
    rows = np.broadcast_to(np.arange(E * nf).reshape(E, nf, 1), (E, nf, np_))
    m = mesh.edge_elements[:, 0]
    p = mesh.edge_elements[:, 1]
    nd = fd.normals[:, d][:, None, None]
    cm = np.broadcast_to((m[:, None, None] * np_ + np.arange(np_)), (E, nf, np_))
    mat = sparse.csr_matrix(((nd * fd.phi_minus).ravel(), (rows.ravel(), cm.ravel())),
                            shape=(E * nf, n))
    i = p >= 0
    cp = np.broadcast_to((p[i][:, None, None] * np_ + np.arange(np_)), (i.sum(), nf, np_))
    mat = mat + sparse.csr_matrix(((-nd * fd.phi_plus)[i].ravel(), (rows[i].ravel(), cp.ravel())),
                                  shape=(E * nf, n))
    return mat.tocsr()


@dataclass
class GlobalSystem:
    A: np.ndarray
    rhs: np.ndarray
    K: int
    Np: int
    scheme: str
    penalty: sparse.csr_matrix | None = field(default=None, repr=False)

    @property
    def n_dofs(self) -> int:
        return self.K * self.Np

    def dump_binary(self, path) -> None:
        """Row-major float64 A then rhs, each preceded by int64 (rows, cols)."""
        with open(path, "wb") as fh:
            np.array(self.A.shape, dtype="<i8").tofile(fh)
            np.ascontiguousarray(self.A, dtype="<f8").tofile(fh)
            np.array([len(self.rhs), 1], dtype="<i8").tofile(fh)
            np.ascontiguousarray(self.rhs, dtype="<f8").tofile(fh)

    def dump_triplets(self, path, tol: float = 0.0) -> None:
        r, c = np.nonzero(np.abs(self.A) > tol)
        lines = [f"{i} {j} {self.A[i, j]:.17g}" for i, j in zip(r, c)]
        Path(path).write_text("\n".join(lines) + "\n")


def load_binary(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        r, c = np.fromfile(fh, dtype="<i8", count=2)
        A = np.fromfile(fh, dtype="<f8", count=r * c).reshape(r, c)
        n, _ = np.fromfile(fh, dtype="<i8", count=2)
        b = np.fromfile(fh, dtype="<f8", count=n)
    return A, b


def _orders(params: FracParams):
    return {"x": params.alpha1, "y": params.alpha2}


def assemble_operator(disc: Discretization, params: FracParams, scheme: FluxScheme,
                      penalty: PenaltyConfig) -> tuple[np.ndarray, sparse.csr_matrix]:
    """Dense operator A (rows = test functions) and its penalty part S."""
    S = penalty_matrix(disc, penalty, scheme.kind)
    orders = _orders(params)
    A = S.toarray()
    if scheme.kind in ("central", "ldg"):
        G = assemble_gradient_op(disc, scheme)
        for d, ax in enumerate(AXIS_NAMES):
            FG = (G[d].T @ disc.coupling(orders[ax], ax).T).T  # F @ G
            A += G[d].T @ FG
        return A, S
    D = broken_gradient(disc)
    W = disc.faces.weights.ravel()
    for d, ax in enumerate(AXIS_NAMES):
        mu = orders[ax]
        FD = (D[d].T @ disc.coupling(mu, ax).T).T
        A += D[d].T @ FD
        J = jump_operator(disc, d)
        left = disc.face_average_operator(mu, ax, "left") @ D[d]
        right = disc.face_average_operator(mu, ax, "right") @ D[d]
        JW = J.multiply(W[:, None]).tocsr()
        A -= (JW.T @ left).toarray()
        A -= (right.T @ JW).toarray()
    return A, S


def assemble_rhs(disc: Discretization, forcing, degree: int | None = None) -> np.ndarray:
    rule = triangle_rule(degree if degree is not None else 2 * disc.basis.order + 4)
    vd = volume_data(disc.mesh, disc.basis, rule)
    fv = forcing(vd.points[..., 0], vd.points[..., 1]) * np.ones(vd.weights.shape)
    return np.einsum("kq,kqn->kn", vd.weights * fv, vd.phi).ravel()


def assemble_system(disc: Discretization, params: FracParams, scheme: FluxScheme,
                    penalty: PenaltyConfig, forcing) -> GlobalSystem:
    A, S = assemble_operator(disc, params, scheme, penalty)
    rhs = assemble_rhs(disc, forcing)
    if not np.all(np.isfinite(rhs)):
        raise FloatingPointError("non-finite right-hand side")
    return GlobalSystem(A, rhs, disc.mesh.K, disc.basis.np, scheme.kind, S)


def apply_bilinear(disc: Discretization, params: FracParams, scheme: FluxScheme,
                   penalty: PenaltyConfig, U, V) -> float:
    """B_h(u, v) evaluated from pointwise fractional integrals, without forming A."""
    U = np.asarray(U, float).ravel()
    V = np.asarray(V, float).ravel()
    if not V.any():
        return 0.0
    vd = disc.volume
    W = vd.weights.ravel()
    phi = vd.phi.reshape(-1, disc.basis.np)
    owners = vd.owners
    orders = _orders(params)
    value = float(V @ (penalty_matrix(disc, penalty, scheme.kind) @ U))
    grads = assemble_gradient_op(disc, scheme) if scheme.kind != "ip" else broken_gradient(disc)
    for d, ax in enumerate(AXIS_NAMES):
        pu = grads[d] @ U
        pv = grads[d] @ V
        bundle = disc.rays.volume_bundle(ax, "left")
        Ipu = rl_operator(disc.mesh, disc.basis, bundle, orders[ax]) @ pu
        pv_q = np.einsum("qn,qn->q", phi, pv.reshape(-1, disc.basis.np)[owners])
        value += float(np.dot(W * Ipu, pv_q))
        if scheme.kind == "ip":
            J = jump_operator(disc, d)
            Wf = disc.faces.weights.ravel()
            value -= float(np.dot(Wf * (J @ V), disc.face_average_operator(orders[ax], ax, "left") @ pu))
            value -= float(np.dot(Wf * (J @ U), disc.face_average_operator(orders[ax], ax, "right") @ pv))
    return value
