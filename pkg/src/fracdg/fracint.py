"""Riemann-Liouville integrals of broken polynomial fields.

Along an axis-aligned ray the integrand is polynomial on every element
segment, so each segment contribution is written as a difference of two
Gauss-Jacobi integrals that run up to the target point,

    int_far^near |x0 - s|**(mu - 1) g(s) ds = J(far) - J(near),
    J(sigma) = (|x0 - sigma| / 2)**mu * sum_k w_k g(sigma + (x0 - sigma)(1 + t_k) / 2),

with the Jacobi weight (1 - t)**(mu - 1) absorbing the kernel singularity.
This is exact for polynomial g regardless of how close the segment is to the
target. Segments far from the target (distance above twice their length)
use Gauss-Legendre with the kernel sampled directly, avoiding the long
polynomial extrapolation the difference form would need.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import kernels
from .basis import ReferenceBasis, eval_physical, volume_data
from .mesh import GEOM_TOL, Mesh, RaySegment, locate_points
from .quadrature import gauss_jacobi, gauss_legendre

AXES = {"x": 0, "y": 1}
SIDES = ("left", "right")
FAR_RATIO = 2.0


@dataclass(frozen=True)
class FracParams:
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 1.0 < v <= 2.0:
                raise ValueError(f"{name} must lie in (1, 2], got {v}")

    @property
    def alpha1(self) -> float:
        return 2.0 - self.alpha

    @property
    def alpha2(self) -> float:
        return 2.0 - self.beta

    @property
    def orders(self) -> tuple[float, float]:
        return self.alpha1, self.alpha2


@dataclass
class BrokenField:
    """Scalar piecewise polynomial: one coefficient block per element."""

    mesh: Mesh
    basis: ReferenceBasis
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float).reshape(
            self.mesh.K, self.basis.np)

    @classmethod
    def zeros(cls, mesh, basis):
        return cls(mesh, basis, np.zeros((mesh.K, basis.np)))

    @classmethod
    def from_function(cls, mesh, basis, f):
        vd = volume_data(mesh, basis)
        vals = f(vd.points[..., 0], vd.points[..., 1]) * np.ones(vd.weights.shape)
        coeffs = np.einsum("kq,kqn->kn", vd.weights * vals, vd.phi)
        return cls(mesh, basis, coeffs)

    @property
    def flat(self) -> np.ndarray:
        return self.coefficients.ravel()

    def evaluate(self, elems, pts) -> np.ndarray:
        phi = eval_physical(self.mesh, self.basis.order, elems, pts)
        return np.einsum("nj,nj->n", phi, self.coefficients[np.asarray(elems)])


def rl_power_rule(n: int, mu: float, a: float, x):
    """Left-sided integral of order mu of (s - a)**n, evaluated at x >= a."""
    x = np.asarray(x, dtype=float)
    t = x - a
    if np.any(t < -GEOM_TOL * max(1.0, abs(a))):
        raise ValueError("power rule needs x >= a")
    t = np.maximum(t, 0.0)
    c = math.exp(math.lgamma(n + 1) - math.lgamma(n + 1 + mu))
    out = c * t ** (n + mu)
    return float(out) if out.ndim == 0 else out


# ray bundles ------------------------------------------------------------------

@dataclass(frozen=True)
class RayBundle:
    """Traced rays for a batch of targets; segments in walk order per target.

    ``s_far``/``s_near`` are real abscissae: the segment spans [s_far, s_near]
    for left-sided rays and [s_near, s_far] for right-sided ones.
    """

    axis: str
    side: str
    targets: np.ndarray
    owners: np.ndarray
    offsets: np.ndarray
    elem: np.ndarray
    s_far: np.ndarray
    s_near: np.ndarray

    @property
    def n_targets(self) -> int:
        return len(self.owners)

    @property
    def seg_target(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_targets), np.diff(self.offsets))

    def segments(self, p: int, tol: float = 0.0) -> list[RaySegment]:
        """Sorted segments of target ``p``, dropping those not longer than ``tol``."""
        sl = slice(self.offsets[p], self.offsets[p + 1])
        segs = [RaySegment(int(e), float(min(a, b)), float(max(a, b)))
                for e, a, b in zip(self.elem[sl], self.s_far[sl], self.s_near[sl])
                if abs(b - a) > tol]
        return sorted(segs, key=lambda g: g.s0)


def trace_rays(mesh: Mesh, targets, axis: str = "x", side: str = "left", owners=None,
               t_shift=None, method: str | None = None) -> RayBundle:
    """Trace the integration ray of every target point.

    ``axis`` picks the integration direction; ``side='left'`` integrates from
    the lower bounding-box edge, ``'right'`` from the upper one. ``t_shift``
    offsets the fixed coordinate (used to take one-sided limits on edges that
    are parallel to the ray).
    """
    if axis not in AXES or side not in SIDES:
        raise ValueError(f"bad axis/side {axis!r}/{side!r}")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if owners is None:
        owners = locate_points(mesh, targets)
    owners = np.asarray(owners, dtype=np.int64)
    if np.any(owners < 0):
        raise ValueError("target outside mesh")
    ia = AXES[axis]
    sign = 1.0 if side == "left" else -1.0
    S = np.ascontiguousarray(sign * mesh.vertices[:, ia])
    T = np.ascontiguousarray(mesh.vertices[:, 1 - ia])
    s_t = np.ascontiguousarray(sign * targets[:, ia])
    t_t = targets[:, 1 - ia].copy()
    if t_shift is not None:
        t_t = t_t + t_shift
    ext = mesh.extent
    offsets, elem, s0, s1 = kernels.trace(
        S, T, mesh.elements, mesh.neighbors, s_t, np.ascontiguousarray(t_t), owners,
        float(S.min()), 0.1 * GEOM_TOL * ext, GEOM_TOL * ext, method=method)
    return RayBundle(axis, side, targets, owners, offsets, elem, sign * s0, sign * s1)


def trace_axis_ray(mesh: Mesh, target, axis: str = "x", reverse: bool = False,
                   method: str | None = None) -> list[RaySegment]:
    """Element segments crossed between the inflow boundary and ``target``,
    sorted by increasing abscissa. ``reverse`` traces the right-sided ray."""
    bundle = trace_rays(mesh, [target], axis, "right" if reverse else "left", method=method)
    return bundle.segments(0)


def _ray_points(axis, s, t):
    return np.column_stack([s, t]) if axis == "x" else np.column_stack([t, s])


def segment_weights(mesh: Mesh, basis: ReferenceBasis, bundle: RayBundle, mu: float,
                    n_far: int | None = None, chunk: int = 400_000) -> np.ndarray:
    """(n_segments, Np) weights: segment part of (I^mu phi_j)(target)."""
    if not 0.0 < mu <= 1.0:
        raise ValueError(f"order must lie in (0, 1], got {mu}")
    order = basis.order
    ia = AXES[bundle.axis]
    tp = bundle.seg_target
    x0 = bundle.targets[tp, ia]
    tt = bundle.targets[tp, 1 - ia]
    far, near, elem = bundle.s_far, bundle.s_near, bundle.elem
    length = np.abs(near - far)
    dist = np.abs(x0 - near)
    use_far = dist > FAR_RATIO * length
    gj = gauss_jacobi(order // 2 + 2, mu - 1.0, 0.0)
    gl = gauss_legendre(n_far if n_far is not None else (order + 1) // 2 + 7)

    seg_ids, svals, wvals = [], [], []
    # difference form: + J(far) - J(near)
    idx = np.flatnonzero(~use_far)
    for sigma_all, sgn in ((far, 1.0), (near, -1.0)):
        sel = idx if sgn > 0 else idx[dist[idx] > 0]
        sig = sigma_all[sel]
        d = x0[sel] - sig
        nodes = sig[:, None] + d[:, None] * (1 + gj.nodes[None, :]) / 2
        w = sgn * (np.abs(d)[:, None] / 2) ** mu * gj.weights[None, :]
        seg_ids.append(np.repeat(sel, len(gj)))
        svals.append(nodes.ravel())
        wvals.append(w.ravel())
    sel = np.flatnonzero(use_far)
    mid = 0.5 * (far[sel] + near[sel])
    half = 0.5 * length[sel]
    nodes = mid[:, None] + half[:, None] * gl.nodes[None, :]
    w = half[:, None] * gl.weights[None, :] * np.abs(x0[sel, None] - nodes) ** (mu - 1.0)
    seg_ids.append(np.repeat(sel, len(gl)))
    svals.append(nodes.ravel())
    wvals.append(w.ravel())

    seg_ids = np.concatenate(seg_ids)
    svals = np.concatenate(svals)
    wvals = np.concatenate(wvals) / math.gamma(mu)
    out = np.zeros((len(elem), basis.np))
    for c0 in range(0, len(seg_ids), chunk):
        sid = seg_ids[c0:c0 + chunk]
        pts = _ray_points(bundle.axis, svals[c0:c0 + chunk], tt[sid])
        phi = eval_physical(mesh, order, elem[sid], pts)
        contrib = phi * wvals[c0:c0 + chunk, None]
        for j in range(basis.np):
            out[:, j] += np.bincount(sid, weights=contrib[:, j], minlength=len(elem))
    return out


def rl_operator(mesh: Mesh, basis: ReferenceBasis, bundle: RayBundle, mu: float):
    """Sparse (n_targets, K*Np) matrix whose row p maps coefficients to I^mu at target p."""
    n = mesh.K * basis.np
    if mu == 0.0:
        phi = eval_physical(mesh, basis.order, bundle.owners, bundle.targets)
        rows = np.repeat(np.arange(bundle.n_targets), basis.np)
        cols = (bundle.owners[:, None] * basis.np + np.arange(basis.np)).ravel()
        return sparse.csr_matrix((phi.ravel(), (rows, cols)), shape=(bundle.n_targets, n))
    w = segment_weights(mesh, basis, bundle, mu)
    return kernels.segments_to_sparse(n, bundle.offsets, bundle.elem, w)


def rl_integral_point(field: BrokenField, mu: float, target, axis: str = "x",
                      side: str = "left") -> float:
    """I^mu of a broken field at one interior point, integrating along ``axis``."""
    if mu == 0.0:
        owner = locate_points(field.mesh, [target])
        if owner[0] < 0:
            raise ValueError("target outside mesh")
        return float(field.evaluate(owner, np.atleast_2d(target))[0])
    bundle = trace_rays(field.mesh, [target], axis, side)
    w = segment_weights(field.mesh, field.basis, bundle, mu)
    return float(np.einsum("kj,kj->", w, field.coefficients[bundle.elem]))


# coupling matrices ------------------------------------------------------------------

@dataclass(frozen=True)
class FracCoupling:
    """Dense F[i, j] = (I^mu phi_j, phi_i) over the whole mesh."""

    matrix: np.ndarray
    mu: float
    axis: str
    side: str


@dataclass
class RayCache:
    """Volume-point rays of one (mesh, basis), reused across orders mu."""

    mesh: Mesh
    basis: ReferenceBasis
    bundles: dict = field(default_factory=dict)

    def __post_init__(self):
        self.volume = volume_data(self.mesh, self.basis)

    def volume_bundle(self, axis: str, side: str) -> RayBundle:
        key = ("volume", axis, side)
        if key not in self.bundles:
            self.bundles[key] = trace_rays(self.mesh, self.volume.flat_points, axis, side,
                                           owners=self.volume.owners)
        return self.bundles[key]


def assemble_frac_coupling(mesh: Mesh, basis: ReferenceBasis, mu: float, axis: str = "x",
                           side: str = "left", cache: RayCache | None = None,
                           method: str | None = None) -> FracCoupling:
    if not 0.0 <= mu < 1.0 + 1e-15:
        raise ValueError(f"order must lie in [0, 1], got {mu}")
    n = mesh.K * basis.np
    if mu == 0.0:
        return FracCoupling(np.eye(n), mu, axis, side)
    cache = cache or RayCache(mesh, basis)
    bundle = cache.volume_bundle(axis, side)
    vd = cache.volume
    w = segment_weights(mesh, basis, bundle, mu)
    rows = (vd.weights[..., None] * vd.phi).reshape(-1, basis.np)
    F = kernels.accumulate_coupling(n, bundle.owners, rows, bundle.offsets, bundle.elem, w,
                                    method=method)
    return FracCoupling(F, mu, axis, side)


# example1 forcing -------------------------------------------------------------------

_EX1_SHIFTED = ((4, 30.0), (3, -120.0), (2, 144.0), (1, -48.0))  # 6(x^2-1)(5x^2-1), t = x+1


def _ex1_integral(mu, x):
    if mu == 0.0:
        return 6.0 * (x * x - 1) * (5 * x * x - 1)
    return sum(c * rl_power_rule(n, mu, -1.0, x) for n, c in _EX1_SHIFTED)


def forcing_example1(params: FracParams, x, y):
    """Right-hand side whose exact solution is (x^2-1)^3 (y^2-1)^3 on (-1,1)^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return (-(y * y - 1) ** 3 * _ex1_integral(params.alpha1, x)
            - (x * x - 1) ** 3 * _ex1_integral(params.alpha2, y))
