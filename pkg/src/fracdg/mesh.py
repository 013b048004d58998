"""Triangular meshes: generation, file input, connectivity, point location."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GEOM_TOL = 1e-12


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Vertex:
    id: int
    x: float
    y: float


@dataclass(frozen=True)
class Element:
    id: int
    vertices: tuple[int, int, int]
    diameter: float
    area: float


@dataclass(frozen=True)
class Edge:
    id: int
    endpoints: tuple[int, int]
    minus_element: int
    plus_element: int | None
    minus_face: int
    plus_face: int | None
    normal: tuple[float, float]
    length: float

    @property
    def is_boundary(self) -> bool:
        return self.plus_element is None


@dataclass(frozen=True)
class RaySegment:
    element: int
    s0: float
    s1: float

    @property
    def length(self) -> float:
        return self.s1 - self.s0


@dataclass(eq=False)
class Mesh:
    """Immutable-by-convention triangle mesh with array-form connectivity.

    Edge ``e`` joins ``edge_elements[e, 0]`` (minus side, the smaller element
    id) and ``edge_elements[e, 1]`` (plus side, -1 on the boundary).
    ``edge_normals`` point out of the minus element. Local face ``j`` of an
    element runs from its vertex ``j`` to vertex ``j + 1``.
    """

    vertices: np.ndarray
    elements: np.ndarray
    boundary_override: np.ndarray | None = None
    edge_vertices: np.ndarray = field(init=False, repr=False)
    edge_elements: np.ndarray = field(init=False, repr=False)
    edge_faces: np.ndarray = field(init=False, repr=False)
    edge_normals: np.ndarray = field(init=False, repr=False)
    edge_lengths: np.ndarray = field(init=False, repr=False)
    element_edges: np.ndarray = field(init=False, repr=False)
    neighbors: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=float)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be a (V, 2) array")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("vertex coordinates must be finite")
        if self.elements.ndim != 2 or self.elements.shape[1] != 3 or len(self.elements) == 0:
            raise MeshError("elements must be a non-empty (K, 3) array")
        if self.elements.min() < 0 or self.elements.max() >= len(self.vertices):
            raise MeshError("element references a missing vertex")
        build_connectivity(self)

    # geometry ---------------------------------------------------------
    @property
    def K(self) -> int:
        return len(self.elements)

    @property
    def n_edges(self) -> int:
        return len(self.edge_vertices)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1])

    @property
    def extent(self) -> float:
        a, b, c, d = self.bbox
        return max(b - a, d - c)

    @property
    def corners(self) -> np.ndarray:
        return self.vertices[self.elements]

    @property
    def signed_areas(self) -> np.ndarray:
        p = self.corners
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @property
    def diameters(self) -> np.ndarray:
        p = self.corners
        d = np.stack([np.linalg.norm(p[:, (j + 1) % 3] - p[:, j], axis=1) for j in range(3)])
        return d.max(axis=0)

    @property
    def jacobians(self) -> np.ndarray:
        """(K, 2, 2) Jacobians of the affine maps from the reference triangle."""
        p = self.corners
        return 0.5 * np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)

    @property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_elements[:, 1] < 0)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(self.edge_elements[:, 1] >= 0)

    def edge_h(self) -> np.ndarray:
        """min of the adjacent element diameters, per edge."""
        diam = self.diameters
        h = diam[self.edge_elements[:, 0]].copy()
        inner = self.edge_elements[:, 1] >= 0
        h[inner] = np.minimum(h[inner], diam[self.edge_elements[inner, 1]])
        return h

    def mesh_size(self) -> float:
        return float(self.diameters.max())

    def vertex(self, i: int) -> Vertex:
        return Vertex(i, float(self.vertices[i, 0]), float(self.vertices[i, 1]))

    def element(self, k: int) -> Element:
        return Element(k, tuple(int(v) for v in self.elements[k]),
                       float(self.diameters[k]), float(self.areas[k]))

    def edge(self, e: int) -> Edge:
        m, p = (int(v) for v in self.edge_elements[e])
        fm, fp = (int(v) for v in self.edge_faces[e])
        return Edge(e, tuple(int(v) for v in self.edge_vertices[e]), m,
                    None if p < 0 else p, fm, None if p < 0 else fp,
                    tuple(float(v) for v in self.edge_normals[e]),
                    float(self.edge_lengths[e]))


def build_connectivity(mesh: Mesh) -> Mesh:
    """Orient elements CCW, match faces into edges, fill neighbor tables."""
    sa = mesh.signed_areas
    if np.any(np.abs(sa) <= GEOM_TOL * mesh.extent ** 2):
        raise MeshError("degenerate (zero-area) element")
    flip = sa < 0
    if np.any(flip):
        mesh.elements[flip] = mesh.elements[flip][:, [0, 2, 1]]

    K = mesh.K
    a = mesh.elements
    half = np.stack([a, np.roll(a, -1, axis=1)], axis=2).reshape(-1, 2)
    key = np.sort(half, axis=1)
    uniq, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        bad = uniq[np.argmax(counts > 2)]
        raise MeshError(f"non-conforming mesh: edge {tuple(bad)} shared by more than two elements")
    elem_of = np.repeat(np.arange(K), 3)
    face_of = np.tile(np.arange(3), K)
    order = np.lexsort((elem_of, inverse))  # by edge, then element id
    E = len(uniq)
    edge_elements = -np.ones((E, 2), dtype=np.int64)
    edge_faces = -np.ones((E, 2), dtype=np.int64)
    first = np.ones(len(order), dtype=bool)
    first[1:] = inverse[order][1:] != inverse[order][:-1]
    o1 = order[first]
    o2 = order[~first]
    edge_elements[inverse[o1], 0] = elem_of[o1]
    edge_faces[inverse[o1], 0] = face_of[o1]
    edge_elements[inverse[o2], 1] = elem_of[o2]
    edge_faces[inverse[o2], 1] = face_of[o2]

    m = edge_elements[:, 0]
    fm = edge_faces[:, 0]
    va = a[m, fm]
    vb = a[m, (fm + 1) % 3]
    d = mesh.vertices[vb] - mesh.vertices[va]
    length = np.linalg.norm(d, axis=1)
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]

    element_edges = np.empty((K, 3), dtype=np.int64)
    element_edges[elem_of, face_of] = inverse
    neighbors = -np.ones((K, 3), dtype=np.int64)
    inner = edge_elements[:, 1] >= 0
    neighbors[edge_elements[inner, 0], edge_faces[inner, 0]] = edge_elements[inner, 1]
    neighbors[edge_elements[inner, 1], edge_faces[inner, 1]] = edge_elements[inner, 0]

    mesh.edge_vertices = np.column_stack([va, vb])
    mesh.edge_elements = edge_elements
    mesh.edge_faces = edge_faces
    mesh.edge_normals = normals
    mesh.edge_lengths = length
    mesh.element_edges = element_edges
    mesh.neighbors = neighbors

    if mesh.boundary_override is not None and len(mesh.boundary_override):
        lookup = {tuple(k): i for i, k in enumerate(uniq.tolist())}
        for pair in np.sort(mesh.boundary_override, axis=1).tolist():
            e = lookup.get(tuple(pair))
            if e is None:
                raise MeshError(f"boundary edge {tuple(pair)} is not an element edge")
            if edge_elements[e, 1] >= 0:
                raise MeshError(f"boundary edge {tuple(pair)} is shared by two elements")
    return mesh


# generation -----------------------------------------------------------------

def generate_structured(m: int, box=(-1.0, 1.0, -1.0, 1.0)) -> Mesh:
    """m x m squares, each cut along its lower-left to upper-right diagonal."""
    if m < 1:
        raise MeshError("need at least one subdivision per axis")
    a, b, c, d = (float(v) for v in box)
    if not (b > a and d > c):
        raise MeshError(f"degenerate box {box}")
    xs = np.linspace(a, b, m + 1)
    ys = np.linspace(c, d, m + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(m), np.arange(m))
    v00 = (j * (m + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + m + 1
    v11 = v01 + 1
    tris = np.empty((2 * m * m, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])
    return Mesh(verts, tris)


SQUARE = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
LSHAPE = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 0.0], [0.0, 0.0],
                   [0.0, 1.0], [-1.0, 1.0]])


def polygon_area(poly) -> float:
    x, y = np.asarray(poly, float).T
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _inside_polygon(pts, poly) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    n = len(poly)
    for k in range(n):
        (x1, y1), (x2, y2) = poly[k], poly[(k + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xc)
    return inside


def _distance_to_polygon(pts, poly) -> np.ndarray:
    dist = np.full(len(pts), np.inf)
    n = len(poly)
    for k in range(n):
        p, q = np.asarray(poly[k]), np.asarray(poly[(k + 1) % n])
        d = q - p
        t = np.clip(((pts - p) @ d) / (d @ d), 0.0, 1.0)
        dist = np.minimum(dist, np.linalg.norm(pts - (p + t[:, None] * d), axis=1))
    return dist


def _smooth(pts, tri, fixed: int, sweeps: int) -> np.ndarray:
    """Laplacian smoothing of the points after the first ``fixed`` ones."""
    edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    n = len(pts)
    deg = np.bincount(edges.ravel(), minlength=n).astype(float)
    for _ in range(sweeps):
        acc = np.zeros_like(pts)
        np.add.at(acc, edges[:, 0], pts[edges[:, 1]])
        np.add.at(acc, edges[:, 1], pts[edges[:, 0]])
        new = acc / deg[:, None]
        pts = np.concatenate([pts[:fixed], new[fixed:]])
    return pts


def _delaunay_mesh(poly, h: float, rng: np.random.Generator, jitter: float,
                   smooth: int = 0) -> Mesh:
    from scipy.spatial import Delaunay

    poly = np.asarray(poly, float)
    bpts = []
    for k in range(len(poly)):
        p, q = poly[k], poly[(k + 1) % len(poly)]
        n = max(1, int(round(np.linalg.norm(q - p) / h)))
        t = np.arange(n) / n
        bpts.append(p + t[:, None] * (q - p))
    bpts = np.concatenate(bpts)
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    dy = h * math.sqrt(3) / 2
    rows = np.arange(lo[1], hi[1] + dy, dy)
    ipts = []
    for r, y in enumerate(rows):
        xs = np.arange(lo[0] + (0.5 * h if r % 2 else 0.0), hi[0] + h, h)
        ipts.append(np.column_stack([xs, np.full_like(xs, y)]))
    ipts = np.concatenate(ipts)
    ipts = ipts + rng.uniform(-jitter * h, jitter * h, size=ipts.shape)
    keep = _inside_polygon(ipts, poly) & (_distance_to_polygon(ipts, poly) >= 0.6 * h)
    pts = np.concatenate([bpts, ipts[keep]])
    tri = Delaunay(pts).simplices
    cen = pts[tri].mean(axis=1)
    tri = tri[_inside_polygon(cen, poly)]
    if smooth:
        moved = _smooth(pts, tri, len(bpts), smooth)
        a, b, c = (moved[tri[:, i]] for i in range(3))
        area = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        if np.all(area > 0) or np.all(area < 0):
            pts = moved
    mesh = Mesh(pts, tri)
    if abs(mesh.areas.sum() - abs(polygon_area(poly))) > 1e-10 * abs(polygon_area(poly)):
        raise MeshError("generated triangulation does not cover the domain")
    return mesh


def generate_unstructured(target_k: int, domain: str = "square", seed: int = 0,
                          jitter: float = 0.15, smooth: int = 3) -> Mesh:
    """Jittered-lattice Delaunay mesh with roughly ``target_k`` triangles.

    Boundary segments are sampled at the lattice spacing and interior points
    stay at least 0.6 h from the boundary, so every boundary segment is a
    Gabriel edge and the triangulation conforms to the polygon. A few
    Laplacian smoothing sweeps then even out the element shapes, which keeps
    error constants comparable across a refinement sequence.
    """
    poly = {"square": SQUARE, "lshape": LSHAPE}[domain]
    area = abs(polygon_area(poly))
    h0 = math.sqrt(area / (target_k * math.sqrt(3) / 4))
    best = None
    for scale in np.linspace(0.8, 1.25, 19):
        mesh = _delaunay_mesh(poly, h0 * scale, np.random.default_rng(seed), jitter, smooth)
        if best is None or abs(mesh.K - target_k) < abs(best.K - target_k):
            best = mesh
    return best


def generate_lshape(m: int) -> Mesh:
    """Structured L-shape: the (-1,1)^2 grid of ``generate_structured(2m)``
    with the upper-right quadrant removed."""
    full = generate_structured(2 * m)
    cen = full.centroids
    keep = ~((cen[:, 0] > 0) & (cen[:, 1] > 0))
    used, tris = np.unique(full.elements[keep], return_inverse=True)
    return Mesh(full.vertices[used], tris.reshape(-1, 3))


# file input -------------------------------------------------------------------

def load_mesh(path) -> Mesh:
    """Read the plain ``V K`` text layout or a gmsh ``$MeshFormat 2.2`` file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"file not found: {path}")
    lines = path.read_text().splitlines()
    first = next((ln.strip() for ln in lines if ln.strip()), "")
    if first.startswith("$MeshFormat"):
        return _load_gmsh(lines, path)
    return _load_plain(lines, path)


def _parse_error(path, lineno, msg):
    return MeshError(f"{path}:{lineno}: {msg}")


def _load_plain(lines, path) -> Mesh:
    rows = [(i + 1, ln.split()) for i, ln in enumerate(lines)
            if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise MeshError(f"{path}: empty mesh file")
    lineno, head = rows[0]
    try:
        V, K = int(head[0]), int(head[1])
    except (ValueError, IndexError):
        raise _parse_error(path, lineno, "expected header 'V K'") from None
    if len(rows) < 1 + V + K:
        raise _parse_error(path, rows[-1][0], f"expected {V} vertices and {K} elements")
    verts = np.full((V, 2), np.nan)
    seen = set()
    for lineno, tok in rows[1:1 + V]:
        try:
            vid, x, y = int(tok[0]), float(tok[1]), float(tok[2])
        except (ValueError, IndexError):
            raise _parse_error(path, lineno, "expected 'id x y'") from None
        if vid in seen:
            raise _parse_error(path, lineno, f"duplicate vertex id {vid}")
        if not 0 <= vid < V:
            raise _parse_error(path, lineno, f"vertex id {vid} out of range")
        seen.add(vid)
        verts[vid] = (x, y)
    tris = np.empty((K, 3), dtype=np.int64)
    for lineno, tok in rows[1 + V:1 + V + K]:
        try:
            eid, v = int(tok[0]), [int(t) for t in tok[1:4]]
        except (ValueError, IndexError):
            raise _parse_error(path, lineno, "expected 'id v0 v1 v2'") from None
        if len(v) != 3:
            raise _parse_error(path, lineno, "expected 'id v0 v1 v2'")
        if not 0 <= eid < K:
            raise _parse_error(path, lineno, f"element id {eid} out of range")
        for vi in v:
            if vi not in seen:
                raise _parse_error(path, lineno, f"element {eid} references missing vertex {vi}")
        tris[eid] = v
    override = []
    for lineno, tok in rows[1 + V + K:]:
        if tok[0] != "boundary" or len(tok) != 3:
            raise _parse_error(path, lineno, "expected 'boundary a b'")
        try:
            override.append((int(tok[1]), int(tok[2])))
        except ValueError:
            raise _parse_error(path, lineno, "expected 'boundary a b'") from None
    return Mesh(verts, tris, np.array(override, dtype=np.int64).reshape(-1, 2))


def _load_gmsh(lines, path) -> Mesh:
    def section(name):
        for i, ln in enumerate(lines):
            if ln.strip() == f"${name}":
                return i
        raise MeshError(f"{path}: missing ${name} section")

    i = section("Nodes")
    n = int(lines[i + 1])
    ids = {}
    verts = np.empty((n, 2))
    for k in range(n):
        tok = lines[i + 2 + k].split()
        try:
            nid = int(tok[0])
            verts[k] = float(tok[1]), float(tok[2])
        except (ValueError, IndexError):
            raise _parse_error(path, i + 3 + k, "bad node line") from None
        if nid in ids:
            raise _parse_error(path, i + 3 + k, f"duplicate vertex id {nid}")
        ids[nid] = k
    i = section("Elements")
    n = int(lines[i + 1])
    tris = []
    for k in range(n):
        tok = lines[i + 2 + k].split()
        try:
            etype, ntags = int(tok[1]), int(tok[2])
        except (ValueError, IndexError):
            raise _parse_error(path, i + 3 + k, "bad element line") from None
        if etype != 2:
            continue
        nodes = tok[3 + ntags:6 + ntags]
        try:
            tris.append([ids[int(t)] for t in nodes])
        except KeyError as exc:
            raise _parse_error(path, i + 3 + k, f"element references missing vertex {exc}") from None
    if not tris:
        raise MeshError(f"{path}: no 3-node triangles")
    used, tri = np.unique(np.array(tris), return_inverse=True)
    return Mesh(verts[used], tri.reshape(-1, 3))


def save_mesh(mesh: Mesh, path) -> None:
    lines = [f"{len(mesh.vertices)} {mesh.K}"]
    lines += [f"{i} {x:.17g} {y:.17g}" for i, (x, y) in enumerate(mesh.vertices)]
    lines += [f"{k} {a} {b} {c}" for k, (a, b, c) in enumerate(mesh.elements)]
    Path(path).write_text("\n".join(lines) + "\n")


# point location ---------------------------------------------------------------

def barycentric(mesh: Mesh, points) -> np.ndarray:
    """(P, K, 3) barycentric coordinates of every point in every element."""
    pts = np.atleast_2d(np.asarray(points, float))
    p = mesh.corners
    jac = 2.0 * mesh.jacobians
    inv = np.linalg.inv(jac)
    rel = pts[:, None, :] - p[None, :, 0, :]
    lam12 = np.einsum("kij,pkj->pki", inv, rel)
    return np.concatenate([1 - lam12.sum(axis=2, keepdims=True), lam12], axis=2)


def locate_points(mesh: Mesh, points, tol: float | None = None) -> np.ndarray:
    """Element index containing each point (-1 when outside the mesh)."""
    pts = np.atleast_2d(np.asarray(points, float))
    tol = GEOM_TOL * mesh.extent if tol is None else tol
    out = -np.ones(len(pts), dtype=np.int64)
    chunk = max(1, 400_000 // mesh.K)
    for s in range(0, len(pts), chunk):
        lam = barycentric(mesh, pts[s:s + chunk])
        score = lam.min(axis=2)
        best = score.argmax(axis=1)
        ok = score[np.arange(len(best)), best] >= -tol * 10
        out[s:s + chunk] = np.where(ok, best, -1)
    return out
