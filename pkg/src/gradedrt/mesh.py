"""Graded hybrid triangle/parallelogram meshes.

Nodes of the graded 1D partition sit at (i/N)**beta.  The reference square
carries the tensor mesh, the reference triangle {0 < x2 < x1 < 1} carries
rectangles below the diagonal plus one small triangle per diagonal cell, and
a planar triangular face is split by the lines through its centroid parallel
to the sides into three parallelograms and three triangles carrying mapped
copies of those meshes.

Element convention: vertices are stored counter-clockwise.  A triangle with
vertices p0, p1, p2 is the image of T = conv{(0,0), (1,0), (1,1)} under
x = A xh + b with A = [p1 - p0, p2 - p1], b = p0; a parallelogram p0..p3 is
the image of the unit square with A = [p1 - p0, p3 - p0].  Local edge k runs
from vertex k to vertex k+1.  Global edges are oriented from the lower to
the higher vertex index, with the normal pointing to the right of that
direction.
"""
from dataclasses import dataclass, field
import hashlib
import io

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

TRIANGLE = 0
PARALLELOGRAM = 1
KIND_NAMES = {TRIANGLE: "triangle", PARALLELOGRAM: "parallelogram"}

REFERENCE_VERTICES = {
    TRIANGLE: np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]),
    PARALLELOGRAM: np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
}


@dataclass(frozen=True)
class GradingSpec:
    """Refinement level N and grading exponent beta; h = 1/N."""

    N: int
    beta: float

    def __post_init__(self):
        if isinstance(self.N, bool) or not isinstance(self.N, (int, np.integer)):
            raise ValueError(f"N must be an integer, got {self.N!r}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if not np.isfinite(self.beta) or self.beta < 1.0:
            raise ValueError(f"beta must be >= 1, got {self.beta}")

    @property
    def h(self):
        return 1.0 / self.N


@dataclass(frozen=True)
class FaceGeometry:
    """Planar triangular face in R^3; orientation -1 flips the normal."""

    vertices: tuple
    orientation: int = 1

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.shape != (3, 3):
            raise ValueError("a face needs exactly three points in R^3")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        scale = max(np.linalg.norm(v[1] - v[0]), np.linalg.norm(v[2] - v[0]))
        area2 = np.linalg.norm(np.cross(v[1] - v[0], v[2] - v[0]))
        if scale == 0.0 or area2 <= 1e-12 * scale**2:
            raise ValueError("degenerate face: vertices are collinear")

    def oriented_vertices(self):
        v = np.asarray(self.vertices, dtype=float)
        return v if self.orientation == 1 else v[[0, 2, 1]]

    def frame(self):
        """Origin and orthonormal in-plane frame (3x2) with CCW vertex order."""
        v = self.oriented_vertices()
        e1 = (v[1] - v[0]) / np.linalg.norm(v[1] - v[0])
        n = np.cross(v[1] - v[0], v[2] - v[0])
        n /= np.linalg.norm(n)
        e2 = np.cross(n, e1)
        return v[0].copy(), np.column_stack([e1, e2])

    def area(self):
        v = np.asarray(self.vertices, dtype=float)
        return 0.5 * np.linalg.norm(np.cross(v[1] - v[0], v[2] - v[0]))


@dataclass(frozen=True)
class Block:
    """Affine image x = A xh + b of the reference square or triangle."""

    kind: int
    A: np.ndarray
    b: np.ndarray


def cross2(a, b):
    """z-component of the cross product of planar vectors (last axis)."""
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class GradedMesh:
    vertices: np.ndarray
    kind: np.ndarray
    conn: np.ndarray
    A: np.ndarray
    b: np.ndarray
    det: np.ndarray
    edges: np.ndarray
    elem_edges: np.ndarray
    elem_signs: np.ndarray
    edge_elems: np.ndarray
    block: np.ndarray
    cell: np.ndarray
    blocks: tuple
    grading: GradingSpec
    domain: str
    boundary: np.ndarray
    face_id: int = 0
    embedding: tuple = None
    parent_groups: tuple = field(default=None)

    @property
    def n_elements(self):
        return len(self.kind)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def areas(self):
        return np.where(self.kind == TRIANGLE, 0.5, 1.0) * self.det

    @property
    def n_local(self):
        return np.where(self.kind == TRIANGLE, 3, 4)

    def element_vertices(self, k):
        c = self.conn[k]
        return self.vertices[c[c >= 0]]

    def map_points(self, k, xhat):
        xhat = np.atleast_2d(xhat)
        return xhat @ self.A[k].T + self.b[k]

    def edge_vectors(self):
        return self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]

    @property
    def edge_lengths(self):
        return np.linalg.norm(self.edge_vectors(), axis=1)

    @property
    def boundary_edge_mask(self):
        return self.edge_elems[:, 1] < 0

    @property
    def diameters(self):
        d = np.zeros(self.n_elements)
        for k in range(4):
            for j in range(k + 1, 4):
                ok = (self.conn[:, k] >= 0) & (self.conn[:, j] >= 0)
                pk = self.vertices[self.conn[:, k]]
                pj = self.vertices[self.conn[:, j]]
                dist = np.linalg.norm(pk - pj, axis=1)
                d = np.where(ok, np.maximum(d, dist), d)
        return d

    @property
    def perimeters(self):
        p = np.zeros(self.n_elements)
        for k in range(4):
            nxt = np.where(self.n_local == 3, (k + 1) % 3, (k + 1) % 4)
            ok = self.conn[:, k] >= 0
            a = self.vertices[self.conn[:, k]]
            b = self.vertices[self.conn[np.arange(self.n_elements), nxt]]
            p = np.where(ok, p + np.linalg.norm(b - a, axis=1), p)
        return p

    def to_3d(self, pts):
        if self.embedding is None:
            raise ValueError("mesh has no 3D embedding")
        origin, frame = self.embedding
        return origin + np.asarray(pts) @ frame.T

    def checksum(self):
        return hashlib.sha256(export_mesh_text(self).encode()).hexdigest()


def grade_points(spec):
    """Graded nodes (i/N)**beta, i = 0..N."""
    x = (np.arange(spec.N + 1) / spec.N) ** spec.beta
    x[0], x[-1] = 0.0, 1.0
    return x


# ---------------------------------------------------------------- assembly

def _merge_vertices(points, tol):
    tree = cKDTree(points)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    n = len(points)
    if len(pairs) == 0:
        labels = np.arange(n)
    else:
        g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, labels = connected_components(g, directed=False)
    # relabel by first occurrence so the numbering follows the input order
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(first)
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    new = rank[inv]
    verts = np.zeros((len(order), points.shape[1]))
    verts[new] = points  # duplicates carry coordinates equal to within tol
    verts[new[first[order]]] = points[first[order]]
    return verts, new


def _assemble(elem_pts, kind, block, cell, blocks, grading, domain, boundary,
              face_id=0, embedding=None, parent_groups=None):
    """Build a mesh from per-element vertex coordinates (ne x 4 x 2, NaN pad)."""
    elem_pts = np.asarray(elem_pts, dtype=float)
    kind = np.asarray(kind, dtype=np.int8)
    ne = len(kind)
    nloc = np.where(kind == TRIANGLE, 3, 4)

    # enforce counter-clockwise order
    p = elem_pts
    signed = cross2(p[:, 1] - p[:, 0], np.where((nloc == 3)[:, None], p[:, 2], p[:, 3]) - p[:, 0])
    flip = signed < 0
    if np.any(flip):
        p = p.copy()
        tri = flip & (nloc == 3)
        quad = flip & (nloc == 4)
        p[tri] = p[tri][:, [0, 2, 1, 3]]
        p[quad] = p[quad][:, [0, 3, 2, 1]]

    mask = np.arange(4)[None, :] < nloc[:, None]
    flat = p[mask]
    scale = np.ptp(flat, axis=0).max()
    verts, ids = _merge_vertices(flat, 1e-10 * scale)
    conn = -np.ones((ne, 4), dtype=np.int64)
    conn[mask] = ids

    P = verts[np.where(conn >= 0, conn, 0)]
    v0, v1, v2, v3 = P[:, 0], P[:, 1], P[:, 2], P[:, 3]
    col2 = np.where((nloc == 3)[:, None], v2 - v1, v3 - v0)
    A = np.stack([v1 - v0, col2], axis=2)
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    if np.any(det <= 0):
        raise ValueError("degenerate element produced during assembly")

    # local edges
    a_idx, b_idx, owner, loc = [], [], [], []
    for k in range(4):
        nxt = np.where(nloc == 3, (k + 1) % 3, (k + 1) % 4)
        ok = conn[:, k] >= 0
        a_idx.append(conn[ok, k])
        b_idx.append(conn[np.arange(ne)[ok], nxt[ok]])
        owner.append(np.arange(ne)[ok])
        loc.append(np.full(ok.sum(), k))
    a_idx, b_idx = np.concatenate(a_idx), np.concatenate(b_idx)
    owner, loc = np.concatenate(owner), np.concatenate(loc)
    pairs = np.column_stack([np.minimum(a_idx, b_idx), np.maximum(a_idx, b_idx)])
    edges, inv = np.unique(pairs, axis=0, return_inverse=True)
    inv = inv.ravel()
    elem_edges = -np.ones((ne, 4), dtype=np.int64)
    elem_signs = np.zeros((ne, 4), dtype=np.int8)
    elem_edges[owner, loc] = inv
    elem_signs[owner, loc] = np.where(a_idx < b_idx, 1, -1)

    counts = np.bincount(inv, minlength=len(edges))
    if counts.max() > 2:
        raise ValueError("non-conforming mesh: edge shared by more than two elements")
    edge_elems = -np.ones((len(edges), 2), dtype=np.int64)
    order = np.lexsort((owner, inv))
    inv_s, own_s = inv[order], owner[order]
    first = np.ones(len(inv_s), dtype=bool)
    first[1:] = inv_s[1:] != inv_s[:-1]
    edge_elems[inv_s[first], 0] = own_s[first]
    edge_elems[inv_s[~first], 1] = own_s[~first]

    return GradedMesh(
        vertices=_readonly(verts), kind=_readonly(kind), conn=_readonly(conn),
        A=_readonly(A), b=_readonly(v0.copy()), det=_readonly(det),
        edges=_readonly(edges), elem_edges=_readonly(elem_edges),
        elem_signs=_readonly(elem_signs), edge_elems=_readonly(edge_elems),
        block=_readonly(np.asarray(block, dtype=np.int64)),
        cell=_readonly(np.asarray(cell, dtype=np.int64).reshape(ne, 2)),
        blocks=tuple(blocks), grading=grading, domain=domain,
        boundary=_readonly(np.asarray(boundary, dtype=float)),
        face_id=face_id, embedding=embedding, parent_groups=parent_groups,
    )


# ------------------------------------------------------- reference cells

def _square_cells(x, y=None):
    """Reference-square cells of the tensor partition x (rows) by y."""
    y = x if y is None else y
    n1, n2 = len(x) - 1, len(y) - 1
    i, j = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    i, j = i.ravel(), j.ravel()
    pts = np.stack([
        np.column_stack([x[i], y[j]]),
        np.column_stack([x[i + 1], y[j]]),
        np.column_stack([x[i + 1], y[j + 1]]),
        np.column_stack([x[i], y[j + 1]]),
    ], axis=1)
    kind = np.full(len(i), PARALLELOGRAM)
    return pts, kind, np.column_stack([i, j])


def _triangle_cells(x):
    """Cells of the reference triangle: rectangles K_ij (i > j) and K_ii."""
    n = len(x) - 1
    ii, jj = np.tril_indices(n, -1)
    rect = np.stack([
        np.column_stack([x[ii], x[jj]]),
        np.column_stack([x[ii + 1], x[jj]]),
        np.column_stack([x[ii + 1], x[jj + 1]]),
        np.column_stack([x[ii], x[jj + 1]]),
    ], axis=1)
    d = np.arange(n)
    tri = np.stack([
        np.column_stack([x[d], x[d]]),
        np.column_stack([x[d + 1], x[d]]),
        np.column_stack([x[d + 1], x[d + 1]]),
        np.full((n, 2), np.nan),
    ], axis=1)
    pts = np.concatenate([rect, tri])
    kind = np.concatenate([np.full(len(ii), PARALLELOGRAM), np.full(n, TRIANGLE)])
    cell = np.concatenate([np.column_stack([ii, jj]), np.column_stack([d, d])])
    return pts, kind, cell


def _coarse_triangle_cells(x):
    """Like _triangle_cells but on a coarse partition x (same structure)."""
    return _triangle_cells(x)


def _apply(block, pts):
    out = pts @ block.A.T + block.b
    return out


SQUARE_BOUNDARY = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
TRIANGLE_BOUNDARY = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])


def build_reference_graded_square(spec):
    x = grade_points(spec)
    pts, kind, cell = _square_cells(x)
    blk = Block(PARALLELOGRAM, np.eye(2), np.zeros(2))
    return _assemble(pts, kind, np.zeros(len(kind)), cell, (blk,), spec,
                     "square", SQUARE_BOUNDARY)


def build_reference_graded_triangle(spec):
    x = grade_points(spec)
    pts, kind, cell = _triangle_cells(x)
    blk = Block(TRIANGLE, np.eye(2), np.zeros(2))
    return _assemble(pts, kind, np.zeros(len(kind)), cell, (blk,), spec,
                     "triangle", TRIANGLE_BOUNDARY)


def face_blocks(P, keys=None):
    """Six block maps of a CCW planar triangle P (3x2).

    keys orders the face vertices globally (default: 0, 1, 2); the triangle
    block on an edge starts at the third-point nearer the endpoint with the
    smaller key, so neighbouring faces agree on the edge grading.
    """
    P = np.asarray(P, dtype=float)
    keys = [0, 1, 2] if keys is None else list(keys)
    c = P.mean(axis=0)
    blocks = []
    for k in range(3):
        pk, p1, p2 = P[k], P[(k + 1) % 3], P[(k + 2) % 3]
        A = np.column_stack([(p1 - pk) / 3.0, (p2 - pk) / 3.0])
        blocks.append(Block(PARALLELOGRAM, A, pk.copy()))
    for k in range(3):
        i0, i1 = k, (k + 1) % 3
        if keys[i1] < keys[i0]:
            i0, i1 = i1, i0
        a0 = P[i0] + (P[i1] - P[i0]) / 3.0
        a1 = P[i0] + 2.0 * (P[i1] - P[i0]) / 3.0
        A = np.column_stack([a1 - a0, c - a1])
        blocks.append(Block(TRIANGLE, A, a0))
    return blocks


def _blocks_mesh(blocks, x, spec, domain, boundary, face_id=0, embedding=None,
                 groups=None):
    allpts, allkind, allblock, allcell = [], [], [], []
    sq = _square_cells(x)
    tr = _triangle_cells(x)
    for bi, blk in enumerate(blocks):
        pts, kind, cell = sq if blk.kind == PARALLELOGRAM else tr
        allpts.append(_apply(blk, pts))
        allkind.append(kind)
        allblock.append(np.full(len(kind), bi))
        allcell.append(cell)
    return _assemble(np.concatenate(allpts), np.concatenate(allkind),
                     np.concatenate(allblock), np.concatenate(allcell), blocks,
                     spec, domain, boundary, face_id, embedding, groups)


def build_graded_face_mesh(face, spec, face_id=0, vertex_keys=None):
    """Graded mesh on a planar triangular face, in face-local 2D coordinates.

    vertex_keys gives a global order of the three face vertices (used to make
    neighbouring faces conform); by default the lexicographic order of their
    3D coordinates.
    """
    if not isinstance(face, FaceGeometry):
        face = FaceGeometry(tuple(map(tuple, face)))
    origin, frame = face.frame()
    V = face.oriented_vertices()
    P = (V - origin) @ frame
    if vertex_keys is None:
        order = np.lexsort(V.T[::-1])
        keys = np.empty(3, dtype=int)
        keys[order] = np.arange(3)
    else:
        keys = np.asarray(vertex_keys)
        if face.orientation == -1:
            keys = keys[[0, 2, 1]]
    blocks = face_blocks(P, keys)
    return _blocks_mesh(blocks, grade_points(spec), spec, "face", P, face_id,
                        (origin, frame))


# ------------------------------------------------------------ conformity

def _on_boundary(points_a, points_b, boundary, tol):
    nb = len(boundary)
    on = np.zeros(len(points_a), dtype=bool)
    for k in range(nb):
        p, q = boundary[k], boundary[(k + 1) % nb]
        d = q - p
        L2 = d @ d

        def dist(x):
            t = np.clip(((x - p) @ d) / L2, 0.0, 1.0)
            return np.linalg.norm(x - (p + t[:, None] * d), axis=1)

        on |= (dist(points_a) < tol) & (dist(points_b) < tol)
    return on


def hanging_nodes(mesh, tol=1e-10):
    """Vertices lying strictly inside some edge (exhaustive KD-tree scan)."""
    V = mesh.vertices
    scale = np.ptp(V, axis=0).max()
    tol = tol * scale
    tree = cKDTree(V)
    a, b = V[mesh.edges[:, 0]], V[mesh.edges[:, 1]]
    mid, half = 0.5 * (a + b), 0.5 * np.linalg.norm(b - a, axis=1)
    found = []
    for e, cand in enumerate(tree.query_ball_point(mid, half + tol)):
        d = b[e] - a[e]
        L2 = d @ d
        for v in cand:
            if v in mesh.edges[e]:
                continue
            t = ((V[v] - a[e]) @ d) / L2
            if tol / scale < t < 1 - tol / scale:
                perp = abs(cross2(d, V[v] - a[e])) / np.sqrt(L2)
                if perp < tol:
                    found.append((int(v), e))
    return found


def is_conforming(mesh):
    """True if all single-element edges are on the domain boundary, no hanging
    nodes exist, and the element areas add up to the domain area."""
    V = mesh.vertices
    scale = np.ptp(V, axis=0).max()
    bd = mesh.boundary_edge_mask
    ea, eb = V[mesh.edges[bd, 0]], V[mesh.edges[bd, 1]]
    if not np.all(_on_boundary(ea, eb, mesh.boundary, 1e-10 * scale)):
        return False
    if hanging_nodes(mesh):
        return False
    return abs(mesh.areas.sum() - polygon_area(mesh.boundary)) <= 1e-12 * max(1.0, polygon_area(mesh.boundary))


def polygon_area(P):
    P = np.asarray(P)
    x, y = P[:, 0], P[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@dataclass(frozen=True)
class MeshQuality:
    h_max: float
    h_min: float
    max_aspect: float
    conforming: bool
    area: float
    n_elements: int

    def as_dict(self):
        return {
            "h_max": self.h_max, "h_min": self.h_min, "max_aspect": self.max_aspect,
            "conforming": self.conforming, "area": self.area, "n_elements": self.n_elements,
        }


def aspect_ratios(mesh):
    """diam / (2 * rho) with rho = 2 * area / perimeter (the inradius for triangles)."""
    rho = 2.0 * mesh.areas / mesh.perimeters
    return mesh.diameters / (2.0 * rho)


def mesh_quality_report(mesh):
    d = mesh.diameters
    return MeshQuality(float(d.max()), float(d.min()), float(aspect_ratios(mesh).max()),
                       bool(is_conforming(mesh)), float(mesh.areas.sum()), mesh.n_elements)


# ------------------------------------------------------------ coarsening

def group_intervals(x):
    """Group consecutive intervals of the partition x into patches of length
    comparable to the largest interval.  Returns the coarse node indices."""
    x = np.asarray(x)
    lengths = np.diff(x)
    target = lengths.max()
    idx = [0]
    acc = 0.0
    for i, L in enumerate(lengths):
        acc += L
        if acc >= target * (1 - 1e-12):
            idx.append(i + 1)
            acc = 0.0
    if idx[-1] != len(lengths):
        if len(idx) > 1:
            idx[-1] = len(lengths)
        else:
            idx.append(len(lengths))
    return np.array(idx)


@dataclass(frozen=True, eq=False)
class Coarsening:
    """Quasi-uniform patch mesh and the fine-to-coarse element map."""

    mesh: GradedMesh
    parent: np.ndarray
    groups: np.ndarray
    max_aspect: float


def coarsen_to_quasi_uniform(mesh):
    """Patch long thin graded cells into a shape-regular nested mesh.

    The graded intervals are grouped greedily from the refined end until each
    group is at least as long as the largest interval; the same grouping is
    applied in both directions of every block.
    """
    if mesh.blocks is None or len(mesh.blocks) == 0 or mesh.cell is None:
        raise ValueError("mesh carries no block tags; cannot coarsen")
    if mesh.parent_groups is not None:
        raise ValueError("mesh is already a patch mesh")
    x = grade_points(mesh.grading)
    gidx = group_intervals(x)
    xc = x[gidx]
    coarse = _blocks_mesh(mesh.blocks, xc, mesh.grading, mesh.domain, mesh.boundary,
                          mesh.face_id, mesh.embedding, tuple(gidx))
    # fine interval -> coarse group
    g_of = np.searchsorted(gidx, np.arange(len(x) - 1), side="right") - 1
    # coarse element lookup by (block, gi, gj)
    key = {}
    for k in range(coarse.n_elements):
        key[(int(coarse.block[k]), int(coarse.cell[k, 0]), int(coarse.cell[k, 1]))] = k
    parent = np.empty(mesh.n_elements, dtype=np.int64)
    for k in range(mesh.n_elements):
        gi, gj = g_of[mesh.cell[k, 0]], g_of[mesh.cell[k, 1]]
        parent[k] = key[(int(mesh.block[k]), int(gi), int(gj))]
    return Coarsening(coarse, _readonly(parent), _readonly(gidx),
                      float(aspect_ratios(coarse).max()))


# ------------------------------------------------------------ surfaces

@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Per-face graded meshes glued along shared face edges."""

    faces: tuple
    meshes: tuple
    points: np.ndarray          # global vertex coordinates in R^3
    local_to_global: tuple      # per face: local vertex -> global vertex
    edges: np.ndarray           # global edges (ascending global vertex ids)
    edge_map: tuple             # per face: local edge -> global edge
    edge_sign: tuple            # per face: +1 if local orientation matches global

    def edge_incidence(self):
        cnt = np.zeros(len(self.edges), dtype=int)
        for m, emap in zip(self.meshes, self.edge_map):
            for c in range(2):
                ok = m.edge_elems[:, c] >= 0
                np.add.at(cnt, emap[ok], 1)
        return cnt


def build_surface_mesh(faces, spec):
    faces = [f if isinstance(f, FaceGeometry) else FaceGeometry(tuple(map(tuple, f)))
             for f in faces]
    allv = np.concatenate([np.asarray(f.vertices, float) for f in faces])
    scale = np.ptp(allv, axis=0).max()
    corners, cid = _merge_vertices(allv, 1e-10 * scale)
    meshes, l2g = [], []
    pts3 = []
    for fi, f in enumerate(faces):
        keys = cid[3 * fi:3 * fi + 3]
        m = build_graded_face_mesh(f, spec, face_id=fi, vertex_keys=keys)
        meshes.append(m)
        pts3.append(m.to_3d(m.vertices))
    offs = np.cumsum([0] + [len(p) for p in pts3])
    gpts, gid = _merge_vertices(np.concatenate(pts3), 1e-10 * scale)
    edge_pairs = []
    for fi, m in enumerate(meshes):
        g = gid[offs[fi]:offs[fi + 1]]
        l2g.append(_readonly(g))
        ge = g[m.edges]
        edge_pairs.append(np.column_stack([ge.min(1), ge.max(1)]))
    allpairs = np.concatenate(edge_pairs)
    gedges, inv = np.unique(allpairs, axis=0, return_inverse=True)
    inv = inv.ravel()
    eoffs = np.cumsum([0] + [len(e) for e in edge_pairs])
    emaps, esigns = [], []
    for fi, m in enumerate(meshes):
        emap = inv[eoffs[fi]:eoffs[fi + 1]]
        g = l2g[fi]
        sign = np.where(g[m.edges[:, 0]] < g[m.edges[:, 1]], 1, -1)
        emaps.append(_readonly(emap))
        esigns.append(_readonly(sign.astype(np.int8)))
    return SurfaceMesh(tuple(faces), tuple(meshes), _readonly(gpts), tuple(l2g),
                       _readonly(gedges), tuple(emaps), tuple(esigns))


def cube_faces():
    """Twelve outward-oriented triangles covering the boundary of [0,1]^3."""
    c = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], float)
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    faces = []
    for a, b, cc, d in quads:
        faces.append(FaceGeometry((tuple(c[a]), tuple(c[b]), tuple(c[cc]))))
        faces.append(FaceGeometry((tuple(c[a]), tuple(c[cc]), tuple(c[d]))))
    return faces


# --------------------------------------------------------------- export

def export_mesh_text(mesh):
    out = io.StringIO()
    out.write("# gradedrt mesh v1\n")
    out.write(f"# N = {mesh.grading.N}\n# beta = {float(mesh.grading.beta)!r}\n")
    out.write(f"# face = {mesh.face_id}\n# domain = {mesh.domain}\n")
    out.write(f"vertices {mesh.n_vertices}\n")
    emb = mesh.embedding is not None
    P3 = mesh.to_3d(mesh.vertices) if emb else None
    for i, v in enumerate(mesh.vertices):
        line = f"v {i} {float(v[0])!r} {float(v[1])!r}"
        if emb:
            line += " " + " ".join(repr(float(t)) for t in P3[i])
        out.write(line + "\n")
    out.write(f"elements {mesh.n_elements}\n")
    for k in range(mesh.n_elements):
        c = mesh.conn[k][mesh.conn[k] >= 0]
        out.write(f"e {k} {KIND_NAMES[int(mesh.kind[k])]} " + " ".join(map(str, c))
                  + f" block {mesh.block[k]} cell {mesh.cell[k, 0]} {mesh.cell[k, 1]}\n")
    out.write(f"edges {mesh.n_edges}\n")
    for e in range(mesh.n_edges):
        a, b = mesh.edges[e]
        l, r = mesh.edge_elems[e]
        out.write(f"g {e} {a} {b} {l} {r}\n")
    return out.getvalue()


def write_mesh(mesh, path):
    with open(path, "w") as fh:
        fh.write(export_mesh_text(mesh))


def read_mesh_records(path_or_text):
    """Parse an exported mesh into plain arrays (vertices, elements, edges)."""
    text = path_or_text
    if "\n" not in text:
        with open(text) as fh:
            text = fh.read()
    header, verts, elems, edges = {}, [], [], []
    for line in text.splitlines():
        if line.startswith("# ") and " = " in line:
            k, v = line[2:].split(" = ", 1)
            header[k] = v
        elif line.startswith("v "):
            t = line.split()
            verts.append([float(t[2]), float(t[3])])
        elif line.startswith("e "):
            t = line.split()
            nv = 3 if t[2] == "triangle" else 4
            elems.append((t[2], [int(s) for s in t[3:3 + nv]]))
        elif line.startswith("g "):
            t = line.split()
            edges.append([int(s) for s in t[2:6]])
    return header, np.array(verts), elems, np.array(edges, dtype=int)
