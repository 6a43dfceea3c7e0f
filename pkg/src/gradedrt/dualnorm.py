"""Discrete H^{-1/2} norms: sup over continuous piecewise-linear test functions
v of (f, v) / ||v||_{H^{1/2}}, evaluated as sqrt(F^T G^{-1} F).

Two Gram matrices are available.

* Slobodeckij: G = L2 mass + the double-integral seminorm, on a uniform
  dyadic grid of a region (reference square or triangle, or an affine image).
  Element pairs are translation invariant on the grid, so each
  (type, type, offset) configuration is integrated once: identical pairs by
  the relative-coordinate formula, touching pairs by recursive subdivision,
  separated pairs by tensor Gauss rules.
* Spectral: the interpolation norm [L2, H1]_{1/2} of the discrete space, from
  the generalized eigenproblem (K + M) phi = mu M phi.  Works on any
  triangulation, including graded meshes.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .mesh import PARALLELOGRAM, TRIANGLE, cross2
from .quadrature import composite, rule_1d, triangle_rule, gauss


@dataclass(frozen=True)
class DualNormSpec:
    """Refinement level m of the uniform test grid (2^m cells per side)."""

    m: int = 4
    near_depth: int = 4
    quad: int = 4

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError("m must be >= 1")


# ------------------------------------------------------------ P1 geometry

# lower cell triangle {(0,0),(1,0),(1,1)} and upper {(0,0),(1,1),(0,1)}
_CELL_TRIS = (
    np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]),
    np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
)


@dataclass(frozen=True, eq=False)
class GridSpace:
    """P1 space on the uniform grid of a region (reference coordinates)."""

    n: int
    kind: int
    nodes: np.ndarray        # (nnodes, 2) reference coordinates
    tris: np.ndarray         # (ntri, 3) node indices
    ttype: np.ndarray        # 0 lower, 1 upper
    cell: np.ndarray         # (ntri, 2) cell indices
    node_id: dict
    index: np.ndarray        # (n+1, n+1) grid -> node id, -1 outside


def grid_space(kind, m):
    n = 2**m
    node_id = {}
    nodes = []
    for j in range(n + 1):
        for i in range(n + 1):
            if kind == TRIANGLE and j > i:
                continue
            node_id[(i, j)] = len(nodes)
            nodes.append((i / n, j / n))
    tris, ttype, cell = [], [], []
    for j in range(n):
        for i in range(n):
            for t in (0, 1):
                if kind == TRIANGLE and (i < j or (i == j and t == 1)):
                    continue
                loc = _CELL_TRIS[t].astype(int)
                tris.append([node_id[(i + a, j + b)] for a, b in loc])
                ttype.append(t)
                cell.append((i, j))
    index = -np.ones((n + 1, n + 1), dtype=np.int64)
    for (i, j), v in node_id.items():
        index[i, j] = v
    return GridSpace(n, kind, np.array(nodes), np.array(tris), np.array(ttype),
                     np.array(cell), node_id, index)


def _p1_basis(tri, x):
    """Barycentric coordinates of points x (..., 2) in triangle tri (3, 2)."""
    p0, p1, p2 = tri
    T = np.column_stack([p1 - p0, p2 - p0])
    lam12 = np.linalg.solve(T, (x - p0).reshape(-1, 2).T).T.reshape(x.shape)
    return np.concatenate([1.0 - lam12.sum(-1, keepdims=True), lam12], axis=-1)


def _tri_rule(q):
    return triangle_rule(gauss(q), gauss(q))


def _map_rule(tri, xh, wh):
    """Map the reference-triangle rule onto a physical triangle."""
    p0, p1, p2 = tri[..., 0, :], tri[..., 1, :], tri[..., 2, :]
    # reference triangle (0,0),(1,0),(1,1): x = p0 + xh1 (p1 - p0) + xh2 (p2 - p1)
    pts = (p0[..., None, :] + xh[:, 0, None] * (p1 - p0)[..., None, :]
           + xh[:, 1, None] * (p2 - p1)[..., None, :])
    det = np.abs(cross2(p1 - p0, p2 - p0))
    return pts, wh * det[..., None]


def _children(tri):
    a, b, c = tri
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return [np.array([a, ab, ca]), np.array([ab, b, bc]), np.array([ca, bc, c]),
            np.array([bc, ca, ab])]


def _touch(t1, t2, tol=1e-12):
    d = np.linalg.norm(t1[:, None, :] - t2[None, :, :], axis=-1)
    return bool(np.any(d < tol))


# ------------------------------------------------------------ pair integrals

def _kernel(A, detA2, s):
    def k(z):
        Az = z @ A.T
        return detA2 * np.sum(Az**2, axis=-1) ** (-(1.0 + s))
    return k


def _self_moment(A, s, n_u=24, n_v=24):
    """Mh = int_{T - T} z z^T |A z|^{-2-2s} |T cap (T - z)| dz for the reference
    triangle T; the overlap area is sigma(z)^2 / 2 (homothetic triangle)."""
    from .norms import _overlap, _sector_ring
    u, wu = composite(n_u, [0.0, 0.5, 1.0])
    v, wv = composite(n_v, [0.0, 0.5, 1.0])
    M = np.zeros((2, 2))
    for P, Q in _sector_ring(TRIANGLE):
        jac = abs(P[0] * Q[1] - P[1] * Q[0])
        U, V = np.meshgrid(u, v, indexing="ij")
        W = np.outer(wu, wv) * U * jac
        Z = U[..., None] * (P + V[..., None] * (Q - P))
        _, S = _overlap(TRIANGLE, Z)
        area = 0.5 * S[..., 0] ** 2
        Az = Z @ A.T
        ker = np.sum(Az**2, axis=-1) ** (-(1.0 + s))
        M += np.einsum("uv,uvi,uvj->ij", W * ker * area, Z, Z)
    return M


def _pair_matrix(K, Kp, k, depth, q):
    """int_K int_Kp D D^T k(x - y) for the merged P1 hats of two triangles,
    D_a(x, y) = phi_a(x) - phi_a(y).  Returns (node coords, matrix)."""
    nodes = [tuple(p) for p in K]
    for p in Kp:
        if not any(np.allclose(p, r, atol=1e-13) for r in nodes):
            nodes.append(tuple(p))
    nodes = np.array(nodes)
    iK = [int(np.argmin(np.linalg.norm(nodes - p, axis=1))) for p in K]
    iKp = [int(np.argmin(np.linalg.norm(nodes - p, axis=1))) for p in Kp]
    nn = len(nodes)
    xh, wh = _tri_rule(q)
    C = np.zeros((nn, nn))
    work = [(K, Kp)]
    for level in range(depth + 1):
        batch, nxt = [], []
        for a, b in work:
            if level < depth and _touch(a, b):
                for ca in _children(a):
                    for cb in _children(b):
                        nxt.append((ca, cb))
            else:
                batch.append((a, b))
        if batch:
            TA = np.array([p[0] for p in batch])
            TB = np.array([p[1] for p in batch])
            X, WX = _map_rule(TA, xh, wh)
            Y, WY = _map_rule(TB, xh, wh)
            lx = _p1_basis(K, X)           # (nb, qx, 3)
            ly = _p1_basis(Kp, Y)
            Dx = np.zeros(X.shape[:2] + (nn,))
            Dy = np.zeros(Y.shape[:2] + (nn,))
            Dx[..., iK] = lx
            Dy[..., iKp] = ly
            ker = k(X[:, :, None, :] - Y[:, None, :, :])
            W = WX[:, :, None] * WY[:, None, :] * ker
            D = Dx[:, :, None, :] - Dy[:, None, :, :]
            C += np.einsum("bxy,bxya,bxyc->ac", W, D, D)
        work = nxt
    return nodes, C


def _far_pair_matrices(K0, Kps, k, q):
    """Vectorized separated-pair matrices; K0 (3,2) and Kps (npairs, 3, 2).
    Node order: K's three vertices then Kp's three vertices."""
    xh, wh = _tri_rule(q)
    X, WX = _map_rule(K0, xh, wh)
    Y, WY = _map_rule(Kps, xh, wh)
    lx = _p1_basis(K0, X)                              # (qx, 3)
    ly = np.stack([_p1_basis(T, y) for T, y in zip(Kps, Y)])  # (np, qy, 3)
    ker = k(X[None, :, None, :] - Y[:, None, :, :])    # (np, qx, qy)
    W = WX[None, :, None] * WY[:, None, :] * ker
    D = np.concatenate([np.broadcast_to(lx[None, :, None, :], W.shape + (3,)),
                        -np.broadcast_to(ly[:, None, :, :], W.shape + (3,))], axis=-1)
    return np.einsum("pxy,pxya,pxyc->pac", W, D, D)


# ------------------------------------------------------------ Gram matrices

def _p1_assemble(tris, loc, n):
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    return sparse.coo_matrix((loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _p1_mass_sparse(nodes, tris):
    P = nodes[tris]
    area = 0.5 * np.abs(cross2(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]))
    loc = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _p1_assemble(tris, area[:, None, None] * loc, len(nodes))


def _p1_stiffness_sparse(nodes, tris):
    P = nodes[tris]
    d1, d2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    det = cross2(d1, d2)
    area = 0.5 * np.abs(det)
    # gradients of barycentric coordinates
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    G = np.stack([-g1 - g2, g1, g2], axis=1)
    return _p1_assemble(tris, area[:, None, None] * np.einsum("tad,tbd->tab", G, G), len(nodes))


def _p1_mass(nodes, tris):
    return _p1_mass_sparse(nodes, tris).toarray()


def _p1_stiffness(nodes, tris):
    return _p1_stiffness_sparse(nodes, tris).toarray()


def slobodeckij_gram(region, spec=DualNormSpec(), s=0.5):
    """(space, G) with G = mass + Slobodeckij seminorm Gram of the grid P1 space
    on the region, in physical scaling."""
    sp = grid_space(region.kind, spec.m)
    n = sp.n
    h = 1.0 / n
    A = region.A
    detA = abs(np.linalg.det(A))
    k = _kernel(A, detA**2, s)
    nn = len(sp.nodes)
    S = np.zeros((nn, nn))

    # identical pairs: D = grad(phi) . z, integrand linear-quadratic
    Mh = _self_moment(A, s) * detA**2
    # triangle of size h: z = h zh, |T_h cap (T_h - z)| = h^2 area(zh)
    scale = h ** (2 - 2 - 2 * s + 2 + 2)  # z z^T h^2, kernel h^{-2-2s}, area h^2, dz h^2
    for t in (0, 1):
        tri = _CELL_TRIS[t] * h
        # upper triangles are point reflections of lower ones; the moment is even in z
        lam_grad = np.linalg.inv(np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])).T
        grads = np.vstack([-lam_grad.sum(axis=1), lam_grad[:, 0], lam_grad[:, 1]])
        if t == 0:
            Mt = Mh
        else:
            # U = (1,1) - T in cell units: overlap areas agree under z -> -z
            Mt = Mh
        loc = grads @ Mt @ grads.T * scale
        sel = sp.ttype == t
        for a in range(3):
            for b in range(3):
                np.add.at(S, (sp.tris[sel, a], sp.tris[sel, b]), loc[a, b])

    # other pairs, grouped by (type, type', cell offset)
    by_cell = {}
    for e, (c, t) in enumerate(zip(map(tuple, sp.cell), sp.ttype)):
        by_cell[(c, int(t))] = e
    far_cfgs = {}
    for t in (0, 1):
        for tp in (0, 1):
            for di in range(-(n - 1), n):
                for dj in range(-(n - 1), n):
                    if di == 0 and dj == 0 and t == tp:
                        continue
                    K = _CELL_TRIS[t] * h
                    Kp = (_CELL_TRIS[tp] + np.array([di, dj])) * h
                    key = (t, tp, di, dj)
                    if _touch(K, Kp):
                        nodes, C = _pair_matrix(K, Kp, k, spec.near_depth, spec.quad)
                        _scatter(S, sp, key, nodes, C, h)
                    else:
                        near = max(abs(di), abs(dj)) <= 2
                        far_cfgs.setdefault(near, []).append((key, Kp))
    for near, cfgs in far_cfgs.items():
        q = spec.quad + 2 if near else spec.quad
        K0 = None
        for start in range(0, len(cfgs), 512):
            chunk = cfgs[start:start + 512]
            groups = {}
            for key, Kp in chunk:
                groups.setdefault(key[0], []).append((key, Kp))
            for t, items in groups.items():
                K0 = _CELL_TRIS[t] * h
                Cs = _far_pair_matrices(K0, np.array([Kp for _, Kp in items]), k, q)
                for (key, Kp), C in zip(items, Cs):
                    nodes = np.vstack([K0, Kp])
                    _scatter(S, sp, key, nodes, C, h)
    M = _p1_mass(sp.nodes, sp.tris) * detA
    S = 0.5 * (S + S.T)
    return sp, M + S, M, S


def _scatter(S, sp, key, nodes, C, h):
    """Add C to S for every grid pair realizing configuration key."""
    t, tp, di, dj = key
    n = sp.n
    cells = sp.cell[sp.ttype == t]
    ci, cj = cells[:, 0], cells[:, 1]
    ti, tj = ci + di, cj + dj
    ok = (ti >= 0) & (ti < n) & (tj >= 0) & (tj < n)
    if sp.kind == TRIANGLE:
        ok &= (ti > tj) | ((ti == tj) & (tp == 0))
    ci, cj = ci[ok], cj[ok]
    if len(ci) == 0:
        return
    off = np.rint(nodes / h).astype(int)
    ids = np.empty((len(ci), len(nodes)), dtype=np.int64)
    for a, (oi, oj) in enumerate(off):
        ids[:, a] = sp.index[ci + oi, cj + oj]
    rows = np.repeat(ids, len(nodes), axis=1).ravel()
    cols = np.tile(ids, (1, len(nodes))).ravel()
    vals = np.tile(C.ravel(), len(ci))
    np.add.at(S, (rows, cols), vals)


def grid_load(f, region, sp, q=6):
    """F_a = int_region f phi_a for the grid space (f a scalar callable)."""
    xh, wh = _tri_rule(q)
    tri = sp.nodes[sp.tris]
    X, W = _map_rule(tri, xh, wh)                   # reference coords
    Xp = X @ region.A.T + region.b
    fv = f(Xp[..., 0], Xp[..., 1]) * W * abs(np.linalg.det(region.A))
    lam = _bary(tri, X)
    F = np.zeros(len(sp.nodes))
    for a in range(3):
        np.add.at(F, sp.tris[:, a], np.sum(fv * lam[..., a], axis=1))
    return F


def _bary(tri, X):
    p0 = tri[:, 0, :]
    T = np.stack([tri[:, 1] - p0, tri[:, 2] - p0], axis=2)   # (nt, 2, 2)
    Tinv = np.linalg.inv(T)
    lam = np.einsum("tij,tpj->tpi", Tinv, X - p0[:, None, :])
    return np.concatenate([1.0 - lam.sum(-1, keepdims=True), lam], axis=-1)


def dual_from_gram(F, G):
    """sqrt(F^T G^{-1} F) via Cholesky; a singular Gram matrix is rejected."""
    try:
        c = linalg.cho_factor(G)
    except linalg.LinAlgError as exc:
        raise ValueError("Gram matrix is not positive definite") from exc
    return float(np.sqrt(max(F @ linalg.cho_solve(c, F), 0.0)))


def discrete_dual_half_norm(f, region, spec=DualNormSpec(), gram=None):
    """sup_{v in V_m} (f, v) / ||v||_{H^{1/2}} with the Slobodeckij Gram."""
    if not callable(f):
        c = float(f)
        f = lambda x1, x2, c=c: np.full(np.broadcast(np.asarray(x1), np.asarray(x2)).shape, c)
    if gram is None:
        sp, G, _, _ = slobodeckij_gram(region, spec)
    else:
        sp, G = gram
    F = grid_load(f, region, sp)
    if not np.any(F):
        return 0.0
    return dual_from_gram(F, G)


# ------------------------------------------------------- spectral route

@dataclass(frozen=True, eq=False)
class SpectralDual:
    """Eigen-decomposition of a P1 space for the interpolation H^{1/2} norm."""

    nodes: np.ndarray
    tris: np.ndarray
    phi: np.ndarray
    mu: np.ndarray

    def norm(self, F):
        c = self.phi.T @ F
        return float(np.sqrt(np.sum(c**2 / np.sqrt(self.mu))))

    def gram(self, M):
        Mp = M @ self.phi
        return Mp @ np.diag(np.sqrt(self.mu)) @ Mp.T


def spectral_dual(nodes, tris):
    M = _p1_mass(nodes, tris)
    K = _p1_stiffness(nodes, tris)
    mu, phi = linalg.eigh(K + M, M)
    return SpectralDual(nodes, tris, phi, mu)


def load_vector(f, nodes, tris, q=6):
    """F_a = int f phi_a on an arbitrary triangulation (f scalar callable)."""
    xh, wh = _tri_rule(q)
    tri = nodes[tris]
    X, W = _map_rule(tri, xh, wh)
    fv = f(X[..., 0], X[..., 1]) * W
    lam = _bary(tri, X)
    F = np.zeros(len(nodes))
    for a in range(3):
        np.add.at(F, tris[:, a], np.sum(fv * lam[..., a], axis=1))
    return F


def triangulate_mesh(mesh, refine=0):
    """P1 triangulation of a hybrid mesh: parallelograms split along v0-v2,
    optionally red-refined `refine` times."""
    tris = []
    for k in range(mesh.n_elements):
        c = mesh.conn[k]
        if mesh.kind[k] == TRIANGLE:
            tris.append(c[:3])
        else:
            tris.append([c[0], c[1], c[2]])
            tris.append([c[0], c[2], c[3]])
    nodes = np.array(mesh.vertices, dtype=float)
    tris = np.array(tris)
    for _ in range(refine):
        nodes, tris = _red_refine(nodes, tris)
    return nodes, tris


def _red_refine(nodes, tris):
    edges = np.sort(np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.ravel()
    nt = len(tris)
    mid = len(nodes) + inv
    m01, m12, m20 = mid[:nt], mid[nt:2 * nt], mid[2 * nt:]
    new_nodes = np.vstack([nodes, 0.5 * (nodes[uniq[:, 0]] + nodes[uniq[:, 1]])])
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    new_tris = np.vstack([
        np.column_stack([a, m01, m20]), np.column_stack([m01, b, m12]),
        np.column_stack([m20, m12, c]), np.column_stack([m01, m12, m20]),
    ])
    return new_nodes, new_tris


def spectral_dual_half_norm(f, region, m=4):
    """Dual norm on the same uniform grid space with the spectral Gram (oracle
    route for the Slobodeckij construction)."""
    sp = grid_space(region.kind, m)
    nodes = sp.nodes @ region.A.T + region.b
    sd = spectral_dual(nodes, sp.tris)
    if not callable(f):
        c = float(f)
        f = lambda x1, x2, c=c: np.full(np.broadcast(np.asarray(x1), np.asarray(x2)).shape, c)
    return sd.norm(load_vector(f, nodes, sp.tris))


@dataclass(frozen=True, eq=False)
class SincSpectralDual:
    """Same interpolation dual norm as SpectralDual without an eigensolve.

    mu^{-1/2} = (2/pi) int_R e^y / (mu + e^{2y}) dy, so
    F^T Phi diag(mu^{-1/2}) Phi^T F = (2/pi) int_R e^y F^T (K + (1 + e^{2y}) M)^{-1} F dy,
    evaluated by the trapezoidal rule in y with sparse direct solves.
    """

    K: sparse.csr_matrix
    M: sparse.csr_matrix
    step: float = 0.5
    y_lo: float = -20.0
    y_hi: float = 20.0

    def norm_sq(self, F):
        F = np.asarray(F, float)
        F2 = F.reshape(len(F), -1)
        total = np.zeros(F2.shape[1])
        for y in np.arange(self.y_lo, self.y_hi + 0.5 * self.step, self.step):
            A = (self.K + (1.0 + np.exp(2 * y)) * self.M).tocsc()
            X = splinalg.splu(A).solve(F2)
            total += np.exp(y) * np.sum(F2 * X, axis=0)
        return (2.0 / np.pi) * self.step * total

    def norm(self, F):
        v = self.norm_sq(F)
        return float(np.sqrt(v[0])) if np.ndim(F) == 1 else np.sqrt(v)


def sinc_spectral_dual(nodes, tris, step=0.5, tail=1e-9):
    K = _p1_stiffness_sparse(nodes, tris)
    M = _p1_mass_sparse(nodes, tris)
    # elementwise bound: mu_max <= 1 + max_T trace(K_T) / lambda_min(M_T)
    P = nodes[tris]
    d1, d2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    area = 0.5 * np.abs(cross2(d1, d2))
    l2 = np.sum(d1**2, 1) + np.sum(d2**2, 1) + np.sum((d2 - d1)**2, 1)
    mu_max = 1.0 + np.max(3.0 * l2 / area**2)
    lo = np.log(tail)
    hi = -np.log(tail) + 0.5 * np.log(mu_max)
    return SincSpectralDual(K, M, step, lo, hi)
