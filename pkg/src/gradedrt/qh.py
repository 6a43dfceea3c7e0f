"""Per-face mixed projection Q_h.

Find z_h in RT0 with boundary fluxes equal to those of Pi_RT u and a
mean-zero piecewise constant f_h such that

    (z_h, v) + (div v, f_h) = (u, v)     for v with zero boundary flux,
    (div z_h, g)            = (div u, g) for mean-zero g.

The mean-zero condition is imposed with one scalar multiplier and the
boundary fluxes are eliminated, so the discrete equations hold exactly up to
the direct solver's rounding.
"""
from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .dualnorm import (DualNormSpec, _bary, _map_rule, _tri_rule, dual_from_gram, grid_space,
                       slobodeckij_gram, sinc_spectral_dual, spectral_dual, triangulate_mesh, _red_refine)
from .mesh import PARALLELOGRAM, TRIANGLE, is_conforming
from .norms import hdiv_error, l2_error, Region
from .quadrature import gauss
from .rt import (PWConstant, RTFunction, element_quadrature, integrate_scalar, interpolate_rt,
                 mapped_points, reference_coefficients, project_piecewise_constant)


@dataclass(frozen=True, eq=False)
class MixedSystem:
    mesh: object
    M: sparse.csr_matrix       # RT0 mass, edges x edges
    B: sparse.csr_matrix       # B[K, e] = int_K div phi_e = outward sign
    areas: np.ndarray          # mean-zero constraint weights
    boundary: np.ndarray       # boundary edge indices
    interior: np.ndarray       # interior edge indices


@dataclass(frozen=True, eq=False)
class MixedSolution:
    z: RTFunction
    f: PWConstant
    multiplier: float
    residual: float


def local_basis_values(mesh, elems, xh):
    """Piola values of the signed local bases: (len(elems), npts, 4, 2).

    Entry k is the field of global edge elem_edges[e, k] restricted to e.
    """
    out = np.zeros((len(elems), len(xh), 4, 2))
    for kind in (TRIANGLE, PARALLELOGRAM):
        sel = mesh.kind[elems] == kind
        if not np.any(sel):
            continue
        nloc = 3 if kind == TRIANGLE else 4
        a, b, c, d = reference_coefficients(kind, np.eye(nloc))
        uh1 = a[None, :] + c[None, :] * xh[:, 0, None]     # (npts, nloc)
        uh2 = b[None, :] + d[None, :] * xh[:, 1, None]
        E = elems[sel]
        A, det = mesh.A[E], mesh.det[E]
        sg = mesh.elem_signs[E, :nloc].astype(float)
        v1 = (A[:, 0, 0, None, None] * uh1 + A[:, 0, 1, None, None] * uh2) / det[:, None, None]
        v2 = (A[:, 1, 0, None, None] * uh1 + A[:, 1, 1, None, None] * uh2) / det[:, None, None]
        out[sel, :, :nloc, 0] = v1 * sg[:, None, :]
        out[sel, :, :nloc, 1] = v2 * sg[:, None, :]
    return out


def assemble_mixed_system(mesh, check=True):
    if check and not is_conforming(mesh):
        raise ValueError("mixed system needs a conforming mesh")
    rows, cols, vals = [], [], []
    for elems, xh, w in element_quadrature(mesh, 3):
        phi = local_basis_values(mesh, elems, xh)
        loc = np.einsum("epkd,epld,ep->ekl", phi, phi, w)
        ee = mesh.elem_edges[elems]
        for k in range(4):
            for l in range(4):
                ok = (ee[:, k] >= 0) & (ee[:, l] >= 0)
                rows.append(ee[ok, k])
                cols.append(ee[ok, l])
                vals.append(loc[ok, k, l])
    ne = mesh.n_edges
    M = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(ne, ne)).tocsr()
    M = (0.5 * (M + M.T)).tocsr()
    ok = mesh.elem_edges >= 0
    K = np.repeat(np.arange(mesh.n_elements)[:, None], 4, axis=1)
    B = sparse.coo_matrix((mesh.elem_signs[ok].astype(float), (K[ok], mesh.elem_edges[ok])),
                          shape=(mesh.n_elements, ne)).tocsr()
    bd = np.flatnonzero(mesh.boundary_edge_mask)
    it = np.flatnonzero(~mesh.boundary_edge_mask)
    return MixedSystem(mesh, M, B, mesh.areas.copy(), bd, it)


def rt_load(field, mesh, order=10, levels=20):
    """(u, phi_e) for every global edge."""
    L = np.zeros(mesh.n_edges)
    for elems, xh, w in element_quadrature(mesh, order, field.singular_lines, levels):
        X = mapped_points(mesh, elems, xh)
        u = field(X[..., 0], X[..., 1])
        phi = local_basis_values(mesh, elems, xh)
        loc = np.einsum("epd,epkd,ep->ek", u, phi, w)
        ee = mesh.elem_edges[elems]
        ok = ee >= 0
        np.add.at(L, ee[ok], loc[ok])
    return L


def solve_qh(field, mesh, system=None, boundary_flux=None, order=10):
    """Q_h u: returns the mixed solution (z_h, f_h)."""
    div = field.require_div()
    S = assemble_mixed_system(mesh) if system is None else system
    if boundary_flux is None:
        boundary_flux = interpolate_rt(field, mesh).coef
    zB = np.asarray(boundary_flux)[S.boundary]
    I, Bd = S.interior, S.boundary
    M, B = S.M, S.B
    L = rt_load(field, mesh, order)
    d = integrate_scalar(div, mesh, order, field.singular_lines)
    MII = M[I][:, I]
    BI = B[:, I]
    rhs1 = L[I] - M[I][:, Bd] @ zB
    rhs2 = d - B[:, Bd] @ zB
    a = sparse.csr_matrix(S.areas[:, None])
    nK = mesh.n_elements
    K = sparse.bmat([[MII, BI.T, None], [BI, None, a], [None, a.T, None]], format="csc")
    rhs = np.concatenate([rhs1, rhs2, [0.0]])
    sol = splinalg.spsolve(K, rhs)
    if not np.all(np.isfinite(sol)):
        raise np.linalg.LinAlgError("singular saddle-point system")
    res = np.linalg.norm(K @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
    z = np.zeros(mesh.n_edges)
    z[I] = sol[:len(I)]
    z[Bd] = zB
    f = sol[len(I):len(I) + nK]
    mu = float(sol[-1])
    return MixedSolution(RTFunction(mesh, z), PWConstant(mesh, f), mu, float(res))


def saddle_condition_number(mesh, system=None):
    S = assemble_mixed_system(mesh) if system is None else system
    I = S.interior
    MII = S.M[I][:, I].toarray()
    BI = S.B[:, I].toarray()
    a = S.areas[:, None]
    nK = mesh.n_elements
    K = np.block([[MII, BI.T, np.zeros((len(I), 1))],
                  [BI, np.zeros((nK, nK)), a],
                  [np.zeros((1, len(I))), a.T, np.zeros((1, 1))]])
    return float(np.linalg.cond(K))


def _hdiv_gram(S):
    I = S.interior
    MII = S.M[I][:, I].toarray()
    BI = S.B[:, I].toarray()
    H = MII + BI.T @ (BI / S.areas[:, None])
    return H, BI


def _mean_zero_basis(areas):
    # orthonormal complement of the area vector
    q, _ = np.linalg.qr(np.column_stack([areas, np.eye(len(areas))[:, :-1]]))
    return q[:, 1:]


def inf_sup_constant(mesh, system=None):
    """min_g max_v (div v, g) / (||v||_{H(div)} ||g||_0) over interior-flux v
    and mean-zero piecewise constants g; +inf when only g = 0 is mean-zero."""
    S = assemble_mixed_system(mesh) if system is None else system
    nK = mesh.n_elements
    if nK < 2:
        return float("inf")
    H, BI = _hdiv_gram(S)
    Z = _mean_zero_basis(S.areas)
    if len(S.interior) == 0:
        return 0.0
    X = BI @ linalg.solve(H, BI.T, assume_a="pos")
    lhs = Z.T @ X @ Z
    rhs = Z.T @ np.diag(S.areas) @ Z
    ev = linalg.eigh(0.5 * (lhs + lhs.T), rhs, eigvals_only=True)
    return float(np.sqrt(max(ev[0], 0.0)))


def inf_sup_svd(mesh, system=None):
    """Independent route: smallest singular value of D^{1/2} W^T B H^{-1/2}
    with W an orthonormal basis of the mean-zero space in the D inner product."""
    S = assemble_mixed_system(mesh) if system is None else system
    if mesh.n_elements < 2:
        return float("inf")
    H, BI = _hdiv_gram(S)
    w, V = linalg.eigh(H)
    Hmh = V @ np.diag(w**-0.5) @ V.T
    Dh = np.sqrt(S.areas)
    # mean-zero in the D inner product: D^{-1/2} times the complement of D^{1/2} 1
    Zt = _mean_zero_basis(Dh)
    W = Zt / Dh[:, None]
    T = (W.T * 1.0) @ BI @ Hmh
    return float(linalg.svdvals(T).min())


# ------------------------------------------------------- coarse diagnostics

def prolongate_rt(coarse_rt, fine_mesh, parent, order=2):
    """Fine RT0 coefficients of a coarse RT0 field (coarse space is nested)."""
    cm = coarse_rt.mesh
    V = fine_mesh.vertices
    owner = fine_mesh.edge_elems[:, 0]
    par = parent[owner]
    P, Q = V[fine_mesh.edges[:, 0]], V[fine_mesh.edges[:, 1]]
    t, w = gauss(order)
    coef = np.zeros(fine_mesh.n_edges)
    Ainv = np.linalg.inv(cm.A[par])
    d = Q - P
    nrm = np.column_stack([d[:, 1], -d[:, 0]])
    for ti, wi in zip(t, w):
        X = P + ti * d
        xh = np.einsum("eij,ej->ei", Ainv, X - cm.b[par])
        vals = np.empty_like(X)
        for kind in (TRIANGLE, PARALLELOGRAM):
            sel = cm.kind[par] == kind
            if np.any(sel):
                vals[sel] = _eval_points(coarse_rt, par[sel], xh[sel][:, None, :])[:, 0]
        coef += wi * np.sum(vals * nrm, axis=1)
    return RTFunction(fine_mesh, coef)


def coarse_projections(field, coarsening, fine_mesh):
    """Pi_RT and Pi_0 on the patch mesh, expressed on the fine mesh."""
    cm = coarsening.mesh
    rt_c = interpolate_rt(field, cm)
    rt_f = prolongate_rt(rt_c, fine_mesh, coarsening.parent)
    p0c = project_piecewise_constant(field.require_div(), cm, singular_lines=field.singular_lines)
    return rt_f, PWConstant(fine_mesh, p0c.values[coarsening.parent])


# ------------------------------------------------------- dual-norm errors

def _locate_reference(mesh, owner, X):
    Ainv = np.linalg.inv(mesh.A[owner])
    return np.einsum("tij,tpj->tpi", Ainv, X - mesh.b[owner][:, None, :])


def mesh_test_space(mesh, refine=0):
    """P1 triangulation of the mesh (each triangle inside one element)."""
    tris = []
    owner = []
    for k in range(mesh.n_elements):
        c = mesh.conn[k]
        if mesh.kind[k] == TRIANGLE:
            tris.append(c[:3])
            owner.append(k)
        else:
            tris.extend([[c[0], c[1], c[2]], [c[0], c[2], c[3]]])
            owner.extend([k, k])
    nodes = np.array(mesh.vertices, float)
    tris = np.array(tris)
    owner = np.array(owner)
    for _ in range(refine):
        nodes, tris = _red_refine(nodes, tris)
        owner = np.tile(owner, 4)
    return nodes, tris, owner


def error_load_mesh(field, z, nodes, tris, owner, q=6):
    """Loads int (u - z)_l phi_a, l = 1, 2, on the mesh test space."""
    mesh = z.mesh
    xh, wh = _tri_rule(q)
    tri = nodes[tris]
    X, W = _map_rule(tri, xh, wh)
    lam = _bary(tri, X)
    u = field(X[..., 0], X[..., 1])
    ref = _locate_reference(mesh, owner, X)
    zv = np.empty_like(u)
    for kind in (TRIANGLE, PARALLELOGRAM):
        sel = mesh.kind[owner] == kind
        if np.any(sel):
            zv[sel] = _eval_points(z, owner[sel], ref[sel])
    e = u - zv
    F = np.zeros((2, len(nodes)))
    for l in range(2):
        for a in range(3):
            np.add.at(F[l], tris[:, a], np.sum(e[..., l] * W * lam[..., a], axis=1))
    return F


def _eval_points(rt, elems, xh):
    """Evaluate rt at per-element reference points xh (ne, np, 2)."""
    m = rt.mesh
    F = rt.local_fluxes()[elems]
    kind = int(m.kind[elems[0]])
    a, b, c, d = reference_coefficients(kind, F)
    uh1 = a[:, None] + c[:, None] * xh[..., 0]
    uh2 = b[:, None] + d[:, None] * xh[..., 1]
    A, det = m.A[elems], m.det[elems]
    v1 = (A[:, 0, 0, None] * uh1 + A[:, 0, 1, None] * uh2) / det[:, None]
    v2 = (A[:, 1, 0, None] * uh1 + A[:, 1, 1, None] * uh2) / det[:, None]
    return np.stack([v1, v2], axis=-1)


def dual_error_mesh(field, z, refine=1, route="sinc"):
    """Discrete H^{-1/2} norm of u - z against P1 on the mesh red-refined
    `refine` times, with the interpolation (spectral) Gram."""
    nodes, tris, owner = mesh_test_space(z.mesh, refine)
    F = error_load_mesh(field, z, nodes, tris, owner)
    if route == "eigh":
        sd = spectral_dual(nodes, tris)
        return float(np.hypot(sd.norm(F[0]), sd.norm(F[1])))
    if route != "sinc":
        raise ValueError(f"unknown route {route!r}")
    return float(np.sqrt(np.sum(sinc_spectral_dual(nodes, tris).norm_sq(F.T))))


def dual_error_grid(field, z, region, gram, order=10):
    """Discrete H^{-1/2} norm of u - z against the uniform grid space V_m with
    the Slobodeckij Gram (gram = (space, G) from slobodeckij_gram)."""
    sp, G = gram
    mesh = z.mesh
    n = sp.n
    Ainv = np.linalg.inv(region.A)
    F = np.zeros((2, len(sp.nodes)))
    for elems, xh, w in element_quadrature(mesh, order, field.singular_lines):
        X = mapped_points(mesh, elems, xh)
        e = field(X[..., 0], X[..., 1]) - z.evaluate(elems, xh)
        R = (X - region.b) @ Ainv.T
        gx, gy = R[..., 0] * n, R[..., 1] * n
        i = np.clip(np.floor(gx).astype(int), 0, n - 1)
        j = np.clip(np.floor(gy).astype(int), 0, n - 1)
        fx, fy = gx - i, gy - j
        lower = fx >= fy
        # lower: (0,0),(1,0),(1,1) -> 1-fx, fx-fy, fy ; upper: (0,0),(1,1),(0,1) -> 1-fy, fx, fy-fx
        lam = np.where(lower[..., None], np.stack([1 - fx, fx - fy, fy], -1),
                       np.stack([1 - fy, fx, fy - fx], -1))
        offs_l = [(0, 0), (1, 0), (1, 1)]
        offs_u = [(0, 0), (1, 1), (0, 1)]
        for a in range(3):
            oi = np.where(lower, offs_l[a][0], offs_u[a][0])
            oj = np.where(lower, offs_l[a][1], offs_u[a][1])
            ids = sp.index[i + oi, j + oj]
            for l in range(2):
                np.add.at(F[l], ids.ravel(), (e[..., l] * w * lam[..., a]).ravel())
    return float(np.hypot(dual_from_gram(F[0], G), dual_from_gram(F[1], G)))


@dataclass(frozen=True)
class QhRow:
    N: int
    h: float
    dual_error: float
    dual_error_grid: float
    hdiv_interp_error: float
    ratio: float
    commuting_defect: float


def qh_error_report(field, meshes, refine=1, grid_m=None):
    """Per mesh: dual-norm error of Q_h u, H(div) error of Pi_RT u and their
    ratio.  The dual norm uses P1 on the refined mesh with the spectral Gram;
    with grid_m set the fixed-grid Slobodeckij variant is reported as well."""
    rows = []
    gram = None
    for mesh in meshes:
        sol = solve_qh(field, mesh)
        rt = interpolate_rt(field, mesh)
        e_int = hdiv_error(field, rt)
        e_dual = dual_error_mesh(field, sol.z, refine)
        e_grid = float("nan")
        if grid_m is not None and mesh.domain in ("square", "triangle"):
            region = Region.square() if mesh.domain == "square" else Region.triangle()
            if gram is None:
                sp, G, _, _ = slobodeckij_gram(region, DualNormSpec(grid_m))
                gram = (sp, G)
            e_grid = dual_error_grid(field, sol.z, region, gram)
        p0 = project_piecewise_constant(field.require_div(), mesh,
                                        singular_lines=field.singular_lines)
        defect = float(np.max(np.abs(sol.z.divergence() - p0.values)))
        ratio = e_dual / e_int if e_int > 1e-14 else float("nan")
        rows.append(QhRow(mesh.grading.N, mesh.grading.h, e_dual, e_grid, e_int, ratio, defect))
    return rows
