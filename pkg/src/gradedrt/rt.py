"""Lowest-order Raviart-Thomas space on hybrid meshes.

Degrees of freedom are outward normal fluxes through the local edges.  On the
reference square the space is {(a + c x1, b + d x2)}, on the reference
triangle {(a, b) + c (x1, x2)}; fields are pushed forward with the Piola map
u(x) = A uh(xh) / det A.  Global coefficients are fluxes through the globally
oriented edges; an element sees sign * coefficient as its outward flux.
"""
from dataclasses import dataclass
from fractions import Fraction
import hashlib
import io
import warnings

import numpy as np
from scipy import integrate

from .mesh import PARALLELOGRAM, REFERENCE_VERTICES, TRIANGLE
from .quadrature import QuadratureError, composite, element_rule, gauss, graded_breakpoints


# ------------------------------------------------------------ local bases

def reference_coefficients(kind, F):
    """Coefficients (a, b, c, d) of the reference field with outward fluxes F.

    The field is (a + c x1, b + d x2); on the triangle c == d.
    """
    F = np.asarray(F, dtype=float)
    if kind == TRIANGLE:
        a = -F[..., 0] - F[..., 2]
        b = -F[..., 0]
        c = F[..., 0] + F[..., 1] + F[..., 2]
        return a, b, c, c
    a = -F[..., 3]
    b = -F[..., 0]
    c = F[..., 1] + F[..., 3]
    d = F[..., 0] + F[..., 2]
    return a, b, c, d


@dataclass(frozen=True)
class RTLocalBasis:
    kind: int

    @property
    def size(self):
        return 3 if self.kind == TRIANGLE else 4

    @property
    def vertices(self):
        return REFERENCE_VERTICES[self.kind]

    def coefficients(self):
        """(a, b, c, d) of each basis field (rows)."""
        return np.column_stack(reference_coefficients(self.kind, np.eye(self.size)))

    def values(self, xhat):
        """Basis values, shape (size, npts, 2)."""
        xhat = np.atleast_2d(xhat)
        C = self.coefficients()
        v1 = C[:, 0:1] + C[:, 2:3] * xhat[None, :, 0]
        v2 = C[:, 1:2] + C[:, 3:4] * xhat[None, :, 1]
        return np.stack([v1, v2], axis=-1)

    def divergence(self):
        C = self.coefficients()
        return C[:, 2] + C[:, 3]

    def dof_matrix(self, exact=True):
        """M[i, j] = outward flux of basis j through edge i.

        With exact=True the midpoint rule (exact for linear fields) is
        evaluated in rational arithmetic.
        """
        n = self.size
        if exact:
            V = [tuple(Fraction(int(t)) for t in p) for p in self.vertices]
            C = []
            for F in np.eye(n, dtype=int):
                Ff = [Fraction(int(t)) for t in F]
                if self.kind == TRIANGLE:
                    c = Ff[0] + Ff[1] + Ff[2]
                    C.append((-Ff[0] - Ff[2], -Ff[0], c, c))
                else:
                    C.append((-Ff[3], -Ff[0], Ff[1] + Ff[3], Ff[0] + Ff[2]))
            M = [[None] * n for _ in range(n)]
            for i in range(n):
                p, q = V[i], V[(i + 1) % n]
                m = ((p[0] + q[0]) / 2, (p[1] + q[1]) / 2)
                nrm = (q[1] - p[1], -(q[0] - p[0]))
                for j in range(n):
                    a, b, c, d = C[j]
                    M[i][j] = (a + c * m[0]) * nrm[0] + (b + d * m[1]) * nrm[1]
            return M
        V = self.vertices
        M = np.zeros((n, n))
        for i in range(n):
            p, q = V[i], V[(i + 1) % n]
            t, w = gauss(2)
            pts = p + t[:, None] * (q - p)
            nrm = np.array([q[1] - p[1], -(q[0] - p[0])])
            M[i] = np.einsum("jpk,k,p->j", self.values(pts), nrm, w)
        return M


def local_basis(kind):
    if kind not in (TRIANGLE, PARALLELOGRAM):
        raise ValueError(f"unknown element kind {kind}")
    return RTLocalBasis(int(kind))


# ------------------------------------------------------------ containers

@dataclass(frozen=True, eq=False)
class RTFunction:
    """RT0 field given by fluxes through the globally oriented edges."""

    mesh: object
    coef: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coef, dtype=float)
        if c.shape != (self.mesh.n_edges,):
            raise ValueError("one coefficient per global edge expected")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coef", c)

    def local_fluxes(self):
        m = self.mesh
        F = np.where(m.elem_edges >= 0, self.coef[np.maximum(m.elem_edges, 0)], 0.0)
        return F * m.elem_signs

    def divergence(self):
        return self.local_fluxes().sum(axis=1) / self.mesh.areas

    def evaluate(self, elems, xhat):
        """Values at reference points xhat (npts x 2) on each element in elems.

        Returns (len(elems), npts, 2).
        """
        m = self.mesh
        elems = np.atleast_1d(elems)
        xhat = np.atleast_2d(xhat)
        F = self.local_fluxes()[elems]
        out = np.empty((len(elems), len(xhat), 2))
        for kind in (TRIANGLE, PARALLELOGRAM):
            sel = m.kind[elems] == kind
            if not np.any(sel):
                continue
            a, b, c, d = reference_coefficients(kind, F[sel])
            uh1 = a[:, None] + c[:, None] * xhat[None, :, 0]
            uh2 = b[:, None] + d[:, None] * xhat[None, :, 1]
            A = m.A[elems[sel]]
            det = m.det[elems[sel]]
            out[sel, :, 0] = (A[:, 0, 0, None] * uh1 + A[:, 0, 1, None] * uh2) / det[:, None]
            out[sel, :, 1] = (A[:, 1, 0, None] * uh1 + A[:, 1, 1, None] * uh2) / det[:, None]
        return out

    def export_text(self):
        out = io.StringIO()
        out.write("# gradedrt rt0 v1\n")
        out.write(f"# mesh-sha256 = {self.mesh.checksum()}\n")
        out.write(f"# edges = {self.mesh.n_edges}\n")
        for e, c in enumerate(self.coef):
            out.write(f"{e} {c!r}\n")
        return out.getvalue()


@dataclass(frozen=True, eq=False)
class PWConstant:
    mesh: object
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_elements,):
            raise ValueError("one value per element expected")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def _inside(kind, xhat, tol=1e-12):
    x1, x2 = xhat[..., 0], xhat[..., 1]
    ok = (x1 >= -tol) & (x1 <= 1 + tol) & (x2 >= -tol) & (x2 <= 1 + tol)
    if kind == TRIANGLE:
        ok &= x2 <= x1 + tol
    return ok


def eval_rt(f, element, xhat):
    """Value of f at the image of reference point(s) xhat in one element."""
    xhat = np.asarray(xhat, dtype=float)
    single = xhat.ndim == 1
    pts = np.atleast_2d(xhat)
    if not np.all(_inside(int(f.mesh.kind[element]), pts)):
        raise ValueError("reference point outside the reference element")
    v = f.evaluate(np.array([element]), pts)[0]
    return v[0] if single else v


def div_rt(f, element):
    return float(f.divergence()[element])


# ------------------------------------------------------------ edge fluxes

def _segment_params(P, Q, lines):
    """Parameters t in [0, 1] where segment P->Q meets lines x_axis = value."""
    ts = []
    for axis, val in lines:
        a = axis - 1
        dp = Q[a] - P[a]
        if abs(dp) < 1e-14 * (1 + abs(P[a]) + abs(Q[a])):
            if abs(P[a] - val) <= 1e-13 * (1 + abs(val)):
                ts.append(("along", None))
            continue
        t = (val - P[a]) / dp
        if -1e-13 <= t <= 1 + 1e-13:
            ts.append(("cross", min(max(t, 0.0), 1.0)))
    return ts


def _graded_segment_rule(n, splits, singular, levels, ratio=0.25):
    """Composite rule on [0, 1] split at `splits` and graded toward `singular`."""
    cuts = np.unique(np.concatenate([[0.0, 1.0], [t for t in splits if 0 < t < 1],
                                     [t for t in singular if 0 < t < 1]]))
    pts, wts = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        left = any(abs(a - s) < 1e-15 for s in singular)
        right = any(abs(b - s) < 1e-15 for s in singular)
        bp = graded_breakpoints(levels, ratio, left, right) if (left or right) else np.array([0.0, 1.0])
        x, w = composite(n, a + (b - a) * bp)
        pts.append(x)
        wts.append(w)
    return np.concatenate(pts), np.concatenate(wts)


def _normal_dot(U, nrm):
    """U . nrm with components of zero normal weight dropped, so a field that
    is infinite tangentially along a singular edge still has a finite flux."""
    out = 0.0
    for k in (0, 1):
        nk = nrm[..., k]
        if np.ndim(nk) == 0:
            if nk != 0.0:
                out = out + U[..., k] * nk
        else:
            out = out + np.where(nk[:, None] != 0.0, U[..., k], 0.0) * nk[:, None]
    return out


def _segment_integrand(field, P, Q):
    d = Q - P
    nrm = np.array([d[1], -d[0]])

    def g(t):
        t = np.asarray(t, float)
        x = P[None, :] + t[:, None] * d[None, :] if t.ndim else P + t * d
        x = np.atleast_2d(x)
        u = field(x[:, 0], x[:, 1])
        return _normal_dot(u, nrm)

    return g


def edge_fluxes(field, P, Q, order=8, tol=1e-10, method="auto", levels=40,
                strict=True):
    """Fluxes of field through segments P[i] -> Q[i] (right-hand normal).

    method 'stream' uses the field's stream function (exact), 'quadrature'
    uses Gauss-Legendre of the given order checked against twice the order,
    with graded splitting at kinks and singular lines and an adaptive
    fallback.  'auto' picks 'stream' when available.  Returns (flux, ok).
    """
    P = np.atleast_2d(np.asarray(P, float))
    Q = np.atleast_2d(np.asarray(Q, float))
    if method == "auto":
        method = "stream" if field.stream is not None else "quadrature"
    if method == "stream":
        if field.stream is None:
            raise ValueError("field has no stream function")
        return field.stream(Q[:, 0], Q[:, 1]) - field.stream(P[:, 0], P[:, 1]), np.ones(len(P), bool)
    if method != "quadrature":
        raise ValueError(f"unknown flux method {method!r}")

    d = Q - P
    nrm = np.column_stack([d[:, 1], -d[:, 0]])
    flux = np.empty(len(P))
    ok = np.ones(len(P), dtype=bool)
    special = np.zeros(len(P), dtype=bool)
    info = []
    for i in range(len(P)):
        kinks = [t for kind, t in _segment_params(P[i], Q[i], field.kinks) if kind == "cross"]
        sing = _segment_params(P[i], Q[i], field.singular_lines)
        sing_t = [t for kind, t in sing if kind == "cross"]
        along = any(kind == "along" for kind, _ in sing)
        info.append((kinks, sing_t, along))
        special[i] = bool(kinks or sing_t or along)

    def plain(idx, n):
        t, w = gauss(n)
        X = P[idx, None, :] + t[None, :, None] * d[idx, None, :]
        U = field(X[..., 0], X[..., 1])
        return _normal_dot(U, nrm[idx]) @ w

    reg = np.flatnonzero(~special)
    if len(reg):
        f1, f2 = plain(reg, order), plain(reg, 2 * order)
        flux[reg] = f2
        bad = np.abs(f1 - f2) > tol * (1 + np.abs(f2))
        special[reg[bad]] = True
    for i in np.flatnonzero(special):
        kinks, sing_t, along = info[i]
        g = _segment_integrand(field, P[i], Q[i])
        sing_pts = list(sing_t)
        if along:
            sing_pts = [0.0, 1.0]
        x1, w1 = _graded_segment_rule(order, kinks, sing_pts, levels)
        x2, w2 = _graded_segment_rule(order + 4, kinks, sing_pts, levels)
        v1, v2 = g(x1) @ w1, g(x2) @ w2
        if abs(v1 - v2) <= tol * (1 + abs(v2)):
            flux[i] = v2
            continue
        brk = sorted(set(t for t in kinks + sing_t if 0 < t < 1))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(lambda t: float(g(np.array([t]))[0]), 0.0, 1.0,
                                      points=brk or None, limit=400, epsabs=tol * 0.1,
                                      epsrel=tol * 0.1)
        flux[i] = val
        if not (err <= tol * (1 + abs(val))):
            ok[i] = False
    if strict and not np.all(ok):
        raise QuadratureError(f"edge flux quadrature did not converge on {int((~ok).sum())} edges")
    return flux, ok


def edge_flux(field, edge, order=8, method="auto", tol=1e-10):
    """Flux through one segment edge = (p, q), normal to the right of p -> q."""
    p, q = edge
    f, _ = edge_fluxes(field, [p], [q], order=order, tol=tol, method=method)
    return float(f[0])


def interpolate_rt(field, mesh, method="auto", order=8, tol=1e-10, strict=True):
    V = mesh.vertices
    coef, _ = edge_fluxes(field, V[mesh.edges[:, 0]], V[mesh.edges[:, 1]],
                          order=order, tol=tol, method=method, strict=strict)
    return RTFunction(mesh, coef)


# ------------------------------------------------------ element quadrature

def _on_line(pts, axis, value, tol):
    return np.abs(pts[..., axis - 1] - value) <= tol


def graded_edge_masks(mesh, lines):
    """Bitmask per element of local edges to grade toward (singular lines)."""
    masks = np.zeros(mesh.n_elements, dtype=np.int64)
    if not lines:
        return masks
    scale = np.ptp(mesh.vertices, axis=0).max()
    tol = 1e-12 * scale
    nloc = mesh.n_local
    P = mesh.vertices[np.maximum(mesh.conn, 0)]
    for axis, value in lines:
        on = _on_line(P, axis, value, tol) & (mesh.conn >= 0)
        for k in range(4):
            nxt = np.where(nloc == 3, (k + 1) % 3, (k + 1) % 4)
            prv = np.where(nloc == 3, (k - 1) % 3, (k - 1) % 4)
            on_k = on[:, k]
            on_n = on[np.arange(mesh.n_elements), nxt]
            edge = on_k & on_n
            masks |= np.where(edge, 1 << k, 0)
            # a lone vertex on the line: grade both adjacent edges
            lone = on_k & ~on_n & ~on[np.arange(mesh.n_elements), prv]
            masks |= np.where(lone, (1 << k) | (1 << prv), 0)
    return masks


def element_quadrature(mesh, order=10, lines=(), levels=20, elements=None):
    """Yield (element indices, reference points, weights incl. |det A|)."""
    masks = graded_edge_masks(mesh, lines)
    idx_all = np.arange(mesh.n_elements) if elements is None else np.asarray(elements)
    for kind in (TRIANGLE, PARALLELOGRAM):
        sel = idx_all[mesh.kind[idx_all] == kind]
        for mask in np.unique(masks[sel]):
            group = sel[masks[sel] == mask]
            edges = [k for k in range(4) if mask >> k & 1]
            xh, wh = element_rule(kind, order, edges, levels)
            yield group, xh, wh[None, :] * mesh.det[group, None]


def mapped_points(mesh, elems, xhat):
    A, b = mesh.A[elems], mesh.b[elems]
    return np.einsum("eij,pj->epi", A, xhat) + b[:, None, :]


def integrate_scalar(g, mesh, order=10, lines=(), levels=20):
    """Per-element integrals of a scalar callable g(x1, x2)."""
    out = np.zeros(mesh.n_elements)
    for elems, xh, w in element_quadrature(mesh, order, lines, levels):
        X = mapped_points(mesh, elems, xh)
        out[elems] = np.sum(g(X[..., 0], X[..., 1]) * w, axis=1)
    return out


def project_piecewise_constant(g, mesh, order=10, singular_lines=(), levels=30):
    """Element means of g."""
    if not callable(g):
        c = float(g)
        return PWConstant(mesh, np.full(mesh.n_elements, c))
    return PWConstant(mesh, integrate_scalar(g, mesh, order, singular_lines, levels) / mesh.areas)


def commuting_defect(field, mesh, rt=None, order=10):
    """max_K |div(Pi_RT u)|_K - mean_K div u|."""
    div = field.require_div()
    if rt is None:
        rt = interpolate_rt(field, mesh)
    p0 = project_piecewise_constant(div, mesh, order, field.singular_lines)
    return float(np.max(np.abs(rt.divergence() - p0.values)))


def rt_from_field_on_mesh(mesh, a, b, c):
    """Exact coefficients of (a + c x1, b + c x2) (no quadrature error)."""
    V = mesh.vertices
    P, Q = V[mesh.edges[:, 0]], V[mesh.edges[:, 1]]
    M = 0.5 * (P + Q)
    d = Q - P
    u = np.column_stack([a + c * M[:, 0], b + c * M[:, 1]])
    return RTFunction(mesh, u[:, 0] * d[:, 1] - u[:, 1] * d[:, 0])


def rt_checksum(f):
    return hashlib.sha256(f.export_text().encode()).hexdigest()
