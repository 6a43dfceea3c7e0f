"""L2 errors, Slobodeckij and anisotropic fractional seminorms, and a discrete
H^{-1/2} dual norm.

Slobodeckij double integrals over an affine image S = A Sh + b of the
reference square or triangle are written in relative coordinates z = x - y:

    |g|^2 = |det A|^2 int_{Sh - Sh} |A z|^{-2-2s}
                       int_{Sh cap (Sh - z)} (g(y + z) - g(y))^2 dy dz.

For both reference shapes the overlap Sh cap (Sh - z) is an affine image of Sh
whose offset and scaling are piecewise linear in z; the difference body is
cut into triangular sectors on which they are linear, and each sector is
integrated with a Duffy map z = u (P + v (Q - P)), graded toward u = 0 where
the kernel is singular.
"""
from dataclasses import dataclass, field

import numpy as np

from .mesh import PARALLELOGRAM, TRIANGLE
from .quadrature import QuadratureError, composite, element_rule, gauss, graded_breakpoints, rule_1d
from .rt import element_quadrature, mapped_points


# ------------------------------------------------------------------ regions

@dataclass(frozen=True, eq=False)
class Region:
    """Affine image x = A xh + b of the reference square or triangle."""

    kind: int
    A: np.ndarray = field(default_factory=lambda: np.eye(2))
    b: np.ndarray = field(default_factory=lambda: np.zeros(2))
    name: str = "region"

    def __post_init__(self):
        A = np.asarray(self.A, float).reshape(2, 2)
        b = np.asarray(self.b, float).reshape(2)
        if abs(np.linalg.det(A)) <= 0:
            raise ValueError("degenerate region map")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def square(cls):
        return cls(PARALLELOGRAM, name="Q")

    @classmethod
    def triangle(cls):
        return cls(TRIANGLE, name="T")

    @classmethod
    def box(cls, x0, x1, y0, y1, name="box"):
        return cls(PARALLELOGRAM, np.diag([x1 - x0, y1 - y0]), [x0, y0], name)

    @classmethod
    def scaled(cls, kind, h1, h2, name=None):
        return cls(kind, np.diag([h1, h2]), np.zeros(2), name or f"scaled-{kind}")

    @classmethod
    def from_element(cls, mesh, k):
        return cls(int(mesh.kind[k]), mesh.A[k], mesh.b[k], f"element-{k}")

    @property
    def det(self):
        return abs(np.linalg.det(self.A))

    @property
    def area(self):
        return self.det * (0.5 if self.kind == TRIANGLE else 1.0)

    @property
    def is_axis_aligned(self):
        return self.A[0, 1] == 0.0 and self.A[1, 0] == 0.0

    def to_physical(self, xh):
        return xh @ self.A.T + self.b

    def vertices(self):
        from .mesh import REFERENCE_VERTICES
        return self.to_physical(REFERENCE_VERTICES[self.kind])

    def singular_edges(self, lines, tol=1e-12):
        """Local reference edges lying on any of the given lines x_axis = value."""
        V = self.vertices()
        n = len(V)
        out = []
        for k in range(n):
            p, q = V[k], V[(k + 1) % n]
            for axis, value in lines:
                a = axis - 1
                if abs(p[a] - value) <= tol and abs(q[a] - value) <= tol:
                    out.append(k)
        return tuple(sorted(set(out)))


@dataclass(frozen=True)
class SeminormValue:
    value: float
    error: float
    s: float
    axis: int = 0
    region: str = ""
    level: int = 0
    converged: bool = True

    def __float__(self):
        return float(self.value)


def _as_scalar(g):
    if callable(g):
        return g
    c = float(g)
    return lambda x1, x2: np.full(np.broadcast(np.asarray(x1), np.asarray(x2)).shape, c)


# --------------------------------------------------------------- L2 norms

def l2_norm(g, region, order=12, singular_lines=(), levels=30):
    """||g||_{0, region} for a scalar callable."""
    g = _as_scalar(g)
    edges = region.singular_edges(singular_lines)
    xh, w = element_rule(region.kind, order, edges, levels)
    X = region.to_physical(xh)
    return float(np.sqrt(np.sum(w * g(X[:, 0], X[:, 1]) ** 2) * region.det))


def l2_error(field, rt, mesh=None, order=10, levels=20, component=None):
    """sqrt(sum_K int_K |u - rt|^2), or of one component (1 or 2)."""
    mesh = rt.mesh if mesh is None else mesh
    total = 0.0
    for elems, xh, w in element_quadrature(mesh, order, field.singular_lines, levels):
        X = mapped_points(mesh, elems, xh)
        u = field(X[..., 0], X[..., 1])
        r = rt.evaluate(elems, xh)
        diff = (u - r) ** 2
        if component is None:
            total += np.sum(diff.sum(axis=-1) * w)
        else:
            total += np.sum(diff[..., component - 1] * w)
    return float(np.sqrt(total))


def rt_component_norm(rt, component, mesh=None):
    """||(rt)_l||_0 computed exactly (quadrature exact for quadratics)."""
    mesh = rt.mesh if mesh is None else mesh
    total = 0.0
    for elems, xh, w in element_quadrature(mesh, 3):
        r = rt.evaluate(elems, xh)
        total += np.sum(r[..., component - 1] ** 2 * w)
    return float(np.sqrt(total))


def div_l2_error(field, rt, mesh=None, order=10, levels=20):
    div = field.require_div()
    mesh = rt.mesh if mesh is None else mesh
    dr = rt.divergence()
    total = 0.0
    for elems, xh, w in element_quadrature(mesh, order, field.singular_lines, levels):
        X = mapped_points(mesh, elems, xh)
        total += np.sum((div(X[..., 0], X[..., 1]) - dr[elems, None]) ** 2 * w)
    return float(np.sqrt(total))


def hdiv_error(field, rt, mesh=None, order=10, levels=20):
    e0 = l2_error(field, rt, mesh, order, levels)
    ed = div_l2_error(field, rt, mesh, order, levels)
    return float(np.sqrt(e0**2 + ed**2))


# ------------------------------------------------------- 2D Slobodeckij

def _sector_ring(kind):
    if kind == PARALLELOGRAM:
        ring = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
    else:
        ring = [(1, 0), (1, 1), (0, 1), (-1, 0), (-1, -1), (0, -1)]
    ring = np.array(ring, dtype=float)
    return [(ring[i], ring[(i + 1) % len(ring)]) for i in range(len(ring))]


def _overlap(kind, z):
    """Offset o(z) and axis scalings S(z) with Sh cap (Sh - z) = o + S * Sh."""
    if kind == PARALLELOGRAM:
        o = np.maximum(0.0, -z)
        S = 1.0 - np.abs(z)
        return o, S
    m1 = np.maximum(0.0, z[..., 1] - z[..., 0])
    m2 = np.maximum(0.0, -z[..., 1])
    m0 = np.maximum(0.0, z[..., 0])
    sigma = 1.0 - m0 - m1 - m2
    o = np.stack([m1 + m2, m2], axis=-1)
    return o, np.stack([sigma, sigma], axis=-1)


@dataclass(frozen=True)
class SlobodeckijRule:
    """Quadrature parameters of a refinement level."""

    level: int = 2

    @property
    def n(self):
        return 4 + self.level

    @property
    def u_levels(self):
        return 8 + 4 * self.level

    @property
    def w_levels(self):
        return 6 + 3 * self.level


def _seminorm_sq_2d(g, region, s, rule, singular_edges=(), chunk=2_000_000):
    n = rule.n
    ur = rule_1d(n, rule.u_levels, left=True)
    vr = composite(n, [0.0, 0.5, 1.0])
    wx, ww = element_rule(region.kind, n, singular_edges, rule.w_levels)
    A, b = region.A, region.b
    total = 0.0
    for P, Q in _sector_ring(region.kind):
        jac_sector = abs(P[0] * Q[1] - P[1] * Q[0])
        U, V = np.meshgrid(ur[0], vr[0], indexing="ij")
        WU = np.outer(ur[1], vr[1])
        U, V, WU = U.ravel(), V.ravel(), WU.ravel()
        Z = U[:, None] * (P[None, :] + V[:, None] * (Q - P)[None, :])
        wz = WU * U * jac_sector
        o, S = _overlap(region.kind, Z)
        oX = o + Z    # offset of the shifted copy; cancels exactly to 0 where it should
        AZ = Z @ A.T
        ker = np.sum(AZ**2, axis=1) ** (-(1.0 + s))
        base = wz * ker * S[:, 0] * S[:, 1]
        step = max(1, chunk // len(wx))
        for i in range(0, len(Z), step):
            sl = slice(i, i + step)
            Y = o[sl, None, :] + S[sl, None, :] * wx[None, :, :]
            Yp = Y @ A.T + b
            Xp = (oX[sl, None, :] + S[sl, None, :] * wx[None, :, :]) @ A.T + b
            d = g(Xp[..., 0], Xp[..., 1]) - g(Yp[..., 0], Yp[..., 1])
            total += np.sum(base[sl] * (d**2 @ ww))
    return total * region.det**2


def fractional_seminorm(g, region, s, level=2, singular_lines=(), tol=0.05):
    """Slobodeckij seminorm |g|_{H^s(region)}, 0 < s < 1.

    Computed at quadrature levels `level` and `level + 1`; the finer value is
    returned and the relative difference is the error estimate.
    """
    if not 0.0 < s < 1.0:
        raise ValueError("Slobodeckij seminorm needs 0 < s < 1")
    g = _as_scalar(g)
    edges = region.singular_edges(singular_lines)
    v0 = _seminorm_sq_2d(g, region, s, SlobodeckijRule(level), edges)
    v1 = _seminorm_sq_2d(g, region, s, SlobodeckijRule(level + 1), edges)
    a0, a1 = np.sqrt(max(v0, 0.0)), np.sqrt(max(v1, 0.0))
    err = abs(a1 - a0) / a1 if a1 > 0 else abs(a1 - a0)
    return SeminormValue(float(a1), float(err), s, 0, region.name, level + 1, bool(err <= tol))


def sobolev_norm(g, region, s, level=2, singular_lines=()):
    """(||g||_0^2 + |g|_{H^s}^2)^(1/2)."""
    semi = fractional_seminorm(g, region, s, level, singular_lines)
    l2 = l2_norm(g, region, singular_lines=singular_lines)
    return float(np.hypot(l2, semi.value)), semi


# -------------------------------------------------------- 1D Slobodeckij

def seminorm_sq_1d(f, lo, hi, s, n=8, u_levels=30, t_levels=0, t_left=False,
                   t_right=False):
    """Squared 1D Slobodeckij seminorms of f on intervals (lo[i], hi[i]).

    f(x, i) evaluates the i-th function at points x (shape (nlines, npts)).
    Uses z = L u, y = lo + L (1 - u) t:
        |f|^2 = 2 L^{1-2s} int int u^{-1-2s} (1 - u) (f(y + Lu) - f(y))^2 du dt.
    """
    lo = np.atleast_1d(np.asarray(lo, float))
    hi = np.atleast_1d(np.asarray(hi, float))
    L = hi - lo
    u, wu = rule_1d(n, u_levels, left=True)
    t, wt = rule_1d(n, t_levels, left=t_left, right=t_right)
    U, T = np.meshgrid(u, t, indexing="ij")
    W = np.outer(wu * u ** (-1.0 - 2.0 * s) * (1.0 - u), wt).ravel()
    U, T = U.ravel(), T.ravel()
    out = np.zeros(len(lo))
    live = L > 0
    if not np.any(live):
        return out
    Ll, lol = L[live, None], lo[live, None]
    y = lol + Ll * (1.0 - U[None, :]) * T[None, :]
    d = f(y + Ll * U[None, :], np.flatnonzero(live)) - f(y, np.flatnonzero(live))
    out[live] = 2.0 * L[live] ** (1.0 - 2.0 * s) * (d**2 @ W)
    return out


def _sections(region, axis, c):
    """Reference line sections (lo, hi) at reference outer coordinate c."""
    c = np.asarray(c, float)
    if region.kind == PARALLELOGRAM:
        return np.zeros_like(c), np.ones_like(c)
    if axis == 1:
        return c, np.ones_like(c)       # x1 in (x2, 1)
    return np.zeros_like(c), c          # x2 in (0, x1)


def _outer_rule(n, levels, left, right, splits):
    """Outer rule on [0, 1] graded toward flagged ends, deep enough to resolve splits."""
    splits = sorted(t for t in splits if 0.0 < t < 1.0)
    if splits and left:
        need = int(np.ceil(np.log(max(splits[0] * 1e-3, 1e-300)) / np.log(0.25)))
        levels = max(levels, min(need, 520))
    if splits and right:
        need = int(np.ceil(np.log(max((1.0 - splits[-1]) * 1e-3, 1e-300)) / np.log(0.25)))
        levels = max(levels, min(need, 520))
    return composite(n, graded_breakpoints(levels, 0.25, left, right, splits)) if (left or right) \
        else composite(n, np.unique(np.concatenate([[0.0, 1.0], splits])))


def _aniso_sq(g, region, s, axis, level, singular_lines, kinks):
    if not region.is_axis_aligned:
        raise ValueError("anisotropic seminorms need an axis-aligned region")
    n = 4 + level
    h = np.diag(region.A)
    b = region.b
    other = 2 if axis == 1 else 1
    # singular/kink lines parallel to the integration lines grade the outer rule
    par = [(v - b[other - 1]) / h[other - 1] for ax, v in singular_lines if ax == other]
    perp = [ax for ax, v in singular_lines if ax == axis]
    ksplit = [(v - b[other - 1]) / h[other - 1] for ax, v in kinks if ax == other]
    lev = 8 + 6 * level
    left = any(abs(p) < 1e-12 for p in par) or bool(ksplit)
    right = any(abs(p - 1) < 1e-12 for p in par)
    c, wc = _outer_rule(n, lev, left, right, ksplit)
    lo, hi = _sections(region, axis, c)
    ax0 = axis - 1

    def f(x, idx):
        pts = np.empty(x.shape + (2,))
        pts[..., ax0] = b[ax0] + h[ax0] * x
        pts[..., other - 1] = (b[other - 1] + h[other - 1] * c[idx])[:, None]
        return g(pts[..., 0], pts[..., 1])

    inner = seminorm_sq_1d(f, lo, hi, s, n=n, u_levels=10 + 5 * level,
                           t_levels=lev if perp else 0, t_left=bool(perp), t_right=bool(perp))
    # 1D seminorm of x -> g(b + h x) equals h^{2s-1} times the physical one
    phys_inner = inner * h[ax0] ** (1.0 - 2.0 * s)
    return float(np.sum(wc * phys_inner) * h[other - 1])


def anisotropic_seminorm(g, region, s, axis, level=2, singular_lines=(), kinks=(), tol=0.05):
    """|g|_{AH_axis^s(region)}: outer integral of 1D seminorms along x_axis lines.

    On the reference triangle the x1-lines run over (x2, 1) and the x2-lines
    over (0, x1).
    """
    if axis not in (1, 2):
        raise ValueError("axis must be 1 or 2")
    if not 0.0 < s < 1.0:
        raise ValueError("need 0 < s < 1")
    g = _as_scalar(g)
    v0 = _aniso_sq(g, region, s, axis, level, singular_lines, kinks)
    v1 = _aniso_sq(g, region, s, axis, level + 1, singular_lines, kinks)
    a0, a1 = np.sqrt(max(v0, 0.0)), np.sqrt(max(v1, 0.0))
    err = abs(a1 - a0) / a1 if a1 > 0 else abs(a1 - a0)
    return SeminormValue(float(a1), float(err), s, axis, region.name, level + 1, bool(err <= tol))


def norm_equivalence_report(g, s, level=2, singular_lines=()):
    """Full H^s(Q) norm against ||g||_0 + |g|_{AH1} + |g|_{AH2} on the unit square."""
    Q = Region.square()
    full, _ = sobolev_norm(g, Q, s, level, singular_lines)
    l2 = l2_norm(g, Q, singular_lines=singular_lines)
    a1 = anisotropic_seminorm(g, Q, s, 1, level, singular_lines).value
    a2 = anisotropic_seminorm(g, Q, s, 2, level, singular_lines).value
    rhs = l2 + a1 + a2
    return {"lhs": full, "rhs": rhs, "ratio": full / rhs if rhs > 0 else float("nan")}


# ------------------------------------------- profiles g(x) = w(x2), s = 1/2

def _profile_kernel(p, q, d, region_kind):
    """int int dx1 dy1 / ((x1 - y1)^2 + d^2)^{3/2}, d = p - q, over the
    x1-sections of the unit square ((0,1) each) or the reference triangle
    ((p, 1) and (q, 1))."""
    d2 = d**2
    G = lambda a: np.sqrt(a**2 + d2)
    if region_kind == PARALLELOGRAM:
        return 2.0 * (G(1.0) - G(0.0)) / d2
    return (G(1.0 - q) - G(0.0) - G(d) + G(1.0 - p)) / d2


def profile_seminorm(w, region_kind, n=8, levels=60, splits=()):
    """|g|_{H^{1/2}} of g(x1, x2) = w(x2) on the unit square or reference
    triangle, reduced to a 1D double integral with an exact x1-kernel.

    The (x2, y2) integral uses z = x2 - y2 = u and y2 = (1 - u) t with both
    variables graded toward 0 (geometric ratio 0.25) and split at `splits`.
    """
    u, wu = _outer_rule(n, levels, True, False, splits)
    t, wt = _outer_rule(n, levels, True, False, [])
    splits = [c for c in splits if 0.0 < c < 1.0]
    total = 0.0
    for i in range(len(u)):
        if splits:
            # x2 = y2 + u or y2 crosses a split: break the inner rule there
            cuts = [c / (1.0 - u[i]) for c in splits] + [(c - u[i]) / (1.0 - u[i]) for c in splits]
            t, wt = _outer_rule(n, levels, True, False, cuts)
        y = (1.0 - u[i]) * t
        x = y + u[i]
        K = _profile_kernel(x, y, u[i], region_kind)
        total += wu[i] * (1.0 - u[i]) * np.sum(wt * (w(x) - w(y)) ** 2 * K)
    return float(np.sqrt(2.0 * total))


# ------------------------------------------------- scaling identities

def piola_scaling_identity_check(h1, h2, g, level=2, singular_lines=(), kind=TRIANGLE):
    """Check the Piola scaling relations between T = B Th (B = diag(h1, h2))
    and the reference element for a physical component g.

    uh_1(xh) = h2 u_1(B xh) and uh_2(xh) = h1 u_2(B xh) are the Piola
    components when u_1 = u_2 = g.  Returns residuals |lhs/rhs - 1| for the
    equalities and the slack rhs/lhs for the H^{1/2} inequality.
    """
    g = _as_scalar(g)
    ref = Region(kind, name="ref")
    phys = Region.scaled(kind, h1, h2, name="phys")
    hmax = float(max(h1, h2))
    gh1 = lambda x1, x2: h2 * g(h1 * x1, h2 * x2)
    gh2 = lambda x1, x2: h1 * g(h1 * x1, h2 * x2)
    ref_lines = tuple((ax, v / (h1 if ax == 1 else h2)) for ax, v in singular_lines)

    def rel(lhs, rhs):
        if rhs == 0.0:
            return abs(lhs)
        return abs(lhs / rhs - 1.0)

    out = {}
    l_ref = l2_norm(gh1, ref, singular_lines=ref_lines) ** 2
    l_phy = l2_norm(g, phys, singular_lines=singular_lines) ** 2
    out["l2_u1"] = rel(l_ref, (h2 / h1) * l_phy)
    l_ref2 = l2_norm(gh2, ref, singular_lines=ref_lines) ** 2
    out["l2_u2"] = rel(l_ref2, (h1 / h2) * l_phy)
    a_ref = anisotropic_seminorm(gh2, ref, 0.5, 2, level, ref_lines).value ** 2
    a_phy = anisotropic_seminorm(g, phys, 0.5, 2, level, singular_lines).value ** 2
    out["ah2_u2"] = rel(a_ref, h1 * a_phy)
    a_ref1 = anisotropic_seminorm(gh1, ref, 0.5, 1, level, ref_lines).value ** 2
    a_phy1 = anisotropic_seminorm(g, phys, 0.5, 1, level, singular_lines).value ** 2
    out["ah1_u1"] = rel(a_ref1, h2 * a_phy1)
    s_ref = fractional_seminorm(gh1, ref, 0.5, level, ref_lines).value ** 2
    s_phy = fractional_seminorm(g, phys, 0.5, level, singular_lines).value ** 2
    bound = h1**-2 * hmax**3 * s_phy
    out["h12_lhs"] = s_ref
    out["h12_bound"] = bound
    out["h12_slack"] = bound / s_ref if s_ref > 0 else float("inf")
    return out
