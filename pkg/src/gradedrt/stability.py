"""Componentwise stability of RT0 interpolation on the reference elements.

Ratios are evaluated for Piola pullbacks of a physical field to selected
cells of a graded mesh, so one reference-element estimate is exercised on a
whole family of anisotropic cells.  The counterexample report shows which
term of the low-regularity estimate cannot be dropped.
"""
from dataclasses import dataclass, replace

import numpy as np

from .fields import build_counterexample_field, piola_pullback
from .mesh import PARALLELOGRAM, TRIANGLE, GradingSpec, aspect_ratios
from .mesh import build_reference_graded_square, build_reference_graded_triangle
from .norms import (Region, _outer_rule, anisotropic_seminorm, l2_norm, profile_seminorm,
                    rt_component_norm, sobolev_norm)
from .quadrature import composite, graded_breakpoints
from .rt import integrate_scalar, interpolate_rt

HIGH, LOW = "high", "low"


def reference_mesh(kind):
    spec = GradingSpec(1, 1.0)
    if kind == TRIANGLE:
        return build_reference_graded_triangle(spec)
    return build_reference_graded_square(spec)


def pullback_to_element(field, mesh, k):
    """Piola pullback of field to the reference element of cell k.

    Singular and kink lines are carried over for axis-aligned cells.
    """
    A, b = mesh.A[k], mesh.b[k]
    u = piola_pullback(field, A, b)
    if A[0, 1] != 0.0 or A[1, 0] != 0.0:
        return u
    def mapped(lines):
        out = []
        for ax, v in lines:
            t = (v - b[ax - 1]) / A[ax - 1, ax - 1]
            if -1e-12 <= t <= 1 + 1e-12:
                out.append((ax, float(min(max(t, 0.0), 1.0))))
        return tuple(out)
    return replace(u, singular_lines=mapped(field.singular_lines), kinks=mapped(field.kinks))


@dataclass(frozen=True)
class StabilityRatio:
    component: int
    numerator: float
    sobolev: float
    aniso: float
    div: float
    ratio: float
    quad_error: float


@dataclass(frozen=True)
class StabilityRHS:
    component: int
    sobolev: float
    aniso: float
    div: float
    quad_error: float

    @property
    def total(self):
        return self.sobolev + self.aniso + self.div


def stability_rhs(u, kind, s, component, branch, level=1):
    """Right-hand side of the reference estimate for component l on the
    reference square (kind PARALLELOGRAM) or triangle.

    high: ||u_l||_{H^s} (+ ||div u||_0 on the triangle);
    low:  ||u_l||_{H^s} + |u_{l+1}|_{AH_{l+1}^s} + ||div u||_0, indices mod 2.
    """
    if branch not in (HIGH, LOW):
        raise ValueError(f"unknown branch {branch!r}")
    l = component
    region = Region(kind, name="ref")
    lines = u.singular_lines
    hs, semi = sobolev_norm(u.component(l), region, s, level, lines)
    err = semi.error
    aniso = 0.0
    if branch == LOW:
        m = 2 if l == 1 else 1
        a = anisotropic_seminorm(u.component(m), region, s, m, level, lines, u.kinks)
        aniso, err = a.value, max(err, a.error)
    dv = 0.0
    if branch == LOW or kind == TRIANGLE:
        dv = l2_norm(u.require_div(), region, singular_lines=lines)
    return StabilityRHS(l, hs, aniso, dv, err)


def _ratio(num, rhs):
    return num / rhs.total if rhs.total > 0 else float("nan")


def reference_stability_ratio(u, kind, s, component, branch, level=1):
    """||(Pi_RT u)_l||_0 on the single reference element over the estimate's
    right-hand side."""
    rhs = stability_rhs(u, kind, s, component, branch, level)
    num = rt_component_norm(interpolate_rt(u, reference_mesh(kind)), component)
    return StabilityRatio(component, num, rhs.sobolev, rhs.aniso, rhs.div, _ratio(num, rhs),
                          rhs.quad_error)


def domain_stability_ratios(field, mesh, s, branch, level=1, rhs=None):
    """Ratios with the interpolant on a graded mesh of the whole reference
    domain: ||(Pi_RT u)_l||_{0,D} / rhs_l(D).  rhs may be precomputed (it
    does not depend on the mesh)."""
    kind = PARALLELOGRAM if mesh.domain == "square" else TRIANGLE
    if rhs is None:
        rhs = {l: stability_rhs(field, kind, s, l, branch, level) for l in (1, 2)}
    rt = interpolate_rt(field, mesh)
    out = {}
    for l in (1, 2):
        num = rt_component_norm(rt, l)
        r = rhs[l]
        out[l] = StabilityRatio(l, num, r.sobolev, r.aniso, r.div, _ratio(num, r), r.quad_error)
    return out


def representative_cells(mesh):
    """Corner cell at the origin, the most anisotropic cell and the largest cell."""
    corner = int(np.argmin(np.sum(mesh.b**2, axis=1)))
    aniso = int(np.argmax(aspect_ratios(mesh)))
    largest = int(np.argmax(mesh.diameters))
    return sorted({corner, aniso, largest})


def mesh_stability_ratio(field, mesh, s, branch, level=1, cells=None):
    """Per component: the largest reference ratio over Piola pullbacks of
    the field to the selected cells."""
    cells = representative_cells(mesh) if cells is None else cells
    kinds = mesh.kind
    worst = {1: None, 2: None}
    for k in cells:
        u = pullback_to_element(field, mesh, k)
        for l in (1, 2):
            r = reference_stability_ratio(u, int(kinds[k]), s, l, branch, level)
            if worst[l] is None or r.ratio > worst[l].ratio:
                worst[l] = r
    return worst


def triangle_c_identity(u):
    """On the reference triangle Pi_RT u = (a, b) + c (x1, x2) with
    c = int div u.  Returns (c from the fluxes, c from the divergence)."""
    rt = interpolate_rt(u, reference_mesh(TRIANGLE))
    c_flux = 0.5 * float(rt.divergence()[0])
    c_div = float(integrate_scalar(u.require_div(), reference_mesh(TRIANGLE), 12,
                                   u.singular_lines, 30)[0])
    return c_flux, c_div


# ------------------------------------------------------- counterexample

def log_aniso_u1_sq(eps, n=16):
    """log |u1|^2_{AH_1^{1/2}(T)} for u1 = (1 - x1) w'(x2).

    Along x1-lines (x2, 1) the 1D seminorm of 1 - x1 is (1 - x2)^2, so the
    square equals int_{r*}^1 w'(t)^2 (1 - t)^2 dt.  With t = exp(-y) and
    Y = -log r* = exp(1/eps) - 1 this is exp(Y) J with
    J = eps^2 int_0^Y e^{-v} (1 - e^{-(Y - v)})^2 / (1 + Y - v)^2 dv,
    which stays finite when r* itself underflows.
    """
    Y = float(np.expm1(1.0 / eps))
    if Y <= 120.0:
        # grade toward v = Y, where the factor (1 - e^{-(Y - v)})^2 vanishes
        bps = np.concatenate([np.linspace(0.0, Y, 121)[:-1],
                              Y - (Y / 120.0) * graded_breakpoints(30, 0.25, left=True)[::-1]])
    else:
        bps = np.linspace(0.0, 120.0, 241)
    v, w = composite(n, np.unique(bps))
    f = eps**2 * np.exp(-v) * np.expm1(-(Y - v))**2 / (1.0 + Y - v)**2
    J = float(np.sum(w * f))
    return Y + np.log(J)


def u2_l2_sq_triangle(w, rstar, n=16):
    """int_T w(x2)^2 = int_0^1 w(t)^2 (1 - t) dt."""
    splits = (rstar,) if rstar > 0 else ()
    t, wt = _outer_rule(n, 400, True, False, splits)
    return float(np.sum(wt * w(t)**2 * (1 - t)))


@dataclass(frozen=True)
class CounterexampleRow:
    eps: float
    rstar: float
    flux_residual: float
    pi_value: tuple
    pi_u2_l2: float
    u2_l2: float
    u2_semi: float
    u2_semi_error: float
    u2_h12: float
    div_l2: float
    log_ah1_u1_sq: float
    ratio_plain: float
    ratio_augmented: float
    log10_ratio_augmented: float


EXPECTED_FLUXES = np.array([-1.0, 0.0, 1.0])


def counterexample_report(eps, levels=240):
    """Interpolant, norms and both ratios for u^eps on the reference triangle.

    Local fluxes are ordered by the edges (0,0)-(1,0), (1,0)-(1,1), (1,1)-(0,0)
    and are outward; u^eps gives (-1, 0, 1), i.e. Pi_RT u^eps = (0, 1).
    """
    u = build_counterexample_field(eps)
    w = u.u2
    rstar = u.params["rstar"]
    mesh = reference_mesh(TRIANGLE)
    rt = interpolate_rt(u, mesh)
    F = rt.local_fluxes()[0, :3]
    resid = float(np.max(np.abs(F - EXPECTED_FLUXES)))
    val = rt.evaluate(np.array([0]), np.array([[0.5, 0.25]]))[0, 0]
    pi_u2 = rt_component_norm(rt, 2)
    wprof = lambda t: w(0.0 * t, t)
    l2sq = u2_l2_sq_triangle(wprof, rstar)
    splits = (rstar,) if rstar > 0 else ()
    # grading depth is capped so that (x2 - y2)^2 stays a normal float; the
    # log-log tail converges like 1/depth, so half depth gives the error
    semi = profile_seminorm(wprof, TRIANGLE, levels=levels, splits=splits)
    coarse = profile_seminorm(wprof, TRIANGLE, levels=levels // 2, splits=splits)
    semi_err = abs(semi - coarse) / semi
    h12 = float(np.sqrt(l2sq + semi**2))
    la = log_aniso_u1_sq(eps)
    plain = pi_u2 / h12
    # augmented denominator h12 + exp(la / 2), combined in log space
    log_den = np.logaddexp(np.log(h12), 0.5 * la)
    log_aug = np.log(pi_u2) - log_den
    return CounterexampleRow(float(eps), rstar, resid, (float(val[0]), float(val[1])), pi_u2,
                             float(np.sqrt(l2sq)), semi, semi_err, h12, 0.0, float(la), float(plain),
                             float(np.exp(log_aug)), float(log_aug / np.log(10)))
