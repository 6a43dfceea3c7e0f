"""Quadrature rules: Gauss-Legendre, geometrically graded composite rules and
collapsed-coordinate rules on the reference triangle {0 < x2 < x1 < 1}."""
from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    """Raised when two quadrature refinements disagree beyond tolerance."""


@lru_cache(maxsize=None)
def _unit_gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x = (x + 1.0) / 2.0
    w = w / 2.0
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gauss(n, a=0.0, b=1.0):
    """n-point Gauss-Legendre rule on [a, b]."""
    x, w = _unit_gauss(int(n))
    return a + (b - a) * x, (b - a) * w


def graded_breakpoints(levels, ratio=0.25, left=True, right=False, splits=()):
    """Breakpoints of [0, 1] clustered geometrically toward the flagged ends.

    With both ends flagged the two halves are graded independently.  Extra
    interior split points (kinks) are merged in.
    """
    if left and right:
        half = 0.5 * ratio ** np.arange(levels, -1, -1)
        pts = np.concatenate([[0.0], half, 1.0 - half[::-1], [1.0]])
    elif left:
        pts = np.concatenate([[0.0], ratio ** np.arange(levels, -1, -1)])
    elif right:
        pts = np.concatenate([[0.0], 1.0 - ratio ** np.arange(0, levels + 1)])
        pts[-1] = 1.0
    else:
        pts = np.array([0.0, 1.0])
    extra = [t for t in splits if 0.0 < t < 1.0]
    pts = np.unique(np.concatenate([pts, extra]))
    return pts


def composite(n, breakpoints):
    """Composite n-point Gauss rule over consecutive breakpoint intervals."""
    bp = np.asarray(breakpoints, dtype=float)
    a, b = bp[:-1], bp[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    x, w = _unit_gauss(int(n))
    pts = (a[:, None] + (b - a)[:, None] * x[None, :]).ravel()
    wts = ((b - a)[:, None] * w[None, :]).ravel()
    return pts, wts


def rule_1d(n, levels=0, left=False, right=False, ratio=0.25, splits=()):
    """1D rule on [0, 1]; graded toward flagged ends when levels > 0."""
    if levels <= 0 or not (left or right):
        return composite(n, graded_breakpoints(0, left=False, splits=splits))
    return composite(n, graded_breakpoints(levels, ratio, left, right, splits))


def square_rule(r1, r2):
    """Tensor rule on the unit square from two 1D rules."""
    x1, w1 = r1
    x2, w2 = r2
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    W = np.outer(w1, w2)
    return np.column_stack([X1.ravel(), X2.ravel()]), W.ravel()


def triangle_rule(ra, rb):
    """Collapsed rule on {0 < x2 < x1 < 1}: x1 = a, x2 = a*b, jacobian a."""
    a, wa = ra
    b, wb = rb
    A, B = np.meshgrid(a, b, indexing="ij")
    W = np.outer(wa * a, wb)
    return np.column_stack([A.ravel(), (A * B).ravel()]), W.ravel()


def element_rule(kind, n, graded_edges=(), levels=0, ratio=0.25):
    """Reference-element rule graded toward the listed local edges.

    kind 0 is the triangle with vertices (0,0), (1,0), (1,1); kind 1 the unit
    square with vertices (0,0), (1,0), (1,1), (0,1).  Local edge k joins
    vertex k to vertex k+1.
    """
    g = set(graded_edges)
    lv = levels if g else 0
    if kind == 1:
        r1 = rule_1d(n, lv, left=3 in g, right=1 in g, ratio=ratio)
        r2 = rule_1d(n, lv, left=0 in g, right=2 in g, ratio=ratio)
        return square_rule(r1, r2)
    ra = rule_1d(n, lv, left=bool(g & {0, 2}), right=1 in g, ratio=ratio)
    rb = rule_1d(n, lv, left=0 in g, right=2 in g, ratio=ratio)
    return triangle_rule(ra, rb)
