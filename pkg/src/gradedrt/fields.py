"""Analytic tangential test fields.

A field optionally carries a stream function psi with u = (d2 psi, -d1 psi).
Then the flux through a segment p -> q with right-hand normal is exactly
psi(q) - psi(p), which is how low-regularity fields get exact edge fluxes.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class VectorField:
    u1: Callable
    u2: Callable
    div: Optional[Callable] = None
    stream: Optional[Callable] = None
    s: Optional[float] = None
    name: str = "field"
    singular_lines: tuple = ()   # (axis, value): field may blow up on x_axis = value
    kinks: tuple = ()            # (axis, value): derivative jumps on x_axis = value
    params: dict = field(default_factory=dict)

    def __call__(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return np.stack(np.broadcast_arrays(self.u1(x1, x2), self.u2(x1, x2)), axis=-1)

    def component(self, l):
        if l not in (1, 2):
            raise ValueError("component index must be 1 or 2")
        return self.u1 if l == 1 else self.u2

    def require_div(self):
        if self.div is None:
            raise ValueError(f"field {self.name!r} has no analytic divergence")
        return self.div


def _zero(x1, x2):
    return np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)


def _const(c):
    return lambda x1, x2: np.full(np.broadcast(np.asarray(x1), np.asarray(x2)).shape, float(c))


def rt0_field(a=0.0, b=0.0, c=0.0):
    """(a + c x1, b + c x2): lies in RT0 of every affine triangle or parallelogram mesh."""
    return VectorField(
        lambda x1, x2: a + c * x1 + 0 * x2,
        lambda x1, x2: b + c * x2 + 0 * x1,
        div=_const(2 * c), name="rt0", params={"a": a, "b": b, "c": c},
    )


def rectangle_rt0_field(a=0.0, b=0.0, c=0.0, d=0.0):
    """(a + c x1, b + d x2): in RT0 of axis-aligned rectangular meshes only."""
    return VectorField(
        lambda x1, x2: a + c * x1 + 0 * x2,
        lambda x1, x2: b + d * x2 + 0 * x1,
        div=_const(c + d), name="rt0-rect", params={"a": a, "b": b, "c": c, "d": d},
    )


def trig_field():
    """Smooth field (sin x1, cos x2) with divergence cos x1 - sin x2."""
    return VectorField(
        lambda x1, x2: np.sin(x1) + 0 * x2,
        lambda x1, x2: np.cos(x2) + 0 * x1,
        div=lambda x1, x2: np.cos(x1) - np.sin(x2),
        s=1.0, name="trig",
    )


def trig_divfree_field():
    """Divergence-free field from psi = sin(pi x1) sin(pi x2) / pi."""
    pi = np.pi
    return VectorField(
        lambda x1, x2: np.sin(pi * x1) * np.cos(pi * x2),
        lambda x1, x2: -np.cos(pi * x1) * np.sin(pi * x2),
        div=_zero,
        stream=lambda x1, x2: np.sin(pi * x1) * np.sin(pi * x2) / pi,
        s=1.0, name="trig-divfree",
    )


def polynomial_field(coef1, coef2):
    """Polynomial components from coefficient dicts {(i, j): c} of x1^i x2^j."""
    def mk(cf):
        def f(x1, x2):
            x1 = np.asarray(x1, float)
            x2 = np.asarray(x2, float)
            out = np.zeros(np.broadcast(x1, x2).shape)
            for (i, j), c in cf.items():
                out = out + c * x1**i * x2**j
            return out
        return f

    d1 = {(i - 1, j): i * c for (i, j), c in coef1.items() if i > 0}
    d2 = {(i, j - 1): j * c for (i, j), c in coef2.items() if j > 0}
    f1, f2, g1, g2 = mk(coef1), mk(coef2), mk(d1), mk(d2)
    return VectorField(f1, f2, div=lambda x1, x2: g1(x1, x2) + g2(x1, x2),
                       name="poly", params={"u1": dict(coef1), "u2": dict(coef2)})


def _pos(x):
    return np.maximum(np.asarray(x, float), 0.0)


def singular_field(alpha):
    """((1 + alpha) x2^alpha, 0), singular along x2 = 0 for alpha < 1.

    Stream function x2^(1 + alpha); divergence zero.
    """
    if alpha <= -1:
        raise ValueError("alpha must exceed -1")
    a = float(alpha)
    return VectorField(
        lambda x1, x2: (1 + a) * _pos(x2) ** a + 0 * x1,
        _zero, div=_zero,
        stream=lambda x1, x2: _pos(x2) ** (1 + a) + 0 * x1,
        s=a + 0.5, name="singular", singular_lines=((2, 0.0),), params={"alpha": a},
    )


def singular_pair_field(alpha, sign=1.0):
    """((1 + alpha) x2^alpha, sign (1 + alpha) x1^alpha), sign = +1 or -1.

    Stream function x2^(1+a) - sign x1^(1+a); divergence zero.  With sign = +1
    the stream function vanishes on the diagonal x1 = x2, so the first
    component of the interpolant on the reference triangle is zero.
    """
    if alpha <= -1:
        raise ValueError("alpha must exceed -1")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    a, sg = float(alpha), float(sign)
    return VectorField(
        lambda x1, x2: (1 + a) * _pos(x2) ** a + 0 * x1,
        lambda x1, x2: sg * (1 + a) * _pos(x1) ** a + 0 * x2,
        div=_zero,
        stream=lambda x1, x2: _pos(x2) ** (1 + a) - sg * _pos(x1) ** (1 + a),
        s=a + 0.5, name="singular-pair", singular_lines=((2, 0.0), (1, 0.0)),
        params={"alpha": a, "sign": sg},
    )


def kink_radius(eps):
    """r*(eps) = e * exp(-exp(1/eps)); 0.0 once it underflows."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    inv = 1.0 / eps
    if inv > 709.0:
        return 0.0
    return float(np.exp(1.0 - np.exp(inv)))


def loglog_profile(eps):
    """w(t) = min(1, eps log log(e/t)) and its derivative, with w(0) = 1."""
    rstar = kink_radius(eps)

    def w(t):
        t = np.asarray(t, float)
        out = np.ones(t.shape)
        live = t > rstar
        tl = np.where(live, t, 1.0)
        val = eps * np.log(1.0 - np.log(tl))
        out[live] = np.minimum(1.0, val[live])
        return out

    def dw(t):
        t = np.asarray(t, float)
        live = t > rstar
        tl = np.where(live, t, 1.0)
        L = 1.0 - np.log(tl)
        return np.where(live, -eps / (tl * L), 0.0)

    return w, dw, rstar


def build_counterexample_field(eps):
    """u = ((1 - x1) w'(x2), w(x2)) with w = min(1, eps log log(e/x2)).

    Divergence free, stream function (1 - x1) w(x2).  The kink radius r* is
    exposed in params and as a kink line for quadrature splitting.
    """
    w, dw, rstar = loglog_profile(eps)
    return VectorField(
        lambda x1, x2: (1.0 - np.asarray(x1)) * dw(x2),
        lambda x1, x2: w(x2) + 0 * np.asarray(x1),
        div=_zero,
        stream=lambda x1, x2: (1.0 - np.asarray(x1)) * w(x2),
        s=None, name="counterexample",
        singular_lines=((2, 0.0),), kinks=((2, rstar),) if rstar > 0 else (),
        params={"eps": float(eps), "rstar": rstar},
    )


def piola_pullback(u, A, b):
    """Reference field uh(xh) = det(A) A^{-1} u(A xh + b) (inverse Piola map)."""
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    det = np.linalg.det(A)
    Ainv = np.linalg.inv(A)

    def comp(l):
        def f(x1, x2):
            y1 = A[0, 0] * x1 + A[0, 1] * x2 + b[0]
            y2 = A[1, 0] * x1 + A[1, 1] * x2 + b[1]
            v1, v2 = u.u1(y1, y2), u.u2(y1, y2)
            return det * (Ainv[l, 0] * v1 + Ainv[l, 1] * v2)
        return f

    div = None
    if u.div is not None:
        div = lambda x1, x2: det * u.div(A[0, 0] * x1 + A[0, 1] * x2 + b[0],
                                         A[1, 0] * x1 + A[1, 1] * x2 + b[1])
    stream = None
    if u.stream is not None and det > 0:
        stream = lambda x1, x2: u.stream(A[0, 0] * x1 + A[0, 1] * x2 + b[0],
                                         A[1, 0] * x1 + A[1, 1] * x2 + b[1])
    return VectorField(comp(0), comp(1), div=div, stream=stream, s=u.s,
                       name=u.name + "-pulled", params=dict(u.params))


FAMILIES = {
    "rt0": rt0_field,
    "trig": trig_field,
    "trig-divfree": trig_divfree_field,
    "singular": singular_field,
    "singular-pair": singular_pair_field,
    "counterexample": build_counterexample_field,
}
