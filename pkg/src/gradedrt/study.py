"""Configuration-driven experiment runner.

A study is described by a flat INI file with one [study] section:

    [study]
    kind = interp-convergence
    family = singular
    alpha = 0.3
    beta = 1, 1.5, 2
    N = 4, 8, 16, 32
    domain = square
    output = eoc.csv

Rows are produced per grid point (beta, N), or per eps / (h1, h2) for the
counterexample and scaling-identity kinds, and always written in canonical
grid order.  Every CSV starts with a commented header echoing the config.
"""
import configparser
import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__
from .fields import (build_counterexample_field, polynomial_field, rt0_field, singular_field,
                     singular_pair_field, trig_divfree_field, trig_field)
from .mesh import (FaceGeometry, GradingSpec, build_graded_face_mesh,
                   build_reference_graded_square, build_reference_graded_triangle)
from .norms import hdiv_error, l2_error, piola_scaling_identity_check
from .qh import dual_error_mesh, inf_sup_constant, saddle_condition_number, solve_qh
from .rt import commuting_defect, interpolate_rt, project_piecewise_constant
from .stability import HIGH, LOW, counterexample_report, domain_stability_ratios, stability_rhs
from .mesh import PARALLELOGRAM, TRIANGLE

KINDS = ("interp-convergence", "stability-ratio", "counterexample", "infsup", "qh-rate",
         "scaling-identity")
DOMAINS = ("square", "triangle", "face")
FAMILIES = ("rt0", "trig", "trig-divfree", "singular", "singular-pair", "counterexample",
            "constant")


class ConfigError(ValueError):
    """Invalid study configuration; `key` names the offending field."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class StudyConfig:
    kind: str
    family: str = "trig"
    params: dict = field(default_factory=dict)
    betas: tuple = (1.0,)
    Ns: tuple = (2, 4, 8)
    s: float = None
    quad_level: int = 1
    domain: str = "square"
    eps: tuple = (0.5, 0.2, 0.1, 0.05)
    pairs: tuple = ((0.5, 0.125), (0.25, 0.0625))
    refine: int = 3
    output: str = None
    plot: str = None
    threads: int = 1

    def __post_init__(self):
        validate(self)

    def echo(self):
        """Canonical key = value lines (output paths and threads excluded)."""
        items = {"kind": self.kind, "family": self.family, "domain": self.domain}
        if self.kind not in ("counterexample", "scaling-identity"):
            items["beta"] = ", ".join(_fmt(b) for b in self.betas)
            items["N"] = ", ".join(str(n) for n in self.Ns)
        if self.s is not None:
            items["s"] = _fmt(self.s)
        items["quad_level"] = str(self.quad_level)
        if self.kind == "counterexample":
            items["eps"] = ", ".join(_fmt(e) for e in self.eps)
        if self.kind == "scaling-identity":
            items["pairs"] = ", ".join(f"{_fmt(a)}:{_fmt(b)}" for a, b in self.pairs)
        if self.kind == "qh-rate":
            items["refine"] = str(self.refine)
        for k in sorted(self.params):
            items[k] = _fmt(self.params[k])
        return [f"{k} = {v}" for k, v in items.items()]


def _fmt(x):
    return f"{float(x):.12g}" if isinstance(x, (float, int, np.floating)) else str(x)


def validate(cfg):
    if cfg.kind not in KINDS:
        raise ConfigError("kind", f"unknown study kind {cfg.kind!r}; choose from {', '.join(KINDS)}")
    if cfg.family not in FAMILIES:
        raise ConfigError("family", f"unknown field family {cfg.family!r}")
    if cfg.domain not in DOMAINS:
        raise ConfigError("domain", f"unknown domain {cfg.domain!r}")
    if len(cfg.Ns) == 0 or any(int(n) != n or n < 1 for n in cfg.Ns):
        raise ConfigError("N", "N values must be positive integers")
    if any(b <= a for a, b in zip(cfg.Ns, cfg.Ns[1:])):
        raise ConfigError("N", "N list must be strictly increasing")
    if len(cfg.betas) == 0 or any(not 1.0 <= b < 3.0 for b in cfg.betas):
        raise ConfigError("beta", "beta values must lie in [1, 3)")
    if cfg.s is not None and not 0.0 < cfg.s < 1.0:
        raise ConfigError("s", "s must lie in (0, 1)")
    if cfg.kind == "stability-ratio" and cfg.s is None:
        raise ConfigError("s", "stability-ratio studies need s")
    if cfg.kind == "stability-ratio" and cfg.domain == "face":
        raise ConfigError("domain", "stability ratios live on the reference square or triangle")
    if int(cfg.quad_level) != cfg.quad_level or cfg.quad_level < 0:
        raise ConfigError("quad_level", "quadrature level must be a nonnegative integer")
    if any(e <= 0 for e in cfg.eps):
        raise ConfigError("eps", "eps values must be positive")
    if any(a <= 0 or b <= 0 for a, b in cfg.pairs):
        raise ConfigError("pairs", "scalings must be positive")
    if cfg.refine < 0:
        raise ConfigError("refine", "refine must be nonnegative")
    if cfg.threads < 1:
        raise ConfigError("threads", "threads must be at least 1")


# ------------------------------------------------------------ parsing

def _num(text, key):
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(key, f"not a number: {text!r}") from None


def _list(text, key):
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    if not parts:
        raise ConfigError(key, "empty list")
    return tuple(_num(p, key) for p in parts)


def _int(text, key):
    v = _num(text, key)
    if v != int(v):
        raise ConfigError(key, f"integer expected, got {text.strip()!r}")
    return int(v)


def _int_list(text, key):
    vals = _list(text, key)
    if any(v != int(v) for v in vals):
        raise ConfigError(key, "integers expected")
    return tuple(int(v) for v in vals)


def _pairs(text, key):
    out = []
    for p in text.split(","):
        if not p.strip():
            continue
        if ":" not in p:
            raise ConfigError(key, f"expected h1:h2, got {p.strip()!r}")
        a, b = p.split(":", 1)
        out.append((_num(a, key), _num(b, key)))
    if not out:
        raise ConfigError(key, "empty list")
    return tuple(out)


PARAM_KEYS = ("alpha", "sign", "a", "b", "c", "value")
KNOWN_KEYS = {"kind", "family", "beta", "n", "s", "quad_level", "domain", "eps", "pairs",
              "refine", "output", "plot", "threads"} | set(PARAM_KEYS)


def config_from_mapping(m, overrides=None):
    """Build a StudyConfig from a flat str -> str mapping (keys case-insensitive)."""
    m = {k.lower(): v for k, v in m.items()}
    for k, v in (overrides or {}).items():
        if v is not None:
            m[k.lower()] = str(v)
    unknown = sorted(set(m) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    if "kind" not in m:
        raise ConfigError("kind", "missing")
    kw = {"kind": m["kind"].strip()}
    if "family" in m:
        kw["family"] = m["family"].strip()
    if "domain" in m:
        kw["domain"] = m["domain"].strip()
    if "beta" in m:
        kw["betas"] = _list(m["beta"], "beta")
    if "n" in m:
        kw["Ns"] = _int_list(m["n"], "N")
    if "s" in m and m["s"].strip():
        kw["s"] = _num(m["s"], "s")
    if "quad_level" in m:
        kw["quad_level"] = _int(m["quad_level"], "quad_level")
    if "eps" in m:
        kw["eps"] = _list(m["eps"], "eps")
    if "pairs" in m:
        kw["pairs"] = _pairs(m["pairs"], "pairs")
    if "refine" in m:
        kw["refine"] = _int(m["refine"], "refine")
    if "threads" in m:
        kw["threads"] = _int(m["threads"], "threads")
    for k in ("output", "plot"):
        if m.get(k, "").strip():
            kw[k] = m[k].strip()
    kw["params"] = {k: _num(m[k], k) for k in PARAM_KEYS if k in m}
    return StudyConfig(**kw)


def load_config(path, overrides=None):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    if not cp.has_section("study"):
        raise ConfigError("study", "missing [study] section")
    return config_from_mapping(dict(cp.items("study")), overrides)


# ------------------------------------------------------------ building blocks

def make_field(family, params):
    p = dict(params)
    if family == "rt0":
        return rt0_field(p.get("a", 1.0), p.get("b", 0.0), p.get("c", 0.0))
    if family == "constant":
        v = p.get("value", 1.0)
        return polynomial_field({(0, 0): v}, {(0, 0): v})
    if family == "trig":
        return trig_field()
    if family == "trig-divfree":
        return trig_divfree_field()
    if family == "singular":
        return singular_field(p.get("alpha", 0.3))
    if family == "singular-pair":
        return singular_pair_field(p.get("alpha", 0.3), int(p.get("sign", 1.0)))
    if family == "counterexample":
        return build_counterexample_field(p.get("eps", 0.5))
    raise ConfigError("family", f"unknown field family {family!r}")


UNIT_FACE = FaceGeometry(((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)))


def make_mesh(domain, N, beta):
    spec = GradingSpec(int(N), float(beta))
    if domain == "square":
        return build_reference_graded_square(spec)
    if domain == "triangle":
        return build_reference_graded_triangle(spec)
    if domain == "face":
        return build_graded_face_mesh(UNIT_FACE, spec)
    raise ConfigError("domain", f"unknown domain {domain!r}")


@dataclass(frozen=True)
class RateFit:
    order: float
    coefficient: float
    r2: float

    @property
    def flagged(self):
        return self.r2 < 0.95


def fit_rate(h, e):
    """Least-squares fit e ~ C h^order on log-log data."""
    h = np.asarray(h, float)
    e = np.asarray(e, float)
    if h.shape != e.shape or h.ndim != 1:
        raise ValueError("h and e must be 1D arrays of equal length")
    if len(h) < 3:
        raise ValueError("at least 3 points needed")
    if np.any(h <= 0) or np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValueError("h and e must be positive and finite")
    x, y = np.log(h), np.log(e)
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(res**2) / ss if ss > 0 else 1.0
    return RateFit(float(slope), float(np.exp(icpt)), float(r2))


# ------------------------------------------------------------ study kinds

def _field(cfg):
    # the counterexample family takes the first eps of the list
    return make_field(cfg.family, {"eps": cfg.eps[0], **cfg.params})


def _grid(cfg):
    return [(b, n) for b in cfg.betas for n in cfg.Ns]


def _interp_row(cfg, f, beta, N):
    mesh = make_mesh(cfg.domain, N, beta)
    rt = interpolate_rt(f, mesh)
    e0 = l2_error(f, rt)
    row = {"beta": beta, "N": N, "h": 1.0 / N, "h_max": float(mesh.diameters.max()),
           "n_elements": mesh.n_elements, "l2_error": e0,
           "normalized": e0 / (1.0 / N) ** (1.0 - beta / 2.0)}
    if f.div is not None:
        row["hdiv_error"] = hdiv_error(f, rt)
        row["commuting_defect"] = commuting_defect(f, mesh, rt)
    return row


def _add_eoc(rows, key, out_key="eoc"):
    prev = {}
    for r in rows:
        p = prev.get(r["beta"])
        r[out_key] = (np.log(p[key] / r[key]) / np.log(r["N"] / p["N"])
                      if p is not None and p[key] > 0 and r[key] > 0 else float("nan"))
        prev[r["beta"]] = r


def _per_beta_fit(rows, key, xkey="h", sign=1.0):
    out = {}
    for b in sorted({r["beta"] for r in rows}):
        sub = [r for r in rows if r["beta"] == b]
        if len(sub) >= 3:
            vals = np.array([r[key] for r in sub])
            if np.all(vals > 0) and np.all(np.isfinite(vals)):
                out[b] = fit_rate([r[xkey] ** sign for r in sub], vals)
    return out


def _run_interp(cfg, pool):
    f = _field(cfg)
    rows = list(pool.map(lambda bn: _interp_row(cfg, f, *bn), _grid(cfg)))
    _add_eoc(rows, "l2_error")
    summary = {}
    for b, fit in _per_beta_fit(rows, "l2_error").items():
        summary[f"eoc[beta={_fmt(b)}]"] = fit.order
        summary[f"eoc_r2[beta={_fmt(b)}]"] = fit.r2
    for b, fit in _per_beta_fit(rows, "normalized").items():
        summary[f"normalized_slope[beta={_fmt(b)}]"] = fit.order
    return rows, summary


def _branch(cfg):
    return HIGH if cfg.s > 0.5 else LOW


def _run_stability(cfg, pool):
    f = _field(cfg)
    kind = PARALLELOGRAM if cfg.domain == "square" else TRIANGLE
    br = _branch(cfg)
    rhs = dict(zip((1, 2), pool.map(
        lambda l: stability_rhs(f, kind, cfg.s, l, br, cfg.quad_level), (1, 2))))

    def row(bn):
        beta, N = bn
        mesh = make_mesh(cfg.domain, N, beta)
        r = domain_stability_ratios(f, mesh, cfg.s, br, cfg.quad_level, rhs)
        out = {"beta": beta, "N": N, "branch": br}
        for l in (1, 2):
            out[f"pi_l2_{l}"] = r[l].numerator
            out[f"rhs_{l}"] = rhs[l].total
            out[f"ratio_{l}"] = r[l].ratio
        out["quad_error"] = max(rhs[1].quad_error, rhs[2].quad_error)
        return out

    rows = list(pool.map(row, _grid(cfg)))
    summary = {}
    for l in (1, 2):
        for b, fit in _per_beta_fit(rows, f"ratio_{l}", "N").items():
            summary[f"ratio_{l}_slope_vs_N[beta={_fmt(b)}]"] = fit.order
        vals = [r[f"ratio_{l}"] for r in rows if np.isfinite(r[f"ratio_{l}"])]
        if vals:
            summary[f"ratio_{l}_max"] = max(vals)
    return rows, summary


def _run_counterexample(cfg, pool):
    reports = list(pool.map(counterexample_report, cfg.eps))
    rows = []
    for r in reports:
        rows.append({"eps": r.eps, "rstar": r.rstar, "flux_residual": r.flux_residual,
                     "pi_u1": r.pi_value[0], "pi_u2": r.pi_value[1],
                     "u2_l2": r.u2_l2, "u2_semi": r.u2_semi, "u2_semi_error": r.u2_semi_error,
                     "u2_h12": r.u2_h12, "div_l2": r.div_l2,
                     "log_ah1_u1_sq": r.log_ah1_u1_sq, "ratio_plain": r.ratio_plain,
                     "ratio_augmented": r.ratio_augmented,
                     "log10_ratio_augmented": r.log10_ratio_augmented})
    summary = {}
    if len(rows) >= 2:
        summary["plain_growth"] = rows[-1]["ratio_plain"] / rows[0]["ratio_plain"]
        la = [r["log10_ratio_augmented"] for r in rows]
        summary["augmented_log10_spread"] = max(la) - min(la)
        summary["plain_monotone"] = float(all(
            b["ratio_plain"] > a["ratio_plain"] for a, b in zip(rows, rows[1:])))
    summary["max_flux_residual"] = max(r["flux_residual"] for r in rows)
    return rows, summary


def _run_infsup(cfg, pool):
    def row(bn):
        beta, N = bn
        mesh = make_mesh(cfg.domain, N, beta)
        return {"beta": beta, "N": N, "n_elements": mesh.n_elements,
                "inf_sup": inf_sup_constant(mesh),
                "saddle_condition": saddle_condition_number(mesh)}

    rows = list(pool.map(row, _grid(cfg)))
    summary = {}
    for b, fit in _per_beta_fit(rows, "inf_sup", "N").items():
        summary[f"inf_sup_slope_vs_N[beta={_fmt(b)}]"] = fit.order
    vals = [r["inf_sup"] for r in rows if np.isfinite(r["inf_sup"])]
    if vals:
        summary["inf_sup_min"] = min(vals)
        summary["inf_sup_spread"] = max(vals) / min(vals)
    return rows, summary


def _run_qh(cfg, pool):
    f = _field(cfg)

    def row(bn):
        beta, N = bn
        mesh = make_mesh(cfg.domain, N, beta)
        sol = solve_qh(f, mesh)
        rt = interpolate_rt(f, mesh)
        e_int = hdiv_error(f, rt)
        e_qh = hdiv_error(f, sol.z)
        e_dual = dual_error_mesh(f, sol.z, cfg.refine)
        p0 = project_piecewise_constant(f.require_div(), mesh, singular_lines=f.singular_lines)
        return {"beta": beta, "N": N, "h": 1.0 / N, "dual_error": e_dual,
                "hdiv_interp_error": e_int, "hdiv_qh_error": e_qh,
                "ratio": e_dual / e_int if e_int > 1e-14 else float("nan"),
                "quasi_opt": e_qh / e_int if e_int > 1e-14 else float("nan"),
                "commuting_defect": float(np.max(np.abs(sol.z.divergence() - p0.values))),
                "mean_f": float(np.dot(sol.f.values, mesh.areas)),
                "residual": sol.residual}

    rows = list(pool.map(row, _grid(cfg)))
    summary = {}
    for b, fit in _per_beta_fit(rows, "ratio").items():
        summary[f"ratio_slope[beta={_fmt(b)}]"] = fit.order
        summary[f"ratio_r2[beta={_fmt(b)}]"] = fit.r2
    summary["max_commuting_defect"] = max(r["commuting_defect"] for r in rows)
    return rows, summary


def _run_scaling(cfg, pool):
    f = _field(cfg)
    kind = TRIANGLE if cfg.domain != "square" else PARALLELOGRAM

    def row(p):
        h1, h2 = p
        r = piola_scaling_identity_check(h1, h2, f.u1, cfg.quad_level, f.singular_lines, kind)
        return {"h1": h1, "h2": h2, **r}

    rows = list(pool.map(row, cfg.pairs))
    keys = ("l2_u1", "l2_u2", "ah2_u2", "ah1_u1")
    summary = {"max_identity_residual": max(max(r[k] for k in keys) for r in rows),
               "min_h12_slack": min(r["h12_slack"] for r in rows)}
    return rows, summary


RUNNERS = {
    "interp-convergence": _run_interp,
    "stability-ratio": _run_stability,
    "counterexample": _run_counterexample,
    "infsup": _run_infsup,
    "qh-rate": _run_qh,
    "scaling-identity": _run_scaling,
}


class _Serial:
    def map(self, fn, it):
        return map(fn, it)


@dataclass
class StudyResult:
    config: StudyConfig
    rows: list
    summary: dict

    @property
    def columns(self):
        cols = []
        for r in self.rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        return cols

    def header_lines(self):
        out = [f"gradedrt {__version__}", f"study = {self.config.kind}",
               f"quad_level = {self.config.quad_level}"]
        out += [f"config: {line}" for line in self.config.echo()]
        if self.config.kind in ("qh-rate", "stability-ratio", "counterexample"):
            out.append("note: norms are per-face (reference-domain) surrogates of the global "
                       "trace-space norms")
        return out

    def to_csv(self):
        buf = io.StringIO()
        for line in self.header_lines():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        cols = self.columns
        w.writerow(cols)
        for r in self.rows:
            w.writerow([_cell(r.get(c, "")) for c in cols])
        for k in self.summary:
            buf.write(f"# summary: {k} = {_cell(self.summary[k])}\n")
        return buf.getvalue()

    def write(self, path=None, plot=None):
        path = path or self.config.output
        if path:
            with open(path, "w") as fh:
                fh.write(self.to_csv())
        plot = plot or self.config.plot
        if plot:
            xk, yk = PLOT_AXES.get(self.config.kind, (None, None))
            if xk is not None:
                with open(plot, "w") as fh:
                    fh.write(svg_loglog(self.rows, xk, yk,
                                        "beta" if "beta" in self.columns else None))


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


PLOT_AXES = {"interp-convergence": ("h", "l2_error"), "qh-rate": ("h", "ratio"),
             "infsup": ("N", "inf_sup"), "stability-ratio": ("N", "ratio_1"),
             "counterexample": ("eps", "ratio_plain")}


def run_study(cfg, threads=None):
    threads = cfg.threads if threads is None else threads
    runner = RUNNERS[cfg.kind]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows, summary = runner(cfg, ex)
    else:
        rows, summary = runner(cfg, _Serial())
    return StudyResult(cfg, rows, summary)


# ------------------------------------------------------------ plot

def svg_loglog(rows, xkey, ykey, series_key=None, width=480, height=360):
    """Minimal log-log polyline plot, one polyline per series value."""
    pts = [(r[xkey], r[ykey], r.get(series_key) if series_key else None) for r in rows
           if r.get(xkey, 0) > 0 and r.get(ykey, 0) > 0 and np.isfinite(r[ykey])]
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="10" y="16" font-size="12">log {ykey} vs log {xkey}</text>']
    if pts:
        lx = np.log10([p[0] for p in pts])
        ly = np.log10([p[1] for p in pts])
        x0, x1 = lx.min(), lx.max() if lx.max() > lx.min() else lx.min() + 1
        y0, y1 = ly.min(), ly.max() if ly.max() > ly.min() else ly.min() + 1
        m = 40
        sx = lambda v: m + (v - x0) / (x1 - x0) * (width - 2 * m)
        sy = lambda v: height - m - (v - y0) / (y1 - y0) * (height - 2 * m)
        colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
        series = []
        for p in pts:
            if p[2] not in series:
                series.append(p[2])
        for i, sval in enumerate(series):
            sel = [(sx(a), sy(b)) for (a, b, c) in zip(lx, ly, [p[2] for p in pts]) if c == sval]
            poly = " ".join(f"{a:.2f},{b:.2f}" for a, b in sel)
            col = colors[i % len(colors)]
            lines.append(f'<polyline fill="none" stroke="{col}" points="{poly}"/>')
            label = f"{series_key}={_cell(sval)}" if series_key else ykey
            lines.append(f'<text x="{width - 120}" y="{30 + 14 * i}" font-size="11" '
                         f'fill="{col}">{label}</text>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"

