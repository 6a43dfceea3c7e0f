"""Command-line interface.

Exit codes: 0 success, 2 configuration or usage error, 3 quadrature did not
converge.
"""
import argparse
import sys

from . import __version__
from .quadrature import QuadratureError
from .study import ConfigError, config_from_mapping, load_config, make_mesh, run_study
from .mesh import mesh_quality_report, write_mesh

EXIT_OK, EXIT_CONFIG, EXIT_QUADRATURE = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _common(p):
    p.add_argument("--config", help="INI file with a [study] section")
    p.add_argument("--out", help="output file (CSV for studies, mesh text for mesh)")
    p.add_argument("--quad-level", type=int, help="quadrature refinement level")
    p.add_argument("--threads", type=int, help="worker threads for independent grid points")


def build_parser():
    ap = _Parser(prog="gradedrt", description="RT0 interpolation on graded meshes")
    ap.add_argument("--version", action="version", version=f"gradedrt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mesh", help="write a graded mesh and print its quality report")
    _common(p)
    p.add_argument("--domain", default="square", choices=["square", "triangle", "face"])
    p.add_argument("--N", type=int, default=4)
    p.add_argument("--beta", type=float, default=2.0)

    for name, helptext in (("interp", "interpolation errors over a (beta, N) grid"),
                           ("study", "run the study described by --config"),
                           ("counterexample", "counterexample ratios over eps"),
                           ("infsup", "discrete inf-sup constants over a (beta, N) grid"),
                           ("qh", "Q_h projection errors and ratio slope")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--plot", help="also write a log-log SVG plot")
        if name != "study":
            p.add_argument("--family")
            p.add_argument("--alpha")
            p.add_argument("--domain")
            p.add_argument("--beta", help="comma-separated list")
            p.add_argument("--N", dest="n", help="comma-separated strictly increasing list")
            p.add_argument("--eps", help="comma-separated list")
            p.add_argument("--refine")
    return ap


SUBCOMMAND_KIND = {"interp": "interp-convergence", "counterexample": "counterexample",
                   "infsup": "infsup", "qh": "qh-rate"}
DEFAULT_FAMILY = {"interp": "singular", "qh": "trig-divfree", "counterexample": "counterexample",
                  "infsup": "trig"}


def _study_config(args):
    overrides = {"quad_level": args.quad_level, "threads": args.threads, "output": args.out,
                 "plot": getattr(args, "plot", None)}
    if args.command == "study":
        if not args.config:
            raise ConfigError("config", "the study subcommand needs --config")
        return load_config(args.config, overrides)
    overrides.update({k: getattr(args, k) for k in
                      ("family", "alpha", "domain", "beta", "n", "eps", "refine")})
    overrides["kind"] = SUBCOMMAND_KIND[args.command]
    if args.config:
        return load_config(args.config, overrides)
    base = {"kind": overrides["kind"], "family": DEFAULT_FAMILY[args.command]}
    if args.command in ("infsup", "qh"):
        base.update({"beta": "2", "N": "4, 8, 16, 32"})
    return config_from_mapping(base, overrides)


def _run_mesh(args):
    mesh = make_mesh(args.domain, args.N, args.beta)
    q = mesh_quality_report(mesh)
    if args.out:
        write_mesh(mesh, args.out)
    for k, v in q.as_dict().items():
        print(f"{k} = {v}")
    return EXIT_OK


def _print_summary(res):
    if res.config.output is None:
        sys.stdout.write(res.to_csv())
    else:
        for k, v in res.summary.items():
            print(f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}")


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "mesh":
            if args.N < 1 or args.beta < 1:
                raise ConfigError("N" if args.N < 1 else "beta",
                                  "N must be >= 1 and beta >= 1")
            return _run_mesh(args)
        cfg = _study_config(args)
        res = run_study(cfg)
        res.write()
        _print_summary(res)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QuadratureError as exc:
        print(f"quadrature did not converge: {exc}", file=sys.stderr)
        return EXIT_QUADRATURE


if __name__ == "__main__":
    sys.exit(main())
