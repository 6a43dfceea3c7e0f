"""Slope of the Q_h dual-error ratio as a function of the dual-norm test space.

Compares P1 on the mesh red-refined r times (spectral Gram) with the fixed
uniform grid V_m (Slobodeckij Gram).  The fixed grid is coarser than the
graded mesh near the corner once N is large, so it stops resolving the error.
"""
import argparse

from gradedrt.fields import trig_divfree_field
from gradedrt.qh import qh_error_report
from gradedrt.study import fit_rate, make_mesh


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--domain", default="square", choices=["square", "triangle"])
    ap.add_argument("--refine", type=int, nargs="+", default=[0, 1, 2, 3])
    ap.add_argument("--grid-m", type=int, default=4)
    args = ap.parse_args(argv)
    Ns = (4, 8, 16, 32)
    meshes = [make_mesh(args.domain, N, 2.0) for N in Ns]
    h = [1.0 / N for N in Ns]
    u = trig_divfree_field()
    for r in args.refine:
        grid = args.grid_m if r == args.refine[0] else None
        rows = qh_error_report(u, meshes, refine=r, grid_m=grid)
        fit = fit_rate(h, [row.ratio for row in rows])
        print(f"mesh test space, refine={r}: slope {fit.order:.3f} (r2 {fit.r2:.4f})")
        if grid is not None:
            g = fit_rate(h, [row.dual_error_grid / row.hdiv_interp_error for row in rows])
            print(f"fixed grid V_{grid}, Slobodeckij Gram: slope {g.order:.3f} (r2 {g.r2:.4f})")


if __name__ == "__main__":
    main()
