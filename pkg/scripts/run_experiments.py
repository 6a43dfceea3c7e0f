"""Run every study config in scripts/configs (or the ones named on the
command line) and print each study's summary block.

    python scripts/run_experiments.py                 # all configs
    python scripts/run_experiments.py qh_rate.ini     # one config
"""
import argparse
import pathlib
import time

from gradedrt.study import load_config, run_study

HERE = pathlib.Path(__file__).resolve().parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*", help="config file names inside scripts/configs")
    ap.add_argument("--outdir", default=".", help="directory the relative output paths resolve against")
    args = ap.parse_args(argv)
    names = args.configs or sorted(p.name for p in (HERE / "configs").glob("*.ini"))
    outdir = pathlib.Path(args.outdir)
    (outdir / "results").mkdir(parents=True, exist_ok=True)
    for name in names:
        cfg = load_config(HERE / "configs" / name)
        t0 = time.perf_counter()
        res = run_study(cfg)
        res.write(outdir / cfg.output if cfg.output else None,
                  outdir / cfg.plot if cfg.plot else None)
        print(f"== {name} ({time.perf_counter() - t0:.1f} s)")
        for k, v in res.summary.items():
            print(f"   {k} = {v:.6g}" if isinstance(v, float) else f"   {k} = {v}")


if __name__ == "__main__":
    main()
