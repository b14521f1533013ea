"""One precoding solve at reference scale, with timing and diagnostics."""

from _common import load, parser, show, timed

from isac_slp.harness import run_solve


def main():
    args = parser(__doc__, "reference_smoke.cfg").parse_args()
    spec = load(args, "solve")
    table = timed(run_solve, spec, threads=args.threads)
    show(table, ["rho", "residual_rel", "power_ratio", "feasible"])


if __name__ == "__main__":
    main()
