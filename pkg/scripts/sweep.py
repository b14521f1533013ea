"""DoA RMSE and detection probability versus target distance."""

from _common import load, parser, show, timed

from isac_slp.harness import emit_table, run_distance_sweep


def main():
    args = parser(__doc__, "desk.cfg").parse_args()
    spec = load(args, "sweep")
    if not args.out:
        spec = spec.with_(output_path="sweep_desk.csv")
    table = timed(run_distance_sweep, spec, threads=args.threads)
    emit_table(table, spec.output_path)
    show(table, ["rmse_deg", "pd_theory", "pd_empirical"])
    print(f"wrote {spec.output_path}")


if __name__ == "__main__":
    main()
