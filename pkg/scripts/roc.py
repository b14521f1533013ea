"""Detection probability versus false-alarm rate, theory against simulation."""

from _common import load, parser, show, timed

from isac_slp.harness import emit_table, run_roc


def main():
    args = parser(__doc__, "desk.cfg").parse_args()
    spec = load(args, "roc")
    table = timed(run_roc, spec, threads=args.threads)
    emit_table(table, spec.output_path)
    show(table, ["pd_theory", "pd_empirical"])
    print(f"wrote {spec.output_path}")


if __name__ == "__main__":
    main()
