"""Oracle cross-checks; exits non-zero if any check fails."""

import sys

from _common import load, parser, timed

from isac_slp.harness import run_validate
from isac_slp.harness.validate import all_passed


def main():
    p = parser(__doc__, "desk.cfg")
    p.add_argument("--perturb", type=float, default=0.0,
                   help="relative error injected into the Woodbury capacitance")
    args = p.parse_args()
    spec = load(args, "validate")
    table = timed(run_validate, spec, perturb=args.perturb)
    for r in table:
        if not r.metric.endswith(".pass"):
            verdict = "ok" if r.value <= r.stderr else "FAIL"
            print(f"{r.metric:<24}{r.value:>12.3e}  tol {r.stderr:.0e}  {verdict}")
    sys.exit(0 if all_passed(table) else 1)


if __name__ == "__main__":
    main()
