"""Run the KAM iteration on a conjugacy fixture and print the per-step table."""

import argparse
from pathlib import Path

from parakam import cli, kamloop


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--action", default="ex33", help="builtin name or action JSON file")
    ap.add_argument("--eps", type=float, default=1e-3)
    ap.add_argument("--grid", type=int, default=256)
    ap.add_argument("--steps", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="kam_run")
    args = ap.parse_args()

    pair = cli.resolve_action(args.action)
    inp = kamloop.conjugacy_fixture(pair, args.eps, args.grid, args.seed)
    rep = kamloop.kam_run(inp, kamloop.KamConfig(eps=args.eps, n_max=args.steps))

    print(f"{'n':>2} {'N_n':>7} {'N used':>6} {'delta0':>10} {'delta0 next':>11} {'ave(H-Id)':>10} {'sec':>6}")
    for s in rep.steps:
        print(f"{s.n:>2} {s.N_n:>7.3f} {s.N_applied:>6g} {s.delta0:>10.3e} {s.delta0_next:>11.3e} "
              f"{s.ave_H:>10.1e} {s.seconds:>6.2f}")
    print(f"status {rep.status}  residuals {rep.residual_a:.2e} {rep.residual_b:.2e}  "
          f"truth error {rep.truth_error:.2e}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "kam.json").write_text(cli.dumps(rep.to_json()))
    (out / "kam.csv").write_text(cli.csv_text(
        ["n", "eps_n", "N_n", "N_applied", "delta0", "delta_l", "h_norm1"], rep.csv_rows()))
    print(f"wrote {out / 'kam.json'} and {out / 'kam.csv'}")


if __name__ == "__main__":
    main()
