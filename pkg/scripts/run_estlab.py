"""Sample lowest-point non-resonant modes and probe the double-sum envelope."""

import argparse
from pathlib import Path

from parakam import cli, estlab


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--action", default="ex5", help="builtin name or action JSON file")
    ap.add_argument("--r", type=float, default=40.0)
    ap.add_argument("--eta", type=float, default=0.33)
    ap.add_argument("--samples", type=int, default=40)
    ap.add_argument("--lo", type=float, default=10.0)
    ap.add_argument("--hi", type=float, default=100.0)
    ap.add_argument("--split", type=float, default=50.0)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="estlab_run")
    args = ap.parse_args()

    pair = cli.resolve_action(args.action)
    s = estlab.run_envelope(pair, args.r, args.eta, args.lo, args.hi, args.samples, args.seed, args.split)
    print(f"probes {len(s.probes)}  certified {s.all_certified}  stable {s.stable}")
    print(f"max ratio |m| <= {args.split:g}: {s.max_ratio_low:.3e}   |m| >= {args.split:g}: {s.max_ratio_high:.3e}")
    print(f"good-side agreement {s.side_agreement:.2f}  log-log slope {s.slope:.2f}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "estlab.json").write_text(cli.dumps(s.to_json()))
    (out / "estlab.csv").write_text(cli.csv_text(estlab.CSV_HEADER, [p.csv_row() for p in s.probes]))
    print(f"wrote {out / 'estlab.json'} and {out / 'estlab.csv'}")


if __name__ == "__main__":
    main()
