"""Command-line entry point.

Exit codes: 0 ok / unlocked / converged, 1 I/O or schema error, 2 locked,
3 unlocked up to the scan bound, 4 no convergence, 5 no usable Diophantine
certificate.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from importlib import resources
from pathlib import Path

OUT_ENV = "PARAKAM_OUT"
EXIT_OK, EXIT_IO, EXIT_LOCKED, EXIT_UP_TO, EXIT_NOCONV, EXIT_NOCERT = 0, 1, 2, 3, 4, 5

log = logging.getLogger("parakam")


class _JsonLines(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        payload = {"level": record.levelname.lower(), "msg": record.getMessage()}
        payload.update(getattr(record, "fields", {}))
        return json.dumps(payload, sort_keys=True)


def _setup_logging() -> None:
    if log.handlers:
        return
    h = logging.StreamHandler(sys.stderr)
    h.setFormatter(_JsonLines())
    log.addHandler(h)
    log.setLevel(logging.INFO)
    log.propagate = False


# ---------------------------------------------------------------- serialization


def clean(obj):
    """JSON-ready copy with floats fixed to 15 significant digits and non-finite values as strings."""
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return float(f"{obj:.15e}")
    if isinstance(obj, complex):
        return [clean(obj.real), clean(obj.imag)]
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalars
        return clean(obj.item())
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), sort_keys=True, indent=2) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([clean(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


# ---------------------------------------------------------------- arguments


def builtin_actions() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("parakam.data").iterdir() if p.name.endswith(".json"))


def resolve_action(name_or_path: str):
    from . import action

    path = Path(name_or_path)
    if path.is_file():
        return action.load_action(path)
    if name_or_path in builtin_actions():
        text = resources.files("parakam.data").joinpath(name_or_path + ".json").read_text()
        return action.action_from_dict(json.loads(text))
    raise FileNotFoundError(f"no action file or builtin named {name_or_path!r}")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--action", help="action JSON file or builtin name (" + ", ".join(builtin_actions()) + ")")
    common.add_argument("--N", type=float, help="scan radius / truncation level")
    common.add_argument("--tau", type=float, default=1.0, help="Diophantine exponent")
    common.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./parakam_out)")
    common.add_argument("--threads", type=int, help="cap on numerical library threads")
    common.add_argument("--seed", type=int, default=0)

    p = argparse.ArgumentParser(prog="parakam", description=__doc__.splitlines()[0])
    p.add_argument("--replay", help="re-run the command recorded in a manifest")
    sub = p.add_subparsers(dest="command")

    sub.add_parser("classify", parents=[common], help="locked / unlocked verdict")
    sub.add_parser("resonances", parents=[common], help="CSV of resonant modes with |m| <= N")
    sub.add_parser("diophantine", parents=[common], help="finite-ball Diophantine certificate")

    s = sub.add_parser("solve", parents=[common], help="linearized solve on a coboundary fixture")
    s.add_argument("--fixture", choices=["coboundary", "zero"], default="coboundary")
    s.add_argument("--support", type=float, default=8.0)
    s.add_argument("--scalar", action="store_true", help="scalar instead of vector-valued data")

    k = sub.add_parser("kam", parents=[common], help="run the nonlinear iteration on a fixture")
    k.add_argument("--fixture", choices=["Conjugacy", "StandardMap", "IdentityFactor"], default="Conjugacy")
    k.add_argument("--eps", type=float, default=1e-3)
    k.add_argument("--D", type=float, help="schedule exponent (default d(d+1))")
    k.add_argument("--grid", type=int, default=256)
    k.add_argument("--steps", type=int, default=6)
    k.add_argument("--target", type=float, default=1e-9)
    k.add_argument("--rounding", choices=["ceil", "floor", "none"], default="ceil")
    k.add_argument("--cert", help="certificate JSON to use instead of computing one")

    e = sub.add_parser("estlab", parents=[common], help="double-sum and drift probes")
    e.add_argument("--r", type=float, default=40.0)
    e.add_argument("--eta", type=float)
    e.add_argument("--samples", type=int, default=40)
    e.add_argument("--lo", type=float, default=10.0)
    e.add_argument("--hi", type=float, default=100.0)
    e.add_argument("--split", type=float, default=50.0)
    e.add_argument("--drift-samples", type=int, default=5)
    return p


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or "parakam_out")


def _resolved_argv(args) -> list[str]:
    out = [args.command]
    for key, val in sorted(vars(args).items()):
        if key in ("command", "replay") or val is None or val is False:
            continue
        flag = "--" + key.replace("_", "-") if key not in ("N", "D") else "--" + key
        out.append(flag) if val is True else out.extend([flag, str(val)])
    return out


def _manifest(args, outputs: list[str], pair=None) -> dict:
    from . import __version__

    cfg = {k: v for k, v in vars(args).items() if k != "replay"}
    return {"command": args.command, "config": cfg, "argv": _resolved_argv(args), "version": __version__,
            "action": pair.to_json() if pair is not None else None, "outputs": sorted(outputs)}


def _finish(args, outs: dict, pair=None) -> None:
    base = _out_dir(args)
    for name, text in outs.items():
        _write(base / name, text)
    _write(base / f"{args.command}.manifest.json", dumps(_manifest(args, list(outs), pair)))


# ---------------------------------------------------------------- commands


def cmd_classify(args) -> int:
    from . import action

    pair = resolve_action(args.action)
    n = args.N if args.N is not None else 30
    cert = action.classify_locked(pair.A, pair.B, n)
    fac = action.maximal_translation_factor(pair)
    body = {"certificate": cert.to_json(),
            "translation_factor": {"dim": fac.dim, "projection": [list(r) for r in fac.projection],
                                   "alpha": [float(x) for x in fac.alpha], "beta": [float(x) for x in fac.beta]}}
    _finish(args, {"classify.json": dumps(body)}, pair)
    sys.stdout.write(dumps(body))
    return {action.LOCKED: EXIT_LOCKED, action.UNLOCKED: EXIT_OK}.get(cert.verdict, EXIT_UP_TO)


def resonant_records(pair, n: float) -> list:
    """ResonanceRecords of every resonant mode with |m| <= n, sorted by norm then lexicographically."""
    import numpy as np

    from . import resonance

    pts, code, _, _, red = resonance.scan_ball(pair.A, pair.B, n)
    res = pts[code == 1]
    inactive = [i for i in range(pair.dim) if i not in red.active]
    modes = []
    r2 = n * n + 1e-9
    for y in res:
        left = r2 - float((y * y).sum())
        if inactive:
            xs = resonance.ball_points(len(inactive), math.sqrt(max(left, 0.0)))
            full = np.repeat(y[None, :], xs.shape[0], axis=0)
            full[:, inactive] = xs
        else:
            full = y[None, :]
        modes.extend(tuple(int(v) for v in row) for row in full)
    modes.sort(key=lambda m: (sum(v * v for v in m), m))
    if not modes:
        return []
    return resonance.resonant_records_bulk(pair.A, pair.B, np.array(modes, dtype=np.int64))


def cmd_resonances(args) -> int:
    from . import resonance

    pair = resolve_action(args.action)
    n = args.N if args.N is not None else 5
    recs = resonant_records(pair, n)
    text = resonance.records_to_csv(recs)
    _finish(args, {"resonances.csv": text}, pair)
    log.info("resonances written", extra={"fields": {"count": len(recs), "N": n}})
    return EXIT_OK


def cmd_diophantine(args) -> int:
    from . import action
    from .errors import DegenerateResonance

    pair = resolve_action(args.action)
    n = args.N if args.N is not None else 30
    try:
        body = action.diophantine_certificate(pair, args.tau, n).to_json()
        code = EXIT_OK
    except DegenerateResonance as exc:
        gsdc, wit = action.sdc_constant(pair, args.tau, n)
        body = {"tau": args.tau, "scan_bound": n, "gamma_sdc": gsdc, "sdc_witness": wit, "gamma_res": 0.0,
                "res_witness": list(exc.witness) if exc.witness else None,
                "res_pair": list(exc.pair) if exc.pair else None, "error": str(exc)}
        code = EXIT_NOCERT
    _finish(args, {"diophantine.json": dumps(body)}, pair)
    sys.stdout.write(dumps(body))
    return code


def _solver_gamma(pair, tau: float, n: float) -> float:
    from . import action

    g, _ = action.sdc_constant(pair, tau, n)
    return 0.5 * g if math.isfinite(g) and g > 0 else 1.0


def cmd_solve(args) -> int:
    import numpy as np

    from . import action, cohomo, fourier, resonance

    pair = resolve_action(args.action)
    n = args.N if args.N is not None else 32
    lock = action.classify_locked(pair.A, pair.B, min(n, 30))
    if lock.verdict == action.LOCKED:
        log.info("locked action, solve refused", extra={"fields": {"kind": lock.kind}})
        _finish(args, {"solve.json": dumps({"refused": "Locked", "certificate": lock.to_json()})}, pair)
        return EXIT_LOCKED
    rank = 0 if args.scalar else pair.dim
    rng = np.random.default_rng(args.seed)
    if args.fixture == "zero":
        hstar = fourier.zeros(pair.dim, args.support, rank)
    else:
        hstar = fourier.random_field(pair.dim, args.support, rng, rank=rank)
    pairs = resonance.resonance_pairs_up_to(pair.A, pair.B, n).pairs
    diff = fourier.coboundary if rank == 0 else fourier.twisted_diff_vec
    q = {st: diff(hstar, pair, *st, trunc_N=n) for st in pairs}
    gamma = _solver_gamma(pair, args.tau, n)
    solve = cohomo.solve_scalar if rank == 0 else cohomo.solve_vector
    rep = solve(q, pair, n, gamma, args.tau)
    m = 4 * int(math.ceil(max(n, args.support)))
    err = fourier.norm_0(fourier.sub(rep.h, hstar), m)
    ptil = max((fourier.norm_0(v, m) for v in rep.p_tilde.values()), default=0.0)
    body = {"report": rep.to_json(), "recovery_error": err, "max_p_tilde": ptil, "pairs": [list(p) for p in pairs],
            "gamma": gamma}
    _finish(args, {"solve.json": dumps(body)}, pair)
    sys.stdout.write(dumps({"recovery_error": err, "max_p_tilde": ptil}))
    return EXIT_OK


def _cert_gamma(args, pair) -> float | None:
    """γ_sdc from --cert or from a fresh scan; None when no usable certificate exists."""
    from . import action

    if args.cert:
        data = json.loads(Path(args.cert).read_text())
        g = data.get("gamma_sdc")
        if g is None:
            return None
        g = math.inf if g == "inf" else float(g)
    else:
        g, _ = action.sdc_constant(pair, args.tau, args.N if args.N is not None else 30)
    return g if g > 0 else None


def cmd_kam(args) -> int:
    from . import action, kamloop

    if args.fixture == kamloop.CONJUGACY:
        if not args.action:
            raise ValueError("the Conjugacy fixture needs --action")
        pair = resolve_action(args.action)
        inp = kamloop.make_fixture(kamloop.CONJUGACY, pair, args.eps, args.grid, args.seed)
    else:
        inp = kamloop.make_fixture(args.fixture, eps=args.eps, M=args.grid)
        pair = inp.pair
    lock = action.classify_locked(pair.A, pair.B, args.N if args.N is not None else 30)
    if lock.verdict == action.LOCKED:
        body = {"status": kamloop.LOCKED, "certificate": lock.to_json()}
        _finish(args, {"kam.json": dumps(body)}, pair)
        sys.stdout.write(dumps({"status": kamloop.LOCKED, "kind": lock.kind}))
        return EXIT_LOCKED
    g = _cert_gamma(args, pair)
    if g is None:
        body = {"status": "NoCertificate"}
        _finish(args, {"kam.json": dumps(body)}, pair)
        log.info("no usable Diophantine certificate")
        return EXIT_NOCERT
    cfg = kamloop.KamConfig(eps=args.eps, D=args.D, n_max=args.steps, target=args.target, tau=args.tau,
                            gamma=0.5 * g if math.isfinite(g) else None, rounding=args.rounding, strict=False,
                            cert_scan=args.N if args.N is not None else 30.0)
    rep = kamloop.kam_run(inp, cfg, gate=False)
    for s in rep.steps:
        log.info("step", extra={"fields": {"n": s.n, "delta0": s.delta0, "seconds": round(s.seconds, 3)}})
    body = rep.to_json()
    rows = rep.csv_rows()
    _finish(args, {"kam.json": dumps(body),
                   "kam.csv": csv_text(["n", "eps_n", "N_n", "N_applied", "delta0", "delta_l", "h_norm1"], rows)},
            pair)
    sys.stdout.write(dumps({"status": rep.status, "residual_a": rep.residual_a, "residual_b": rep.residual_b,
                            "steps": len(rep.steps)}))
    return EXIT_OK if rep.converged else EXIT_NOCONV


def cmd_estlab(args) -> int:
    from . import estlab

    pair = resolve_action(args.action)
    ms = estlab.sample_lowest_c3(pair, args.lo, args.hi, args.samples, args.seed)
    probes = [estlab.probe_double_sum(pair, m, args.r, args.eta) for m in ms]
    summary = estlab.envelope_summary(probes, args.split)
    drifts = [estlab.probe_drift(pair, m).to_json() for m in ms[: args.drift_samples]]
    body = {"summary": summary.to_json(), "probes": [p.to_json() for p in probes], "drift": drifts}
    for m in summary.side_mismatches:
        log.info("good-sign mismatch", extra={"fields": {"m": list(m)}})
    _finish(args, {"estlab.json": dumps(body),
                   "estlab.csv": csv_text(estlab.CSV_HEADER, [p.csv_row() for p in probes])}, pair)
    sys.stdout.write(dumps(summary.to_json()))
    return EXIT_OK


COMMANDS = {"classify": cmd_classify, "resonances": cmd_resonances, "diophantine": cmd_diophantine,
            "solve": cmd_solve, "kam": cmd_kam, "estlab": cmd_estlab}


def _limit_threads(n: int | None) -> None:
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _parser()
    args = parser.parse_args(argv)
    if args.replay:
        try:
            recorded = json.loads(Path(args.replay).read_text())["argv"]
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            log.error("cannot read manifest", extra={"fields": {"error": str(exc)}})
            return EXIT_IO
        args = parser.parse_args(recorded)
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_IO
    _limit_threads(args.threads)
    if args.command != "kam" and not args.action:
        log.error("--action is required")
        return EXIT_IO
    from .errors import ParakamError

    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        log.error("input error", extra={"fields": {"error": f"{type(exc).__name__}: {exc}"}})
        return EXIT_IO
    except ParakamError as exc:
        log.error("domain error", extra={"fields": {"error": f"{type(exc).__name__}: {exc}"}})
        return EXIT_IO
