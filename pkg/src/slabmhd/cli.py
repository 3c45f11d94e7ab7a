"""Command-line interface.

Subcommands:
    run <config>                 advance a scenario, write series + figures
    verify-identities <config>   static geometry/operator suite, no stepping
    sweep-alpha <config>         repeat a run over surface-tension values
    restore <checkpoint>         resume a checkpointed run to its t_end

Errors leave a machine-readable JSON object on stderr; parse/validation
problems exit with status 2, runtime failures with 1.
"""

import argparse
import json
import os
import sys

from . import config as cfgmod, fourier, runner, seriesio
from .errors import ParseError, SlabMHDError, ValidationError


def _error_json(kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message)})
                     + "\n")


def _add_common(p, with_config=True):
    if with_config:
        p.add_argument("config", nargs="?", default=None,
                       help="scenario file (or use --config)")
        p.add_argument("--config", dest="config_flag", default=None,
                       help="scenario file")
    p.add_argument("--out-dir", default=None, help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="FFT worker threads (default: env PIL_THREADS or 1)")
    p.add_argument("--cadence", type=int, default=None,
                   help="diagnostics cadence in steps")


def _config_path(args):
    path = args.config_flag or args.config
    if path is None:
        raise ParseError("no scenario file given (positional or --config)")
    return path


def build_parser():
    ap = argparse.ArgumentParser(prog="slabmhd",
                                 description="plasma-vacuum slab MHD laboratory")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario")
    _add_common(p)

    p = sub.add_parser("verify-identities",
                       help="static identity suite on the configured geometry")
    _add_common(p)

    p = sub.add_parser("sweep-alpha", help="repeat a run over alpha values")
    p.add_argument("--alphas", default="1,0.5,0.25,0.1",
                   help="comma-separated surface tension values")
    _add_common(p)

    p = sub.add_parser("restore", help="resume from a checkpoint")
    p.add_argument("checkpoint")
    _add_common(p, with_config=False)
    return ap


def _setup_threads(args):
    n = args.threads
    if n is None:
        n = int(os.environ.get("PIL_THREADS", "1"))
    fourier.set_workers(n)


def cmd_run(args):
    cfg = cfgmod.load_config(_config_path(args))
    _setup_threads(args)
    out = args.out_dir or cfg.output.out_dir
    ref, state, snaps, rows = runner.run_scenario(cfg, out_dir=out,
                                                  cadence=args.cadence)
    print(f"run '{cfg.name}' finished at t={state.t:.6g} "
          f"({len(rows)} rows) -> {out}/series.csv")
    return 0


def cmd_verify(args):
    from . import verify

    cfg = cfgmod.load_config(_config_path(args))
    _setup_threads(args)
    out = args.out_dir or cfg.output.out_dir
    os.makedirs(out, exist_ok=True)
    checks = verify.run_checks(cfg)
    all_ok = True
    lines = [f"# slabmhd-verify v1 config={cfg.hash()}",
             "name,value,threshold,passed"]
    for c in checks:
        status = "PASS" if c["passed"] else "FAIL"
        all_ok &= c["passed"]
        print(f"{status} {c['name']}: {c['value']:.3e} "
              f"(threshold {c['threshold']:.3e})")
        lines.append(f"{c['name']},{seriesio.format_value(c['value'])},"
                     f"{seriesio.format_value(c['threshold'])},{int(c['passed'])}")
    with open(os.path.join(out, "verify.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    if cfg.output.figures:
        from . import report
        report.verify_figure(checks, os.path.join(out, "verify.png"),
                             meta=f"config={cfg.hash()}")
    return 0 if all_ok else 1


def cmd_sweep(args):
    cfg = cfgmod.load_config(_config_path(args))
    _setup_threads(args)
    try:
        alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    except ValueError as exc:
        raise ValidationError("--alphas", f"not a number list: {exc}")
    if len(alphas) < 2:
        raise ValidationError("--alphas", "need at least two values")
    out = args.out_dir or cfg.output.out_dir
    dists, monotone = runner.sweep_alpha(cfg, alphas, out_dir=out)
    for (a1, a2), d in zip(zip(alphas, alphas[1:]), dists):
        print(f"alpha {a1:g} -> {a2:g}: interface L2 distance {d:.6e}")
    print(f"monotone decreasing trend: {'yes' if monotone else 'no'}")
    return 0


def cmd_restore(args):
    _setup_threads(args)
    out = args.out_dir or "restored"
    ref, state, snaps, rows = runner.continue_scenario(
        args.checkpoint, out_dir=out, cadence=args.cadence)
    print(f"restored run finished at t={state.t:.6g} -> {out}/series.csv")
    return 0


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    handlers = {"run": cmd_run, "verify-identities": cmd_verify,
                "sweep-alpha": cmd_sweep, "restore": cmd_restore}
    try:
        return handlers[args.command](args)
    except (ParseError, ValidationError) as exc:
        _error_json(type(exc).__name__, exc)
        return 2
    except SlabMHDError as exc:
        _error_json(type(exc).__name__, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
