"""Command-line entry points: forward, optimize, report, verify.

Exit codes: 0 success, 1 numeric/solver failure (including failed verify
checks), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .dose import compute_dose, dvh, region_stats
from .geometry import ConfigurationError
from .io import IOError_, read_field, write_dose, write_field, write_history, write_report
from .kernels import kernel_name
from .optimize import OptimizerError, optimize_projected_gradient
from .physics import AssumptionError
from .transport import SolverError, solve_forward
from .verify import run_battery


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csdplan",
                                description="Deterministic slowing-down transport "
                                            "solver and treatment planner")
    sub = p.add_subparsers(dest="command", required=True)
    for name, doc in (("forward", "solve the forward problem and dump fluence + dose"),
                      ("optimize", "run the projected-gradient planner"),
                      ("report", "recompute dose statistics from saved fields"),
                      ("verify", "run the property-check battery")):
        sp = sub.add_parser(name, help=doc)
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--out", default=None, help="output directory "
                                                    "(default: from config)")
        sp.add_argument("--threads", type=int, default=None,
                        help="sweep threads per iteration (compiled kernel)")
    sub.choices["report"].add_argument("--field", default=None,
                                       help="fluence field file to report on")
    return p


def _outdir(args, rc) -> Path:
    out = Path(args.out) if args.out else Path(rc.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    rc = parse_config(args.config)
    if args.threads is not None:
        rc.settings.threads = max(1, args.threads)
    return rc


def cmd_forward(args) -> int:
    rc = _load(args)
    out = _outdir(args, rc)
    psi = solve_forward(rc.source, rc.xs, rc.settings)
    dose = compute_dose(psi)
    write_field(out / "psi.txt", psi, binary=rc.binary_mirror)
    write_dose(out / "dose.txt", dose, binary=rc.binary_mirror)
    write_report(out / "dose_report.json",
                 {"regions": region_stats(dose, rc.masks, rc.d_min, rc.d_max),
                  "kernel": kernel_name(rc.settings.kernel)})
    print(f"forward solve done; fluence and dose written to {out}")
    return 0


def cmd_optimize(args) -> int:
    rc = _load(args)
    out = _outdir(args, rc)
    result = optimize_projected_gradient(rc.initial_control, rc.objective, rc.xs,
                                         rc.settings, rc.opt_options)
    dose = compute_dose(result.psi)
    write_field(out / "q_opt.txt", result.q, binary=rc.binary_mirror)
    write_field(out / "psi_opt.txt", result.psi, binary=rc.binary_mirror)
    write_field(out / "lambda_opt.txt", result.lam, binary=rc.binary_mirror)
    write_dose(out / "dose.txt", dose, binary=rc.binary_mirror)
    write_history(out / "history.txt", result.history)
    write_report(out / "dose_report.json",
                 {"regions": region_stats(dose, rc.masks, rc.d_min, rc.d_max),
                  "converged": result.converged,
                  "iterations": result.final.iteration,
                  "j_value": result.final.j_value,
                  "kkt": result.final.kkt})
    state = result.final
    print(f"optimize: {'converged' if result.converged else 'iteration cap reached'} "
          f"at iteration {state.iteration}, J = {state.j_value:.6e}, "
          f"KKT residual = {state.kkt:.3e}")
    return 0 if result.converged else 1


def cmd_report(args) -> int:
    rc = _load(args)
    out = _outdir(args, rc)
    field_path = Path(args.field) if args.field else None
    if field_path is None:
        for candidate in (out / "psi_opt.txt", out / "psi.txt"):
            if candidate.exists():
                field_path = candidate
                break
    if field_path is None or not field_path.exists():
        print(f"error: no fluence field found under {out} (use --field)",
              file=sys.stderr)
        return 2
    psi = read_field(field_path, rc.grid, rc.quad, rc.emap)
    dose = compute_dose(psi)
    write_dose(out / "dose.txt", dose, binary=rc.binary_mirror)
    stats = region_stats(dose, rc.masks, rc.d_min, rc.d_max)
    curves = dvh(dose, rc.masks)
    write_report(out / "dose_report.json", {"regions": stats, "dvh": curves})
    for label, entry in stats.items():
        if label == "bounds":
            continue
        print(f"region {label}: {entry}")
    return 0


def cmd_verify(args) -> int:
    rc = _load(args)
    checks = run_battery(rc)
    width = max(len(c["name"]) for c in checks)
    all_ok = True
    for c in checks:
        flag = "PASS" if c["ok"] else "FAIL"
        print(f"{flag}  {c['name']:<{width}}  {c['detail']}")
        all_ok &= c["ok"]
    print(f"verify: {'all checks passed' if all_ok else 'CHECKS FAILED'} "
          f"(kernel: {kernel_name(rc.settings.kernel)})")
    return 0 if all_ok else 1


def run_command(argv) -> int:
    """Parse argv and run one subcommand, mapping failures to exit codes."""
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handler = {"forward": cmd_forward, "optimize": cmd_optimize,
               "report": cmd_report, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except (ConfigError, ConfigurationError, AssumptionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, OptimizerError, IOError_) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return run_command(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
