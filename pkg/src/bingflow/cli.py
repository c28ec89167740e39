"""Command-line entry point.

Subcommands:

    run      single steady solve: fields CSV, report.json, figures, summary
    sweep    continuation over the m schedule, per-member fields and metrics
    verify   constitutive property suite and oracle comparison (no flow solve)
    report   re-emit summary and figures from a saved report.json

Exit codes: 0 when the command succeeded and every hard assertion passed,
1 on assertion or solve failure, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from bingflow.config import ConfigError, RunSetup, parse_config
from bingflow.constitutive import RegIndex, gamma_m
from bingflow.continuation import run_m_sweep
from bingflow.grid import compute_strain, write_checkpoint, write_field_csv
from bingflow.scenarios import channel_oracle, channel_profile
from bingflow.solver import SolverError, run_to_steady

__all__ = ["main", "main_cli"]


def _echo(setup: RunSetup) -> dict:
    sc = setup.scenario
    return {
        "scenario": sc.kind, "nx": sc.grid.nx, "ny": sc.grid.ny,
        "lx": sc.grid.lx, "ly": sc.grid.ly,
        "mu": setup.fluid.mu, "tau_y": setup.fluid.tau_y,
        "m_schedule": list(setup.schedule.values),
        "dt": setup.solve.dt, "cfl": setup.solve.cfl,
        "t_end": setup.solve.t_end,
        "steady_tol": setup.solve.steady_tol,
        "picard_tol": setup.solve.picard_tol,
        "picard_max": setup.solve.picard_max,
        "poisson_tol": setup.solve.poisson_tol,
        "lid_speed": sc.lid_speed, "force_gx": sc.force_gx,
        "seed": setup.seed, "out_dir": setup.out_dir,
        "config_hash": setup.config_hash,
    }


def _say(quiet: bool, *parts) -> None:
    if not quiet:
        print(*parts)


def _field_outputs(f, setup: RunSetup, out: Path, tag: str, r: RegIndex) -> str:
    g = setup.scenario.grid
    d = compute_strain(f, g)
    dn = d.norm()
    yielded = (dn > gamma_m(setup.fluid, r)).astype(float)
    name = f"fields_{tag}.csv"
    write_field_csv(out / name, f, g,
                    extra={"D_norm": dn, "yielded": yielded})
    return name


def _summarize_run(doc: dict, quiet: bool) -> None:
    s = doc["series"]
    steady = doc["steady"]
    _say(quiet, f"scenario {doc['config']['scenario']} "
                f"{doc['config']['nx']}x{doc['config']['ny']}, "
                f"m_schedule {doc['config']['m_schedule']}")
    _say(quiet, f"steady: {steady['reached']} at t={steady['t']:.4g} "
                f"({steady['steps']} steps, final rate {steady['final_delta']:.3e})")
    if s["t"]:
        _say(quiet, f"norms: |u|_H={s['norm_H'][-1]:.6g} |u|_V={s['norm_V'][-1]:.6g} "
                    f"yielded fraction {s['yielded_fraction'][-1]:.3f}")
        _say(quiet, f"max divergence {max(s['div_max']):.3e} "
                    f"(budget {10 * doc['poisson_tol']:.1e})")
    for name, ok in doc["flags"].items():
        if ok is not None:
            _say(quiet, f"  [{'PASS' if ok else 'FAIL'}] {name}")
    if "channel_error" in doc:
        _say(quiet, f"channel profile error vs analytic: "
                    f"{doc['channel_error']['rel_l2']:.3e} rel L2")


def _attach_channel_oracle(doc: dict, f, setup: RunSetup, r: RegIndex) -> None:
    sc = setup.scenario
    yh, prof = channel_profile(f, sc.grid)
    exact = channel_oracle(yh, sc.force_gx, sc.half_width, setup.fluid, r)
    rel = float(np.sqrt(np.sum((prof - exact) ** 2) / max(np.sum(exact**2), 1e-300)))
    doc["channel_oracle"] = {"y": (yh + sc.half_width).tolist(), "u": exact.tolist()}
    doc["channel_error"] = {"rel_l2": rel}


def _recording_cadence(setup: RunSetup):
    # keep reports near 200 samples however long the run is
    from dataclasses import replace

    if setup.solve.dt is None:
        return setup.solve
    steps = int(setup.solve.t_end / setup.solve.dt)
    return replace(setup.solve, record_every=max(1, steps // 200))


def cmd_run(args) -> int:
    setup = parse_config(args.config, args.override)
    out = Path(args.out or setup.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    r = RegIndex(setup.schedule.values[-1])
    sc = setup.scenario
    f, report = run_to_steady(sc.initial_state(), sc.forcing(),
                              _recording_cadence(setup), sc.grid, setup.fluid, r)
    report.config = _echo(setup)
    report.seed = setup.seed
    doc = report.to_dict()
    doc["fields_csv"] = _field_outputs(f, setup, out, "final", r)
    write_checkpoint(out / "checkpoint_final.csv", f, sc.grid,
                     t=report.steady["t"], m=r.m, config_hash=setup.config_hash)
    if sc.kind == "channel":
        _attach_channel_oracle(doc, f, setup, r)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
    from bingflow.plots import render_report_figures
    figures = render_report_figures(doc, out)
    _summarize_run(doc, args.quiet)
    _say(args.quiet, f"wrote {out / 'report.json'} and {len(figures)} figures")
    return 0 if report.all_hard_flags_pass() else 1


def cmd_sweep(args) -> int:
    setup = parse_config(args.config, args.override)
    out = Path(args.out or setup.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sc = setup.scenario
    limit = run_m_sweep(sc, setup.schedule, _recording_cadence(setup), setup.fluid)
    for m, f in zip(limit.m_values, limit.fields):
        _field_outputs(f, setup, out, f"m{m:g}", RegIndex(m))
    rows = np.column_stack([
        limit.m_values, limit.delta_H, limit.yielded_fraction,
        limit.max_unyielded_stress, limit.stress_cap,
        limit.plug_half_width, limit.plug_half_width_analytic,
        limit.sup_norm_H,
    ])
    np.savetxt(out / "msweep_metrics.csv", rows, delimiter=",",
               header="m,delta_H,yielded_fraction,max_unyielded_stress,"
                      "stress_cap,plug_half_width,plug_half_width_analytic,"
                      "sup_norm_H", comments="")
    final_report = limit.reports[-1]
    final_report.config = _echo(setup)
    final_report.seed = setup.seed
    doc = final_report.to_dict()
    doc["limit_report"] = limit.to_dict()
    doc["fields_csv"] = f"fields_m{limit.m_values[-1]:g}.csv"
    if sc.kind == "channel":
        _attach_channel_oracle(doc, limit.fields[-1], setup,
                               RegIndex(limit.m_values[-1]))
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
    from bingflow.plots import render_report_figures
    figures = render_report_figures(doc, out)
    _say(args.quiet, f"sweep over m = {list(limit.m_values)}")
    for k, m in enumerate(limit.m_values):
        _say(args.quiet,
             f"  m={m:g}: delta={limit.delta_H[k]:.3e} "
             f"plug={limit.plug_half_width[k]:.4f} "
             f"(analytic {limit.plug_half_width_analytic[k]:.4f}) "
             f"max core stress {limit.max_unyielded_stress[k]:.4f} "
             f"<= cap {limit.stress_cap[k]:.4f}")
    ok = True
    for name, flag in limit.contracts.items():
        if flag is not None:
            _say(args.quiet, f"  [{'PASS' if flag else 'FAIL'}] {name}")
            ok &= flag
    ok &= all(rep.all_hard_flags_pass() for rep in limit.reports)
    _say(args.quiet, f"wrote {out / 'report.json'} and {len(figures)} figures")
    return 0 if ok else 1


def cmd_verify(args) -> int:
    from bingflow.verify import format_results, run_full_verification
    seed = 0
    if args.config:
        seed = parse_config(args.config, args.override).seed
    results, elapsed = run_full_verification(seed=seed)
    _say(args.quiet, format_results(results, elapsed))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "verify_report.json", "w", encoding="utf-8") as fh:
            json.dump([res.__dict__ for res in results], fh, indent=1)
    return 0 if all(res.passed for res in results) else 1


def cmd_report(args) -> int:
    out = Path(args.out or ".")
    path = out / "report.json"
    if not path.is_file():
        raise ConfigError(f"no report found at {path}")
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    from bingflow.plots import render_report_figures
    figures = render_report_figures(doc, out)
    _summarize_run(doc, args.quiet)
    if doc.get("limit_report"):
        lim = doc["limit_report"]
        for name, flag in lim["contracts"].items():
            if flag is not None:
                _say(args.quiet, f"  [{'PASS' if flag else 'FAIL'}] {name}")
    _say(args.quiet, f"rendered {len(figures)} figures in {out}")
    flags_ok = all(v for v in doc.get("flags", {}).values() if v is not None)
    return 0 if flags_ok else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bingflow",
        description="Viscoplastic channel/cavity/decay solver and verification suite",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, needs_config in (
        ("run", cmd_run, True),
        ("sweep", cmd_sweep, True),
        ("verify", cmd_verify, False),
        ("report", cmd_report, False),
    ):
        sp = sub.add_parser(name)
        sp.set_defaults(fn=fn)
        if name != "report":
            sp.add_argument("--config", required=needs_config,
                            help="path to the key = value configuration file")
            sp.add_argument("--override", action="append", default=[],
                            metavar="KEY=VALUE", help="override a config entry")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--quiet", action="store_true", help="suppress stdout summary")
    return parser


def main_cli(argv: list[str] | None = None) -> int:
    """Parse arguments and dispatch; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:        # argparse exits 2 on usage errors
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(main_cli())


if __name__ == "__main__":
    main()
