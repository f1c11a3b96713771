"""Command-line entry point: solve, sweep, compare, diagnose, convergence-study.

Exit codes: 0 success, 2 configuration or input error, 3 a solve did not
converge (artifacts are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, FieldFileError, InvalidArgument, SpinBECError, UnsupportedDiagnostic
from .guesses import identical_triples, make_spinor_guess, sweep_guesses
from .io import RunConfig, load_config, read_field, write_densities, write_field, write_summary
from .multigrid import MultigridPlan, cm_pcg_solve, convergence_study
from .optimizer import pcg_solve
from .pgf import pgf_solve
from .physics import check_existence_conditions, energy, residual, virial_residual
from .spectral import GridSpec, SpinorField

log = logging.getLogger("spinbec")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOT_CONVERGED = 3


class InputError(Exception):
    """Bad command-line input that maps to exit code 2."""


def _diagnostics(phi: SpinorField, cfg: RunConfig, parts=None) -> dict:
    parts = parts or energy(phi, cfg.params)
    try:
        vir = virial_residual(phi, cfg.params, parts)
    except UnsupportedDiagnostic:
        vir = None
    rep = check_existence_conditions(cfg.params, phi.grid.dim)
    return {
        "virial": vir,
        "soc_sign": "nonpositive" if parts.soc <= 1e-10 else "positive",
        "residual_inf": float(np.abs(residual(phi, cfg.params).data).max()),
        "norm": phi.norm(),
        "existence": rep.status,
        "existence_messages": list(rep.messages),
    }


def _solve_one(cfg: RunConfig, tags):
    if cfg.method == "pgf":
        phi0 = make_spinor_guess(tags, cfg.grid, cfg.params)
        res = pgf_solve(phi0, cfg.params, cfg.dt, cfg.solver, cfg.stabilization)
        return res.phi, res.energy, [res.record]
    plan = cfg.plan()
    if cfg.method == "cm_pcg" or len(plan.levels) > 1:
        res = cm_pcg_solve(make_spinor_guess(tags, plan.levels[0], cfg.params), cfg.params, plan)
        return res.phi, res.energy, res.records
    res = pcg_solve(make_spinor_guess(tags, cfg.grid, cfg.params), cfg.params, cfg.solver)
    return res.phi, res.energy, [res.record]


def _write_records(outdir: Path, records) -> None:
    with (outdir / "convergence.csv").open("w", newline="") as fh:
        records[-1].write_csv(fh)
    if len(records) > 1:
        for i, rec in enumerate(records):
            with (outdir / f"convergence_level{i}.csv").open("w", newline="") as fh:
                rec.write_csv(fh)


def _emit(cfg: RunConfig, phi, parts, records, extra: dict) -> int:
    outdir = cfg.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    if cfg.emit_field:
        write_field(outdir / "field.spgs", phi)
    if cfg.emit_density:
        write_densities(outdir, phi)
    _write_records(outdir, records)
    converged = records[-1].converged
    summary = {
        "method": cfg.method,
        "converged": converged,
        "message": records[-1].message,
        "iterations": [r.iterations for r in records],
        "dim": phi.grid.dim,
        "points": list(phi.grid.shape),
        "h": list(phi.grid.h),
    }
    summary.update(_diagnostics(phi, cfg, parts))
    summary.update(extra)
    write_summary(outdir / "summary.json", parts, summary)
    print(f"E = {parts.total:.15g}  mu = {parts.mu:.15g}  ({records[-1].message})")
    print(f"outputs written to {outdir}")
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def _sweep(cfg: RunConfig, jobs: int) -> int:
    if cfg.method == "pgf":
        raise InputError("sweeps run with method pcg or cm_pcg")
    plan = cfg.plan() if cfg.coarsest_points is not None else None
    result = sweep_guesses(cfg.guesses, cfg.grid, cfg.params, cfg.solver, plan=plan, jobs=jobs)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    (cfg.output_dir / "sweep.csv").write_text(result.table())
    best = result.best
    records = getattr(best, "records", None) or [best.record]
    return _emit(cfg, best.phi, best.energy, records, {"guess": list(result.best_tags)})


def cmd_solve(cfg: RunConfig, args) -> int:
    if len(cfg.guesses) > 1:
        return _sweep(cfg, args.jobs)
    phi, parts, records = _solve_one(cfg, cfg.guesses[0])
    return _emit(cfg, phi, parts, records, {"guess": list(cfg.guesses[0])})


def cmd_sweep(cfg: RunConfig, args) -> int:
    if cfg.guess_mode == "single":
        cfg.guesses = identical_triples()
    return _sweep(cfg, args.jobs)


def cmd_compare(cfg: RunConfig, args) -> int:
    if not cfg.compare_pgf:
        raise InputError("compare needs [compare] pgf = yes")
    tags = cfg.guesses[0]
    phi0 = make_spinor_guess(tags, cfg.grid, cfg.params)
    pcg = pcg_solve(phi0, cfg.params, cfg.solver)
    pgf = pgf_solve(phi0, cfg.params, cfg.pgf_dt, cfg.pgf_config, cfg.stabilization)
    outdir = cfg.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    for name, res in (("pcg", pcg), ("pgf", pgf)):
        with (outdir / f"convergence_{name}.csv").open("w", newline="") as fh:
            res.record.write_csv(fh)
    e_ref = min(pcg.energy.total, pgf.energy.total)
    e1, r1 = pcg.record.column("energy"), pcg.record.column("residual_inf")
    e2, r2 = pgf.record.column("energy"), pgf.record.column("residual_inf")
    n = max(len(e1), len(e2))
    with (outdir / "compare.csv").open("w") as fh:
        fh.write("iter,pcg_energy_error,pcg_residual_inf,pgf_energy_error,pgf_residual_inf\n")
        for i in range(n):
            a = f"{abs(e1[i] - e_ref)!r},{r1[i]!r}" if i < len(e1) else ","
            b = f"{abs(e2[i] - e_ref)!r},{r2[i]!r}" if i < len(e2) else ","
            fh.write(f"{i},{a},{b}\n")
    n1, n2 = pcg.record.iterations, pgf.record.iterations
    summary = {
        "pcg_iterations": n1,
        "pgf_iterations": n2,
        "iteration_ratio": n1 / n2 if n2 else None,
        "pcg_energy": pcg.energy.total,
        "pgf_energy": pgf.energy.total,
        "energy_difference": abs(pcg.energy.total - pgf.energy.total),
        "pcg_converged": pcg.converged,
        "pgf_converged": pgf.converged,
        "pcg_seconds": pcg.record.rows[-1].elapsed_seconds if n1 else 0.0,
        "pgf_seconds": pgf.record.rows[-1].elapsed_seconds if n2 else 0.0,
    }
    (outdir / "compare.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"PCG {n1} its, E = {pcg.energy.total:.15g}; PGF {n2} its, E = {pgf.energy.total:.15g}")
    if n2:
        print(f"iteration ratio PCG/PGF = {n1 / n2:.4g}")
    return EXIT_OK if pcg.converged and pgf.converged else EXIT_NOT_CONVERGED


def cmd_diagnose(cfg: RunConfig, args) -> int:
    try:
        phi = read_field(args.field)
    except OSError as exc:
        raise InputError(f"{args.field}: {exc.strerror}") from exc
    if phi.grid != cfg.grid:
        raise InputError(f"field grid {phi.grid.shape} on half-widths {phi.grid.half_widths} does not match "
                         f"config grid {cfg.grid.shape} on {cfg.grid.half_widths}")
    parts = energy(phi, cfg.params)
    diag = _diagnostics(phi, cfg, parts)
    for k, v in parts.as_dict().items():
        print(f"{k:>12s} = {v: .15e}")
    print(f"{'residual':>12s} = {diag['residual_inf']: .6e}")
    print(f"{'norm':>12s} = {diag['norm']: .15f}")
    if diag["virial"] is None:
        print(f"{'virial':>12s} = n/a (non-harmonic trap)")
    else:
        print(f"{'virial':>12s} = {diag['virial']: .6e}")
    print(f"{'soc sign':>12s} = {diag['soc_sign']}")
    print(f"{'existence':>12s} = {diag['existence']}")
    for m in diag["existence_messages"]:
        print(f"  warning: {m}")
    return EXIT_OK


def cmd_study(cfg: RunConfig, args) -> int:
    st = cfg.study
    if st is None:
        raise InputError("convergence-study needs a [study] section")
    reference = None
    points = list(st.points)
    if args.reference:
        try:
            reference = read_field(args.reference)
        except OSError as exc:
            raise InputError(f"{args.reference}: {exc.strerror}") from exc
        if not reference.grid.same_domain(cfg.grid):
            raise InputError("reference field covers a different domain")
    else:
        points.append(st.reference_points)
    solver = replace(cfg.solver, stop_kind=st.stop, tol=st.tol)
    levels = [GridSpec(cfg.grid.dim, cfg.grid.half_widths, (n,) * cfg.grid.dim) for n in points]
    plan = MultigridPlan(levels, [replace(solver) for _ in levels])
    phi0 = make_spinor_guess(cfg.guesses[0], levels[0], cfg.params)
    result = convergence_study(phi0, cfg.params, plan, reference)
    outdir = cfg.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    with (outdir / "study.csv").open("w") as fh:
        result.write_csv(fh)
    if reference is None:
        write_field(outdir / "reference.spgs", result.reference)
    print(f"{'h':>10s} {'E_h':>12s} {'|dE|':>12s} {'|dmu|':>12s} {'I_h':>12s}")
    for r in result.rows:
        vir = "n/a" if r.virial is None else f"{r.virial:.4e}"
        print(f"{r.h:10.6g} {r.wavefn_error:12.4e} {r.energy_error:12.4e} {r.mu_error:12.4e} {vir:>12s}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
    "diagnose": cmd_diagnose,
    "convergence-study": cmd_study,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spinbec", description="Ground states of spin-1 condensates with spin-orbit coupling.")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--output", metavar="DIR", help="override [output] directory")
        p.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel solves in a sweep")
        if name == "diagnose":
            p.add_argument("field", metavar="FIELDFILE")
        if name == "convergence-study":
            p.add_argument("--reference", metavar="FIELDFILE", help="use this field as the reference solution")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise InputError("--jobs must be >= 1")
        cfg = load_config(args.config)
        if args.output:
            cfg.output_dir = Path(args.output)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, FieldFileError, InputError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SpinBECError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
