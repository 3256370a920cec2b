"""Batch command line: ``leelab {spectrum,ground,sweep,validate} --config run.json``.

Exit codes: 0 success, 1 validation checks ran but at least one failed,
2 configuration error, 3 numerical failure. Errors are also printed to
stderr as one JSON object carrying a machine-readable category.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import CapacityError, ConfigurationError, DomainError, LeeLabError, NumericalError, UnsupportedError
from .fock import write_basis_csv
from .groundstate import configuration_grid, position_wavefunction, positivity_certificate, write_wavefunction_csv
from .manifold import enumerate_modes, write_modes_csv
from .solver import eigen_at, feynman_hellmann, find_ground_energy
from .validation import CHECKS, _plain, applicable_checks, build_operator, context_from_config, run_checks

log = logging.getLogger("leelab")

EXIT_OK, EXIT_CHECKS_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _map(fn, items, jobs: int):
    """Ordered map; results come back in input order whatever the pool size."""
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# subcommands


def cmd_spectrum(cfg: RunConfig, out: Path, args) -> int:
    spec = cfg.spec()
    modes = enumerate_modes(spec, cfg.truncation.sigma_max)
    with (out / "modes.csv").open("w", newline="", encoding="utf-8") as fh:
        write_modes_csv(modes, fh)
    ctx = context_from_config(cfg)
    with (out / "basis.csv").open("w", newline="", encoding="utf-8") as fh:
        write_basis_csv(ctx.op.basis, fh)
    print(f"{len(modes)} modes, {ctx.op.basis.dim} basis states -> {out}")
    return EXIT_OK


def cmd_ground(cfg: RunConfig, out: Path, args) -> int:
    ctx = context_from_config(cfg)
    m = ctx.params.m
    g, st = ctx.ground, ctx.state
    report = positivity_certificate(st, count=cfg.output.wavefunction_points, seed=cfg.seed)
    result = {
        "units": "energies in units of m",
        "manifold": cfg.manifold.model_dump(mode="json"),
        "params": cfg.params.model_dump(mode="json", by_alias=True),
        "E_gr": g.E_gr / m,
        "threshold": ctx.params.threshold / m,
        "gap": g.eigen.gap / m,
        "norms": list(st.norms),
        "norm_sum": sum(st.norms),
        "bracket": [b / m for b in g.bracket],
        "iterations": g.iterations,
        "omega0_at_E_gr": g.omega0_at_E_gr / m,
        "feynman_hellmann": st.slope,
        "dims": {"n": st.basis_n.dim, "n+1": st.basis_np1.dim},
        "positivity": report.to_dict()["sectors"],
    }
    if "json" in cfg.output.formats:
        _write_json(out / "ground.json", _plain(result))
    if "csv" in cfg.output.formats:
        for name, basis in (("n", st.basis_n), ("np1", st.basis_np1)):
            pts = configuration_grid(st.spec, basis.n, cfg.output.wavefunction_points, cfg.seed)
            vals = position_wavefunction(st, "n" if name == "n" else "n+1", pts)
            with (out / f"wavefunction_{name}.csv").open("w", newline="", encoding="utf-8") as fh:
                write_wavefunction_csv(pts, vals, st.spec, fh)
    print(f"E_gr = {g.E_gr / m:.12f} m, gap = {g.eigen.gap / m:.6g} m, norms = {st.norms[0]:.6f} + {st.norms[1]:.6f}")
    return EXIT_OK


def _expectations(op, E):
    res = eigen_at(op, E)
    parts = op.phi(E, parts=True).parts
    v = res.psi0
    k1 = float(v @ (parts["K1"] * v))
    u = float(v @ parts["U"] @ v)
    return res, feynman_hellmann(op.dphi_dE(E), v), k1, u


def cmd_sweep(cfg: RunConfig, out: Path, args) -> int:
    sw = cfg.sweep
    params = cfg.model_params()
    m = params.m
    t = cfg.truncation
    jobs = cfg.jobs
    if sw.parameter == "E":
        op = context_from_config(cfg).op
        if sw.values:
            grid = list(sw.values)
        elif cfg.solver.E_grid is not None:
            eg = cfg.solver.E_grid
            grid = list(np.linspace(eg.start, eg.stop, eg.points))
        else:
            grid = list(np.linspace(params.threshold - 3 * m, params.threshold, 20))

        def one(E):
            res, fh, k1, u = _expectations(op, float(E))
            return ["E", E / m, res.omega0 / m, res.gap / m, fh, k1 / m, u / m]

        header = ["parameter", "value (m)", "omega0 (m)", "gap (m)", "feynman_hellmann (1)", "k1_expectation (m)", "u_expectation (m)"]
        rows = _map(one, grid, jobs)
    elif sw.parameter == "lambda":
        grid = list(sw.values or [0.25, 0.5, 1.0, 1.5, 2.0])
        E_ref = sw.E if sw.E is not None else params.threshold

        def one(lam):
            p = params.replace(lam=float(lam))
            op = build_operator(p, t.sigma_max, t.sigma_max_k1, t.max_dim, t.energy_cutoff, t.k1_tail)
            res, fh, k1, u = _expectations(op, E_ref)
            g = find_ground_energy(op, tol=cfg.solver.tol, floor=cfg.floor())
            return ["lambda", lam, E_ref / m, res.omega0 / m, res.gap / m, k1 / m, u / m, g.E_gr / m]

        header = ["parameter", "value (1)", "E (m)", "omega0 (m)", "gap (m)", "k1_expectation (m)", "u_expectation (m)", "E_gr (m)"]
        rows = _map(one, grid, jobs)
    else:
        grid = list(sw.values or [t.sigma_max / 2**k for k in (3, 2, 1, 0)])

        def one(cut):
            op = build_operator(params, float(cut), max(float(cut), t.sigma_max_k1), t.max_dim, None, t.k1_tail)
            g = find_ground_energy(op, tol=cfg.solver.tol, floor=cfg.floor())
            return [cut, op.basis.dim, g.E_gr, g.eigen.gap]

        raw = _map(one, grid, jobs)
        rows, prev = [], None
        for cut, dim, E, gap in raw:
            delta = None if prev is None else abs(E - prev) / m
            rows.append(["cutoff", cut, dim, E / m, gap / m, delta])
            prev = E
        header = ["parameter", "value (1/length^2)", "dim (1)", "E_gr (m)", "gap (m)", "delta_E_gr (m)"]
    _write_csv(out / "sweep.csv", header, rows)
    print(f"{len(rows)} sweep points ({sw.parameter}) -> {out / 'sweep.csv'}")
    return EXIT_OK


def _artifact_rows(report):
    for key in ("ladder", "rows"):
        rows = report.measured.get(key)
        if isinstance(rows, list) and rows and isinstance(rows[0], dict):
            return rows
    return None


def cmd_validate(cfg: RunConfig, out: Path, args) -> int:
    ctx = context_from_config(cfg)
    names = args.check or cfg.validation.checks or applicable_checks(ctx.params)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigurationError(f"check: unknown name(s) {', '.join(unknown)}; known: {', '.join(CHECKS)}")
    if cfg.jobs > 1 and len(names) > 1:
        # shared inputs are built once before the checks fan out
        _ = ctx.state
        reports = _map(lambda n: run_checks(ctx, [n])[0], names, cfg.jobs)
    else:
        reports = run_checks(ctx, names)
    bundle = []
    for rep in reports:
        rows = _artifact_rows(rep)
        if rows is not None:
            path = out / f"check_{rep.name}.csv"
            keys = list(rows[0])
            _write_csv(path, keys, ([r[k] for k in keys] for r in rows))
            rep.artifacts["csv"] = path.name
        bundle.append(rep.to_dict())
        print(f"{'PASS' if rep.passed else 'FAIL'}  {rep.name}")
    passed = all(r.passed for r in reports)
    _write_json(out / "validation.json", {"passed": passed, "checks": bundle, "config": cfg.dump()})
    return EXIT_OK if passed else EXIT_CHECKS_FAILED


COMMANDS = {"spectrum": cmd_spectrum, "ground": cmd_ground, "sweep": cmd_sweep, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="leelab", description="Principal-operator spectral lab for the Lee model on compact manifolds.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("spectrum", "write the one-particle mode table and the n-sector basis"),
        ("ground", "solve for E_gr and write the ground state"),
        ("sweep", "E, lambda or cutoff sweep as CSV"),
        ("validate", "run validation checks and write a JSON report bundle"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
        p.add_argument("--out", metavar="DIR", help="output directory (default: output.directory from the config)")
        p.add_argument("--jobs", type=int, metavar="N", help="worker threads for independent evaluations")
        if name == "validate":
            p.add_argument("--check", action="append", metavar="NAME", help=f"run only this check (repeatable): {', '.join(CHECKS)}")
    return parser


def _fail(category: str, message: str, code: int) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.jobs is not None:
            if args.jobs < 1:
                raise ConfigurationError("jobs: must be >= 1")
            cfg = cfg.model_copy(update={"jobs": args.jobs})
        out = Path(args.out or cfg.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except (ConfigurationError, DomainError, UnsupportedError) as exc:
        return _fail(exc.category, str(exc), EXIT_CONFIG)
    except (NumericalError, CapacityError) as exc:
        return _fail(exc.category, str(exc), EXIT_NUMERICAL)
    except LeeLabError as exc:
        return _fail(exc.category, str(exc), EXIT_NUMERICAL)


if __name__ == "__main__":
    raise SystemExit(main())
