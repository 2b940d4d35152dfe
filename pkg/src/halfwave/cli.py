"""Command-line entry point.

Exit codes: 0 when every check of the subcommand passes, 1 when a check
fails, 2 on infrastructure errors (bad input, unreadable files, solver
breakdown).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import inhomogeneity as inh
from . import io

log = logging.getLogger("halfwave")

EXIT_OK, EXIT_FAIL, EXIT_INFRA = 0, 1, 2


def _grid(text: str):
    from .spectral import SpectralGrid

    try:
        L, N = text.split(",")
        return SpectralGrid(float(L), int(N))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--grid expects L,N (got {text!r}): {exc}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    p.add_argument("--out", type=Path, default=Path("halfwave_out"), help="output directory")
    p.add_argument("--grid", type=_grid, help="grid as L,N (half-length and number of nodes)")
    p.add_argument("--k", default="default", help="default | homogeneous | custom:<name=value,...>")
    p.add_argument("--e0", type=float, help="target energy E0 > 0")
    p.add_argument("--t1", type=float, help="start time t1 < 0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cache", type=Path, help="directory for the ground state and coefficient bundles")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="halfwave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ground-state", help="solve for Q and certify it")
    _common(p)
    p.add_argument("--oracle", action="store_true", help="also run the gradient-flow solver and compare")

    p = sub.add_parser("profile", help="profile coefficients and residual scan")
    _common(p)
    p.add_argument("--coefficients", action="store_true", help="build and save the coefficient bundle")
    p.add_argument("--scan", action="store_true", help="scan the residual along lambda = b^2")

    p = sub.add_parser("simulate", help="evolve the constructed initial data")
    _common(p)

    p = sub.add_parser("modulate", help="track (b, lambda, gamma) over a snapshot directory")
    _common(p)
    p.add_argument("--snapshots", type=Path, required=True)

    p = sub.add_parser("virial-check", help="identity suite, coercivity sample and biharmonic study")
    _common(p)

    p = sub.add_parser("experiment", help="simulate, track and fit the blowup laws")
    _common(p)

    p = sub.add_parser("suite", help="run the acceptance criteria")
    _common(p)
    p.add_argument("--only", help="comma-separated criterion numbers")
    return parser


def _config(args):
    from .experiments import ExperimentConfig

    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    updates = {"k": args.k} if args.k != "default" or not args.config else {}
    if args.e0 is not None:
        updates["E0"] = args.e0
    if args.t1 is not None:
        updates["t1"] = args.t1
    if args.grid is not None:
        updates.update(L=args.grid.L, N=args.grid.N)
    if args.seed:
        updates["seed"] = args.seed
    return dataclasses.replace(cfg, **updates)


def _cache(args) -> Path:
    return args.cache or args.out / "cache"


def _coefficients(args, k):
    from .experiments import prepare_coefficients

    return prepare_coefficients(k, _cache(args))


def _finish(args, name: str, payload: dict, passed: bool) -> int:
    payload = {**payload, "passed": passed}
    io.write_json(args.out / name, payload)
    print(f"{'PASS' if passed else 'FAIL'} {args.command}: {args.out / name}")
    return EXIT_OK if passed else EXIT_FAIL


# --------------------------------------------------------------------------- subcommands


def cmd_ground_state(args) -> int:
    from .ground_state import DEFAULT_GRID, solve_gradient_flow_oracle, solve_petviashvili
    from .plotting import ground_state_figure
    from .spectral import GridFunction, norm

    grid = args.grid or DEFAULT_GRID
    gs = solve_petviashvili(grid)
    d = args.out / "ground_state"
    io.save_ground_state(gs, d)
    io.export_csv(gs.Q, d / "Q.csv")
    ground_state_figure(d, gs.Q)
    cert = gs.certificate()
    checks = {
        "residual_sup": cert["residual_sup"] < 1e-9,
        "lambdaQ_Q_rel": cert["lambdaQ_Q_rel"] < 1e-8,
        "pohozaev_rel": cert["pohozaev_rel"] < 1e-6,
    }
    payload = {"certificate": cert}
    if args.oracle:
        oracle = solve_gradient_flow_oracle(grid)
        payload["dual_solver_l2"] = norm(GridFunction(grid, gs.values - oracle.values))
        checks["dual_solver"] = payload["dual_solver_l2"] < 1e-6
    payload["checks"] = checks
    args.out = d
    return _finish(args, "ground_state_report.json", payload, all(checks.values()))


def cmd_profile(args) -> int:
    from .plotting import profile_scan_figure
    from .profile import loglog_slope, scan

    if not (args.coefficients or args.scan):
        raise ValueError("profile needs --coefficients and/or --scan")
    k = inh.parse(args.k)
    gs, c = _coefficients(args, k)
    d = args.out / "profile"
    payload, ok = {"e1": c.e1, "solvability": c.solvability_residuals}, True
    if args.coefficients:
        io.save_coefficients(c, d / "coefficients")
        ok = all(v < 1e-6 for v in c.solvability_residuals.values())
    if args.scan:
        bs = np.geomspace(0.02, 0.2, 7)
        rows = scan(c, k, bs)
        io.write_rows(d / "scan.csv", rows)
        profile_scan_figure(d, rows)
        payload["slope"] = loglog_slope(bs, [r["phi_l2"] for r in rows])
        ok = ok and abs(payload["slope"] - 5.0) <= 0.4
    args.out = d
    return _finish(args, "profile_report.json", payload, ok)


def cmd_simulate(args) -> int:
    from .evolution import Sampling, StopCriteria, run
    from .experiments import build_initial_data, initial_parameters
    from .plotting import series_figure
    from .spectral import SpectralGrid, norm

    cfg = _config(args)
    k = inh.parse(cfg.k)
    gs, c = _coefficients(args, k)
    p = initial_parameters(c.e1, cfg.E0, cfg.t1, cfg.b1)
    grid = SpectralGrid(cfg.L or cfg.L_factor * p["lambda1"], cfg.N)
    u0 = build_initial_data(c, cfg.E0, p["t1"], cfg.gamma0, grid=grid, match_mass=cfg.match_mass)
    series = run(
        u0, p["t1"], k,
        StopCriteria(min_scale=p["lambda1"] / cfg.shrink, max_steps=cfg.max_steps),
        Sampling(cfg.sample_every, cfg.snapshot_every),
        scale_ref=norm(c.Q), c_dt=cfg.c_dt, order=cfg.order, max_phase=cfg.max_phase,
    )
    d = args.out / "simulate"
    io.write_json(d / "config.json", cfg.to_dict())
    io.write_rows(d / "timeseries.csv", series.rows(), list(series.COLUMNS))
    if series.snapshots:
        io.save_snapshots(series.snapshots, d / "snapshots", extra={"meta": series.meta, "parameters": p, "k": cfg.k})
    series_figure(d, series)
    m = series.column("mass")
    drift = float(np.max(np.abs(m - m[0])) / m[0])
    args.out = d
    payload = {"stop_reason": series.stop_reason, "mass_drift": drift, "parameters": p}
    return _finish(args, "simulate_report.json", payload, drift < 1e-8 and series.stop_reason == "minimum scale reached")


def cmd_modulate(args) -> int:
    from .modulation import ModulationBasis, track

    snaps, man = io.load_snapshots(args.snapshots)
    k = inh.parse(man.get("k", args.k))
    gs, c = _coefficients(args, k)
    p = man.get("parameters", {})
    guess = (p["b1"], p["lambda1"], 0.0) if p else None
    mt = track(snaps, ModulationBasis.build(c), A0=p.get("A0"), first_guess=guess)
    d = args.out / "modulate"
    io.write_rows(d / "modtrack.csv", mt.records, list(mt.COLUMNS))
    failed = sum(r["status"] != "ok" for r in mt.records)
    args.out = d
    return _finish(args, "modulate_report.json", {"snapshots": len(snaps), "failed": failed}, failed == 0)


def cmd_virial_check(args) -> int:
    from . import virial
    from .experiments import certification_suite
    from .modulation import _restrict
    from .plotting import biharmonic_figure
    from .spectral import GridFunction, SpectralGrid, norm

    k = inh.parse(args.k)
    gs, c = _coefficients(args, k)
    identity = {name: virial.halfnorm_identity(f)[2] for name, f in certification_suite(gs).items()}
    g = SpectralGrid(3000.0, 2**16)
    u = GridFunction(g, np.exp(-(g.x**2)))
    As = [25.0, 50.0, 100.0]
    ratios = [virial.biharmonic_bound(u, virial.CutoffPhi(A)) * A / norm(u) ** 2 for A in As]
    small = SpectralGrid(256.0, 2**13)

    def r(f):
        return GridFunction(small, _restrict(f, small).real)

    coer = virial.localized_coercivity(r(c.Q), r(c.S10), r(c.rho1), k, A=100.0, seed=args.seed)
    d = args.out / "virial"
    biharmonic_figure(d, As, ratios)
    halving = [ratios[i] / ratios[i + 1] for i in range(2)]
    payload = {
        "identity_relerr": identity,
        "quadrature": virial.ResolventQuadrature().mapping,
        "biharmonic": {"A": As, "ratio": ratios, "halving": halving},
        "coercivity": coer,
        "bridge_min_second_derivative": virial.CutoffPhi().certify_bridge(),
    }
    ok = (
        max(identity.values()) < 1e-6
        and all(1.6 <= h <= 2.4 for h in halving)
        and coer["plus"] > 0
        and coer["minus"] > 0
    )
    args.out = d
    return _finish(args, "virial_report.json", payload, ok)


def cmd_experiment(args) -> int:
    from .experiments import run_blowup_experiment

    cfg = _config(args)
    k = inh.parse(cfg.k)
    gs, c = _coefficients(args, k)
    d = args.out / "experiment"
    report, *_ = run_blowup_experiment(cfg, out=d, coeffs=c, gs=gs)
    ll = report.lambda_law
    ok = (
        not report.partial
        and 1.9 <= ll.get("exponent", 0) <= 2.1
        and report.rate["spread"] < 0.15
        and 0.8 <= ll.get("lambda_star_times_4A0sq", 0) <= 1.2
        and report.run["mass_drift"] < 1e-8
    )
    print(json.dumps({"lambda_law": ll, "rate": report.rate}, indent=2, default=float))
    print(f"{'PASS' if ok else 'FAIL'} experiment: {d / 'fit_report.json'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_suite(args) -> int:
    from .acceptance import Context, evaluate

    numbers = [int(n) for n in args.only.split(",")] if args.only else list(range(1, 12))
    ctx = Context(seed=args.seed)
    results = []
    for n in numbers:
        r = evaluate(n, ctx, out=args.out / "suite")
        print(r.line(), flush=True)
        results.append(dataclasses.asdict(r))
    io.write_json(args.out / "suite" / "acceptance.json", {"results": results})
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_FAIL


COMMANDS = {
    "ground-state": cmd_ground_state,
    "profile": cmd_profile,
    "simulate": cmd_simulate,
    "modulate": cmd_modulate,
    "virial-check": cmd_virial_check,
    "experiment": cmd_experiment,
    "suite": cmd_suite,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError, RuntimeError, json.JSONDecodeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFRA


if __name__ == "__main__":
    sys.exit(main())
