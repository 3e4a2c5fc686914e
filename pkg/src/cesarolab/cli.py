"""Command-line entry point.

    cesarolab --config configs/section5.json cesaro
    cesarolab --config configs/example41.json feller --out-dir out/ex41

Exit codes: 0 success, 2 configuration error, 3 mass drift above 1e-6,
4 Monte Carlo disagreement (some ``|z| > 6``).
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, describe_measure
from .diagnostics import SCHEMA_VERSION, escape_profile, feller_scan, pfa_signature
from .measure import integrate, monomial
from .montecarlo import SimConfig, comparison_csv, mc_vs_operator, trajectories, trajectory_csv
from .operator import cesaro_csv, cesaro_integrals, iterate

EXIT_OK, EXIT_CONFIG, EXIT_DRIFT, EXIT_MC = 0, 2, 3, 4
MASS_DRIFT_TOL = 1e-6
Z_FAIL = 6.0


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _header() -> str:
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return f"# schema_version={SCHEMA_VERSION} generated={stamp}\n"


def write_csv(path: Path, body: str) -> None:
    atomic_write(path, _header() + body)


class Console:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, msg: str) -> None:
        if not self.quiet:
            print(msg)


def _bool(b: bool) -> str:
    return "true" if b else "false"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_iterate(cfg: RunConfig, say: Console) -> int:
    kernel, eta = cfg.build_kernel(), cfg.eta()
    m0 = eta.total_mass
    eps = list(cfg.epsilons)
    y, y2 = monomial(1), monomial(2)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "total_mass", "atom_at_zero", "near_zero_mass", "mean", "second_moment"]
               + [f"escape_{i + 1}" for i in range(len(eps))])
    drift = 0.0
    for state in iterate(kernel, eta, cfg.n_max):
        mu = state.current
        drift = max(drift, abs(mu.total_mass - m0))
        w.writerow([state.n, repr(mu.total_mass), repr(mu.atom_mass(0.0)), repr(mu.near_zero_mass),
                    repr(integrate(mu, y)), repr(integrate(mu, y2))]
                   + [repr(v) for v in escape_profile(mu, eps)])
    write_csv(cfg.out_dir / "iterate.csv", buf.getvalue())
    say(f"wrote {cfg.out_dir / 'iterate.csv'} ({cfg.n_max} rows)")
    if drift > MASS_DRIFT_TOL:
        print(f"error: mass drift {drift:.3g} exceeds {MASS_DRIFT_TOL:g}", file=sys.stderr)
        return EXIT_DRIFT
    return EXIT_OK


def cmd_cesaro(cfg: RunConfig, say: Console) -> int:
    if cfg.n_max < 10:
        raise ConfigError("cesaro needs n_max >= 10")
    kernel, eta, family = cfg.build_kernel(), cfg.eta(), cfg.test_family()
    rows = cesaro_integrals(kernel, eta, cfg.n_max, family)
    write_csv(cfg.out_dir / "cesaro.csv", cesaro_csv(rows))
    drift = max(abs(v - eta.total_mass) for _, name, v in rows if name == "monomial(0)")
    if drift > MASS_DRIFT_TOL:
        print(f"error: mass drift {drift:.3g} exceeds {MASS_DRIFT_TOL:g}", file=sys.stderr)
        return EXIT_DRIFT
    report = pfa_signature(kernel, eta, cfg.n_max, family, cfg.candidate(), list(cfg.witnesses),
                           list(cfg.epsilons), weak_threshold=cfg.weak_threshold,
                           witness_threshold=cfg.witness_threshold,
                           eta_label=describe_measure(cfg.initial),
                           candidate_label=describe_measure(cfg.candidate_limit))
    atomic_write(cfg.out_dir / "report.json", report.to_json() + "\n")
    write_csv(cfg.out_dir / "curves.csv", report.curves_csv())
    print(f"WEAK-CONVERGES to {report.candidate}: {_bool(report.converges)}; "
          f"PFA-SIGNATURE: {_bool(report.pfa_signature)}")
    say(f"verdict {report.verdict.value}; final weak distance {report.weak_distance[-1]:.4g}")
    return EXIT_OK


def cmd_feller(cfg: RunConfig, say: Console) -> int:
    kernel, family = cfg.build_kernel(), cfg.test_family()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["function_name", "x", "jump"])
    points: set[float] = set()
    for f in family:
        for x, jump in feller_scan(kernel, f, cfg.grid, cfg.feller_suspects,
                                   tol=cfg.feller_tolerance, radius=cfg.feller_radius):
            w.writerow([f.name, repr(x), repr(jump)])
            points.add(x)
    write_csv(cfg.out_dir / "feller.csv", buf.getvalue())
    if points:
        where = ", ".join(f"x={x:.6g}" for x in sorted(points))
        print(f"FELLER: false (discontinuities at {where})")
    else:
        print(f"FELLER: true (none found at tolerance {cfg.feller_tolerance:g})")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, say: Console) -> int:
    kernel, family = cfg.build_kernel(), cfg.test_family()
    x0 = cfg.initial_point()
    sim = SimConfig(kernel, cfg.horizon, cfg.sim.replicas, cfg.sim.seed,
                    x0=x0, initial=None if x0 is not None else cfg.eta())
    rows = mc_vs_operator(sim, family, cfg.grid)
    write_csv(cfg.out_dir / "mc_compare.csv", comparison_csv(rows))
    if cfg.sim.dump_trajectories:
        write_csv(cfg.out_dir / "trajectories.csv", trajectory_csv(trajectories(sim)))
    worst = max(rows, key=lambda r: abs(r.z))
    say(f"max |z| = {abs(worst.z):.3g} ({worst.name}); n={sim.horizon}, M={sim.replicas}")
    if not np.all([abs(r.z) <= Z_FAIL for r in rows]):
        print(f"error: Monte Carlo disagrees with the operator (|z| > {Z_FAIL:g})", file=sys.stderr)
        return EXIT_MC
    return EXIT_OK


COMMANDS = {
    "iterate": (cmd_iterate, "iterate mu_n = A^n eta and write moment / escape summaries"),
    "cesaro": (cmd_cesaro, "Cesaro integrals, convergence report and verdict"),
    "feller": (cmd_feller, "scan Tf for discontinuities"),
    "simulate": (cmd_simulate, "Monte Carlo cross-check against the operator"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="run-config JSON")
    common.add_argument("--out-dir", type=Path, default=argparse.SUPPRESS)
    common.add_argument("--n-max", type=int, default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="cesarolab", parents=[common],
                                description="Cesaro-mean diagnostics for Markov chains on [0, 1].")
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    say = Console(getattr(args, "quiet", False))
    try:
        if not hasattr(args, "config"):
            raise ConfigError("--config is required")
        cfg = RunConfig.load(args.config).with_overrides(
            n_max=getattr(args, "n_max", None), seed=getattr(args, "seed", None),
            out_dir=getattr(args, "out_dir", None))
        return COMMANDS[args.command][0](cfg, say)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
