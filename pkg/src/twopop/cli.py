"""Command-line entry point: ``twopop {run,compare-locations,converge,certify-kernel}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .kernel import BaseKernel, fourier_coefficients, periodize, write_fourier_report
from .grid import PeriodicGrid
from .scenarios import BUILTINS, ScenarioConfig, builtin, convergence_study, load_config, \
    location_sensitivity, run_scenario, translate


def _config(spec: str) -> ScenarioConfig:
    """A JSON config path, or the name of a builtin scenario."""
    p = Path(spec)
    if p.is_file():
        return load_config(p)
    if spec in BUILTINS:
        return builtin(spec)
    raise SystemExit(f"config {spec!r} is neither a file nor one of {', '.join(BUILTINS)}")


def _apply(cfg: ScenarioConfig, args) -> ScenarioConfig:
    return cfg.with_overrides(args.n_cells, args.t_end)


def cmd_run(args) -> int:
    cfg = _apply(_config(args.config), args)
    res = run_scenario(cfg, args.out)
    rep = res.report
    print(f"{cfg.name}: verdict={rep.scenario_verdict} E_inf={rep.E_infinity:.6g} "
          f"c=({rep.c1_mean:.4f}, {rep.c2_mean:.4f}) plateau={rep.plateau_detected} "
          f"steps={res.stats.n_steps} time={res.runtime:.2f}s")
    for name, ok in res.checks().items():
        print(f"  {'PASS' if ok else 'FAIL'} {name}")
    return 0 if res.passed else 1


def cmd_compare(args) -> int:
    cfgs = [_apply(_config(c), args) for c in (args.config or ["location_a", "location_b"])]
    if len(cfgs) == 1:
        cfgs.append(translate(cfgs[0], args.shift))
    if len(cfgs) != 2:
        raise SystemExit("compare-locations takes one or two --config values")
    rep = location_sensitivity(cfgs[0], cfgs[1], args.out)
    payload = {"configs": [c.name for c in cfgs], "U_a": rep.U_a, "U_b": rep.U_b,
               "difference": rep.difference, "initial_masses": rep.masses_0}
    print(json.dumps(payload, indent=2))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "comparison.json").write_text(json.dumps(payload, indent=2) + "\n")
    if args.min_difference is not None:
        return 0 if abs(rep.difference[1]) > args.min_difference else 1
    return 0


def cmd_converge(args) -> int:
    cfg = _apply(_config(args.config), args)
    rep = convergence_study(cfg, args.levels)
    for n, e in zip(rep.n_cells, rep.errors):
        print(f"n={n:6d}  L1 error {e:.4e}")
    print(f"observed order {rep.observed_order:.3f}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "convergence.json").write_text(json.dumps(
            {"n_cells": rep.n_cells, "errors": rep.errors, "orders": rep.orders}, indent=2) + "\n")
    return 0 if rep.observed_order >= args.min_order else 1


def cmd_certify(args) -> int:
    base = BaseKernel.from_csv(args.kernel_csv) if args.kernel_csv else BaseKernel.gaussian()
    n_cells = args.n_cells or 256
    K = periodize(base, PeriodicGrid(n_cells), args.k_max)
    c = fourier_coefficients(K, args.n_max)
    ok = bool(np.all(c[1:] > 0))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_fourier_report(Path(args.out) / "fourier_coefficients.csv", c)
    print(f"min c_n (1 <= n <= {args.n_max}) = {c[1:].min():.6e}; positive: {ok}")
    if base.kind == "gaussian":
        n = np.arange(c.size)
        err = np.max(np.abs(c / np.exp(-n ** 2 / (4 * np.pi)) - 1))
        print(f"max relative error vs exp(-n^2/(4 pi)): {err:.3e}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twopop", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_default=None, multi=False):
        if multi:
            sp.add_argument("--config", action="append", help="config file or builtin name (repeatable)")
        else:
            sp.add_argument("--config", default=config_default, help="config file or builtin name")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--n-cells", type=int, default=None)
        sp.add_argument("--t-end", type=float, default=None)

    sp = sub.add_parser("run", help="run one scenario")
    common(sp, "coexistence")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare-locations", help="compare long-time masses of two configs")
    common(sp, multi=True)
    sp.add_argument("--shift", type=float, default=np.pi / 2,
                    help="translation used when a single config is given")
    sp.add_argument("--min-difference", type=float, default=None,
                    help="exit non-zero unless |dU2| exceeds this")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("converge", help="grid-refinement study")
    common(sp, "advection")
    sp.add_argument("--levels", type=int, default=4)
    sp.add_argument("--min-order", type=float, default=1.0)
    sp.set_defaults(func=cmd_converge)

    sp = sub.add_parser("certify-kernel", help="Fourier positivity certificate of the kernel")
    sp.add_argument("--kernel-csv", type=Path, default=None, help="two-column x,rho table (default Gaussian)")
    sp.add_argument("--n-cells", type=int, default=None)
    sp.add_argument("--n-max", type=int, default=16)
    sp.add_argument("--k-max", type=int, default=4)
    sp.add_argument("--out", type=Path, default=None)
    sp.set_defaults(func=cmd_certify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
