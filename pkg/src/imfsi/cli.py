"""Command-line entry point: ``imfsi run | validate | oracle``."""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import oracles
from .scenarios import BUILDERS, LEVELS, ScenarioConfig, build_scenario, load_config, run


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _state(text: str) -> oracles.GasState:
    try:
        rho, u, p = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected rho,u,p") from exc
    return oracles.GasState(rho, u, p)


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="imfsi", description="Immersed blast FSI simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("--scenario", choices=sorted(BUILDERS))
    r.add_argument("--level", default="coarse", choices=LEVELS)
    # None means "not given": keeps the builder default or the config file value
    r.add_argument("--coupling", default=None, choices=("strong", "weak"))
    r.add_argument("--beta", type=float, default=None)
    r.add_argument("--damage-penalty", type=_bool, default=None)
    r.add_argument("--out", default=None, help="output directory for CSV and VTK")
    r.add_argument("--config", default=None,
                   help="JSON config used instead of --scenario; flags override its fields")
    r.add_argument("--t-end", type=float, default=None)
    r.add_argument("--dry-run", action="store_true", help="print the config and exit")
    r.add_argument("--quiet", action="store_true")

    v = sub.add_parser("validate", help="check a JSON config")
    v.add_argument("config")

    o = sub.add_parser("oracle", help="print reference solutions")
    o.add_argument("which", choices=("sod", "riemann", "j2"))
    o.add_argument("--t", type=float, default=0.2)
    o.add_argument("--n", type=int, default=11)
    o.add_argument("--left", type=_state, default=oracles.SOD_LEFT)
    o.add_argument("--right", type=_state, default=oracles.SOD_RIGHT)
    o.add_argument("--gamma", type=float, default=1.4)
    o.add_argument("--E", type=float, default=200e9)
    o.add_argument("--sigma-y", type=float, default=0.4e9)
    o.add_argument("--H", type=float, default=0.1e9)
    o.add_argument("--max-strain", type=float, default=0.01)
    return ap


def _oracle(args) -> int:
    if args.which in ("sod", "riemann"):
        x = np.linspace(0.0, 1.0, args.n)
        left, right = ((oracles.SOD_LEFT, oracles.SOD_RIGHT) if args.which == "sod"
                       else (args.left, args.right))
        rho, u, p = oracles.riemann(left, right, (x - 0.5) / args.t, args.gamma)
        print("x,rho,u,p")
        for row in zip(x, rho, u, p):
            print(",".join(repr(float(v)) for v in row))
    else:
        eps = np.linspace(0.0, args.max_strain, args.n)
        sig, ep = oracles.j2_uniaxial(eps, args.E, args.sigma_y, args.H)
        print("strain,stress,eqps")
        for row in zip(eps, sig, ep):
            print(",".join(repr(float(v)) for v in row))
    return 0


def _run_config(args) -> ScenarioConfig:
    overrides = {"coupling": args.coupling, "beta": args.beta,
                 "damage_penalty": args.damage_penalty}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if args.config:
        cfg = load_config(args.config)
        for k, v in overrides.items():
            setattr(cfg, k, v)
        return cfg.validate()
    if args.scenario is None:
        raise ValueError("either --scenario or --config is required")
    return build_scenario(args.scenario, args.level, **overrides)


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.command == "validate":
        try:
            cfg = load_config(args.config)
        except (OSError, ValueError, TypeError) as exc:
            print(f"invalid config: {exc}", file=sys.stderr)
            return 2
        print(f"ok: {cfg.kind} ({cfg.level}, {cfg.coupling})")
        return 0
    if args.command == "oracle":
        return _oracle(args)
    try:
        cfg = _run_config(args)
    except (OSError, ValueError, TypeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    if args.dry_run:
        print(cfg.to_json())
        return 0

    def progress(state, row):
        if not args.quiet:
            print(f"step {state.step:7d}  t={state.t:.4e} s  dt={cfg.dt:.3e}  "
                  f"max|v|={np.abs(state.v).max():.3e}  L={row[-1]:.4f}", flush=True)

    res = run(cfg, args.out, t_end=args.t_end, progress=progress)
    print(f"finished at t={res.state.t:.6e} s after {res.state.step} steps")
    return 0


if __name__ == "__main__":
    sys.exit(main())
