"""Command line front end: solve / tap / check over a JSON network document.

Exit codes: 0 success, 1 input problem, 2 solver did not converge.  All numbers
written to reports and logs carry 9 significant digits so repeated runs produce
byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, fields

import numpy as np

from .driver import STATUS_CONVERGED, IRConfig, IterationRecord, initial_state, solve_dap
from .errors import InputError, OdAdjustError
from .network import build_structure, parse_network
from .tap import solve_tap

_NUM_FMT = "%.9g"


@dataclass
class RunConfig:
    """Everything one subcommand invocation needs."""

    command: str
    input_path: str
    report_path: str | None = None
    log_path: str | None = None
    overrides: dict | None = None
    initial_demand: list | None = None
    demand: list | None = None
    tol: float = 1e-8
    max_iter: int = 50000


def _fmt(x):
    return _NUM_FMT % float(x)


def _round9(x):
    return float(_NUM_FMT % float(x))


def _parse_demand_string(text):
    try:
        vals = [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise InputError("cannot parse demand list %r" % text) from exc
    if not vals:
        raise InputError("empty demand list")
    return vals


def _parse_set_overrides(pairs):
    numeric = {f.name: f.type for f in fields(IRConfig)}
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise InputError("--set expects key=value, got %r" % pair)
        key, _, val = pair.partition("=")
        key = key.strip()
        if key not in numeric:
            raise InputError("unknown solver setting %r" % key)
        try:
            parsed = float(val)
        except ValueError as exc:
            raise InputError("setting %r needs a numeric value, got %r"
                             % (key, val)) from exc
        if key in ("tap_max_iter", "max_outer", "max_inner",
                   "inner_point_cap", "inner_iter_cap"):
            parsed = int(parsed)
        out[key] = parsed
    return out


def _read_document(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise InputError("cannot read input file %r: %s" % (path, exc)) from exc


def run_check(cfg):
    """Validate the document and print instance dimensions."""
    net = parse_network(_read_document(cfg.input_path))
    S = build_structure(net)
    print("nodes: %d" % net.n_nodes)
    print("links: %d" % net.n_links)
    print("commodities: %d" % net.n_commodities)
    print("observed links: %d" % len(net.observations))
    print("state dimension: %d" % S.state_dim)
    print("constraint dimension: %d" % S.n_constraints)
    return 0


def run_tap(cfg):
    """Solve one equilibrium assignment and print the link flows."""
    net = parse_network(_read_document(cfg.input_path))
    if cfg.demand is not None:
        d = np.asarray(cfg.demand, dtype=float)
        if d.shape != (net.n_commodities,):
            raise InputError("expected %d demand values, got %d"
                             % (net.n_commodities, d.size))
        if np.any(d < 0.0):
            raise InputError("demands must be nonnegative")
    else:
        d = net.target_demands
    sol = solve_tap(net, d, tol=cfg.tol, max_iter=cfg.max_iter)
    for lk, flow in zip(net.links, sol.v):
        print("link %s: %s" % (lk.id, _fmt(flow)))
    print("beckmann: %s" % _fmt(sol.beckmann))
    print("relative_gap: %s" % _fmt(sol.rgap))
    print("iterations: %d" % sol.iterations)
    return 0 if sol.converged else 2


def run_solve(cfg):
    """Run the full demand adjustment and emit a JSON report."""
    text = _read_document(cfg.input_path)
    net = parse_network(text)
    doc = json.loads(text)

    overrides = dict(doc.get("solver", {}))
    overrides.update(cfg.overrides or {})
    try:
        ircfg = IRConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise InputError("bad solver settings: %s" % exc) from exc

    if cfg.initial_demand is not None:
        d0 = cfg.initial_demand
    else:
        d0 = doc.get("initial_demand")
    if d0 is not None:
        d0 = np.asarray(d0, dtype=float)
        if d0.shape != (net.n_commodities,):
            raise InputError("expected %d initial demands, got %d"
                             % (net.n_commodities, d0.size))
        if np.any(d0 < 0.0):
            raise InputError("initial demands must be nonnegative")
    s0 = initial_state(net, d0)

    log_fh = open(cfg.log_path, "w", encoding="utf-8") if cfg.log_path else None
    try:
        if log_fh:
            log_fh.write("\t".join(IterationRecord.FIELDS) + "\n")

        def sink(rec):
            if log_fh is None:
                return
            row = []
            for name in IterationRecord.FIELDS:
                val = getattr(rec, name)
                if name in ("k", "i"):
                    row.append("%d" % val)
                elif name == "accepted":
                    row.append("1" if val else "0")
                else:
                    row.append(_fmt(val))
            log_fh.write("\t".join(row) + "\n")

        t_start = time.perf_counter()
        res = solve_dap(net, ircfg, s0=s0, sink=sink)
        wall = time.perf_counter() - t_start
    finally:
        if log_fh:
            log_fh.close()

    v_final = res.X_final.reshape(net.n_commodities, net.n_links).sum(axis=0)
    e_obs = v_final[net.obs_links] - net.obs_flows
    e_dem = res.d_final - net.target_demands
    f1 = float(e_obs @ e_obs)
    f2 = float(e_dem @ e_dem)

    report = {
        "input": cfg.input_path,
        "nodes": net.n_nodes,
        "links": net.n_links,
        "commodities": net.n_commodities,
        "eta1": _round9(net.eta1),
        "eta2": _round9(net.eta2),
        "target_demand": [_round9(x) for x in net.target_demands],
        "initial_demand": [_round9(x) for x in s0.d],
        "status": res.status,
        "outer_iterations": res.outer_iterations,
        "inner_attempts": len(res.history),
        "d_final": [_round9(x) for x in res.d_final],
        "v_final": [_round9(x) for x in v_final],
        "F_final": _round9(res.F_final),
        "F1": _round9(f1),
        "F2": _round9(f2),
        "objective_check": _round9(net.eta1 * f1 + net.eta2 * f2),
        "wall_time_s": _round9(wall),
        "solver": {f.name: getattr(ircfg, f.name) for f in fields(IRConfig)},
    }
    text_out = json.dumps(report, indent=2)
    if cfg.report_path:
        with open(cfg.report_path, "w", encoding="utf-8") as fh:
            fh.write(text_out + "\n")
    else:
        print(text_out)
    return 0 if res.status == STATUS_CONVERGED else 2


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="odadjust",
        description="Adjust origin-destination demands to observed link flows "
                    "under user equilibrium.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run the demand adjustment")
    p_solve.add_argument("--input", required=True)
    p_solve.add_argument("--report", default=None,
                         help="write the JSON report here instead of stdout")
    p_solve.add_argument("--log", default=None,
                         help="write one TSV row per optimization attempt")
    p_solve.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                         help="override a solver setting")
    p_solve.add_argument("--initial-demand", default=None, metavar="D1,D2,...",
                         help="starting demands (defaults to the targets)")

    p_tap = sub.add_parser("tap", help="solve one equilibrium assignment")
    p_tap.add_argument("--input", required=True)
    p_tap.add_argument("--demand", default=None, metavar="D1,D2,...",
                       help="demands to assign (defaults to the targets)")
    p_tap.add_argument("--tol", type=float, default=1e-8)
    p_tap.add_argument("--max-iter", type=int, default=50000)

    p_check = sub.add_parser("check", help="validate a document and print sizes")
    p_check.add_argument("--input", required=True)
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "check":
            return run_check(RunConfig(command="check", input_path=args.input))
        if args.command == "tap":
            demand = (_parse_demand_string(args.demand)
                      if args.demand is not None else None)
            return run_tap(RunConfig(command="tap", input_path=args.input,
                                     demand=demand, tol=args.tol,
                                     max_iter=args.max_iter))
        demand0 = (_parse_demand_string(args.initial_demand)
                   if args.initial_demand is not None else None)
        return run_solve(RunConfig(command="solve", input_path=args.input,
                                   report_path=args.report, log_path=args.log,
                                   overrides=_parse_set_overrides(args.set),
                                   initial_demand=demand0))
    except InputError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except OdAdjustError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
