"""Command-line driver.

Exit codes: 0 success, 2 configuration or domain error, 3 numerical failure.
Set BROKEREXEC_LOG_LEVEL (e.g. INFO, DEBUG) for more output on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import closedform as cf
from . import oracle, riccati, sim
from .config import RunConfig, load
from .errors import BrokerExecError, NumericalError
from .params import PARAM_KEYS, PRESETS, Mode, derive, preset, validate
from .refstrat import Constant, Linear, PiecewiseConstant, l2_distance_sq, parse_spec, piecewise_approx

logger = logging.getLogger("brokerexec")

SUBCOMMANDS = ("solve", "trajectory", "basis", "piecewise", "simulate", "stress", "approx", "oracle-check")
_SCENARIO_ALIASES = {"baseline": "base-stress", "base": "base-stress"}


def _write_csv(path: Path, header, columns) -> None:
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def _write_json(path: Path, obj) -> None:
    def clean(v):
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, float) and not math.isfinite(v):
            return str(v)
        return v
    path.write_text(json.dumps(clean(obj), indent=2, sort_keys=True) + "\n")


def _emit(msg: str) -> None:
    print(msg, flush=True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("configuration")
    g.add_argument("--config", help="INI file with [params] and [run] sections")
    g.add_argument("--preset", help=f"parameter preset: {', '.join(PRESETS)}")
    g.add_argument("--scenario", help="stress scenario name (Baseline, S1..S4); same as --preset")
    for k in PARAM_KEYS:
        g.add_argument(f"--{k}", type=float, default=None, dest=k)
    g.add_argument("--ref", help="reference strategy: is, tc, twap, constant:L, endpoints:L, "
                                  "piecewise:L1,L2,..., linear:a,b, tabulated:file.csv")
    g.add_argument("--out", dest="outdir", help="output directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--n-grid", dest="n_grid", type=int, help="Riccati grid size")
    g.add_argument("--n-points", dest="n_points", type=int, help="trajectory grid size")
    g.add_argument("--n-paths", dest="n_paths", type=int)
    g.add_argument("--steps", dest="n_steps", type=int)
    g.add_argument("--S0", dest="S0", type=float)
    g.add_argument("--workers", type=int)

    ap = argparse.ArgumentParser(prog="brokerexec", description="Optimal execution against a reference strategy.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    sub.add_parser("solve", parents=[common], help="Riccati coefficients b2, b1, b0 to CSV")
    p = sub.add_parser("trajectory", parents=[common], help="closed-form optimal trajectory")
    p.add_argument("--oracle", action="store_true", help="add the brute-force discrete solution")
    p = sub.add_parser("basis", parents=[common], help="IS/TC decomposition for a constant level")
    p.add_argument("--level", type=float, help="reference level (default from --ref)")
    sub.add_parser("piecewise", parents=[common], help="knots and trajectory for a piecewise reference")
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo ensemble")
    p.add_argument("--policy", choices=["optimal", "risk-neutral", "twap"])
    p = sub.add_parser("stress", parents=[common], help="all stress scenarios for optimal and TWAP")
    p.add_argument("--n-boot", dest="n_boot", type=int, default=1000)
    p = sub.add_parser("approx", parents=[common], help="piecewise-approximation error versus its bound")
    p.add_argument("--n", dest="approx_n", type=int)
    sub.add_parser("oracle-check", parents=[common], help="closed form versus discrete oracle")
    return ap


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    name = args.scenario or args.preset
    if name:
        cfg = RunConfig(params=preset(_SCENARIO_ALIASES.get(name.lower(), name)))
    if args.config:
        cfg = load(args.config, cfg)
    kw = {k: getattr(args, k) for k in PARAM_KEYS if getattr(args, k, None) is not None}
    for k in ("ref", "outdir", "seed", "n_grid", "n_points", "n_paths", "n_steps", "S0",
              "workers", "policy", "approx_n"):
        v = getattr(args, k, None)
        if v is not None:
            kw[k] = v
    return cfg.with_(**kw)


def _ref(cfg: RunConfig):
    p = cfg.params
    return parse_spec(cfg.ref, p.T, p.x0, p.A)


def _outdir(cfg: RunConfig) -> Path:
    d = Path(cfg.outdir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def cmd_solve(cfg, args):
    p = validate(cfg.params, Mode.RISK_AVERSE)
    R = _ref(cfg)
    sol = riccati.solve(p, R, cfg.n_grid)
    b0 = sol.b0
    path = _outdir(cfg) / "solve.csv"
    _write_csv(path, ["t", "b2", "b1", "b0"], [sol.grid, sol.b2, sol.b1, b0])
    v = riccati.value_function(sol, 0.0, p.x0)
    c = sol.constants
    _emit(f"solve: {path} ({sol.grid.size} rows) H={c.H:.17g} l1={c.l1:.17g} l3={c.l3:.17g} "
          f"A0={c.A0:.17g} kappa={c.kappa:.17g} V(0,x0)={v.value:.17g}")


def _traj_grid(cfg):
    return np.linspace(0.0, cfg.params.T, cfg.n_points)


def cmd_trajectory(cfg, args):
    p = validate(cfg.params, Mode.RISK_AVERSE)
    R = _ref(cfg)
    t = _traj_grid(cfg)
    tr = cf.trajectory_general(p, R, t)
    k = derive(p).kappa
    cols = [t, tr.x, R.eval(t), cf.unit_is(k, p.T, t), cf.unit_tc(k, p.T, t)]
    header = ["t", "x", "R_t", "IS_t", "TC_t"]
    if getattr(args, "oracle", False):
        o = oracle.discrete_variational_solve(oracle.problem_from_params(p, R, t.size - 1))
        cols.append(o.x)
        header.append("x_oracle")
    path = _outdir(cfg) / "trajectory.csv"
    _write_csv(path, header, cols)
    msg = f"trajectory: {path} ({t.size} rows) x[0]={tr.x[0]:.17g} x[T]={tr.x[-1]:.17g}"
    if len(cols) == 6:
        msg += f" sup|x-x_oracle|={np.max(np.abs(cols[5] - tr.x)):.3e}"
    _emit(msg)


def cmd_basis(cfg, args):
    p = validate(cfg.params, Mode.RISK_AVERSE)
    if args.level is not None:
        level = args.level
    else:
        R = _ref(cfg)
        if not isinstance(R, Constant):
            raise BrokerExecError("basis needs a constant reference level (--level or --ref constant:L)")
        level = R.level
    t = _traj_grid(cfg)
    tr, w = cf.trajectory_endpoints_only(p, level, t)
    k = derive(p).kappa
    path = _outdir(cfg) / "basis.csv"
    _write_csv(path, ["t", "x", "R_t", "IS_t", "TC_t"],
               [t, tr.x, np.full_like(t, level), cf.unit_is(k, p.T, t), cf.unit_tc(k, p.T, t)])
    cls = cf.overshoot_classify(p, level).value if p.x0 != p.A else "degenerate"
    _emit(f"basis: {path} is_weight={w.is_weight:.17g} tc_weight={w.tc_weight:.17g} "
          f"offset={w.offset:.17g} shape={cls}")


def cmd_piecewise(cfg, args):
    p = validate(cfg.params, Mode.RISK_AVERSE)
    R = _ref(cfg)
    if not isinstance(R, PiecewiseConstant):
        raise BrokerExecError("piecewise needs --ref piecewise:L1,L2,...")
    a = cf.piecewise_knots(p, R.levels)
    n = R.n
    out = _outdir(cfg)
    _write_csv(out / "knots.csv", ["k", "t_k", "a_k"], [np.arange(n + 1), np.arange(n + 1) * p.T / n, a])
    t = _traj_grid(cfg)
    tr = cf.trajectory_piecewise(p, R.levels, t)
    k = derive(p).kappa
    _write_csv(out / "trajectory.csv", ["t", "x", "R_t", "IS_t", "TC_t"],
               [t, tr.x, R.eval(t), cf.unit_is(k, p.T, t), cf.unit_tc(k, p.T, t)])
    _emit(f"piecewise: {out / 'knots.csv'} knots=" + ",".join(f"{v:.10g}" for v in a))
    _emit(f"piecewise: {out / 'trajectory.csv'} ({t.size} rows)")


def _write_ensemble(d: Path, st: sim.EnsembleStats) -> None:
    d.mkdir(parents=True, exist_ok=True)
    _write_csv(d / "samples.csv", ["path_index", "pnl", "pnl_ref", "excess", "utility"],
               [np.arange(st.n_paths), st.pnl, st.pnl_ref, st.excess, st.utility])
    _write_json(d / "stats.json", st.summary())
    edges, counts = st.histogram()
    _write_csv(d / "hist.csv", ["bin_left", "bin_right", "count"], [edges[:-1], edges[1:], counts])


def cmd_simulate(cfg, args):
    p = cfg.params
    R = _ref(cfg)
    pol = sim.make_policy(cfg.policy, p, R, cfg.n_grid)
    st = sim.monte_carlo(p, pol, R, cfg.n_paths, cfg.n_steps, cfg.seed, cfg.S0, cfg.workers or None)
    d = _outdir(cfg)
    _write_ensemble(d, st)
    _emit(f"simulate: {d / 'stats.json'} policy={pol.name} n_paths={st.n_paths} mean={st.mean:.6g} "
          f"std={st.std:.6g} CE={st.certainty_equivalent:.6g}")


def cmd_stress(cfg, args):
    res = sim.run_stress(cfg.n_paths, cfg.n_steps, cfg.seed, cfg.ref, cfg.S0, cfg.workers or None,
                         n_boot=args.n_boot)
    out = _outdir(cfg)
    summary = {}
    for r in res:
        name = r.scenario.name
        for st in (r.optimal, r.twap):
            _write_ensemble(out / name / st.policy, st)
        entry = {"welch_z": r.comparison.z, "ce_optimal": r.comparison.ce_a, "ce_twap": r.comparison.ce_b}
        if r.bootstrap is not None:
            entry.update(ce_diff=r.bootstrap.ce_diff, ce_diff_lower95=r.bootstrap.lower,
                         bootstrap_frac_positive=r.bootstrap.frac_positive)
        summary[name] = entry
        _emit(f"stress: {name} CE optimal={r.comparison.ce_a:.6g} CE twap={r.comparison.ce_b:.6g} "
              f"welch z={r.comparison.z:.3g}"
              + (f" bootstrap lower95={r.bootstrap.lower:.6g}" if r.bootstrap else ""))
    _write_json(out / "comparison.json", summary)


def cmd_approx(cfg, args):
    p = validate(cfg.params, Mode.RISK_AVERSE)
    R = parse_spec(cfg.ref if cfg.ref != "is" else "linear", p.T, p.x0, p.A)
    Rt = piecewise_approx(R, cfg.approx_n)
    eps = l2_distance_sq(R, Rt)
    t = _traj_grid(cfg)
    x = cf.trajectory_general(p, R, t).x
    xt = cf.trajectory_general(p, Rt, t).x
    err = float(np.max(np.abs(x - xt)))
    k = derive(p).kappa
    bound = cf.approx_bound(k, eps)
    path = _outdir(cfg) / "approx.csv"
    _write_csv(path, ["t", "x", "x_approx", "R_t", "R_approx"], [t, x, xt, R.eval(t), Rt.eval(t)])
    _emit(f"approx: n={cfg.approx_n} eps={eps:.6e} sup_err={err:.6e} bound={bound:.6e} "
          f"ratio={err / bound if bound > 0 else math.nan:.4f} holds={err <= bound}")


def cmd_oracle_check(cfg, args):
    p = validate(cfg.params, Mode.RISK_AVERSE)
    R = _ref(cfg)
    rows = []
    scale = max(abs(p.x0 - p.A), 1e-300)
    for n in (1000, 2000, 4000):
        o = oracle.discrete_variational_solve(oracle.problem_from_params(p, R, n))
        x = cf.trajectory_general(p, R, o.grid).x
        rows.append((n, float(np.max(np.abs(o.x - x))) / scale))
    path = _outdir(cfg) / "oracle.csv"
    _write_csv(path, ["n", "rel_sup_err"], [[r[0] for r in rows], [r[1] for r in rows]])
    _emit("oracle-check: " + " ".join(f"n={n}:{e:.3e}" for n, e in rows)
          + f" ratio={rows[-2][1] / rows[-1][1] if rows[-1][1] > 0 else math.inf:.3f}")


_DISPATCH = {
    "solve": cmd_solve,
    "trajectory": cmd_trajectory,
    "basis": cmd_basis,
    "piecewise": cmd_piecewise,
    "simulate": cmd_simulate,
    "stress": cmd_stress,
    "approx": cmd_approx,
    "oracle-check": cmd_oracle_check,
}


def run(argv=None) -> int:
    level = os.environ.get("BROKEREXEC_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = resolve_config(args)
        _DISPATCH[args.cmd](cfg, args)
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (BrokerExecError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
