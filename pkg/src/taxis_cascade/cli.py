"""Command line entry point: run, gate, mms, sweep-epsilon, verify-weak, preset.

Exit codes: 0 success (and, for `run`, all pass/fail monitors green),
1 validation or gate failure, 2 runtime abort with partial outputs.
"""

from __future__ import annotations

import argparse
import math
import sys
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from taxis_cascade import grid as gridmod
from taxis_cascade import kinetics as kin
from taxis_cascade import solver, weakform
from taxis_cascade.config import Config, format_config, load_config
from taxis_cascade.errors import DomainError, StructuralError
from taxis_cascade.presets import preset, preset_names

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_ABORT = 2


def _load_cfg(args) -> Config:
    if getattr(args, "preset", None):
        return preset(args.preset).config
    if not getattr(args, "config", None):
        raise StructuralError("need a config file or --preset")
    return load_config(args.config)


def _print_gate(name, gate):
    verdict = "pass" if gate.passed else "FAIL"
    print(f"{name}: {verdict}")
    for check, ok in gate.checks.items():
        margin = gate.margins[check]
        flag = "" if ok else "  <-- fails"
        edge = "  (knife-edge)" if abs(margin) < kin.KNIFE_EDGE else ""
        print(f"  {check:24s} {'ok' if ok else 'violated':8s} margin={margin:.6g}{flag}{edge}")


def _validate(cfg: Config, force: bool) -> tuple[int, "solver.RunSetup | None"]:
    try:
        setup = cfg.build_setup(out_dir=Path(cfg.out_dir) if cfg.out_dir else None)
    except (StructuralError, DomainError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION, None
    ks = setup.params.kinetics
    env = kin.validate_envelope(ks)
    if not env.holds:
        print(f"validation error: growth envelope violated "
              f"({env.worst_check} at s={env.worst_point:.4g}, "
              f"margin {env.worst_margin:.3e})", file=sys.stderr)
        return EXIT_VALIDATION, None
    gate1 = kin.global_existence_gate(ks)
    if not gate1.passed and not force:
        _print_gate("global-existence gate", gate1)
        print("gate failed; use --force to integrate anyway", file=sys.stderr)
        return EXIT_VALIDATION, None
    return EXIT_OK, setup


def cmd_run(args) -> int:
    try:
        cfg = _load_cfg(args)
    except (StructuralError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if args.t_end is not None:
        cfg = replace(cfg, t_end=args.t_end)
    code, setup = _validate(cfg, args.force)
    if code != EXIT_OK:
        return code
    setup.force = args.force
    result = solver.run(setup)
    failures = result.report.failures()
    step_violations = sum(s.violations for s in result.step_checks.values())
    print(f"run {cfg.label}: steps={result.steps} t={result.final_state.t:.6g} "
          f"clamps={result.total_clamps} wall={result.wall_time:.1f}s")
    if result.decay is not None and result.decay.detected:
        print(f"  nutrient decay below {setup.monitor_delta:g} at t={result.decay.t_detect:.4g}")
    if result.regularity is not None:
        print(f"  eventual-regularity verdict: "
              f"{'regularized' if result.regularity.regularized else 'not regularized'}")
    if not result.completed:
        print(f"aborted: {result.failure}", file=sys.stderr)
        return EXIT_ABORT
    if failures or step_violations:
        print(f"monitor failures: {len(failures)} report entries, "
              f"{step_violations} per-step violations", file=sys.stderr)
        for e in failures[:10]:
            print(f"  t={e.t:.4g} {e.check} value={e.value:.6g} bound={e.bound:.6g}",
                  file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_gate(args) -> int:
    try:
        cfg = _load_cfg(args)
        ks = cfg.build_kinetics()
        params = solver.ModelParams(mu=cfg.mu, epsilon=cfg.epsilon,
                                    resupply=cfg.build_resupply(), kinetics=ks)
    except (StructuralError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    env = kin.validate_envelope(ks)
    print(f"envelope: {'holds' if env.holds else 'VIOLATED'} "
          f"(worst margin {env.worst_margin:.3e} at s={env.worst_point:.4g}, "
          f"{env.worst_check})")
    gate1 = kin.global_existence_gate(ks)
    gate2 = kin.eventual_regularity_gate(ks, params)
    _print_gate("global-existence gate", gate1)
    _print_gate("eventual-regularity gate", gate2)
    return EXIT_OK if (env.holds and gate1.passed) else EXIT_VALIDATION


# --- manufactured-solution convergence study ------------------------------


def mms_config(nx: int, t_end: float = 0.25, dt_coeff: float = 1.0,
               snapshot_every: float = 0.0, mms: "solver.MmsSpec | None" = None) -> Config:
    mms = mms or solver.shipped_mms()
    h = 1.0 / nx
    return Config(
        nx=nx, ny=nx, Lx=1.0, Ly=1.0,
        t_end=t_end, dt_max=1.0, safety=1.0, fixed_dt=dt_coeff * h * h,
        mu=0.3, epsilon=0.0,
        f_law="purepower(1.0, 1.0, 3.0)", g_law="purepower(1.0, 1.0, 3.0)",
        profile="constant", amplitude=0.0,
        init_u="mms", init_v="mms", init_w="mms",
        cadence=t_end, snapshot_every=snapshot_every,
        mms_u=mms.u.describe(), mms_v=mms.v.describe(), mms_w=mms.w.describe(),
        label=f"mms-{nx}",
    )


@dataclass
class MmsLevel:
    nx: int
    h: float
    dt: float
    steps: int
    wall_time: float
    errors: dict
    out_dir: Path | None


@dataclass
class MmsStudy:
    levels: list
    orders_l2: dict      # least-squares order per unknown, None when exact
    pair_orders: dict    # per unknown, list of consecutive-pair orders

    def table_rows(self):
        yield ("nx,h,dt,steps,err_l2_u,err_l2_v,err_l2_w,"
               "err_linf_u,err_linf_v,err_linf_w,wall_s")
        for lv in self.levels:
            e = lv.errors
            yield (f"{lv.nx},{lv.h!r},{lv.dt!r},{lv.steps},"
                   f"{e['l2_u']!r},{e['l2_v']!r},{e['l2_w']!r},"
                   f"{e['linf_u']!r},{e['linf_v']!r},{e['linf_w']!r},"
                   f"{lv.wall_time:.2f}")
        for name in ("u", "v", "w"):
            o = self.orders_l2[name]
            if o is None:
                label = "exact"
            elif isinstance(o, float) and math.isnan(o):
                label = "n/a"
            else:
                label = repr(o)
            yield f"order_l2_{name},{label}"


def mms_study(levels, t_end: float = 0.25, dt_coeff: float = 1.0,
              out_root=None, snapshot_every: float = 0.0,
              mms: "solver.MmsSpec | None" = None) -> MmsStudy:
    """Integrate the manufactured problem at each level, report errors/orders."""
    if list(levels) != sorted(levels):
        raise StructuralError("levels must be ascending")
    rows = []
    for nx in levels:
        cfg = mms_config(nx, t_end=t_end, dt_coeff=dt_coeff,
                         snapshot_every=snapshot_every, mms=mms)
        out_dir = Path(out_root) / f"mms-{nx}" if out_root else None
        setup = cfg.build_setup(out_dir=out_dir)
        t0 = time.perf_counter()
        result = solver.run(setup)
        wall = time.perf_counter() - t0
        if not result.completed:
            raise RuntimeError(f"mms level {nx} aborted: {result.failure}")
        g = setup.grid
        exact = setup.mms.fields(g, result.final_state.t)
        errors = {}
        for name, num, ex in zip("uvw", (result.final_state.u, result.final_state.v,
                                         result.final_state.w), exact):
            errors[f"l2_{name}"] = gridmod.norm_lp(num - ex, g, 2)
            errors[f"linf_{name}"] = gridmod.norm_linf(num - ex)
        rows.append(MmsLevel(nx=nx, h=g.hx, dt=cfg.fixed_dt, steps=result.steps,
                             wall_time=wall, errors=errors, out_dir=out_dir))
    orders = {}
    pair_orders = {}
    for name in ("u", "v", "w"):
        errs = np.array([lv.errors[f"l2_{name}"] for lv in rows])
        hs = np.array([lv.h for lv in rows])
        if np.all(errs < 1e-12):
            orders[name] = None      # rounding level: reported as exact
            pair_orders[name] = []
            continue
        if len(rows) < 2:
            orders[name] = math.nan  # a single level has no observable order
            pair_orders[name] = []
            continue
        orders[name] = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
        pair_orders[name] = [
            float(np.log(errs[i] / errs[i + 1]) / np.log(hs[i] / hs[i + 1]))
            for i in range(len(errs) - 1)]
    return MmsStudy(levels=rows, orders_l2=orders, pair_orders=pair_orders)


def cmd_mms(args) -> int:
    levels = [int(s) for s in args.levels.split(",")]
    study = mms_study(levels, t_end=args.t_end, dt_coeff=args.dt_coeff,
                      out_root=args.out)
    lines = list(study.table_rows())
    print("\n".join(lines))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "mms.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


# --- epsilon robustness sweep ----------------------------------------------


@dataclass
class SweepResult:
    eps: list
    diffs: list  # rows (eps_hi, eps_lo, du_l2, dv_l1, dw_l2)
    run_dirs: list

    def table_rows(self):
        yield "eps_hi,eps_lo,du_l2,dv_l1,dw_l2"
        for row in self.diffs:
            yield ",".join(repr(float(x)) for x in row)

    def strictly_decreasing(self) -> dict:
        out = {}
        for j, name in ((2, "u_l2"), (3, "v_l1"), (4, "w_l2")):
            vals = [row[j] for row in self.diffs]
            out[name] = all(a > b for a, b in zip(vals, vals[1:]))
        return out


def _traj_diff(traj_a, traj_b):
    """Space-time differences between two snapshot-aligned trajectories."""
    if len(traj_a) != len(traj_b) or np.max(np.abs(
            np.asarray(traj_a.times) - np.asarray(traj_b.times))) > 1e-9:
        raise StructuralError("sweep trajectories are not time-aligned")
    g = traj_a.grid
    w = np.zeros(len(traj_a))
    tms = np.asarray(traj_a.times)
    w[:-1] += 0.5 * np.diff(tms)
    w[1:] += 0.5 * np.diff(tms)
    du2 = dv1 = dw2 = 0.0
    for i in range(len(traj_a)):
        ua, va, wa = traj_a.load(i)
        ub, vb, wb = traj_b.load(i)
        du2 += w[i] * float(np.sum((ua - ub) ** 2)) * g.cell_volume
        dv1 += w[i] * float(np.sum(np.abs(va - vb))) * g.cell_volume
        dw2 += w[i] * float(np.sum((wa - wb) ** 2)) * g.cell_volume
    return math.sqrt(du2), dv1, math.sqrt(dw2)


def sweep_epsilon(base_cfg: Config, eps_list, t_end: float | None = None,
                  fixed_dt: float | None = None, out_root=None,
                  snapshot_every: float = 0.1) -> SweepResult:
    """Identical runs per epsilon on one shared fixed time grid.

    Adaptive stepping would give each member its own step sequence and bury
    the O(eps) Cauchy differences in step noise, so dt is frozen (default:
    half the suggested step of the initial state).
    """
    if any(b > a for a, b in zip(eps_list, eps_list[1:])):
        raise StructuralError("epsilon list must be descending")
    cfg = base_cfg
    if t_end is not None:
        cfg = replace(cfg, t_end=t_end)
    if fixed_dt is None:
        probe = replace(cfg, epsilon=eps_list[0]).build_setup()
        st0 = solver.State(probe.initial.u0, probe.initial.v0, probe.initial.w0)
        fixed_dt = 0.5 * solver.suggest_dt(st0, probe.params, probe.grid, probe.control)
    tmp = None
    if out_root is None:
        tmp = tempfile.TemporaryDirectory(prefix="taxis-sweep-")
        out_root = tmp.name
    run_dirs = []
    try:
        for k, eps in enumerate(eps_list):
            mcfg = replace(cfg, epsilon=eps, fixed_dt=fixed_dt,
                           snapshot_every=snapshot_every,
                           label=f"{cfg.label}-eps{eps:g}",
                           out_dir=str(Path(out_root) / f"member{k}-eps{eps:g}"))
            setup = mcfg.build_setup()
            result = solver.run(setup)
            if not result.completed:
                raise RuntimeError(f"sweep member eps={eps} aborted: {result.failure}")
            run_dirs.append(Path(mcfg.out_dir))
        diffs = []
        for a, b in zip(run_dirs, run_dirs[1:]):
            ta = weakform.load_trajectory(a)
            tb = weakform.load_trajectory(b)
            du, dv, dw = _traj_diff(ta, tb)
            diffs.append((float(ta.params.epsilon), float(tb.params.epsilon),
                          du, dv, dw))
        return SweepResult(eps=list(eps_list), diffs=diffs, run_dirs=run_dirs)
    finally:
        if tmp is not None:
            tmp.cleanup()


def cmd_sweep(args) -> int:
    try:
        cfg = _load_cfg(args)
    except (StructuralError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    eps_list = [float(s) for s in args.eps.split(",")]
    sweep = sweep_epsilon(cfg, eps_list, t_end=args.t_end, fixed_dt=args.dt,
                          out_root=args.out)
    lines = list(sweep.table_rows())
    print("\n".join(lines))
    mono = sweep.strictly_decreasing()
    print("strictly decreasing: " + ", ".join(f"{k}={v}" for k, v in mono.items()))
    if args.out:
        (Path(args.out) / "sweep.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


# --- weak-form verification -------------------------------------------------


def verify_weak(traj_dir, out_csv=None):
    """Evaluate the three identities over the shipped basis plus the mass rows."""
    traj = weakform.load_trajectory(traj_dir)
    basis = weakform.default_basis(traj.t_end)
    rows = []
    for fn in basis:
        budget = weakform.identity_budget(traj, fn)
        ru = weakform.residual_u(traj, fn)
        rw = weakform.residual_w(traj, fn)
        rows.append((fn.name, "u_identity", ru, budget, abs(ru) <= budget))
        rows.append((fn.name, "w_identity", rw, budget, abs(rw) <= budget))
        dbudget = weakform.defect_budget(traj, fn)
        dv = weakform.defect_v(traj, fn)
        rows.append((fn.name, "v_inequality", dv, dbudget, dv >= -dbudget))
    mass_rows = weakform.check_mass_inequality(traj)
    worst = min(mass_rows, key=lambda r: r[1])
    rows.append(("-", "mass_inequality", worst[1], 1e-3, worst[1] >= -1e-3))
    lines = ["test_fn,identity,value,budget,pass"]
    lines += [f"{n},{ident},{v!r},{b!r},{'true' if ok else 'false'}"
              for n, ident, v, b, ok in rows]
    if out_csv is not None:
        Path(out_csv).write_text("\n".join(lines) + "\n")
    return rows, lines


def cmd_verify_weak(args) -> int:
    rows, lines = verify_weak(args.traj, args.out)
    print("\n".join(lines))
    return EXIT_OK if all(r[4] for r in rows) else EXIT_VALIDATION


def cmd_preset(args) -> int:
    if args.action == "list":
        for name in preset_names():
            p = preset(name)
            print(f"{name:22s} existence={'pass' if p.expect_existence else 'fail'} "
                  f"regularity={'pass' if p.expect_regularity else 'fail'}  {p.description}")
        return EXIT_OK
    if not args.name:
        print("preset show needs a name", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        p = preset(args.name)
    except StructuralError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_VALIDATION
    print(format_config(p.config), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="taxis-cascade",
                                 description="forager-exploiter taxis cascade simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("config", nargs="?", help="INI config file")
        p.add_argument("--preset", help="named preset instead of a config file")

    p = sub.add_parser("run", help="integrate a configuration with monitors")
    add_config_args(p)
    p.add_argument("--force", action="store_true",
                   help="integrate even when the parameter gate fails")
    p.add_argument("--out", help="output directory override")
    p.add_argument("--t-end", type=float, dest="t_end", help="override t_end")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gate", help="evaluate parameter gates only")
    add_config_args(p)
    p.set_defaults(func=cmd_gate)

    p = sub.add_parser("mms", help="manufactured-solution convergence study")
    p.add_argument("--levels", default="32,64,128", help="comma-separated nx values")
    p.add_argument("--t-end", type=float, dest="t_end", default=0.25)
    p.add_argument("--dt-coeff", type=float, dest="dt_coeff", default=1.0,
                   help="dt = coeff * h^2")
    p.add_argument("--out", help="directory for mms.csv and run outputs")
    p.set_defaults(func=cmd_mms)

    p = sub.add_parser("sweep-epsilon", help="regularization robustness sweep")
    add_config_args(p)
    p.add_argument("--eps", default="1e-1,1e-2,1e-3,1e-4",
                   help="descending comma-separated epsilons")
    p.add_argument("--t-end", type=float, dest="t_end", default=None)
    p.add_argument("--dt", type=float, default=None, help="shared fixed step")
    p.add_argument("--out", help="output root (default: temporary)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify-weak", help="evaluate solution identities on a trajectory")
    p.add_argument("--traj", required=True, help="run directory with snapshots")
    p.add_argument("--out", default="weakform.csv")
    p.set_defaults(func=cmd_verify_weak)

    p = sub.add_parser("preset", help="list or show canonical configurations")
    p.add_argument("action", choices=["list", "show"])
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_preset)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (StructuralError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
