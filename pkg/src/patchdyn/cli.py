"""Command-line surface: simulate, ocp, distance, order-study, selftest.

Exit codes: 0 success, 2 validation/parse failure, 3 solver failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from .contact import resolve_impact, SystemState
from .errors import NlpFailure, ParseError, PatchdynError, ValidationError
from .geom2d import SystemConfig, distance_oracle, solve_distance
from .runtime import order_study, simulate, solve_ocp
from .sampling import random_body, random_config
from .scenario_io import (
    load_scenario,
    write_order_study_csv,
    write_outputs,
    write_stats_json,
)


def _build_parser():
    ap = argparse.ArgumentParser(
        prog="patchdyn",
        description="Planar padded-polytope contact dynamics toolkit",
    )
    ap.add_argument("--seed", type=int, default=0,
                    help="seed for randomized subcommands (default 0)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="chain per-interval solves over the horizon")
    p.add_argument("scenario")
    p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("ocp", help="solve the full-horizon optimal control problem")
    p.add_argument("scenario")
    p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("distance", help="evaluate the signed distance at a pose")
    p.add_argument("scenario")
    p.add_argument("--config", required=True,
                   help="pose as 'cx1,cy1,xi1,cx2,cy2,xi2'")

    p = sub.add_parser("order-study", help="empirical convergence order")
    p.add_argument("scenario")
    p.add_argument("--steps", default="10,20,40,80",
                   help="comma-separated interval counts")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--baseline", action="store_true",
                   help="first-order single-stage comparison mode")

    sub.add_parser("selftest", help="run the built-in oracle suites")
    return ap


def _cmd_simulate(args):
    scn = load_scenario(args.scenario)
    traj = simulate(scn)
    write_outputs(traj, args.out)
    print(f"wrote {args.out}/trajectory.csv ({len(traj.rows())} rows, "
          f"{len(traj.events)} events)")
    return 0


def _cmd_ocp(args):
    scn = load_scenario(args.scenario)
    traj, controls, objective = solve_ocp(scn)
    write_outputs(traj, args.out)
    np.savetxt(os.path.join(args.out, "controls.csv"), controls,
               delimiter=",", fmt="%.17g")
    print(f"objective {objective:.12g}; wrote {args.out}/")
    return 0


def _cmd_distance(args):
    scn = load_scenario(args.scenario)
    vals = [float(v) for v in args.config.split(",")]
    if len(vals) != 6:
        raise ParseError("--config needs six comma-separated numbers")
    cfg = SystemConfig(np.array(vals[0:2]), vals[2], np.array(vals[3:5]), vals[5])
    z, mu, phi, cls = solve_distance(cfg, scn.bodies)
    print(f"phi   = {phi:.17g}")
    print(f"alpha = {z.alpha:.17g}")
    print(f"p     = ({z.p[0]:.17g}, {z.p[1]:.17g})")
    print(f"mu    = {np.array2string(mu.vector, precision=12)}")
    print(f"kind  = {cls.kind.name}")
    return 0


def _cmd_order_study(args):
    scn = load_scenario(args.scenario)
    steps = [int(s) for s in args.steps.split(",")]
    res = order_study(scn, steps, baseline=args.baseline)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "order_study.csv")
    write_order_study_csv(res, path)
    for n, h, err in res.rows():
        print(f"N={n:5d}  h={h:.6g}  err={err:.6e}")
    print(f"slope {res.slope:.4f}; wrote {path}")
    return 0


def _selftest_distance(rng, n=100, tol=1e-7):
    worst = 0.0
    for _ in range(n):
        bodies = (random_body(rng), random_body(rng))
        cfg = random_config(rng, bodies)
        _, _, phi, _ = solve_distance(cfg, bodies)
        phi_ref = distance_oracle(cfg, bodies)
        worst = max(worst, abs(phi - phi_ref))
    ok = worst <= tol
    print(f"distance oracle ({n} configs): max |dphi| = {worst:.3e} "
          f"{'PASS' if ok else 'FAIL'}")
    return ok


def _selftest_impact(rng, n=30):
    from .contact import ClsModel
    from .geom2d import PaddedPolytope2D

    A = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]])
    ok = True
    worst = 0.0
    for _ in range(n):
        b1 = PaddedPolytope2D(A, np.ones(4) * rng.uniform(0.8, 1.5), 0.1,
                              mass=rng.uniform(0.5, 2.0),
                              inertia=rng.uniform(0.5, 2.0))
        b2 = PaddedPolytope2D(A, np.ones(4), 0.1, mass=np.inf, inertia=np.inf)
        model = ClsModel((b1, b2))
        gap = b1.b[3] + b2.b[2]
        cfg = SystemConfig(np.array([rng.uniform(-0.5, 0.5), gap]), 0.0,
                           np.zeros(2), 0.0)
        nu_minus = np.array([rng.uniform(-1, 1), -rng.uniform(0.1, 2.0),
                             rng.uniform(-0.5, 0.5), 0, 0, 0])
        res = resolve_impact(cfg, nu_minus, model)
        m6 = np.array([b1.mass, b1.mass, b1.inertia, 0, 0, 0])
        e_pre = 0.5 * np.sum(m6 * nu_minus * nu_minus)
        e_post = 0.5 * np.sum(m6 * res.nu_plus * res.nu_plus)
        worst = max(worst, e_post - e_pre)
        if e_post > e_pre + 1e-12 or res.nu_plus[1] < -1e-9:
            ok = False
    print(f"impact law ({n} states): max energy gain = {worst:.3e} "
          f"{'PASS' if ok else 'FAIL'}")
    return ok


def _selftest_derivatives(rng, n=5, tol=1e-6):
    from .autodiff import Block
    import jax.numpy as jnp

    def fn(x, a):
        return jnp.array([jnp.sum(a * x**3), x[0] * x[1] - jnp.cos(x[2])])

    ok = True
    for _ in range(n):
        w = rng.normal(size=4)
        a = rng.normal(size=4)
        blk = Block(fn, np.arange(4), (a,))
        J = blk.jacobian(w)
        eps = 1e-6
        Jfd = np.zeros_like(J)
        for i in range(4):
            dp, dm = w.copy(), w.copy()
            dp[i] += eps
            dm[i] -= eps
            Jfd[:, i] = (np.asarray(blk.value(dp)) - np.asarray(blk.value(dm))) / (2 * eps)
        if np.max(np.abs(J - Jfd)) > tol * max(1.0, np.max(np.abs(J))):
            ok = False
    print(f"derivative check ({n} points): {'PASS' if ok else 'FAIL'}")
    return ok


def _cmd_selftest(args):
    rng = np.random.default_rng(args.seed)
    results = [
        _selftest_distance(rng),
        _selftest_impact(rng),
        _selftest_derivatives(rng),
    ]
    return 0 if all(results) else 3


def run_cli(argv=None):
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "ocp": _cmd_ocp,
        "distance": _cmd_distance,
        "order-study": _cmd_order_study,
        "selftest": _cmd_selftest,
    }
    try:
        return handlers[args.command](args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NlpFailure, PatchdynError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


def main():
    sys.exit(run_cli())
