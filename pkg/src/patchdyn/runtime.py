"""Scenario drivers: chained simulation, optimal control, and order studies.

A Scenario bundles the two-body model, horizon discretization, control
bounds, and cost/constraint data. simulate() solves one complementarity
program per control interval and chains the end states; solve_ocp()
assembles all intervals into a single program with free controls; and
order_study() measures empirical convergence order against a reference.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import jax.numpy as jnp

from .autodiff import Block
from .contact import ClsModel, SystemState
from .errors import NlpFailure, PatchdynError, ValidationError
from .fesdj import (
    MpccBuilder,
    assemble_interval,
    build_interval,
    interval_guess,
    radau_iia,
    unpack_interval,
)
from .geom2d import SystemConfig, solve_distance
from .logutil import log
from .mpcc import HomotopySettings, solve_homotopy
from .nlpsolver import IpSettings

IMPACT_EVENT_TOL = 1e-6
ACTIVE_SET_TOL = 1e-7


@dataclass
class Scenario:
    """Complete description of one two-body problem instance."""

    bodies: tuple
    q0: np.ndarray
    nu0: np.ndarray
    T: float
    N: int = 1
    N_FE: int = 2
    n_s: int = 2
    f_const: np.ndarray = field(default_factory=lambda: np.zeros(6))
    B: np.ndarray = field(default_factory=lambda: np.zeros((6, 0)))
    damping: np.ndarray = field(default_factory=lambda: np.zeros(6))
    h_E: float = 1e-4
    u_fixed: np.ndarray | None = None  # (N, n_u) scripted controls
    u_lb: np.ndarray | None = None
    u_ub: np.ndarray | None = None
    u_weight: np.ndarray | None = None  # running cost sum w u^2 * dt
    terminal_target: np.ndarray | None = None  # (12,) = (q, nu)
    terminal_weight: np.ndarray | None = None  # (12,)
    q_lb: np.ndarray | None = None  # path bounds on configurations
    q_ub: np.ndarray | None = None
    homotopy: HomotopySettings = field(default_factory=HomotopySettings)
    ip: IpSettings = field(default_factory=IpSettings)

    def __post_init__(self):
        self.q0 = np.asarray(self.q0, float)
        self.nu0 = np.asarray(self.nu0, float)
        if self.T <= 0:
            raise ValidationError("horizon T must be positive")
        if self.N < 1 or self.N_FE < 1:
            raise ValidationError("N and N_FE must be at least 1")
        if self.u_weight is not None and np.any(np.asarray(self.u_weight) < 0):
            raise ValidationError("cost weights must be nonnegative")
        if self.terminal_weight is not None and np.any(
            np.asarray(self.terminal_weight) < 0
        ):
            raise ValidationError("cost weights must be nonnegative")

    @property
    def n_u(self):
        return self.B.shape[1]

    def model(self):
        return ClsModel(self.bodies, self.f_const, self.B, self.damping, self.h_E)

    def initial_state(self):
        return SystemState(SystemConfig.from_q(self.q0), self.nu0)


@dataclass
class Event:
    t: float
    kind: str  # "impact" or "active_set_change"
    details: dict = field(default_factory=dict)


@dataclass
class Trajectory:
    """Solved intervals, their start times, and the extracted event list."""

    intervals: list
    t_starts: list
    c_nodes: np.ndarray  # collocation abscissae on (0, 1]
    events: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def element_edges(self, k):
        """Element boundary times of interval k (length N_FE + 1)."""
        h = self.intervals[k].h
        return self.t_starts[k] + np.concatenate([[0.0], np.cumsum(h)])

    def stage_times(self, k, n):
        """Times of stages 0..n_s in element n of interval k."""
        edges = self.element_edges(k)
        return np.concatenate(
            [[edges[n]], edges[n] + self.intervals[k].h[n] * self.c_nodes]
        )

    def final_state(self):
        itv = self.intervals[-1]
        return SystemState(SystemConfig.from_q(itv.q[-1, -1]), itv.nu[-1, -1])

    def rows(self):
        """Flat per-stage records for serialization.

        Each row: (t, q[6], nu[6], lambda, alpha, Lambda, p_x, p_y, h_element).
        Stage 0 of each element carries the boundary impulse and the
        post-impact algebraic point; collocation stages carry the stage
        force and primal point.
        """
        out = []
        for k, itv in enumerate(self.intervals):
            for n in range(itv.n_fe):
                ts = self.stage_times(k, n)
                h_n = itv.h[n]
                out.append(
                    (
                        ts[0],
                        itv.q[n, 0],
                        itv.nu[n, 0],
                        0.0,
                        itv.z_I[n][2],
                        itv.Lam[n],
                        itv.z_I[n][0],
                        itv.z_I[n][1],
                        h_n,
                    )
                )
                for j in range(itv.n_s):
                    out.append(
                        (
                            ts[j + 1],
                            itv.q[n, j + 1],
                            itv.nu[n, j + 1],
                            itv.lam[n, j],
                            itv.z[n, j, 2],
                            0.0,
                            itv.z[n, j, 0],
                            itv.z[n, j, 1],
                            h_n,
                        )
                    )
        return out


def _active_pattern(mu):
    return np.asarray(mu) > ACTIVE_SET_TOL


def _mech_energy(model, q, nu):
    minv = model.M_inv
    mass = np.where(minv > 0, 1.0 / np.where(minv > 0, minv, 1.0), 0.0)
    kinetic = 0.5 * np.sum(mass * nu * nu)
    potential = -np.dot(model.f_const, q)
    return kinetic + potential


def extract_events(traj, model):
    """Impacts and stage active-set changes at element boundaries.

    An impact is any element-boundary impulse Lambda above IMPACT_EVENT_TOL;
    a quieter boundary where the set of positive distance multipliers still
    changes is an active-set change. The contact kind and the jump of the
    shared primal point p across the boundary are attached to impact events.
    """
    events = []
    prev_mu = None
    prev_p = None
    for k, itv in enumerate(traj.intervals):
        edges = traj.element_edges(k)
        for n in range(itv.n_fe):
            t_n = edges[n]
            mu_in = _active_pattern(itv.mu_I[n])
            if itv.Lam[n] > IMPACT_EVENT_TOL:
                _, _, _, cls = solve_distance(
                    SystemConfig.from_q(itv.q[n, 0]), model.bodies
                )
                p_now = itv.z_I[n][0:2]
                details = {
                    "Lambda": float(itv.Lam[n]),
                    "contact": cls.kind.name,
                }
                if prev_p is not None:
                    details["ecp_jump"] = float(np.linalg.norm(p_now - prev_p))
                events.append(Event(float(t_n), "impact", details))
            elif prev_mu is not None and mu_in.shape == prev_mu.shape and np.any(
                mu_in != prev_mu
            ):
                events.append(
                    Event(
                        float(t_n),
                        "active_set_change",
                        {
                            "activated": int(np.sum(mu_in & ~prev_mu)),
                            "deactivated": int(np.sum(~mu_in & prev_mu)),
                        },
                    )
                )
            prev_mu = _active_pattern(itv.mu[n, -1])
            prev_p = itv.z[n, -1, 0:2]
    return events


def _solve_interval(scn, model, tableau, s, u, k):
    T_int = scn.T / scn.N
    problem, w0, ivars = assemble_interval(s, u, T_int, model, tableau, scn.N_FE)
    try:
        res = solve_homotopy(problem, w0, scn.homotopy, scn.ip)
    except (NlpFailure, PatchdynError) as exc:
        raise type(exc)(f"interval {k}: {exc}") from exc
    itv = unpack_interval(res.w, ivars, T_int, s, u)
    return itv, res


def simulate(scenario):
    """Sequentially solve each control interval and chain the end states."""
    model = scenario.model()
    tableau = radau_iia(scenario.n_s)
    s = scenario.initial_state()
    T_int = scenario.T / scenario.N
    intervals, t_starts, stage_stats, energy = [], [], [], []
    e_prev = _mech_energy(model, s.q.q, s.nu)
    for k in range(scenario.N):
        u = None
        if scenario.u_fixed is not None:
            u = np.asarray(scenario.u_fixed[k], float)
        log(1, f"simulate: interval {k + 1}/{scenario.N} t0={k * T_int:.6g}")
        itv, res = _solve_interval(scenario, model, tableau, s, u, k)
        intervals.append(itv)
        t_starts.append(k * T_int)
        stage_stats.append(
            {
                "interval": k,
                "stages": res.stages,
                "kkt_residual": float(res.kkt_residual),
                "comp_residual": float(res.comp_residual),
            }
        )
        s = SystemState(SystemConfig.from_q(itv.q[-1, -1]), itv.nu[-1, -1])
        e_now = _mech_energy(model, s.q.q, s.nu)
        energy.append(e_now - e_prev)
        e_prev = e_now
    traj = Trajectory(intervals, t_starts, tableau.c)
    traj.events = extract_events(traj, model)
    traj.stats = {"intervals": stage_stats, "energy_drift": energy}
    return traj


def _fn_ucost(x, w, dt):
    return jnp.array([dt * jnp.sum(w * x * x)])


def _fn_terminal(x, w, target):
    d = x - target
    return jnp.array([jnp.sum(w * d * d)])


def solve_ocp(scenario, u_init=None):
    """Assemble and solve the full-horizon program with free controls.

    Returns (trajectory, controls, objective). Controls are bounded by
    u_lb/u_ub, penalized by the running cost, and the terminal state is
    pulled toward terminal_target by terminal_weight.
    """
    model = scenario.model()
    tableau = radau_iia(scenario.n_s)
    n_u = scenario.n_u
    N = scenario.N
    T_int = scenario.T / N
    if u_init is None:
        u_init = np.zeros((N, n_u))
    u_init = np.broadcast_to(np.asarray(u_init, float), (N, n_u))
    u_lb = -np.inf if scenario.u_lb is None else np.asarray(scenario.u_lb, float)
    u_ub = np.inf if scenario.u_ub is None else np.asarray(scenario.u_ub, float)

    builder = MpccBuilder()
    s0 = scenario.initial_state()
    q_prev = builder.add_var(6, lb=s0.q.q, ub=s0.q.q, init=s0.q.q)
    nu_prev = builder.add_var(6, lb=s0.nu, ub=s0.nu, init=s0.nu)

    s_guess = s0
    all_ivars, u_indices = [], []
    for k in range(N):
        u_idx = builder.add_var(n_u, lb=u_lb, ub=u_ub, init=u_init[k])
        try:
            g = interval_guess(model, s_guess, u_init[k], T_int, tableau, scenario.N_FE)
        except Exception as exc:
            log(1, f"ocp: rollout init failed for interval {k} ({exc!r})")
            g = None
        ivars = build_interval(
            builder, model, tableau, scenario.N_FE, T_int, s_guess,
            q_prev, nu_prev, u_idx, guess=g,
        )
        all_ivars.append(ivars)
        u_indices.append(u_idx)
        q_prev, nu_prev = ivars.final_q, ivars.final_nu
        if g is not None:
            s_guess = SystemState(SystemConfig.from_q(g["q"][-1, -1]), g["nu"][-1, -1])
        if scenario.u_weight is not None and n_u > 0:
            builder.obj_blocks.append(
                Block(
                    _fn_ucost,
                    u_idx,
                    (np.asarray(scenario.u_weight, float), np.float64(T_int)),
                )
            )
    if scenario.terminal_weight is not None:
        idx = np.concatenate([all_ivars[-1].final_q, all_ivars[-1].final_nu])
        builder.obj_blocks.append(
            Block(
                _fn_terminal,
                idx,
                (
                    np.asarray(scenario.terminal_weight, float),
                    np.asarray(scenario.terminal_target, float),
                ),
            )
        )

    problem = builder.problem()
    if scenario.q_lb is not None or scenario.q_ub is not None:
        lo = -np.inf * np.ones(6) if scenario.q_lb is None else scenario.q_lb
        hi = np.inf * np.ones(6) if scenario.q_ub is None else scenario.q_ub
        for ivars in all_ivars:
            for qi in ivars.q.reshape(-1, 6):
                problem.lb[qi] = np.maximum(problem.lb[qi], lo)
                problem.ub[qi] = np.minimum(problem.ub[qi], hi)

    res = solve_homotopy(problem, builder.initial_point(), scenario.homotopy, scenario.ip)

    intervals = [
        unpack_interval(res.w, iv, T_int, None, res.w[ui])
        for iv, ui in zip(all_ivars, u_indices)
    ]
    traj = Trajectory(intervals, [k * T_int for k in range(N)], tableau.c)
    traj.events = extract_events(traj, model)
    traj.stats = {
        "stages": res.stages,
        "kkt_residual": float(res.kkt_residual),
        "comp_residual": float(res.comp_residual),
        "objective": float(res.f),
    }
    controls = np.array([res.w[ui] for ui in u_indices])
    return traj, controls, float(res.f)


@dataclass
class OrderStudyResult:
    step_counts: list
    h_nominal: np.ndarray
    terminal_error: np.ndarray
    slope: float

    def rows(self):
        return list(zip(self.step_counts, self.h_nominal, self.terminal_error))


def order_study(scenario, step_counts, reference=None, baseline=False):
    """Empirical convergence order of the terminal state over step counts.

    step_counts scale the number of control intervals N; the nominal step is
    T / (N * N_FE). The reference terminal state is either supplied as a
    12-vector (q, nu) or computed at 8x the finest grid with four stages.
    If baseline is set the study runs with a single stage (implicit Euler,
    first order) for contrast.
    """
    if reference is None:
        fine = replace(scenario, N=8 * max(step_counts), n_s=4)
        sf = simulate(fine).final_state()
        reference = np.concatenate([sf.q.q, sf.nu])
    reference = np.asarray(reference, float)
    errs, hs = [], []
    for n in step_counts:
        scn = replace(scenario, N=int(n))
        if baseline:
            scn = replace(scn, n_s=1)
        sf = simulate(scn).final_state()
        x = np.concatenate([sf.q.q, sf.nu])
        errs.append(np.linalg.norm(x - reference))
        hs.append(scenario.T / (int(n) * scenario.N_FE))
        log(1, f"order_study: N={n} h={hs[-1]:.4g} err={errs[-1]:.4e}")
    hs, errs = np.array(hs), np.array(errs)
    mask = errs > 0
    slope = float(np.polyfit(np.log(hs[mask]), np.log(errs[mask]), 1)[0])
    return OrderStudyResult(list(step_counts), hs, errs, slope)
