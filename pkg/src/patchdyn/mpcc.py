"""Complementarity programs solved by a relaxation homotopy.

A complementarity pair contributes rows 0 <= a(w) \perp b(w) >= 0. Each pair
is relaxed to a(w) >= 0, b(w) >= 0, a(w)*b(w) <= sigma and the smooth NLP is
re-solved on a decreasing sigma schedule, warm-starting each stage from the
previous solution. Two-sided pairs relax a bilinear equality a(w)*b(w) = 0 to
|a(w)*b(w)| <= sigma without sign constraints on the factors.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import jax.numpy as jnp

from .autodiff import Block, NlpProblem
from .errors import CompResidualNotMet, NlpFailure
from .logutil import log
from .nlpsolver import IpSettings, solve_nlp


class ComplementarityPair:
    """fn(x, *params) returns the stacked factors [a; b], each of length m.

    a_bounded/b_bounded declare that the factor's nonnegativity is already
    guaranteed by variable bounds, so the relaxation need not emit a
    duplicate inequality row for it.
    """

    def __init__(self, fn, idx, m, params=(), two_sided=False,
                 a_bounded=False, b_bounded=False):
        self.fn = fn
        self.idx = np.asarray(idx, dtype=int)
        self.m = m
        self.params = tuple(params)
        self.two_sided = two_sided
        self.a_bounded = a_bounded
        self.b_bounded = b_bounded


@dataclass
class MpccProblem:
    n: int
    lb: np.ndarray
    ub: np.ndarray
    obj_blocks: list
    eq_blocks: list
    ineq_blocks: list
    comp_pairs: list


@dataclass
class HomotopySettings:
    sigma0: float = 1.0
    kappa: float = 0.1
    sigma_min: float = 1e-9
    max_outer: int = 16
    comp_tol: float = 1e-8
    # penalty phase: products weighted into the objective before the
    # relaxation schedule starts, so the iterate can cross between
    # complementarity branches while the feasible set stays full-dimensional
    rho0: float = 1.0
    rho_factor: float = 10.0
    max_penalty_stages: int = 3
    # if the initial point already satisfies complementarity this tightly,
    # skip the penalty phase and relax tightly around the given branch
    penalty_skip_tol: float = 1e-6


@dataclass
class HomotopyResult:
    w: np.ndarray
    f: float
    kkt_residual: float
    comp_residual: float
    stages: list = field(default_factory=list)


_RELAX_CACHE = {}


def _relaxed_fn(fn, m, two_sided, a_bounded, b_bounded):
    key = (fn, m, two_sided, a_bounded, b_bounded)
    if key not in _RELAX_CACHE:
        if two_sided:
            def g(x, sigma, *params):
                ab = fn(x, *params)
                prod = ab[:m] * ab[m:]
                return jnp.concatenate([sigma - prod, sigma + prod])
        else:
            def g(x, sigma, *params):
                ab = fn(x, *params)
                rows = []
                if not a_bounded:
                    rows.append(ab[:m])
                if not b_bounded:
                    rows.append(ab[m:])
                rows.append(sigma - ab[:m] * ab[m:])
                return jnp.concatenate(rows)
        _RELAX_CACHE[key] = g
    return _RELAX_CACHE[key]


_PEN_CACHE = {}


def _penalty_fn(fn, m, two_sided):
    key = (fn, m, two_sided)
    if key not in _PEN_CACHE:
        if two_sided:
            def g(x, rho, *params):
                ab = fn(x, *params)
                return jnp.array([rho * jnp.sum((ab[:m] * ab[m:]) ** 2)])
        else:
            def g(x, rho, *params):
                ab = fn(x, *params)
                return jnp.array([rho * jnp.sum(ab[:m] * ab[m:])])
        _PEN_CACHE[key] = g
    return _PEN_CACHE[key]


def _factor_rows_fn(fn, m, a_bounded, b_bounded):
    key = (fn, m, a_bounded, b_bounded, "rows")
    if key not in _PEN_CACHE:
        def g(x, *params):
            ab = fn(x, *params)
            rows = []
            if not a_bounded:
                rows.append(ab[:m])
            if not b_bounded:
                rows.append(ab[m:])
            return jnp.concatenate(rows)
        _PEN_CACHE[key] = g
    return _PEN_CACHE[key]


def penalized(problem, rho):
    """Smooth NLP with the complementarity products penalized in the objective."""
    obj = list(problem.obj_blocks)
    ineq = list(problem.ineq_blocks)
    for pair in problem.comp_pairs:
        g = _penalty_fn(pair.fn, pair.m, pair.two_sided)
        obj.append(Block(g, pair.idx, (np.float64(rho),) + pair.params))
        if not pair.two_sided and not (pair.a_bounded and pair.b_bounded):
            rows = _factor_rows_fn(pair.fn, pair.m, pair.a_bounded, pair.b_bounded)
            ineq.append(Block(rows, pair.idx, pair.params))
    return NlpProblem(problem.n, problem.lb, problem.ub,
                      obj, problem.eq_blocks, ineq)


def relax(problem, sigma):
    """Smooth NLP for one homotopy stage at relaxation parameter sigma."""
    ineq = list(problem.ineq_blocks)
    for pair in problem.comp_pairs:
        g = _relaxed_fn(pair.fn, pair.m, pair.two_sided,
                        pair.a_bounded, pair.b_bounded)
        ineq.append(Block(g, pair.idx, (np.float64(sigma),) + pair.params))
    return NlpProblem(problem.n, problem.lb, problem.ub,
                      problem.obj_blocks, problem.eq_blocks, ineq)


def comp_residual(problem, w):
    """Max-norm complementarity violation over all pairs at w."""
    worst = 0.0
    for pair in problem.comp_pairs:
        ab = np.asarray(Block(pair.fn, pair.idx, pair.params).value(w))
        a, b = ab[: pair.m], ab[pair.m :]
        if pair.m == 0:
            continue
        worst = max(worst, np.max(np.abs(a * b)))
        if not pair.two_sided:
            # nonnegativity of both factors is part of the condition
            worst = max(worst, np.max(-np.minimum(a, 0.0)),
                        np.max(-np.minimum(b, 0.0)))
    return worst


def _sigma_descent(problem, w, sigma, hs, ips, warm, stages):
    """Run the sigma schedule from the given start down to sigma_min.

    Non-final stages are solved to a sigma-proportional tolerance; stages
    that start warm restart the barrier at the sigma scale because the
    relaxed product rows cap their slacks at sigma, so a larger barrier
    would blow the bound multipliers up to barrier/sigma.
    """
    res = None
    for outer in range(hs.max_outer):
        final = sigma <= hs.sigma_min * (1.0 + 1e-10)
        stage_ips = ips if final else replace(
            ips, tol_kkt=max(ips.tol_kkt, min(1e-6, 1e-2 * sigma)))
        if outer > 0 or warm:
            stage_ips = replace(
                stage_ips,
                barrier_init=max(ips.tol_kkt, min(ips.barrier_init, sigma)))
        try:
            res = solve_nlp(relax(problem, sigma), w, stage_ips)
        except NlpFailure:
            # one retry at a larger sigma before giving up on this stage
            sigma_retry = sigma / np.sqrt(hs.kappa)
            log(1, f"homotopy: stage sigma={sigma:.1e} failed, "
                   f"retrying at sigma={sigma_retry:.1e}")
            res = solve_nlp(relax(problem, sigma_retry), w, stage_ips)
            sigma = sigma_retry
        w = res.w
        stages.append({"sigma": sigma, "iters": res.n_iter,
                       "kkt_residual": res.kkt_residual, "objective": res.f})
        log(1, f"homotopy: sigma={sigma:.1e} done in {res.n_iter} ip iterations, "
               f"obj={res.f:.8e}")
        if sigma <= hs.sigma_min * (1.0 + 1e-10):
            break
        sigma = max(sigma * hs.kappa, hs.sigma_min)
    return w, res


def solve_homotopy(problem, w0, settings=None, ip_settings=None):
    """Branch-aware homotopy for the complementarity program.

    If the initial point already satisfies complementarity tightly (e.g. it
    came from a forward rollout), the relaxation starts tight around that
    branch and only polishes. Otherwise a penalty phase minimizes the
    physics objective plus rho * products over the physics constraints
    alone - selecting a branch without the shrinking feasible set of the
    relaxation - and the sigma schedule starts at the complementarity level
    the penalty phase reached.
    """
    hs = settings or HomotopySettings()
    ips = ip_settings or IpSettings()
    w = np.asarray(w0, dtype=float).copy()
    stages = []
    res = None

    comp0 = comp_residual(problem, w)
    if comp0 <= hs.penalty_skip_tol:
        log(1, f"homotopy: initial comp={comp0:.3e}, trying tight relaxation "
               f"without the penalty phase")
        sigma = min(hs.sigma0, max(10.0 * comp0, 10.0 * hs.sigma_min))
        try:
            w_fin, res = _sigma_descent(problem, w.copy(), sigma, hs, ips,
                                        warm=True, stages=stages)
            cres = comp_residual(problem, w_fin)
            if cres <= hs.comp_tol:
                return HomotopyResult(w_fin, res.f, res.kkt_residual,
                                      cres, stages)
            log(1, f"homotopy: tight relaxation left comp={cres:.3e}, "
                   f"falling back to the penalty phase")
        except NlpFailure as exc:
            # the start point sits on a branch but too far from the stage
            # optimum to move inside a tight relaxation tube
            log(1, f"homotopy: tight relaxation failed "
                   f"({type(exc).__name__}), falling back to penalty phase")

    rho = hs.rho0
    for _ in range(hs.max_penalty_stages):
        try:
            pres = solve_nlp(penalized(problem, rho), w, ips)
        except NlpFailure as exc:
            log(1, f"homotopy: penalty stage rho={rho:.1e} failed "
                   f"({type(exc).__name__}), keeping previous point")
            break
        w = pres.w
        res = pres
        cres = comp_residual(problem, w)
        stages.append({"rho": rho, "iters": pres.n_iter,
                       "kkt_residual": pres.kkt_residual,
                       "objective": pres.f, "comp_residual": cres})
        log(1, f"homotopy: penalty rho={rho:.1e} done in {pres.n_iter} "
               f"ip iterations, comp={cres:.3e}")
        if cres <= hs.comp_tol:
            break
        rho = rho * hs.rho_factor
    if res is not None:
        cres = comp_residual(problem, w)
        sigma = min(hs.sigma0, max(10.0 * cres, 10.0 * hs.sigma_min))
        warm = True
    else:
        # penalty phase made no progress; run the plain schedule cold
        sigma = hs.sigma0
        warm = False
    w, res = _sigma_descent(problem, w, sigma, hs, ips, warm, stages)
    cres = comp_residual(problem, w)
    if cres > hs.comp_tol:
        raise CompResidualNotMet(
            f"complementarity residual {cres:.3e} exceeds {hs.comp_tol:.1e} "
            f"after {len(stages)} homotopy stages")
    return HomotopyResult(w, res.f, res.kkt_residual, cres, stages)
