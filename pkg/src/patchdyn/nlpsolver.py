"""Dense primal-dual interior-point solver for smooth NLPs.

Inequalities (including variable bounds) receive slack variables and a
log-barrier; each Newton step solves the slack-eliminated symmetric KKT
system with an LDL^T factorization, correcting inertia with primal/dual
regularization until the factorization certifies a descent geometry.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    LinearAlgebraFailure,
    MaxIterations,
    NlpFailure,
    RestorationFailure,
)
from .logutil import log


@dataclass
class IpSettings:
    tol_kkt: float = 1e-9
    tol_acceptable: float = 1e-8
    acceptable_iter: int = 15
    max_iter: int = 300
    barrier_init: float = 0.1
    barrier_update_exponent: float = 1.5
    barrier_update_factor: float = 0.2
    barrier_tol_factor: float = 10.0
    tau_min: float = 0.995
    armijo_coeff: float = 1e-4
    alpha_min: float = 1e-12
    delta_w_init: float = 1e-8
    delta_w_max: float = 1e40
    delta_c: float = 1e-8
    delta_w_floor: float = 1.0
    slack_init_min: float = 1e-4
    max_restorations: int = 10


@dataclass
class IpResult:
    w: np.ndarray
    y_eq: np.ndarray
    z_ineq: np.ndarray
    f: float
    kkt_residual: float
    n_iter: int
    success: bool
    stats: dict = field(default_factory=dict)


def _ldl_factor(K):
    lu, d, perm = scipy.linalg.ldl(K, lower=True)
    n = K.shape[0]
    scale = max(np.max(np.abs(d)), 1.0)
    tol = np.finfo(float).eps * scale
    blocks = []
    pos = neg = zero = 0
    i = 0
    while i < n:
        if i + 1 < n and abs(d[i + 1, i]) > 0:
            a, b, c = d[i, i], d[i + 1, i], d[i + 1, i + 1]
            tr = 0.5 * (a + c)
            disc = np.hypot(0.5 * (a - c), b)
            for ev in (tr + disc, tr - disc):
                if ev > tol:
                    pos += 1
                elif ev < -tol:
                    neg += 1
                else:
                    zero += 1
            blocks.append((i, 2))
            i += 2
        else:
            ev = d[i, i]
            if ev > tol:
                pos += 1
            elif ev < -tol:
                neg += 1
            else:
                zero += 1
            blocks.append((i, 1))
            i += 1
    L = lu[perm]
    return (L, d, perm, blocks), (pos, neg, zero)


def _ldl_solve(factor, b):
    L, d, perm, blocks = factor
    t = scipy.linalg.solve_triangular(L, b[perm], lower=True, unit_diagonal=True)
    u = np.empty_like(t)
    for i, size in blocks:
        if size == 1:
            u[i] = t[i] / d[i, i]
        else:
            blk = np.array([[d[i, i], d[i + 1, i]], [d[i + 1, i], d[i + 1, i + 1]]])
            u[i : i + 2] = np.linalg.solve(blk, t[i : i + 2])
    v = scipy.linalg.solve_triangular(L, u, lower=True, trans="T", unit_diagonal=True)
    x = np.empty_like(v)
    x[perm] = v
    return x


class _Bounds:
    """Finite, non-fixed variable bounds expressed as inequality rows."""

    def __init__(self, lb, ub):
        fixed = np.isfinite(lb) & np.isfinite(ub) & (lb == ub)
        self.fix_idx = np.where(fixed)[0]
        self.fix_val = lb[self.fix_idx]
        self.lo_idx = np.where(np.isfinite(lb) & ~fixed)[0]
        self.lo_val = lb[self.lo_idx]
        self.hi_idx = np.where(np.isfinite(ub) & ~fixed)[0]
        self.hi_val = ub[self.hi_idx]
        self.m = len(self.lo_idx) + len(self.hi_idx)

    def values(self, w):
        return np.concatenate([w[self.lo_idx] - self.lo_val, self.hi_val - w[self.hi_idx]])

    def jac_t_vec(self, v):
        """J_bounds^T v scattered into an n-vector accumulator (returned)."""
        out = np.zeros(self._n)
        np.add.at(out, self.lo_idx, v[: len(self.lo_idx)])
        np.subtract.at(out, self.hi_idx, v[len(self.lo_idx) :])
        return out

    def jac_vec(self, dw):
        return np.concatenate([dw[self.lo_idx], -dw[self.hi_idx]])

    def add_weighted_diag(self, H, weights):
        nl = len(self.lo_idx)
        np.add.at(H, (self.lo_idx, self.lo_idx), weights[:nl])
        np.add.at(H, (self.hi_idx, self.hi_idx), weights[nl:])


def solve_nlp(problem, w0, settings=None, y0=None, z0=None):
    """Minimize the NLP from w0. Returns IpResult; raises NlpFailure subclasses."""
    st = settings or IpSettings()
    n = problem.n
    w = np.asarray(w0, dtype=float).copy()
    if w.shape != (n,):
        raise NlpFailure(f"initial point has shape {w.shape}, expected ({n},)")

    bounds = _Bounds(problem.lb, problem.ub)
    bounds._n = n
    w[bounds.fix_idx] = bounds.fix_val

    def eval_all(w):
        f = problem.eval_f(w)
        g = problem.eval_grad(w)
        cE, JE = problem.eval_eq(w)
        cI, JI = problem.eval_ineq(w)
        if len(bounds.fix_idx):
            cE = np.concatenate([cE, w[bounds.fix_idx] - bounds.fix_val])
            Jfix = np.zeros((len(bounds.fix_idx), n))
            Jfix[np.arange(len(bounds.fix_idx)), bounds.fix_idx] = 1.0
            JE = np.vstack([JE, Jfix]) if JE.size else Jfix
        cI_all = np.concatenate([cI, bounds.values(w)])
        return f, g, cE, JE, cI, JI, cI_all

    f, g, cE, JE, cI, JI, cI_all = eval_all(w)
    m_eq = len(cE)
    m_fix = len(bounds.fix_idx)
    m_eq_blk = m_eq - m_fix
    m_blk = len(cI)
    m_in = len(cI_all)

    mu = st.barrier_init
    # slacks start at the barrier scale so warm starts with a small barrier
    # keep their near-active rows tight instead of being pushed off the
    # constraint surface
    s = np.maximum(cI_all, mu)
    y = np.zeros(m_eq) if y0 is None or len(y0) != m_eq else np.asarray(y0, float).copy()
    z = np.full(m_in, mu) / s
    if z0 is not None and len(z0) == m_in:
        z = np.maximum(np.asarray(z0, float), 1e-8)

    rho = 1.0
    delta_last = 0.0
    n_restorations = 0
    n_acceptable = 0

    def jt_z(JI, zvec):
        out = JI.T @ zvec[:m_blk] if m_blk else np.zeros(n)
        return out + bounds.jac_t_vec(zvec[m_blk:])

    def merit(w, s, f, cE, cI_all, rho):
        return f - mu * np.sum(np.log(s)) + rho * (np.sum(np.abs(cE)) + np.sum(np.abs(cI_all - s)))

    for it in range(st.max_iter):
        r_d = g - (JE.T @ y if m_eq else 0.0) - jt_z(JI, z)
        r_E = cE
        r_I = cI_all - s
        inf_pr = max(
            np.max(np.abs(r_E)) if m_eq else 0.0,
            np.max(np.abs(r_I)) if m_in else 0.0,
        )
        inf_du = np.max(np.abs(r_d)) if n else 0.0
        comp0 = np.max(np.abs(s * z)) if m_in else 0.0
        E0 = max(inf_pr, inf_du, comp0)
        if E0 <= st.tol_kkt:
            log(1, f"ip: converged in {it} iterations, kkt={E0:.3e}")
            return IpResult(w, y[:m_eq_blk], z[:m_blk], f, E0, it, True,
                            {"restorations": n_restorations})
        # near-degenerate problems can stall just above tol_kkt; accept a
        # slightly weaker point if it persists
        n_acceptable = n_acceptable + 1 if E0 <= st.tol_acceptable else 0
        if n_acceptable >= st.acceptable_iter:
            log(1, f"ip: acceptable point after {it} iterations, kkt={E0:.3e}")
            return IpResult(w, y[:m_eq_blk], z[:m_blk], f, E0, it, True,
                            {"restorations": n_restorations, "acceptable": True})

        # barrier decrease once the current subproblem is solved well enough
        comp_mu = np.max(np.abs(s * z - mu)) if m_in else 0.0
        while max(inf_pr, inf_du, comp_mu) <= st.barrier_tol_factor * mu and mu > st.tol_kkt / 10:
            mu = max(st.tol_kkt / 10,
                     min(st.barrier_update_factor * mu, mu ** st.barrier_update_exponent))
            comp_mu = np.max(np.abs(s * z - mu)) if m_in else 0.0

        r_C = s * z - mu

        H = problem.hess_lagrangian(w, 1.0, y[:m_eq_blk], z[:m_blk])
        # slack elimination: W = H + J_I^T (Z/S) J_I
        zs = z / s
        W = H
        if m_blk:
            W = W + JI.T @ (zs[:m_blk, None] * JI)
        bounds.add_weighted_diag(W, zs[m_blk:])

        dim = n + m_eq

        # distance-KKT degeneracy makes equality rank deficiency and
        # zero-curvature null directions structural here, so both
        # regularizations are applied from the start; they multiply the step
        # (not the iterate) and shrink with the barrier parameter, so they
        # cannot bias the final iterates
        delta_w = st.delta_w_floor * mu
        delta_c = st.delta_c * mu**0.25 if m_eq else 0.0
        while True:
            K = np.zeros((dim, dim))
            K[:n, :n] = W
            if delta_w:
                K[np.arange(n), np.arange(n)] += delta_w
            if m_eq:
                K[:n, n:] = JE.T
                K[n:, :n] = JE
                if delta_c:
                    K[n + np.arange(m_eq), n + np.arange(m_eq)] -= delta_c
            try:
                factor, (pos, neg, zero) = _ldl_factor(K)
            except Exception as exc:  # LAPACK breakdown
                raise LinearAlgebraFailure(f"LDL factorization failed: {exc}")
            if pos == n and neg == m_eq and zero == 0:
                break
            if pos < n:
                delta_w = st.delta_w_init if delta_w == 0.0 else delta_w * 100.0
                if delta_last and delta_w < delta_last / 100.0:
                    delta_w = delta_last / 100.0
            else:
                # missing negative pivots: equality Jacobian rank deficiency
                delta_c = st.delta_c if delta_c == 0.0 else delta_c * 100.0
            if delta_w > st.delta_w_max or delta_c > st.delta_w_max:
                raise LinearAlgebraFailure(
                    "inertia correction exceeded maximum regularization")
        delta_last = min(delta_w, 1e-2) if delta_w else delta_last

        def solve_kkt(rhs):
            # the condensed system is very ill conditioned near active-set
            # boundaries; a couple of refinement sweeps recover the digits
            # lost in the factorization
            sol = _ldl_solve(factor, rhs)
            for _ in range(3):
                resid = rhs - K @ sol
                if np.max(np.abs(resid)) <= 1e-14 * max(1.0, np.max(np.abs(rhs))):
                    break
                sol = sol + _ldl_solve(factor, resid)
            return sol

        def direction(rE_d, rI_d):
            rhs_d = np.concatenate([-r_d - jt_z(JI, (r_C + z * rI_d) / s), -rE_d])
            sol = solve_kkt(rhs_d)
            dw_d = sol[:n]
            dy_d = -sol[n:]
            ds_d = (JI @ dw_d if m_blk else np.zeros(0))
            ds_d = np.concatenate([ds_d, bounds.jac_vec(dw_d)]) + rI_d
            dz_d = -(r_C + z * ds_d) / s
            return dw_d, dy_d, ds_d, dz_d

        dw, dy, ds, dz = direction(r_E, r_I)

        tau = max(st.tau_min, 1.0 - mu)
        alpha_pri = 1.0
        if m_in:
            neg_ds = ds < 0
            if np.any(neg_ds):
                alpha_pri = min(1.0, np.min(-tau * s[neg_ds] / ds[neg_ds]))
            neg_dz = dz < 0
            alpha_dua = 1.0
            if np.any(neg_dz):
                alpha_dua = min(1.0, np.min(-tau * z[neg_dz] / dz[neg_dz]))
        else:
            alpha_dua = 1.0

        rho = max(rho, 2.0 * max(np.max(np.abs(y + dy)) if m_eq else 0.0,
                                 np.max(np.abs(z + dz)) if m_in else 0.0, 1.0))
        phi0 = merit(w, s, f, cE, cI_all, rho)
        theta0 = np.sum(np.abs(cE)) + np.sum(np.abs(r_I))
        dphi = g @ dw - mu * np.sum(ds / s) - rho * theta0

        def kkt_err(g_t, JE_t, JI_t, cE_t, cI_all_t, s_t, y_t, z_t):
            rd = g_t - (JE_t.T @ y_t if m_eq else 0.0) - jt_z(JI_t, z_t)
            parts = [np.max(np.abs(rd)) if n else 0.0]
            if m_eq:
                parts.append(np.max(np.abs(cE_t)))
            if m_in:
                parts.append(np.max(np.abs(cI_all_t - s_t)))
                parts.append(np.max(np.abs(s_t * z_t - mu)))
            return max(parts)

        err0 = kkt_err(g, JE, JI, cE, cI_all, s, y, z)

        def acceptable(alpha_t, a_z, w_t, s_t, f_t, g_t, cE_t, JE_t, JI_t,
                       cI_all_t, dy_t, dz_t):
            phi_t = merit(w_t, s_t, f_t, cE_t, cI_all_t, rho)
            if phi_t <= phi0 + st.armijo_coeff * alpha_t * min(dphi, 0.0):
                return True
            # secondary acceptance: progress in the perturbed KKT residual
            err_t = kkt_err(g_t, JE_t, JI_t, cE_t, cI_all_t, s_t,
                            y + a_z * dy_t, z + a_z * dz_t)
            return err_t <= (1.0 - 0.01 * alpha_t) * err0

        def ftb(v, dv):
            neg = dv < 0
            if not np.any(neg):
                return 1.0
            return min(1.0, np.min(-tau * v[neg] / dv[neg]))

        alpha = alpha_pri
        accepted = False
        soc_tried = False
        while alpha >= st.alpha_min:
            w_t = w + alpha * dw
            s_t = s + alpha * ds
            try:
                f_t, g_t, cE_t, JE_t, cI_t, JI_t, cI_all_t = eval_all(w_t)
            except Exception:
                alpha *= 0.5
                continue
            a_z = min(alpha, alpha_dua)
            if acceptable(alpha, a_z, w_t, s_t, f_t, g_t, cE_t, JE_t, JI_t,
                          cI_all_t, dy, dz):
                accepted = True
                alpha_dua = a_z
                break
            if not soc_tried and alpha == alpha_pri:
                # second-order correction: the constraint manifold is curved,
                # so a full Newton step that fails the merit test is retried
                # with the constraint values re-sampled at the trial point
                soc_tried = True
                cE_soc = alpha * r_E + cE_t
                rI_soc = alpha * r_I + (cI_all_t - s_t)
                theta_soc = np.sum(np.abs(cE_soc)) + np.sum(np.abs(rI_soc))
                soc_ok = False
                for _ in range(4):
                    dw_c, dy_c, ds_c, dz_c = direction(cE_soc, rI_soc)
                    a_c = ftb(s, ds_c)
                    w_c = w + a_c * dw_c
                    s_c = s + a_c * ds_c
                    try:
                        evals = eval_all(w_c)
                    except Exception:
                        break
                    f_c, g_c, cE_c, JE_c, cI_c, JI_c, cI_all_c = evals
                    a_zc = min(a_c, ftb(z, dz_c))
                    if acceptable(a_c, a_zc, w_c, s_c, f_c, g_c, cE_c, JE_c,
                                  JI_c, cI_all_c, dy_c, dz_c):
                        dw, dy, ds, dz = dw_c, dy_c, ds_c, dz_c
                        alpha, alpha_dua = a_c, a_zc
                        w_t, s_t = w_c, s_c
                        f_t, g_t, cE_t, JE_t, cI_t, JI_t, cI_all_t = evals
                        accepted = True
                        soc_ok = True
                        break
                    theta_c = (np.sum(np.abs(a_c * cE_soc + cE_c))
                               + np.sum(np.abs(a_c * rI_soc + (cI_all_c - s_c))))
                    if theta_c >= 0.99 * theta_soc:
                        break
                    cE_soc = a_c * cE_soc + cE_c
                    rI_soc = a_c * rI_soc + (cI_all_c - s_c)
                    theta_soc = theta_c
                if soc_ok:
                    break
            alpha *= 0.5

        if not accepted:
            # feasibility restoration: equality least-squares step
            n_restorations += 1
            if n_restorations > st.max_restorations or not m_eq:
                raise RestorationFailure(
                    f"line search failed at iteration {it} (infeasibility {theta0:.3e})")
            dw_r, *_ = np.linalg.lstsq(JE, -cE, rcond=None)
            alpha_r = 1.0
            restored = False
            while alpha_r >= st.alpha_min:
                w_t = w + alpha_r * dw_r
                try:
                    f_t, g_t, cE_t, JE_t, cI_t, JI_t, cI_all_t = eval_all(w_t)
                except Exception:
                    alpha_r *= 0.5
                    continue
                if np.sum(np.abs(cE_t)) < 0.9 * np.sum(np.abs(cE)) + 1e-16:
                    restored = True
                    break
                alpha_r *= 0.5
            if not restored:
                raise RestorationFailure(
                    f"equality restoration stalled at iteration {it}")
            s_t = np.maximum(cI_all_t, mu)
            alpha = alpha_r
            alpha_dua = 0.0
            dz = np.zeros_like(z)
            dy = np.zeros_like(y)

        w, s = w_t, s_t
        f, g, cE, JE, cI, JI, cI_all = f_t, g_t, cE_t, JE_t, cI_t, JI_t, cI_all_t
        y = y + alpha_dua * dy
        z = z + alpha_dua * dz
        # keep duals within a large multiple of the barrier parameter
        if m_in:
            z = np.clip(z, mu / (1e10 * np.maximum(s, 1e-300)), 1e10 * mu / np.maximum(s, 1e-300))
            z = np.maximum(z, 1e-16)

        log(2, f"ip iter {it:3d}  obj {f: .8e}  inf_pr {inf_pr:.3e}  "
               f"inf_du {inf_du:.3e}  mu {mu:.1e}  alpha {alpha:.2e}  delta {delta_w:.1e}")
        log(3, f"   |y| {np.max(np.abs(y)) if m_eq else 0:.2e}"
               f"  |dy| {np.max(np.abs(dy)) if m_eq else 0:.2e}"
               f"  |z| {np.max(z) if m_in else 0:.2e}"
               f"  s_min {np.min(s) if m_in else 0:.2e}"
               f"  |dw| {np.max(np.abs(dw)):.2e}"
               f"  a_pri {alpha_pri:.2e}  a_dua {alpha_dua:.2e}"
               f"  dc {delta_c:.1e}  iE {int(np.argmax(np.abs(cE))) if m_eq else -1}")

    raise MaxIterations(f"no convergence within {st.max_iter} iterations")
