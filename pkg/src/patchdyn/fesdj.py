"""Finite elements with switch detection for the patch-contact system.

One control interval of duration T_int is split into N_FE finite elements of
free lengths h_n. Each element carries Radau IIA collocation stages of the
contact DAE plus boundary variables that resolve an inelastic impact at the
element's left edge. Cross complementarities force active-set changes to
element boundaries so the collocation order is preserved between switches.
"""

from dataclasses import dataclass

import numpy as np
import numpy.polynomial.legendre as npleg
import numpy.polynomial.polynomial as nppoly
import jax.numpy as jnp

from . import geom2d
from .autodiff import Block
from .errors import ValidationError
from .logutil import log
from .mpcc import ComplementarityPair, MpccProblem

H_MIN_FACTOR = 1e-3
H_MAX_FACTOR = 3.0


# ---------------------------------------------------------------------------
# Butcher tableaus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ButcherTableau:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int

    def __post_init__(self):
        a, b, c = np.asarray(self.a), np.asarray(self.b), np.asarray(self.c)
        if abs(c[-1] - 1.0) > 1e-12:
            raise ValidationError("last abscissa must equal 1")
        if np.max(np.abs(a.sum(axis=1) - c)) > 1e-12:
            raise ValidationError("row sums of a must equal c")

    @property
    def n_s(self):
        return len(self.c)


def _radau_nodes(n_s):
    """Collocation nodes on (0, 1]: roots of P_s(2x-1) - P_{s-1}(2x-1)."""
    coeffs = np.zeros(n_s + 1)
    coeffs[n_s] = 1.0
    coeffs[n_s - 1] -= 1.0
    poly_x = npleg.leg2poly(coeffs)  # in y = 2x - 1
    # substitute y = 2x - 1
    comp = nppoly.Polynomial([0.0])
    ybase = nppoly.Polynomial([-1.0, 2.0])
    for k, ck in enumerate(poly_x):
        comp = comp + ck * ybase**k
    roots = np.sort(np.real(comp.roots()))
    # polish with Newton
    dcomp = comp.deriv()
    for _ in range(3):
        roots = roots - comp(roots) / dcomp(roots)
    return roots


def _collocation_tableau(c):
    """a_{ij} = integral_0^{c_i} of the j-th Lagrange basis; b = row at 1."""
    n_s = len(c)
    a = np.zeros((n_s, n_s))
    b = np.zeros(n_s)
    for j in range(n_s):
        pts = np.delete(c, j)
        ell = nppoly.Polynomial([1.0])
        for pk in pts:
            ell = ell * nppoly.Polynomial([-pk, 1.0]) / (c[j] - pk)
        integ = ell.integ()
        for i in range(n_s):
            a[i, j] = integ(c[i]) - integ(0.0)
        b[j] = integ(1.0) - integ(0.0)
    return a, b


def radau_iia(n_s):
    """Radau IIA tableau with n_s stages and order 2 n_s - 1."""
    if n_s == 1:
        return ButcherTableau(np.array([[1.0]]), np.array([1.0]), np.array([1.0]), 1)
    if n_s == 2:
        a = np.array([[5.0 / 12.0, -1.0 / 12.0], [3.0 / 4.0, 1.0 / 4.0]])
        return ButcherTableau(a, a[-1], np.array([1.0 / 3.0, 1.0]), 3)
    if n_s == 3:
        s6 = np.sqrt(6.0)
        a = np.array(
            [
                [(88 - 7 * s6) / 360, (296 - 169 * s6) / 1800, (-2 + 3 * s6) / 225],
                [(296 + 169 * s6) / 1800, (88 + 7 * s6) / 360, (-2 - 3 * s6) / 225],
                [(16 - s6) / 36, (16 + s6) / 36, 1.0 / 9.0],
            ]
        )
        c = np.array([(4 - s6) / 10, (4 + s6) / 10, 1.0])
        return ButcherTableau(a, a[-1], c, 5)
    if n_s == 4:
        c = _radau_nodes(4)
        c[-1] = 1.0
        a, b = _collocation_tableau(c)
        a[-1] = b
        return ButcherTableau(a, b, c, 7)
    raise ValidationError(f"unsupported stage count {n_s}, expected 1..4")


# ---------------------------------------------------------------------------
# Interval value object and residual evaluation (reference implementation)
# ---------------------------------------------------------------------------


@dataclass
class FesdjInterval:
    """Candidate values for one control interval's discretization variables.

    Stage index 0 holds the element-boundary state; stages 1..n_s are the
    collocation stages. z/mu/lam arrays are indexed by stage-1.
    """

    q: np.ndarray  # (N_FE, n_s+1, 6)
    nu: np.ndarray  # (N_FE, n_s+1, 6)
    z: np.ndarray  # (N_FE, n_s, 7)
    mu: np.ndarray  # (N_FE, n_s, n_mu)
    lam: np.ndarray  # (N_FE, n_s)
    z_I: np.ndarray  # (N_FE, 7)
    mu_I: np.ndarray  # (N_FE, n_mu)
    z_E: np.ndarray  # (N_FE, 7)
    mu_E: np.ndarray  # (N_FE, n_mu)
    Lam: np.ndarray  # (N_FE,)
    h: np.ndarray  # (N_FE,)
    u: np.ndarray
    T_int: float
    s0_q: np.ndarray  # (6,)
    s0_nu: np.ndarray  # (6,)

    @property
    def n_fe(self):
        return self.q.shape[0]

    @property
    def n_s(self):
        return self.q.shape[1] - 1


def _cfg(qvec):
    return geom2d.SystemConfig.from_q(qvec)


def _dual(muvec, bodies):
    m1 = bodies[0].A.shape[0]
    m2 = bodies[1].A.shape[0]
    return geom2d.DistanceDual(muvec[:m1], muvec[m1 : m1 + m2], muvec[m1 + m2], muvec[m1 + m2 + 1])


def _normal6(zvec, muvec, qvec, bodies):
    return geom2d.contact_normal_from_bodies(
        zvec, _dual(muvec, bodies), _cfg(qvec), bodies
    ).n


def assemble_rk_equations(interval, model, tableau):
    """Residuals of the collocation stage equations, one row per equation."""
    a = tableau.a
    n_s = tableau.n_s
    out = []
    for n in range(interval.n_fe):
        h = interval.h[n]
        qdots = interval.nu[n, 1:]
        nudots = []
        for j in range(n_s):
            fv = model.f_v(interval.q[n, j + 1], interval.nu[n, j + 1], interval.u)
            n6 = _normal6(interval.z[n, j], interval.mu[n, j], interval.q[n, j + 1], model.bodies)
            nudots.append(model.M_inv * (fv + n6 * interval.lam[n, j]))
        for i in range(n_s):
            r_q = interval.q[n, i + 1] - interval.q[n, 0] - h * sum(
                a[i, j] * qdots[j] for j in range(n_s)
            )
            r_nu = interval.nu[n, i + 1] - interval.nu[n, 0] - h * sum(
                a[i, j] * nudots[j] for j in range(n_s)
            )
            out.extend([r_q, r_nu])
    return np.concatenate(out)


def assemble_algebraic_stage_conditions(interval, model):
    """Stage KKT residuals: stationarity equalities plus complementarity pairs."""
    bodies = model.bodies
    residuals = []
    pairs = []
    for n in range(interval.n_fe):
        for j in range(interval.n_s):
            zv, muv = interval.z[n, j], interval.mu[n, j]
            qv = interval.q[n, j + 1]
            residuals.append(
                geom2d.stationarity(zv, _dual(muv, bodies), _cfg(qv), bodies)
            )
            g = geom2d.g_d(zv, _cfg(qv), bodies)
            pairs.append((np.array([zv[2] - 1.0]), np.array([interval.lam[n, j]])))
            pairs.append((muv.copy(), -g))
    return np.concatenate(residuals), pairs


def assemble_impact_equations(interval, model):
    """Boundary residuals and pairs at each element's left edge."""
    bodies = model.bodies
    residuals = []
    pairs = []
    for n in range(interval.n_fe):
        q0, nu0 = interval.q[n, 0], interval.nu[n, 0]
        q_prev = interval.s0_q if n == 0 else interval.q[n - 1, -1]
        nu_prev = interval.s0_nu if n == 0 else interval.nu[n - 1, -1]
        residuals.append(q0 - q_prev)
        n6 = _normal6(interval.z_I[n], interval.mu_I[n], q0, bodies)
        residuals.append(nu0 - nu_prev - model.M_inv * n6 * interval.Lam[n])
        residuals.append(
            geom2d.stationarity(
                interval.z_I[n], _dual(interval.mu_I[n], bodies), _cfg(q0), bodies
            )
        )
        qe = q0 + model.h_E * nu0
        residuals.append(
            geom2d.stationarity(
                interval.z_E[n], _dual(interval.mu_E[n], bodies), _cfg(qe), bodies
            )
        )
        # scalar impact condition Lambda_n * n^T nu_{n,0} = 0 (two-sided pair)
        pairs.append((np.array([interval.Lam[n]]), np.array([n6 @ nu0])))
        pairs.append(
            (np.array([interval.Lam[n]]), np.array([interval.z_I[n][2] - 1.0]))
        )
        g_i = geom2d.g_d(interval.z_I[n], _cfg(q0), bodies)
        pairs.append((interval.mu_I[n].copy(), -g_i))
        g_e = geom2d.g_d(interval.z_E[n], _cfg(qe), bodies)
        pairs.append((interval.mu_E[n].copy(), -g_e))
    return np.concatenate(residuals), pairs


def assemble_cross_complementarities(interval, model):
    """Bilinear pairs coupling stage multipliers across a full element.

    Emits (lam_{n,j}, alpha_{n,j'} - 1) and componentwise
    (mu_{n,j'}, -g_d(z_{n,j}, q_{n,j})) for j = 1..n_s, j' = 0..n_s. Stage
    index 0 aliases the previous element's last stage (boundary continuity of
    the algebraic variables); for element 0 it aliases the boundary impact
    evaluation (z_I, mu_I).
    """
    bodies = model.bodies
    pairs = []
    for n in range(interval.n_fe):
        z_list = [interval.z_I[n] if n == 0 else interval.z[n - 1, -1]]
        mu_list = [interval.mu_I[n] if n == 0 else interval.mu[n - 1, -1]]
        for j in range(interval.n_s):
            z_list.append(interval.z[n, j])
            mu_list.append(interval.mu[n, j])
        for j in range(1, interval.n_s + 1):
            lam = interval.lam[n, j - 1]
            g_j = geom2d.g_d(interval.z[n, j - 1], _cfg(interval.q[n, j]), bodies)
            for jp in range(interval.n_s + 1):
                pairs.append(
                    (np.array([lam]), np.array([z_list[jp][2] - 1.0]))
                )
                pairs.append((mu_list[jp].copy(), -g_j))
    return pairs


@dataclass
class ResidualBundle:
    rk_residuals: np.ndarray
    algebraic_residuals: np.ndarray
    impact_residuals: np.ndarray
    cross_comp_residuals: np.ndarray
    h_sum_residual: float


def residual_bundle(interval, model, tableau):
    """All interval residuals stacked, as assembled into the MPCC."""
    rk = assemble_rk_equations(interval, model, tableau)
    alg, _ = assemble_algebraic_stage_conditions(interval, model)
    imp, _ = assemble_impact_equations(interval, model)
    cross = cross_comp_products(interval, model)
    return ResidualBundle(rk, alg, imp, cross, float(np.sum(interval.h) - interval.T_int))


def cross_comp_products(interval, model):
    """Componentwise values of all cross-complementarity products."""
    return np.concatenate(
        [a * b for a, b in assemble_cross_complementarities(interval, model)]
    )


# ---------------------------------------------------------------------------
# jax stage functions (shared across all blocks of the same shape)
# ---------------------------------------------------------------------------


def _jrot(theta):
    c, s = jnp.cos(theta), jnp.sin(theta)
    return jnp.array([[c, -s], [s, c]])


def _jgd(z, q, A1, b1, r1, A2, b2, r2):
    p, alpha, y1, y2 = z[0:2], z[2], z[3:5], z[5:7]
    g1 = A1 @ (_jrot(q[2]).T @ (y1 - q[0:2])) - alpha * b1 + r1
    g2 = A2 @ (_jrot(q[5]).T @ (y2 - q[3:5])) - alpha * b2 + r2
    gc1 = (p - y1) @ (p - y1) - r1**2
    gc2 = (p - y2) @ (p - y2) - r2**2
    return jnp.concatenate([g1, g2, jnp.array([gc1, gc2])])


def _jstationarity(z, mu, q, A1, b1, A2, b2):
    m1 = A1.shape[0]
    m2 = A2.shape[0]
    p, y1, y2 = z[0:2], z[3:5], z[5:7]
    mu1p, mu2p = mu[:m1], mu[m1 : m1 + m2]
    mu1c, mu2c = mu[m1 + m2], mu[m1 + m2 + 1]
    r_p = 2 * (p - y1) * mu1c + 2 * (p - y2) * mu2c
    r_alpha = 1.0 - b1 @ mu1p - b2 @ mu2p
    r_y1 = _jrot(q[2]) @ (A1.T @ mu1p) - 2 * (p - y1) * mu1c
    r_y2 = _jrot(q[5]) @ (A2.T @ mu2p) - 2 * (p - y2) * mu2c
    return jnp.concatenate([r_p, jnp.array([r_alpha]), r_y1, r_y2])


def _jnormal6(z, mu, q, A1):
    m1 = A1.shape[0]
    p = z[0:2]
    n_tr = -_jrot(q[2]) @ (A1.T @ mu[:m1])
    d1 = p - q[0:2]
    d2 = p - q[3:5]
    return jnp.concatenate(
        [
            n_tr,
            jnp.array([d1[0] * n_tr[1] - d1[1] * n_tr[0]]),
            -n_tr,
            jnp.array([-(d2[0] * n_tr[1] - d2[1] * n_tr[0])]),
        ]
    )


def _fn_rk(x, a, Minv, f_const, B, damping, A1, b1, A2, b2):
    n_s = a.shape[0]
    n_mu = A1.shape[0] + A2.shape[0] + 2
    n_u = B.shape[1]
    o = 0

    def take(k):
        nonlocal o
        v = x[o : o + k]
        o += k
        return v

    q0 = take(6)
    nu0 = take(6)
    q_st = take(6 * n_s).reshape(n_s, 6)
    nu_st = take(6 * n_s).reshape(n_s, 6)
    z_st = take(7 * n_s).reshape(n_s, 7)
    mu_st = take(n_mu * n_s).reshape(n_s, n_mu)
    lam = take(n_s)
    h = take(1)[0]
    u = take(n_u)
    nudots = []
    for j in range(n_s):
        fv = f_const + B @ u - damping * nu_st[j]
        n6 = _jnormal6(z_st[j], mu_st[j], q_st[j], A1)
        nudots.append(Minv * (fv + n6 * lam[j]))
    rows = []
    for i in range(n_s):
        rows.append(q_st[i] - q0 - h * sum(a[i, j] * nu_st[j] for j in range(n_s)))
        rows.append(nu_st[i] - nu0 - h * sum(a[i, j] * nudots[j] for j in range(n_s)))
    return jnp.concatenate(rows)


def _fn_stat(x, A1, b1, r1, A2, b2, r2):
    n_mu = A1.shape[0] + A2.shape[0] + 2
    z, mu, q = x[:7], x[7 : 7 + n_mu], x[7 + n_mu :]
    return _jstationarity(z, mu, q, A1, b1, A2, b2)


def _fn_stat_shift(x, h_E, A1, b1, r1, A2, b2, r2):
    n_mu = A1.shape[0] + A2.shape[0] + 2
    z, mu = x[:7], x[7 : 7 + n_mu]
    q0, nu0 = x[7 + n_mu : 13 + n_mu], x[13 + n_mu :]
    return _jstationarity(z, mu, q0 + h_E * nu0, A1, b1, A2, b2)


def _fn_jump(x, Minv, A1):
    # layout: nu0(6), nu_prev(6), zI(7), muI(n_mu), q0(6), Lam(1)
    n_mu = len(x) - 26
    nu0, nu_prev = x[:6], x[6:12]
    zI = x[12:19]
    muI = x[19 : 19 + n_mu]
    q0 = x[19 + n_mu : 25 + n_mu]
    Lam = x[25 + n_mu]
    n6 = _jnormal6(zI, muI, q0, A1)
    return nu0 - nu_prev - Minv * n6 * Lam


def _fn_diff(x):
    k = len(x) // 2
    return x[:k] - x[k:]


def _fn_hsum(x, T):
    return jnp.array([jnp.sum(x) - T])


def _fn_ch(x, h_nom):
    return jnp.array([jnp.sum((x - h_nom) ** 2)])


def _pair_lam_alpha(x):
    # x = [lam(1), z(7)]
    return jnp.array([x[0], x[3] - 1.0])


def _pair_mu_gd(x, A1, b1, r1, A2, b2, r2):
    n_mu = A1.shape[0] + A2.shape[0] + 2
    mu, z, q = x[:n_mu], x[n_mu : n_mu + 7], x[n_mu + 7 :]
    return jnp.concatenate([mu, -_jgd(z, q, A1, b1, r1, A2, b2, r2)])


def _pair_mu_gd_shift(x, h_E, A1, b1, r1, A2, b2, r2):
    n_mu = A1.shape[0] + A2.shape[0] + 2
    mu, z = x[:n_mu], x[n_mu : n_mu + 7]
    q0, nu0 = x[n_mu + 7 : n_mu + 13], x[n_mu + 13 :]
    return jnp.concatenate(
        [mu, -_jgd(z, q0 + h_E * nu0, A1, b1, r1, A2, b2, r2)]
    )


def _pair_impact_scalar(x, A1):
    # x = [Lam(1), zI(7), muI(n_mu), q0(6), nu0(6)]
    n_mu = len(x) - 20
    Lam = x[0]
    zI = x[1:8]
    muI = x[8 : 8 + n_mu]
    q0 = x[8 + n_mu : 14 + n_mu]
    nu0 = x[14 + n_mu :]
    n6 = _jnormal6(zI, muI, q0, A1)
    return jnp.array([Lam, n6 @ nu0])


def _pair_lam_fd_impact(x):
    # x = [Lam(1), zI(7)]
    return jnp.array([x[0], x[3] - 1.0])


# ---------------------------------------------------------------------------
# MPCC assembly
# ---------------------------------------------------------------------------


class MpccBuilder:
    """Accumulates variables, blocks and pairs into an MpccProblem."""

    def __init__(self):
        self.n = 0
        self._lb = []
        self._ub = []
        self._w0 = []
        self.obj_blocks = []
        self.eq_blocks = []
        self.ineq_blocks = []
        self.comp_pairs = []

    def add_var(self, size, lb=-np.inf, ub=np.inf, init=0.0):
        idx = np.arange(self.n, self.n + size)
        self.n += size
        self._lb.append(np.broadcast_to(np.asarray(lb, float), (size,)).copy())
        self._ub.append(np.broadcast_to(np.asarray(ub, float), (size,)).copy())
        self._w0.append(np.broadcast_to(np.asarray(init, float), (size,)).copy())
        return idx

    def set_init(self, idx, vals):
        w0 = np.concatenate(self._w0)
        w0[idx] = vals
        self._w0 = [w0]

    def problem(self):
        return MpccProblem(
            self.n,
            np.concatenate(self._lb) if self._lb else np.zeros(0),
            np.concatenate(self._ub) if self._ub else np.zeros(0),
            self.obj_blocks,
            self.eq_blocks,
            self.ineq_blocks,
            self.comp_pairs,
        )

    def initial_point(self):
        return np.concatenate(self._w0) if self._w0 else np.zeros(0)


@dataclass
class IntervalVars:
    """Global decision-vector indices of one interval's variables."""

    q: np.ndarray  # (N_FE, n_s+1, 6) int indices
    nu: np.ndarray
    z: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    z_I: np.ndarray
    mu_I: np.ndarray
    z_E: np.ndarray
    mu_E: np.ndarray
    Lam: np.ndarray
    h: np.ndarray
    u: np.ndarray

    @property
    def final_q(self):
        return self.q[-1, -1]

    @property
    def final_nu(self):
        return self.nu[-1, -1]


def _geom_params(model):
    b1, b2 = model.bodies
    return (b1.A, b1.b, np.float64(b1.r), b2.A, b2.b, np.float64(b2.r))


def rollout(model, s0, u, T_int, n_steps=100, contact_tol=1e-8):
    """Semi-implicit Euler trace with inelastic impacts, for initial guesses.

    Returns (t, q, nu, lam, impacts): sample arrays plus a list of
    (time, impulse) impact events. lam is the contact-force multiplier on
    the distance-gradient direction at each sample.
    """
    from .contact import resolve_impact

    bodies = model.bodies
    Minv = model.M_inv
    qv = np.asarray(s0.q.q, float).copy()
    nuv = np.asarray(s0.nu, float).copy()
    dt_nom = T_int / n_steps

    def phi_of(qvec):
        cfg = geom2d.SystemConfig.from_q(qvec)
        prim, dual, phi, _ = geom2d.solve_distance(cfg, bodies)
        return cfg, prim, dual, phi

    t = 0.0
    ts, qs, nus, lams = [0.0], [qv.copy()], [nuv.copy()], [0.0]
    impacts = []
    guard = 0
    while t < T_int - 1e-12 and guard < 20 * n_steps:
        guard += 1
        dt = min(dt_nom, T_int - t)
        cfg, prim, dual, phi = phi_of(qv)
        f = model.f_v(cfg, nuv, u)
        nu_pred = nuv + dt * Minv * f
        lam_force = 0.0
        if phi <= contact_tol:
            n6 = geom2d.contact_normal_from_bodies(prim, dual, cfg, bodies).n
            denom = dt * (n6 @ (Minv * n6))
            v_n = n6 @ nu_pred
            if denom > 1e-14 and v_n < 0.0:
                lam_force = -v_n / denom
                nu_pred = nu_pred + dt * Minv * n6 * lam_force
        q_new = qv + dt * nu_pred
        _, _, _, phi_new = phi_of(q_new)[0:4]
        if phi_new < -contact_tol and phi > contact_tol:
            # crossing inside the step: bisect for the contact time
            lo, hi = 0.0, 1.0
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if phi_of(qv + mid * dt * nu_pred)[3] > 0.0:
                    lo = mid
                else:
                    hi = mid
            tau = lo
            q_c = qv + tau * dt * nu_pred
            cfg_c, prim_c, dual_c, phi_c = phi_of(q_c)
            n6 = geom2d.contact_normal_from_bodies(prim_c, dual_c, cfg_c, bodies).n
            if n6 @ nu_pred < 0.0:
                ir = resolve_impact(cfg_c, nu_pred, model, tol=10 * contact_tol)
                impacts.append((t + tau * dt, float(ir.Lambda_n)))
                nuv = np.asarray(ir.nu_plus, float)
            else:
                nuv = nu_pred
            qv = q_c
            t = t + tau * dt
        else:
            qv = q_new
            nuv = nu_pred
            t = t + dt
        ts.append(t)
        qs.append(qv.copy())
        nus.append(nuv.copy())
        lams.append(lam_force)
    return (np.array(ts), np.array(qs), np.array(nus), np.array(lams), impacts)


def interval_guess(model, s0, u, T_int, tableau, N_FE, n_steps=None):
    """Rollout-based initial values for all interval variables.

    Element boundaries are placed at detected impact times so the guess sits
    on the correct complementarity branch, with stage states interpolated
    from the rollout trace.
    """
    n_s = tableau.n_s
    b1, b2 = model.bodies
    n_mu = b1.A.shape[0] + b2.A.shape[0] + 2
    if n_steps is None:
        n_steps = max(100, 25 * N_FE)
    ts, qs, nus, lams, impacts = rollout(model, s0, u, T_int, n_steps)

    h_nom = T_int / N_FE
    h_lo, h_hi = H_MIN_FACTOR * h_nom, H_MAX_FACTOR * h_nom
    breaks = [te for te, _ in impacts if 1e-9 < te < T_int - 1e-9]
    breaks = breaks[: N_FE - 1]
    edges = np.concatenate([[0.0], breaks, [T_int]])
    counts = np.ones(len(edges) - 1, dtype=int)
    for _ in range(N_FE - len(counts)):
        # grow the segment whose elements are currently the longest
        seg = np.argmax(np.diff(edges) / counts)
        counts[seg] += 1
    tb = [0.0]
    for k in range(len(counts)):
        tb.extend(np.linspace(edges[k], edges[k + 1], counts[k] + 1)[1:])
    tb = np.array(tb)
    h = np.clip(np.diff(tb), h_lo, h_hi)

    def interp_state(tq):
        q = np.array([np.interp(tq, ts, qs[:, i]) for i in range(6)])
        nu = np.array([np.interp(tq, ts, nus[:, i]) for i in range(6)])
        return q, nu

    def alg_at(qvec):
        cfg = geom2d.SystemConfig.from_q(qvec)
        prim, dual, _, _ = geom2d.solve_distance(cfg, model.bodies)
        zv = prim.z.copy()
        zv[2] = max(zv[2], 1.0)
        return zv, dual.vector

    c = np.concatenate([[0.0], tableau.c])
    g = {
        "q": np.zeros((N_FE, n_s + 1, 6)),
        "nu": np.zeros((N_FE, n_s + 1, 6)),
        "z": np.zeros((N_FE, n_s, 7)),
        "mu": np.zeros((N_FE, n_s, n_mu)),
        "lam": np.zeros((N_FE, n_s)),
        "z_I": np.zeros((N_FE, 7)),
        "mu_I": np.zeros((N_FE, n_mu)),
        "z_E": np.zeros((N_FE, 7)),
        "mu_E": np.zeros((N_FE, n_mu)),
        "Lam": np.zeros(N_FE),
        "h": h,
    }
    for n in range(N_FE):
        for j, cj in enumerate(c):
            tq = tb[n] + cj * h[n]
            qj, nuj = interp_state(tq)
            g["q"][n, j] = qj
            g["nu"][n, j] = nuj
            if j > 0:
                zv, muv = alg_at(qj)
                g["z"][n, j - 1] = zv
                g["mu"][n, j - 1] = muv
                g["lam"][n, j - 1] = np.interp(tq, ts, lams)
        zv, muv = alg_at(g["q"][n, 0])
        g["z_I"][n] = zv
        g["mu_I"][n] = muv
        g["z_E"][n] = zv
        g["mu_E"][n] = muv
    for te, Lam in impacts:
        nearest = int(np.argmin(np.abs(tb - te)))
        if nearest < N_FE:
            g["Lam"][nearest] += Lam
    return g


def build_interval(builder, model, tableau, N_FE, T_int, s0_guess,
                   q_prev_idx, nu_prev_idx, u_idx, guess=None):
    """Emit all variables, constraints and pairs of one control interval.

    q_prev_idx/nu_prev_idx index the state feeding the first element boundary
    (fixed copies of s0 for simulation, the previous interval's node state for
    optimal control). Returns the IntervalVars index record.
    """
    if N_FE < 1:
        raise ValidationError("N_FE must be >= 1")
    n_s = tableau.n_s
    b1, b2 = model.bodies
    n_mu = b1.A.shape[0] + b2.A.shape[0] + 2
    gp = _geom_params(model)
    h_nom = T_int / N_FE

    if guess is None:
        # constant extrapolation of the start state
        q0v = s0_guess.q.q
        nu0v = np.asarray(s0_guess.nu, float)
        zsol, musol, _, _ = geom2d.solve_distance(s0_guess.q, model.bodies)
        zv = zsol.z.copy()
        zv[2] = max(zv[2], 1.0)
        muv = musol.vector
        guess = {
            "q": np.broadcast_to(q0v, (N_FE, n_s + 1, 6)),
            "nu": np.broadcast_to(nu0v, (N_FE, n_s + 1, 6)),
            "z": np.broadcast_to(zv, (N_FE, n_s, 7)),
            "mu": np.broadcast_to(muv, (N_FE, n_s, n_mu)),
            "lam": np.zeros((N_FE, n_s)),
            "z_I": np.broadcast_to(zv, (N_FE, 7)),
            "mu_I": np.broadcast_to(muv, (N_FE, n_mu)),
            "z_E": np.broadcast_to(zv, (N_FE, 7)),
            "mu_E": np.broadcast_to(muv, (N_FE, n_mu)),
            "Lam": np.zeros(N_FE),
            "h": np.full(N_FE, h_nom),
        }

    # z lower bound: alpha >= 1 (no interpenetration anywhere)
    z_lb = np.array([-np.inf, -np.inf, 1.0, -np.inf, -np.inf, -np.inf, -np.inf])

    def new_z(init):
        init = np.asarray(init, float).copy()
        init[2] = max(init[2], 1.0)
        return builder.add_var(7, lb=z_lb, init=init)

    def new_mu(init):
        return builder.add_var(n_mu, lb=0.0, init=np.maximum(init, 0.0))

    sh = (N_FE, n_s + 1, 6)
    q_idx = np.empty(sh, dtype=int)
    nu_idx = np.empty(sh, dtype=int)
    z_idx = np.empty((N_FE, n_s, 7), dtype=int)
    mu_idx = np.empty((N_FE, n_s, n_mu), dtype=int)
    lam_idx = np.empty((N_FE, n_s), dtype=int)
    zI_idx = np.empty((N_FE, 7), dtype=int)
    muI_idx = np.empty((N_FE, n_mu), dtype=int)
    zE_idx = np.empty((N_FE, 7), dtype=int)
    muE_idx = np.empty((N_FE, n_mu), dtype=int)
    Lam_idx = np.empty(N_FE, dtype=int)
    h_idx = np.empty(N_FE, dtype=int)

    g = guess
    for n in range(N_FE):
        for i in range(n_s + 1):
            q_idx[n, i] = builder.add_var(6, init=g["q"][n, i])
            nu_idx[n, i] = builder.add_var(6, init=g["nu"][n, i])
        for j in range(n_s):
            z_idx[n, j] = new_z(g["z"][n, j])
            mu_idx[n, j] = new_mu(g["mu"][n, j])
            lam_idx[n, j] = builder.add_var(
                1, lb=0.0, init=max(g["lam"][n, j], 0.0)
            )[0]
        zI_idx[n] = new_z(g["z_I"][n])
        muI_idx[n] = new_mu(g["mu_I"][n])
        zE_idx[n] = new_z(g["z_E"][n])
        muE_idx[n] = new_mu(g["mu_E"][n])
        Lam_idx[n] = builder.add_var(1, lb=0.0, init=max(g["Lam"][n], 0.0))[0]
        h_idx[n] = builder.add_var(
            1,
            lb=H_MIN_FACTOR * h_nom,
            ub=H_MAX_FACTOR * h_nom,
            init=float(np.clip(g["h"][n], H_MIN_FACTOR * h_nom, H_MAX_FACTOR * h_nom)),
        )[0]

    dyn_params = (
        tableau.a,
        model.M_inv,
        model.f_const,
        model.B,
        model.damping,
        b1.A,
        b1.b,
        b2.A,
        b2.b,
    )

    for n in range(N_FE):
        # element boundary: continuity and impact resolution
        qp = q_prev_idx if n == 0 else q_idx[n - 1, -1]
        nup = nu_prev_idx if n == 0 else nu_idx[n - 1, -1]
        builder.eq_blocks.append(
            Block(_fn_diff, np.concatenate([q_idx[n, 0], qp]))
        )
        builder.eq_blocks.append(
            Block(
                _fn_jump,
                np.concatenate(
                    [nu_idx[n, 0], nup, zI_idx[n], muI_idx[n], q_idx[n, 0],
                     [Lam_idx[n]]]
                ),
                (model.M_inv, b1.A),
            )
        )
        builder.eq_blocks.append(
            Block(_fn_stat, np.concatenate([zI_idx[n], muI_idx[n], q_idx[n, 0]]), gp)
        )
        builder.eq_blocks.append(
            Block(
                _fn_stat_shift,
                np.concatenate([zE_idx[n], muE_idx[n], q_idx[n, 0], nu_idx[n, 0]]),
                (np.float64(model.h_E),) + gp,
            )
        )
        builder.comp_pairs.append(
            ComplementarityPair(
                _pair_impact_scalar,
                np.concatenate(
                    [[Lam_idx[n]], zI_idx[n], muI_idx[n], q_idx[n, 0], nu_idx[n, 0]]
                ),
                1,
                (b1.A,),
                two_sided=True,
            )
        )
        builder.comp_pairs.append(
            ComplementarityPair(
                _pair_lam_fd_impact, np.concatenate([[Lam_idx[n]], zI_idx[n]]), 1,
                a_bounded=True, b_bounded=True,
            )
        )
        builder.comp_pairs.append(
            ComplementarityPair(
                _pair_mu_gd,
                np.concatenate([muI_idx[n], zI_idx[n], q_idx[n, 0]]),
                n_mu,
                gp,
                a_bounded=True,
            )
        )
        builder.comp_pairs.append(
            ComplementarityPair(
                _pair_mu_gd_shift,
                np.concatenate([muE_idx[n], zE_idx[n], q_idx[n, 0], nu_idx[n, 0]]),
                n_mu,
                (np.float64(model.h_E),) + gp,
                a_bounded=True,
            )
        )

        # collocation stage equations (one block for the whole element)
        rk_x = np.concatenate(
            [
                q_idx[n, 0],
                nu_idx[n, 0],
                q_idx[n, 1:].ravel(),
                nu_idx[n, 1:].ravel(),
                z_idx[n].ravel(),
                mu_idx[n].ravel(),
                lam_idx[n],
                [h_idx[n]],
                u_idx,
            ]
        )
        builder.eq_blocks.append(Block(_fn_rk, rk_x, dyn_params))

        # stage stationarity
        for j in range(n_s):
            builder.eq_blocks.append(
                Block(
                    _fn_stat,
                    np.concatenate([z_idx[n, j], mu_idx[n, j], q_idx[n, j + 1]]),
                    gp,
                )
            )

        # cross complementarities across the element, stage 0 aliased to the
        # previous element's last stage (or the boundary impact KKT point for
        # the first element)
        z_cols = [zI_idx[n] if n == 0 else z_idx[n - 1, -1]]
        mu_cols = [muI_idx[n] if n == 0 else mu_idx[n - 1, -1]]
        q_cols = [q_idx[n, 0]]
        for j in range(n_s):
            z_cols.append(z_idx[n, j])
            mu_cols.append(mu_idx[n, j])
            q_cols.append(q_idx[n, j + 1])
        for j in range(1, n_s + 1):
            for jp in range(n_s + 1):
                builder.comp_pairs.append(
                    ComplementarityPair(
                        _pair_lam_alpha,
                        np.concatenate([[lam_idx[n, j - 1]], z_cols[jp]]),
                        1,
                        a_bounded=True,
                        b_bounded=True,
                    )
                )
                builder.comp_pairs.append(
                    ComplementarityPair(
                        _pair_mu_gd,
                        np.concatenate([mu_cols[jp], z_cols[j], q_cols[j]]),
                        n_mu,
                        gp,
                        a_bounded=True,
                    )
                )

    # element lengths sum to the interval duration; step-equilibrium cost
    builder.eq_blocks.append(Block(_fn_hsum, h_idx, (np.float64(T_int),)))
    builder.obj_blocks.append(Block(_fn_ch, h_idx, (np.float64(h_nom),)))

    return IntervalVars(q_idx, nu_idx, z_idx, mu_idx, lam_idx, zI_idx, muI_idx,
                        zE_idx, muE_idx, Lam_idx, h_idx, np.asarray(u_idx, dtype=int))


def assemble_interval(s0, u, T_int, model, tableau, N_FE, guess="rollout"):
    """Stand-alone MPCC for one interval with fixed start state and control.

    By default the variables are initialized from a forward rollout of the
    dynamics (with event-aligned element boundaries); pass guess=None for
    constant extrapolation of the start state, or a dict from
    interval_guess().

    Returns (problem, w0, vars) where vars.final_q / vars.final_nu index the
    end-of-interval state extractor.
    """
    builder = MpccBuilder()
    u = np.zeros(model.n_u) if u is None else np.asarray(u, float)
    if isinstance(guess, str) and guess == "rollout":
        try:
            guess = interval_guess(model, s0, u, T_int, tableau, N_FE)
        except Exception as exc:  # fall back to constant extrapolation
            log(1, f"rollout init failed ({exc!r}); using constant init")
            guess = None
    q_prev = builder.add_var(6, lb=s0.q.q, ub=s0.q.q, init=s0.q.q)
    nu_prev = builder.add_var(6, lb=s0.nu, ub=s0.nu, init=s0.nu)
    u_idx = builder.add_var(model.n_u, lb=u, ub=u, init=u)
    ivars = build_interval(builder, model, tableau, N_FE, T_int, s0,
                           q_prev, nu_prev, u_idx, guess=guess)
    return builder.problem(), builder.initial_point(), ivars


def unpack_interval(w, ivars, T_int, s0, u=None):
    """FesdjInterval value object from a solution vector."""
    return FesdjInterval(
        q=w[ivars.q],
        nu=w[ivars.nu],
        z=w[ivars.z],
        mu=w[ivars.mu],
        lam=w[ivars.lam],
        z_I=w[ivars.z_I],
        mu_I=w[ivars.mu_I],
        z_E=w[ivars.z_E],
        mu_E=w[ivars.mu_E],
        Lam=w[ivars.Lam],
        h=w[ivars.h],
        u=w[ivars.u] if ivars.u.size else np.zeros(0),
        T_int=T_int,
        s0_q=w[ivars.q[0, 0]] if s0 is None else s0.q.q,
        s0_nu=w[ivars.nu[0, 0]] if s0 is None else np.asarray(s0.nu, float),
    )
