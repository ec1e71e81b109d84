"""Continuous-time contact model for two padded polytopes.

Right-hand side of the complementarity Lagrangian system, the simultaneous
inelastic impact law (resolved through the vertex-enumerated mixed LCP it is
equivalent to), the explicit-Euler feasibility surrogate, the full contact-DAE
residual, and closed-form force magnitude / equivalent contact point for
persistent patch contact, used as validation oracles throughout.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import MlcpFailure, NotInContact, SingularDenominator
from .geom2d import (
    CONTACT_TOL,
    ContactKind,
    DistanceDual,
    DistancePrimal,
    SystemConfig,
    contact_patch,
    cross2,
    g_d,
    normal_at_point,
    perp,
    rot,
    solve_distance,
    stationarity,
)


@dataclass
class SystemState:
    """Configuration plus velocity nu = (v1x, v1y, w1, v2x, v2y, w2)."""

    q: SystemConfig
    nu: np.ndarray

    def __post_init__(self):
        self.nu = np.asarray(self.nu, dtype=float)


@dataclass
class ClsModel:
    """Two padded bodies plus external-force structure.

    f_v(q, nu, u) = f_const + B u - damping * nu (damping diagonal, >= 0).
    Static bodies carry zero inverse mass/inertia in M_inv.
    """

    bodies: tuple
    f_const: np.ndarray = field(default_factory=lambda: np.zeros(6))
    B: np.ndarray = field(default_factory=lambda: np.zeros((6, 0)))
    damping: np.ndarray = field(default_factory=lambda: np.zeros(6))
    h_E: float = 1e-4

    def __post_init__(self):
        self.f_const = np.asarray(self.f_const, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        self.damping = np.asarray(self.damping, dtype=float)
        if self.h_E <= 0:
            raise ValueError("h_E must be positive")
        if np.any(self.damping < 0):
            raise ValueError("damping must be nonnegative")

    @property
    def n_u(self):
        return self.B.shape[1]

    @property
    def M_inv(self):
        b1, b2 = self.bodies
        return np.array(
            [
                b1.inv_mass,
                b1.inv_mass,
                b1.inv_inertia,
                b2.inv_mass,
                b2.inv_mass,
                b2.inv_inertia,
            ]
        )

    def f_v(self, q, nu, u):
        u = np.zeros(self.n_u) if u is None else np.asarray(u, dtype=float)
        return self.f_const + self.B @ u - self.damping * np.asarray(nu, dtype=float)


@dataclass
class ImpactResult:
    nu_plus: np.ndarray
    Lambda_n: float
    p_I: np.ndarray
    z_I: DistancePrimal
    mu_I: DistanceDual


def dynamics_rhs(state, u, z, mu, lambda_n, model):
    """(qdot, nudot) of the CLS at a given algebraic point."""
    if lambda_n < 0:
        raise ValueError("lambda_n must be nonnegative")
    q, nu = state.q, state.nu
    p = z.p if isinstance(z, DistancePrimal) else np.asarray(z)[0:2]
    n6 = normal_at_point(p, mu, q, model.bodies).n
    nudot = model.M_inv * (model.f_v(q, nu, u) + n6 * lambda_n)
    return nu.copy(), nudot


def euler_probe(q, nu, h_E, model):
    """Signed distance after one explicit Euler step: Phi(q + h_E nu)."""
    q_next = SystemConfig.from_q(q.q + h_E * np.asarray(nu, dtype=float))
    _, _, phi, _ = solve_distance(q_next, model.bodies)
    return phi


def resolve_impact(q, nu_minus, model, tol=CONTACT_TOL):
    """Simultaneous inelastic impact via the vertex-enumerated Moreau MLCP.

    Enumerates active subsets of the (<= 2) contact-patch vertices, accepts the
    sign-consistent one, and recovers the equivalent contact point as the
    impulse-weighted combination of vertices.
    """
    nu_minus = np.asarray(nu_minus, dtype=float)
    prim, dual, phi, cls = solve_distance(q, model.bodies)
    if phi > tol:
        raise NotInContact(f"phi = {phi:g} exceeds contact tolerance")
    w1, w2 = contact_patch(q, prim, dual, model.bodies, tol=tol)
    if np.linalg.norm(w1 - w2) < 1e-12:
        verts = [prim.p if cls.kind is not ContactKind.PatchContact else w1]
    else:
        verts = [w1, w2]
    normals = [normal_at_point(w, dual, q, model.bodies).n for w in verts]
    N = np.stack(normals, axis=1)  # 6 x n_v
    Minv = model.M_inv
    G = N.T @ (Minv[:, None] * N)
    rhs0 = N.T @ nu_minus
    n_v = len(verts)

    solution = None
    for size in range(n_v + 1):
        for S in combinations(range(n_v), size):
            lam = np.zeros(n_v)
            if S:
                GS = G[np.ix_(S, S)]
                if abs(np.linalg.det(GS)) < 1e-14:
                    continue
                lam_S = np.linalg.solve(GS, -rhs0[list(S)])
                if np.any(lam_S < -1e-12):
                    continue
                lam[list(S)] = np.maximum(lam_S, 0.0)
            nu_plus = nu_minus + Minv * (N @ lam)
            post = N.T @ nu_plus
            if np.all(post >= -1e-9):
                solution = (lam, nu_plus)
                break
        if solution is not None:
            break
    if solution is None:
        raise MlcpFailure("no sign-consistent active subset in the impact MLCP")
    lam, nu_plus = solution
    Lambda_n = float(np.sum(lam))
    if Lambda_n > 0:
        p_I = sum(l * w for l, w in zip(lam, verts)) / Lambda_n
    else:
        p_I = 0.5 * (w1 + w2)
    # rebuild the primal at the recovered ECP
    n_tr = -rot(q.xi1) @ (model.bodies[0].A.T @ dual.mu1p)
    nrm = np.linalg.norm(n_tr)
    n_hat1 = -n_tr / nrm if nrm > 0 else np.zeros(2)
    z_I = DistancePrimal(
        p_I, prim.alpha, p_I - model.bodies[0].r * n_hat1, p_I + model.bodies[0].r * n_hat1
    )
    probe = euler_probe(q, nu_plus, model.h_E, model)
    if probe < -1e-9:
        raise MlcpFailure(
            f"post-impact Euler probe negative ({probe:g}); grazing configuration"
        )
    return ImpactResult(nu_plus, Lambda_n, p_I, z_I, dual)


def contact_dae_residual(state, u, z, mu, lambda_n, nudot, model, tol=CONTACT_TOL):
    """Stacked residual of the index-reduced contact DAE at a candidate point."""
    q, nu = state.q, state.nu
    prim = z if isinstance(z, DistancePrimal) else DistancePrimal.from_z(z)
    if prim.alpha - 1.0 > tol:
        raise NotInContact("contact DAE requires an active contact")
    p = prim.p
    n6 = normal_at_point(p, mu, q, model.bodies).n
    f = model.f_v(q, nu, u)
    r_dyn = np.asarray(nudot, dtype=float) - model.M_inv * (f + n6 * lambda_n)
    r_fd = np.array([prim.alpha - 1.0])
    r_nv = np.array([n6 @ nu])
    r_stat = stationarity(prim.z, mu, q, model.bodies)
    g = g_d(prim.z, q, model.bodies)
    muv = mu.vector
    active = muv > 1e-9
    r_mu_inactive = muv[~active]
    r_g_active = g[active]
    return np.concatenate([r_dyn, r_fd, r_nv, r_stat, r_mu_inactive, r_g_active])


def _patch_quantities(state, u, model, active_faces):
    """Shared closed-form pieces for persistent patch contact."""
    q, nu = state.q, state.nu
    b1, b2 = model.bodies
    k1, k2 = active_faces
    n_hat1 = rot(q.xi1) @ b1.A[k1]
    mup1 = 1.0 / (b1.b[k1] + b2.b[k2])  # = 2 r mu1c
    n_tr = -n_hat1 * mup1
    m1, m2 = b1.inv_inertia, b2.inv_inertia
    Minv = model.M_inv
    f = model.f_v(q, nu, u)
    C_n = m1 * cross2(q.c1, n_tr) + m2 * cross2(q.c2, n_tr)
    R1r = m1 * f[2] - m2 * f[5]
    w1, w2 = nu[2], nu[5]
    v1, v2 = nu[0:2], nu[3:5]
    ndot_tr = w1 * perp(n_tr)
    R2_vec = np.concatenate(
        [
            ndot_tr,
            [-cross2(v1, n_tr) + cross2(q.c1, ndot_tr)],
            -ndot_tr,
            [cross2(v2, n_tr) - cross2(q.c2, ndot_tr)],
        ]
    )
    R2r = R2_vec @ nu
    n_c = np.concatenate(
        [n_tr, [-cross2(q.c1, n_tr)], -n_tr, [cross2(q.c2, n_tr)]]
    )
    msum = m1 + m2
    if msum <= 1e-12:
        raise SingularDenominator("both bodies have infinite inertia")
    R3r = R2r + n_c @ (Minv * f)
    R4r = R3r + C_n / msum * R1r
    denom = n_c @ (Minv * n_c) - C_n**2 / msum
    return n_hat1, n_tr, C_n, R1r, R4r, denom, msum


def analytic_lambda_patch(state, u, model, active_faces):
    """Closed-form contact force magnitude during persistent patch contact."""
    *_, R4r, denom, _ = _patch_quantities(state, u, model, active_faces)
    if denom <= 1e-12:
        raise SingularDenominator("force coefficient nonpositive")
    return -R4r / denom


def analytic_ecp_patch(state, u, lambda_n, model, active_faces):
    """Closed-form equivalent contact point during persistent patch contact.

    Solves the 2x2 system combining the contact hyperplane with torque balance.
    """
    if lambda_n <= 0:
        raise ValueError("requires lambda_n > 0")
    q = state.q
    b1 = model.bodies[0]
    k1 = active_faces[0]
    n_hat1, n_tr, C_n, R1r, _, _, msum = _patch_quantities(
        state, u, model, active_faces
    )
    M2 = np.array([n_hat1, [n_tr[1], -n_tr[0]]])
    if abs(np.linalg.det(M2)) < 1e-14:
        raise SingularDenominator("degenerate contact frame")
    rhs = np.array(
        [
            b1.b[k1] + n_hat1 @ q.c1,
            C_n / msum - R1r / (msum * lambda_n),
        ]
    )
    return np.linalg.solve(M2, rhs)
