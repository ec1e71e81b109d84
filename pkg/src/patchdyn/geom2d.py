"""Padded-polytope geometry in the plane.

A padded polytope is a convex polytope shrunk by a radius r in its halfspace
offsets and then swept by a disc of radius r, giving round corners. The scaled
signed distance between two such bodies is the optimal value of a small convex
program; this module solves that program analytically by enumerating active-set
candidates and verifying the full KKT system, and provides contact normals,
directional derivatives, contact patches and an independent bisection oracle.
"""

from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations

import numpy as np

from .errors import DegenerateConfig, NoCandidateFound, NotInContact

KKT_TOL = 1e-9
CONTACT_TOL = 1e-8


def rot(theta):
    """2D rotation matrix."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def cross2(a, b):
    """Planar cross product a x b = a1*b2 - a2*b1."""
    return a[0] * b[1] - a[1] * b[0]


def perp(a):
    """Rotate a by +90 degrees."""
    return np.array([-a[1], a[0]])


@dataclass
class PaddedPolytope2D:
    """Halfspace polytope {x : Ax <= b} with padding radius r, CoM at origin.

    mass/inertia may be inf for static bodies; geometry ignores them.
    """

    A: np.ndarray
    b: np.ndarray
    r: float
    mass: float = 1.0
    inertia: float = 1.0

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.validate()

    def validate(self):
        norms = np.linalg.norm(self.A, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("rows of A must have unit norm")
        if self.r <= 0:
            raise ValueError("padding radius must be positive")
        if np.any(self.b - self.r <= 0):
            raise ValueError("b - r*1 must be positive componentwise")
        if self.mass <= 0 or self.inertia <= 0:
            raise ValueError("mass and inertia must be positive (inf for static)")
        # boundedness: every direction must see a binding halfspace
        ang = np.linspace(0.0, 2 * np.pi, 720, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        if np.any(np.max(self.A @ dirs.T, axis=0) < 1e-8):
            raise ValueError("polytope {Ax <= b} is unbounded")

    @property
    def n_h(self):
        return self.A.shape[0]

    @property
    def static(self):
        return np.isinf(self.mass) or np.isinf(self.inertia)

    @property
    def inv_mass(self):
        return 0.0 if np.isinf(self.mass) else 1.0 / self.mass

    @property
    def inv_inertia(self):
        return 0.0 if np.isinf(self.inertia) else 1.0 / self.inertia

    @classmethod
    def from_vertices(cls, vertices, r, mass=1.0, inertia=None):
        """Build from CCW convex polygon vertices; CoM moved to the origin.

        inertia defaults to the uniform-density polar moment for the given mass.
        """
        V = np.asarray(vertices, dtype=float)
        com, area, izz = polygon_mass_properties(V)
        V = V - com
        V = order_ccw(V)
        nv = V.shape[0]
        A, b = [], []
        for i in range(nv):
            e = V[(i + 1) % nv] - V[i]
            n = np.array([e[1], -e[0]])
            n /= np.linalg.norm(n)
            A.append(n)
            b.append(n @ V[i])
        if inertia is None:
            inertia = izz / area * mass if np.isfinite(mass) else np.inf
        return cls(np.array(A), np.array(b), r, mass=mass, inertia=inertia)

    def vertices(self):
        """Vertices of the (unpadded, unscaled) polytope in body frame."""
        return halfspace_vertices(self.A, self.b)


def order_ccw(V):
    ang = np.arctan2(V[:, 1] - V[:, 1].mean(), V[:, 0] - V[:, 0].mean())
    return V[np.argsort(ang)]


def polygon_mass_properties(V):
    """(centroid, area, polar second moment about centroid) for CCW polygon."""
    V = order_ccw(np.asarray(V, dtype=float))
    x, y = V[:, 0], V[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    area = 0.5 * np.sum(cr)
    cx = np.sum((x + xn) * cr) / (6 * area)
    cy = np.sum((y + yn) * cr) / (6 * area)
    # second moments about origin, then shift to centroid
    ixx = np.sum((y**2 + y * yn + yn**2) * cr) / 12
    iyy = np.sum((x**2 + x * xn + xn**2) * cr) / 12
    izz = ixx + iyy - area * (cx**2 + cy**2)
    return np.array([cx, cy]), abs(area), abs(izz)


def halfspace_vertices(A, b, tol=1e-9):
    """Vertices of {x : Ax <= b}, ordered CCW. Empty list if infeasible."""
    n = A.shape[0]
    ii, jj = np.triu_indices(n, k=1)
    det = A[ii, 0] * A[jj, 1] - A[ii, 1] * A[jj, 0]
    ok = np.abs(det) >= 1e-12
    ii, jj, det = ii[ok], jj[ok], det[ok]
    x = np.stack(
        [
            (b[ii] * A[jj, 1] - b[jj] * A[ii, 1]) / det,
            (A[ii, 0] * b[jj] - A[jj, 0] * b[ii]) / det,
        ],
        axis=1,
    )
    feas = np.all(x @ A.T <= b + tol, axis=1)
    if not np.any(feas):
        return np.zeros((0, 2))
    P = np.unique(np.round(x[feas], 12), axis=0)
    c = P.mean(axis=0)
    ang = np.arctan2(P[:, 1] - c[1], P[:, 0] - c[0])
    return P[np.argsort(ang)]


@dataclass
class SystemConfig:
    """Poses of the two bodies: q = (c1, xi1, c2, xi2)."""

    c1: np.ndarray
    xi1: float
    c2: np.ndarray
    xi2: float

    def __post_init__(self):
        self.c1 = np.asarray(self.c1, dtype=float)
        self.c2 = np.asarray(self.c2, dtype=float)

    @classmethod
    def from_q(cls, q):
        q = np.asarray(q, dtype=float)
        return cls(q[0:2], q[2], q[3:5], q[5])

    @property
    def q(self):
        return np.concatenate([self.c1, [self.xi1], self.c2, [self.xi2]])


class ContactKind(Enum):
    VertexFace = "VertexFace"
    FaceVertex = "FaceVertex"
    VertexVertex = "VertexVertex"
    PatchContact = "PatchContact"


@dataclass
class ContactClassification:
    active1: tuple
    active2: tuple
    kind: ContactKind = field(init=False)

    def __post_init__(self):
        n1, n2 = len(self.active1), len(self.active2)
        if not (1 <= n1 <= 2 and 1 <= n2 <= 2):
            raise ValueError("active sets must have cardinality 1 or 2")
        self.kind = {
            (1, 1): ContactKind.PatchContact,
            (2, 1): ContactKind.VertexFace,
            (1, 2): ContactKind.FaceVertex,
            (2, 2): ContactKind.VertexVertex,
        }[(n1, n2)]


@dataclass
class DistancePrimal:
    """Primal solution z = (p, alpha, y1, y2) of the distance problem."""

    p: np.ndarray
    alpha: float
    y1: np.ndarray
    y2: np.ndarray

    @property
    def z(self):
        return np.concatenate([self.p, [self.alpha], self.y1, self.y2])

    @classmethod
    def from_z(cls, z):
        z = np.asarray(z, dtype=float)
        return cls(z[0:2], z[2], z[3:5], z[5:7])


@dataclass
class DistanceDual:
    """Multipliers mu = (mu1p, mu2p, mu1c, mu2c) of the distance problem."""

    mu1p: np.ndarray
    mu2p: np.ndarray
    mu1c: float
    mu2c: float

    @property
    def vector(self):
        return np.concatenate([self.mu1p, self.mu2p, [self.mu1c, self.mu2c]])


@dataclass
class ContactNormal6:
    """Contact normal in configuration space: (n_tr, (p-c1)x n_tr, -n_tr, -(p-c2)x n_tr)."""

    n: np.ndarray
    n_tr: np.ndarray


def g_d(z, q, bodies):
    """Inequality constraints of the distance problem, stacked <= 0."""
    p, alpha, y1, y2 = z[0:2], z[2], z[3:5], z[5:7]
    b1, b2 = bodies
    R1, R2 = rot(q.xi1), rot(q.xi2)
    g1 = b1.A @ (R1.T @ (y1 - q.c1)) - alpha * b1.b + b1.r
    g2 = b2.A @ (R2.T @ (y2 - q.c2)) - alpha * b2.b + b2.r
    gc1 = (p - y1) @ (p - y1) - b1.r**2
    gc2 = (p - y2) @ (p - y2) - b2.r**2
    return np.concatenate([g1, g2, [gc1, gc2]])


def stationarity(z, mu, q, bodies):
    """Stationarity residual of the distance-problem Lagrangian, 7-vector."""
    p, y1, y2 = z[0:2], z[3:5], z[5:7]
    b1, b2 = bodies
    R1, R2 = rot(q.xi1), rot(q.xi2)
    r_alpha = 1.0 - b1.b @ mu.mu1p - b2.b @ mu.mu2p
    r_p = 2 * (p - y1) * mu.mu1c + 2 * (p - y2) * mu.mu2c
    r_y1 = R1 @ (b1.A.T @ mu.mu1p) - 2 * (p - y1) * mu.mu1c
    r_y2 = R2 @ (b2.A.T @ mu.mu2p) - 2 * (p - y2) * mu.mu2c
    return np.concatenate([r_p, [r_alpha], r_y1, r_y2])


def kkt_residual(z, mu, q, bodies):
    """Max-norm KKT residual (stationarity, feasibility, dual sign, complementarity)."""
    g = g_d(z, q, bodies)
    muv = mu.vector
    res = [
        np.max(np.abs(stationarity(z, mu, q, bodies))),
        np.max(np.maximum(g, 0.0)),
        np.max(np.maximum(-muv, 0.0)),
        np.max(np.abs(muv * g)),
    ]
    return max(res)


def _world_normals(body, R):
    """World-frame outward unit normals of the body's faces (rows)."""
    return (R @ body.A.T).T


def _patch_segment(q, bodies, active1, active2, alpha):
    """Endpoints of the contact segment for a Case-3 (patch) active set."""
    b1, b2 = bodies
    R1 = rot(q.xi1)
    n1 = R1 @ b1.A[active1[0]]
    tau = perp(n1)
    off = alpha * b1.b[active1[0]] + n1 @ q.c1
    p0 = off * n1  # point on the contact line
    lo, hi = -np.inf, np.inf
    N1, N2 = _world_normals(b1, R1), _world_normals(bodies[1], rot(q.xi2))
    # y1 = p - r1 n1 within scaled body-1 halfspaces; y2 = p + r2 n1 within body-2
    for y0, N, body, c in (
        (p0 - b1.r * n1, N1, b1, q.c1),
        (p0 + b2.r * n1, N2, b2, q.c2),
    ):
        rhs = alpha * body.b - body.r - N @ (y0 - c)
        coef = N @ tau
        for ci, ri in zip(coef, rhs):
            if abs(ci) < 1e-12:
                if ri < -1e-9:
                    return None
                continue
            t = ri / ci
            if ci > 0:
                hi = min(hi, t)
            else:
                lo = max(lo, t)
    if lo > hi + 1e-9:
        return None
    lo, hi = min(lo, hi), max(lo, hi)
    return p0 + lo * tau, p0 + hi * tau


def _assemble_duals(bodies, active1, active2, mu1p_bar, mu2p_bar, mu1c, mu2c):
    b1, b2 = bodies
    m1 = np.zeros(b1.n_h)
    m2 = np.zeros(b2.n_h)
    m1[list(active1)] = mu1p_bar
    m2[list(active2)] = mu2p_bar
    return DistanceDual(m1, m2, float(mu1c), float(mu2c))


def _case1_candidates(q, bodies, a1, a2):
    """|A1| = |A2| = 2: vertex-vertex geometry; both quadratic roots are tried."""
    b1, b2 = bodies
    R1, R2 = rot(q.xi1), rot(q.xi2)
    A1b, A2b = b1.A[list(a1)], b2.A[list(a2)]
    if abs(np.linalg.det(A1b)) < 1e-10 or abs(np.linalg.det(A2b)) < 1e-10:
        return []
    A1i, A2i = np.linalg.inv(A1b), np.linalg.inv(A2b)
    b1b, b2b = b1.b[list(a1)], b2.b[list(a2)]
    u1, v1 = R1 @ (A1i @ b1b), q.c1 - R1 @ (A1i @ np.ones(2)) * b1.r
    u2, v2 = R2 @ (A2i @ b2b), q.c2 - R2 @ (A2i @ np.ones(2)) * b2.r
    d0, dd = v1 - v2, u1 - u2
    rsum = b1.r + b2.r
    aa = dd @ dd
    bb = 2 * d0 @ dd
    cc = d0 @ d0 - rsum**2
    out = []
    if aa < 1e-14:
        roots = [-cc / bb] if abs(bb) > 1e-14 else []
    else:
        disc = bb * bb - 4 * aa * cc
        if disc < 0:
            return []
        sq = np.sqrt(disc)
        roots = sorted([(-bb - sq) / (2 * aa), (-bb + sq) / (2 * aa)])
    for alpha in roots:
        if alpha <= 1e-12:
            continue
        y1, y2 = v1 + alpha * u1, v2 + alpha * u2
        p = y1 + (b1.r / rsum) * (y2 - y1)
        t1 = (A1i @ b1b) @ (R1.T @ (p - y1))
        t2 = (A2i @ b2b) @ (R2.T @ (p - y1))
        denom = 2 * (t1 - t2)
        if abs(denom) < 1e-14:
            continue
        mu1c = 1.0 / denom
        mu2c = mu1c * b1.r / b2.r
        m1 = 2 * A1i.T @ (R1.T @ (p - y1)) * mu1c
        m2 = 2 * A2i.T @ (R2.T @ (p - y2)) * mu2c
        out.append(
            (
                DistancePrimal(p, float(alpha), y1, y2),
                _assemble_duals(bodies, a1, a2, m1, m2, mu1c, mu2c),
            )
        )
    return out


def _case2_candidate(q, bodies, a1, k2):
    """|A1| = 2, |A2| = 1: body-1 vertex against a body-2 face."""
    b1, b2 = bodies
    R1, R2 = rot(q.xi1), rot(q.xi2)
    A1b = b1.A[list(a1)]
    if abs(np.linalg.det(A1b)) < 1e-10:
        return []
    A1i = np.linalg.inv(A1b)
    b1b = b1.b[list(a1)]
    n2 = R2 @ b2.A[k2]
    u1, v1 = R1 @ (A1i @ b1b), q.c1 - R1 @ (A1i @ np.ones(2)) * b1.r
    denom = n2 @ u1 - b2.b[k2]
    if abs(denom) < 1e-12:
        return []
    alpha = (b1.r + n2 @ (q.c2 - v1)) / denom
    if alpha <= 1e-12:
        return []
    y1 = v1 + alpha * u1
    p = y1 - b1.r * n2
    y2 = y1 - (b1.r + b2.r) * n2
    scale = 2 * b1.r * (b2.b[k2] - (A1i @ b1b) @ (R1.T @ n2))
    if abs(scale) < 1e-14:
        return []
    mu1c = 1.0 / scale
    mu2c = mu1c * b1.r / b2.r
    m1 = -2 * b1.r * mu1c * (A1i.T @ (R1.T @ n2))
    m2 = np.array([2 * b2.r * mu2c])
    return [
        (
            DistancePrimal(p, float(alpha), y1, y2),
            _assemble_duals(bodies, a1, (k2,), m1, m2, mu1c, mu2c),
        )
    ]


def _case2m_candidate(q, bodies, k1, a2):
    """|A1| = 1, |A2| = 2: body-1 face against a body-2 vertex."""
    b1, b2 = bodies
    R1, R2 = rot(q.xi1), rot(q.xi2)
    A2b = b2.A[list(a2)]
    if abs(np.linalg.det(A2b)) < 1e-10:
        return []
    A2i = np.linalg.inv(A2b)
    b2b = b2.b[list(a2)]
    n1 = R1 @ b1.A[k1]
    u2, v2 = R2 @ (A2i @ b2b), q.c2 - R2 @ (A2i @ np.ones(2)) * b2.r
    denom = n1 @ u2 - b1.b[k1]
    if abs(denom) < 1e-12:
        return []
    alpha = (b2.r + n1 @ (q.c1 - v2)) / denom
    if alpha <= 1e-12:
        return []
    y2 = v2 + alpha * u2
    p = y2 - b2.r * n1
    y1 = y2 - (b1.r + b2.r) * n1
    scale = 2 * b2.r * (b1.b[k1] - (A2i @ b2b) @ (R2.T @ n1))
    if abs(scale) < 1e-14:
        return []
    mu2c = 1.0 / scale
    mu1c = mu2c * b2.r / b1.r
    m1 = np.array([2 * b1.r * mu1c])
    m2 = -2 * b2.r * mu2c * (A2i.T @ (R2.T @ n1))
    return [
        (
            DistancePrimal(p, float(alpha), y1, y2),
            _assemble_duals(bodies, (k1,), a2, m1, m2, mu1c, mu2c),
        )
    ]


def _case3_candidate(q, bodies, k1, k2):
    """|A1| = |A2| = 1: opposing faces, possible patch contact."""
    b1, b2 = bodies
    R1, R2 = rot(q.xi1), rot(q.xi2)
    n1 = R1 @ b1.A[k1]
    n2 = R2 @ b2.A[k2]
    if np.linalg.norm(n1 + n2) > 1e-7:
        return []
    bsum = b1.b[k1] + b2.b[k2]
    alpha = n1 @ (q.c2 - q.c1) / bsum
    if alpha <= 1e-12:
        return []
    seg = _patch_segment(q, bodies, (k1,), (k2,), alpha)
    if seg is None:
        return []
    p = 0.5 * (seg[0] + seg[1])
    y1, y2 = p - b1.r * n1, p + b2.r * n1
    mu1c = 1.0 / (2 * b1.r * bsum)
    mu2c = mu1c * b1.r / b2.r
    m1 = np.array([2 * b1.r * mu1c])
    m2 = np.array([2 * b2.r * mu2c])
    return [
        (
            DistancePrimal(p, float(alpha), y1, y2),
            _assemble_duals(bodies, (k1,), (k2,), m1, m2, mu1c, mu2c),
        )
    ]


def solve_distance(q, bodies, kkt_tol=KKT_TOL):
    """Solve the scaled distance problem analytically.

    Enumerates active-set candidates (Cases 1-3) in tie-break order (larger
    total active cardinality first, then lowest indices) and returns the first
    candidate whose full KKT residual is below kkt_tol.

    Returns (DistancePrimal, DistanceDual, phi, ContactClassification).
    """
    if np.linalg.norm(q.c1 - q.c2) < 1e-12:
        raise DegenerateConfig("body centers coincide")
    b1, b2 = bodies
    pairs1 = list(combinations(range(b1.n_h), 2))
    pairs2 = list(combinations(range(b2.n_h), 2))
    singles1 = [(k,) for k in range(b1.n_h)]
    singles2 = [(k,) for k in range(b2.n_h)]

    def gen():
        for a1 in pairs1:
            for a2 in pairs2:
                yield a1, a2, _case1_candidates(q, bodies, a1, a2)
        for a1 in pairs1:
            for (k2,) in singles2:
                yield a1, (k2,), _case2_candidate(q, bodies, a1, k2)
        for (k1,) in singles1:
            for a2 in pairs2:
                yield (k1,), a2, _case2m_candidate(q, bodies, k1, a2)
        for (k1,) in singles1:
            for (k2,) in singles2:
                yield (k1,), (k2,), _case3_candidate(q, bodies, k1, k2)

    for a1, a2, cands in gen():
        for prim, dual in cands:
            # cheap feasibility pre-filter before the full KKT check
            g = g_d(prim.z, q, bodies)
            if np.max(g) > 10 * kkt_tol:
                continue
            if np.min(dual.vector) < -10 * kkt_tol:
                continue
            if kkt_residual(prim.z, dual, q, bodies) <= kkt_tol:
                # the active sets are defined by the strictly positive duals;
                # an enumeration candidate may carry extra zero multipliers
                e1 = tuple(np.flatnonzero(dual.mu1p > 1e-9)) or a1
                e2 = tuple(np.flatnonzero(dual.mu2p > 1e-9)) or a2
                if len(e1) == 1 and len(e2) == 1 and (e1 != a1 or e2 != a2):
                    # patch solution found via an extreme point: canonicalize
                    canon = _case3_candidate(q, bodies, e1[0], e2[0])
                    if canon and kkt_residual(canon[0][0].z, canon[0][1], q, bodies) <= kkt_tol:
                        prim, dual = canon[0]
                return prim, dual, prim.alpha - 1.0, ContactClassification(e1, e2)
    # the overlap may be so deep that the touching scale deflates a body's
    # core to (near) nothing, putting three or more faces active at once;
    # that regime is outside the two-face case enumeration
    alpha_lo = max(b1.r / np.min(b1.b), b2.r / np.min(b2.b))
    if _bodies_intersect_at_scale(q, bodies, alpha_lo + 1e-9):
        raise DegenerateConfig(
            "overlap deeper than the core-collapse scale; "
            "signed distance is undefined for this configuration"
        )
    raise NoCandidateFound("no active-set candidate passed KKT verification")


def _bodies_intersect_at_scale(q, bodies, alpha):
    """True if the alpha-scaled padded bodies share a point."""
    b1, b2 = bodies
    P = q.c1 + halfspace_vertices(b1.A, alpha * b1.b - b1.r) @ rot(q.xi1).T
    Q = q.c2 + halfspace_vertices(b2.A, alpha * b2.b - b2.r) @ rot(q.xi2).T
    if _poly_overlap(P, Q):
        return True
    return _poly_distance(P, Q) <= b1.r + b2.r


def contact_normal(z, mu, q):
    """Configuration-space contact normal from a KKT point.

    z may be a DistancePrimal or a raw 7-vector; mu a DistanceDual.
    Requires the body-1 halfspace matrix implicitly through mu and the
    stationarity identity n_tr = -R(xi1) A1^T mu1p, which is supplied via the
    equivalent identity n_tr = -2 (p - y1) mu1c.
    """
    if isinstance(z, DistancePrimal):
        p, y1 = z.p, z.y1
    else:
        z = np.asarray(z, dtype=float)
        p, y1 = z[0:2], z[3:5]
    n_tr = -2.0 * (p - y1) * mu.mu1c
    n = np.concatenate(
        [n_tr, [cross2(p - q.c1, n_tr)], -n_tr, [-cross2(p - q.c2, n_tr)]]
    )
    return ContactNormal6(n, n_tr)


def contact_normal_from_bodies(z, mu, q, bodies):
    """Contact normal using n_tr = -R(xi1) A1^T mu1p directly."""
    if isinstance(z, DistancePrimal):
        p = z.p
    else:
        p = np.asarray(z, dtype=float)[0:2]
    n_tr = -rot(q.xi1) @ (bodies[0].A.T @ mu.mu1p)
    n = np.concatenate(
        [n_tr, [cross2(p - q.c1, n_tr)], -n_tr, [-cross2(p - q.c2, n_tr)]]
    )
    return ContactNormal6(n, n_tr)


def normal_at_point(p, mu, q, bodies):
    """Contact normal 6-vector with the ECP replaced by an arbitrary patch point."""
    n_tr = -rot(q.xi1) @ (bodies[0].A.T @ mu.mu1p)
    n = np.concatenate(
        [n_tr, [cross2(p - q.c1, n_tr)], -n_tr, [-cross2(p - q.c2, n_tr)]]
    )
    return ContactNormal6(n, n_tr)


def directional_derivative(q, d, bodies):
    """Directional derivative of the signed distance along d in configuration space.

    Minimum of d^T n(z, mu, q) over the distance-problem solution set; for
    patch contacts the minimum is attained at a contact-segment endpoint.
    """
    d = np.asarray(d, dtype=float)
    prim, dual, phi, cls = solve_distance(q, bodies)
    if cls.kind is ContactKind.PatchContact:
        seg = _patch_segment(q, bodies, cls.active1, cls.active2, prim.alpha)
        pts = [seg[0], seg[1]]
    else:
        pts = [prim.p]
    return min(float(d @ normal_at_point(p, dual, q, bodies).n) for p in pts)


def contact_patch(q, z, mu, bodies, tol=CONTACT_TOL):
    """Endpoints of the contact patch at a touching configuration.

    Returns (w1, w2); a degenerate segment (p, p) for non-patch contact kinds.
    """
    prim = z if isinstance(z, DistancePrimal) else DistancePrimal.from_z(z)
    if prim.alpha - 1.0 > tol:
        raise NotInContact(f"phi = {prim.alpha - 1.0:g} exceeds contact tolerance")
    a1 = tuple(np.flatnonzero(mu.mu1p > 1e-9))
    a2 = tuple(np.flatnonzero(mu.mu2p > 1e-9))
    if len(a1) == 1 and len(a2) == 1:
        seg = _patch_segment(q, bodies, a1, a2, prim.alpha)
        if seg is not None:
            return seg
    return prim.p.copy(), prim.p.copy()


def _poly_overlap(P, Q):
    """True if convex polygons P, Q (vertex arrays) intersect."""

    def separates(V, W):
        e = np.roll(V, -1, axis=0) - V
        nn = np.stack([e[:, 1], -e[:, 0]], axis=1)
        VN, WN = V @ nn.T, W @ nn.T
        return np.any(
            (WN.max(axis=0) < VN.min(axis=0) - 1e-12)
            | (WN.min(axis=0) > VN.max(axis=0) + 1e-12)
        )

    if P.shape[0] == 0 or Q.shape[0] == 0:
        return False
    return not (separates(P, Q) or separates(Q, P))


def _points_segments_dist(V, W):
    """Min distance from any point of V to any edge of polygon W."""
    a = W
    ab = np.roll(W, -1, axis=0) - W
    ap = V[:, None, :] - a[None, :, :]
    t = np.einsum("ijk,jk->ij", ap, ab) / np.maximum((ab * ab).sum(axis=1), 1e-300)
    d = ap - np.clip(t, 0.0, 1.0)[:, :, None] * ab[None, :, :]
    return float(np.sqrt((d * d).sum(axis=-1)).min())


def _poly_distance(P, Q):
    """Distance between convex polygons; 0 if they overlap."""
    if P.shape[0] == 0 or Q.shape[0] == 0:
        return np.inf
    if _poly_overlap(P, Q):
        return 0.0
    return min(_points_segments_dist(P, Q), _points_segments_dist(Q, P))


def distance_oracle(q, bodies, tol=1e-10):
    """Bisection oracle for the signed distance, independent of solve_distance.

    For fixed alpha the scaled padded bodies intersect iff the distance between
    the downsized scaled polytopes is <= 2r (brute-force vertex/edge search).
    """
    if np.linalg.norm(q.c1 - q.c2) < 1e-12:
        raise DegenerateConfig("body centers coincide")
    b1, b2 = bodies
    R1, R2 = rot(q.xi1), rot(q.xi2)

    def intersects(alpha):
        bb1 = alpha * b1.b - b1.r
        bb2 = alpha * b2.b - b2.r
        P = halfspace_vertices(b1.A, bb1)
        Q = halfspace_vertices(b2.A, bb2)
        if P.shape[0] == 0 or Q.shape[0] == 0:
            return False
        P = P @ R1.T + q.c1
        Q = Q @ R2.T + q.c2
        return _poly_distance(P, Q) <= b1.r + b2.r

    lo, hi = 1.0, 1.0
    if intersects(1.0):
        while intersects(lo):
            lo *= 0.5
            if lo < 1e-8:
                break
    else:
        while not intersects(hi):
            hi *= 2.0
            if hi > 1e8:
                raise NoCandidateFound("bisection bracket not found")
        lo = hi / 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if intersects(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi) - 1.0
