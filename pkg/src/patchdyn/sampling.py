"""Seeded random bodies and configurations for oracle suites and tests."""

import numpy as np
from scipy.spatial import ConvexHull

from .geom2d import PaddedPolytope2D, SystemConfig
from .scenario_io import vertices_to_halfspaces


def random_body(rng, n_faces=None, r_scale=0.3):
    """Random convex padded polytope with 3-6 faces.

    Points are sampled on a random ellipse until their hull has the
    requested number of faces; the padding radius is a random fraction of
    the deflation margin so b - r > 0 always holds.
    """
    if n_faces is None:
        n_faces = int(rng.integers(3, 7))
    while True:
        pts = rng.normal(size=(n_faces + 4, 2)) * rng.uniform(0.5, 1.5, size=2)
        hull = ConvexHull(pts)
        verts = pts[hull.vertices]  # counterclockwise
        if len(verts) != n_faces:
            continue
        A, b = vertices_to_halfspaces(verts)
        if np.min(b) < 0.15:  # avoid slivers with the centroid near an edge
            continue
        # reject near-parallel face pairs: the active-set enumeration loses
        # its certificate when two normals are almost collinear
        gram = A @ A.T
        if np.max(gram[~np.eye(len(b), dtype=bool)]) > 0.95:
            continue
        r = float(rng.uniform(0.02, r_scale) * np.min(b))
        return PaddedPolytope2D(A, b, r)


def random_config(rng, bodies, min_sep=0.05, max_tries=200):
    """Random non-coincident pose pair; bodies may overlap or be apart.

    Poses whose overlap is deeper than the core-collapse scale (where the
    signed distance is undefined) are rejected and resampled.
    """
    from .geom2d import _bodies_intersect_at_scale

    b1, b2 = bodies
    alpha_lo = max(b1.r / np.min(b1.b), b2.r / np.min(b2.b))
    for _ in range(max_tries):
        c1 = rng.uniform(-2, 2, size=2)
        c2 = rng.uniform(-2, 2, size=2)
        if np.linalg.norm(c1 - c2) < min_sep:
            continue
        cfg = SystemConfig(c1, rng.uniform(-np.pi, np.pi),
                           c2, rng.uniform(-np.pi, np.pi))
        if _bodies_intersect_at_scale(cfg, bodies, alpha_lo + 1e-6):
            continue
        return cfg
    raise RuntimeError("failed to sample a configuration")
