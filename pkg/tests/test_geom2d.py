"""Signed-distance solver: oracle agreement, dual behavior, invariances."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patchdyn.errors import DegenerateConfig
from patchdyn.geom2d import (
    ContactKind,
    PaddedPolytope2D,
    SystemConfig,
    contact_normal_from_bodies,
    distance_oracle,
    g_d,
    kkt_residual,
    solve_distance,
    stationarity,
)
from patchdyn.sampling import random_body, random_config

from conftest import SQUARE_A, unit_square


def axis_config(ysep):
    return SystemConfig(np.array([0.0, ysep]), 0.0, np.zeros(2), 0.0)


class TestKnownConfigurations:
    def test_touching_squares_phi_zero(self, square_pair):
        # unit-offset halfspaces with inscribed padding give half-extent 1,
        # so the surfaces meet at center separation 2
        _, _, phi, cls = solve_distance(axis_config(2.0), square_pair)
        assert abs(phi) < 1e-12
        assert cls.kind is ContactKind.PatchContact

    def test_separated_squares_phi_linear_in_gap(self, square_pair):
        # scaling both squares by alpha moves each face by alpha, so
        # phi = (separation - 2) / 2 on the symmetry axis
        for ysep in (2.5, 3.0, 4.0):
            _, _, phi, _ = solve_distance(axis_config(ysep), square_pair)
            assert phi == pytest.approx((ysep - 2.0) / 2.0, abs=1e-10)

    def test_overlapping_squares_negative_phi(self, square_pair):
        _, _, phi, _ = solve_distance(axis_config(1.8), square_pair)
        assert phi == pytest.approx(-0.1, abs=1e-10)

    def test_primal_point_on_symmetry_plane(self, square_pair):
        prim, _, _, _ = solve_distance(axis_config(2.0), square_pair)
        assert prim.p == pytest.approx([0.0, 1.0], abs=1e-9)

    def test_rotated_square_vertex_contact(self, square_pair):
        # a 45-degree square presents a rounded corner; its padded extent
        # along y is (1 - r) * sqrt(2) + r
        b1, b2 = square_pair
        reach = (1.0 - b1.r) * np.sqrt(2.0) + b1.r
        cfg = SystemConfig(np.array([0.0, 1.0 + reach]), np.pi / 4, np.zeros(2), 0.0)
        _, _, phi, cls = solve_distance(cfg, square_pair)
        assert abs(phi) < 1e-9
        assert cls.kind is ContactKind.VertexFace

    def test_coincident_centers_rejected(self, square_pair):
        cfg = SystemConfig(np.zeros(2), 0.0, np.zeros(2), 0.3)
        with pytest.raises(DegenerateConfig):
            solve_distance(cfg, square_pair)


class TestOracleAgreement:
    def test_seeded_random_configurations(self):
        rng = np.random.default_rng(7)
        for _ in range(60):
            bodies = (random_body(rng), random_body(rng))
            cfg = random_config(rng, bodies)
            _, _, phi, _ = solve_distance(cfg, bodies)
            assert phi == pytest.approx(distance_oracle(cfg, bodies), abs=1e-7)

    def test_mixed_padding_radii(self):
        # bodies with different r exercise the r1 + r2 term of the oracle
        big = PaddedPolytope2D(SQUARE_A, np.ones(4), 0.4)
        small = PaddedPolytope2D(SQUARE_A, np.ones(4), 0.05)
        for ysep in (2.0, 2.7, 1.9):
            cfg = SystemConfig(np.array([0.2, ysep]), 0.1, np.zeros(2), 0.0)
            _, _, phi, _ = solve_distance(cfg, (big, small))
            assert phi == pytest.approx(distance_oracle(cfg, (big, small)), abs=1e-7)


class TestKktCertificate:
    def test_solution_satisfies_kkt(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            bodies = (random_body(rng), random_body(rng))
            cfg = random_config(rng, bodies)
            prim, dual, _, _ = solve_distance(cfg, bodies)
            assert np.max(np.abs(stationarity(prim.z, dual, cfg, bodies))) < 1e-8
            g = g_d(prim.z, cfg, bodies)
            assert np.max(g) < 1e-8
            assert np.min(dual.vector) > -1e-10
            assert kkt_residual(prim.z, dual, cfg, bodies) < 1e-8


class TestFrameInvariance:
    @settings(max_examples=30, deadline=None)
    @given(
        angle=st.floats(-np.pi, np.pi),
        tx=st.floats(-3, 3),
        ty=st.floats(-3, 3),
        seed=st.integers(0, 1000),
    )
    def test_phi_invariant_under_rigid_motion(self, angle, tx, ty, seed):
        rng = np.random.default_rng(seed)
        bodies = (random_body(rng), random_body(rng))
        cfg = random_config(rng, bodies)
        _, _, phi, _ = solve_distance(cfg, bodies)
        R = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        t = np.array([tx, ty])
        moved = SystemConfig(R @ cfg.c1 + t, cfg.xi1 + angle,
                             R @ cfg.c2 + t, cfg.xi2 + angle)
        _, _, phi2, _ = solve_distance(moved, bodies)
        assert phi2 == pytest.approx(phi, abs=1e-8)


class TestDualContinuityAndPrimalJump:
    def test_rotation_sweep(self, square_pair):
        # sweep the top square's rotation through the flat (patch) alignment:
        # mu stays bounded-slope continuous while the primal point p jumps
        # at the patch configuration
        step = 1e-4
        angles = np.arange(-0.02, 0.02 + step / 2, step)
        mus, ps, patterns = [], [], []
        for a in angles:
            cfg = SystemConfig(np.array([0.0, 2.05]), a, np.zeros(2), 0.0)
            prim, dual, _, _ = solve_distance(cfg, square_pair)
            mus.append(dual.vector)
            ps.append(prim.p.copy())
            patterns.append(tuple(dual.vector > 1e-7))
        mus = np.array(mus)
        ps = np.array(ps)
        assert len(set(patterns)) >= 3  # at least two active-set changes
        mu_jumps = np.max(np.abs(np.diff(mus, axis=0)), axis=1)
        assert np.max(mu_jumps) <= 1e-2
        p_jumps = np.linalg.norm(np.diff(ps, axis=0), axis=1)
        assert np.max(p_jumps) > 0.1  # the contact point jumps at alignment


class TestContactNormal:
    def test_flat_contact_normal_direction(self, square_pair):
        prim, dual, _, _ = solve_distance(axis_config(2.0), square_pair)
        n6 = contact_normal_from_bodies(prim, dual, axis_config(2.0), square_pair).n
        assert n6[0] == pytest.approx(0.0, abs=1e-12)
        assert n6[1] > 0  # pushes body 1 up
        assert n6[3:5] == pytest.approx([0.0, -n6[1]], abs=1e-12)

    def test_normal_scales_separating_velocity(self, square_pair):
        # moving body 1 along +n6 must increase phi
        cfg = axis_config(2.0)
        prim, dual, _, _ = solve_distance(cfg, square_pair)
        n6 = contact_normal_from_bodies(prim, dual, cfg, square_pair).n
        eps = 1e-6
        cfg2 = SystemConfig(cfg.c1 + eps * n6[0:2], cfg.xi1 + eps * n6[2],
                            cfg.c2, cfg.xi2)
        _, _, phi2, _ = solve_distance(cfg2, square_pair)
        assert phi2 > 0


class TestMinimalScaling:
    def test_alpha_is_smallest_touching_scale(self):
        # alpha* is the smallest scaling at which the inflated bodies share a
        # point: slightly smaller scales must leave them disjoint, slightly
        # larger ones overlapping
        from patchdyn.geom2d import _poly_distance, halfspace_vertices, rot

        def scaled_world_vertices(body, c, xi, alpha):
            V = halfspace_vertices(body.A, alpha * body.b - body.r)
            return c + V @ rot(xi).T

        rng = np.random.default_rng(3)
        checked = 0
        for _ in range(20):
            bodies = (random_body(rng), random_body(rng))
            cfg = random_config(rng, bodies)
            prim, _, phi, _ = solve_distance(cfg, bodies)
            pad = bodies[0].r + bodies[1].r
            for da, want_disjoint in ((-1e-4, True), (1e-4, False)):
                a = prim.alpha + da
                if a * min(np.min(bodies[0].b), np.min(bodies[1].b)) <= max(
                    bodies[0].r, bodies[1].r
                ):
                    continue
                P = scaled_world_vertices(bodies[0], cfg.c1, cfg.xi1, a)
                Q = scaled_world_vertices(bodies[1], cfg.c2, cfg.xi2, a)
                gap = _poly_distance(P, Q) - pad
                assert (gap > 0) == want_disjoint
                checked += 1
        assert checked >= 20
