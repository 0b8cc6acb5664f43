import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anisomesh.errors import CutMissesPolygon, DegenerateElement
from anisomesh.geometry import (
    Polygon,
    ReferenceMap,
    map_polygon,
    points_in_polygon,
    polygon_moments,
    split_polygon_by_line,
)
from conftest import random_convex_polygon, random_polygon, random_star_polygon

UNIT_SQUARE = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]


def rotation(theta):
    return np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])


def mc_moments(poly, n_samples, rng):
    """Monte-Carlo oracle: rejection sampling in the bounding box.

    Returns (area, centroid, cov) estimates with their standard errors.
    """
    lo = poly.vertices.min(axis=0)
    hi = poly.vertices.max(axis=0)
    box = float(np.prod(hi - lo))
    pts = rng.uniform(lo, hi, size=(n_samples, 2))
    inside = points_in_polygon(pts, poly.vertices)
    frac = inside.mean()
    area = box * frac
    area_se = box * math.sqrt(frac * (1.0 - frac) / n_samples)
    acc = pts[inside]
    m = len(acc)
    centroid = acc.mean(axis=0)
    centroid_se = acc.std(axis=0, ddof=1) / math.sqrt(m)
    d = acc - centroid
    prods = np.stack([d[:, 0] * d[:, 0], d[:, 0] * d[:, 1], d[:, 1] * d[:, 1]], axis=1)
    cov = prods.mean(axis=0)
    cov_se = prods.std(axis=0, ddof=1) / math.sqrt(m)
    return (area, area_se), (centroid, centroid_se), (cov, cov_se)


class TestMoments:
    def test_unit_square(self):
        area, centroid, m = polygon_moments(Polygon(UNIT_SQUARE))
        assert area == pytest.approx(1.0, abs=1e-15)
        assert centroid == pytest.approx([0.5, 0.5], abs=1e-15)
        assert m == pytest.approx(np.diag([1.0 / 12.0, 1.0 / 12.0]), abs=1e-15)

    def test_reference_triangle(self):
        area, centroid, _ = polygon_moments(Polygon([(0, 0), (1, 0), (0, 1)]))
        assert area == pytest.approx(0.5, abs=1e-15)
        assert centroid == pytest.approx([1.0 / 3.0, 1.0 / 3.0], abs=1e-15)

    @pytest.mark.parametrize("a,b", [(2.0, 1.0), (14.1, 1.0), (100.0, 0.25)])
    def test_rectangle_separable(self, a, b):
        poly = Polygon([(0, 0), (a, 0), (a, b), (0, b)])
        _, _, m = polygon_moments(poly)
        assert m[0, 0] == pytest.approx(a * a / 12.0, rel=1e-13)
        assert m[1, 1] == pytest.approx(b * b / 12.0, rel=1e-13)
        assert abs(m[0, 1]) < 1e-13 * a * a
        assert poly.spectrum.ratio == pytest.approx((a / b) ** 2, rel=1e-12)

    def test_monte_carlo_oracle(self, rng):
        poly = random_polygon(rng, ratio=10.0)
        (area, area_se), (cen, cen_se), (cov, cov_se) = mc_moments(poly, 200_000, rng)
        assert abs(area - poly.area) <= 3.0 * area_se
        assert np.all(np.abs(cen - poly.centroid) <= 3.0 * cen_se + 1e-12)
        exact = poly.second_moment[[0, 0, 1], [0, 1, 1]]
        assert np.all(np.abs(cov - exact) <= 3.0 * cov_se + 1e-12)

    def test_far_from_origin_is_stable(self):
        shift = np.array([1e6, -3e6])
        near = Polygon(UNIT_SQUARE)
        far = Polygon(np.asarray(UNIT_SQUARE) + shift)
        assert far.area == pytest.approx(near.area, rel=1e-12)
        assert far.second_moment == pytest.approx(near.second_moment, abs=1e-9)

    def test_degenerate_raises(self):
        poly = Polygon([(0, 0), (1, 0), (2, 1e-17), (1, 1e-17)])
        with pytest.raises(DegenerateElement):
            _ = poly.area

    def test_orientation_rejected(self):
        with pytest.raises(ValueError):
            Polygon(list(reversed(UNIT_SQUARE)))


class TestSpectrum:
    def test_unit_square_isotropic(self):
        s = Polygon(UNIT_SQUARE).spectrum
        assert s.lambda1 == pytest.approx(1.0 / 12.0, rel=1e-14)
        assert s.lambda2 == pytest.approx(1.0 / 12.0, rel=1e-14)
        assert s.ratio == pytest.approx(1.0, rel=1e-12)

    def test_stretched_rectangle_matches_separable_oracle(self):
        s = Polygon([(0, 0), (14.1, 0), (14.1, 1), (0, 1)]).spectrum
        assert s.ratio == pytest.approx(14.1 ** 2, rel=1e-12)
        assert s.ratio == pytest.approx(198.81, rel=1e-12)
        assert s.u1 == pytest.approx([1.0, 0.0], abs=1e-14)

    def test_eigen_residual(self, rng):
        for _ in range(25):
            poly = random_polygon(rng, ratio=float(rng.uniform(1, 1e4)))
            s = poly.spectrum
            m = s.covariance
            for lam, u in ((s.lambda1, s.u1), (s.lambda2, s.u2)):
                assert np.linalg.norm(m @ u - lam * u) <= 1e-12 * s.lambda1
            recomposed = s.basis @ np.diag([s.lambda1, s.lambda2]) @ s.basis.T
            assert recomposed == pytest.approx(m, rel=1e-12, abs=1e-15 * s.lambda1)

    def test_canonical_orientation(self, rng):
        for _ in range(25):
            s = random_polygon(rng, ratio=50.0).spectrum
            if abs(s.u1[0]) > 1e-14:
                assert s.u1[0] > 0.0
            else:
                assert s.u1[1] > 0.0
            assert s.u2 == pytest.approx([-s.u1[1], s.u1[0]], abs=1e-15)
            assert np.linalg.det(s.basis) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(theta=st.floats(0.0, 2.0 * math.pi), seed=st.integers(0, 2 ** 31))
    def test_rotation_invariance(self, theta, seed):
        poly = random_polygon(np.random.default_rng(seed), ratio=30.0)
        rotated = Polygon(poly.vertices @ rotation(theta).T)
        s0, s1 = poly.spectrum, rotated.spectrum
        assert s1.lambda1 == pytest.approx(s0.lambda1, rel=1e-12)
        assert s1.lambda2 == pytest.approx(s0.lambda2, rel=1e-12)


class TestReferenceMap:
    def test_unit_square_alpha(self):
        rm = Polygon(UNIT_SQUARE).refmap
        assert rm.alpha == pytest.approx(12.0 ** -0.5, rel=1e-14)
        assert 0.28 < rm.alpha < 0.32

    def test_determinant_identity(self, rng):
        for _ in range(20):
            poly = random_polygon(rng, ratio=float(rng.uniform(1, 1e3)))
            s = poly.spectrum
            rm = poly.refmap
            det = np.linalg.det(rm.matrix)
            assert det == pytest.approx(
                rm.alpha ** 2 / math.sqrt(s.lambda1 * s.lambda2), rel=1e-12
            )
            assert rm.matrix @ rm.inverse == pytest.approx(np.eye(2), abs=1e-12)

    def test_mapped_element_normalized(self, rng):
        # Unit area, isotropic covariance alpha^2 I, tiny off-diagonal.
        for _ in range(20):
            poly = random_polygon(rng, ratio=float(rng.uniform(1, 1e4)))
            rm = poly.refmap
            mapped = map_polygon(poly, rm)
            a2 = rm.alpha ** 2
            assert abs(mapped.area - 1.0) < 1e-10
            cov = mapped.second_moment
            assert abs(cov[0, 0] - a2) < 1e-10 * a2 * 10
            assert abs(cov[1, 1] - a2) < 1e-10 * a2 * 10
            assert abs(cov[0, 1]) < 1e-10 * a2
            assert mapped.diameter >= 1.0
            assert mapped.centroid == pytest.approx(rm.apply(poly.centroid), rel=1e-10,
                                                    abs=1e-12)

    def test_map_polygon_identity(self):
        poly = Polygon(UNIT_SQUARE)
        ident = ReferenceMap(matrix=np.eye(2), alpha=1.0, inverse=np.eye(2))
        assert map_polygon(poly, ident).vertices == pytest.approx(poly.vertices)


class TestSplit:
    def test_square_symmetric_cut(self):
        poly = Polygon(UNIT_SQUARE)
        a, b, seg = split_polygon_by_line(poly, (0.5, 0.5), (0.0, 1.0))
        assert a.area == pytest.approx(0.5, abs=1e-15)
        assert b.area == pytest.approx(0.5, abs=1e-15)
        ends = sorted(map(tuple, seg))
        assert ends == [(0.5, 0.0), (0.5, 1.0)]

    def test_rectangle_cut_into_unit_squares(self):
        poly = Polygon([(0, 0), (2, 0), (2, 1), (0, 1)])
        a, b, _ = split_polygon_by_line(poly, poly.centroid, poly.spectrum.u2)
        for piece in (a, b):
            assert piece.area == pytest.approx(1.0, rel=1e-13)
            w = piece.vertices
            assert np.ptp(w[:, 0]) == pytest.approx(1.0, abs=1e-13)
            assert np.ptp(w[:, 1]) == pytest.approx(1.0, abs=1e-13)

    def test_diagonal_cut_snaps_to_vertices(self):
        poly = Polygon(UNIT_SQUARE)
        d = np.array([1.0, 1.0]) / math.sqrt(2.0)
        a, b, seg = split_polygon_by_line(poly, (0.5, 0.5), d)
        assert len(a) == 3 and len(b) == 3
        assert a.area + b.area == pytest.approx(1.0, rel=1e-14)
        ends = sorted(map(tuple, seg))
        assert ends == [(0.0, 0.0), (1.0, 1.0)]

    def test_u_shape_multi_crossing(self):
        # Two prongs: the horizontal line at y = 2 crosses the boundary four
        # times; the interval containing the anchor is used.
        u_shape = Polygon(
            [(0, 0), (5, 0), (5, 3), (4, 3), (4, 1), (1, 1), (1, 3), (0, 3)]
        )
        a, b, seg = split_polygon_by_line(u_shape, (0.5, 2.0), (1.0, 0.0))
        assert a.area + b.area == pytest.approx(u_shape.area, rel=1e-12)
        xs = sorted(p[0] for p in seg)
        assert xs == pytest.approx([0.0, 1.0], abs=1e-12)

    def test_u_shape_anchor_outside_uses_longest_interval(self):
        u_shape = Polygon(
            [(0, 0), (5, 0), (5, 3), (4, 3), (4, 1), (1, 1), (1, 3), (0, 3)]
        )
        # Anchor in the notch (outside); both interior intervals have length
        # one, the first is chosen deterministically.
        a, b, _ = split_polygon_by_line(u_shape, (2.5, 2.0), (1.0, 0.0))
        assert a.area + b.area == pytest.approx(u_shape.area, rel=1e-12)

    def test_cut_misses_polygon(self):
        poly = Polygon(UNIT_SQUARE)
        with pytest.raises(CutMissesPolygon):
            split_polygon_by_line(poly, (5.0, 5.0), (0.0, 1.0))

    def test_conservation_and_vertex_provenance(self, rng):
        for _ in range(30):
            poly = random_polygon(rng, ratio=float(rng.uniform(1, 100)))
            theta = rng.uniform(0, math.pi)
            d = np.array([math.cos(theta), math.sin(theta)])
            try:
                a, b, seg = split_polygon_by_line(poly, poly.centroid, d)
            except CutMissesPolygon:
                continue
            assert a.area + b.area == pytest.approx(poly.area, rel=1e-12)
            allowed = {tuple(np.round(v, 9)) for v in poly.vertices}
            allowed |= {tuple(np.round(p, 9)) for p in seg}
            for piece in (a, b):
                for v in piece.vertices:
                    assert tuple(np.round(v, 9)) in allowed
            # The cut endpoints lie on the parent boundary.
            for p in seg:
                assert points_in_polygon(
                    np.asarray(p)[None, :], poly.vertices,
                    boundary_tol=1e-9 * poly.diameter,
                )[0]

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2 ** 31), theta=st.floats(0.0, math.pi))
    def test_split_conservation_property(self, seed, theta):
        gen = np.random.default_rng(seed)
        poly = random_convex_polygon(gen, ratio=float(gen.uniform(1, 50)))
        d = np.array([math.cos(theta), math.sin(theta)])
        a, b, _ = split_polygon_by_line(poly, poly.centroid, d)
        assert a.area + b.area == pytest.approx(poly.area, rel=1e-12)


class TestPolygonUtilities:
    def test_contains(self):
        poly = Polygon(UNIT_SQUARE)
        assert poly.contains((0.5, 0.5))
        assert not poly.contains((1.5, 0.5))

    def test_corner_vertices_drop_hanging(self):
        poly = Polygon([(0, 0), (0.5, 0.0), (1, 0), (1, 1), (0, 1)])
        corners = poly.corner_vertices()
        assert len(corners) == 4

    def test_geometry_key_ignores_hanging_nodes(self):
        plain = Polygon(UNIT_SQUARE)
        hanging = Polygon([(0, 0), (0.5, 0.0), (1, 0), (1, 1), (0, 1)])
        assert plain.geometry_key() == hanging.geometry_key()

    def test_non_simple_detected(self):
        bowtie = np.array([(0, 0), (1, 1), (1, 0), (0, 1)], dtype=float)
        assert not np.any(points_in_polygon(np.array([[10.0, 10.0]]), bowtie))
        poly = Polygon([(0, 0), (2, 0), (2, 1), (1, -0.5), (0, 1)])
        with pytest.raises(Exception):
            poly.validate_simple()

    def test_star_polygon_generator_is_simple(self, rng):
        for _ in range(10):
            random_star_polygon(rng).validate_simple()
