import collections
import math

import numpy as np
import pytest

from anisomesh.fields import constant_field, linear_field, monomial_field
from anisomesh.geometry import Polygon
from anisomesh.mesh import build_mesh, generate_grid
from anisomesh.verify import (
    check_h1_mapping,
    check_neighbour_gradient,
    check_poincare,
    check_trace,
    h1_sweep,
    neighbour_sweep,
    poincare_sweep,
    rectangle_family,
    sweep_fields,
    trace_sweep,
    write_records_csv,
)
from conftest import random_polygon

UNIT_SQUARE = Polygon([(0, 0), (1, 0), (1, 1), (0, 1)])


def stability(records):
    """Max over fields of (max ratio / min ratio) across the scale family."""
    grouped = collections.defaultdict(list)
    for r in records:
        key = r.context.split(",", 1)[1]
        grouped[key].append(r.ratio)
    worst = 1.0
    for vals in grouped.values():
        vals = [v for v in vals if v > 0.0]
        if len(vals) >= 2:
            worst = max(worst, max(vals) / min(vals))
    return worst


class TestTrace:
    def test_constant_ratio_one(self):
        edge = (UNIT_SQUARE.vertices[0], UNIT_SQUARE.vertices[1])
        rec = check_trace(UNIT_SQUARE, edge, constant_field(3.0))
        assert rec.ratio == pytest.approx(1.0, rel=1e-12)

    def test_zero_field_ratio_zero(self):
        edge = (UNIT_SQUARE.vertices[0], UNIT_SQUARE.vertices[1])
        rec = check_trace(UNIT_SQUARE, edge, constant_field(0.0))
        assert rec.ratio == 0.0

    def test_family_stability(self):
        records = trace_sweep()
        assert stability(records) <= 2.0
        # No growth trend: the most stretched rectangle stays within twice
        # the unstretched ratio for every field/edge combination.
        grouped = collections.defaultdict(dict)
        for r in records:
            s, rest = r.context.split(",", 1)
            grouped[rest][float(s.split("=")[1])] = r.ratio
        for vals in grouped.values():
            if vals[1.0] > 0:
                assert max(vals.values()) <= 2.0 * vals[1.0] + 1e-12


class TestPoincare:
    def test_constant_zero(self):
        mesh = build_mesh(UNIT_SQUARE.vertices, [[0, 1, 2, 3]])
        rec = check_poincare(mesh, {0}, 0, constant_field(5.0))
        assert rec.ratio == 0.0

    def test_linear_on_unit_square_closed_form(self):
        mesh = build_mesh(UNIT_SQUARE.vertices, [[0, 1, 2, 3]])
        rec = check_poincare(mesh, {0}, 0, linear_field(1, 0))
        assert rec.lhs == pytest.approx(1.0 / math.sqrt(12.0), rel=1e-12)
        assert rec.rhs_without_constant == pytest.approx(1.0, rel=1e-12)
        assert rec.ratio == pytest.approx(1.0 / math.sqrt(12.0), rel=1e-12)

    def test_patch_version(self):
        mesh = generate_grid(2, 2)
        rec = check_poincare(mesh, mesh.element_patch(0), 0, monomial_field(1, 1))
        assert rec.ratio > 0.0
        assert math.isfinite(rec.ratio)

    def test_family_stability(self):
        assert stability(poincare_sweep()) <= 2.0


class TestH1Mapping:
    def test_isotropic_equality(self):
        for fld in (linear_field(1, 0), monomial_field(2, 1)):
            rec = check_h1_mapping(UNIT_SQUARE, fld)
            assert rec.ratio == pytest.approx(1.0, rel=1e-10)

    def test_rectangle_closed_form(self):
        poly = Polygon([(0, 0), (2, 0), (2, 1), (0, 1)])
        rec = check_h1_mapping(poly, linear_field(1, 0))
        assert rec.lhs == pytest.approx(2.0, rel=1e-12)  # |K| * |grad|^2
        assert rec.rhs_without_constant == pytest.approx(4.0, rel=1e-12)

    def test_random_cubics_hold(self, rng):
        fields = [monomial_field(3, 0), monomial_field(2, 1), monomial_field(1, 2)]
        for k in range(10):
            poly = random_polygon(rng, ratio=float(rng.uniform(1, 1e3)))
            check_h1_mapping(poly, fields[k % 3])  # raises on violation

    def test_sweep_all_pairs(self):
        records = h1_sweep()
        s = Polygon([(0, 0), (10000, 0), (10000, 1), (0, 1)]).spectrum
        hi = math.sqrt(s.lambda1 / s.lambda2)
        for rec in records:
            assert rec.ratio <= hi * (1 + 1e-9)


class TestNeighbourGradient:
    def test_same_element_ratio_one(self):
        rec, bound = check_neighbour_gradient(UNIT_SQUARE, UNIT_SQUARE, monomial_field(1, 1))
        assert rec.ratio == pytest.approx(1.0, rel=1e-12)
        assert bound >= 1.0 - 1e-12

    def test_congruent_translated(self):
        a = UNIT_SQUARE
        b = Polygon(np.asarray(UNIT_SQUARE.vertices) + np.array([1.0, 0.0]))
        rec, bound = check_neighbour_gradient(a, b, monomial_field(2, 1))
        assert rec.ratio == pytest.approx(1.0, rel=1e-12)

    def test_thickness_jump_bounded(self):
        k1 = Polygon([(0, 0), (2, 0), (2, 1), (0, 1)])
        k2 = Polygon([(2, 0), (4, 0), (4, 1.5), (2, 1.5)])
        for fld in sweep_fields(3, include_tanh=False):
            rec, bound = check_neighbour_gradient(k1, k2, fld)
            assert rec.ratio <= bound * (1 + 1e-9)

    def test_sweep(self):
        records = neighbour_sweep()
        assert all(r.ratio >= 0.0 for r in records)


class TestHelpers:
    def test_rectangle_family_scales(self):
        fam = rectangle_family()
        assert [s for s, _ in fam] == [1.0, 10.0, 100.0, 1000.0, 10000.0]
        for s, poly in fam:
            assert poly.area == pytest.approx(s, rel=1e-12)

    def test_sweep_fields_count(self):
        # Monomials of total degree 1..3 plus the layered field.
        assert len(sweep_fields(3, include_tanh=True)) == 10

    def test_csv(self, tmp_path):
        records = trace_sweep(scales=(1.0, 10.0), max_degree=1)
        path = tmp_path / "v.csv"
        with open(path, "w") as fh:
            write_records_csv(records, fh)
        lines = path.read_text().splitlines()
        assert lines[0] == "name,context,ratio"
        assert len(lines) == len(records) + 1
