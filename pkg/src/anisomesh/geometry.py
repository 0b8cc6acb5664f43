"""Exact polygon primitives: moments, covariance spectra, reference mapping, line splitting.

All moment integrals are evaluated in closed form from the boundary loop
(Green's theorem applied to polynomial integrands), so there is no quadrature
error even for extremely stretched elements.  Operations are pure functions on
immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CutMissesPolygon, DegenerateElement, NonSimpleResult

__all__ = [
    "Polygon",
    "CovarianceSpectrum",
    "ReferenceMap",
    "polygon_moments",
    "covariance_spectrum",
    "reference_map",
    "map_polygon",
    "split_polygon_by_line",
    "split_polygon_detailed",
    "symmetric_eig_2x2",
]

_ZERO_COMPONENT_TOL = 1e-14


def symmetric_eig_2x2(a, b, c):
    """Closed-form spectrum of [[a, b], [b, c]].

    Returns (l1, l2, u1) with l1 >= l2 and u1 the unit eigenvector of l1,
    sign-normalized so its first component larger than 1e-14 in modulus is
    positive.
    """
    half_tr = 0.5 * (a + c)
    half_diff = 0.5 * (a - c)
    r = math.hypot(half_diff, b)
    l1 = half_tr + r
    # The subtraction half_tr - r cancels badly for extreme anisotropy;
    # the determinant route keeps l2 accurate to machine precision.
    det = a * c - b * b
    l2 = det / l1 if l1 > 0.0 else half_tr - r
    if r <= _ZERO_COMPONENT_TOL * max(abs(l1), abs(l2), 1e-300):
        u1 = np.array([1.0, 0.0])
    else:
        # Two algebraically parallel candidates; pick the better-conditioned one.
        if half_diff >= 0.0:
            u1 = np.array([r + half_diff, b])
        else:
            u1 = np.array([b, r - half_diff])
        norm = math.hypot(u1[0], u1[1])
        if norm == 0.0:
            u1 = np.array([1.0, 0.0])
        else:
            u1 = u1 / norm
    scale = max(abs(u1[0]), abs(u1[1]))
    if abs(u1[0]) > _ZERO_COMPONENT_TOL * scale:
        if u1[0] < 0.0:
            u1 = -u1
    elif u1[1] < 0.0:
        u1 = -u1
    return l1, l2, u1


@dataclass(frozen=True)
class CovarianceSpectrum:
    """Eigen data of an element's covariance matrix, canonically oriented."""

    lambda1: float
    lambda2: float
    u1: np.ndarray
    u2: np.ndarray
    covariance: np.ndarray

    @property
    def ratio(self):
        """Anisotropy ratio lambda1/lambda2 (>= 1)."""
        return self.lambda1 / self.lambda2

    @property
    def basis(self):
        """Column matrix U = [u1 u2] with det +1."""
        return np.column_stack([self.u1, self.u2])


@dataclass(frozen=True)
class ReferenceMap:
    """Linear map x -> A x normalizing an element to unit area and isotropic covariance."""

    matrix: np.ndarray
    alpha: float
    inverse: np.ndarray

    def apply(self, points):
        return np.asarray(points, dtype=float) @ self.matrix.T

    def pull_back(self, points):
        return np.asarray(points, dtype=float) @ self.inverse.T

    @property
    def inverse_transpose(self):
        """A^{-T}; scales gradients into the reference configuration."""
        return self.inverse.T


class Polygon:
    """Simple CCW polygon with cached exact moments and spectral data.

    Vertices are an (n, 2) float array without repeated consecutive points.
    Construction enforces positive signed area; simplicity is checked on
    demand (``validate_simple``) because the O(n^2) test is not needed on the
    hot refinement path.
    """

    __slots__ = (
        "vertices",
        "_area",
        "_centroid",
        "_second_moment",
        "_spectrum",
        "_refmap",
        "_diameter",
    )

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise ValueError("vertices must be an (n, 2) array")
        if len(v) >= 2 and abs(v[0, 0] - v[-1, 0]) < 1e-300 and abs(v[0, 1] - v[-1, 1]) < 1e-300:
            v = v[:-1]
        n = len(v)
        if n < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if not np.all(np.isfinite(v)):
            raise ValueError("vertex coordinates must be finite")
        # Scalar loops beat numpy by an order of magnitude at these sizes.
        coords = v.tolist()
        lo_x = min(c[0] for c in coords)
        hi_x = max(c[0] for c in coords)
        lo_y = min(c[1] for c in coords)
        hi_y = max(c[1] for c in coords)
        scale = max(hi_x - lo_x, hi_y - lo_y) or 1.0
        twice_area = 0.0
        tol = 1e-15 * scale
        for i in range(n):
            x0, y0 = coords[i]
            x1, y1 = coords[(i + 1) % n]
            if abs(x1 - x0) <= tol and abs(y1 - y0) <= tol:
                raise ValueError("repeated consecutive vertices")
            twice_area += x0 * y1 - x1 * y0
        if twice_area <= 0.0:
            raise ValueError("vertex loop must be counter-clockwise with positive area")
        self.vertices = v
        self.vertices.setflags(write=False)
        self._area = None
        self._centroid = None
        self._second_moment = None
        self._spectrum = None
        self._refmap = None
        self._diameter = None

    def __len__(self):
        return len(self.vertices)

    def __repr__(self):
        return f"Polygon({len(self.vertices)} vertices, area={self.area:.6g})"

    def _compute_moments(self):
        # Shift to the vertex mean first: the quadratic boundary formulas
        # cancel catastrophically when evaluated far from the origin.
        coords = self.vertices.tolist()
        n = len(coords)
        px = sum(c[0] for c in coords) / n
        py = sum(c[1] for c in coords) / n
        twice_area = 0.0
        sx = sy = 0.0
        sxx = syy = sxy = 0.0
        x1 = coords[-1][0] - px
        y1 = coords[-1][1] - py
        for c in coords:
            x0, y0 = x1, y1
            x1 = c[0] - px
            y1 = c[1] - py
            cross = x0 * y1 - x1 * y0
            twice_area += cross
            sx += (x0 + x1) * cross
            sy += (y0 + y1) * cross
            sxx += (x0 * x0 + x0 * x1 + x1 * x1) * cross
            syy += (y0 * y0 + y0 * y1 + y1 * y1) * cross
            sxy += (x0 * y1 + 2.0 * x0 * y0 + 2.0 * x1 * y1 + x1 * y0) * cross
        area = 0.5 * twice_area
        h = self.diameter
        if area <= 1e-14 * h * h:
            raise DegenerateElement(f"polygon area {area:.3e} below tolerance")
        cx = sx / (6.0 * area)
        cy = sy / (6.0 * area)
        ixx = sxx / 12.0
        iyy = syy / 12.0
        ixy = sxy / 24.0
        # Covariance about the true centroid (parallel-axis correction).
        m = np.array(
            [
                [ixx / area - cx * cx, ixy / area - cx * cy],
                [ixy / area - cx * cy, iyy / area - cy * cy],
            ]
        )
        self._area = area
        self._centroid = np.array([cx + px, cy + py])
        self._second_moment = m

    @property
    def area(self):
        if self._area is None:
            self._compute_moments()
        return self._area

    @property
    def centroid(self):
        if self._centroid is None:
            self._compute_moments()
        return self._centroid

    @property
    def second_moment(self):
        """Covariance matrix (1/|K|) int (x - c)(x - c)^T dx."""
        if self._second_moment is None:
            self._compute_moments()
        return self._second_moment

    @property
    def diameter(self):
        if self._diameter is None:
            v = self.vertices
            if len(v) <= 96:
                d = v[:, None, :] - v[None, :, :]
                self._diameter = float(np.sqrt((d * d).sum(axis=2).max()))
            else:
                lo, hi = v.min(axis=0), v.max(axis=0)
                self._diameter = float(np.hypot(*(hi - lo)))
        return self._diameter

    @property
    def spectrum(self):
        if self._spectrum is None:
            self._spectrum = covariance_spectrum(self)
        return self._spectrum

    @property
    def refmap(self):
        if self._refmap is None:
            self._refmap = reference_map(self)
        return self._refmap

    def contains(self, point, boundary_tol=0.0):
        """Even-odd point-in-polygon test; boundary points count as inside
        when within ``boundary_tol`` of an edge."""
        return bool(points_in_polygon(np.asarray(point, float)[None, :], self.vertices,
                                      boundary_tol=boundary_tol)[0])

    def validate_simple(self):
        """Raise NonSimpleResult if any two non-adjacent edges intersect."""
        if not polygon_is_simple(self.vertices):
            raise NonSimpleResult("polygon boundary self-intersects")

    def corner_vertices(self, tol=1e-9):
        """Vertices with interior angle != pi (drops hanging/collinear nodes)."""
        v = self.vertices
        prev = np.roll(v, 1, axis=0)
        nxt = np.roll(v, -1, axis=0)
        e1 = v - prev
        e2 = nxt - v
        cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        dot = (e1 * e2).sum(axis=1)
        norm = np.hypot(*(e1.T)) * np.hypot(*(e2.T))
        keep = ~((np.abs(cross) <= tol * norm) & (dot > 0.0))
        if not keep.any():
            return v
        return v[keep]

    def geometry_key(self, ndigits=12):
        """Hashable key identifying the covered region.

        Collinear (hanging-node) vertices are dropped and the loop is rotated
        to start at its lexicographically smallest corner, so two loops that
        bound the same region compare equal.
        """
        c = self.corner_vertices()
        start = int(np.lexsort((c[:, 1], c[:, 0]))[0])
        c = np.roll(c, -start, axis=0)
        return tuple(np.round(c, ndigits).ravel().tolist())

    def similarity_key(self, ndigits=12):
        """Key invariant under translation and uniform scaling."""
        c = self.corner_vertices()
        c = (c - self.centroid) / math.sqrt(self.area)
        start = int(np.lexsort((c[:, 1], c[:, 0]))[0])
        c = np.roll(c, -start, axis=0)
        return tuple(np.round(c, ndigits).ravel().tolist())


def points_in_polygon(points, vertices, boundary_tol=0.0):
    """Vectorized even-odd rule for many query points against one loop."""
    pts = np.asarray(points, dtype=float)
    v = np.asarray(vertices, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    x0, y0 = v[:, 0], v[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    for i in range(len(v)):
        cond = (y0[i] > y) != (y1[i] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xs = x0[i] + (y - y0[i]) / (y1[i] - y0[i]) * (x1[i] - x0[i])
        inside ^= cond & (x < xs)
    if boundary_tol > 0.0:
        on = np.zeros(len(pts), dtype=bool)
        for i in range(len(v)):
            ex, ey = x1[i] - x0[i], y1[i] - y0[i]
            ll = ex * ex + ey * ey
            t = ((x - x0[i]) * ex + (y - y0[i]) * ey) / ll
            t = np.clip(t, 0.0, 1.0)
            dx = x - (x0[i] + t * ex)
            dy = y - (y0[i] + t * ey)
            on |= dx * dx + dy * dy <= boundary_tol * boundary_tol
        inside |= on
    return inside


def _sign(value, eps):
    if value > eps:
        return 1
    if value < -eps:
        return -1
    return 0


def _segments_intersect(p1, p2, q1, q2):
    # Orientation signs below fp noise count as collinear, so nearly
    # collinear chains (hanging nodes on a former cut line) do not read as
    # crossings.
    ex, ey = q2[0] - q1[0], q2[1] - q1[1]
    fx, fy = p2[0] - p1[0], p2[1] - p1[1]
    eps = 1e-12 * math.hypot(ex, ey) * math.hypot(fx, fy)
    d1 = _sign(ex * (p1[1] - q1[1]) - ey * (p1[0] - q1[0]), eps)
    d2 = _sign(ex * (p2[1] - q1[1]) - ey * (p2[0] - q1[0]), eps)
    if d1 * d2 >= 0:
        return False
    d3 = _sign(fx * (q1[1] - p1[1]) - fy * (q1[0] - p1[0]), eps)
    d4 = _sign(fx * (q2[1] - p1[1]) - fy * (q2[0] - p1[0]), eps)
    return d3 * d4 < 0


def polygon_is_simple(vertices):
    v = np.asarray(vertices, dtype=float).tolist()
    n = len(v)
    for i in range(n):
        p1, p2 = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_intersect(p1, p2, v[j], v[(j + 1) % n]):
                return False
    return True


def polygon_moments(poly):
    """Exact (area, centroid, covariance matrix) of a polygon."""
    return poly.area, poly.centroid, poly.second_moment


def covariance_spectrum(poly):
    """Eigen decomposition of the covariance matrix with canonical orientation.

    u1 belongs to the larger eigenvalue; its first nonzero component is
    positive and u2 is u1 rotated by +90 degrees, so all elements share one
    orientation convention.
    """
    m = poly.second_moment
    l1, l2, u1 = symmetric_eig_2x2(m[0, 0], m[0, 1], m[1, 1])
    if l2 <= 1e-14 * l1:
        raise DegenerateElement(
            f"covariance numerically rank deficient (lambda1={l1:.3e}, lambda2={l2:.3e})"
        )
    u2 = np.array([-u1[1], u1[0]])
    return CovarianceSpectrum(lambda1=l1, lambda2=l2, u1=u1, u2=u2, covariance=m)


def reference_map(poly):
    """Map A = alpha Lambda^{-1/2} U^T sending the element to unit area and covariance alpha^2 I."""
    s = poly.spectrum
    alpha = (math.sqrt(s.lambda1 * s.lambda2) / poly.area) ** 0.5
    u = s.basis
    lam_inv_sqrt = np.diag([s.lambda1 ** -0.5, s.lambda2 ** -0.5])
    lam_sqrt = np.diag([s.lambda1 ** 0.5, s.lambda2 ** 0.5])
    a = alpha * lam_inv_sqrt @ u.T
    a_inv = (1.0 / alpha) * u @ lam_sqrt
    return ReferenceMap(matrix=a, alpha=alpha, inverse=a_inv)


def map_polygon(poly, refmap):
    """Apply x -> A x to every vertex; orientation is preserved (det A > 0)."""
    return Polygon(refmap.apply(poly.vertices))


def _point_in_loop(x, y, coords):
    """Scalar even-odd test against a vertex list."""
    inside = False
    n = len(coords)
    x1, y1 = coords[-1]
    for c in coords:
        x0, y0 = x1, y1
        x1, y1 = c
        if (y0 > y) != (y1 > y):
            xs = x0 + (y - y0) / (y1 - y0) * (x1 - x0)
            if x < xs:
                inside = not inside
    return inside


def _line_crossings(vertices, point, direction, t_tol):
    """All transversal boundary crossings of the line point + t*direction.

    Returns a list of (t, edge_index, s) sorted by t, deduplicated within
    ``t_tol`` in t; s is the parameter along edge_index in [0, 1).  Edges
    parallel to the line are skipped; their endpoint hits are picked up by
    the adjacent edges.
    """
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    d = np.asarray(direction, dtype=float)
    p = np.asarray(point, dtype=float)
    hits = []
    for i in range(n):
        a = v[i]
        e = v[(i + 1) % n] - a
        det = d[0] * e[1] - d[1] * e[0]
        elen = math.hypot(e[0], e[1])
        if abs(det) <= 1e-14 * elen:
            continue
        r = a - p
        t = (r[0] * e[1] - r[1] * e[0]) / det
        s = (d[1] * r[0] - d[0] * r[1]) / det
        if -1e-12 <= s < 1.0:
            hits.append((t, i, max(s, 0.0)))
    hits.sort(key=lambda h: h[0])
    merged = []
    for h in hits:
        if merged and abs(h[0] - merged[-1][0]) <= t_tol:
            continue
        merged.append(h)
    return merged


def split_polygon_detailed(poly, point, direction, snap_tol=1e-9):
    """Split a polygon by the line through ``point`` along ``direction``.

    Returns (piece_a, piece_b, cut_segment, prov_a, prov_b) where each prov
    entry is ("v", original_vertex_index) or ("cut", edge_index, s) describing
    where every piece vertex comes from; the pair (last, first) of each piece
    is the cut chord.  For non-convex polygons crossed several times, the
    interior interval containing the anchor point is used (longest interval if
    the anchor is outside).
    """
    v = poly.vertices
    n = len(v)
    h = poly.diameter
    d = np.asarray(direction, dtype=float)
    norm = math.hypot(d[0], d[1])
    if norm == 0.0:
        raise CutMissesPolygon("zero cut direction")
    d = d / norm
    p = np.asarray(point, dtype=float)

    crossings = _line_crossings(v, p, d, t_tol=1e-12 * h)
    if len(crossings) < 2:
        raise CutMissesPolygon("cut line crosses the boundary fewer than twice")

    # Identify interior intervals between consecutive crossings by testing
    # their midpoints; this is robust against tangential vertex touches.
    coords = v.tolist()
    intervals = []
    for (t0, e0, s0), (t1, e1, s1) in zip(crossings[:-1], crossings[1:]):
        if t1 - t0 <= snap_tol * h:
            continue
        tm = 0.5 * (t0 + t1)
        if _point_in_loop(p[0] + tm * d[0], p[1] + tm * d[1], coords):
            intervals.append(((t0, e0, s0), (t1, e1, s1)))
    if not intervals:
        raise CutMissesPolygon("no interior chord on the cut line")

    chosen = None
    for iv in intervals:
        if iv[0][0] <= 0.0 <= iv[1][0]:
            chosen = iv
            break
    if chosen is None:
        chosen = max(intervals, key=lambda iv: iv[1][0] - iv[0][0])
    (t_lo, e_lo, s_lo), (t_hi, e_hi, s_hi) = chosen
    if t_hi - t_lo <= 1e-9 * h:
        raise CutMissesPolygon("chord shorter than tolerance")

    def resolve(edge, s, t):
        """Snap near-vertex hits; return (coords, provenance)."""
        a_pt, b_pt = v[edge], v[(edge + 1) % n]
        x = p + t * d
        if np.hypot(*(x - a_pt)) <= snap_tol * h:
            return a_pt.copy(), ("v", edge)
        if np.hypot(*(x - b_pt)) <= snap_tol * h:
            return b_pt.copy(), ("v", (edge + 1) % n)
        return x, ("cut", edge, s)

    lo_pt, lo_prov = resolve(e_lo, s_lo, t_lo)
    hi_pt, hi_prov = resolve(e_hi, s_hi, t_hi)
    if lo_prov == hi_prov:
        raise CutMissesPolygon("both cut endpoints snapped to the same vertex")

    def position(pr):
        # Boundary position as (edge index, parameter); a vertex j sits at
        # the start of edge j.
        if pr[0] == "v":
            return (pr[1], 0.0)
        return (pr[1], pr[2])

    def collect(start_prov, start_pt, end_prov, end_pt):
        """Walk the boundary forward from start to end, collecting vertices."""
        pts = [start_pt]
        prov = [start_prov]
        ei, si = position(start_prov)
        ej, sj = position(end_prov)
        k = ei
        while True:
            if k == ej and (k != ei or sj > si):
                break  # end point lies ahead on the current edge
            nxt = (k + 1) % n
            if nxt == ej and sj == 0.0:
                k = nxt
                break  # end point is the next vertex itself
            pts.append(v[nxt].copy())
            prov.append(("v", nxt))
            k = nxt
            if len(pts) > n + 2:
                raise CutMissesPolygon("boundary walk failed to terminate")
        pts.append(end_pt)
        prov.append(end_prov)
        return pts, prov

    pts_a, prov_a = collect(lo_prov, lo_pt, hi_prov, hi_pt)
    pts_b, prov_b = collect(hi_prov, hi_pt, lo_prov, lo_pt)

    pieces = []
    for pts, prov in ((pts_a, prov_a), (pts_b, prov_b)):
        arr = np.asarray(pts, dtype=float)
        if len(arr) < 3:
            raise CutMissesPolygon("degenerate piece from cut")
        try:
            piece = Polygon(arr)
        except ValueError as exc:
            raise NonSimpleResult(f"cut produced an invalid piece: {exc}") from exc
        if not polygon_is_simple(piece.vertices):
            raise NonSimpleResult("cut produced a self-intersecting piece")
        pieces.append(piece)

    total = pieces[0].area + pieces[1].area
    if abs(total - poly.area) > 1e-9 * poly.area:
        raise NonSimpleResult(
            f"piece areas {total:.17g} do not sum to parent area {poly.area:.17g}"
        )
    return pieces[0], pieces[1], (lo_pt, hi_pt), prov_a, prov_b


def split_polygon_by_line(poly, point, direction, snap_tol=1e-9):
    """Public split: two CCW simple pieces plus the cut segment endpoints."""
    a, b, seg, _, _ = split_polygon_detailed(poly, point, direction, snap_tol=snap_tol)
    return a, b, seg
