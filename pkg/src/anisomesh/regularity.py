"""Mesh regularity audits: star-shape kernels, aspect ratios, neighbour anisotropy.

Audits never reject a mesh.  They report the observed constants (aspect
bounds, eigenvalue jumps, frame rotations) so they can be compared against
user thresholds; degenerate findings show up as zeros or large ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .geometry import Polygon, map_polygon

__all__ = [
    "ElementRegularity",
    "NeighbourRegularity",
    "RegularityAudit",
    "star_kernel",
    "chebyshev_center",
    "audit_element",
    "audit_neighbours",
    "audit_mapped_patch",
    "audit_mesh",
]


@dataclass(frozen=True)
class ElementRegularity:
    element_id: int
    rho: float
    z: np.ndarray
    aspect: float  # h / rho (inf when rho == 0)
    min_edge_ratio: float  # max over edges of h / |e|
    lambda_ratio: float
    alpha: float
    n_nodes: int


@dataclass(frozen=True)
class NeighbourRegularity:
    pair: tuple
    delta_max: float
    rotation_term: float
    rotation_norm: float  # ||R - I||_2, unscaled
    rotation: np.ndarray


@dataclass
class RegularityAudit:
    elements: list
    mapped_elements: list
    pairs: list
    max_aspect: float = 0.0  # observed sigma bound on mapped elements
    max_edge_ratio: float = 0.0  # observed c bound on mapped elements
    max_delta: float = 0.0
    max_rotation_term: float = 0.0
    max_node_valence: int = 0
    lambda_ratio_hist: np.ndarray = field(default=None)
    alpha_hist: np.ndarray = field(default=None)


def _halfplanes(vertices):
    """Inward half-planes (n_i . x <= b_i) of a CCW loop, unit normals."""
    v = np.asarray(vertices, dtype=float)
    e = np.roll(v, -1, axis=0) - v
    lengths = np.hypot(e[:, 0], e[:, 1])
    # Outward normal of a CCW edge is (e_y, -e_x).
    normals = np.column_stack([e[:, 1], -e[:, 0]]) / lengths[:, None]
    offsets = (normals * v).sum(axis=1)
    return normals, offsets


def _clip_halfplane(points, normal, offset, eps):
    """Sutherland-Hodgman clip of a convex loop against n . x <= b."""
    if len(points) == 0:
        return points
    d = points @ normal - offset
    keep = d <= eps
    out = []
    n = len(points)
    for i in range(n):
        j = (i + 1) % n
        if keep[i]:
            out.append(points[i])
        if keep[i] != keep[j]:
            t = d[i] / (d[i] - d[j])
            out.append(points[i] + t * (points[j] - points[i]))
    return np.asarray(out) if out else np.empty((0, 2))


def chebyshev_center(normals, offsets):
    """Largest inscribed circle of the region {n_i . x <= b_i}.

    Solved as the 3-variable LP  max r  s.t.  n_i . x + r <= b_i.  Returns
    (z, r); r <= 0 means the region has empty interior.
    """
    m = len(offsets)
    c = np.array([0.0, 0.0, -1.0])
    a_ub = np.column_stack([normals, np.ones(m)])
    res = linprog(c, A_ub=a_ub, b_ub=offsets, bounds=[(None, None)] * 2 + [(None, None)],
                  method="highs")
    if not res.success:
        return np.array([np.nan, np.nan]), 0.0
    z = res.x[:2]
    r = res.x[2]
    return z, float(r)


_kernel_cache = {}


def star_kernel(poly, use_cache=True):
    """Kernel polygon, inscribed-circle radius and center of a polygon.

    The kernel is the intersection of the inward half-planes of all edges;
    a polygon is star-shaped iff the kernel has interior.  Returns
    (kernel Polygon or None, rho, z) with rho = 0 for non-star-shaped input.
    The result is cached modulo translation and uniform scaling.
    """
    key = None
    if use_cache:
        key = poly.similarity_key()
        hit = _kernel_cache.get(key)
        if hit is not None:
            k_norm, rho_norm, z_norm = hit
            s = math.sqrt(poly.area)
            c = poly.centroid
            kernel = Polygon(k_norm * s + c) if k_norm is not None else None
            return kernel, rho_norm * s, z_norm * s + c

    normals, offsets = _halfplanes(poly.vertices)
    z, rho = chebyshev_center(normals, offsets)

    h = poly.diameter
    region = np.array(
        [
            poly.vertices.min(axis=0) - 0.1 * h,
            [poly.vertices.max(axis=0)[0] + 0.1 * h, poly.vertices.min(axis=0)[1] - 0.1 * h],
            poly.vertices.max(axis=0) + 0.1 * h,
            [poly.vertices.min(axis=0)[0] - 0.1 * h, poly.vertices.max(axis=0)[1] + 0.1 * h],
        ]
    )
    eps = 1e-12 * h
    for n_vec, b in zip(normals, offsets):
        region = _clip_halfplane(region, n_vec, b, eps)
        if len(region) == 0:
            break

    if rho <= 1e-12 * h or len(region) < 3:
        result = (None, 0.0, z if np.all(np.isfinite(z)) else poly.centroid)
    else:
        try:
            kernel = Polygon(region)
        except ValueError:
            kernel = None
        result = (kernel, rho, z)

    if use_cache and key is not None:
        s = math.sqrt(poly.area)
        c = poly.centroid
        k_norm = (result[0].vertices - c) / s if result[0] is not None else None
        _kernel_cache[key] = (k_norm, result[1] / s, (result[2] - c) / s)
        if len(_kernel_cache) > 50000:
            _kernel_cache.clear()
    return result


def _element_record(eid, poly, lambda_ratio, alpha):
    kernel, rho, z = star_kernel(poly)
    h = poly.diameter
    v = poly.vertices
    edge_len = np.hypot(*(np.roll(v, -1, axis=0) - v).T)
    return ElementRegularity(
        element_id=eid,
        rho=rho,
        z=np.asarray(z),
        aspect=h / rho if rho > 0.0 else math.inf,
        min_edge_ratio=float(h / edge_len.min()),
        lambda_ratio=lambda_ratio,
        alpha=alpha,
        n_nodes=len(v),
    )


def audit_element(poly, eid=0):
    """Regularity records for an element and its reference configuration.

    Returns (record of K, record of F_K(K)); anisotropy-aware checks use the
    mapped record, whose element should look isotropic and unit-sized.
    """
    s = poly.spectrum
    rm = poly.refmap
    rec = _element_record(eid, poly, s.ratio, rm.alpha)
    mapped = map_polygon(poly, rm)
    rec_mapped = _element_record(eid, mapped, mapped.spectrum.ratio, rm.alpha)
    return rec, rec_mapped


def relative_rotation_angle(u1_a, u1_b):
    """Angle between two principal axes, wrapped to (-pi/2, pi/2].

    Eigenvectors are defined up to sign, so frames of nearly aligned
    elements may differ by ~pi under the global sign canon; the axis angle
    modulo pi is the geometrically meaningful difference.
    """
    ang = math.atan2(u1_b[1], u1_b[0]) - math.atan2(u1_a[1], u1_a[0])
    while ang <= -0.5 * math.pi:
        ang += math.pi
    while ang > 0.5 * math.pi:
        ang -= math.pi
    return ang


def neighbour_record(pair, spec_a, spec_b):
    da = abs(spec_b.lambda1 / spec_a.lambda1 - 1.0)
    db = abs(spec_b.lambda2 / spec_a.lambda2 - 1.0)
    phi = relative_rotation_angle(spec_a.u1, spec_b.u1)
    rot = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
    rnorm = 2.0 * abs(math.sin(0.5 * phi))
    term = rnorm * math.sqrt(spec_a.lambda1 / spec_a.lambda2)
    return NeighbourRegularity(
        pair=pair,
        delta_max=max(da, db),
        rotation_term=term,
        rotation_norm=rnorm,
        rotation=rot,
    )


def audit_neighbours(mesh):
    """Anisotropy-compatibility records for every closure-intersecting pair."""
    specs = [el.polygon.spectrum for el in mesh.elements]
    out = []
    for a, b in mesh.neighbour_pairs():
        out.append(neighbour_record((a, b), specs[a], specs[b]))
    return out


def audit_mapped_patch(mesh, eid):
    """Audit every element of omega_K after mapping by A_K.

    Returns (records, h_patch, max_area_ratio): per-element isotropic records
    of the mapped patch, the mapped patch diameter, and max |K'|/|K| over the
    patch.
    """
    el = mesh.elements[eid]
    rm = el.polygon.refmap
    patch = sorted(mesh.element_patch(eid))
    records = []
    all_pts = []
    max_ratio = 0.0
    for other in patch:
        poly = mesh.elements[other].polygon
        mapped = map_polygon(poly, rm)
        records.append(_element_record(other, mapped, mapped.spectrum.ratio, rm.alpha))
        all_pts.append(mapped.vertices)
        max_ratio = max(max_ratio, poly.area / el.polygon.area)
    pts = np.vstack(all_pts)
    if len(pts) <= 512:
        d = pts[:, None, :] - pts[None, :, :]
        h_patch = float(np.sqrt((d * d).sum(axis=2).max()))
    else:
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        h_patch = float(np.hypot(*(hi - lo)))
    return records, h_patch, max_ratio


def audit_mesh(mesh, bins=16):
    """Full regularity audit: per-element (original and mapped) and per-pair."""
    recs = []
    mapped_recs = []
    for el in mesh.elements:
        rec, rec_mapped = audit_element(el.polygon, el.id)
        recs.append(rec)
        mapped_recs.append(rec_mapped)
    pairs = audit_neighbours(mesh)
    ratios = np.array([r.lambda_ratio for r in recs])
    alphas = np.array([r.alpha for r in recs])

    def hist(vals):
        if len(vals) == 0:
            return None
        lo, hi = float(vals.min()), float(vals.max())
        if hi - lo <= 1e-9 * max(abs(lo), abs(hi), 1.0):
            lo, hi = lo - 0.5, hi + 0.5
        return np.histogram(vals, bins=bins, range=(lo, hi))[0]

    audit = RegularityAudit(
        elements=recs,
        mapped_elements=mapped_recs,
        pairs=pairs,
        max_aspect=max((r.aspect for r in mapped_recs), default=0.0),
        max_edge_ratio=max((r.min_edge_ratio for r in mapped_recs), default=0.0),
        max_delta=max((p.delta_max for p in pairs), default=0.0),
        max_rotation_term=max((p.rotation_term for p in pairs), default=0.0),
        max_node_valence=mesh.max_elements_per_node(),
        lambda_ratio_hist=hist(np.log10(ratios)),
        alpha_hist=hist(alphas),
    )
    return audit


def write_element_csv(mesh, audit, fh):
    fh.write("element_id,lambda1,lambda2,ratio,alpha,rho,aspect,min_edge_ratio,n_nodes\n")
    for rec in audit.elements:
        s = mesh.elements[rec.element_id].polygon.spectrum
        fh.write(
            f"{rec.element_id},{s.lambda1:.12g},{s.lambda2:.12g},{rec.lambda_ratio:.12g},"
            f"{rec.alpha:.12g},{rec.rho:.12g},{rec.aspect:.12g},"
            f"{rec.min_edge_ratio:.12g},{rec.n_nodes}\n"
        )


def write_pair_csv(audit, fh):
    fh.write("pair,k1,k2,delta_max,rotation_term\n")
    for idx, p in enumerate(audit.pairs):
        fh.write(f"{idx},{p.pair[0]},{p.pair[1]},{p.delta_max:.12g},{p.rotation_term:.12g}\n")
