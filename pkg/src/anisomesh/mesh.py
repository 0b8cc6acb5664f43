"""Polytopal mesh topology with hanging nodes, patch queries, and file IO.

Hanging nodes are ordinary mesh nodes: an element's vertex loop lists every
node on its boundary, including nodes with interior angle pi.  Patches are
therefore computed topologically from loop membership.  The mesh is immutable
during indicator and interpolation passes; refinement builds a new mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidTopology, ParseError
from .geometry import Polygon

__all__ = [
    "INTERIOR",
    "NEUMANN",
    "DIRICHLET",
    "MeshNode",
    "MeshEdge",
    "MeshElement",
    "PolyMesh",
    "build_mesh",
    "load_mesh",
    "save_mesh",
    "generate_grid",
    "generate_polygonal",
]

INTERIOR = 0
NEUMANN = 1
DIRICHLET = 2

_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MeshNode:
    id: int
    coords: np.ndarray
    boundary_tag: int


@dataclass
class MeshEdge:
    id: int
    node_pair: tuple  # (a, b) with a < b
    adjacent_elements: list
    boundary_tag: int = INTERIOR

    @property
    def is_boundary(self):
        return len(self.adjacent_elements) == 1


class MeshElement:
    """Element as an ordered CCW node-id loop with cached geometry."""

    __slots__ = ("id", "vertex_loop", "polygon")

    def __init__(self, eid, vertex_loop, polygon):
        self.id = eid
        self.vertex_loop = list(vertex_loop)
        self.polygon = polygon

    @property
    def spectrum(self):
        return self.polygon.spectrum

    @property
    def refmap(self):
        return self.polygon.refmap

    def edges(self):
        loop = self.vertex_loop
        n = len(loop)
        return [(loop[i], loop[(i + 1) % n]) for i in range(n)]


def _edge_key(a, b):
    return (a, b) if a < b else (b, a)


class PolyMesh:
    """Nodes, edges, elements, and their mutual incidence."""

    def __init__(self, points, node_tags, elements, edges, edge_index, node_elems, domain_area):
        self.points = points
        self.node_tags = node_tags
        self.elements = elements
        self.edges = edges
        self.edge_index = edge_index  # (a, b) with a < b -> edge id
        self._node_elems = node_elems
        self.domain_area = domain_area

    # -- basic queries ------------------------------------------------------

    @property
    def n_nodes(self):
        return len(self.points)

    @property
    def n_elements(self):
        return len(self.elements)

    def node(self, i):
        return MeshNode(i, self.points[i], int(self.node_tags[i]))

    def total_area(self):
        return float(sum(el.polygon.area for el in self.elements))

    def boundary_edges(self):
        return [e for e in self.edges if e.is_boundary]

    def element_neighbours(self, eid):
        """Elements sharing at least one node with eid (excluding eid)."""
        out = set()
        for i in self.elements[eid].vertex_loop:
            out.update(self._node_elems[i])
        out.discard(eid)
        return out

    def neighbour_pairs(self):
        """All unordered pairs of elements whose closures intersect."""
        pairs = set()
        for elems in self._node_elems:
            elems = sorted(elems)
            for i in range(len(elems)):
                for j in range(i + 1, len(elems)):
                    pairs.add((elems[i], elems[j]))
        return sorted(pairs)

    # -- patches ------------------------------------------------------------

    def node_patch(self, i):
        """omega_i: indices of elements whose closure contains node i."""
        return set(self._node_elems[i])

    def edge_patch(self, edge):
        """omega_E: union of the endpoint node patches."""
        if isinstance(edge, MeshEdge):
            a, b = edge.node_pair
        else:
            a, b = edge
        return self.node_patch(a) | self.node_patch(b)

    def element_patch(self, eid):
        """omega_K: union of node patches over the element's loop."""
        out = set()
        for i in self.elements[eid].vertex_loop:
            out.update(self._node_elems[i])
        return out

    def max_elements_per_node(self):
        return max((len(s) for s in self._node_elems), default=0)

    # -- validation ---------------------------------------------------------

    def validate(self, check_simple=True):
        """Run the full invariant suite; raises InvalidTopology on failure."""
        for e in self.edges:
            n_adj = len(e.adjacent_elements)
            if n_adj not in (1, 2):
                raise InvalidTopology(f"edge {e.id} adjacent to {n_adj} elements")
            if n_adj == 2 and e.boundary_tag != INTERIOR:
                raise InvalidTopology(f"interior edge {e.id} carries a boundary tag")
            if n_adj == 1 and e.boundary_tag == INTERIOR:
                raise InvalidTopology(f"boundary edge {e.id} tagged interior")
            for eid in e.adjacent_elements:
                if e.node_pair not in map(lambda p: _edge_key(*p), self.elements[eid].edges()):
                    raise InvalidTopology(
                        f"edge {e.id} lists element {eid} which does not contain it"
                    )
        for el in self.elements:
            for a, b in el.edges():
                key = _edge_key(a, b)
                if key not in self.edge_index:
                    raise InvalidTopology(f"element {el.id} edge {key} missing from edge table")
                edge = self.edges[self.edge_index[key]]
                if el.id not in edge.adjacent_elements:
                    raise InvalidTopology(f"incidence mismatch on edge {key}")
            if check_simple:
                el.polygon.validate_simple()
        total = self.total_area()
        if abs(total - self.domain_area) > 1e-10 * self.domain_area:
            raise InvalidTopology(
                f"element areas sum to {total:.17g}, domain area is {self.domain_area:.17g}"
            )
        for i, elems in enumerate(self._node_elems):
            for eid in elems:
                if i not in self.elements[eid].vertex_loop:
                    raise InvalidTopology(f"patch of node {i} lists element {eid} without it")
        return True


def _derive_node_tags(n_nodes, edges):
    tags = np.zeros(n_nodes, dtype=np.uint8)
    for e in edges:
        if not e.is_boundary:
            continue
        a, b = e.node_pair
        for i in (a, b):
            # Dirichlet wins at junction nodes (closure convention).
            if e.boundary_tag == DIRICHLET:
                tags[i] = DIRICHLET
            elif e.boundary_tag == NEUMANN and tags[i] != DIRICHLET:
                tags[i] = NEUMANN
    return tags


def build_mesh(points, element_loops, boundary_spec=DIRICHLET, check_simple=True):
    """Construct a PolyMesh with full incidence and invariant validation.

    ``boundary_spec`` assigns tags to boundary edges: a single tag for the
    whole boundary, a dict {(a, b): tag} keyed by node pairs (either order),
    or a callable mapping the edge midpoint to a tag.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidTopology("points must be an (N, 2) array")
    if not np.all(np.isfinite(pts)):
        raise InvalidTopology("node coordinates must be finite")
    n_nodes = len(pts)

    elements = []
    for eid, loop in enumerate(element_loops):
        loop = list(loop)
        if len(set(loop)) != len(loop):
            raise InvalidTopology(f"element {eid} repeats a node in its loop")
        if any(i < 0 or i >= n_nodes for i in loop):
            raise InvalidTopology(f"element {eid} references a missing node")
        try:
            poly = Polygon(pts[loop])
        except ValueError as exc:
            raise InvalidTopology(f"element {eid}: {exc}") from exc
        elements.append(MeshElement(eid, loop, poly))

    edge_map = {}
    oriented = {}
    for el in elements:
        for a, b in el.edges():
            key = _edge_key(a, b)
            edge_map.setdefault(key, []).append(el.id)
            if (a, b) in oriented:
                raise InvalidTopology(
                    f"edge {a}->{b} traversed twice in the same direction "
                    f"(orientation mismatch or overlapping elements)"
                )
            oriented[(a, b)] = el.id

    edges = []
    edge_index = {}
    for key in sorted(edge_map):
        adj = edge_map[key]
        if len(adj) > 2:
            raise InvalidTopology(f"edge {key} shared by {len(adj)} elements")
        edges.append(MeshEdge(len(edges), key, adj))
        edge_index[key] = edges[-1].id

    # Domain area from the oriented boundary: each boundary edge appears in
    # exactly one loop, domain on its left.
    twice_area = 0.0
    for e in edges:
        if not e.is_boundary:
            continue
        a, b = e.node_pair
        if (a, b) not in oriented:
            a, b = b, a
        pa, pb = pts[a], pts[b]
        twice_area += pa[0] * pb[1] - pb[0] * pa[1]
    domain_area = 0.5 * twice_area
    if domain_area <= 0.0:
        raise InvalidTopology("boundary orientation yields non-positive domain area")

    for e in edges:
        if not e.is_boundary:
            continue
        if callable(boundary_spec):
            a, b = e.node_pair
            e.boundary_tag = int(boundary_spec(0.5 * (pts[a] + pts[b])))
        elif isinstance(boundary_spec, dict):
            a, b = e.node_pair
            tag = boundary_spec.get((a, b), boundary_spec.get((b, a)))
            if tag is None:
                raise InvalidTopology(f"boundary_spec missing tag for edge {e.node_pair}")
            e.boundary_tag = int(tag)
        else:
            e.boundary_tag = int(boundary_spec)
        if e.boundary_tag not in (NEUMANN, DIRICHLET):
            raise InvalidTopology(f"boundary edge {e.node_pair} needs tag 1 or 2")

    node_tags = _derive_node_tags(n_nodes, edges)
    node_elems = [set() for _ in range(n_nodes)]
    for el in elements:
        for i in el.vertex_loop:
            node_elems[i].add(el.id)

    mesh = PolyMesh(pts, node_tags, elements, edges, edge_index, node_elems, domain_area)
    mesh.validate(check_simple=check_simple)
    return mesh


def node_patch(mesh, i):
    return mesh.node_patch(i)


def edge_patch(mesh, edge):
    return mesh.edge_patch(edge)


def element_patch(mesh, eid):
    return mesh.element_patch(eid)


# ---------------------------------------------------------------------------
# File IO: plain text, 17 significant digits for bit-exact round trips
# ---------------------------------------------------------------------------

def save_mesh(mesh, path):
    lines = [f"polymesh 2 {_FORMAT_VERSION}", str(mesh.n_nodes)]
    for i in range(mesh.n_nodes):
        x, y = mesh.points[i]
        lines.append(f"{x:.17g} {y:.17g} {int(mesh.node_tags[i])}")
    lines.append(str(mesh.n_elements))
    for el in mesh.elements:
        lines.append(" ".join([str(len(el.vertex_loop))] + [str(i) for i in el.vertex_loop]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path):
    with open(path) as fh:
        raw = fh.readlines()
    rows = []
    for lineno, line in enumerate(raw, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        rows.append((lineno, stripped))
    if not rows:
        raise ParseError("empty mesh file")

    def take():
        if not rows:
            raise ParseError("unexpected end of file")
        return rows.pop(0)

    lineno, header = take()
    parts = header.split()
    if len(parts) != 3 or parts[0] != "polymesh" or parts[1] != "2":
        raise ParseError("bad header, expected 'polymesh 2 <version>'", line=lineno)

    lineno, count = take()
    try:
        n_nodes = int(count)
    except ValueError:
        raise ParseError("expected node count", line=lineno) from None
    pts = np.empty((n_nodes, 2))
    tags = np.zeros(n_nodes, dtype=np.uint8)
    for i in range(n_nodes):
        lineno, row = take()
        parts = row.split()
        if len(parts) != 3:
            raise ParseError("expected 'x y tag'", line=lineno)
        try:
            pts[i] = (float(parts[0]), float(parts[1]))
            tags[i] = int(parts[2])
        except ValueError:
            raise ParseError("bad node row", line=lineno) from None

    lineno, count = take()
    try:
        n_elems = int(count)
    except ValueError:
        raise ParseError("expected element count", line=lineno) from None
    loops = []
    for _ in range(n_elems):
        lineno, row = take()
        parts = row.split()
        try:
            k = int(parts[0])
            loop = [int(p) for p in parts[1:]]
        except (ValueError, IndexError):
            raise ParseError("bad element row", line=lineno) from None
        if len(loop) != k:
            raise ParseError(f"element row promises {k} nodes, has {len(loop)}", line=lineno)
        loops.append(loop)

    # Boundary edge tags are reconstructed from node tags: an edge lies on
    # the Dirichlet part only if both endpoints do (junction nodes carry the
    # Dirichlet tag, so mixed edges read as Neumann).
    def tag_for(pair):
        ta, tb = int(tags[pair[0]]), int(tags[pair[1]])
        if ta == DIRICHLET and tb == DIRICHLET:
            return DIRICHLET
        if NEUMANN in (ta, tb):
            return NEUMANN
        return DIRICHLET

    edge_map = {}
    for loop in loops:
        for i in range(len(loop)):
            key = _edge_key(loop[i], loop[(i + 1) % len(loop)])
            edge_map[key] = edge_map.get(key, 0) + 1
    boundary_spec = {key: tag_for(key) for key, cnt in edge_map.items() if cnt == 1}

    mesh = build_mesh(pts, loops, boundary_spec)
    # Preserve node tags exactly as stored.
    mesh.node_tags = tags
    return mesh


# ---------------------------------------------------------------------------
# Generators for initial meshes on (0, 1)^2
# ---------------------------------------------------------------------------

def generate_grid(nx, ny, boundary_spec=DIRICHLET):
    """Uniform nx-by-ny quad grid on the unit square."""
    if nx < 1 or ny < 1:
        raise ValueError("grid needs at least one cell per direction")
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    pts = np.array([(x, y) for y in ys for x in xs])
    loops = []
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            loops.append([a, a + 1, a + nx + 2, a + nx + 1])
    return build_mesh(pts, loops, boundary_spec)


def generate_polygonal(nx, ny, jitter=0.2, seed=0, merge_fraction=0.3, boundary_spec=DIRICHLET):
    """Structured quads with seeded interior jitter and random pair merges.

    Merging removes the shared edge of two adjacent quads, producing general
    polygons (possibly non-convex under jitter); each quad is merged at most
    once.  Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    pts = np.array([(x, y) for y in ys for x in xs])
    hx, hy = 1.0 / nx, 1.0 / ny
    for j in range(1, ny):
        for i in range(1, nx):
            k = j * (nx + 1) + i
            pts[k, 0] += rng.uniform(-jitter, jitter) * hx
            pts[k, 1] += rng.uniform(-jitter, jitter) * hy

    loops = {}
    for j in range(ny):
        for i in range(nx):
            a = j * (nx + 1) + i
            loops[(i, j)] = [a, a + 1, a + nx + 2, a + nx + 1]

    merged = set()
    cells = [(i, j) for j in range(ny) for i in range(nx)]
    rng.shuffle(cells)
    out = []
    for cell in cells:
        if cell in merged:
            continue
        i, j = cell
        neighbours = [(i + 1, j), (i, j + 1)]
        rng.shuffle(neighbours)
        did = False
        if rng.random() < merge_fraction:
            for nb in neighbours:
                if nb in loops and nb not in merged:
                    out.append(_merge_loops(loops[cell], loops[nb]))
                    merged.add(cell)
                    merged.add(nb)
                    did = True
                    break
        if not did:
            out.append(loops[cell])
            merged.add(cell)

    out.sort()
    mesh = build_mesh(pts, out, boundary_spec)
    return mesh


def _merge_loops(loop_a, loop_b):
    """Union of two CCW loops sharing exactly one edge."""
    edges_a = {(loop_a[i], loop_a[(i + 1) % len(loop_a)]) for i in range(len(loop_a))}
    shared = None
    for i in range(len(loop_b)):
        a, b = loop_b[i], loop_b[(i + 1) % len(loop_b)]
        if (b, a) in edges_a:
            shared = (b, a)
            break
    if shared is None:
        raise InvalidTopology("loops share no edge")
    u, v = shared  # appears as u->v in loop_a, v->u in loop_b
    ia = loop_a.index(u)
    ib = loop_b.index(v)
    na, nb = len(loop_a), len(loop_b)
    part_a = [loop_a[(ia + 1 + k) % na] for k in range(na - 1)]  # v ... up to u
    part_b = [loop_b[(ib + 1 + k) % nb] for k in range(nb - 1)]  # u ... up to v
    return part_a + part_b
