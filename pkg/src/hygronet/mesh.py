"""Triangular meshes of the periodic cell and adaptive refinement.

Meshes are structured right-triangle grids (two triangles per square,
diagonal from lower-left to upper-right), refined where fibre boundaries
cross elements using Rivara's backward longest-edge bisection.  Bisecting
a boundary edge also bisects its periodic partner on the opposite side so
the periodic node pairing stays one-to-one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .levelset import FibreSet
from .netgen import Network

__all__ = [
    "Mesh",
    "MeshError",
    "ElementStatus",
    "ElementClassification",
    "build_structured_mesh",
    "classify_elements",
    "refine_lepp",
    "refine_to_interface",
    "candidate_pairs",
]


class MeshError(RuntimeError):
    pass


class ElementStatus(IntEnum):
    VOID = 0
    INTERIOR = 1
    INTERFACE = 2


# per (element, fibre) membership states
PAIR_OUT = 0
PAIR_FULL = 1
PAIR_PARTIAL = 2


@dataclass
class Mesh:
    """Conforming triangulation of the square cell [0, l] x [0, l].

    nodes : (n_nodes, 2) float
    elements : (n_elements, 3) int, counter-clockwise
    generation : (n_elements,) int, bisection depth of each element
    """

    nodes: np.ndarray
    elements: np.ndarray
    cell_size: float
    generation: np.ndarray = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.elements = np.asarray(self.elements, dtype=np.int64)
        if self.generation is None:
            self.generation = np.zeros(len(self.elements), dtype=np.int32)
        else:
            self.generation = np.asarray(self.generation, dtype=np.int32)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.elements]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    def areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            self._cache["areas"] = self.signed_areas()
        return self._cache["areas"]

    def centroids(self) -> np.ndarray:
        if "centroids" not in self._cache:
            self._cache["centroids"] = self.nodes[self.elements].mean(axis=1)
        return self._cache["centroids"]

    def edge_map(self) -> dict[tuple[int, int], list[int]]:
        """Sorted node pair -> adjacent element ids."""
        if "edge_map" not in self._cache:
            em: dict[tuple[int, int], list[int]] = {}
            for eid, (a, b, c) in enumerate(self.elements):
                for u, v in ((b, c), (c, a), (a, b)):
                    key = (u, v) if u < v else (v, u)
                    em.setdefault(key, []).append(eid)
            self._cache["edge_map"] = em
        return self._cache["edge_map"]

    def boundary_sides(self) -> np.ndarray:
        """(n_nodes, 4) bool: on left, right, bottom, top boundary."""
        if "bsides" not in self._cache:
            tol = 1e-12 * self.cell_size
            x, y = self.nodes[:, 0], self.nodes[:, 1]
            l = self.cell_size
            self._cache["bsides"] = np.column_stack(
                [
                    np.abs(x) <= tol,
                    np.abs(x - l) <= tol,
                    np.abs(y) <= tol,
                    np.abs(y - l) <= tol,
                ]
            )
        return self._cache["bsides"]

    def periodic_pairs(self) -> tuple[dict[int, int], dict[int, int]]:
        """(left -> right, bottom -> top) node maps, matched by coordinate."""
        if "pairs" not in self._cache:
            sides = self.boundary_sides()
            tol = 1e-12 * self.cell_size
            pairs_x = _match_boundary(
                self.nodes, np.where(sides[:, 0])[0], np.where(sides[:, 1])[0], 1, tol
            )
            pairs_y = _match_boundary(
                self.nodes, np.where(sides[:, 2])[0], np.where(sides[:, 3])[0], 0, tol
            )
            self._cache["pairs"] = (pairs_x, pairs_y)
        return self._cache["pairs"]

    def element_bboxes(self) -> np.ndarray:
        """(n_elements, 4): xmin, xmax, ymin, ymax."""
        if "bboxes" not in self._cache:
            p = self.nodes[self.elements]
            self._cache["bboxes"] = np.column_stack(
                [
                    p[:, :, 0].min(axis=1),
                    p[:, :, 0].max(axis=1),
                    p[:, :, 1].min(axis=1),
                    p[:, :, 1].max(axis=1),
                ]
            )
        return self._cache["bboxes"]

    def min_angle(self) -> float:
        p = self.nodes[self.elements]
        angles = []
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cosang = (a * b).sum(axis=1) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            )
            angles.append(np.arccos(np.clip(cosang, -1.0, 1.0)))
        return float(np.min(angles))

    def validate(self):
        """Check conformity, orientation, and periodic pairing."""
        if np.any(self.signed_areas() <= 0):
            raise MeshError("non-positive element area")
        for key, elems in self.edge_map().items():
            if not 1 <= len(elems) <= 2:
                raise MeshError(f"edge {key} shared by {len(elems)} elements")
        sides = self.boundary_sides()
        for key, elems in self.edge_map().items():
            if len(elems) == 1:
                a, b = key
                on_boundary = (sides[a] & sides[b]).any()
                if not on_boundary:
                    raise MeshError(f"interior edge {key} with one element")
        self.periodic_pairs()  # raises if boundary sets do not match

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Element id containing each point (-1 if outside every element)."""
        points = np.atleast_2d(points)
        if "locator" not in self._cache:
            self._cache["locator"] = _ElementLocator(self)
        return self._cache["locator"].locate(points)


def _match_boundary(nodes, src_ids, dst_ids, axis, tol):
    """Pair nodes on opposite boundaries by the non-normal coordinate."""
    if len(src_ids) != len(dst_ids):
        raise MeshError(
            f"periodic boundary node counts differ: {len(src_ids)} vs {len(dst_ids)}"
        )
    src_sorted = src_ids[np.argsort(nodes[src_ids, axis])]
    dst_sorted = dst_ids[np.argsort(nodes[dst_ids, axis])]
    if np.any(np.abs(nodes[src_sorted, axis] - nodes[dst_sorted, axis]) > tol):
        raise MeshError("periodic boundary nodes do not match under translation")
    return {int(a): int(b) for a, b in zip(src_sorted, dst_sorted)}


class _ElementLocator:
    """Bucketed point-in-triangle lookup."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        m = mesh.n_elements
        self.nb = max(1, int(math.sqrt(m / 4.0)))
        self.b = mesh.cell_size / self.nb
        self.buckets: dict[tuple[int, int], list[int]] = {}
        bb = mesh.element_bboxes()
        for eid in range(m):
            i0 = max(0, min(self.nb - 1, int(bb[eid, 0] / self.b)))
            i1 = max(0, min(self.nb - 1, int(bb[eid, 1] / self.b)))
            j0 = max(0, min(self.nb - 1, int(bb[eid, 2] / self.b)))
            j1 = max(0, min(self.nb - 1, int(bb[eid, 3] / self.b)))
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    self.buckets.setdefault((i, j), []).append(eid)

    def locate(self, points):
        out = np.full(len(points), -1, dtype=np.int64)
        nodes, elements = self.mesh.nodes, self.mesh.elements
        eps = 1e-12 * self.mesh.cell_size
        for k, (x, y) in enumerate(points):
            i = max(0, min(self.nb - 1, int(x / self.b)))
            j = max(0, min(self.nb - 1, int(y / self.b)))
            for eid in self.buckets.get((i, j), ()):
                a, b, c = elements[eid]
                pa, pb, pc = nodes[a], nodes[b], nodes[c]
                d1 = (pb[0] - pa[0]) * (y - pa[1]) - (pb[1] - pa[1]) * (x - pa[0])
                d2 = (pc[0] - pb[0]) * (y - pb[1]) - (pc[1] - pb[1]) * (x - pb[0])
                d3 = (pa[0] - pc[0]) * (y - pc[1]) - (pa[1] - pc[1]) * (x - pc[0])
                if d1 >= -eps and d2 >= -eps and d3 >= -eps:
                    out[k] = eid
                    break
        return out


def build_structured_mesh(cell_size: float, n_div: int) -> Mesh:
    """Regular grid of n_div x n_div squares, each split into two
    right triangles along the lower-left to upper-right diagonal."""
    if n_div < 2:
        raise ValueError("n_div must be at least 2")
    l = cell_size
    xs = np.linspace(0.0, l, n_div + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="xy")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    def nid(i, j):
        return j * (n_div + 1) + i

    elems = []
    for j in range(n_div):
        for i in range(n_div):
            n00 = nid(i, j)
            n10 = nid(i + 1, j)
            n11 = nid(i + 1, j + 1)
            n01 = nid(i, j + 1)
            elems.append((n00, n10, n11))
            elems.append((n00, n11, n01))
    return Mesh(nodes=nodes, elements=np.array(elems), cell_size=l)


# ---------------------------------------------------------------------------
# element classification


@dataclass
class ElementClassification:
    """Per-element status plus the (element, fibre) membership pairs.

    pair_elem / pair_fibre / pair_state hold one row per candidate pair
    whose bounding boxes overlap; states are PAIR_OUT / PAIR_FULL /
    PAIR_PARTIAL.
    """

    status: np.ndarray
    pair_elem: np.ndarray
    pair_fibre: np.ndarray
    pair_state: np.ndarray

    def candidates(self, eid: int) -> np.ndarray:
        return np.unique(self.pair_fibre[self.pair_elem == eid])

    def interface_elements(self) -> np.ndarray:
        return np.where(self.status == ElementStatus.INTERFACE)[0]


def candidate_pairs(mesh: Mesh, network: Network):
    """(element, fibre) pairs whose bounding boxes overlap, periodic images
    included.  Conservative superset of the pairs with actual overlap."""
    m = mesh.n_elements
    if network.n_fibres == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    bb = mesh.element_bboxes()
    l = network.cell_size
    margin = 1e-12 * l

    # bucket elements on a uniform grid
    nb = max(1, int(math.sqrt(m / 2.0)))
    b = l / nb
    grid: dict[tuple[int, int], list[int]] = {}
    for eid in range(m):
        i0 = max(0, min(nb - 1, int(bb[eid, 0] / b)))
        i1 = max(0, min(nb - 1, int(bb[eid, 1] / b)))
        j0 = max(0, min(nb - 1, int(bb[eid, 2] / b)))
        j1 = max(0, min(nb - 1, int(bb[eid, 3] / b)))
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                grid.setdefault((i, j), []).append(eid)
    grid = {k: np.array(v, dtype=np.int64) for k, v in grid.items()}

    pair_elem: list[np.ndarray] = []
    pair_fibre: list[np.ndarray] = []
    for fid, fibre in enumerate(network.fibres):
        for ix in (-1, 0, 1):
            for iy in (-1, 0, 1):
                corners = fibre.corners(shift=(ix * l, iy * l))
                xmin, ymin = corners.min(axis=0) - margin
                xmax, ymax = corners.max(axis=0) + margin
                if xmax < 0 or xmin > l or ymax < 0 or ymin > l:
                    continue
                i0 = max(0, min(nb - 1, int(max(xmin, 0.0) / b)))
                i1 = max(0, min(nb - 1, int(min(xmax, l) / b)))
                j0 = max(0, min(nb - 1, int(max(ymin, 0.0) / b)))
                j1 = max(0, min(nb - 1, int(min(ymax, l) / b)))
                cand: list[np.ndarray] = []
                for i in range(i0, i1 + 1):
                    for j in range(j0, j1 + 1):
                        g = grid.get((i, j))
                        if g is not None:
                            cand.append(g)
                if not cand:
                    continue
                cand = np.unique(np.concatenate(cand))
                hit = (
                    (bb[cand, 0] <= xmax)
                    & (bb[cand, 1] >= xmin)
                    & (bb[cand, 2] <= ymax)
                    & (bb[cand, 3] >= ymin)
                )
                sel = cand[hit]
                if len(sel):
                    pair_elem.append(sel)
                    pair_fibre.append(np.full(len(sel), fid, dtype=np.int64))
    if not pair_elem:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    pe = np.concatenate(pair_elem)
    pf = np.concatenate(pair_fibre)
    # merge duplicate (element, fibre) rows arising from several images
    key = pe * network.n_fibres + pf
    _, unique_idx = np.unique(key, return_index=True)
    return pe[unique_idx], pf[unique_idx]


def classify_elements(mesh: Mesh, network: Network) -> ElementClassification:
    """Classify every element as VOID, INTERIOR, or INTERFACE.

    A fibre is PARTIAL on an element when its level set changes sign over
    the vertices, or when all vertices are outside but the centroid is
    inside (slender fibre passing between vertices).  An element is
    INTERFACE if any candidate fibre is PARTIAL, INTERIOR if any fibre
    contains all three vertices, VOID otherwise.
    """
    m = mesh.n_elements
    pe, pf = candidate_pairs(mesh, network)
    if len(pe) == 0:
        return ElementClassification(
            status=np.zeros(m, dtype=np.int8),
            pair_elem=pe,
            pair_fibre=pf,
            pair_state=np.empty(0, dtype=np.int8),
        )
    fs = FibreSet(network)
    verts = mesh.nodes[mesh.elements[pe]]  # (P, 3, 2)
    phiv = fs.periodic_phi(verts, pf[:, None])  # (P, 3)
    cents = mesh.centroids()[pe]
    phic = fs.periodic_phi(cents, pf)  # (P,)

    vmin = phiv.min(axis=1)
    vmax = phiv.max(axis=1)
    state = np.full(len(pe), PAIR_PARTIAL, dtype=np.int8)
    state[vmin >= 0.0] = PAIR_FULL
    state[(vmax < 0.0) & (phic < 0.0)] = PAIR_OUT

    status = np.zeros(m, dtype=np.int8)
    has_full = np.bincount(pe[state == PAIR_FULL], minlength=m) > 0
    has_partial = np.bincount(pe[state == PAIR_PARTIAL], minlength=m) > 0
    status[has_full] = ElementStatus.INTERIOR
    status[has_partial] = ElementStatus.INTERFACE
    return ElementClassification(
        status=status, pair_elem=pe, pair_fibre=pf, pair_state=state
    )


# ---------------------------------------------------------------------------
# Rivara backward longest-edge bisection with periodic edge pairing


class _Refiner:
    def __init__(self, mesh: Mesh, max_generation: int = 12):
        self.l = mesh.cell_size
        self.tol = 1e-12 * self.l
        self.max_generation = max_generation
        self.nodes: list[tuple[float, float]] = [tuple(p) for p in mesh.nodes]
        self.elements: list[tuple[int, int, int] | None] = [
            tuple(int(v) for v in e) for e in mesh.elements
        ]
        self.generation: list[int] = [int(g) for g in mesh.generation]
        self.edge_map: dict[tuple[int, int], list[int]] = {}
        for eid, tri in enumerate(self.elements):
            for key in self._edges_of(tri):
                self.edge_map.setdefault(key, []).append(eid)
        self.midpoint: dict[tuple[int, int], int] = {}
        pairs_x, pairs_y = mesh.periodic_pairs()
        self.pair_x: dict[int, int] = {}
        self.pair_y: dict[int, int] = {}
        for a, b in pairs_x.items():
            self.pair_x[a] = b
            self.pair_x[b] = a
        for a, b in pairs_y.items():
            self.pair_y[a] = b
            self.pair_y[b] = a
        self.pair_queue: list[tuple[int, int]] = []
        self.events: list[tuple[int, ...]] = []
        self._bisections = 0
        self._cap = 200 * len(self.elements) + 10000

    @staticmethod
    def _edges_of(tri):
        a, b, c = tri
        return (
            (b, c) if b < c else (c, b),
            (c, a) if c < a else (a, c),
            (a, b) if a < b else (b, a),
        )

    def alive(self, eid: int) -> bool:
        return self.elements[eid] is not None

    def _edge_len2(self, key) -> float:
        pa, pb = self.nodes[key[0]], self.nodes[key[1]]
        return (pa[0] - pb[0]) ** 2 + (pa[1] - pb[1]) ** 2

    def longest_edge(self, eid: int) -> tuple[int, int]:
        """Longest edge, ties broken by lowest opposite-vertex node id."""
        tri = self.elements[eid]
        a, b, c = tri
        cand = [((b, c) if b < c else (c, b), a),
                ((c, a) if c < a else (a, c), b),
                ((a, b) if a < b else (b, a), c)]
        lens = [self._edge_len2(k) for k, _ in cand]
        lmax = max(lens)
        best = None
        for (key, opp), ln in zip(cand, lens):
            if ln >= lmax * (1.0 - 1e-12):
                if best is None or opp < best[1]:
                    best = (key, opp)
        return best[0]

    def neighbour(self, eid: int, key) -> int | None:
        for other in self.edge_map.get(key, ()):
            if other != eid and self.alive(other):
                return other
        return None

    def _boundary_side_of_node(self, nid: int) -> tuple[bool, bool, bool, bool]:
        x, y = self.nodes[nid]
        return (
            abs(x) <= self.tol,
            abs(x - self.l) <= self.tol,
            abs(y) <= self.tol,
            abs(y - self.l) <= self.tol,
        )

    def _periodic_partner_edge(self, key) -> tuple[int, int] | None:
        """Partner of a boundary edge on the opposite side, if on a
        periodic boundary (not merely the mesh exterior)."""
        a, b = key
        sa = self._boundary_side_of_node(a)
        sb = self._boundary_side_of_node(b)
        for side, pairs in ((0, self.pair_x), (1, self.pair_x),
                            (2, self.pair_y), (3, self.pair_y)):
            if sa[side] and sb[side]:
                pa = pairs.get(a)
                pb = pairs.get(b)
                if pa is None or pb is None:
                    raise MeshError(f"boundary node of edge {key} lacks periodic pair")
                return (pa, pb) if pa < pb else (pb, pa)
        return None

    def _register_midpoint_pairing(self, key, mid):
        """Link the new midpoint with the midpoint of the partner edge if
        that partner was already split."""
        a, b = key
        sa = self._boundary_side_of_node(a)
        sb = self._boundary_side_of_node(b)
        # a corner-to-corner edge lies on exactly one side; midpoints of
        # boundary edges can sit on one vertical and one horizontal side
        # only at corners, which never appear as midpoints.
        for side, pairs in ((0, self.pair_x), (1, self.pair_x),
                            (2, self.pair_y), (3, self.pair_y)):
            if sa[side] and sb[side]:
                pa, pb = pairs[a], pairs[b]
                pkey = (pa, pb) if pa < pb else (pb, pa)
                pmid = self.midpoint.get(pkey)
                if pmid is not None:
                    pairs[mid] = pmid
                    pairs[pmid] = mid

    def bisect(self, eid: int, key) -> tuple[int, int]:
        """Split element eid along edge ``key`` at its midpoint."""
        tri = self.elements[eid]
        if tri is None:
            raise MeshError("bisecting a dead element")
        gen = self.generation[eid] + 1
        if gen > self.max_generation:
            raise MeshError(f"refinement generation cap {self.max_generation} exceeded")
        self._bisections += 1
        if self._bisections > self._cap:
            raise MeshError("bisection cap exceeded; runaway refinement")
        a, b, c = tri
        # locate the split edge in cyclic order: (opp, i, j)
        for opp, i, j in ((a, b, c), (b, c, a), (c, a, b)):
            k = (i, j) if i < j else (j, i)
            if k == key:
                break
        else:
            raise MeshError(f"edge {key} not on element {eid}")
        mid = self.midpoint.get(key)
        if mid is None:
            pa, pb = self.nodes[key[0]], self.nodes[key[1]]
            self.nodes.append(((pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0))
            mid = len(self.nodes) - 1
            self.midpoint[key] = mid
            self._register_midpoint_pairing(key, mid)
        # retire parent
        self.elements[eid] = None
        for ekey in self._edges_of(tri):
            self.edge_map[ekey].remove(eid)
        # children keep parent orientation
        kids = []
        for child in ((opp, i, mid), (opp, mid, j)):
            self.elements.append(child)
            self.generation.append(gen)
            cid = len(self.elements) - 1
            for ekey in self._edges_of(child):
                self.edge_map.setdefault(ekey, []).append(cid)
            kids.append(cid)
        # a split periodic boundary edge forces its partner edge
        partner = self._periodic_partner_edge(key)
        if partner is not None and partner not in self.midpoint:
            self.pair_queue.append(partner)
        return tuple(kids)

    def refine_element(self, eid: int):
        """Backward LEPP refinement: bisect terminal triangles until the
        requested element itself is bisected."""
        guard = 0
        while self.alive(eid):
            guard += 1
            if guard > 10000:
                raise MeshError("LEPP did not terminate")
            path = [eid]
            seen = {eid}
            while True:
                cur = path[-1]
                ecur = self.longest_edge(cur)
                nb = self.neighbour(cur, ecur)
                if nb is None:
                    self.events.append((cur,))
                    self.bisect(cur, ecur)
                    break
                if self.longest_edge(nb) == ecur:
                    self.events.append((cur, nb))
                    self.bisect(nb, ecur)
                    self.bisect(cur, ecur)
                    break
                if nb in seen:
                    raise MeshError("LEPP cycle detected")
                path.append(nb)
                seen.add(nb)

    def force_edge(self, key):
        """Refine until boundary edge ``key`` is bisected (periodic pairing)."""
        guard = 0
        while key not in self.midpoint:
            guard += 1
            if guard > 1000:
                raise MeshError("periodic edge forcing did not terminate")
            owners = [e for e in self.edge_map.get(key, ()) if self.alive(e)]
            if not owners:
                raise MeshError(f"periodic partner edge {key} not present in mesh")
            t = owners[0]
            if self.longest_edge(t) == key:
                self.events.append((t,))
                self.bisect(t, key)
            else:
                self.refine_element(t)

    def drain_pairs(self):
        while self.pair_queue:
            key = self.pair_queue.pop(0)
            if key not in self.midpoint:
                self.force_edge(key)

    def finish(self) -> Mesh:
        keep = [i for i, t in enumerate(self.elements) if t is not None]
        elements = np.array([self.elements[i] for i in keep], dtype=np.int64)
        generation = np.array([self.generation[i] for i in keep], dtype=np.int32)
        return Mesh(
            nodes=np.array(self.nodes),
            elements=elements,
            cell_size=self.l,
            generation=generation,
        )


def refine_lepp(
    mesh: Mesh,
    marked_elements,
    max_generation: int = 12,
    _trace: list | None = None,
) -> Mesh:
    """Bisect every marked element, propagating along longest-edge paths
    to keep the mesh conforming, and keep periodic boundaries paired.

    Returns a new mesh; the input is unchanged.
    """
    marked = np.atleast_1d(np.asarray(marked_elements, dtype=np.int64))
    if len(marked) == 0:
        raise ValueError("marked element set is empty")
    r = _Refiner(mesh, max_generation=max_generation)
    for eid in sorted(set(int(e) for e in marked)):
        if r.alive(eid):
            r.refine_element(eid)
        r.drain_pairs()
    out = r.finish()
    if np.any(out.signed_areas() <= 0):
        raise MeshError("refinement produced a degenerate element")
    if _trace is not None:
        _trace.extend(r.events)
    return out


def refine_to_interface(
    mesh: Mesh, network: Network, levels: int, max_generation: int = 12
) -> Mesh:
    """Repeatedly mark all INTERFACE elements and refine, ``levels`` times.

    Re-classifies after each pass so newly created elements at the fibre
    boundary are picked up by the next level.
    """
    if levels < 0:
        raise ValueError("levels must be non-negative")
    for _ in range(levels):
        cls = classify_elements(mesh, network)
        marked = cls.interface_elements()
        if len(marked) == 0:
            break
        mesh = refine_lepp(mesh, marked, max_generation=max_generation)
    return mesh
