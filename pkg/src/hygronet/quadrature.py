"""Fibre-occupied areas per finite element.

Elements cut by a fibre boundary are integrated by recursive bisection
along the longest edge: a sub-triangle entirely inside the fibre
contributes its area, one entirely outside contributes nothing, and the
recursion bottoms out at a fraction ``tol_frac`` of the parent element
area, where a cut leaf counts fully if its centroid lies inside.

Coverage entries below ``eps_area`` times the element area are discarded;
such slivers carry noise-level stiffness and destabilize the solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .levelset import FibreSet
from .mesh import (
    PAIR_FULL,
    PAIR_PARTIAL,
    ElementClassification,
    Mesh,
    classify_elements,
)
from .netgen import Fibre, Network

__all__ = [
    "ElementCoverage",
    "fibre_area_in_triangle",
    "element_coverage",
    "DEFAULT_TOL_FRAC",
    "DEFAULT_EPS_AREA",
]

DEFAULT_TOL_FRAC = 1.0 / 1024.0
DEFAULT_EPS_AREA = 0.025


@dataclass
class ElementCoverage:
    """Flat table of (element, fibre, area) coverage entries.

    ``entry_elem``, ``entry_fibre``, ``entry_area`` are parallel arrays;
    every element may appear any number of times, once per fibre with
    non-negligible occupied area.
    """

    entry_elem: np.ndarray
    entry_fibre: np.ndarray
    entry_area: np.ndarray
    tol_frac: float
    eps_area: float
    n_elements: int
    _by_elem: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if np.any(self.entry_area < 0.0):
            raise ValueError("negative coverage area")

    @property
    def n_entries(self) -> int:
        return len(self.entry_area)

    def total_area(self) -> float:
        return float(self.entry_area.sum())

    def fibre_total(self, fibre_id: int) -> float:
        return float(self.entry_area[self.entry_fibre == fibre_id].sum())

    def for_element(self, eid: int) -> list[tuple[int, float]]:
        if not self._by_elem:
            order = np.argsort(self.entry_elem, kind="stable")
            for k in order:
                self._by_elem.setdefault(int(self.entry_elem[k]), []).append(
                    (int(self.entry_fibre[k]), float(self.entry_area[k]))
                )
        return self._by_elem.get(eid, [])

    def covered_elements(self) -> np.ndarray:
        return np.unique(self.entry_elem)


def _tri_areas(tris: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(
        (tris[:, 1, 0] - tris[:, 0, 0]) * (tris[:, 2, 1] - tris[:, 0, 1])
        - (tris[:, 2, 0] - tris[:, 0, 0]) * (tris[:, 1, 1] - tris[:, 0, 1])
    )


def _recursive_areas(
    tris: np.ndarray,
    fibre_ids: np.ndarray,
    row_of_pair: np.ndarray,
    fs: FibreSet,
    tol_areas: np.ndarray,
    n_rows: int,
    max_depth: int = 40,
) -> np.ndarray:
    """Vectorized bisection recursion over many (triangle, fibre) rows.

    tris : (R, 3, 2) root triangles, fibre_ids (R,), row_of_pair (R,)
    accumulation slots, tol_areas (R,) absolute stop areas per row.
    """
    acc = np.zeros(n_rows)
    for _ in range(max_depth):
        if len(tris) == 0:
            return acc
        areas = _tri_areas(tris)
        phiv = fs.periodic_phi(tris, fibre_ids[:, None])  # (R, 3)
        full = phiv.min(axis=1) >= 0.0
        empty = phiv.max(axis=1) < 0.0
        cents = tris.mean(axis=1)
        phic = fs.periodic_phi(cents, fibre_ids)
        empty &= phic < 0.0
        at_floor = areas <= tol_areas
        leaf_in = at_floor & ~full & ~empty & (phic >= 0.0)
        take = full | leaf_in
        if np.any(take):
            np.add.at(acc, row_of_pair[take], areas[take])
        recurse = ~take & ~empty & ~at_floor
        if not np.any(recurse):
            return acc
        tris = tris[recurse]
        fibre_ids = fibre_ids[recurse]
        row_of_pair = row_of_pair[recurse]
        tol_areas = tol_areas[recurse]
        # split along the longest edge; ties resolved by first index
        d0 = tris[:, 1] - tris[:, 2]
        d1 = tris[:, 2] - tris[:, 0]
        d2 = tris[:, 0] - tris[:, 1]
        ln = np.column_stack(
            [(d0 * d0).sum(1), (d1 * d1).sum(1), (d2 * d2).sum(1)]
        )
        k = ln.argmax(axis=1)
        idx = np.arange(len(tris))
        i = (k + 1) % 3
        j = (k + 2) % 3
        vo = tris[idx, k]
        vi = tris[idx, i]
        vj = tris[idx, j]
        vm = 0.5 * (vi + vj)
        child1 = np.stack([vo, vi, vm], axis=1)
        child2 = np.stack([vo, vm, vj], axis=1)
        tris = np.concatenate([child1, child2])
        fibre_ids = np.concatenate([fibre_ids, fibre_ids])
        row_of_pair = np.concatenate([row_of_pair, row_of_pair])
        tol_areas = np.concatenate([tol_areas, tol_areas])
    raise RuntimeError("sub-triangulation did not reach the area floor")


def fibre_area_in_triangle(
    fibre: Fibre,
    triangle: np.ndarray,
    tol_frac: float = DEFAULT_TOL_FRAC,
    cell_size: float | None = None,
) -> float:
    """Area of ``triangle`` occupied by ``fibre``.

    ``triangle`` is a (3, 2) vertex array.  With ``cell_size`` given the
    fibre is taken periodic on that cell; otherwise it is a plain
    rectangle.  The recursion floor is ``tol_frac`` times the triangle
    area (1/1024 by default, ten bisection generations).
    """
    triangle = np.asarray(triangle, dtype=float).reshape(1, 3, 2)
    area = float(_tri_areas(triangle)[0])
    if area <= 0.0:
        raise ValueError("triangle must have positive area")
    if not 0.0 < tol_frac < 1.0:
        raise ValueError("tol_frac must lie in (0, 1)")
    if cell_size is None:
        # a cell large enough that periodic images never reach the triangle
        span = max(
            np.abs(triangle).max(),
            abs(fibre.centroid[0]) + fibre.length + fibre.width,
            abs(fibre.centroid[1]) + fibre.length + fibre.width,
        )
        cell_size = 16.0 * span + 1.0
    net = _single_fibre_network(fibre, cell_size)
    fs = FibreSet(net)
    return float(
        _recursive_areas(
            triangle,
            np.zeros(1, dtype=int),
            np.zeros(1, dtype=int),
            fs,
            np.array([tol_frac * area]),
            1,
        )[0]
    )


def _single_fibre_network(fibre: Fibre, cell_size: float) -> Network:
    # wrap the centroid into the cell so Network validation passes; the
    # periodic images restore the original placement
    x = fibre.centroid[0] % cell_size
    y = fibre.centroid[1] % cell_size
    moved = Fibre(
        centroid=(x, y),
        theta=fibre.theta,
        length=fibre.length,
        width=fibre.width,
        thickness=fibre.thickness,
        material_id=fibre.material_id,
    )
    return Network(cell_size=cell_size, fibres=(moved,))


def element_coverage(
    mesh: Mesh,
    network: Network,
    tol_frac: float = DEFAULT_TOL_FRAC,
    eps_area: float = DEFAULT_EPS_AREA,
    classification: ElementClassification | None = None,
    mode: str = "subdivision",
) -> ElementCoverage:
    """Occupied area of every fibre in every element.

    ``mode="subdivision"`` runs the recursive bisection on cut elements;
    fully covered elements contribute their whole area directly.
    ``mode="centroid"`` is the degraded non-conforming scheme: a fibre
    claims the whole element iff the element centroid lies inside it.
    """
    if mode not in ("subdivision", "centroid"):
        raise ValueError(f"unknown coverage mode {mode!r}")
    if not 0.0 < tol_frac < 1.0:
        raise ValueError("tol_frac must lie in (0, 1)")
    if classification is None:
        classification = classify_elements(mesh, network)
    areas = mesh.areas()
    pe = classification.pair_elem
    pf = classification.pair_fibre
    state = classification.pair_state

    if network.n_fibres == 0 or len(pe) == 0:
        empty = np.empty(0, dtype=np.int64)
        return ElementCoverage(
            entry_elem=empty,
            entry_fibre=empty.copy(),
            entry_area=np.empty(0),
            tol_frac=tol_frac,
            eps_area=eps_area,
            n_elements=mesh.n_elements,
        )

    fs = FibreSet(network)
    if mode == "centroid":
        cents = mesh.centroids()[pe]
        phic = fs.periodic_phi(cents, pf)
        keep = phic >= 0.0
        return ElementCoverage(
            entry_elem=pe[keep],
            entry_fibre=pf[keep],
            entry_area=areas[pe[keep]],
            tol_frac=tol_frac,
            eps_area=eps_area,
            n_elements=mesh.n_elements,
        )

    full = state == PAIR_FULL
    partial = state == PAIR_PARTIAL
    entry_elem = [pe[full]]
    entry_fibre = [pf[full]]
    entry_area = [areas[pe[full]]]

    if np.any(partial):
        rows_e = pe[partial]
        rows_f = pf[partial]
        tris = mesh.nodes[mesh.elements[rows_e]]
        tol_areas = tol_frac * areas[rows_e]
        got = _recursive_areas(
            tris,
            rows_f,
            np.arange(len(rows_e)),
            fs,
            tol_areas,
            len(rows_e),
        )
        keep = got >= eps_area * areas[rows_e]
        entry_elem.append(rows_e[keep])
        entry_fibre.append(rows_f[keep])
        entry_area.append(got[keep])

    ee = np.concatenate(entry_elem)
    ef = np.concatenate(entry_fibre)
    ea = np.concatenate(entry_area)
    order = np.lexsort((ef, ee))
    return ElementCoverage(
        entry_elem=ee[order],
        entry_fibre=ef[order],
        entry_area=ea[order],
        tol_frac=tol_frac,
        eps_area=eps_area,
        n_elements=mesh.n_elements,
    )
