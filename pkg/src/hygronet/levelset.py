"""Implicit fibre geometry: signed distances and membership queries.

Each fibre is represented by the signed distance to its rectangle,
positive inside, zero on the boundary, negative outside.  Periodicity of
the unit cell is handled by taking the maximum over the nine lattice
translations of the fibre.  The network level set is the maximum over
all fibres.
"""

from __future__ import annotations

import math

import numpy as np

from .netgen import Fibre, Network

__all__ = [
    "fibre_signed_distance",
    "periodic_signed_distance",
    "network_levelset",
    "FibreIndex",
    "FibreSet",
]


def _rect_sdf(px, py, cx, cy, cos_t, sin_t, hl, hw, out=None):
    """Signed distance of points to rotated rectangles, elementwise.

    All arguments broadcast; positive inside, negative outside.
    """
    dx = px - cx
    dy = py - cy
    xi = np.abs(cos_t * dx + sin_t * dy) - hl
    eta = np.abs(-sin_t * dx + cos_t * dy) - hw
    ox = np.maximum(xi, 0.0)
    oy = np.maximum(eta, 0.0)
    outside = np.sqrt(ox * ox + oy * oy)
    inside = np.minimum(np.maximum(xi, eta), 0.0)
    res = -(outside + inside)
    if out is not None:
        out[...] = res
        return out
    return res


class FibreSet:
    """Array-of-struct view of a network's fibres for vectorized kernels."""

    def __init__(self, network: Network):
        self.cell_size = network.cell_size
        n = network.n_fibres
        self.centroids = network.centroids()
        thetas = network.thetas()
        self.cos = np.cos(thetas)
        self.sin = np.sin(thetas)
        self.half_len = np.array([0.5 * f.length for f in network.fibres])
        self.half_wid = np.array([0.5 * f.width for f in network.fibres])
        self.thickness = np.array([f.thickness for f in network.fibres])
        self.material_id = np.array([f.material_id for f in network.fibres], dtype=int)
        self.n = n
        l = network.cell_size
        self.shifts = np.array(
            [(ix * l, iy * l) for ix in (-1, 0, 1) for iy in (-1, 0, 1)]
        )

    def periodic_phi(self, points: np.ndarray, fibre_ids: np.ndarray) -> np.ndarray:
        """Periodic signed distance for paired (point, fibre) rows.

        points : (..., 2), fibre_ids broadcastable to points[..., 0].
        """
        px = points[..., 0]
        py = points[..., 1]
        cx = self.centroids[fibre_ids, 0]
        cy = self.centroids[fibre_ids, 1]
        ct = self.cos[fibre_ids]
        st = self.sin[fibre_ids]
        hl = self.half_len[fibre_ids]
        hw = self.half_wid[fibre_ids]
        best = np.full(np.broadcast_shapes(px.shape, cx.shape), -np.inf)
        for sx, sy in self.shifts:
            np.maximum(
                best,
                _rect_sdf(px, py, cx + sx, cy + sy, ct, st, hl, hw),
                out=best,
            )
        return best


def fibre_signed_distance(fibre: Fibre, point) -> np.ndarray | float:
    """Exact signed distance from ``point`` to the fibre rectangle.

    Positive inside, negative outside, zero on the boundary.  ``point``
    may be a single (x, y) pair or an (..., 2) array.
    """
    p = np.asarray(point, dtype=float)
    scalar = p.ndim == 1
    phi = _rect_sdf(
        p[..., 0],
        p[..., 1],
        fibre.centroid[0],
        fibre.centroid[1],
        math.cos(fibre.theta),
        math.sin(fibre.theta),
        0.5 * fibre.length,
        0.5 * fibre.width,
    )
    return float(phi) if scalar else phi


def periodic_signed_distance(fibre: Fibre, point, cell_size: float):
    """Signed distance to the fibre on the periodic cell.

    Maximum of :func:`fibre_signed_distance` over the nine lattice
    translations of the fibre by (-l, 0, +l) in each direction.
    """
    p = np.asarray(point, dtype=float)
    scalar = p.ndim == 1
    best = np.full(p[..., 0].shape, -np.inf)
    cos_t, sin_t = math.cos(fibre.theta), math.sin(fibre.theta)
    for ix in (-1, 0, 1):
        for iy in (-1, 0, 1):
            phi = _rect_sdf(
                p[..., 0],
                p[..., 1],
                fibre.centroid[0] + ix * cell_size,
                fibre.centroid[1] + iy * cell_size,
                cos_t,
                sin_t,
                0.5 * fibre.length,
                0.5 * fibre.width,
            )
            best = np.maximum(best, phi)
    return float(best) if scalar else best


class FibreIndex:
    """Uniform bucket grid over the cell mapping regions to candidate fibres.

    Buckets are sized at half the longest fibre; each fibre is registered
    in every bucket its nine periodic images (bounding box inflated by one
    bucket diagonal) can touch.  Queries return conservative supersets.
    """

    def __init__(self, network: Network, bucket_size: float | None = None):
        l = network.cell_size
        if network.n_fibres == 0:
            self.n_buckets = 1
            self.bucket_size = l
            self._buckets = {}
            self.cell_size = l
            return
        if bucket_size is None:
            bucket_size = max(f.length for f in network.fibres) / 2.0
        bucket_size = min(bucket_size, l)
        self.n_buckets = max(1, int(math.ceil(l / bucket_size)))
        self.bucket_size = l / self.n_buckets
        self.cell_size = l
        self._buckets: dict[tuple[int, int], list[int]] = {}
        inflate = self.bucket_size * math.sqrt(2.0)
        for idx, f in enumerate(network.fibres):
            for ix in (-1, 0, 1):
                for iy in (-1, 0, 1):
                    corners = f.corners(shift=(ix * l, iy * l))
                    xmin, ymin = corners.min(axis=0) - inflate
                    xmax, ymax = corners.max(axis=0) + inflate
                    self._register(idx, xmin, xmax, ymin, ymax)
        for key in self._buckets:
            self._buckets[key] = sorted(set(self._buckets[key]))

    def _register(self, idx, xmin, xmax, ymin, ymax):
        b = self.bucket_size
        i0 = max(0, int(math.floor(xmin / b)))
        i1 = min(self.n_buckets - 1, int(math.floor(xmax / b)))
        j0 = max(0, int(math.floor(ymin / b)))
        j1 = min(self.n_buckets - 1, int(math.floor(ymax / b)))
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                self._buckets.setdefault((i, j), []).append(idx)

    def candidates_for_box(self, xmin, xmax, ymin, ymax) -> np.ndarray:
        b = self.bucket_size
        i0 = max(0, min(self.n_buckets - 1, int(math.floor(xmin / b))))
        i1 = max(0, min(self.n_buckets - 1, int(math.floor(xmax / b))))
        j0 = max(0, min(self.n_buckets - 1, int(math.floor(ymin / b))))
        j1 = max(0, min(self.n_buckets - 1, int(math.floor(ymax / b))))
        out: set[int] = set()
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                out.update(self._buckets.get((i, j), ()))
        return np.fromiter(sorted(out), dtype=int, count=len(out))

    def candidates_for_point(self, point) -> np.ndarray:
        x, y = float(point[0]), float(point[1])
        return self.candidates_for_box(x, x, y, y)


def network_levelset(network: Network, point, index: FibreIndex | None = None):
    """Combined level set at ``point``: (psi, member fibre ids).

    ``psi`` is the maximum periodic signed distance over all fibres;
    members are the fibres with non-negative distance (bond regions list
    every overlapping fibre).
    """
    candidates = (
        index.candidates_for_point(point)
        if index is not None
        else np.arange(network.n_fibres)
    )
    psi = -np.inf
    members = []
    for i in candidates:
        phi = periodic_signed_distance(network.fibres[i], point, network.cell_size)
        if phi >= 0.0:
            members.append(int(i))
        psi = max(psi, phi)
    return psi, members
