"""Random periodic fibre network generation.

A network is a square periodic cell of side ``l`` filled with rectangular
fibres.  Fibre centroids are uniform on the cell, orientations follow a
wrapped Cauchy-type density controlled by an anisotropy parameter ``q``
(q = 0 is isotropic, q -> 1 aligns all fibres with the x axis).  Coverage
``c`` is the total fibre area divided by the cell area, overlaps counted
multiply.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Material",
    "Fibre",
    "Network",
    "sample_orientation",
    "generate_network",
    "coverage",
    "default_material",
]


@dataclass(frozen=True)
class Material:
    """Transversely isotropic plane-stress fibre material.

    Parameters
    ----------
    E_l, E_t : float
        Elastic moduli along and across the fibre axis.
    G_lt : float
        In-plane shear modulus.
    nu_lt, nu_tl : float
        In-plane Poisson ratios.  Symmetry of the stiffness requires
        ``E_l * nu_tl == E_t * nu_lt``.
    beta_l, beta_t : float
        Hygro-expansion coefficients (strain per unit moisture change)
        along and across the fibre axis.
    """

    E_l: float
    E_t: float
    G_lt: float
    nu_lt: float
    nu_tl: float
    beta_l: float
    beta_t: float

    def __post_init__(self):
        if self.E_l <= 0 or self.E_t <= 0 or self.G_lt <= 0:
            raise ValueError("elastic moduli must be positive")
        det = 1.0 - self.nu_lt * self.nu_tl
        if det <= 0:
            raise ValueError("1 - nu_lt*nu_tl must be positive")
        sym = abs(self.E_l * self.nu_tl - self.E_t * self.nu_lt)
        scale = max(abs(self.E_l * self.nu_tl), abs(self.E_t * self.nu_lt), 1e-300)
        if sym > 1e-12 * scale:
            raise ValueError(
                "stiffness symmetry violated: E_l*nu_tl != E_t*nu_lt "
                f"({self.E_l * self.nu_tl!r} vs {self.E_t * self.nu_lt!r})"
            )


def default_material(E_l: float = 1.0, beta_l: float = 1.0) -> Material:
    """Reference fibre material: E_t = E_l/4, G_lt = 0.1*E_l, nu_lt = 0.2,
    nu_tl = nu_lt/4, beta_t = 20*beta_l."""
    return Material(
        E_l=E_l,
        E_t=E_l / 4.0,
        G_lt=0.1 * E_l,
        nu_lt=0.2,
        nu_tl=0.05,
        beta_l=beta_l,
        beta_t=20.0 * beta_l,
    )


@dataclass(frozen=True)
class Fibre:
    """A rectangular fibre.

    ``theta`` is the angle between the fibre axis and the global x axis,
    restricted to (-pi/2, pi/2].  ``length`` is measured along the fibre
    axis, ``width`` across it; ``thickness`` is the out-of-plane depth.
    """

    centroid: tuple[float, float]
    theta: float
    length: float
    width: float
    thickness: float = 1.0
    material_id: int = 0

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0 or self.thickness <= 0:
            raise ValueError("fibre dimensions must be positive")
        if not (-math.pi / 2 < self.theta <= math.pi / 2):
            raise ValueError(f"theta {self.theta} outside (-pi/2, pi/2]")

    @property
    def area(self) -> float:
        return self.length * self.width

    def corners(self, shift=(0.0, 0.0)) -> np.ndarray:
        """Corner coordinates (4, 2), counter-clockwise, optionally translated."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        hl, hw = 0.5 * self.length, 0.5 * self.width
        local = np.array([[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.asarray(self.centroid) + np.asarray(shift)


@dataclass(frozen=True)
class Network:
    """Periodic unit cell of rectangular fibres."""

    cell_size: float
    fibres: tuple[Fibre, ...]
    q: float = 0.0
    seed: int | None = None
    coverage: float = field(default=0.0)

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if not (0.0 <= self.q < 1.0):
            raise ValueError(f"anisotropy q={self.q} outside [0, 1)")
        for f in self.fibres:
            x, y = f.centroid
            if not (0.0 <= x < self.cell_size and 0.0 <= y < self.cell_size):
                raise ValueError(f"fibre centroid {f.centroid} outside cell")
        c = coverage_of(self.cell_size, self.fibres)
        if self.coverage == 0.0 and self.fibres:
            object.__setattr__(self, "coverage", c)
        elif abs(c - self.coverage) > 1e-12 * max(1.0, c):
            raise ValueError(f"stored coverage {self.coverage} != computed {c}")

    @property
    def n_fibres(self) -> int:
        return len(self.fibres)

    def centroids(self) -> np.ndarray:
        return np.array([f.centroid for f in self.fibres], dtype=float).reshape(-1, 2)

    def thetas(self) -> np.ndarray:
        return np.array([f.theta for f in self.fibres], dtype=float)

    def to_json(self) -> str:
        doc = {
            "cell_size": self.cell_size,
            "q": self.q,
            "seed": self.seed,
            "coverage": self.coverage,
            "fibres": [
                {
                    "centroid": list(f.centroid),
                    "theta": f.theta,
                    "length": f.length,
                    "width": f.width,
                    "thickness": f.thickness,
                    "material": f.material_id,
                }
                for f in self.fibres
            ],
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "Network":
        doc = json.loads(text)
        fibres = tuple(
            Fibre(
                centroid=tuple(rec["centroid"]),
                theta=rec["theta"],
                length=rec["length"],
                width=rec["width"],
                thickness=rec.get("thickness", 1.0),
                material_id=rec.get("material", 0),
            )
            for rec in doc["fibres"]
        )
        return Network(
            cell_size=doc["cell_size"],
            fibres=fibres,
            q=doc.get("q", 0.0),
            seed=doc.get("seed"),
            coverage=doc.get("coverage", 0.0),
        )


def orientation_density(theta, q):
    """Orientation probability density on (-pi/2, pi/2)."""
    theta = np.asarray(theta, dtype=float)
    return (1.0 - q * q) / (np.pi * (1.0 + q * q - 2.0 * q * np.cos(2.0 * theta)))


def sample_orientation(q: float, u) -> np.ndarray | float:
    """Map a uniform variate ``u`` in (0, 1) to an orientation angle.

    Uses the closed-form inverse CDF
    ``theta = atan(((1-q)/(1+q)) * tan(pi*(u - 1/2)))``.

    Raises
    ------
    ValueError
        If ``q`` is outside [0, 1) or ``u`` outside (0, 1).
    """
    if not (0.0 <= q < 1.0):
        raise ValueError(f"anisotropy q={q} outside [0, 1)")
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr <= 0.0) or np.any(u_arr >= 1.0):
        raise ValueError("uniform variate u must lie strictly in (0, 1)")
    theta = np.arctan((1.0 - q) / (1.0 + q) * np.tan(np.pi * (u_arr - 0.5)))
    return float(theta) if np.isscalar(u) else theta


def coverage_of(cell_size: float, fibres) -> float:
    return sum(f.area for f in fibres) / cell_size**2


def coverage(network: Network) -> float:
    """Total fibre area over cell area, overlaps counted multiply."""
    return coverage_of(network.cell_size, network.fibres)


def fibre_count(cell_size, fibre_length, fibre_width, target_coverage):
    """Smallest n with n*l_f*w_f >= c*l**2, robust to rounding noise."""
    raw = target_coverage * cell_size**2 / (fibre_length * fibre_width)
    # guard against ulp overshoot of an exact integer (e.g. c*l**2 rational)
    return math.ceil(raw * (1.0 - 1e-12))


def generate_network(
    cell_size: float,
    fibre_length: float,
    fibre_width: float,
    target_coverage: float,
    q: float = 0.0,
    seed: int = 0,
    thickness: float = 1.0,
    material_id: int = 0,
) -> Network:
    """Generate a random periodic network of identical rectangular fibres.

    The fibre count is rounded up so the realized coverage is at least
    ``target_coverage``.  Draw order is fixed for seed portability: all
    centroids first (x, y interleaved), then all orientation variates.
    The generator is numpy's seeded PCG64.
    """
    if cell_size <= 0 or fibre_length <= 0 or fibre_width <= 0:
        raise ValueError("lengths must be positive")
    if target_coverage <= 0:
        raise ValueError("target_coverage must be positive")
    if not (0.0 <= q < 1.0):
        raise ValueError(f"anisotropy q={q} outside [0, 1)")

    n = fibre_count(cell_size, fibre_length, fibre_width, target_coverage)
    rng = np.random.default_rng(seed)
    centroids = rng.random((n, 2)) * cell_size
    u = rng.random(n)
    thetas = np.empty(n)
    ok = u > 0.0
    thetas[ok] = sample_orientation(q, u[ok])
    # u == 0 maps to -pi/2, identified with +pi/2 (antipodal direction)
    thetas[~ok] = math.pi / 2

    fibres = tuple(
        Fibre(
            centroid=(float(cx), float(cy)),
            theta=float(t),
            length=fibre_length,
            width=fibre_width,
            thickness=thickness,
            material_id=material_id,
        )
        for (cx, cy), t in zip(centroids, thetas)
    )
    return Network(cell_size=cell_size, fibres=fibres, q=q, seed=seed)
