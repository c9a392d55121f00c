"""Finite element assembly and solution on the periodic cell.

Displacements are decomposed as ``u(x) = eps_bar . x + w(x)`` with ``w``
periodic: node pairs on opposite cell boundaries share degrees of
freedom and the macroscopic strain ``eps_bar`` (Voigt, engineering
shear) enters as three extra unknowns.  Element stiffness and the
hygroscopic load follow the constant-strain triangle weighted by the
fibre-occupied areas from quadrature; overlapping fibres superpose.

Free swelling leaves the macro unknowns unloaded (zero average stress);
a macroscopic stress case loads them with ``sigma_bar * l**2`` per unit
depth and zero moisture change.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .mesh import Mesh
from .netgen import Material, Network
from .quadrature import ElementCoverage

__all__ = [
    "LoadCase",
    "ConstitutiveGlobal",
    "LinearSystem",
    "SolveResult",
    "AssemblyError",
    "SingularSystemError",
    "constitutive_global",
    "element_contrib",
    "assemble",
    "pin_floating_components",
    "solve",
    "fibre_bond_components",
]

ZERO_DIAG_REL = 1e-12
ROTATION_NULL_REL = 1e-8


class AssemblyError(RuntimeError):
    pass


class SingularSystemError(AssemblyError):
    pass


class LoadCase(Enum):
    FREE_SWELLING = "free_swelling"
    MACRO_STRESS = "macro_stress"


def local_stiffness(material: Material) -> np.ndarray:
    """Plane-stress stiffness in the fibre frame (Voigt)."""
    det = 1.0 - material.nu_lt * material.nu_tl
    return np.array(
        [
            [material.E_l / det, material.E_l * material.nu_tl / det, 0.0],
            [material.E_t * material.nu_lt / det, material.E_t / det, 0.0],
            [0.0, 0.0, material.G_lt],
        ]
    )


def _stress_rotation(theta: float) -> np.ndarray:
    """Voigt stress transformation global -> frame rotated by +theta."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [c * c, s * s, 2.0 * c * s],
            [s * s, c * c, -2.0 * c * s],
            [-c * s, c * s, c * c - s * s],
        ]
    )


@dataclass(frozen=True)
class ConstitutiveGlobal:
    """Stiffness and hygro-expansivity of one fibre in the global frame."""

    D: np.ndarray
    beta: np.ndarray


def constitutive_global(material: Material, theta: float) -> ConstitutiveGlobal:
    """Rotate the fibre constitutive law into the global frame.

    The expansivity keeps engineering shear: at 45 degrees a fibre with
    beta = (b_l, b_t) expands by ((b_l+b_t)/2, (b_l+b_t)/2) with shear
    b_l - b_t.
    """
    D_local = local_stiffness(material)
    beta_local = np.array([material.beta_l, material.beta_t, 0.0])
    T_inv = _stress_rotation(-theta)
    D = T_inv @ D_local @ T_inv.T
    beta = _stress_rotation(theta).T @ beta_local
    D = 0.5 * (D + D.T)
    return ConstitutiveGlobal(D=D, beta=beta)


def cst_b_matrix(triangle_nodes: np.ndarray) -> tuple[np.ndarray, float]:
    """Strain-displacement matrix (3, 6) and area of a linear triangle."""
    p = np.asarray(triangle_nodes, dtype=float)
    x1, y1 = p[0]
    x2, y2 = p[1]
    x3, y3 = p[2]
    det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
    area = 0.5 * det
    if area <= 0.0:
        raise ValueError("triangle must be counter-clockwise with positive area")
    B = (
        np.array(
            [
                [y2 - y3, 0.0, y3 - y1, 0.0, y1 - y2, 0.0],
                [0.0, x3 - x2, 0.0, x1 - x3, 0.0, x2 - x1],
                [x3 - x2, y2 - y3, x1 - x3, y3 - y1, x2 - x1, y1 - y2],
            ]
        )
        / det
    )
    return B, area


def element_contrib(triangle_nodes, coverage_entries, delta_chi: float):
    """Stiffness (6, 6) and hygroscopic load (6,) of one element.

    ``coverage_entries`` is an iterable of
    ``(constitutive, occupied_area, thickness)`` triples, one per fibre
    present in the element.  An empty iterable yields zero contributions.
    """
    B, _ = cst_b_matrix(triangle_nodes)
    K = np.zeros((6, 6))
    f = np.zeros(6)
    for cg, area, thickness in coverage_entries:
        w = area * thickness
        K += w * (B.T @ cg.D @ B)
        f += w * delta_chi * (B.T @ cg.D @ cg.beta)
    return K, f


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass
class LinearSystem:
    """Assembled periodic system, with context for recovery.

    The stiffness includes three macroscopic strain unknowns appended
    after the nodal fluctuation DOFs; periodic node pairs share DOFs.
    """

    K: sp.csr_matrix
    f: np.ndarray
    dof_of_node: np.ndarray  # (n_nodes, 2) shared DOF ids
    macro_dofs: np.ndarray  # (3,)
    active: np.ndarray  # (ndof,) bool: nonzero stiffness
    mesh: Mesh = field(repr=False, default=None)
    coverage: ElementCoverage = field(repr=False, default=None)
    network: Network = field(repr=False, default=None)
    fibre_D: np.ndarray = field(repr=False, default=None)  # (n_fibres, 3, 3)
    fibre_beta: np.ndarray = field(repr=False, default=None)  # (n_fibres, 3)
    delta_chi: float = 0.0
    load_case: LoadCase = LoadCase.FREE_SWELLING
    pinned: list = field(default_factory=list)
    component_of_node: np.ndarray = field(repr=False, default=None)
    n_components: int = 0

    @property
    def ndof(self) -> int:
        return self.K.shape[0]

    def symmetry_error(self) -> float:
        d = self.K - self.K.T
        if d.nnz == 0:
            return 0.0
        return float(np.abs(d.data).max())


@dataclass
class SolveResult:
    """Solution fields on the periodic cell."""

    w: np.ndarray  # (n_nodes, 2) fluctuation displacements
    eps_bar: np.ndarray  # (3,) macroscopic strain, engineering shear
    element_strain: np.ndarray  # (n_elements, 3) total strain
    stress: np.ndarray  # (n_entries, 3) per coverage entry
    residual: float
    u: np.ndarray = field(repr=False, default=None)  # raw DOF vector
    system: LinearSystem = field(repr=False, default=None)

    def energy(self) -> float:
        return float(0.5 * self.u @ (self.system.K @ self.u) - self.u @ self.system.f)

    def total_displacement(self, magnification: float = 1.0) -> np.ndarray:
        """Node positions displaced by eps_bar . x + w, magnified."""
        x = self.system.mesh.nodes
        exx, eyy, gxy = self.eps_bar
        affine = np.column_stack(
            [exx * x[:, 0] + 0.5 * gxy * x[:, 1], 0.5 * gxy * x[:, 0] + eyy * x[:, 1]]
        )
        return x + magnification * (affine + self.w)


def _shared_dofs(mesh: Mesh) -> tuple[np.ndarray, int]:
    """Map nodes to shared DOF pairs (periodic pairs collapse)."""
    uf = _UnionFind(mesh.n_nodes)
    pairs_x, pairs_y = mesh.periodic_pairs()
    for a, b in pairs_x.items():
        uf.union(a, b)
    for a, b in pairs_y.items():
        uf.union(a, b)
    root = np.fromiter((uf.find(i) for i in range(mesh.n_nodes)), dtype=np.int64)
    uniq, rep_index = np.unique(root, return_inverse=True)
    dof = np.column_stack([2 * rep_index, 2 * rep_index + 1]).astype(np.int64)
    return dof, 2 * len(uniq)


def assemble(
    mesh: Mesh,
    coverage: ElementCoverage,
    network: Network,
    materials: list[Material],
    delta_chi: float = 1.0,
    load_case: LoadCase = LoadCase.FREE_SWELLING,
    macro_stress=None,
) -> LinearSystem:
    """Build the periodic stiffness and load for the given coverage.

    For ``LoadCase.MACRO_STRESS`` the moisture change is zero and
    ``macro_stress`` (Voigt stress, engineering-conjugate) loads the
    macroscopic DOFs with ``sigma * l**2`` per unit depth.
    """
    if load_case == LoadCase.MACRO_STRESS:
        if macro_stress is None:
            raise ValueError("macro_stress is required for MACRO_STRESS")
        delta_chi = 0.0
        macro_stress = np.asarray(macro_stress, dtype=float)
        if macro_stress.shape != (3,):
            raise ValueError("macro_stress must be a Voigt 3-vector")
    elif macro_stress is not None:
        raise ValueError("macro_stress only applies to MACRO_STRESS")

    n_fib = network.n_fibres
    fibre_D = np.zeros((n_fib, 3, 3))
    fibre_beta = np.zeros((n_fib, 3))
    for i, fib in enumerate(network.fibres):
        cg = constitutive_global(materials[fib.material_id], fib.theta)
        fibre_D[i] = cg.D
        fibre_beta[i] = cg.beta
    thickness = np.array([f.thickness for f in network.fibres]) if n_fib else np.zeros(0)

    dof_of_node, n_wdof = _shared_dofs(mesh)
    ndof = n_wdof + 3
    macro_dofs = np.arange(n_wdof, ndof)

    # per-element area-weighted constitutive sums
    m = mesh.n_elements
    Dsum = np.zeros((m, 3, 3))
    DbSum = np.zeros((m, 3))
    if coverage.n_entries:
        wts = coverage.entry_area * thickness[coverage.entry_fibre]
        np.add.at(
            Dsum, coverage.entry_elem, wts[:, None, None] * fibre_D[coverage.entry_fibre]
        )
        Db = np.einsum("kij,kj->ki", fibre_D[coverage.entry_fibre],
                       fibre_beta[coverage.entry_fibre])
        np.add.at(DbSum, coverage.entry_elem, wts[:, None] * Db)

    # vectorized CST B matrices
    p = mesh.nodes[mesh.elements]
    x1, y1 = p[:, 0, 0], p[:, 0, 1]
    x2, y2 = p[:, 1, 0], p[:, 1, 1]
    x3, y3 = p[:, 2, 0], p[:, 2, 1]
    det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
    if np.any(det <= 0):
        raise AssemblyError("mesh contains non-positive element areas")
    B = np.zeros((m, 3, 6))
    B[:, 0, 0] = y2 - y3
    B[:, 0, 2] = y3 - y1
    B[:, 0, 4] = y1 - y2
    B[:, 1, 1] = x3 - x2
    B[:, 1, 3] = x1 - x3
    B[:, 1, 5] = x2 - x1
    B[:, 2, 0] = x3 - x2
    B[:, 2, 1] = y2 - y3
    B[:, 2, 2] = x1 - x3
    B[:, 2, 3] = y3 - y1
    B[:, 2, 4] = x2 - x1
    B[:, 2, 5] = y1 - y2
    B /= det[:, None, None]

    K_ww = np.einsum("mji,mjk,mkl->mil", B, Dsum, B)  # (m, 6, 6)
    K_wm = np.einsum("mji,mjk->mik", B, Dsum)  # (m, 6, 3)
    K_mm = Dsum.sum(axis=0)  # (3, 3)
    f_w = delta_chi * np.einsum("mji,mj->mi", B, DbSum)  # (m, 6)
    f_m = delta_chi * DbSum.sum(axis=0)

    edofs = np.empty((m, 6), dtype=np.int64)
    edofs[:, 0::2] = dof_of_node[mesh.elements, 0]
    edofs[:, 1::2] = dof_of_node[mesh.elements, 1]

    rows = [np.repeat(edofs, 6, axis=1).ravel()]
    cols = [np.tile(edofs, (1, 6)).ravel()]
    vals = [K_ww.ravel()]
    rows.append(np.repeat(edofs, 3, axis=1).ravel())
    cols.append(np.tile(macro_dofs, (m, 6)).ravel())
    vals.append(K_wm.ravel())
    rows.append(np.tile(macro_dofs, (m, 6)).ravel())
    cols.append(np.repeat(edofs, 3, axis=1).ravel())
    vals.append(K_wm.ravel())
    mm_r, mm_c = np.meshgrid(macro_dofs, macro_dofs, indexing="ij")
    rows.append(mm_r.ravel())
    cols.append(mm_c.ravel())
    vals.append(K_mm.ravel())

    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ndof, ndof),
    ).tocsr()

    f = np.zeros(ndof)
    np.add.at(f, edofs.ravel(), f_w.ravel())
    f[macro_dofs] += f_m
    if load_case == LoadCase.MACRO_STRESS:
        f[macro_dofs] += macro_stress * mesh.cell_size**2

    diag = K.diagonal()
    dmax = diag.max() if ndof else 0.0
    if dmax <= 0.0:
        raise AssemblyError("empty stiffness: no fibre coverage in the cell")
    active = diag >= ZERO_DIAG_REL * dmax
    active[macro_dofs] = True

    return LinearSystem(
        K=K,
        f=f,
        dof_of_node=dof_of_node,
        macro_dofs=macro_dofs,
        active=active,
        mesh=mesh,
        coverage=coverage,
        network=network,
        fibre_D=fibre_D,
        fibre_beta=fibre_beta,
        delta_chi=delta_chi,
        load_case=load_case,
    )


def fibre_bond_components(network: Network) -> np.ndarray:
    """Component label per fibre of the bond graph.

    Fibres are adjacent when their rectangles overlap, periodic images
    included.  Exact separating-axis test on the rotated rectangles.
    """
    n = network.n_fibres
    uf = _UnionFind(n)
    l = network.cell_size
    corners = [f.corners() for f in network.fibres]
    shifts = [
        (ix * l, iy * l) for ix in (-1, 0, 1) for iy in (-1, 0, 1)
    ]
    for i in range(n):
        ci = corners[i]
        for j in range(i + 1, n):
            hit = False
            for s in shifts:
                if _rects_overlap(ci, corners[j] + np.asarray(s)):
                    hit = True
                    break
            if hit:
                uf.union(i, j)
    roots = np.fromiter((uf.find(i) for i in range(n)), dtype=np.int64, count=n)
    _, labels = np.unique(roots, return_inverse=True)
    return labels


def _rects_overlap(ca: np.ndarray, cb: np.ndarray) -> bool:
    """Separating axis test for two convex quadrilaterals (closed sets)."""
    for quad in (ca, cb):
        for k in range(4):
            edge = quad[(k + 1) % 4] - quad[k]
            axis = np.array([-edge[1], edge[0]])
            pa = ca @ axis
            pb = cb @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def pin_floating_components(system: LinearSystem, network: Network, mesh: Mesh):
    """Remove rigid-body modes of every connected piece of the structure.

    Connectivity is taken from the assembled stiffness graph (fibre
    clusters sharing mesh nodes are mechanically one piece).  Each
    component gets one node pinned in both directions; if a rigid
    rotation about that node is still a null mode of the component (the
    piece does not wrap around the periodic cell), the transverse DOF of
    its farthest node is pinned too.
    """
    K = system.K
    nw = len(system.f) - 3
    act_w = system.active.copy()
    act_w[system.macro_dofs] = False
    idx = np.where(act_w)[0]
    if len(idx) == 0:
        raise AssemblyError("no active DOFs to pin")
    sub = K[idx][:, idx]
    n_comp, labels = csgraph.connected_components(sub, directed=False)

    comp_of_dof = np.full(len(system.f), -1, dtype=np.int64)
    comp_of_dof[idx] = labels
    # both DOFs of a node belong together
    node_dofs = system.dof_of_node
    comp_of_node = np.full(mesh.n_nodes, -1, dtype=np.int64)
    for axis in (0, 1):
        labs = comp_of_dof[node_dofs[:, axis]]
        take = (comp_of_node == -1) & (labs >= 0)
        comp_of_node[take] = labs[take]

    kmax = K.diagonal().max()
    centre = np.array([mesh.cell_size / 2.0] * 2)
    pinned: list[int] = []

    # anchor component: the one owning the active node nearest the centre
    active_nodes = np.where(comp_of_node >= 0)[0]
    d_centre = np.linalg.norm(mesh.nodes[active_nodes] - centre, axis=1)
    anchor_node = int(active_nodes[np.argmin(d_centre)])
    anchor_comp = int(comp_of_node[anchor_node])

    for comp in range(n_comp):
        nodes = np.where(comp_of_node == comp)[0]
        comp_dofs = np.unique(node_dofs[nodes].ravel())
        comp_dofs = comp_dofs[system.active[comp_dofs]]
        if len(nodes) < 2:
            warnings.warn(
                f"component {comp} has fewer than 2 active nodes; "
                "its contribution is dropped"
            )
            pinned.extend(int(d) for d in comp_dofs)
            continue
        if comp == anchor_comp:
            pin_node = anchor_node
        else:
            mean = mesh.nodes[nodes].mean(axis=0)
            pin_node = int(nodes[np.argmin(np.linalg.norm(mesh.nodes[nodes] - mean, axis=1))])
        for d in node_dofs[pin_node]:
            if system.active[d]:
                pinned.append(int(d))
        # rotation about the pinned node: null mode unless the component
        # wraps around the periodic cell
        r = np.zeros(len(system.f))
        rel = mesh.nodes[nodes] - mesh.nodes[pin_node]
        r[node_dofs[nodes, 0]] = -rel[:, 1]
        r[node_dofs[nodes, 1]] = rel[:, 0]
        r[~system.active] = 0.0
        rnorm = np.abs(r).max()
        if rnorm == 0.0:
            continue
        resid = np.abs(K @ r)[comp_dofs].max() if len(comp_dofs) else 0.0
        if resid <= ROTATION_NULL_REL * kmax * rnorm:
            far = nodes[np.argmax(np.linalg.norm(rel, axis=1))]
            dx, dy = mesh.nodes[far] - mesh.nodes[pin_node]
            axis = 1 if abs(dx) >= abs(dy) else 0
            d = int(node_dofs[far, axis])
            if system.active[d]:
                pinned.append(d)

    system.pinned = sorted(set(pinned))
    system.component_of_node = comp_of_node
    system.n_components = n_comp
    return system


def solve(system: LinearSystem, prescribed_macro=None) -> SolveResult:
    """Factor and solve the reduced system, then recover fields.

    ``prescribed_macro`` fixes the macroscopic strain (Voigt) instead of
    leaving it as unknowns; the natural condition otherwise is zero
    average stress (free swelling) or the applied macro load.
    """
    ndof = system.ndof
    act = system.active.copy()
    if system.pinned:
        act[np.asarray(system.pinned, dtype=np.int64)] = False

    u = np.zeros(ndof)
    if prescribed_macro is not None:
        prescribed_macro = np.asarray(prescribed_macro, dtype=float)
        act[system.macro_dofs] = False
        u[system.macro_dofs] = prescribed_macro

    idx = np.where(act)[0]
    K_red = system.K[idx][:, idx].tocsc()
    rhs = system.f[idx]
    if prescribed_macro is not None:
        rhs = rhs - system.K[idx][:, system.macro_dofs] @ prescribed_macro

    try:
        lu = spla.splu(K_red)
    except RuntimeError as exc:
        raise SingularSystemError(f"singular system: {exc}") from exc
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        pivots = np.abs(lu.U.diagonal())
        worst = int(idx[np.argmin(pivots)])
        raise SingularSystemError(f"singular system: smallest pivot at DOF {worst}")

    scale = max(np.linalg.norm(rhs), 1e-300)
    resid = np.linalg.norm(K_red @ x - rhs) / scale
    if resid > 1e-12:
        x += lu.solve(rhs - K_red @ x)  # one step of iterative refinement
        resid = np.linalg.norm(K_red @ x - rhs) / scale
    if resid > 1e-10 and np.linalg.norm(rhs) > 0.0:
        raise SingularSystemError(f"solve residual {resid:.3e} exceeds 1e-10")

    u[idx] = x
    eps_bar = u[system.macro_dofs].copy()

    mesh = system.mesh
    w = u[system.dof_of_node]  # (n_nodes, 2)

    p = mesh.nodes[mesh.elements]
    x1, y1 = p[:, 0, 0], p[:, 0, 1]
    x2, y2 = p[:, 1, 0], p[:, 1, 1]
    x3, y3 = p[:, 2, 0], p[:, 2, 1]
    det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
    we = w[mesh.elements]  # (m, 3, 2)
    exx = (
        (y2 - y3) * we[:, 0, 0] + (y3 - y1) * we[:, 1, 0] + (y1 - y2) * we[:, 2, 0]
    ) / det
    eyy = (
        (x3 - x2) * we[:, 0, 1] + (x1 - x3) * we[:, 1, 1] + (x2 - x1) * we[:, 2, 1]
    ) / det
    gxy = (
        (x3 - x2) * we[:, 0, 0]
        + (y2 - y3) * we[:, 0, 1]
        + (x1 - x3) * we[:, 1, 0]
        + (y3 - y1) * we[:, 1, 1]
        + (x2 - x1) * we[:, 2, 0]
        + (y1 - y2) * we[:, 2, 1]
    ) / det
    strain = np.column_stack([exx, eyy, gxy]) + eps_bar

    cov = system.coverage
    if cov.n_entries:
        eps_e = strain[cov.entry_elem]
        beta = system.fibre_beta[cov.entry_fibre]
        D = system.fibre_D[cov.entry_fibre]
        stress = np.einsum("kij,kj->ki", D, eps_e - system.delta_chi * beta)
    else:
        stress = np.zeros((0, 3))

    return SolveResult(
        w=w,
        eps_bar=eps_bar,
        element_strain=strain,
        stress=stress,
        residual=float(resid),
        u=u,
        system=system,
    )
