"""Quadtree velocity-space meshes on the axisymmetric half-plane.

The domain is the rectangle [0, L] x [-L, L] in (r, z) velocity coordinates.
Meshes are forests of axis-aligned square-refinable cells: every cell is an
axis-aligned rectangle obtained from a coarse Cartesian base grid by isotropic
4-way splits.  A 2:1 edge-balance rule is enforced on every mesh, which keeps
non-conforming interfaces simple: the only constrained ("hanging") nodes are
fine-edge midpoints sitting at the 1/4 or 3/4 position of a coarser neighbour
edge, and their interpolation masters are always regular nodes.

Cells carry 3x3 biquadratic (Q2) node stencils.  Node identity is resolved on
an exact integer lattice (half-steps of the finest refinement level present),
so node deduplication never depends on floating-point comparisons and mesh
construction is bitwise deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "DomainSpec",
    "VelocityMesh",
    "cartesian_mesh",
    "refine",
    "adapt_for_species",
    "write_vtk",
    "mesh_stats",
]

# Local Q2 node ordering within a cell: index = 3*kz + kr with kr, kz in
# {0,1,2} running over the lower/mid/upper positions of each direction.
_CORNERS = (0, 2, 8, 6)  # counter-clockwise corner subset used for VTK quads

# 1D quadratic Lagrange weights (nodes at t = 0, 1/2, 1) at the two hanging
# positions on a coarse edge.
_HANG_W = {0.25: (0.375, 0.75, -0.125), 0.75: (-0.125, 0.75, 0.375)}


@dataclass(frozen=True)
class DomainSpec:
    """Axisymmetric velocity domain [0, L] x [-L, L]."""

    L: float = 2.0

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError(f"domain half-width must be positive, got L={self.L}")


@dataclass
class VelocityMesh:
    """An immutable 2:1-balanced quadtree mesh with Q2 nodes and constraints.

    Attributes
    ----------
    domain : DomainSpec
    base : (int, int)
        Base Cartesian grid shape (nr, nz) at refinement level 0.
    cells : (ncell, 3) int array
        Leaf cells as rows (level, ix, iy); ix/iy index the level-local grid.
        Rows are sorted by spatial position (z-major), so cell order is a
        deterministic function of the leaf set.
    origins, sizes : (ncell, 2) float arrays
        Lower corner (r0, z0) and extent (dr, dz) of each leaf.
    nodes : (nnode, 2) float array
        Deduplicated Q2 node coordinates.
    cell_nodes : (ncell, 9) int array
        Global node index of each local Q2 node.
    hanging : dict[int, tuple[np.ndarray, np.ndarray]]
        Constrained node -> (3 master node indices, 3 interpolation weights).
    free_nodes : (nfree,) int array
        Unconstrained node indices, in node order; these carry the dofs.
    node_to_free : (nnode,) int array
        Inverse map (-1 for hanging nodes).
    prolongation : (nnode, nfree) CSR matrix
        Expands a dof vector to all nodal values (identity on free nodes,
        interpolation weights on hanging ones).
    """

    domain: DomainSpec
    base: tuple[int, int]
    cells: np.ndarray
    origins: np.ndarray = field(repr=False)
    sizes: np.ndarray = field(repr=False)
    nodes: np.ndarray = field(repr=False)
    cell_nodes: np.ndarray = field(repr=False)
    hanging: dict = field(repr=False)
    free_nodes: np.ndarray = field(repr=False)
    node_to_free: np.ndarray = field(repr=False)
    prolongation: sp.csr_matrix = field(repr=False)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_free(self) -> int:
        return len(self.free_nodes)


def _cell_set(cells: np.ndarray) -> set:
    return {(int(l), int(i), int(j)) for l, i, j in cells}


def _covering_leaf(leafset: set, lvl: int, ix: int, iy: int):
    """Return the leaf (level <= lvl) whose area contains cell (lvl, ix, iy)."""
    l, i, j = lvl, ix, iy
    while l >= 0:
        if (l, i, j) in leafset:
            return (l, i, j)
        l, i, j = l - 1, i >> 1, j >> 1
    return None


def _neighbours(base, lvl, ix, iy):
    nr, nz = base
    w, h = nr << lvl, nz << lvl
    if ix > 0:
        yield lvl, ix - 1, iy
    if ix + 1 < w:
        yield lvl, ix + 1, iy
    if iy > 0:
        yield lvl, ix, iy - 1
    if iy + 1 < h:
        yield lvl, ix, iy + 1


def _build(domain: DomainSpec, base: tuple[int, int], leafset: set) -> VelocityMesh:
    nr0, nz0 = base
    cells = np.array(sorted(leafset), dtype=np.int64).reshape(-1, 3)
    lmax = int(cells[:, 0].max())

    # Canonical spatial order: lower corner on the finest lattice, z-major.
    shift = lmax - cells[:, 0]
    fx = cells[:, 1] << shift
    fy = cells[:, 2] << shift
    order = np.lexsort((fx, fy))
    cells = cells[order]
    lvl, ix, iy = cells[:, 0], cells[:, 1], cells[:, 2]

    L = domain.L
    hr, hz = L / nr0, 2.0 * L / nz0
    scale = (1 << (lmax - lvl)).astype(np.int64)  # cell width in finest units
    sizes = np.stack([hr * scale, hz * scale], axis=1) / (1 << lmax)
    origins = np.stack(
        [ix * scale * (hr / (1 << lmax)), -L + iy * scale * (hz / (1 << lmax))], axis=1
    )

    # Node lattice in half-steps of the finest cells.  For local offsets
    # k in {0,1,2}: lattice coord = (2*ix + k) * scale.
    k = np.arange(3)
    nx = (2 * ix[:, None, None] + k[None, None, :]) * scale[:, None, None]
    ny = (2 * iy[:, None, None] + k[None, :, None]) * scale[:, None, None]
    nx = np.broadcast_to(nx, (len(cells), 3, 3)).reshape(-1, 9)
    ny = np.broadcast_to(ny, (len(cells), 3, 3)).reshape(-1, 9)
    stride = np.int64(nz0) * (1 << (lmax + 1)) + 1
    keys = nx * stride + ny
    uniq, inverse = np.unique(keys, return_inverse=True)
    cell_nodes = inverse.reshape(-1, 9).astype(np.int64)
    unx, uny = uniq // stride, uniq % stride
    denom = float(1 << (lmax + 1))
    nodes = np.stack([unx * (hr / denom), -L + uny * (hz / denom)], axis=1)

    # Hanging-node detection: a leaf edge facing a coarser leaf contributes
    # its own edge-midpoint node, constrained by the coarse edge's trace.
    key_pos = {int(kv): p for p, kv in enumerate(uniq)}

    def node_key(cl, cix, ciy, kr, kz):
        s = 1 << (lmax - cl)
        return (2 * cix + kr) * s * stride + (2 * ciy + kz) * s

    hanging: dict = {}
    for cl, cix, ciy in leafset:
        if cl == 0:
            continue
        for direction in range(4):
            if direction == 0:  # +r edge
                njb = (cl, cix + 1, ciy)
                mine, coarse_kr, perp = 5, 0, ciy
            elif direction == 1:  # -r edge
                njb = (cl, cix - 1, ciy)
                mine, coarse_kr, perp = 3, 2, ciy
            elif direction == 2:  # +z edge
                njb = (cl, cix, ciy + 1)
                mine, coarse_kr, perp = 7, None, cix
            else:  # -z edge
                njb = (cl, cix, ciy - 1)
                mine, coarse_kr, perp = 1, None, cix
            nl, nix, niy = njb
            w, h = nr0 << cl, nz0 << cl
            if not (0 <= nix < w and 0 <= niy < h):
                continue
            if (nl, nix, niy) in leafset:
                continue
            parent = (cl - 1, nix >> 1, niy >> 1)
            if parent not in leafset:
                continue
            t = 0.25 if (perp & 1) == 0 else 0.75
            weights = _HANG_W[t]
            pl, pix, piy = parent
            if coarse_kr is not None:  # vertical shared edge, masters vary in z
                masters = [node_key(pl, pix, piy, coarse_kr, kz) for kz in range(3)]
            else:  # horizontal shared edge, masters vary in r
                kz = 0 if direction == 2 else 2
                masters = [node_key(pl, pix, piy, kr, kz) for kr in range(3)]
            # local edge midpoint of *this* cell
            kr_m, kz_m = mine % 3, mine // 3
            own = key_pos[node_key(cl, cix, ciy, kr_m, kz_m)]
            hanging[own] = (
                np.array([key_pos[m] for m in masters], dtype=np.int64),
                np.array(weights),
            )

    nnode = len(nodes)
    is_hanging = np.zeros(nnode, dtype=bool)
    if hanging:
        is_hanging[np.fromiter(hanging.keys(), dtype=np.int64)] = True
        for masters, _ in hanging.values():
            if is_hanging[masters].any():
                raise AssertionError("constraint master is itself hanging; balance broken")
    free_nodes = np.nonzero(~is_hanging)[0].astype(np.int64)
    node_to_free = np.full(nnode, -1, dtype=np.int64)
    node_to_free[free_nodes] = np.arange(len(free_nodes))

    rows, cols, vals = [free_nodes], [np.arange(len(free_nodes))], [np.ones(len(free_nodes))]
    for h, (masters, wts) in sorted(hanging.items()):
        rows.append(np.full(3, h, dtype=np.int64))
        cols.append(node_to_free[masters])
        vals.append(wts)
    P = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nnode, len(free_nodes)),
    )

    return VelocityMesh(
        domain=domain,
        base=(nr0, nz0),
        cells=cells,
        origins=origins,
        sizes=sizes,
        nodes=nodes,
        cell_nodes=cell_nodes,
        hanging=hanging,
        free_nodes=free_nodes,
        node_to_free=node_to_free,
        prolongation=P,
    )


def cartesian_mesh(domain: DomainSpec, nr: int, nz: int) -> VelocityMesh:
    """Uniform nr x nz Cartesian mesh of the domain (refinement level 0)."""
    if nr < 1 or nz < 1:
        raise ValueError(f"mesh shape must be at least 1x1, got {nr}x{nz}")
    leafset = {(0, i, j) for i in range(nr) for j in range(nz)}
    return _build(domain, (nr, nz), leafset)


def refine(mesh: VelocityMesh, marked) -> VelocityMesh:
    """Isotropically refine the marked leaf cells (by index into mesh.cells).

    Additional leaves are refined as needed to restore the 2:1 edge balance,
    so the returned mesh never puts cells differing by more than one level
    across an edge.  The input mesh is left untouched.
    """
    marked = np.atleast_1d(np.asarray(marked, dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.n_cells:
        raise ValueError("marked cell index out of range")
    leafset = _cell_set(mesh.cells)
    stack = [tuple(int(v) for v in mesh.cells[m]) for m in marked]
    to_split: set = set()
    while stack:
        cell = stack.pop()
        if cell in to_split:
            continue
        to_split.add(cell)
        lvl = cell[0]
        for nb in _neighbours(mesh.base, *cell):
            cover = _covering_leaf(leafset, *nb)
            if cover is not None and cover[0] < lvl and cover not in to_split:
                stack.append(cover)
    for lvl, ix, iy in to_split:
        leafset.discard((lvl, ix, iy))
        for dx in (0, 1):
            for dy in (0, 1):
                leafset.add((lvl + 1, 2 * ix + dx, 2 * iy + dy))
    return _build(mesh.domain, mesh.base, leafset)


def adapt_for_species(
    domain: DomainSpec,
    species,
    levels: int,
    base: tuple[int, int] = (4, 8),
    radius_decay: float = 3.0,
    m_ref: float = 1.0,
) -> VelocityMesh:
    """Geometrically refine around each species' thermal core.

    Round k (k = 1..levels) marks every leaf that intersects the disk of
    radius 3*sigma_a / radius_decay**(k-1) centred at (r=0, z=shift_a), for
    each species a, where sigma_a**2 = 2 T_a m_ref / m_a (masses in units
    of the reference mass, so m_ref defaults to 1).  Shrinking the disk
    each round concentrates resolution at the distribution cores, so a cold
    species keeps collecting refinement near its core for the full round
    budget while the warm background stops early.

    This marking rule is a geometric stand-in for solution-driven adaptivity;
    the schedule (base grid, rounds, decay) is part of the experiment
    configuration rather than a physics statement.
    """
    if levels < 0:
        raise ValueError("levels must be non-negative")
    mesh = cartesian_mesh(domain, *base)
    for k in range(levels):
        centers, radii = [], []
        for s in species:
            sigma = float(np.sqrt(2.0 * s.temperature * m_ref / s.mass))
            centers.append((0.0, s.shift))
            radii.append(3.0 * sigma / radius_decay**k)
        lo = mesh.origins
        hi = mesh.origins + mesh.sizes
        marked = np.zeros(mesh.n_cells, dtype=bool)
        for (cr, cz), rad in zip(centers, radii):
            dr = np.maximum(np.maximum(lo[:, 0] - cr, cr - hi[:, 0]), 0.0)
            dz = np.maximum(np.maximum(lo[:, 1] - cz, cz - hi[:, 1]), 0.0)
            marked |= dr * dr + dz * dz < rad * rad
        if not marked.any():
            break
        mesh = refine(mesh, np.nonzero(marked)[0])
    return mesh


def write_vtk(mesh: VelocityMesh, path, point_data: dict | None = None) -> None:
    """Dump the mesh (and optional per-node scalar fields) as legacy VTK."""
    lines = [
        "# vtk DataFile Version 3.0",
        "axisymmetric velocity mesh",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    for r, z in mesh.nodes:
        lines.append(f"{r:.16g} {z:.16g} 0")
    lines.append(f"CELLS {mesh.n_cells} {5 * mesh.n_cells}")
    corners = mesh.cell_nodes[:, _CORNERS]
    for quad in corners:
        lines.append("4 " + " ".join(str(int(i)) for i in quad))
    lines.append(f"CELL_TYPES {mesh.n_cells}")
    lines.extend(["9"] * mesh.n_cells)
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            values = np.asarray(values)
            if values.shape != (mesh.n_nodes,):
                raise ValueError(f"field {name!r} must have one value per node")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.16g}" for v in values)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def mesh_stats(mesh: VelocityMesh) -> str:
    """Plain-text mesh statistics: leaves, nodes, constraints, level histogram."""
    levels, counts = np.unique(mesh.cells[:, 0], return_counts=True)
    hist = ", ".join(f"L{l}: {c}" for l, c in zip(levels, counts))
    smin, smax = mesh.sizes.min(), mesh.sizes.max()
    return "\n".join(
        [
            f"domain: [0, {mesh.domain.L}] x [{-mesh.domain.L}, {mesh.domain.L}]"
            f"  base {mesh.base[0]}x{mesh.base[1]}",
            f"leaf cells: {mesh.n_cells}",
            f"nodes: {mesh.n_nodes} ({mesh.n_free} free, {len(mesh.hanging)} hanging)",
            f"levels: {hist}",
            f"cell extent: min {smin:.6g}, max {smax:.6g}",
            f"quadrature points (3x3 per cell): {9 * mesh.n_cells}",
        ]
    )
