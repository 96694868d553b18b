"""Simplicial meshes in 2D and 3D with conforming bisection refinement.

Cells are stored as ordered vertex tuples ``(x0, ..., xn)``.  The ordering
carries the bisection state: a cell of generation ``g`` has tag
``k = n - (g mod n)`` and its refinement edge is ``(x0, xk)``.  In 2D this is
newest-vertex bisection; in 3D it is Maubach's tagged bisection, which is
conforming and shape regular when started from a Kuhn triangulation.
"""
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations, permutations

import numpy as np


class MeshError(ValueError):
    pass


class RefinementError(RuntimeError):
    """Raised if the bisection closure fails to terminate."""


def _edge_keys(a, b, nv):
    lo = np.minimum(a, b).astype(np.int64)
    hi = np.maximum(a, b).astype(np.int64)
    return lo * nv + hi


def _signed_volume(verts):
    # verts: (..., n+1, n)
    n = verts.shape[-1]
    jac = verts[..., 1:, :] - verts[..., :1, :]
    fact = 2.0 if n == 2 else 6.0
    return np.linalg.det(jac) / fact


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable simplicial mesh.

    ``vertices`` is ``(nv, n)``, ``cells`` is ``(nc, n + 1)`` and
    ``generation`` is the per-cell refinement level.  Local facet ``j`` of a
    cell is the facet opposite its local vertex ``j``.
    """

    vertices: np.ndarray
    cells: np.ndarray
    generation: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        c = np.ascontiguousarray(self.cells, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise MeshError("vertices must be an (nv, 2) or (nv, 3) array")
        if c.ndim != 2 or c.shape[1] != v.shape[1] + 1:
            raise MeshError("cells must have n + 1 vertices each")
        if c.size and (c.min() < 0 or c.max() >= len(v)):
            raise MeshError("cell references a missing vertex")
        g = self.generation
        g = np.zeros(len(c), dtype=np.int64) if g is None else np.asarray(g, dtype=np.int64)
        v.setflags(write=False)
        c.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cells", c)
        object.__setattr__(self, "generation", g)
        if np.any(self.volumes <= 0.0):
            raise MeshError("degenerate cell")

    @property
    def dim(self):
        return self.vertices.shape[1]

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def num_facets(self):
        return len(self.facets)

    # ---- geometry -------------------------------------------------------

    @cached_property
    def cell_coords(self):
        return self.vertices[self.cells]

    @cached_property
    def signed_volumes(self):
        return _signed_volume(self.cell_coords)

    @cached_property
    def volumes(self):
        return np.abs(self.signed_volumes)

    @cached_property
    def orientation(self):
        """+1 for positively oriented cells, -1 otherwise."""
        return np.where(self.signed_volumes > 0, 1, -1)

    @cached_property
    def oriented_cells(self):
        """Cells with two vertices swapped where needed so every signed volume is positive."""
        c = self.cells.copy()
        neg = self.orientation < 0
        c[neg, 1], c[neg, 2] = self.cells[neg, 2], self.cells[neg, 1]
        return c

    @cached_property
    def centroids(self):
        return self.cell_coords.mean(axis=1)

    @cached_property
    def diameters(self):
        """h_T: largest vertex-to-vertex distance of every cell."""
        x = self.cell_coords
        d = [np.linalg.norm(x[:, a] - x[:, b], axis=1) for a, b in combinations(range(self.dim + 1), 2)]
        return np.max(d, axis=0)

    def cell_diameter(self, t):
        return float(self.diameters[t])

    @property
    def area(self):
        return float(self.volumes.sum())

    # ---- facet topology --------------------------------------------------

    @cached_property
    def _topology(self):
        n, nc, nv = self.dim, self.num_cells, self.num_vertices
        local = np.array([[k for k in range(n + 1) if k != j] for j in range(n + 1)])
        fv = np.sort(self.cells[:, local], axis=2).reshape(-1, n)
        key = fv[:, 0].astype(np.int64)
        for k in range(1, n):
            key = key * nv + fv[:, k]
        ukeys, first, inverse, counts = np.unique(key, return_index=True, return_inverse=True, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-manifold connectivity: facet shared by more than two cells")
        facets = fv[first]
        cell_to_facets = inverse.reshape(nc, n + 1)
        owner = np.repeat(np.arange(nc), n + 1)
        order = np.lexsort((owner, inverse))
        # sorted by facet, then cell index: first entry is the lower-indexed cell
        f_sorted, c_sorted = inverse[order], owner[order]
        starts = np.searchsorted(f_sorted, np.arange(len(ukeys)))
        f2c = np.full((len(ukeys), 2), -1, dtype=np.int64)
        f2c[:, 0] = c_sorted[starts]
        two = counts == 2
        f2c[two, 1] = c_sorted[starts[two] + 1]
        return facets, cell_to_facets, f2c

    @property
    def facets(self):
        return self._topology[0]

    @property
    def cell_to_facets(self):
        return self._topology[1]

    @property
    def facet_to_cells(self):
        return self._topology[2]

    @cached_property
    def boundary_facets(self):
        return np.flatnonzero(self.facet_to_cells[:, 1] < 0)

    @cached_property
    def interior_facets(self):
        return np.flatnonzero(self.facet_to_cells[:, 1] >= 0)

    @cached_property
    def facet_coords(self):
        return self.vertices[self.facets]

    @cached_property
    def facet_measures(self):
        x = self.facet_coords
        if self.dim == 2:
            return np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
        return 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)

    @cached_property
    def facet_diameters(self):
        x = self.facet_coords
        if self.dim == 2:
            return self.facet_measures
        d = [np.linalg.norm(x[:, a] - x[:, b], axis=1) for a, b in combinations(range(3), 2)]
        return np.max(d, axis=0)

    @cached_property
    def normals(self):
        """Unit facet normals pointing out of the lower-indexed incident cell."""
        x = self.facet_coords
        if self.dim == 2:
            t = x[:, 1] - x[:, 0]
            nrm = np.column_stack([t[:, 1], -t[:, 0]])
        else:
            nrm = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        nrm /= np.linalg.norm(nrm, axis=1)[:, None]
        away = x.mean(axis=1) - self.centroids[self.facet_to_cells[:, 0]]
        flip = np.einsum("ij,ij->i", nrm, away) < 0
        nrm[flip] *= -1.0
        return nrm

    @cached_property
    def facet_signs(self):
        """(nc, n + 1) array: +1 where the global facet normal points out of the cell."""
        own = self.facet_to_cells[self.cell_to_facets, 0]
        return np.where(own == np.arange(self.num_cells)[:, None], 1.0, -1.0)

    # ---- patches ---------------------------------------------------------

    @cached_property
    def _vertex_cells(self):
        flat = self.cells.ravel()
        owner = np.repeat(np.arange(self.num_cells), self.dim + 1)
        order = np.argsort(flat, kind="stable")
        ptr = np.zeros(self.num_vertices + 1, dtype=np.int64)
        np.add.at(ptr, flat + 1, 1)
        return np.cumsum(ptr), owner[order]

    def vertex_patch(self, z):
        """Indices of the cells that contain vertex ``z``."""
        if not 0 <= z < self.num_vertices:
            raise IndexError(f"vertex {z} out of range")
        ptr, cells = self._vertex_cells
        return cells[ptr[z]:ptr[z + 1]]

    @cached_property
    def patch_measures(self):
        meas = np.zeros(self.num_vertices)
        np.add.at(meas, self.cells.ravel(), np.repeat(self.volumes, self.dim + 1))
        return meas

    # ---- refinement ------------------------------------------------------

    @property
    def tags(self):
        n = self.dim
        return n - (self.generation % n)

    def refinement_edges(self):
        """(nc, 2) vertex indices of the edge each cell bisects next."""
        t = self.tags
        return np.column_stack([self.cells[:, 0], self.cells[np.arange(self.num_cells), t]])

    def refine(self, marked):
        return refine(self, marked)

    def uniform_refine(self):
        return uniform_refine(self)

    def check_conforming(self):
        """Raise MeshError unless every facet has one or two cells and no edge is hanging."""
        f2c = self.facet_to_cells
        n_inc = 2 * len(self.interior_facets) + len(self.boundary_facets)
        if n_inc != self.num_cells * (self.dim + 1):
            raise MeshError("facet incidence count mismatch")
        # a hanging node sits at the midpoint of some cell edge
        e = _cell_edges(self.cells)
        mid = 0.5 * (self.vertices[e[..., 0]] + self.vertices[e[..., 1]]).reshape(-1, self.dim)
        vs = {tuple(p) for p in self.vertices.tolist()}
        if any(tuple(p) in vs for p in mid.tolist()):
            raise MeshError("hanging vertex detected")
        return f2c is not None


def _cell_edges(cells):
    n1 = cells.shape[1]
    pairs = np.array(list(combinations(range(n1), 2)))
    return cells[:, pairs]


def _bisect(cells, gen, mids, n):
    """Split every cell into two children (Maubach ordering)."""
    k = n - (gen % n)
    rows = np.arange(len(cells))
    child1 = np.empty_like(cells)
    child2 = np.empty_like(cells)
    for kk in range(1, n + 1):
        sel = rows[k == kk]
        if not len(sel):
            continue
        c = cells[sel]
        z = mids[sel]
        # child1 = (x0, ..., x_{k-1}, z, x_{k+1}, ..., xn)
        c1 = c.copy()
        c1[:, kk] = z
        # child2 = (x1, ..., xk, z, x_{k+1}, ..., xn)
        c2 = np.concatenate([c[:, 1:kk + 1], z[:, None], c[:, kk + 1:]], axis=1)
        child1[sel] = c1
        child2[sel] = c2
    return child1, child2


def refine(mesh, marked, max_rounds=1000):
    """Bisect every marked cell at least once and close the mesh conformingly."""
    if not isinstance(marked, np.ndarray):
        marked = np.fromiter(marked, dtype=np.int64)
    marked = np.unique(marked.astype(np.int64))
    if marked.size and (marked[0] < 0 or marked[-1] >= mesh.num_cells):
        raise IndexError("marked cell index out of range")
    if not marked.size:
        return mesh
    n = mesh.dim
    verts = [mesh.vertices]
    nv0 = mesh.num_vertices
    key_base = np.int64(1 << 31)
    cells = mesh.cells.copy()
    gen = mesh.generation.copy()
    split_keys = np.empty(0, dtype=np.int64)
    split_mid = np.empty(0, dtype=np.int64)
    next_vid = nv0
    need = np.zeros(len(cells), dtype=bool)
    need[marked] = True
    for _ in range(max_rounds):
        if split_keys.size:
            e = _cell_edges(cells)
            ek = _edge_keys(e[..., 0], e[..., 1], key_base)
            need |= np.isin(ek, split_keys).any(axis=1)
        if not need.any():
            break
        k = n - (gen % n)
        rows = np.arange(len(cells))
        ra, rb = cells[:, 0], cells[rows, k]
        rkeys = _edge_keys(ra, rb, key_base)
        new = np.setdiff1d(rkeys[need], split_keys)
        if new.size:
            lo, hi = new // key_base, new % key_base
            allv = np.concatenate(verts) if len(verts) > 1 else verts[0]
            verts = [allv, 0.5 * (allv[lo] + allv[hi])]
            ids = np.arange(next_vid, next_vid + new.size)
            next_vid += new.size
            split_keys = np.concatenate([split_keys, new])
            split_mid = np.concatenate([split_mid, ids])
            order = np.argsort(split_keys)
            split_keys, split_mid = split_keys[order], split_mid[order]
        pos = np.searchsorted(split_keys, rkeys)
        pos = np.minimum(pos, len(split_keys) - 1)
        go = split_keys[pos] == rkeys
        mids = split_mid[pos[go]]
        c1, c2 = _bisect(cells[go], gen[go], mids, n)
        g = gen[go] + 1
        keep = ~go
        # children replace their parent in place to keep numbering local
        idx = np.flatnonzero(go)
        new_cells = np.empty((len(cells) + idx.size, n + 1), dtype=np.int64)
        new_gen = np.empty(len(cells) + idx.size, dtype=np.int64)
        slot = np.arange(len(cells)) + np.cumsum(go) - go
        new_cells[slot[keep]] = cells[keep]
        new_gen[slot[keep]] = gen[keep]
        new_cells[slot[idx]] = c1
        new_cells[slot[idx] + 1] = c2
        new_gen[slot[idx]] = g
        new_gen[slot[idx] + 1] = g
        cells, gen = new_cells, new_gen
        need = np.zeros(len(cells), dtype=bool)
    else:
        raise RefinementError("bisection closure did not terminate")
    allv = np.concatenate(verts) if len(verts) > 1 else verts[0]
    return Mesh(allv, cells, gen)


def uniform_refine(mesh):
    return refine(mesh, np.arange(mesh.num_cells))


# ---- presets ---------------------------------------------------------------


def facet_topology(mesh):
    """Populate facets, adjacency and normals; raises MeshError on non-manifold input."""
    mesh.normals
    mesh.facet_signs
    return mesh


def _kuhn_square(x0, y0):
    p00, p10, p01, p11 = (x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)
    return [(p00, p10, p11), (p00, p01, p11)]


def _kuhn_cube(x0, y0, z0):
    out = []
    base = np.array([x0, y0, z0], dtype=float)
    for perm in permutations(range(3)):
        p = base.copy()
        path = [tuple(p)]
        for ax in perm:
            p = p.copy()
            p[ax] += 1.0
            path.append(tuple(p))
        out.append(tuple(path))
    return out


def _from_simplices(simplices):
    index, verts, cells = {}, [], []
    for s in simplices:
        row = []
        for p in s:
            p = tuple(float(c) for c in p)
            if p not in index:
                index[p] = len(verts)
                verts.append(p)
            row.append(index[p])
        cells.append(row)
    return Mesh(np.array(verts), np.array(cells))


GEOMETRIES = {
    "unit_square": (2, lambda: _kuhn_square(0, 0)),
    "lshape2d": (2, lambda: _kuhn_square(0, -1) + _kuhn_square(0, 0) + _kuhn_square(-1, 0)),
    "unit_cube": (3, lambda: _kuhn_cube(0, 0, 0)),
    "lshape3d": (3, lambda: _kuhn_cube(0, -1, -1) + _kuhn_cube(0, -1, 0) + _kuhn_cube(-1, -1, 0)),
}


def preset_mesh(name, dim=None):
    """Coarse Kuhn triangulation of a named domain.

    ``lshape2d`` is (-1,1)^2 minus (-1,0)^2.  ``lshape3d`` is the prism
    (-1,1) x (-1,0) x (-1,1) minus (-1,0)^3, so its re-entrant edge is
    {x = 0, z = 0}.  It is the mirror image (y <-> z) of
    (-1,1)^2 x (-1,0) minus (-1,0)^3 and has the same spectrum.
    """
    try:
        gdim, build = GEOMETRIES[name]
    except KeyError:
        raise MeshError(f"unknown geometry {name!r}; choose from {sorted(GEOMETRIES)}") from None
    if dim is not None and dim != gdim:
        raise MeshError(f"geometry {name!r} is {gdim}-dimensional, not {dim}")
    return _from_simplices(build())


def min_angle(mesh):
    """Smallest interior angle (2D) or smallest solid-angle proxy (3D) over all cells, in radians.

    In 3D the returned value is the smallest dihedral angle.
    """
    x = mesh.cell_coords
    if mesh.dim == 2:
        angs = []
        for a in range(3):
            u = x[:, (a + 1) % 3] - x[:, a]
            v = x[:, (a + 2) % 3] - x[:, a]
            cosang = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angs.append(np.arccos(np.clip(cosang, -1, 1)))
        return float(np.min(angs))
    # dihedral angle along edge (a, b) between the faces (a, b, c) and (a, b, d)
    angs = []
    for a, b in combinations(range(4), 2):
        c, d = [k for k in range(4) if k not in (a, b)]
        e = x[:, b] - x[:, a]
        e /= np.linalg.norm(e, axis=1)[:, None]
        u = x[:, c] - x[:, a]
        w = x[:, d] - x[:, a]
        u -= np.einsum("ij,ij->i", u, e)[:, None] * e
        w -= np.einsum("ij,ij->i", w, e)[:, None] * e
        cosang = np.einsum("ij,ij->i", u, w) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
        angs.append(np.arccos(np.clip(cosang, -1, 1)))
    return float(np.min(angs))
