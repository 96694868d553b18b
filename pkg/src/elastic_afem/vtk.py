"""Legacy ASCII VTK (UNSTRUCTURED_GRID) output."""
import numpy as np

VTK_TRIANGLE = 5
VTK_TETRA = 10


def _write_array(fh, name, values):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        np.savetxt(fh, values[:, None], fmt="%.17g")
        return
    comps = values.shape[1]
    if comps < 3:
        values = np.hstack([values, np.zeros((len(values), 3 - comps))])
    fh.write(f"VECTORS {name} double\n")
    np.savetxt(fh, values, fmt="%.17g")


def write_vtk(path, mesh, cell_data=None, point_data=None, title="elastic_afem mesh"):
    """Write ``mesh`` with optional per-cell and per-vertex fields.

    Scalar fields are 1-D arrays; vector fields are (count, n) arrays and are
    padded to three components.
    """
    pts = mesh.vertices
    if mesh.dim == 2:
        pts = np.hstack([pts, np.zeros((len(pts), 1))])
    cells = mesh.oriented_cells
    ctype = VTK_TRIANGLE if mesh.dim == 2 else VTK_TETRA
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {len(pts)} double\n")
        np.savetxt(fh, pts, fmt="%.17g")
        nc, k = cells.shape
        fh.write(f"CELLS {nc} {nc * (k + 1)}\n")
        np.savetxt(fh, np.hstack([np.full((nc, 1), k), cells]), fmt="%d")
        fh.write(f"CELL_TYPES {nc}\n")
        np.savetxt(fh, np.full((nc, 1), ctype), fmt="%d")
        if cell_data:
            fh.write(f"CELL_DATA {nc}\n")
            for name, vals in cell_data.items():
                _write_array(fh, name, vals)
        if point_data:
            fh.write(f"POINT_DATA {len(pts)}\n")
            for name, vals in point_data.items():
                _write_array(fh, name, vals)


def read_vtk_cells(path):
    """Minimal reader for files written by :func:`write_vtk` (points and cells only)."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    i = next(k for k, ln in enumerate(lines) if ln.startswith("POINTS"))
    npts = int(lines[i].split()[1])
    pts = np.loadtxt(lines[i + 1:i + 1 + npts], ndmin=2)
    j = i + 1 + npts
    nc = int(lines[j].split()[1])
    cells = np.loadtxt(lines[j + 1:j + 1 + nc], dtype=np.int64, ndmin=2)[:, 1:]
    return pts, cells
