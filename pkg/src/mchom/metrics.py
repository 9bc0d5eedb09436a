"""Cell-averaged error norms and text exports."""

import logging

import numpy as np

log = logging.getLogger("mchom.metrics")

__all__ = [
    "block_continuum_average",
    "block_average_coarse",
    "relative_error",
    "error_table",
    "export_table",
    "read_table",
    "export_field",
    "read_field",
    "export_field_vtk",
]


def block_continuum_average(u, part, medium, i):
    """Masked mean of a fine nodal field over continuum i of each block.

    Returns (averages, valid): blocks with an empty intersection are
    flagged invalid and must be excluded consistently by callers.
    """
    mesh = part.mesh
    sel = medium.labels == i
    tri_int = mesh.areas * u[mesh.triangles].mean(axis=1)
    num = np.bincount(part.tri_block[sel], weights=tri_int[sel], minlength=part.n_blocks)
    den = np.bincount(
        part.tri_block[sel], weights=mesh.areas[sel], minlength=part.n_blocks
    )
    valid = den > 0
    if not valid.all():
        log.warning(
            "continuum %d absent from %d blocks; excluded from averages",
            i,
            int((~valid).sum()),
        )
    out = np.zeros(part.n_blocks)
    out[valid] = num[valid] / den[valid]
    return out, valid


def block_average_coarse(U, part):
    """Mean of a coarse P1 nodal field over each block, (1/|K|) int_K U."""
    cm = part.coarse_mesh
    tri_int = cm.areas * U[cm.triangles].mean(axis=1)
    tri_block = np.repeat(np.arange(part.n_blocks), 2)
    total = np.bincount(tri_block, weights=tri_int, minlength=part.n_blocks)
    area = np.bincount(tri_block, weights=cm.areas, minlength=part.n_blocks)
    return total / area


def relative_error(U_i, u_fine, part, medium, i):
    """Cell-averaged relative L2 mismatch of continuum i, in percent."""
    coarse = block_average_coarse(U_i, part)
    fine, valid = block_continuum_average(u_fine, part, medium, i)
    den = np.sum(fine[valid] ** 2)
    if den == 0.0:
        raise ZeroDivisionError(
            f"reference averages of continuum {i} vanish; error undefined"
        )
    num = np.sum((coarse[valid] - fine[valid]) ** 2)
    return 100.0 * np.sqrt(num / den)


def error_table(macro_traj, fine_traj, part, medium, times=None):
    """Rows (t, e_1, ..., e_N) in percent at the requested times."""
    if times is None:
        times = [t for t in macro_traj.times if t > 0]
    N = macro_traj.n_continua
    rows = []
    for t in times:
        U = macro_traj[t]
        u = fine_traj[t]
        rows.append(
            (t, *[relative_error(U[i - 1], u, part, medium, i) for i in range(1, N + 1)])
        )
    return rows


def export_table(path, rows, n_continua=2):
    """Comma-separated error table with four-decimal percentages."""
    with open(path, "w") as fh:
        fh.write("# mchom table v1\n")
        fh.write("t," + ",".join(f"e{i}_percent" for i in range(1, n_continua + 1)))
        fh.write("\n")
        for row in rows:
            t, errs = row[0], row[1:]
            fh.write(f"{t:g}," + ",".join(f"{e:.4f}" for e in errs) + "\n")


def read_table(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if not ln.startswith("#")]
    rows = []
    for ln in lines[1:]:
        vals = ln.split(",")
        rows.append((float(vals[0]), *[float(v) for v in vals[1:]]))
    return rows


def export_field(path, values, nx, ny):
    """Nodal scalar field on a structured grid, row-major, full precision."""
    values = np.asarray(values, dtype=float)
    if values.size != (nx + 1) * (ny + 1):
        raise ValueError(
            f"field has {values.size} values, grid wants {(nx + 1) * (ny + 1)}"
        )
    with open(path, "w") as fh:
        fh.write("# mchom field v1\n")
        fh.write(f"{nx} {ny}\n")
        for v in values.ravel():
            fh.write(f"{v:.17g}\n")


def read_field(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    nx, ny = (int(x) for x in lines[0].split())
    vals = np.array([float(x) for x in lines[1:]])
    if vals.size != (nx + 1) * (ny + 1):
        raise ValueError(f"field file {path} is truncated")
    return vals, nx, ny


def export_field_vtk(path, values, mesh):
    """Legacy-VTK ASCII export of a nodal field for visualization tools."""
    values = np.asarray(values, dtype=float)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("mchom field\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for x, y in mesh.nodes:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        fh.write(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}\n")
        for tri in mesh.triangles:
            fh.write(f"3 {tri[0]} {tri[1]} {tri[2]}\n")
        fh.write(f"CELL_TYPES {mesh.n_triangles}\n")
        fh.write("\n".join(["5"] * mesh.n_triangles) + "\n")
        fh.write(f"POINT_DATA {mesh.n_nodes}\nSCALARS u double 1\n")
        fh.write("LOOKUP_TABLE default\n")
        for v in values:
            fh.write(f"{v:.17g}\n")
