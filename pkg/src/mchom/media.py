"""High-contrast coefficient fields and continuum labelings."""

import numpy as np

from .grid import StructuredMesh

__all__ = [
    "MediumField",
    "crossed_field",
    "layered_field",
    "save_raster",
    "load_raster",
]


class MediumField:
    """Piecewise-constant coefficient plus a continuum label per triangle.

    Labels run from 1 to n_continua and partition the element set; the
    coefficient must be strictly positive everywhere.
    """

    def __init__(self, mesh: StructuredMesh, values, labels):
        values = np.asarray(values, dtype=float)
        labels = np.asarray(labels, dtype=np.int64)
        if values.shape != (mesh.n_triangles,) or labels.shape != (mesh.n_triangles,):
            raise ValueError("values and labels must be per-triangle arrays")
        if np.any(values <= 0.0):
            raise ValueError("coefficient must be strictly positive on every element")
        if labels.min() < 1:
            raise ValueError("continuum labels must start at 1")
        self.mesh = mesh
        self.values = values
        self.labels = labels
        self.n_continua = int(labels.max())

    @property
    def contrast(self):
        return float(self.values.max() / self.values.min())

    def characteristic(self, p: int) -> np.ndarray:
        """Indicator of continuum p as a per-element 0/1 array."""
        if not 1 <= p <= self.n_continua:
            raise ValueError(f"continuum index {p} out of range 1..{self.n_continua}")
        return (self.labels == p).astype(float)

    def continuum_area(self, p: int) -> float:
        return float(np.sum(self.mesh.areas * self.characteristic(p)))


def _check_blocks_mixed(mesh, labels, check_blocks):
    # Cell problems need every continuum in every coarse block; enforced
    # for the coarse sizes the solvers target, skipping grids too small
    # to resolve a block.
    for M in check_blocks:
        if mesh.nx % M or mesh.ny % M:
            continue
        sx, sy = mesh.nx // M, mesh.ny // M
        if sx * sy < 4:
            continue
        cell = np.arange(mesh.nx * mesh.ny)
        block = (cell // mesh.nx // sy) * M + (cell % mesh.nx) // sx
        tri_block = np.repeat(block, 2)
        for p in range(1, int(labels.max()) + 1):
            have = np.bincount(tri_block[labels == p], minlength=M * M) > 0
            if not have.all():
                b = int(np.flatnonzero(~have)[0])
                raise ValueError(
                    f"continuum {p} missing from coarse block {b} at M={M}; "
                    "adjust the geometry parameters"
                )


def _channel_mask(coords, period, width):
    frac = np.mod(coords, period)
    lo = 0.5 * (period - width)
    hi = 0.5 * (period + width)
    return (frac >= lo) & (frac < hi)


def crossed_field(
    mesh: StructuredMesh,
    period: float = 0.0125,
    width: float = 0.0025,
    value_background: float = 1e-4,
    value_channels: float = 1.0,
    check_blocks=(20, 40),
) -> MediumField:
    """Periodic lattice of crossing horizontal and vertical channels.

    Channels (continuum 2, coefficient ``value_channels``) are centered
    inside each period cell; the remainder is continuum 1 with
    ``value_background``.  Elements are classified by barycenter.  The
    default period divides both coarse sizes the solvers target, so
    every coarse block holds whole periods and is representative.
    """
    _validate_channel_params(mesh, period, width)
    bc = mesh.barycenters
    in_channel = _channel_mask(bc[:, 0], period, width) | _channel_mask(
        bc[:, 1], period, width
    )
    labels = np.where(in_channel, 2, 1)
    values = np.where(in_channel, value_channels, value_background)
    _check_blocks_mixed(mesh, labels, check_blocks)
    return MediumField(mesh, values, labels)


def layered_field(
    mesh: StructuredMesh,
    period: float = 0.0125,
    width: float = 0.0025,
    value_background: float = 1e-4,
    value_channels: float = 1.0,
    check_blocks=(20, 40),
) -> MediumField:
    """Periodic vertical stripes: continuum 2 on the stripes."""
    _validate_channel_params(mesh, period, width)
    bc = mesh.barycenters
    in_stripe = _channel_mask(bc[:, 0], period, width)
    labels = np.where(in_stripe, 2, 1)
    values = np.where(in_stripe, value_channels, value_background)
    _check_blocks_mixed(mesh, labels, check_blocks)
    return MediumField(mesh, values, labels)


def _validate_channel_params(mesh, period, width):
    if width <= 0 or period <= 0:
        raise ValueError("period and width must be positive")
    if width >= period:
        raise ValueError(f"width {width} must be smaller than period {period}")
    if width < min(mesh.hx, mesh.hy):
        raise ValueError(
            f"channel width {width} is below the fine cell size "
            f"{min(mesh.hx, mesh.hy)}; not resolvable"
        )


def save_raster(field: MediumField, path):
    """Write a per-cell `label value` raster; both triangles of a cell
    must agree, which holds for any cell-aligned field."""
    mesh = field.mesh
    lab = field.labels.reshape(-1, 2)
    val = field.values.reshape(-1, 2)
    if np.any(lab[:, 0] != lab[:, 1]) or np.any(val[:, 0] != val[:, 1]):
        raise ValueError("field is not cell-aligned; cannot rasterize")
    with open(path, "w") as fh:
        fh.write(f"{mesh.nx} {mesh.ny} {field.n_continua}\n")
        for p, v in zip(lab[:, 0], val[:, 0]):
            fh.write(f"{p} {v:.17g}\n")


def load_raster(path, mesh: StructuredMesh) -> MediumField:
    """Load a `label value` raster whose dimensions divide the mesh cells."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError(f"malformed raster header in {path}")
        rnx, rny, n_continua = (int(x) for x in header)
        rows = [line.split() for line in fh if line.strip()]
    if len(rows) != rnx * rny:
        raise ValueError(
            f"raster {path} has {len(rows)} records, expected {rnx * rny}"
        )
    if mesh.nx % rnx or mesh.ny % rny:
        raise ValueError(
            f"raster dimensions ({rnx}, {rny}) do not divide mesh cells "
            f"({mesh.nx}, {mesh.ny})"
        )
    rlab = np.array([int(r[0]) for r in rows], dtype=np.int64).reshape(rny, rnx)
    rval = np.array([float(r[1]) for r in rows]).reshape(rny, rnx)
    if np.any(rval <= 0):
        raise ValueError("raster coefficient values must be positive")
    if rlab.max() > n_continua or rlab.min() < 1:
        raise ValueError("raster labels out of declared continuum range")

    rep_x = mesh.nx // rnx
    rep_y = mesh.ny // rny
    cell_lab = np.repeat(np.repeat(rlab, rep_y, axis=0), rep_x, axis=1).ravel()
    cell_val = np.repeat(np.repeat(rval, rep_y, axis=0), rep_x, axis=1).ravel()
    return MediumField(mesh, np.repeat(cell_val, 2), np.repeat(cell_lab, 2))
