"""Stage orchestration: artifacts on disk, resumable full runs.

Artifact names embed a digest of the configuration slice each stage
depends on, so identical configs reuse identical files and a `full` run
can resume after any completed stage.
"""

import hashlib
import json
import logging
import os

import numpy as np

from . import cells, macro, media, metrics, upscale
from .config import make_scalar_field, make_source, source_is_static
from .fine import run_fine
from .grid import build_coarse_partition, build_fine_mesh

log = logging.getLogger("mchom.pipeline")

__all__ = [
    "medium_digest",
    "stage_generate_media",
    "stage_solve_fine",
    "stage_upscale",
    "stage_solve_macro",
    "stage_compare",
    "stage_zero_order",
    "run_full",
    "dump_cell_basis",
]


def _digest(payload) -> str:
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def medium_digest(cfg):
    return _digest({"medium": cfg.medium, "nx": cfg.nx, "ny": cfg.ny})


def _fine_digest(cfg):
    return _digest(
        {
            "medium": cfg.medium,
            "nx": cfg.nx,
            "ny": cfg.ny,
            "orders": list(cfg.orders),
            "tau": cfg.tau,
            "T": cfg.T,
            "source": cfg.source,
            "initial": cfg.initial,
            "velocity": cfg.velocity,
            "bc": cfg.bc,
        }
    )


def _macro_digest(cfg):
    return _digest(
        {
            "fine": _fine_digest(cfg),
            "M": cfg.M,
            "layers": cfg.effective_layers(),
        }
    )


def build_geometry(cfg):
    mesh = build_fine_mesh(cfg.nx, cfg.ny)
    part = build_coarse_partition(mesh, cfg.M)
    return mesh, part


def build_medium(cfg, mesh):
    spec = cfg.medium
    kind = spec["kind"]
    kwargs = {
        k: spec[k]
        for k in ("period", "width", "value_background", "value_channels")
        if k in spec
    }
    if kind == "crossed":
        return media.crossed_field(mesh, **kwargs)
    if kind == "layered":
        return media.layered_field(mesh, **kwargs)
    return media.load_raster(spec["path"], mesh)


def stage_generate_media(cfg, mesh=None):
    mesh = mesh or build_fine_mesh(cfg.nx, cfg.ny)
    medium = build_medium(cfg, mesh)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"medium_{medium_digest(cfg)}.raster")
    if not os.path.exists(path):
        media.save_raster(medium, path)
        log.info("wrote %s", path)
    return medium, path


def stage_solve_fine(cfg, mesh, medium, force=False):
    """Fine snapshots on disk, one field file per stored time."""
    tag = _fine_digest(cfg)
    outdir = os.path.join(cfg.out, f"fine_{tag}")
    times = (0.0,) + cfg.snapshot_times()
    paths = {t: os.path.join(outdir, f"t{t:.4f}.field") for t in times}
    if not force and all(os.path.exists(p) for p in paths.values()):
        log.info("fine snapshots present in %s; skipping solve", outdir)
        fields = {t: metrics.read_field(p)[0] for t, p in paths.items()}
        return fields, outdir
    traj = run_fine(
        mesh,
        medium,
        orders=cfg.orders,
        tau=cfg.tau,
        n_steps=cfg.n_steps,
        source=make_source(cfg.source),
        u0=make_scalar_field(cfg.initial),
        velocity=make_scalar_field(cfg.velocity),
        bc=cfg.bc,
        snapshots=cfg.snapshot_times(),
    )
    os.makedirs(outdir, exist_ok=True)
    for t, p in paths.items():
        metrics.export_field(p, traj[t], cfg.nx, cfg.ny)
    log.info("wrote %d fine snapshots to %s", len(paths), outdir)
    return {t: traj[t] for t in times}, outdir


def stage_upscale(cfg, mesh, part, medium, force=False):
    """Cell problems plus effective tensors; columnar file on disk."""
    layers = cfg.effective_layers()
    path = os.path.join(
        cfg.out, f"eff_{medium_digest(cfg)}_M{cfg.M}_l{layers}.txt"
    )
    if not force and os.path.exists(path):
        log.info("effective blocks present at %s; skipping cells", path)
        eff, _ = upscale.read_effective_blocks(path)
        return eff, path
    families = cells.solve_all_blocks(part, medium, layers, jobs=cfg.jobs)
    eff = upscale.upscale_all(part, medium, families)
    os.makedirs(cfg.out, exist_ok=True)
    upscale.write_effective_blocks(
        path, eff, cfg.M, layers, source=lambda pts: make_source(cfg.source)(pts, 0.0)
    )
    log.info("wrote %s", path)
    return eff, path


def _load_arguments(cfg, eff):
    """Prefer the consistent fine-quadrature load; blocks read from file
    carry only static per-block moments, so fall back to those."""
    first = eff[sorted(eff)[0]]
    if first.load_pts is not None:
        return {"source": make_source(cfg.source)}
    if not source_is_static(cfg.source):
        raise ValueError(
            "time-dependent source needs in-memory effective blocks; "
            "rerun the upscale stage in the same invocation"
        )
    return {"moments": np.vstack([eff[b].static_moments for b in sorted(eff)])}


def stage_solve_macro(cfg, part, medium, eff, force=False):
    tag = _macro_digest(cfg)
    outdir = os.path.join(cfg.out, f"macro_{tag}")
    N = eff[0].n_continua
    times = (0.0,) + cfg.snapshot_times()
    paths = {
        (t, i): os.path.join(outdir, f"t{t:.4f}_U{i}.field")
        for t in times
        for i in range(1, N + 1)
    }
    if not force and all(os.path.exists(p) for p in paths.values()):
        log.info("macro snapshots present in %s; skipping solve", outdir)
        fields = {
            t: np.vstack([metrics.read_field(paths[(t, i)])[0] for i in range(1, N + 1)])
            for t in times
        }
        return fields, outdir

    u0 = make_scalar_field(cfg.initial)
    psi = make_scalar_field(cfg.velocity)
    u0_fine = u0(part.mesh.nodes) if u0 else None
    psi_fine = psi(part.mesh.nodes) if psi else None
    U0, Psi0 = macro.macro_initial_conditions(part, medium, u0_fine, psi_fine)
    traj = macro.run_macro(
        part,
        eff,
        orders=cfg.orders,
        tau=cfg.tau,
        n_steps=cfg.n_steps,
        bc=cfg.bc,
        snapshots=cfg.snapshot_times(),
        U0=U0,
        Psi0=Psi0,
        **_load_arguments(cfg, eff),
    )
    os.makedirs(outdir, exist_ok=True)
    for (t, i), p in paths.items():
        metrics.export_field(p, traj[t][i - 1], cfg.M, cfg.M)
    log.info("wrote macro snapshots to %s", outdir)
    return {t: traj[t] for t in times}, outdir


def stage_compare(cfg, part, medium, fine_fields=None, macro_fields=None):
    """Error table from stored snapshots; never recomputes solutions."""
    if fine_fields is None:
        fine_dir = os.path.join(cfg.out, f"fine_{_fine_digest(cfg)}")
        fine_fields = _read_snapshots(fine_dir, cfg)
    if macro_fields is None:
        macro_dir = os.path.join(cfg.out, f"macro_{_macro_digest(cfg)}")
        macro_fields = _read_macro_snapshots(macro_dir, cfg, medium.n_continua)
    rows = []
    for t in cfg.snapshot_times():
        U = macro_fields[t]
        u = fine_fields[t]
        errs = [
            metrics.relative_error(U[i - 1], u, part, medium, i)
            for i in range(1, medium.n_continua + 1)
        ]
        rows.append((t, *errs))
    path = os.path.join(cfg.out, f"errors_{_macro_digest(cfg)}.csv")
    metrics.export_table(path, rows, n_continua=medium.n_continua)
    log.info("wrote %s", path)
    return rows, path


def _read_snapshots(outdir, cfg):
    times = (0.0,) + cfg.snapshot_times()
    out = {}
    for t in times:
        p = os.path.join(outdir, f"t{t:.4f}.field")
        if not os.path.exists(p):
            raise FileNotFoundError(
                f"missing fine snapshot {p}; run the fine stage first"
            )
        out[t] = metrics.read_field(p)[0]
    return out


def _read_macro_snapshots(outdir, cfg, N):
    times = (0.0,) + cfg.snapshot_times()
    out = {}
    for t in times:
        cols = []
        for i in range(1, N + 1):
            p = os.path.join(outdir, f"t{t:.4f}_U{i}.field")
            if not os.path.exists(p):
                raise FileNotFoundError(
                    f"missing macro snapshot {p}; run the macro stage first"
                )
            cols.append(metrics.read_field(p)[0])
        out[t] = np.vstack(cols)
    return out


def stage_zero_order(cfg):
    """Decoupled reaction-only coarse model plus its scalar-march oracle."""
    mesh, part = build_geometry(cfg)
    medium = build_medium(cfg, mesh)
    zo = cfg.zero_order or {}
    if "A_background" in zo or "A_channels" in zo:
        values = np.where(
            medium.labels == 2,
            float(zo.get("A_channels", 1e4)),
            float(zo.get("A_background", 1.0)),
        )
        medium = media.MediumField(mesh, values, medium.labels)
    orders = tuple(zo.get("orders", cfg.orders))
    source = make_source(cfg.source)
    static = lambda pts: source(pts, 0.0)

    blocks = upscale.zero_order_all(part, medium, source=static)
    sol = macro.run_zero_order(
        blocks, orders=orders, tau=cfg.tau, n_steps=cfg.n_steps
    )

    # independent reference for piecewise-constant A: per continuum,
    # d^alpha U + A_i U = masked block mean of f
    ids = sorted(blocks)
    N = medium.n_continua
    ref = np.empty_like(sol)
    from .caputo import solve_scalar_ode

    fbar_field = static(mesh.barycenters)
    for i in range(1, N + 1):
        sel = medium.labels == i
        area = np.bincount(part.tri_block[sel], weights=mesh.areas[sel],
                           minlength=part.n_blocks)
        favg = np.bincount(
            part.tri_block[sel],
            weights=mesh.areas[sel] * fbar_field[sel],
            minlength=part.n_blocks,
        ) / area
        A_i = np.array([medium.values[part.block_tris[b]][
            medium.labels[part.block_tris[b]] == i][0] for b in ids])
        alpha = orders[i - 1] if len(orders) > 1 else orders[0]
        ref[:, :, i - 1] = solve_scalar_ode(
            [(1.0, alpha)], A_i, lambda t, favg=favg: favg, np.zeros(len(ids)),
            np.zeros(len(ids)), cfg.tau, cfg.n_steps,
        )

    err = np.abs(sol - ref) / np.maximum(np.abs(ref).max(), 1e-300)
    os.makedirs(cfg.out, exist_ok=True)
    report = os.path.join(cfg.out, f"zero_order_{medium_digest(cfg)}.txt")
    with open(report, "w") as fh:
        fh.write("# mchom zero-order report v1\n")
        fh.write(f"blocks {len(ids)} continua {N} orders {list(orders)}\n")
        fh.write(f"max_relative_mismatch {err.max():.6e}\n")
        final = sol[-1]
        for b in ids:
            vals = " ".join(f"{v:.17g}" for v in final[b])
            fh.write(f"{b} {vals}\n")
    log.info("wrote %s (max mismatch %.3e)", report, err.max())
    return sol, ref, report


def run_full(cfg, force=False):
    """generate -> fine -> cells+upscale -> macro -> compare."""
    mesh, part = build_geometry(cfg)
    medium, _ = stage_generate_media(cfg, mesh)
    fine_fields, _ = stage_solve_fine(cfg, mesh, medium, force=force)
    eff, _ = stage_upscale(cfg, mesh, part, medium, force=force)
    macro_fields, _ = stage_solve_macro(cfg, part, medium, eff, force=force)
    rows, path = stage_compare(cfg, part, medium, fine_fields, macro_fields)
    return rows, path


def dump_cell_basis(cfg, blocks):
    """Solve and export the cell bases of selected blocks for inspection."""
    mesh, part = build_geometry(cfg)
    medium = build_medium(cfg, mesh)
    layers = cfg.effective_layers()
    os.makedirs(cfg.out, exist_ok=True)
    from .grid import build_oversampled_region

    written = []
    for b in blocks:
        region = build_oversampled_region(part, b, layers)
        family = cells.solve_cell_family(region, medium, keep_region_values=True)
        for key, basis in family.bases.items():
            kind, i, m = key
            suffix = f"{kind}{i}" + (f"_d{m}" if m is not None else "")
            p = os.path.join(cfg.out, f"cell_b{b}_{suffix}.field")
            metrics.export_field(p, basis.values, region.local.nx, region.local.ny)
            written.append(p)
    log.info("wrote %d basis fields", len(written))
    return written
