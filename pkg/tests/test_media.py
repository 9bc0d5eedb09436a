import numpy as np
import pytest

from mchom.grid import build_fine_mesh
from mchom.media import (
    MediumField,
    crossed_field,
    layered_field,
    load_raster,
    save_raster,
)


def test_crossed_values_and_contrast():
    mesh = build_fine_mesh(400, 400)
    med = crossed_field(mesh)
    assert set(np.unique(med.values)) == {1e-4, 1.0}
    assert med.contrast == pytest.approx(1e4)
    assert med.n_continua == 2


def test_crossed_fraction_against_raster_oracle():
    mesh = build_fine_mesh(400, 400)
    med = crossed_field(mesh)
    # independent rasterization of the same geometry at cell centers
    period, width = 0.0125, 0.0025
    xs = (np.arange(400) + 0.5) / 400
    fx = np.abs(np.mod(xs, period) - period / 2) < width / 2
    X = np.tile(fx, (400, 1))
    Y = X.T
    frac = float((X | Y).mean())
    assert (med.labels == 2).mean() == pytest.approx(frac, abs=1e-12)


def test_channel_element_labeled_two():
    mesh = build_fine_mesh(80, 80)
    med = crossed_field(mesh, period=0.2, width=0.05)
    # element whose barycenter sits mid-channel
    pts = mesh.barycenters
    mid = np.argmin(np.abs(pts[:, 1] - 0.1) + np.abs(pts[:, 0] - 0.025))
    assert med.labels[mid] == 2


def test_layered_stripe_count():
    mesh = build_fine_mesh(200, 200)
    med = layered_field(mesh, period=0.05, width=0.01)
    lab = med.labels[0::2].reshape(200, 200)  # lower triangles, cell layout
    transitions = np.count_nonzero(np.diff((lab[0] == 2).astype(int)) == 1)
    assert transitions == 20


def test_layered_periodicity():
    mesh = build_fine_mesh(200, 200)
    med = layered_field(mesh, period=0.05, width=0.01)
    lab = med.labels[0::2].reshape(200, 200)
    shift = 10  # one period in cells
    assert np.array_equal(lab[:, : 200 - shift], lab[:, shift:])


def test_characteristic_partition_of_unity():
    mesh = build_fine_mesh(80, 80)
    med = crossed_field(mesh, period=0.2, width=0.05)
    total = sum(med.characteristic(p) for p in (1, 2))
    assert np.array_equal(total, np.ones(mesh.n_triangles))
    areas = sum(med.continuum_area(p) for p in (1, 2))
    assert areas == pytest.approx(1.0, abs=1e-12)
    on_low = np.flatnonzero(med.labels == 1)[0]
    assert med.characteristic(1)[on_low] == 1.0
    assert med.characteristic(2)[on_low] == 0.0


def test_characteristic_range_check():
    mesh = build_fine_mesh(40, 40)
    med = crossed_field(mesh, period=0.2, width=0.05)
    with pytest.raises(ValueError):
        med.characteristic(3)


def test_unresolvable_width_rejected():
    mesh = build_fine_mesh(40, 40)
    with pytest.raises(ValueError, match="resolvable"):
        crossed_field(mesh, period=0.2, width=0.01)


def test_block_coverage_check_fires():
    mesh = build_fine_mesh(80, 80)
    with pytest.raises(ValueError, match="missing"):
        crossed_field(mesh, period=0.5, width=0.05)


def test_field_validation():
    mesh = build_fine_mesh(4, 4)
    with pytest.raises(ValueError):
        MediumField(mesh, np.zeros(mesh.n_triangles), np.ones(mesh.n_triangles, int))
    with pytest.raises(ValueError):
        MediumField(mesh, np.ones(mesh.n_triangles), np.zeros(mesh.n_triangles, int))


def test_raster_roundtrip_bit_exact(tmp_path):
    mesh = build_fine_mesh(80, 80)
    med = crossed_field(mesh, period=0.2, width=0.05)
    path = tmp_path / "medium.raster"
    save_raster(med, path)
    again = load_raster(path, mesh)
    assert np.array_equal(again.values, med.values)
    assert np.array_equal(again.labels, med.labels)
    save_raster(again, tmp_path / "second.raster")
    assert (tmp_path / "second.raster").read_bytes() == path.read_bytes()


def test_raster_constant_single_continuum(tmp_path):
    path = tmp_path / "const.raster"
    path.write_text("2 2 1\n" + "1 1\n" * 4)
    mesh = build_fine_mesh(4, 4)
    med = load_raster(path, mesh)
    assert med.n_continua == 1
    assert np.all(med.values == 1.0)


def test_raster_two_values_contrast(tmp_path):
    path = tmp_path / "two.raster"
    rows = ["1 0.0001" if (i + i // 2) % 2 else "2 1" for i in range(4)]
    path.write_text("2 2 2\n" + "\n".join(rows) + "\n")
    med = load_raster(path, build_fine_mesh(8, 8))
    assert med.contrast == pytest.approx(1e4)


def test_raster_dimension_mismatch(tmp_path):
    path = tmp_path / "bad.raster"
    path.write_text("3 3 1\n" + "1 1\n" * 9)
    with pytest.raises(ValueError, match="divide"):
        load_raster(path, build_fine_mesh(4, 4))


def test_raster_rejects_nonpositive(tmp_path):
    path = tmp_path / "neg.raster"
    path.write_text("1 1 1\n1 -3\n")
    with pytest.raises(ValueError, match="positive"):
        load_raster(path, build_fine_mesh(2, 2))


def test_generators_deterministic():
    mesh = build_fine_mesh(80, 80)
    a = crossed_field(mesh, period=0.2, width=0.05)
    b = crossed_field(mesh, period=0.2, width=0.05)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.values, b.values)
