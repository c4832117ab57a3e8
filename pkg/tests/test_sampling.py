import numpy as np
import pytest

from stringfield import (
    ExtendedPoint,
    FieldVector,
    ModelField,
    OracleField,
    PairBatch,
    PlanKind,
    Plate,
    PlateGeometry,
    PointCloud,
    StringParams,
    euler_step,
    pair_clouds,
    transfer,
    write_traces,
)
from stringfield.training import FieldModel

GEOM = PlateGeometry(data_dim=2, gap=6.0)
PARAMS = StringParams(sigma0=1.0, d=3.0)


# ---------------------------------------------------------------- euler step


def test_axial_field_keeps_x():
    p = ExtendedPoint(x=np.array([1.0, 2.0]), z=0.5)
    out = euler_step(p, FieldVector(np.array([0.0, 0.0, 2.0])), 0.1)
    np.testing.assert_array_equal(out.x, p.x)
    assert out.z == 0.6


def test_unit_diagonal_field_moves_equally():
    p = ExtendedPoint(x=np.array([0.0]), z=0.0)
    v = FieldVector(np.array([1.0, 1.0]) / np.sqrt(2.0))
    out = euler_step(p, v, 0.1)
    assert out.x[0] == pytest.approx(0.1, rel=1e-15)
    assert out.z == pytest.approx(0.1, rel=1e-15)


def test_step_invariant_under_positive_scaling():
    p = ExtendedPoint(x=np.array([0.3, -0.4]), z=1.0)
    v = np.array([0.2, -0.7, 0.9])
    base = euler_step(p, FieldVector(v), 0.05)
    for scale in (2.0, 0.5, 1024.0, 2.0**-10):
        scaled = euler_step(p, FieldVector(v * scale), 0.05)
        # powers of two rescale exactly, so the step is bit-identical
        np.testing.assert_array_equal(scaled.x, base.x)
        assert scaled.z == base.z


def test_step_rejects_tiny_axial_component():
    p = ExtendedPoint(x=np.array([0.0]), z=0.0)
    with pytest.raises(ValueError, match="clamp floor"):
        euler_step(p, FieldVector(np.array([1.0, 1e-9])), 0.1)


# ---------------------------------------------------------------- transfer


def single_string_field(src, tgt):
    batch = PairBatch(source_x=src[None], target_x=tgt[None], geometry=GEOM)
    return OracleField(batch=batch, params=PARAMS)


def test_single_string_transfer_reaches_target_point():
    src = np.array([0.4, -0.9])
    tgt = np.array([-1.2, 0.8])
    field = single_string_field(src, tgt)
    cloud = PointCloud(points=src[None], plate=Plate.SOURCE)
    terminal, traces = transfer(cloud, field, steps=1000)
    assert traces[0].status == "completed"
    assert np.linalg.norm(terminal.points[0] - tgt) < 1e-2 * GEOM.gap


def test_identity_transfer_keeps_cloud():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(128, 2))
    src = PointCloud(points=pts, plate=Plate.SOURCE)
    tgt = PointCloud(points=pts.copy(), plate=Plate.TARGET)
    batch = PairBatch(source_x=pts, target_x=pts.copy(), geometry=GEOM)
    terminal, _ = transfer(src, OracleField(batch=batch, params=PARAMS), steps=500)
    rms = np.sqrt(np.mean(np.sum((terminal.points - pts) ** 2, axis=1)))
    assert rms < 1e-2


def test_monotone_z_grid():
    src = np.array([0.0, 0.0])
    field = single_string_field(src, src.copy())
    cloud = PointCloud(points=src[None], plate=Plate.SOURCE)
    _, traces = transfer(cloud, field, steps=64)
    zs = traces[0].path[:, -1]
    assert zs[0] == 0.0
    assert zs[-1] == GEOM.gap
    np.testing.assert_allclose(np.diff(zs), GEOM.gap / 64, rtol=1e-12)
    assert np.all(np.diff(zs) > 0)


def test_transfer_requires_source_plate():
    cloud = PointCloud(points=np.zeros((1, 2)), plate=Plate.TARGET)
    with pytest.raises(ValueError, match="source-plate"):
        transfer(cloud, single_string_field(np.zeros(2), np.ones(2)), steps=10)


def test_ratio_invariance_of_field_scaling():
    # Rescaling the field by an exactly-representable constant leaves every
    # terminal bit identical; the step uses only the component ratio.
    class Scaled:
        def __init__(self, inner, factor):
            self.inner, self.factor = inner, factor
            self.data_dim = inner.data_dim
            self.gap = inner.gap

        def evaluate(self, x, z):
            return self.inner.evaluate(x, z) * self.factor

    rng = np.random.default_rng(1)
    pts = rng.normal(size=(32, 2))
    batch = PairBatch(
        source_x=pts, target_x=rng.normal(size=(32, 2)), geometry=GEOM
    )
    field = OracleField(batch=batch, params=PARAMS)
    cloud = PointCloud(points=pts, plate=Plate.SOURCE)
    base, _ = transfer(cloud, field, steps=50, record_paths=False)
    for factor in (0.25, 2.0, 2.0**20):
        scaled, _ = transfer(cloud, Scaled(field, factor), steps=50, record_paths=False)
        np.testing.assert_array_equal(scaled.points, base.points)
    # arbitrary positive rescaling agrees to rounding noise
    odd, _ = transfer(cloud, Scaled(field, 3.7), steps=50, record_paths=False)
    np.testing.assert_allclose(odd.points, base.points, rtol=1e-12, atol=1e-12)


def test_step_refinement_drift():
    rng = np.random.default_rng(2)
    src_pts = rng.normal(size=(64, 2))
    src = PointCloud(points=src_pts, plate=Plate.SOURCE)
    tgt = PointCloud(points=rng.normal(size=(64, 2)) * 0.5, plate=Plate.TARGET)
    batch = pair_clouds(src, tgt, PlanKind.MINIBATCH_OT, 0, GEOM)
    field = OracleField(batch=batch, params=PARAMS)
    coarse, _ = transfer(src, field, steps=500, record_paths=False)
    fine, _ = transfer(src, field, steps=1000, record_paths=False)
    rms = np.sqrt(np.mean(np.sum((coarse.points - fine.points) ** 2, axis=1)))
    assert rms < 2e-3 * GEOM.gap


def test_degenerate_field_freezes_trace():
    class DeadField:
        data_dim = 2
        gap = 6.0

        def evaluate(self, x, z):
            return np.zeros((len(x), 3))

    cloud = PointCloud(points=np.array([[1.0, 2.0]]), plate=Plate.SOURCE)
    terminal, traces = transfer(cloud, DeadField(), steps=30)
    assert traces[0].status == "degenerate-field"
    np.testing.assert_array_equal(terminal.points[0], [1.0, 2.0])
    # z keeps advancing on the grid even though x is frozen
    assert traces[0].path[-1, -1] == 6.0


def test_clamped_denominator_status():
    class SlipField:
        # strong sideways field with an axial component under the floor for
        # a few early steps, healthy afterwards
        data_dim = 1
        gap = 6.0

        def evaluate(self, x, z):
            vz = 1e-9 if z < 0.5 else 1.0
            return np.column_stack([np.full(len(x), 1e-9), np.full(len(x), vz)])

    cloud = PointCloud(points=np.zeros((1, 1)), plate=Plate.SOURCE)
    _, traces = transfer(cloud, SlipField(), steps=60)
    assert traces[0].status == "clamped-denominator"
    assert 0 < traces[0].detail <= 10


def test_trace_dump_format(tmp_path):
    src = np.array([0.1, 0.2])
    field = single_string_field(src, src.copy())
    cloud = PointCloud(points=src[None], plate=Plate.SOURCE)
    _, traces = transfer(cloud, field, steps=5)
    path = tmp_path / "traces.csv"
    write_traces(path, traces, seed=11)
    lines = path.read_text().splitlines()
    assert lines[0] == "# seed=11"
    assert lines[1] == "trace_id,step,x0,x1,z"
    assert len(lines) == 2 + 6


def test_model_field_uses_ema_by_default():
    rng = np.random.default_rng(3)
    model = FieldModel.initialize(2, (4,), rng)
    # push live weights away from the EMA snapshot
    for W in model.weights:
        W += 1.0
    pts = rng.normal(size=(4, 2))
    live = ModelField(model=model, gap=6.0, use_ema=False)
    ema = ModelField(model=model, gap=6.0)
    assert not np.allclose(live.evaluate(pts, 1.0), ema.evaluate(pts, 1.0))
    np.testing.assert_array_equal(
        ema.evaluate(pts, 1.0), model.forward(np.column_stack([pts, np.ones(4)]), use_ema=True)
    )
