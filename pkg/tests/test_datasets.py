import numpy as np
import pytest
from scipy import stats

from stringfield import Plate, make_gaussian, make_swiss_roll, make_two_gaussians, read_cloud, write_cloud
from stringfield.datasets import SWISS_ROLL_T_RANGE


def test_gaussian_mean_within_clt_bound():
    cloud = make_gaussian(4096, 2, seed=0)
    assert np.all(np.abs(cloud.points.mean(axis=0)) < 4.0 / np.sqrt(4096))
    assert cloud.plate is Plate.SOURCE


def test_gaussian_deterministic_and_degenerate_scale():
    a = make_gaussian(100, 3, seed=5)
    b = make_gaussian(100, 3, seed=5)
    np.testing.assert_array_equal(a.points, b.points)
    c = make_gaussian(10, 2, mean=1.5, scale=0.0, seed=1)
    np.testing.assert_array_equal(c.points, np.full((10, 2), 1.5))


def test_swiss_roll_parametrization_identity():
    cloud = make_swiss_roll(500, noise_sd=0.0, seed=2)
    radii = np.linalg.norm(cloud.points, axis=1)
    t = radii * np.pi / 0.4
    assert np.all(t >= SWISS_ROLL_T_RANGE[0] - 1e-9)
    assert np.all(t <= SWISS_ROLL_T_RANGE[1] + 1e-9)
    # the angle recovers t modulo 2 pi
    angles = np.arctan2(cloud.points[:, 1], cloud.points[:, 0])
    residue = np.mod(t - angles + np.pi, 2 * np.pi) - np.pi
    np.testing.assert_allclose(residue, 0.0, atol=1e-9)


def test_swiss_roll_radius_bound():
    noise_sd = 0.1
    cloud = make_swiss_roll(5000, noise_sd=noise_sd, seed=3)
    assert np.linalg.norm(cloud.points, axis=1).max() <= 0.4 * 4.5 + 5 * noise_sd


def test_swiss_roll_t_uniformity_chi2():
    cloud = make_swiss_roll(8000, noise_sd=0.0, seed=4)
    t = np.linalg.norm(cloud.points, axis=1) * np.pi / 0.4
    counts, _ = np.histogram(t, bins=20, range=SWISS_ROLL_T_RANGE)
    chi2 = ((counts - 400.0) ** 2 / 400.0).sum()
    p = stats.chi2.sf(chi2, df=19)
    assert p > 0.001


def test_two_gaussians_collapse_and_balance():
    single = make_two_gaussians(2000, separation=0.0, seed=5)
    assert stats.kurtosis(single.points[:, 0]) == pytest.approx(0.0, abs=0.3)
    mix = make_two_gaussians(4000, separation=8.0, seed=6)
    n_left = int((mix.points[:, 0] < 0).sum())
    assert abs(n_left - 2000) <= 4 * np.sqrt(4000 * 0.25)


def test_two_gaussians_bimodality_by_gap_fraction():
    # With separation 8 the region around zero is essentially empty while the
    # modes are well populated; collapse would fill the middle.
    mix = make_two_gaussians(4000, separation=8.0, seed=7).points[:, 0]
    mid = np.mean(np.abs(mix) < 1.0)
    modes = np.mean(np.abs(np.abs(mix) - 4.0) < 1.0)
    assert mid < 0.01
    assert modes > 0.5


def test_cloud_roundtrip_exact(tmp_path):
    cloud = make_gaussian(64, 3, seed=8)
    path = tmp_path / "source_cloud.csv"
    write_cloud(path, cloud, seed=8)
    back = read_cloud(path)
    np.testing.assert_array_equal(back.points, cloud.points)
    assert back.plate is Plate.SOURCE


def test_cloud_plate_from_filename_and_comment(tmp_path):
    cloud = make_gaussian(4, 2, seed=9, plate=Plate.TARGET)
    named = tmp_path / "target_data.csv"
    write_cloud(named, cloud)
    assert read_cloud(named).plate is Plate.TARGET
    # comment wins even with a neutral filename
    neutral = tmp_path / "cloud.csv"
    write_cloud(neutral, cloud)
    assert read_cloud(neutral).plate is Plate.TARGET


def test_read_rejects_malformed_header(tmp_path):
    p = tmp_path / "source_bad.csv"
    p.write_text("a,b\n0.0,1.0\n")
    with pytest.raises(ValueError, match="header"):
        read_cloud(p)


def test_read_rejects_ragged_row_with_line_number(tmp_path):
    p = tmp_path / "source_bad.csv"
    p.write_text("x0,x1\n0.0,1.0\n2.0\n")
    with pytest.raises(ValueError, match=":3"):
        read_cloud(p)


def test_read_rejects_nan_with_line_number(tmp_path):
    p = tmp_path / "source_bad.csv"
    p.write_text("x0,x1\n0.0,NaN\n")
    with pytest.raises(ValueError, match=":2"):
        read_cloud(p)
