import math

import numpy as np
import pytest

from stringfield import (
    ChargeSystem,
    ExtendedPoint,
    capacitor_field,
    coulomb_kernel,
    mu_probability,
    nu_probability,
    stochastic_transfer,
    stochastic_transfer_many,
)
from stringfield.electrostatic import TraceStatus, capacitor_field_many, unit_sphere_area
from stringfield.verify import discrete_transfer_histogram


# ---------------------------------------------------------------- kernel


def test_unit_sphere_areas():
    assert unit_sphere_area(2) == pytest.approx(2 * math.pi, rel=1e-15)
    assert unit_sphere_area(3) == pytest.approx(4 * math.pi, rel=1e-15)


def test_kernel_plane_value():
    at = ExtendedPoint(x=np.array([1.0]), z=0.0)
    src = ExtendedPoint(x=np.array([0.0]), z=0.0)
    f = coulomb_kernel(at, src, +1, 2)
    np.testing.assert_allclose(f.v, [1.0 / (2 * math.pi), 0.0], rtol=1e-15)


def test_kernel_sign_flip_negates():
    rng = np.random.default_rng(0)
    for _ in range(20):
        at = ExtendedPoint(x=rng.normal(size=2), z=rng.normal())
        src = ExtendedPoint(x=rng.normal(size=2), z=rng.normal())
        plus = coulomb_kernel(at, src, +1, 3).v
        minus = coulomb_kernel(at, src, -1, 3).v
        np.testing.assert_array_equal(plus, -minus)


def test_kernel_rejects_coincident_points():
    p = ExtendedPoint(x=np.array([1.0]), z=2.0)
    with pytest.raises(ValueError):
        coulomb_kernel(p, p, +1, 2)


def test_midpoint_of_opposite_pair_points_along_axis():
    sysm = ChargeSystem.from_plate_x(np.array([0.0]), np.array([0.0]), gap=2.0)
    f = capacitor_field(ExtendedPoint(x=np.array([0.0]), z=1.0), sysm)
    assert f.v[0] == 0.0
    assert f.v[1] > 0.0


def test_capacitor_duplicating_charges_is_noop():
    sysm = ChargeSystem.from_plate_x(np.array([0.3, -0.5]), np.array([0.1, 0.7]), gap=2.0)
    doubled = ChargeSystem.from_plate_x(
        np.array([0.3, -0.5, 0.3, -0.5]), np.array([0.1, 0.7, 0.1, 0.7]), gap=2.0
    )
    p = ExtendedPoint(x=np.array([0.9]), z=0.4)
    np.testing.assert_allclose(
        capacitor_field(p, sysm).v, capacitor_field(p, doubled).v, rtol=1e-15
    )


def test_capacitor_matches_brute_force_sum():
    rng = np.random.default_rng(1)
    pos = rng.normal(size=2)
    neg = rng.normal(size=1)
    sysm = ChargeSystem.from_plate_x(pos, neg, gap=2.0)
    p = ExtendedPoint(x=np.array([0.8]), z=0.7)
    brute = np.zeros(2)
    for q in pos:
        v = p.extended - np.array([q, 0.0])
        brute += 0.5 * v / (2 * math.pi * (v @ v))
    for q in neg:
        v = p.extended - np.array([q, 2.0])
        brute -= v / (2 * math.pi * (v @ v))
    np.testing.assert_allclose(capacitor_field(p, sysm).v, brute, atol=1e-12)


def test_capacitor_plan_independence_row_shuffles():
    rng = np.random.default_rng(2)
    pos = rng.normal(size=5)
    neg = rng.normal(size=5)
    sysm = ChargeSystem.from_plate_x(pos, neg, gap=3.0)
    shuffled = ChargeSystem.from_plate_x(
        pos[rng.permutation(5)], neg[rng.permutation(5)], gap=3.0
    )
    pts = np.column_stack([rng.normal(size=10), rng.uniform(-1, 4, size=10)])
    np.testing.assert_allclose(
        capacitor_field_many(pts, sysm), capacitor_field_many(pts, shuffled), rtol=1e-14
    )


def test_charge_system_plate_placement_enforced():
    with pytest.raises(ValueError, match="z=0"):
        ChargeSystem(
            positives=np.array([[0.0, 0.1]]), negatives=np.array([[0.0, 2.0]]), gap=2.0
        )


# ---------------------------------------------------------------- mu / nu tables


def test_mu_branch_table():
    assert mu_probability(-1.0, -2.0) == 0.0
    assert mu_probability(3.0, 1.0) == 1.0
    assert mu_probability(2.0, -2.0) == 0.5
    assert mu_probability(1.0, -3.0) == 0.25
    assert mu_probability(0.0, -1.0) == 0.0
    assert mu_probability(-0.5, 0.0) == 0.0


def test_mu_conflicting_limits_diagnostic():
    with pytest.warns(RuntimeWarning):
        assert mu_probability(-1.0, 1.0) == 0.0


def test_mu_range_fuzz():
    rng = np.random.default_rng(3)
    import warnings

    for _ in range(500):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m = mu_probability(rng.normal(), rng.normal())
        assert 0.0 <= m <= 1.0


def test_nu_branch_table():
    assert nu_probability(2.0, -1.0) == 1.0
    assert nu_probability(-2.0, 1.0) == 1.0
    assert nu_probability(1.0, 3.0) == 0.0
    assert nu_probability(1.0, -1.0) == 1.0
    assert nu_probability(4.0, 1.0) == 0.75
    assert nu_probability(4.0, -1.0) == 1.0
    assert nu_probability(1.0, 0.0) == 1.0


def test_nu_rejects_zero_before():
    with pytest.raises(ValueError):
        nu_probability(0.0, 1.0)


def test_nu_range_fuzz():
    rng = np.random.default_rng(4)
    for _ in range(500):
        b = rng.normal()
        if b == 0.0:
            continue
        n = nu_probability(b, rng.normal())
        assert 0.0 <= n <= 1.0


# ---------------------------------------------------------------- transfer


def test_dipole_transfer_terminates_at_sink():
    sysm = ChargeSystem.from_plate_x(np.array([0.0]), np.array([0.0]), gap=2.0)
    term, diag = stochastic_transfer(0.0, sysm, rng_seed=2)
    assert term == pytest.approx(0.0, abs=2e-3 * 2.0)
    assert diag["terminal_plane"] == 1


def test_dipole_fan_ensemble_terminates_at_sink():
    sysm = ChargeSystem.from_plate_x(np.array([0.0]), np.array([0.0]), gap=2.0)
    res = stochastic_transfer_many(np.zeros(500), sysm, rng_seed=3, fan_start=True)
    ok = res["status"] == TraceStatus.OK
    assert ok.mean() > 0.99
    # nearly every line ends on the lone sink; ranging nu noise is permitted
    at_sink = np.abs(res["terminal_x"][ok]) < 1e-6
    assert at_sink.mean() > 0.98


def test_transfer_requires_dim_one():
    sysm = ChargeSystem(
        positives=np.array([[0.0, 0.0, 0.0]]),
        negatives=np.array([[0.0, 0.0, 2.0]]),
        gap=2.0,
    )
    with pytest.raises(ValueError, match="dimension 1"):
        stochastic_transfer(0.0, sysm, rng_seed=0)


def test_discrete_three_body_histogram_small():
    counts, valid, diag = discrete_transfer_histogram(
        [-2.0, 0.0, 2.0], [-3.0, 0.5, 2.0], gap=4.0, traces=6000, rng_seed=1
    )
    assert valid > 5900
    frac = counts / valid
    bound = 3.0 * math.sqrt((1 / 3) * (2 / 3) / valid)
    assert np.all(np.abs(frac - 1.0 / 3.0) <= bound + 0.01)


def test_forward_only_stops_at_first_crossing():
    sysm = ChargeSystem.from_plate_x(np.array([-1.0, 1.0]), np.array([-1.0, 1.0]), gap=2.0)
    res = stochastic_transfer_many(
        np.array([-1.0, 1.0, 0.3]), sysm, rng_seed=5, forward_only=True
    )
    assert np.all(res["forward"])
    assert np.all(res["crossings"] == 0)
    assert np.all(res["status"] == TraceStatus.OK)


def test_fixed_seed_reproducible():
    sysm = ChargeSystem.from_plate_x(np.array([-1.0, 1.0]), np.array([0.0]), gap=2.0)
    xs = np.linspace(-1, 1, 50)
    a = stochastic_transfer_many(xs, sysm, rng_seed=7, fan_start=True)
    b = stochastic_transfer_many(xs, sysm, rng_seed=7, fan_start=True)
    np.testing.assert_array_equal(a["terminal_x"], b["terminal_x"])
    np.testing.assert_array_equal(a["status"], b["status"])
