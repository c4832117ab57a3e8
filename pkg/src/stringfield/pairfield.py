"""Closed-form interaction field of one matched source/target pair.

One pair is joined by a localized flux tube (a "string"): the field has a
Gaussian profile across the tube whose width sigma(z) ramps up over a curved
cap of depth d near each plate and stays constant at sigma0 in between.
Field lines are exactly the level curves x_perp = const * sigma(z), so the
radial tilt of the field direction follows the signed log-slope of the width
profile: lines fan out of the source inside the lower cap, run parallel to
the pair axis through the middle, and converge onto the target inside the
upper cap. Shifted pairs are handled by shearing the whole tube parallel to
the plates, which keeps every line inside 0 <= z <= L.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ExtendedPoint, FieldVector, PlateGeometry, StringParams, as_readonly

__all__ = [
    "string_width",
    "width_log_slope",
    "field_angle",
    "field_magnitude",
    "pair_field",
    "decompose_pair",
    "PairFieldDecomposition",
    "axis_center",
    "axis_direction",
]

# Finite stand-in for the undefined angle at the plate planes off axis; the
# magnitude is exactly zero there so the sentinel never propagates.
ENDPOINT_ANGLE = math.pi / 2.0 - 1e-9

# Floor applied to sin(k z) before dividing, per IEEE hygiene near the plates.
_SIN_FLOOR = 1e-300


def string_width(z, params: StringParams, geometry: PlateGeometry):
    """Effective tube width sigma(z).

    sigma0*sin(k z) on [0, d], sigma0 on [d, L-d], sigma0*sin(k (L-z)) on
    [L-d, L] and exactly zero outside the gap. Scalar in, scalar out; arrays
    broadcast elementwise.
    """
    z_arr = np.asarray(z, dtype=np.float64)
    L, d, k, s0 = geometry.gap, params.d, params.k, params.sigma0
    lower = (z_arr >= 0.0) & (z_arr < d)
    middle = (z_arr >= d) & (z_arr <= L - d)
    upper = (z_arr > L - d) & (z_arr <= L)
    out = np.zeros_like(z_arr)
    out = np.where(lower, s0 * np.sin(k * np.where(lower, z_arr, 0.0)), out)
    out = np.where(middle, s0, out)
    out = np.where(upper, s0 * np.sin(k * np.where(upper, L - z_arr, 0.0)), out)
    if np.isscalar(z) or np.ndim(z) == 0:
        return float(out)
    return out


def width_log_slope(z, params: StringParams, geometry: PlateGeometry):
    """Signed radial tilt factor sigma'(z)/sigma(z) of the width profile.

    Equals k*cot(k z) in the lower cap, 0 through the middle, and
    -k*cot(k (L-z)) in the upper cap where the tube narrows onto the target.
    Zero is returned wherever sigma(z) = 0 (the field vanishes there anyway).
    """
    z_arr = np.asarray(z, dtype=np.float64)
    L, d, k = geometry.gap, params.d, params.k
    lower = (z_arr > 0.0) & (z_arr < d)
    upper = (z_arr > L - d) & (z_arr < L)
    out = np.zeros_like(z_arr)
    kz = k * np.where(lower, z_arr, 1.0)
    out = np.where(lower, k * np.cos(kz) / np.maximum(np.sin(kz), _SIN_FLOOR), out)
    kz = k * np.where(upper, L - z_arr, 1.0)
    out = np.where(upper, -k * np.cos(kz) / np.maximum(np.sin(kz), _SIN_FLOOR), out)
    if np.isscalar(z) or np.ndim(z) == 0:
        return float(out)
    return out


def field_angle(x_perp: float, z: float, params: StringParams, geometry: PlateGeometry) -> float:
    """Unsigned angle in [0, pi/2) between the field direction and the pair axis.

    arctan(k*x_perp*cot(k z)) inside the lower cap, exactly zero through the
    middle band, arctan(k*x_perp*cot(k (L-z))) inside the upper cap. On the
    axis the angle is zero everywhere. At z=0 or z=L with x_perp>0 the limit
    is pi/2; a finite sentinel just below it is returned to keep downstream
    arithmetic NaN-free (the magnitude vanishes there regardless).
    """
    if x_perp < 0:
        raise ValueError(f"x_perp must be nonnegative, got {x_perp}")
    L = geometry.gap
    if z < 0.0 or z > L:
        raise ValueError(f"z={z} outside the plate gap [0, {L}]")
    if x_perp == 0.0:
        return 0.0
    if z == 0.0 or z == L:
        return ENDPOINT_ANGLE
    slope = width_log_slope(z, params, geometry)
    return math.atan(abs(slope) * x_perp)


def field_magnitude(
    x_perp: float,
    z: float,
    params: StringParams,
    geometry: PlateGeometry,
    include_sigma_power: bool = False,
) -> float:
    """Field strength exp(-x_perp^2 / (2 sigma^2)) / cos(alpha), optionally
    carrying the flux-conserving sigma(z)^(-D) factor.

    Returns exactly zero wherever sigma(z) = 0, i.e. on the plates and
    outside the gap.
    """
    if x_perp < 0:
        raise ValueError(f"x_perp must be nonnegative, got {x_perp}")
    sigma = string_width(z, params, geometry)
    if sigma == 0.0:
        return 0.0
    log_gauss = -(x_perp * x_perp) / (2.0 * sigma * sigma)
    if include_sigma_power:
        log_gauss -= geometry.data_dim * math.log(sigma)
    gauss = math.exp(log_gauss)
    if gauss == 0.0:
        return 0.0
    alpha = field_angle(x_perp, z, params, geometry)
    return gauss / math.cos(alpha)


@dataclass(frozen=True)
class PairFieldDecomposition:
    """Geometric split of one pair-field evaluation.

    `e_axis` is the unit vector from the extended source to the extended
    target endpoint; `e_perp` the unit outward radial offset direction (the
    zero vector on the axis); `alpha` the unsigned tilt angle in [0, pi/2);
    `tilt` is -1, 0 or +1 giving the sign of the radial component (+1 fanning
    outward in the lower cap, -1 converging in the upper cap). For an axial
    pair e_perp is orthogonal to e_axis; under the shear construction for
    shifted pairs the two are deliberately not orthogonal.
    """

    x_perp: float
    e_perp: np.ndarray
    e_axis: np.ndarray
    alpha: float
    magnitude: float
    tilt: float

    def __post_init__(self):
        object.__setattr__(self, "e_perp", as_readonly(self.e_perp, ndim=1, name="e_perp"))
        object.__setattr__(self, "e_axis", as_readonly(self.e_axis, ndim=1, name="e_axis"))
        if self.x_perp < 0 or not math.isfinite(self.x_perp):
            raise ValueError(f"x_perp must be a nonnegative real, got {self.x_perp!r}")
        if abs(np.linalg.norm(self.e_axis) - 1.0) > 1e-12:
            raise ValueError("e_axis must have unit norm")
        if self.x_perp == 0.0:
            if np.any(self.e_perp != 0.0) or self.alpha != 0.0:
                raise ValueError("on the axis e_perp must be the zero vector and alpha zero")
        elif abs(np.linalg.norm(self.e_perp) - 1.0) > 1e-12:
            raise ValueError("off the axis e_perp must have unit norm")
        if not (0.0 <= self.alpha < math.pi / 2.0):
            raise ValueError(f"alpha must lie in [0, pi/2), got {self.alpha!r}")
        if self.magnitude < 0:
            raise ValueError(f"magnitude must be nonnegative, got {self.magnitude!r}")

    def field(self) -> FieldVector:
        v = self.magnitude * (
            math.cos(self.alpha) * self.e_axis
            + self.tilt * math.sin(self.alpha) * self.e_perp
        )
        return FieldVector(v)


def axis_direction(source_x, target_x, geometry: PlateGeometry) -> np.ndarray:
    """Unit vector from the extended source endpoint to the extended target."""
    source_x = np.asarray(source_x, dtype=np.float64)
    target_x = np.asarray(target_x, dtype=np.float64)
    r = np.append(target_x - source_x, geometry.gap)
    r_norm = np.linalg.norm(r)
    if r_norm < 1e-300:
        raise ValueError("pair endpoints coincide in extended space")
    return r / r_norm


def axis_center(source_x, target_x, z, geometry: PlateGeometry):
    """In-plane center of the (sheared) tube axis at height z."""
    source_x = np.asarray(source_x, dtype=np.float64)
    target_x = np.asarray(target_x, dtype=np.float64)
    frac = np.asarray(z, dtype=np.float64) / geometry.gap
    return source_x * (1.0 - frac) + target_x * frac


def decompose_pair(
    point: ExtendedPoint,
    source_x,
    target_x,
    params: StringParams,
    geometry: PlateGeometry,
    include_sigma_power: bool = False,
) -> PairFieldDecomposition:
    """Split the field of one pair at `point` into its geometric parts.

    Requires 0 <= z <= L; outside the gap the field is identically zero and
    has no decomposition.
    """
    L = geometry.gap
    if point.z < 0.0 or point.z > L:
        raise ValueError(f"z={point.z} outside the plate gap [0, {L}]")
    e_axis = axis_direction(source_x, target_x, geometry)
    # In-plane offset from the sheared tube axis; its z component vanishes
    # identically, so only the horizontal part is formed.
    rho = point.x - axis_center(source_x, target_x, point.z, geometry)
    x_perp = float(np.linalg.norm(rho))
    dim1 = geometry.data_dim + 1
    if x_perp == 0.0:
        e_perp = np.zeros(dim1)
        alpha = 0.0
    else:
        e_perp = np.append(rho / x_perp, 0.0)
        alpha = field_angle(x_perp, point.z, params, geometry)
    slope = width_log_slope(point.z, params, geometry)
    magnitude = field_magnitude(x_perp, point.z, params, geometry, include_sigma_power)
    return PairFieldDecomposition(
        x_perp=x_perp,
        e_perp=e_perp,
        e_axis=e_axis,
        alpha=alpha,
        magnitude=magnitude,
        tilt=float(np.sign(slope)) if x_perp > 0.0 else 0.0,
    )


def pair_field(
    point: ExtendedPoint,
    source_x,
    target_x,
    params: StringParams,
    geometry: PlateGeometry,
    include_sigma_power: bool = False,
) -> FieldVector:
    """Interaction field of a single unit pair at an arbitrary extended point.

    Outside the gap (z < 0 or z > L) the result is the exact zero vector for
    any pair placement: lines never leave the region between the plates.
    """
    if point.dim != geometry.data_dim:
        raise ValueError(
            f"point dimension {point.dim} does not match geometry data_dim "
            f"{geometry.data_dim}"
        )
    axis_direction(source_x, target_x, geometry)  # degenerate-pair guard
    if point.z < 0.0 or point.z > geometry.gap:
        return FieldVector(np.zeros(geometry.data_dim + 1))
    return decompose_pair(
        point, source_x, target_x, params, geometry, include_sigma_power
    ).field()
