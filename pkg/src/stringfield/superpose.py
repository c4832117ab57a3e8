"""Monte-Carlo superposition of pair fields over a batch of matched pairs.

The total field at a point is the arithmetic mean of the closed-form pair
fields of every pair in the batch. The per-pair field factors as

    g * s * (e_axis + c * rho)

with g the Gaussian radial profile, s the optional sigma(z)^(-D) factor,
c the signed log-slope of the width profile at z (shared by all pairs at a
given height) and rho the in-plane offset from the pair's sheared axis. That
form needs no trigonometry, and the point-pair double loop is compiled with
numba so whole-dataset oracle fields stay affordable.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .core import ExtendedPoint, FieldVector, PairBatch, StringParams
from .pairfield import string_width, width_log_slope

__all__ = [
    "superpose_field",
    "superpose_grid",
    "normalize_field",
    "normalize_rows",
    "DEGENERATE_NORM_FLOOR",
]

DEGENERATE_NORM_FLOOR = 1e-12

_SIN_FLOOR = 1e-300


@njit(cache=True)
def _width_scalar(z, L, d, k, sigma0):
    if z < 0.0 or z > L:
        return 0.0
    if z < d:
        return sigma0 * math.sin(k * z)
    if z <= L - d:
        return sigma0
    return sigma0 * math.sin(k * (L - z))


@njit(cache=True)
def _log_slope_scalar(z, L, d, k):
    if z <= 0.0 or z >= L:
        return 0.0
    if z < d:
        s = math.sin(k * z)
        if s < _SIN_FLOOR:
            s = _SIN_FLOOR
        return k * math.cos(k * z) / s
    if z <= L - d:
        return 0.0
    s = math.sin(k * (L - z))
    if s < _SIN_FLOOR:
        s = _SIN_FLOOR
    return -k * math.cos(k * (L - z)) / s


@njit(cache=True)
def _superpose_kernel_shared(points_x, centers, e_axis, slope, inv2s2, coef, out):
    """Shared-height variant: tube centers, width and slope hoisted out."""
    N, D = points_x.shape
    B = centers.shape[0]
    rho = np.empty(D)
    for i in range(N):
        for c in range(D + 1):
            out[i, c] = 0.0
        acc_z = 0.0
        for b in range(B):
            r2 = 0.0
            for c in range(D):
                rc = points_x[i, c] - centers[b, c]
                rho[c] = rc
                r2 += rc * rc
            g = math.exp(-r2 * inv2s2)
            for c in range(D):
                out[i, c] += g * (e_axis[b, c] + slope * rho[c])
            acc_z += g * e_axis[b, D]
        for c in range(D):
            out[i, c] *= coef
        out[i, D] = acc_z * coef
    return out


@njit(cache=True)
def _superpose_kernel(points_x, z, src, tgt, e_axis, L, d, k, sigma0, sigma_power, out):
    N, D = points_x.shape
    B = src.shape[0]
    rho = np.empty(D)
    for i in range(N):
        zi = z[i]
        sigma = _width_scalar(zi, L, d, k, sigma0)
        for c in range(D + 1):
            out[i, c] = 0.0
        if sigma <= 0.0:
            continue
        inv2s2 = 1.0 / (2.0 * sigma * sigma)
        slope = _log_slope_scalar(zi, L, d, k)
        frac = zi / L
        scale = sigma ** (-float(D)) if sigma_power else 1.0
        acc_z = 0.0
        for b in range(B):
            r2 = 0.0
            for c in range(D):
                rc = points_x[i, c] - ((1.0 - frac) * src[b, c] + frac * tgt[b, c])
                rho[c] = rc
                r2 += rc * rc
            g = math.exp(-r2 * inv2s2)
            for c in range(D):
                out[i, c] += g * (e_axis[b, c] + slope * rho[c])
            acc_z += g * e_axis[b, D]
        coef = scale / B
        for c in range(D):
            out[i, c] *= coef
        out[i, D] = acc_z * coef
    return out


def superpose_grid(
    points_x: np.ndarray,
    points_z,
    batch: PairBatch,
    params: StringParams,
    include_sigma_power: bool = False,
) -> np.ndarray:
    """Mean pair field at N points, returned as an (N, D+1) array.

    `points_z` may be a scalar (shared height, the sampler's case) or a
    length-N array. Rows where sigma(z)=0, i.e. outside the open gap, are
    exactly zero.
    """
    geometry = batch.geometry
    src, tgt = batch.source_x, batch.target_x
    B, D = src.shape
    points_x = np.ascontiguousarray(np.asarray(points_x, dtype=np.float64))
    if points_x.ndim != 2 or points_x.shape[1] != D:
        raise ValueError(f"points_x must be (N, {D}), got {points_x.shape}")
    N = points_x.shape[0]

    L = geometry.gap
    r = np.concatenate([tgt - src, np.full((B, 1), L)], axis=1)
    r_norm = np.linalg.norm(r, axis=1, keepdims=True)
    if np.any(r_norm < 1e-300):
        raise ValueError("pair endpoints coincide in extended space")
    e_axis = np.ascontiguousarray(r / r_norm)

    out = np.empty((N, D + 1))
    if np.ndim(points_z) == 0:
        z0 = float(points_z)
        sigma = _width_scalar(z0, L, params.d, params.k, params.sigma0)
        if sigma <= 0.0:
            out[:] = 0.0
            return out
        frac = z0 / L
        centers = np.ascontiguousarray(src * (1.0 - frac) + tgt * frac)
        scale = sigma ** (-float(D)) if include_sigma_power else 1.0
        _superpose_kernel_shared(
            points_x,
            centers,
            e_axis,
            _log_slope_scalar(z0, L, params.d, params.k),
            1.0 / (2.0 * sigma * sigma),
            scale / B,
            out,
        )
        return out

    z = np.ascontiguousarray(
        np.broadcast_to(np.asarray(points_z, dtype=np.float64), (N,))
    )
    _superpose_kernel(
        points_x,
        z,
        np.ascontiguousarray(src),
        np.ascontiguousarray(tgt),
        e_axis,
        L,
        params.d,
        params.k,
        params.sigma0,
        include_sigma_power,
        out,
    )
    return out


def superpose_field(
    at: ExtendedPoint,
    batch: PairBatch,
    params: StringParams,
    include_sigma_power: bool = False,
) -> FieldVector:
    """Mean pair field of the whole batch at a single extended point."""
    v = superpose_grid(at.x[None, :], at.z, batch, params, include_sigma_power)[0]
    return FieldVector(v)


def normalize_rows(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize an (N, D+1) array of field values.

    Rows with norm at or below the degenerate floor come back as exact zeros;
    the boolean mask of those rows is returned alongside.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    degenerate = norms <= DEGENERATE_NORM_FLOOR
    safe = np.where(degenerate, 1.0, norms)
    unit = vectors / safe[:, None]
    unit[degenerate] = 0.0
    return unit, degenerate


def normalize_field(v: FieldVector) -> FieldVector:
    """v / ||v||, or the zero vector marked degenerate when ||v|| is negligible."""
    n = v.norm()
    if n <= DEGENERATE_NORM_FLOOR:
        return FieldVector(np.zeros_like(v.v), degenerate=True)
    return FieldVector(v.v / n)
