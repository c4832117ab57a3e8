"""Capacitor-style electrostatic baseline and its stochastic plane-to-plane map.

Point charges of total mass +1 sit on the z=0 plate and mass -1 on the z=L
plate. The field is the plan-independent mean of Coulomb kernels. Transfer
follows field lines: a trace leaves the source plate forward or backward with
probability mu given by the one-sided flux split, and at every plane crossing
stops with probability nu given by the before/after flux ratio. Backward and
re-entrant lines are what the string realization is designed to remove; this
module exists to demonstrate them at desk scale (data dimension 1 only).

Line integration is fixed-step RK4 on the unit field at 1e-3 of the gap near
the charge system. Far outside it the field is dipolar and smooth on the
scale of the distance itself, so the step grows proportionally (capped so a
step can never jump across a plane); the wide backward arcs, whose lengths
are log-divergent in the plane, then finish in a bounded number of steps.
The tracing kernel is compiled with numba: a hundred thousand traces with
their crossing bisection and stop decisions run in seconds.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import ExtendedPoint, FieldVector, as_readonly

__all__ = [
    "ChargeSystem",
    "unit_sphere_area",
    "coulomb_kernel",
    "capacitor_field",
    "capacitor_field_many",
    "mu_probability",
    "nu_probability",
    "stochastic_transfer",
    "stochastic_transfer_many",
    "TraceStatus",
]

# Relative offsets, in units of the gap, used for one-sided field limits and
# for the fixed-step line integration.
LIMIT_EPS_FACTOR = 1e-4
RK4_STEP_FACTOR = 1e-3
CROSSING_TOL_FACTOR = 1e-10
STALL_FLOOR = 1e-12

_INV_2PI = 1.0 / (2.0 * math.pi)


def unit_sphere_area(n: int) -> float:
    """Surface area of the unit (n-1)-sphere embedded in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


@dataclass(frozen=True)
class ChargeSystem:
    """Discrete charges on the two plates, each side carrying unit total mass."""

    positives: np.ndarray  # (N, D+1) extended positions, z = 0
    negatives: np.ndarray  # (M, D+1) extended positions, z = gap
    gap: float

    def __post_init__(self):
        object.__setattr__(self, "positives", as_readonly(self.positives, ndim=2, name="positives"))
        object.__setattr__(self, "negatives", as_readonly(self.negatives, ndim=2, name="negatives"))
        if self.positives.shape[0] < 1 or self.negatives.shape[0] < 1:
            raise ValueError("each plate needs at least one charge")
        if self.positives.shape[1] != self.negatives.shape[1]:
            raise ValueError("charge arrays must share the extended dimension")
        if not (math.isfinite(self.gap) and self.gap > 0):
            raise ValueError(f"gap must be a positive finite real, got {self.gap!r}")
        if np.any(self.positives[:, -1] != 0.0):
            raise ValueError("positive charges must sit on the z=0 plate")
        if np.any(self.negatives[:, -1] != self.gap):
            raise ValueError("negative charges must sit on the z=gap plate")

    @classmethod
    def from_plate_x(cls, positive_x, negative_x, gap) -> "ChargeSystem":
        """Build a system from in-plane coordinates on each plate."""
        px = np.asarray(positive_x, dtype=np.float64)
        nx = np.asarray(negative_x, dtype=np.float64)
        if px.ndim == 1:
            px = px[:, None]
        if nx.ndim == 1:
            nx = nx[:, None]
        pos = np.column_stack([px, np.zeros(len(px))])
        neg = np.column_stack([nx, np.full(len(nx), float(gap))])
        return cls(positives=pos, negatives=neg, gap=float(gap))

    @property
    def extended_dim(self) -> int:
        return self.positives.shape[1]


def coulomb_kernel(at: ExtendedPoint, source: ExtendedPoint, sign: int, total_dim: int) -> FieldVector:
    """Unit-charge Coulomb field sign * (1/S_{n-1}) * v / ||v||^n with v = at - source."""
    if total_dim < 1:
        raise ValueError(f"total_dim must be positive, got {total_dim}")
    v = at.extended - source.extended
    r = np.linalg.norm(v)
    if r == 0.0:
        raise ValueError("field requested at the charge location itself")
    return FieldVector(float(sign) * v / (unit_sphere_area(total_dim) * r**total_dim))


def _system_arrays(system: ChargeSystem):
    charges = np.vstack([system.positives, system.negatives])
    weights = np.concatenate(
        [
            np.full(len(system.positives), 1.0 / len(system.positives)),
            np.full(len(system.negatives), -1.0 / len(system.negatives)),
        ]
    )
    return charges, weights


def capacitor_field_many(points: np.ndarray, system: ChargeSystem) -> np.ndarray:
    """Mean-kernel field at many extended points, (T, n) in and out."""
    charges, weights = _system_arrays(system)
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[1]
    diff = points[:, None, :] - charges[None, :, :]
    r2 = np.einsum("tcn,tcn->tc", diff, diff)
    denom = r2 if n == 2 else r2 ** (n / 2.0)
    coef = weights[None, :] / denom
    return np.einsum("tc,tcn->tn", coef, diff) / unit_sphere_area(n)


def capacitor_field(at: ExtendedPoint, system: ChargeSystem) -> FieldVector:
    """Mean positive-kernel field plus mean negative-kernel field at one point.

    Depends only on the two charge sets, never on any pairing between them.
    """
    charges, _ = _system_arrays(system)
    p = at.extended[None, :]
    diff = p - charges
    if np.any(np.einsum("cn,cn->c", diff, diff) == 0.0):
        raise ValueError("field requested at a charge location")
    return FieldVector(capacitor_field_many(p, system)[0])


def mu_probability(E_z_plus: float, E_z_minus: float) -> float:
    """Probability of taking the forward branch given one-sided axial limits.

    0 when forward motion is impossible, 1 when backward motion is impossible,
    otherwise the forward share of the one-sided flux.
    """
    if E_z_plus < 0.0 and E_z_minus > 0.0:
        warnings.warn(
            "both one-sided limits point away from their half-spaces; "
            "taking the forward-impossible branch",
            RuntimeWarning,
        )
        return 0.0
    if E_z_plus < 0.0:
        return 0.0
    if E_z_minus > 0.0:
        return 1.0
    denom = E_z_plus + abs(E_z_minus)
    if denom == 0.0:
        return 0.5
    return E_z_plus / denom


def nu_probability(E_z_before: float, E_z_after: float) -> float:
    """Stop probability at a plane crossing from the axial flux before/after."""
    if E_z_before == 0.0:
        raise ValueError("E_z_before must be nonzero at a crossing")
    if E_z_before * E_z_after < 0.0:
        return 1.0
    if abs(E_z_after) >= abs(E_z_before):
        return 0.0
    return (abs(E_z_before) - abs(E_z_after)) / abs(E_z_before)


class TraceStatus:
    OK = 0
    STALLED = 1
    MAX_CROSSINGS = 2
    BUDGET = 3


@njit(cache=True)
def _field2(px, pz, cx, cz, w):
    ex = 0.0
    ez = 0.0
    for c in range(w.shape[0]):
        dx = px - cx[c]
        dz = pz - cz[c]
        s = w[c] / (dx * dx + dz * dz)
        ex += s * dx
        ez += s * dz
    return ex * _INV_2PI, ez * _INV_2PI


@njit(cache=True)
def _rk4_step(px, pz, h, cx, cz, w):
    """Unit-speed RK4 increment; returns (new_x, new_z, field_norm_at_start)."""
    e1x, e1z = _field2(px, pz, cx, cz, w)
    n1 = math.sqrt(e1x * e1x + e1z * e1z)
    s1 = n1 if n1 > STALL_FLOOR else STALL_FLOOR
    k1x, k1z = e1x / s1, e1z / s1
    e2x, e2z = _field2(px + 0.5 * h * k1x, pz + 0.5 * h * k1z, cx, cz, w)
    n2 = math.sqrt(e2x * e2x + e2z * e2z)
    s2 = n2 if n2 > STALL_FLOOR else STALL_FLOOR
    k2x, k2z = e2x / s2, e2z / s2
    e3x, e3z = _field2(px + 0.5 * h * k2x, pz + 0.5 * h * k2z, cx, cz, w)
    n3 = math.sqrt(e3x * e3x + e3z * e3z)
    s3 = n3 if n3 > STALL_FLOOR else STALL_FLOOR
    k3x, k3z = e3x / s3, e3z / s3
    e4x, e4z = _field2(px + h * k3x, pz + h * k3z, cx, cz, w)
    n4 = math.sqrt(e4x * e4x + e4z * e4z)
    s4 = n4 if n4 > STALL_FLOOR else STALL_FLOOR
    k4x, k4z = e4x / s4, e4z / s4
    sixth = h / 6.0
    return (
        px + sixth * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
        pz + sixth * (k1z + 2.0 * k2z + 2.0 * k3z + k4z),
        n1,
    )


@njit(cache=True)
def _nu_scalar(ez_b, ez_a):
    if ez_b == 0.0:
        return 1.0
    if ez_b * ez_a < 0.0:
        return 1.0
    ab, aa = abs(ez_b), abs(ez_a)
    if aa >= ab:
        return 0.0
    return (ab - aa) / ab


@njit(cache=True)
def _trace_kernel(
    xs,
    u_branch,
    fan_theta,
    u_cross,
    cx,
    cz,
    w,
    sink_x,
    L,
    eps,
    h,
    max_crossings,
    fan_start,
    forward_only,
    path_cap,
    radius_sys,
    x_center,
):
    T = xs.shape[0]
    terminal_x = np.full(T, np.nan)
    terminal_plane = np.full(T, -1, np.int64)
    crossings = np.zeros(T, np.int64)
    escapes = np.zeros(T, np.int64)
    status = np.full(T, 3, np.int64)  # TraceStatus.BUDGET
    forward = np.zeros(T, np.bool_)
    half_L = 0.5 * L
    capture_r2 = h * h
    cross_tol = CROSSING_TOL_FACTOR * L
    for t in range(T):
        x0 = xs[t]
        _, ez_up = _field2(x0, eps, cx, cz, w)
        _, ez_dn = _field2(x0, -eps, cx, cz, w)
        if forward_only:
            mu = 1.0
        elif ez_up < 0.0:
            mu = 0.0
        elif ez_dn > 0.0:
            mu = 1.0
        else:
            denom = ez_up + abs(ez_dn)
            mu = 0.5 if denom == 0.0 else ez_up / denom
        fwd = u_branch[t] < mu
        forward[t] = fwd
        side = 1.0 if fwd else -1.0
        if fan_start:
            px = x0 + eps * math.sin(fan_theta[t])
            pz = side * eps * math.cos(fan_theta[t])
        else:
            px = x0
            pz = side * eps
        path = 0.0
        ncross = 0
        while path < path_cap:
            r = math.sqrt((px - x_center) ** 2 + (pz - half_L) ** 2)
            dz_near = min(abs(pz), abs(pz - L))
            accel = min((r - radius_sys) / 30.0, 0.45 * dz_near)
            hi = accel if accel > h else h
            nx, nz, n1 = _rk4_step(px, pz, hi, cx, cz, w)
            if n1 < STALL_FLOOR:
                status[t] = 1  # STALLED
                break
            path += hi
            # Sink capture: within one base step of a point sink the line
            # provably terminates there.
            best = 1e300
            bi = -1
            for m in range(sink_x.shape[0]):
                d2 = (nx - sink_x[m]) ** 2 + (nz - L) ** 2
                if d2 < best:
                    best = d2
                    bi = m
            if best < capture_r2:
                terminal_x[t] = sink_x[bi]
                terminal_plane[t] = 1
                status[t] = 0  # OK
                break
            plane = -1.0
            plane_id = -1
            if (pz - 0.0) * (nz - 0.0) < 0.0:
                plane = 0.0
                plane_id = 0
            elif (pz - L) * (nz - L) < 0.0:
                plane = L
                plane_id = 1
            if plane_id < 0:
                px = nx
                pz = nz
                continue
            # Bisection on the step fraction pins the crossing point.
            lo = 0.0
            hi2 = hi
            start_side = 1.0 if pz > plane else -1.0
            for _ in range(40):
                mid = 0.5 * (lo + hi2)
                tx, tz, _ = _rk4_step(px, pz, mid, cx, cz, w)
                if (1.0 if tz > plane else -1.0) == start_side:
                    lo = mid
                else:
                    hi2 = mid
                if hi2 - lo <= cross_tol * 1e-3:
                    break
            cxp, czp, _ = _rk4_step(px, pz, hi2, cx, cz, w)
            s = 1.0 if nz > pz else -1.0
            _, ez_b = _field2(cxp, plane - s * eps, cx, cz, w)
            _, ez_a = _field2(cxp, plane + s * eps, cx, cz, w)
            nu = 1.0 if forward_only else _nu_scalar(ez_b, ez_a)
            idx = ncross if ncross < u_cross.shape[1] else u_cross.shape[1] - 1
            if u_cross[t, idx] < nu:
                terminal_x[t] = cxp
                terminal_plane[t] = plane_id
                status[t] = 0  # OK
                break
            ncross += 1
            if plane_id == 1 and s > 0.0:
                escapes[t] += 1
            if ncross > max_crossings:
                status[t] = 2  # MAX_CROSSINGS
                break
            px = cxp
            pz = plane + s * eps
        crossings[t] = ncross
    return terminal_x, terminal_plane, crossings, escapes, status, forward


def stochastic_transfer_many(
    source_x,
    system: ChargeSystem,
    rng_seed: int,
    step: float | None = None,
    max_crossings: int = 64,
    fan_start: bool = False,
    forward_only: bool = False,
    path_budget: float = 1e6,
):
    """Trace many stochastic plane-to-plane transfers at once.

    Data dimension 1 only (extended dimension 2). `fan_start` spreads the
    launch point uniformly over the half-circle of radius eps around the
    start, the correct line-bundle sampling when the source plate carries
    discrete point charges; the default launches from the axial offset
    (x, +-eps). `forward_only` forces the forward branch and a stop at the
    first plane crossing, the naive baseline behaviour. `path_budget` caps
    the trace arc length in units of the gap; only lines asymptoting to a
    separatrix ever reach it.

    Returns a dict of per-trace arrays: terminal_x, terminal_plane (0 or 1
    for z=0 / z=L), crossings, escapes (continued exits past z=L), status,
    forward (branch taken).
    """
    if system.extended_dim != 2:
        raise ValueError("stochastic transfer supports data dimension 1 only")
    xs = np.ascontiguousarray(np.atleast_1d(np.asarray(source_x, dtype=np.float64)))
    T = xs.shape[0]
    L = system.gap
    eps = LIMIT_EPS_FACTOR * L
    h = RK4_STEP_FACTOR * L if step is None else float(step)
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    charges, weights = _system_arrays(system)
    cx = np.ascontiguousarray(charges[:, 0])
    cz = np.ascontiguousarray(charges[:, 1])
    sink_x = np.ascontiguousarray(system.negatives[:, 0])

    rng = np.random.default_rng(rng_seed)
    u_branch = rng.random(T)
    fan_theta = rng.uniform(-np.pi / 2.0, np.pi / 2.0, T)
    u_cross = rng.random((T, max_crossings + 1))

    radius_sys = 2.0 * max(float(np.abs(cx - cx.mean()).max()), L)
    terminal_x, terminal_plane, crossings, escapes, status, forward = _trace_kernel(
        xs,
        u_branch,
        fan_theta,
        u_cross,
        cx,
        cz,
        weights,
        sink_x,
        L,
        eps,
        h,
        max_crossings,
        fan_start,
        forward_only,
        path_budget * L,
        radius_sys,
        float(cx.mean()),
    )
    return {
        "terminal_x": terminal_x,
        "terminal_plane": terminal_plane,
        "crossings": crossings,
        "escapes": escapes,
        "status": status,
        "forward": forward,
    }


def stochastic_transfer(
    source_x: float,
    system: ChargeSystem,
    rng_seed: int,
    step: float | None = None,
    max_crossings: int = 64,
    fan_start: bool = False,
):
    """Transfer a single source coordinate along the stochastic map.

    Returns (terminal_x, diagnostics) where diagnostics carries the crossing
    and escape counts and the terminal plane. Raises on a stalled line (field
    magnitude below the floor mid-trace) or when max_crossings is exceeded.
    """
    res = stochastic_transfer_many(
        [float(source_x)],
        system,
        rng_seed,
        step=step,
        max_crossings=max_crossings,
        fan_start=fan_start,
    )
    status = int(res["status"][0])
    if status == TraceStatus.STALLED:
        raise RuntimeError("field line stalled: magnitude below 1e-12 mid-trace")
    if status == TraceStatus.MAX_CROSSINGS:
        raise RuntimeError(f"trace exceeded max_crossings={max_crossings}")
    if status == TraceStatus.BUDGET:
        raise RuntimeError("trace exceeded its path-length budget")
    diagnostics = {
        "crossings": int(res["crossings"][0]),
        "escapes": int(res["escapes"][0]),
        "terminal_plane": int(res["terminal_plane"][0]),
        "forward": bool(res["forward"][0]),
    }
    return float(res["terminal_x"][0]), diagnostics
