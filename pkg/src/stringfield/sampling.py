"""Plane-to-plane transfer by integrating the field with z as the clock.

Rewriting line-following with the plate axis as the integration variable
gives dx/dz = v_x / v_z and dz/dz = 1, so the start (z=0) and stop (z=L)
conditions are explicit and any positive rescaling of the field drops out of
the step. The field may come from a trained regressor (EMA weights by
default) or from the exact superposition over a full-dataset pair batch.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import ExtendedPoint, FieldVector, PairBatch, Plate, PointCloud, StringParams
from .superpose import superpose_grid
from .training import FieldModel

__all__ = [
    "ModelField",
    "OracleField",
    "TraceResult",
    "euler_step",
    "transfer",
    "write_traces",
    "VZ_FLOOR",
    "CLAMP_BUDGET",
]

VZ_FLOOR = 1e-8
CLAMP_BUDGET = 10

# The exact field vanishes identically on the plates, so oracle evaluations at
# the very first step are taken at this height instead of z=0; it realizes the
# one-sided limit, which points along each pair's own string.
ORACLE_Z_FLOOR_FACTOR = 1e-9

STATUS_COMPLETED = "completed"
STATUS_DEGENERATE = "degenerate-field"
STATUS_CLAMPED = "clamped-denominator"


@dataclass(frozen=True)
class ModelField:
    """Trained regressor as the field; EMA weights unless told otherwise.
    The plate gap the model was trained for must travel with it."""

    model: FieldModel
    gap: float
    use_ema: bool = True

    def evaluate(self, points_x: np.ndarray, z: float) -> np.ndarray:
        pts = np.column_stack([points_x, np.full(len(points_x), z)])
        return self.model.forward(pts, use_ema=self.use_ema)

    @property
    def data_dim(self) -> int:
        return self.model.data_dim


@dataclass(frozen=True)
class OracleField:
    """Exact superposed field over a fixed pair batch (typically the whole
    dataset); removes regression error from transfer experiments."""

    batch: PairBatch
    params: StringParams

    def evaluate(self, points_x: np.ndarray, z: float) -> np.ndarray:
        z_floor = ORACLE_Z_FLOOR_FACTOR * self.batch.geometry.gap
        return superpose_grid(points_x, max(z, z_floor), self.batch, self.params)

    @property
    def data_dim(self) -> int:
        return self.batch.dim

    @property
    def gap(self) -> float:
        return self.batch.geometry.gap


@dataclass(frozen=True)
class TraceResult:
    """One integrated trace: the visited extended points and how it ended.

    status is "completed", "clamped-denominator" (finished, but 1..10 steps
    needed the axial-component floor; detail carries the count) or
    "degenerate-field" (the clamp budget ran out; detail is the step index,
    and the in-plane coordinates are frozen from there on).
    """

    path: np.ndarray  # (steps+1, D+1)
    status: str
    detail: int = 0


def euler_step(point: ExtendedPoint, field: FieldVector, dtau: float) -> ExtendedPoint:
    """One explicit step of the z-clocked line ODE.

    Requires the axial component to sit above the clamp floor; callers doing
    their own clamping (like `transfer`) enforce that before stepping.
    """
    if dtau <= 0:
        raise ValueError(f"dtau must be positive, got {dtau}")
    vz = field.v_z
    if abs(vz) < VZ_FLOOR:
        raise ValueError(
            f"axial field component {vz!r} below the {VZ_FLOOR} clamp floor"
        )
    return ExtendedPoint(x=point.x + (field.v_x / vz) * dtau, z=point.z + dtau)


def transfer(source: PointCloud, field_source, steps: int, record_paths: bool = True):
    """Integrate every source point from z=0 to z=L in `steps` Euler steps.

    Returns (terminal cloud on the target plate, list of TraceResult). Traces
    whose axial component drops below the floor are clamped up to 10 times and
    then frozen in place (only z keeps advancing); such failures are reported
    per trace, never raised.
    """
    if source.plate is not Plate.SOURCE:
        raise ValueError("transfer starts from a source-plate cloud")
    if steps < 1:
        raise ValueError(f"steps must be positive, got {steps}")
    if source.dim != field_source.data_dim:
        raise ValueError(
            f"cloud dimension {source.dim} does not match the field's "
            f"{field_source.data_dim}"
        )
    N, D = source.points.shape
    x = source.points.copy()
    L = field_source.gap
    dtau = L / steps
    paths = np.zeros((N, steps + 1, D + 1)) if record_paths else None
    clamps = np.zeros(N, dtype=np.int64)
    frozen_at = np.full(N, -1, dtype=np.int64)
    if record_paths:
        paths[:, 0, :D] = x
        paths[:, 0, D] = 0.0
    for k in range(steps):
        z = (k * L) / steps
        v = field_source.evaluate(x, z)
        vz = v[:, D]
        vx = v[:, :D]
        live = frozen_at < 0
        zero_rows = np.all(v == 0.0, axis=1)
        small = (np.abs(vz) < VZ_FLOOR) & live
        clamps[small] += 1
        newly_frozen = small & (clamps > CLAMP_BUDGET)
        frozen_at[newly_frozen] = k
        live = frozen_at < 0
        move = live & ~zero_rows
        vz_safe = np.where(np.abs(vz) < VZ_FLOOR, np.copysign(VZ_FLOOR, np.where(vz == 0.0, 1.0, vz)), vz)
        x[move] += (vx[move] / vz_safe[move, None]) * dtau
        if record_paths:
            paths[:, k + 1, :D] = x
            paths[:, k + 1, D] = ((k + 1) * L) / steps
    results = []
    for i in range(N):
        if frozen_at[i] >= 0:
            status, detail = STATUS_DEGENERATE, int(frozen_at[i])
        elif clamps[i] > 0:
            status, detail = STATUS_CLAMPED, int(clamps[i])
        else:
            status, detail = STATUS_COMPLETED, 0
        results.append(
            TraceResult(
                path=paths[i] if record_paths else np.zeros((0, D + 1)),
                status=status,
                detail=detail,
            )
        )
    terminal = PointCloud(points=x, plate=Plate.TARGET)
    return terminal, results


def write_traces(path, traces, seed=None) -> None:
    """Dump traces as CSV rows trace_id, step, x0..x{D-1}, z."""
    if not traces:
        raise ValueError("no traces to write")
    D = traces[0].path.shape[1] - 1
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if seed is not None:
            fh.write(f"# seed={seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["trace_id", "step"] + [f"x{i}" for i in range(D)] + ["z"])
        for tid, tr in enumerate(traces):
            for step, row in enumerate(tr.path):
                writer.writerow([tid, step] + [repr(float(v)) for v in row])
