"""Value types shared across the library.

Convention: the data distributions live on two parallel hyperplanes in the
extended space R^(D+1). The source plate sits at z=0, the target plate at
z=L, and the last coordinate of every extended vector is the plate axis z.
All reals are double precision.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Plate",
    "PlateGeometry",
    "StringParams",
    "ExtendedPoint",
    "FieldVector",
    "PointCloud",
    "PairBatch",
    "validate_geometry",
    "as_readonly",
]


def as_readonly(a, ndim=None, name="array"):
    """Copy `a` into a locked float64 array, rejecting non-finite entries."""
    arr = np.array(a, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimension(s), got shape {arr.shape}")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


class Plate(enum.Enum):
    """Which of the two charged hyperplanes a cloud sits on."""

    SOURCE = "source"  # z = 0
    TARGET = "target"  # z = L

    def height(self, geometry: "PlateGeometry") -> float:
        return 0.0 if self is Plate.SOURCE else geometry.gap


@dataclass(frozen=True)
class PlateGeometry:
    """Data dimension D and plate separation L along the z axis."""

    data_dim: int
    gap: float

    def __post_init__(self):
        if not isinstance(self.data_dim, (int, np.integer)) or self.data_dim < 1:
            raise ValueError(f"data_dim must be a positive integer, got {self.data_dim!r}")
        if not (math.isfinite(self.gap) and self.gap > 0):
            raise ValueError(f"gap must be a positive finite real, got {self.gap!r}")
        object.__setattr__(self, "data_dim", int(self.data_dim))
        object.__setattr__(self, "gap", float(self.gap))


@dataclass(frozen=True)
class StringParams:
    """Cross-section width sigma0 and curved-cap depth d of one string.

    The derived wavenumber k = pi / (2 d) is never stored; it is recomputed
    from d on every access so the two can never drift apart.
    """

    sigma0: float
    d: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma0) and self.sigma0 > 0):
            raise ValueError(f"sigma0 must be a positive finite real, got {self.sigma0!r}")
        if not (math.isfinite(self.d) and self.d > 0):
            raise ValueError(f"d must be a positive finite real, got {self.d!r}")
        object.__setattr__(self, "sigma0", float(self.sigma0))
        object.__setattr__(self, "d", float(self.d))

    @property
    def k(self) -> float:
        return math.pi / (2.0 * self.d)


def validate_geometry(geometry: PlateGeometry, params: StringParams) -> None:
    """Check the joint invariants of a plate geometry and string parameters.

    Raises ValueError naming the violated invariant. The per-field checks run
    at construction time already; the only joint constraint is d <= L/2 so the
    two curved caps fit inside the gap.
    """
    if params.d > geometry.gap / 2.0:
        raise ValueError(
            f"cap depth d={params.d} exceeds half the plate gap L/2={geometry.gap / 2.0}"
        )


@dataclass(frozen=True)
class ExtendedPoint:
    """A point (x, z) of the extended space, x in R^D and z along the plate axis."""

    x: np.ndarray
    z: float

    def __post_init__(self):
        object.__setattr__(self, "x", as_readonly(self.x, ndim=1, name="x"))
        if not math.isfinite(self.z):
            raise ValueError(f"z must be finite, got {self.z!r}")
        object.__setattr__(self, "z", float(self.z))

    @property
    def dim(self) -> int:
        return self.x.shape[0]

    @property
    def extended(self) -> np.ndarray:
        """The full (D+1)-vector with z appended."""
        return np.append(self.x, self.z)


@dataclass(frozen=True)
class FieldVector:
    """A field value in extended space. The zero vector means "no field here"."""

    v: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "v", as_readonly(self.v, ndim=1, name="v"))

    @property
    def v_x(self) -> np.ndarray:
        return self.v[:-1]

    @property
    def v_z(self) -> float:
        return float(self.v[-1])

    def norm(self) -> float:
        return float(np.linalg.norm(self.v))


@dataclass(frozen=True)
class PointCloud:
    """N samples of a D-dimensional distribution tagged with its plate."""

    points: np.ndarray
    plate: Plate

    def __post_init__(self):
        object.__setattr__(self, "points", as_readonly(self.points, ndim=2, name="points"))
        if self.points.shape[0] < 1:
            raise ValueError("a point cloud needs at least one row")
        if not isinstance(self.plate, Plate):
            raise ValueError(f"plate must be a Plate, got {self.plate!r}")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class PairBatch:
    """B matched source/target sample pairs drawn from a transport plan.

    Row i of `source_x` (implicitly at z=0) is paired with row i of
    `target_x` (implicitly at z=L).
    """

    source_x: np.ndarray
    target_x: np.ndarray
    geometry: PlateGeometry

    def __post_init__(self):
        object.__setattr__(self, "source_x", as_readonly(self.source_x, ndim=2, name="source_x"))
        object.__setattr__(self, "target_x", as_readonly(self.target_x, ndim=2, name="target_x"))
        if self.source_x.shape != self.target_x.shape:
            raise ValueError(
                f"source and target batches must match, got {self.source_x.shape} "
                f"vs {self.target_x.shape}"
            )
        if self.source_x.shape[0] < 1:
            raise ValueError("a pair batch needs at least one pair")
        if self.source_x.shape[1] != self.geometry.data_dim:
            raise ValueError(
                f"pair dimension {self.source_x.shape[1]} does not match "
                f"geometry data_dim {self.geometry.data_dim}"
            )

    @property
    def batch_size(self) -> int:
        return self.source_x.shape[0]

    @property
    def dim(self) -> int:
        return self.source_x.shape[1]
