"""Toy dataset generators and point-cloud persistence.

Clouds are stored as plain CSV: optional "# key=value" comment lines, a
header row x0..x{D-1}, then one point per line in full-precision decimals
(UTF-8, LF endings). The plate tag travels in the filename convention
source_*.csv / target_*.csv unless given explicitly.
"""
from __future__ import annotations

import os

import numpy as np

from .core import Plate, PointCloud

__all__ = [
    "make_gaussian",
    "make_swiss_roll",
    "make_two_gaussians",
    "write_cloud",
    "read_cloud",
    "SWISS_ROLL_T_RANGE",
]

# Spiral parameter range; the 0.4/pi radial scaling keeps the roll comparable
# in extent to a unit Gaussian.
SWISS_ROLL_T_RANGE = (1.5 * np.pi, 4.5 * np.pi)


def make_gaussian(n, dim, mean=0.0, scale=1.0, seed=0, plate=Plate.SOURCE) -> PointCloud:
    """n i.i.d. draws from an isotropic Gaussian in R^dim."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    pts = mean + scale * rng.standard_normal((n, dim))
    return PointCloud(points=pts, plate=plate)


def make_swiss_roll(n, noise_sd=0.0, seed=0, scale=0.4, plate=Plate.TARGET) -> PointCloud:
    """2D spiral cloud: t ~ U[1.5pi, 4.5pi], point = scale*(t cos t, t sin t)/pi
    plus isotropic Gaussian jitter of standard deviation noise_sd."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    t = rng.uniform(*SWISS_ROLL_T_RANGE, size=n)
    pts = (scale / np.pi) * np.column_stack([t * np.cos(t), t * np.sin(t)])
    if noise_sd > 0:
        pts += noise_sd * rng.standard_normal((n, 2))
    return PointCloud(points=pts, plate=plate)


def make_two_gaussians(n, separation, seed=0, plate=Plate.TARGET) -> PointCloud:
    """Balanced 1D mixture of two unit-scale Gaussians at +-separation/2."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    signs = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    pts = signs * separation / 2.0 + rng.standard_normal(n)
    return PointCloud(points=pts[:, None], plate=plate)


def write_cloud(path, cloud: PointCloud, seed=None) -> None:
    """Write a cloud as CSV. A seed, when given, is echoed as a comment header."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# plate={cloud.plate.value}\n")
        if seed is not None:
            fh.write(f"# seed={seed}\n")
        fh.write(",".join(f"x{i}" for i in range(cloud.dim)) + "\n")
        for row in cloud.points:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _plate_from_name(path):
    base = os.path.basename(path)
    if base.startswith("source_"):
        return Plate.SOURCE
    if base.startswith("target_"):
        return Plate.TARGET
    return None


def read_cloud(path, plate=None) -> PointCloud:
    """Read a cloud CSV back; values round-trip exactly.

    The plate comes from the explicit argument, a "# plate=" comment, or the
    source_*/target_* filename convention, in that order. Malformed headers,
    ragged rows and non-finite entries are rejected with the line number.
    """
    rows = []
    dim = None
    header_seen = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("plate=") and plate is None:
                    plate = Plate(body.split("=", 1)[1])
                continue
            if not header_seen:
                cols = line.split(",")
                if cols != [f"x{i}" for i in range(len(cols))]:
                    raise ValueError(f"{path}:{lineno}: malformed header {line!r}")
                dim = len(cols)
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != dim:
                raise ValueError(
                    f"{path}:{lineno}: expected {dim} columns, got {len(parts)}"
                )
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: unparsable value in {line!r}") from None
            if not all(np.isfinite(v) for v in vals):
                raise ValueError(f"{path}:{lineno}: non-finite entry in {line!r}")
            rows.append(vals)
    if not header_seen:
        raise ValueError(f"{path}: missing header row")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if plate is None:
        plate = _plate_from_name(path)
    if plate is None:
        raise ValueError(
            f"{path}: plate not given, not in comments, and filename does not "
            f"follow the source_*/target_* convention"
        )
    return PointCloud(points=np.array(rows), plate=plate)
