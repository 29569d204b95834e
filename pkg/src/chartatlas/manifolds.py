"""Seeded samplers for the synthetic manifolds and point-cloud I/O.

Every sampler draws from ``numpy.random.Generator(PCG64(SeedSequence(seed)))``
(what ``numpy.random.default_rng(seed)`` builds), so a cloud is a pure
function of ``(N, seed)`` on every platform numpy supports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HALF_WIDTH = 0.95


@dataclass
class Scaling:
    """Per-coordinate affine map ``y = slope * (x - offset)``.

    ``offset`` is the coordinate's midrange, so a constant coordinate gets
    slope 0 and inverts back to its constant.
    """

    slope: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        self.slope = np.asarray(self.slope, dtype=float)
        self.offset = np.asarray(self.offset, dtype=float)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.slope * (np.asarray(x, dtype=float) - self.offset)

    def invert(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        safe = np.where(self.slope == 0, 1.0, self.slope)
        return np.where(self.slope == 0, self.offset, y / safe + self.offset)

    def to_dict(self) -> dict:
        return {"slope": [float(v) for v in self.slope], "offset": [float(v) for v in self.offset]}

    @classmethod
    def from_dict(cls, raw: dict) -> "Scaling":
        return cls(np.array(raw["slope"], dtype=float), np.array(raw["offset"], dtype=float))


@dataclass
class PointCloud:
    points: np.ndarray  # (N, n), in the scaled frame when ``scaling`` is set
    scaling: Scaling | None = None
    seed: int | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ValueError(f"a point cloud needs shape (N>=1, n), got {self.points.shape}")

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def raw_points(self) -> np.ndarray:
        """Points in the original (unscaled) frame."""
        if self.scaling is None:
            return self.points
        return self.scaling.invert(self.points)


def _check_count(N: int) -> None:
    if N < 1:
        raise ValueError(f"sample count must be at least 1, got {N}")


def sample_circle(N: int, seed: int) -> PointCloud:
    _check_count(N)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2 * np.pi, size=N)
    return PointCloud(np.column_stack([np.cos(theta), np.sin(theta)]), seed=seed)


def sample_torus3(N: int, seed: int) -> PointCloud:
    """3-torus in R^6 as a product of three unit circles."""
    _check_count(N)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2 * np.pi, size=(N, 3))
    cols = []
    for c in range(3):
        cols += [np.cos(theta[:, c]), np.sin(theta[:, c])]
    return PointCloud(np.column_stack(cols), seed=seed)


def rp2_embedding(p: np.ndarray) -> np.ndarray:
    """(x, y, z) on S^2 -> (x^2 - y^2, xy, xz, yz), constant on antipodal pairs."""
    p = np.asarray(p, dtype=float)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    return np.stack([x * x - y * y, x * y, x * z, y * z], axis=-1)


def sample_sphere(N: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal(size=(N, 3))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def sample_rp2(N: int = 10_000, seed: int = 0) -> PointCloud:
    _check_count(N)
    rng = np.random.default_rng(seed)
    return PointCloud(rp2_embedding(sample_sphere(N, rng)), seed=seed)


SAMPLERS = {"circle": sample_circle, "torus3": sample_torus3, "rp2": sample_rp2}


def rescale(cloud: PointCloud, half_width: float = HALF_WIDTH) -> PointCloud:
    """Map each coordinate's range affinely onto ``[-half_width, half_width]``."""
    x = cloud.raw_points()
    lo, hi = x.min(axis=0), x.max(axis=0)
    offset = (lo + hi) / 2
    radius = (hi - lo) / 2
    slope = np.where(radius > 0, half_width / np.where(radius > 0, radius, 1.0), 0.0)
    scaling = Scaling(slope, offset)
    return PointCloud(scaling.apply(x), scaling, cloud.seed)


# --- CSV + sidecar -----------------------------------------------------------

def write_cloud(cloud: PointCloud, path) -> None:
    """Headerless CSV of the raw points plus ``<path>.meta.json``."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for row in cloud.raw_points():
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    meta = {
        "n": cloud.n,
        "N": len(cloud),
        "seed": cloud.seed,
        "scaling": None if cloud.scaling is None else cloud.scaling.to_dict(),
    }
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_cloud(path) -> PointCloud:
    """Read a headerless CSV; a sidecar's scaling record is re-applied if present."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: not a numeric CSV row") from exc
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: expected a nonempty CSV with equal-length rows")
    cloud = PointCloud(np.array(rows))
    meta_path = Path(str(path) + ".meta.json")
    if meta_path.is_file():
        meta = json.loads(meta_path.read_text())
        cloud.seed = meta.get("seed")
        if meta.get("scaling") is not None:
            scaling = Scaling.from_dict(meta["scaling"])
            cloud = PointCloud(scaling.apply(cloud.points), scaling, cloud.seed)
    return cloud
