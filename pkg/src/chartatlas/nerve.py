"""Čech nerve of a learned atlas, built from the chart-membership matrix.

Two overlap tests are supported:

* ``method1``: charts overlap when some sample has membership above ``eps``
  in every one of them;
* ``method2``: charts overlap when their expected co-membership score ``u``
  exceeds ``eps``.

Higher simplices are only tested once all of their facets are present.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .homology import HomologyReport, SimplicialComplex, homology_groups

log = logging.getLogger(__name__)

METHODS = ("method1", "method2")


class EmptyChartError(ValueError):
    pass


class DegenerateIntersectionError(ValueError):
    pass


def check_membership(m, tol: float = 1e-6) -> np.ndarray:
    """Validate an N x k row-stochastic matrix; returns it as a float array."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise ValueError(f"membership matrix must be a nonempty N x k array, got shape {m.shape}")
    bad = np.flatnonzero((m < -tol).any(axis=1) | (np.abs(m.sum(axis=1) - 1.0) > tol))
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"membership row {i} is not a probability vector (sum={m[i].sum():.6g})")
    return m


def _subset(m: np.ndarray, subset) -> tuple:
    s = tuple(sorted(int(j) for j in subset))
    if len(s) == 0 or len(set(s)) != len(s):
        raise ValueError(f"subset {subset} must contain distinct chart indices")
    if s[0] < 0 or s[-1] >= m.shape[1]:
        raise IndexError(f"chart index out of range in {subset} for k={m.shape[1]}")
    return s


def overlap_method1(m, subset, eps: float) -> bool:
    m = np.asarray(m, dtype=float)
    s = _subset(m, subset)
    return bool((m[:, s] > eps).all(axis=1).any())


def _score(m: np.ndarray, s: tuple) -> float:
    cols = m[:, s]
    full = cols.prod(axis=1).sum()
    total = 0.0
    for r in range(len(s)):
        norm = np.delete(cols, r, axis=1).prod(axis=1).sum()
        if norm <= 0:
            if len(s) == 2:
                raise EmptyChartError(f"chart {s[1 - r]} has zero total membership")
            raise DegenerateIntersectionError(
                f"intersection of charts {s[:r] + s[r + 1:]} has zero mass"
            )
        total += full / norm
    u = total / len(s)
    if not 0.0 <= u <= 1.0:
        log.warning("overlap score %.17g for charts %s clamped to [0, 1]", u, s)
        u = min(max(u, 0.0), 1.0)
    return float(u)


def overlap_u2(m, j0: int, j1: int) -> float:
    """Symmetrised pairwise overlap of two charts.

    ``u = 1/2 (1/sum_i q0 + 1/sum_i q1) * sum_i q0 q1`` with ``q0 = q(j0|x_i)``.
    """
    m = np.asarray(m, dtype=float)
    s = _subset(m, (j0, j1))
    if len(s) != 2:
        raise ValueError("overlap_u2 needs two distinct charts")
    return _score(m, s)


def overlap_higher(m, subset, cx: SimplicialComplex | None = None) -> float:
    """Overlap of three or more charts.

    Each term divides ``sum_i prod_r q(j_r|x_i)`` by the same sum with one
    chart left out; the score averages these over the omitted chart. When
    ``cx`` is given, every facet of ``subset`` must already be in it.
    """
    m = np.asarray(m, dtype=float)
    s = _subset(m, subset)
    if len(s) < 3:
        raise ValueError("overlap_higher needs at least three charts; use overlap_u2 for pairs")
    if cx is not None:
        missing = [f for f in combinations(s, len(s) - 1) if f not in cx]
        if missing:
            raise ValueError(f"facets {missing} of {s} are not in the complex")
    return _score(m, s)


@dataclass
class NerveConfig:
    method: str = "method2"
    epsilon: float = 0.1
    max_dimension: int = 3

    def __post_init__(self):
        if self.method in ("1", "2", 1, 2):
            self.method = f"method{self.method}"
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.max_dimension < 1:
            raise ValueError(f"max_dimension must be >= 1, got {self.max_dimension}")


def build_nerve(m, cfg: NerveConfig) -> SimplicialComplex:
    m = np.asarray(m, dtype=float)
    N, k = m.shape
    eps = cfg.epsilon
    cx = SimplicialComplex()
    if cfg.method == "method1":
        above = m > eps
        verts = [j for j in range(k) if above[:, j].any()]

        def test(s):
            return bool(above[:, s].all(axis=1).any())

    else:
        verts = [j for j in range(k) if m[:, j].mean() > eps / k]

        def test(s):
            return _score(m, s) > eps

    for v in verts:
        cx.add((v,))
    layer = [(v,) for v in verts]
    for dim in range(1, cfg.max_dimension + 1):
        present = set(layer)
        nxt = []
        for s in combinations(verts, dim + 1):
            if all(f in present for f in combinations(s, dim)) and test(s):
                cx.add(s)
                nxt.append(s)
        if not nxt:
            break
        layer = nxt
    return cx


def pairwise_scores(m) -> dict[tuple, float]:
    """``u`` for every pair of charts with nonzero mass."""
    m = np.asarray(m, dtype=float)
    live = [j for j in range(m.shape[1]) if m[:, j].sum() > 0]
    return {s: _score(m, s) for s in combinations(live, 2)}


def overlap_scores(m, max_dimension: int = 2) -> dict[tuple, float]:
    """Scores for all subsets reachable by the bootstrap rule when every score counts as an overlap."""
    m = np.asarray(m, dtype=float)
    scores = pairwise_scores(m)
    layer = {s for s, u in scores.items() if u > 0}
    verts = sorted({v for s in scores for v in s})
    for dim in range(2, max_dimension + 1):
        nxt = set()
        for s in combinations(verts, dim + 1):
            if all(f in layer for f in combinations(s, dim)):
                scores[s] = _score(m, s)
                if scores[s] > 0:
                    nxt.add(s)
        layer = nxt
    return scores


def default_epsilon_grid() -> np.ndarray:
    return np.geomspace(1e-6, 0.5, 40)


def parse_epsilon_grid(spec: str) -> np.ndarray:
    """``START:STOP:COUNT`` -> geometric grid."""
    try:
        start, stop, count = spec.split(":")
        grid = np.geomspace(float(start), float(stop), int(count))
    except ValueError as exc:
        raise ValueError(f"epsilon grid must look like START:STOP:COUNT, got {spec!r}") from exc
    if grid.size == 0 or grid.min() <= 0 or grid.max() >= 1:
        raise ValueError(f"epsilon grid values must lie in (0, 1), got {spec!r}")
    return grid


@dataclass
class SweepRow:
    epsilon: float
    complex: SimplicialComplex
    homology: HomologyReport

    @property
    def log_epsilon(self) -> float:
        return math.log(self.epsilon)


def epsilon_sweep(m, method: str, grid=None, max_dimension: int = 3) -> list[SweepRow]:
    grid = default_epsilon_grid() if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) < 0):
        raise ValueError("epsilon grid must be sorted")
    rows = []
    for eps in grid:
        cx = build_nerve(m, NerveConfig(method, float(eps), max_dimension))
        rows.append(SweepRow(float(eps), cx, homology_groups(cx, max(1, min(max_dimension, cx.dimension)))))
    return rows


def write_barcode_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["log_epsilon", "betti_0", "betti_1", "torsion_1"])
        for r in rows:
            h1 = r.homology[1]
            w.writerow([repr(r.log_epsilon), r.homology[0].betti, h1.betti, ";".join(map(str, h1.torsion))])


def export_one_skeleton(scores: dict[tuple, float], fraction: float = 1 / 3) -> list[tuple[int, int, float]]:
    """Strongest pairwise overlaps, sorted by score descending.

    Keeps the top ``ceil(fraction * #positive pairs)`` edges plus anything tied
    with the last one kept.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    pairs = sorted(((s, u) for s, u in scores.items() if len(s) == 2 and u > 0), key=lambda t: (-t[1], t[0]))
    if not pairs:
        return []
    keep = math.ceil(fraction * len(pairs))
    cutoff = pairs[keep - 1][1]
    return [(s[0], s[1], u) for s, u in pairs if u >= cutoff]


def write_edges_csv(edges, path, offset: int = 1) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j0", "j1", "u"])
        for a, b, u in edges:
            w.writerow([a + offset, b + offset, repr(float(u))])


def read_membership_csv(path, tol: float = 1e-3) -> np.ndarray:
    """Headerless CSV of membership rows; rows must be probability vectors within ``tol``."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append([float(v) for v in line.split(",")])
    if not rows or len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: expected a nonempty CSV with equal-length rows")
    return check_membership(np.array(rows), tol)
