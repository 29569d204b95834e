"""Integral simplicial homology via Smith normal form."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable

import numpy as np

# int64 elimination switches to Python integers once entries pass this bound,
# so a row update (|q| * |entry| <= bound^2) cannot overflow.
_INT64_SAFE = 2**31


class ComplexError(ValueError):
    pass


class SimplicialComplex:
    """Abstract simplicial complex, simplices stored as sorted vertex tuples per dimension."""

    def __init__(self, simplices: Iterable[Iterable[int]] = (), close: bool = False):
        self._by_dim: list[set[tuple]] = []
        for s in simplices:
            self._add(tuple(sorted(int(v) for v in s)), close)
        if not close:
            self.check_closed()

    def _add(self, s: tuple, close: bool) -> None:
        if len(s) == 0:
            return
        if len(set(s)) != len(s):
            raise ComplexError(f"simplex {s} repeats a vertex")
        dim = len(s) - 1
        while len(self._by_dim) <= dim:
            self._by_dim.append(set())
        if s in self._by_dim[dim]:
            return
        self._by_dim[dim].add(s)
        if close and dim > 0:
            for face in combinations(s, dim):
                self._add(face, True)

    @classmethod
    def closure(cls, simplices: Iterable[Iterable[int]]) -> "SimplicialComplex":
        """Smallest complex containing ``simplices``."""
        return cls(simplices, close=True)

    def add(self, simplex: Iterable[int]) -> None:
        """Add a simplex whose facets are already present."""
        s = tuple(sorted(int(v) for v in simplex))
        if len(s) > 1:
            missing = [f for f in combinations(s, len(s) - 1) if f not in self.simplices(len(s) - 2)]
            if missing:
                raise ComplexError(f"cannot add {s}: missing faces {missing}")
        self._add(s, False)

    def check_closed(self) -> None:
        for dim in range(1, len(self._by_dim)):
            lower = self._by_dim[dim - 1]
            for s in self._by_dim[dim]:
                for face in combinations(s, dim):
                    if face not in lower:
                        raise ComplexError(f"face {face} of {s} is missing: complex not downward-closed")

    def simplices(self, dim: int) -> list[tuple]:
        if dim < 0 or dim >= len(self._by_dim):
            return []
        return sorted(self._by_dim[dim])

    @property
    def dimension(self) -> int:
        for dim in range(len(self._by_dim) - 1, -1, -1):
            if self._by_dim[dim]:
                return dim
        return -1

    @property
    def vertices(self) -> list[int]:
        return [s[0] for s in self.simplices(0)]

    def all_simplices(self) -> list[tuple]:
        return [s for dim in range(self.dimension + 1) for s in self.simplices(dim)]

    def __contains__(self, simplex) -> bool:
        s = tuple(sorted(simplex))
        return 0 < len(s) <= len(self._by_dim) and s in self._by_dim[len(s) - 1]

    def __len__(self) -> int:
        return sum(len(s) for s in self._by_dim)

    def __eq__(self, other) -> bool:
        return isinstance(other, SimplicialComplex) and set(self.all_simplices()) == set(other.all_simplices())

    def __repr__(self) -> str:
        counts = [len(self.simplices(d)) for d in range(self.dimension + 1)]
        return f"SimplicialComplex(f-vector={counts})"

    def is_subcomplex_of(self, other: "SimplicialComplex") -> bool:
        return all(s in other for s in self.all_simplices())

    def relabel(self, mapping) -> "SimplicialComplex":
        return SimplicialComplex([[mapping[v] for v in s] for s in self.all_simplices()])

    def write(self, path, offset: int = 0) -> None:
        """One simplex per line as space-separated sorted vertex labels (``v + offset``)."""
        with open(path, "w", encoding="utf-8") as fh:
            for s in self.all_simplices():
                fh.write(" ".join(str(v + offset) for v in s) + "\n")

    @classmethod
    def read(cls, path, offset: int = 0) -> "SimplicialComplex":
        with open(path, encoding="utf-8") as fh:
            return cls([[int(v) - offset for v in line.split()] for line in fh if line.strip()])


def boundary_matrix(cx: SimplicialComplex, dim: int) -> np.ndarray:
    """Integer matrix of the boundary map from ``dim``-chains to ``(dim-1)``-chains.

    Rows follow ``cx.simplices(dim - 1)``, columns ``cx.simplices(dim)``; the
    facet omitting position ``i`` enters with sign ``(-1)**i``.
    """
    if dim < 1:
        raise ValueError("boundary maps start in dimension 1")
    rows = cx.simplices(dim - 1)
    cols = cx.simplices(dim)
    index = {s: r for r, s in enumerate(rows)}
    out = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for c, s in enumerate(cols):
        for i in range(len(s)):
            face = s[:i] + s[i + 1 :]
            if face not in index:
                raise ComplexError(f"face {face} of {s} is missing: complex not downward-closed")
            out[index[face], c] = 1 if i % 2 == 0 else -1
    return out


def _invariant_factors(diag: list[int]) -> list[int]:
    """Turn any nonzero diagonal into the divisibility chain with the same cokernel."""
    d = sorted(abs(int(v)) for v in diag)
    for i in range(len(d)):
        for j in range(i + 1, len(d)):
            g = math.gcd(d[i], d[j])
            if g != d[i]:
                d[i], d[j] = g, d[i] // g * d[j]
    return d


def smith_normal_form(a) -> tuple[list[int], int]:
    """Nonzero Smith normal form diagonal ``d1 | d2 | ...`` and the rank of an integer matrix.

    Elimination picks a pivot of minimal absolute value each round. It runs in
    int64 while entries stay below 2**31 and then continues with Python
    integers, so the result is exact for any input.
    """
    src = np.asarray(a)
    if src.ndim != 2:
        raise ValueError("expected a 2-D integer matrix")
    m, n = src.shape
    values = [int(v) for v in src.ravel().tolist()]
    if any(v != w for v, w in zip(values, src.ravel().tolist())):
        raise ValueError("matrix has non-integer entries")
    big = any(abs(v) >= _INT64_SAFE for v in values)
    A = np.empty((m, n), dtype=object if big else np.int64)
    A.ravel()[:] = values
    if A.size == 0:
        return [], 0
    diag: list[int] = []
    t = 0
    while t < min(m, n):
        sub = A[t:, t:]
        nz = np.nonzero(sub)
        if len(nz[0]) == 0:
            break
        mags = np.abs(sub[nz])
        best = int(np.argmin(mags))
        r, c = nz[0][best] + t, nz[1][best] + t
        if r != t:
            A[[t, r]] = A[[r, t]]
        if c != t:
            A[:, [t, c]] = A[:, [c, t]]
        while True:
            p = A[t, t]
            col = A[t + 1 :, t]
            if np.any(col):
                q = col // p
                A[t + 1 :] -= q[:, None] * A[t]
            row = A[t, t + 1 :]
            if np.any(row):
                q = row // p
                A[:, t + 1 :] -= A[:, t][:, None] * q[None, :]
            if A.dtype != object and np.abs(A).max() >= _INT64_SAFE:
                A = A.astype(object)
            col, row = A[t + 1 :, t], A[t, t + 1 :]
            if not np.any(col) and not np.any(row):
                break
            # remainders smaller than the pivot remain: move the smallest onto the diagonal
            cand = [(abs(int(v)), i + t + 1, t) for i, v in enumerate(col) if v != 0]
            cand += [(abs(int(v)), t, i + t + 1) for i, v in enumerate(row) if v != 0]
            _, r, c = min(cand)
            if r != t:
                A[[t, r]] = A[[r, t]]
            if c != t:
                A[:, [t, c]] = A[:, [c, t]]
        diag.append(int(A[t, t]))
        t += 1
    return _invariant_factors(diag), len(diag)


@dataclass
class HomologyGroup:
    betti: int
    torsion: list[int] = field(default_factory=list)

    def __str__(self) -> str:
        parts = []
        if self.betti == 1:
            parts.append("Z")
        elif self.betti > 1:
            parts.append(f"Z^{self.betti}")
        parts += [f"Z/{t}" for t in self.torsion]
        return " (+) ".join(parts) if parts else "0"


@dataclass
class HomologyReport:
    groups: list[HomologyGroup]

    def __getitem__(self, degree: int) -> HomologyGroup:
        if degree < len(self.groups):
            return self.groups[degree]
        return HomologyGroup(0)

    @property
    def betti(self) -> list[int]:
        return [g.betti for g in self.groups]

    def __str__(self) -> str:
        return "\n".join(f"H_{l} = {g}" for l, g in enumerate(self.groups))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["degree", "betti", "torsion"])
            for l, g in enumerate(self.groups):
                w.writerow([l, g.betti, ";".join(str(t) for t in g.torsion)])


def homology_groups(cx: SimplicialComplex, max_degree: int | None = None) -> HomologyReport:
    """Unreduced integral homology ``H_0 .. H_max_degree``."""
    if max_degree is None:
        max_degree = max(cx.dimension, 0)
    counts = [len(cx.simplices(l)) for l in range(max_degree + 2)]
    ranks = [0] * (max_degree + 2)
    torsion = [[] for _ in range(max_degree + 2)]
    for l in range(1, max_degree + 2):
        if counts[l] == 0 or counts[l - 1] == 0:
            continue
        diag, rank = smith_normal_form(boundary_matrix(cx, l))
        ranks[l] = rank
        torsion[l - 1] = [v for v in diag if v > 1]
    groups = [
        HomologyGroup(counts[l] - ranks[l] - ranks[l + 1], torsion[l]) for l in range(max_degree + 1)
    ]
    return HomologyReport(groups)
