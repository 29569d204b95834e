from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chartatlas.homology import (
    ComplexError,
    SimplicialComplex,
    boundary_matrix,
    homology_groups,
    smith_normal_form,
)

# 6-vertex RP^2: antipodal quotient of the icosahedron
RP2_TRIANGLES = [
    (0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 5), (0, 5, 1),
    (1, 2, 4), (2, 3, 5), (3, 4, 1), (4, 5, 2), (5, 1, 3),
]


def rational_rank(mat) -> int:
    rows = [[Fraction(int(v)) for v in row] for row in np.asarray(mat).tolist()]
    rank, ncols = 0, len(rows[0]) if rows else 0
    for c in range(ncols):
        pivot = next((r for r in range(rank, len(rows)) if rows[r][c] != 0), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for r in range(len(rows)):
            if r != rank and rows[r][c] != 0:
                f = rows[r][c] / rows[rank][c]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
    return rank


def rational_betti(cx, max_degree):
    ranks = {}
    for l in range(1, max_degree + 2):
        b = boundary_matrix(cx, l)
        ranks[l] = rational_rank(b) if b.size else 0
    return [len(cx.simplices(l)) - ranks.get(l, 0) - ranks[l + 1] for l in range(max_degree + 1)]


def cofactor_det(m):
    m = [list(r) for r in m]
    if len(m) == 1:
        return m[0][0]
    return sum((-1) ** c * m[0][c] * cofactor_det([row[:c] + row[c + 1:] for row in m[1:]]) for c in range(len(m)))


def random_complex(rng, max_vertices=12, max_dim=3):
    nv = int(rng.integers(1, max_vertices + 1))
    tops = []
    for _ in range(int(rng.integers(1, 16))):
        size = int(rng.integers(1, min(max_dim + 1, nv) + 1))
        tops.append(rng.choice(nv, size=size, replace=False))
    return SimplicialComplex.closure(tops)


def test_point():
    rep = homology_groups(SimplicialComplex([(0,)]), 2)
    assert rep.betti == [1, 0, 0]
    assert all(g.torsion == [] for g in rep.groups)


def test_hollow_triangle_is_circle():
    cx = SimplicialComplex.closure([(0, 1), (1, 2), (0, 2)])
    rep = homology_groups(cx, 1)
    assert rep.betti == [1, 1] and rep[1].torsion == []
    b1 = boundary_matrix(cx, 1)
    assert b1.shape == (3, 3) and np.all(b1.sum(axis=0) == 0)


def test_filled_triangle_is_contractible():
    rep = homology_groups(SimplicialComplex.closure([(0, 1, 2)]), 2)
    assert rep.betti == [1, 0, 0]


def test_edge_boundary_signs():
    cx = SimplicialComplex.closure([(1, 2)])
    assert boundary_matrix(cx, 1).tolist() == [[-1], [1]]


def test_rp2_triangulation():
    cx = SimplicialComplex.closure(RP2_TRIANGLES)
    assert [len(cx.simplices(l)) for l in range(3)] == [6, 15, 10]
    rep = homology_groups(cx, 2)
    assert (rep[0].betti, rep[0].torsion) == (1, [])
    assert (rep[1].betti, rep[1].torsion) == (0, [2])
    assert (rep[2].betti, rep[2].torsion) == (0, [])
    assert str(rep[1]) == "Z/2"


def test_torus_triangulation():
    # 7-vertex Möbius torus
    tris = [(i % 7, (i + 1) % 7, (i + 3) % 7) for i in range(7)] + [(i % 7, (i + 2) % 7, (i + 3) % 7) for i in range(7)]
    rep = homology_groups(SimplicialComplex.closure(tris), 2)
    assert rep.betti == [1, 2, 1] and rep[1].torsion == []


@pytest.mark.parametrize("mat,diag,rank", [
    (np.eye(4, dtype=int), [1, 1, 1, 1], 4),
    ([[2, 4], [6, 8]], [2, 4], 2),
    (np.zeros((3, 2), dtype=int), [], 0),
    ([[2, 0], [0, 3]], [1, 6], 2),
    ([[0, 0, 0]], [], 0),
    ([[4]], [4], 1),
])
def test_snf_examples(mat, diag, rank):
    assert smith_normal_form(mat) == (diag, rank)


def test_snf_empty_shapes():
    assert smith_normal_form(np.zeros((0, 5), dtype=int)) == ([], 0)
    assert smith_normal_form(np.zeros((3, 0), dtype=int)) == ([], 0)


def test_snf_rejects_non_integers():
    with pytest.raises(ValueError):
        smith_normal_form([[0.5, 1.0]])


def test_snf_big_entries_are_exact():
    big = [[2**62, 3], [5, 2**62 + 1]]
    diag, rank = smith_normal_form(big)
    assert rank == 2
    assert diag[0] * diag[1] == abs(2**62 * (2**62 + 1) - 15)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.integers(-9, 9), min_size=4, max_size=4), min_size=4, max_size=4))
def test_snf_chain_and_determinant(rows):
    diag, rank = smith_normal_form(rows)
    assert all(b % a == 0 for a, b in zip(diag, diag[1:]))
    det = cofactor_det(rows)
    if det != 0:
        assert rank == 4
        assert np.prod([int(v) for v in diag], dtype=object) == abs(det)
    else:
        assert rank < 4


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 7), st.data())
def test_snf_rank_matches_rational(m, n, data):
    mat = np.array(data.draw(st.lists(st.lists(st.integers(-5, 5), min_size=n, max_size=n), min_size=m, max_size=m)))
    assert smith_normal_form(mat)[1] == rational_rank(mat)


def test_boundary_of_boundary_vanishes_and_betti_match_oracle():
    rng = np.random.default_rng(0)
    for _ in range(40):
        cx = random_complex(rng)
        for l in range(2, cx.dimension + 1):
            assert not np.any(boundary_matrix(cx, l - 1) @ boundary_matrix(cx, l))
        top = max(cx.dimension, 0)
        assert homology_groups(cx, top).betti == rational_betti(cx, top)


def test_homology_invariant_under_relabeling():
    cx = SimplicialComplex.closure(RP2_TRIANGLES)
    rng = np.random.default_rng(1)
    for _ in range(5):
        perm = rng.permutation(6) + 10
        rep = homology_groups(cx.relabel({v: int(perm[v]) for v in range(6)}), 2)
        assert rep.betti == [1, 0, 0] and rep[1].torsion == [2]


def test_not_downward_closed_rejected():
    with pytest.raises(ComplexError):
        SimplicialComplex([(0, 1, 2), (0,), (1,), (2,)])
    cx = SimplicialComplex([(0,), (1,)])
    with pytest.raises(ComplexError):
        cx.add((0, 1, 2))


def test_simplex_file_round_trip(tmp_path):
    cx = SimplicialComplex.closure(RP2_TRIANGLES)
    cx.write(tmp_path / "s.txt", offset=1)
    lines = (tmp_path / "s.txt").read_text().splitlines()
    assert lines[:6] == ["1", "2", "3", "4", "5", "6"]
    assert len(lines) == 31 and lines[-1] == "3 5 6"
    assert SimplicialComplex.read(tmp_path / "s.txt", offset=1) == cx


def test_report_rendering_and_csv(tmp_path):
    rep = homology_groups(SimplicialComplex.closure(RP2_TRIANGLES), 2)
    assert str(rep).splitlines() == ["H_0 = Z", "H_1 = Z/2", "H_2 = 0"]
    rep.write_csv(tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines() == ["degree,betti,torsion", "0,1,", "1,0,2", "2,0,"]


def test_subcomplex_relation():
    small = SimplicialComplex.closure([(0, 1)])
    big = SimplicialComplex.closure([(0, 1, 2)])
    assert small.is_subcomplex_of(big) and not big.is_subcomplex_of(small)
    assert all(s in big for s in combinations(range(3), 2))
