"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The training criteria (circle, RP^2, T^3) run the built-in presets end to
end and take several minutes each on one CPU.
"""

import csv
import math
import time
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from chartatlas.atlas import AtlasConfig, AtlasModel
from chartatlas.cli import main
from chartatlas.config import RunConfig
from chartatlas.homology import SimplicialComplex, boundary_matrix, homology_groups
from chartatlas.nerve import NerveConfig, build_nerve, default_epsilon_grid, epsilon_sweep, overlap_higher, overlap_u2
from chartatlas.nn_core import forward_cache
from chartatlas.trainer import (
    LOG2,
    LOG4,
    discriminator_loss,
    discriminator_loss_and_grads,
    fit,
    generator_loss,
    generator_loss_and_grads,
    reconstruction_loss_and_grads,
)


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}")


# --- 1. gradient correctness ------------------------------------------------------------

def _relu_margin(net, x):
    cache = forward_cache(net, x)
    return min((float(np.min(np.abs(z))) for layer, (z, _) in zip(net.layers, cache[1:]) if layer.activation == "relu"),
               default=math.inf)


def _max_rel_error(model, loss_and_grads, h=1e-5):
    _, grads = loss_and_grads()
    nets = model.networks()
    worst = 0.0
    for group, gl in grads.items():
        for p, g in zip(nets[group].params(), gl):
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                fp = loss_and_grads()[0]
                p[idx] = old - h
                fm = loss_and_grads()[0]
                p[idx] = old
                fd = (fp - fm) / (2 * h)
                worst = max(worst, abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-6))
    return worst


def test_criterion_1_gradients(capsys):
    started = time.time()
    # pick a seed whose evaluation point sits away from relu kinks, where differences are one-sided
    for seed in range(100):
        model = AtlasModel.create(AtlasConfig(n=3, d=2, k=2, seed=seed))
        rng = np.random.default_rng(seed)
        for p in model.params():
            p += rng.normal(scale=0.3, size=p.shape)
        x = rng.uniform(-0.95, 0.95, size=(4, 3))
        z = rng.uniform(-1, 1, size=(4, 2))
        j = rng.integers(0, 2, size=4)
        enc = model.encode_all(x)
        margins = [_relu_margin(model.decoders, enc), _relu_margin(model.membership_net, x),
                   _relu_margin(model.discriminators, enc),
                   _relu_margin(model.discriminators, np.broadcast_to(z, (2, 4, 2)))]
        if min(margins) > 1e-3:
            break
    else:
        pytest.fail("no evaluation point away from relu kinks")
    errors = {
        "recon": _max_rel_error(model, lambda: reconstruction_loss_and_grads(model, x)),
        "disc": _max_rel_error(model, lambda: discriminator_loss_and_grads(model, x, z, j)),
        "gen": _max_rel_error(model, lambda: generator_loss_and_grads(model, x)),
    }
    elapsed = time.time() - started
    ok = max(errors.values()) <= 1e-4 and elapsed < 10
    report(capsys, 1, ok, "max rel err " + ", ".join(f"{k}={v:.2e}" for k, v in errors.items()) + f"; {elapsed:.1f}s")
    assert ok


# --- 2. loss baselines ------------------------------------------------------------------

def test_criterion_2_loss_baselines(capsys):
    model = AtlasModel.create(AtlasConfig(n=3, d=2, k=4, seed=3))
    last = model.discriminators.layers[-1]
    last.weights[...] = 0.0
    last.biases[...] = 0.0  # sigmoid(0) = 1/2 for every input
    rng = np.random.default_rng(0)
    x = rng.uniform(-0.9, 0.9, size=(64, 3))
    z = rng.uniform(-1, 1, size=(64, 2))
    j = rng.integers(0, 4, size=64)
    dl, gl = discriminator_loss(model, x, z, j), generator_loss(model, x)
    ok = abs(dl - LOG4) <= 1e-9 and abs(gl - LOG2) <= 1e-9
    report(capsys, 2, ok, f"disc - log4 = {dl - LOG4:.1e}, gen - log2 = {gl - LOG2:.1e}")
    assert ok


# --- 3. circle topology -----------------------------------------------------------------

def _fit_preset(preset, seed):
    cfg = RunConfig.load(preset=preset, overrides={"seed": str(seed)})
    cloud = cfg.load_data()
    model = AtlasModel.create(cfg.atlas_config(cloud.n), cloud.scaling)
    fit(model, cloud, cfg.loss_config(), seed=seed)
    return cfg, model, model.membership_batch(cloud.points)


@pytest.mark.slow
def test_criterion_3_circle_topology(capsys):
    outcomes = []
    for seed in range(5):
        started = time.time()
        cfg, _, q = _fit_preset("circle", seed)
        assert cfg["train.epochs"] <= 2000
        rows = epsilon_sweep(q, "method1", default_epsilon_grid(), cfg.max_dimension(cfg["model.d"]))
        hit = any(r.homology.betti[:2] == [1, 1] and not r.homology[1].torsion for r in rows)
        elapsed = time.time() - started
        outcomes.append(hit and elapsed <= 300)
        if sum(outcomes) >= 3:
            break
    ok = sum(outcomes) >= 3
    report(capsys, 3, ok, f"hollow-triangle regime found for {sum(outcomes)}/{len(outcomes)} seeds (need 3)")
    assert ok


# --- 4. RP^2 torsion --------------------------------------------------------------------

def _has_z2(rows):
    return any(r.homology[1].betti == 0 and r.homology[1].torsion == [2] for r in rows)


@pytest.mark.slow
def test_criterion_4_rp2_torsion(capsys):
    outcomes, notes = [], []
    for seed in range(5):
        started = time.time()
        cfg, _, q = _fit_preset("rp2", seed)
        max_dim = cfg.max_dimension(cfg["model.d"])
        hits = [m for m in ("method1", "method2") if _has_z2(epsilon_sweep(q, m, default_epsilon_grid(), max_dim))]
        elapsed = time.time() - started
        outcomes.append(bool(hits) and elapsed <= 1800)
        notes.append(f"seed {seed}: {'+'.join(hits) or 'none'}")
        if sum(outcomes) >= 2:
            break
    ok = sum(outcomes) >= 2
    report(capsys, 4, ok, f"Z/2 interval in {sum(outcomes)}/{len(outcomes)} seeds (need 2); " + ", ".join(notes))
    assert ok


# --- 5. T^3 dimension sweep -------------------------------------------------------------

@pytest.mark.slow
def test_criterion_5_torus_sweep(capsys, tmp_path):
    started = time.time()
    finals = {d: [] for d in range(1, 6)}
    gaps = []
    for seed in range(3):
        out = tmp_path / f"s{seed}"
        assert main(["dim-sweep", "--preset", "torus3", "--d-list", "1,2,3,4,5", "--seed", str(seed), "--out", str(out)]) == 0
        for d in range(1, 6):
            assert (out / f"loss_d{d}.csv").is_file() and (out / f"model_d{d}.txt").is_file()
        with open(out / "summary.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                finals[int(row["d"])].append(float(row["final_recon"]))
                if int(row["d"]) > 3:
                    gaps.append(f"s{seed}/d{row['d']}: gen-log2={float(row['gen_minus_log2']):+.3f}")
    elapsed = time.time() - started
    med = {d: float(np.median(v)) for d, v in finals.items()}
    ok = med[3] < med[1] and elapsed <= 1800
    report(capsys, 5, ok, f"median final recon d=1 {med[1]:.4g}, d=3 {med[3]:.4g}; {elapsed:.0f}s")
    with capsys.disabled():
        print("  median final recon by d: " + ", ".join(f"{d}:{v:.4g}" for d, v in med.items()))
        print("  reported only: " + "; ".join(gaps))
    assert ok


# --- 6. homology oracle -----------------------------------------------------------------

def _rational_rank(mat):
    rows = [[Fraction(int(v)) for v in r] for r in np.asarray(mat).tolist()]
    rank = 0
    for c in range(len(rows[0]) if rows else 0):
        piv = next((r for r in range(rank, len(rows)) if rows[r][c] != 0), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        for r in range(len(rows)):
            if r != rank and rows[r][c] != 0:
                f = rows[r][c] / rows[rank][c]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
    return rank


def test_criterion_6_homology_oracle(capsys):
    started = time.time()
    rng = np.random.default_rng(2024)
    mismatches = nonzero = 0
    for _ in range(200):
        nv = int(rng.integers(1, 13))
        tops = [rng.choice(nv, size=int(rng.integers(1, min(4, nv) + 1)), replace=False)
                for _ in range(int(rng.integers(1, 20)))]
        cx = SimplicialComplex.closure(tops)
        top = cx.dimension
        for l in range(2, top + 1):
            nonzero += bool(np.any(boundary_matrix(cx, l - 1) @ boundary_matrix(cx, l)))
        ranks = {l: _rational_rank(boundary_matrix(cx, l)) if cx.simplices(l) else 0 for l in range(1, top + 2)}
        oracle = [len(cx.simplices(l)) - ranks.get(l, 0) - ranks[l + 1] for l in range(top + 1)]
        mismatches += homology_groups(cx, top).betti != oracle
    elapsed = time.time() - started
    ok = mismatches == 0 and nonzero == 0 and elapsed < 60
    report(capsys, 6, ok, f"{mismatches} Betti mismatches, {nonzero} nonzero boundary compositions, {elapsed:.1f}s")
    assert ok


# --- 7. RP^2 triangulation --------------------------------------------------------------

def test_criterion_7_rp2_triangulation(capsys):
    tris = [(0, 1, 2), (0, 2, 3), (0, 3, 4), (0, 4, 5), (0, 5, 1),
            (1, 2, 4), (2, 3, 5), (3, 4, 1), (4, 5, 2), (5, 1, 3)]
    cx = SimplicialComplex.closure(tris)
    rep = homology_groups(cx, 2)
    got = [(g.betti, g.torsion) for g in rep.groups]
    ok = [len(cx.simplices(l)) for l in range(3)] == [6, 15, 10] and got == [(1, []), (0, [2]), (0, [])]
    report(capsys, 7, ok, " ; ".join(str(rep).splitlines()))
    assert ok


# --- 8. overlap oracles -----------------------------------------------------------------

def _naive_score(m, s):
    def mass(cols):
        total = 0.0
        for row in m:
            p = 1.0
            for c in cols:
                p *= row[c]
            total += p
        return total

    full = mass(s)
    return sum(full / mass([c for c in s if c != r]) for r in s) / len(s)


def _naive_u2(m, a, b):
    sa = sum(row[a] for row in m)
    sb = sum(row[b] for row in m)
    return 0.5 * (1 / sa + 1 / sb) * sum(row[a] * row[b] for row in m)


def test_criterion_8_overlap_oracles(capsys):
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(50):
        N, k = int(rng.integers(1, 101)), int(rng.integers(2, 7))
        logits = rng.normal(scale=float(rng.uniform(0.5, 3)), size=(N, k))
        m = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        rows = m.tolist()
        for a, b in combinations(range(k), 2):
            worst = max(worst, abs(overlap_u2(m, a, b) - _naive_u2(rows, a, b)))
        for size in range(3, k + 1):
            for s in combinations(range(k), size):
                worst = max(worst, abs(overlap_higher(m, s) - _naive_score(rows, s)))
    violations = 0
    grid = default_epsilon_grid()
    for _ in range(100):
        N, k = int(rng.integers(1, 101)), int(rng.integers(2, 7))
        logits = rng.normal(scale=3, size=(N, k))
        m = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        complexes = [build_nerve(m, NerveConfig("method1", float(e), 3)) for e in grid]
        violations += sum(not b.is_subcomplex_of(a) for a, b in zip(complexes, complexes[1:]))
    ok = worst <= 1e-12 and violations == 0
    report(capsys, 8, ok, f"max |score - oracle| = {worst:.1e}; {violations} monotonicity violations over 100 matrices")
    assert ok


# --- 9. reproducibility -----------------------------------------------------------------

def test_criterion_9_reproducibility(capsys, tmp_path):
    small = ["--set", "data.N=96", "--set", "train.batch_size=32", "--seed", "5"]
    differing = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["fit", "--preset", "rp2", "--epochs", "3", "--out", str(out / "fit"), *small]) == 0
        model = str(out / "fit" / "model.txt")
        assert main(["nerve", "--preset", "rp2", "--model", model, "--epsilon", "0.05", "--out", str(out / "nerve"), *small]) == 0
        assert main(["nerve", "--preset", "rp2", "--model", model, "--method", "2", "--out", str(out / "nerve2"), *small]) == 0
        assert main(["generate", "--model", model, "-m", "50", "--out", str(out / "gen"), *small]) == 0
        assert main(["reconstruct", "--preset", "rp2", "--model", model, "--out", str(out / "rec"), *small]) == 0
        assert main(["dim-sweep", "--preset", "torus3", "--d-list", "1,2", "--epochs", "2", "--out", str(out / "sweep"), *small]) == 0
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.suffix in (".csv", ".txt"))
    for rel in files:
        if (tmp_path / "a" / rel).read_bytes() != (tmp_path / "b" / rel).read_bytes():
            differing.append(str(rel))
    ok = bool(files) and not differing
    report(capsys, 9, ok, f"{len(files)} CSV/text outputs compared, {len(differing)} differ {differing[:3]}")
    assert ok
