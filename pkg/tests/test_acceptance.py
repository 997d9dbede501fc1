"""The ten acceptance criteria, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``.  Shared systems and
corpora are cached per module so every criterion runs once.
"""
from functools import lru_cache

import numpy as np
import pytest
from scipy.stats import spearmanr

from conftest import random_chains
from oracles import GramSchmidtOracle, fit_coefficients
from splineortho.adversary import AdversarialConfig, divergence_experiment
from splineortho.analysis import equivalence_report, random_atom
from splineortho.bspline import BSplineBasis, derivative, dual_rows, gram
from splineortho.knotseq import (
    KnotSequence, dyadic_points, dyadic_sequence, make_grid, nested_decay_check, random_points,
    regularity_parameter, uniform_points,
)
from splineortho.orthosys import build_system, max_N0, system_coefficient_slope, system_decay_report

KS = (2, 3, 4)
N_CORPUS = 256
RANDOM_SEEDS = range(1, 21)
ATOMS = 50


@pytest.fixture
def verdict(capsys):
    def emit(number: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def _sequence(k: int, label) -> KnotSequence:
    if label == "dyadic":
        return dyadic_sequence(k, N_CORPUS - 1)
    return KnotSequence(k, tuple(random_points(N_CORPUS - 1, np.random.default_rng(1000 * k + label))))


@lru_cache(maxsize=None)
def corpus_system(k: int, label):
    return build_system(_sequence(k, label), N_CORPUS)


def corpus():
    for k in KS:
        for label in ("dyadic", *RANDOM_SEEDS):
            yield k, label, corpus_system(k, label)


@lru_cache(maxsize=None)
def equivalence_corpus(k: int, N: int):
    system = build_system(dyadic_sequence(k, N - 1), N)
    rng = np.random.default_rng(0)
    atoms = [random_atom(rng) for _ in range(ATOMS)]
    return [equivalence_report(a, system, trials=200, seed=i) for i, a in enumerate(atoms)]


def test_criterion_01_orthonormality(verdict):
    worst = {k: 0.0 for k in KS}
    for k, _, system in corpus():
        worst[k] = max(worst[k], system.orthonormality_error())
    ok = max(worst.values()) < 1e-9
    verdict(1, ok, "max |G - I| over 63 systems at N=256: "
            + ", ".join(f"k={k}: {v:.2e}" for k, v in worst.items()) + " (tol 1e-9)")


def test_criterion_02_oracle_equivalence(verdict):
    cases = [(1, "random", 128), (2, "random", 128), (3, "random", 128), (3, "dyadic", 64)]
    out = []
    for k, kind, N in cases:
        if kind == "random":
            pts = list(random_points(N - 1, np.random.default_rng(100 + k)))
        else:
            pts = dyadic_points(N - 1)
        system = build_system(KnotSequence(k, tuple(pts)), N)
        oracle = GramSchmidtOracle(k, pts, N).run()
        vals, x = oracle.values(), oracle.nodes
        worst = 0.0
        for f in system.functions:
            ref = fit_coefficients(f.grid.tau, k, x, vals[k - 2 + f.n])
            sign = np.sign(ref @ f.coeffs)
            worst = max(worst, float(np.max(np.abs(sign * f.coeffs - ref)) / np.max(np.abs(ref))))
        for p, v in zip(system.polys, vals[:k]):
            got = p(x)
            worst = max(worst, float(np.max(np.abs(np.sign(got @ v) * got - v)) / np.max(np.abs(v))))
        out.append((k, kind, N, worst))
    ok = all(w < 1e-7 for *_, w in out)
    verdict(2, ok, "max relative coefficient diff vs 40-digit Gram-Schmidt: "
            + ", ".join(f"k={k} {kind} N={N}: {w:.1e}" for k, kind, N, w in out) + " (tol 1e-7)")


def test_criterion_03_bspline_layer(verdict):
    x = np.linspace(0, 1, 2001)
    pou, fd_err, rows, slack, diag_ok = 0.0, 0.0, 0, 0.0, True
    for k, label, system in corpus():
        if label not in ("dyadic", 1, 2):
            continue
        basis = BSplineBasis.from_grid(system.finest_grid)
        pou = max(pou, float(np.max(np.abs(basis.matrix(x).sum(axis=1) - 1))))
        s = basis.spline(np.random.default_rng(k).normal(size=basis.m))
        ds = derivative(s)
        br = basis.breaks
        mids = 0.5 * (br[:-1] + br[1:])
        h = 1e-4 * np.diff(br)  # per-cell step: truncation ~1e-8, roundoff ~1e-12
        fd = (s(mids + h) - s(mids - h)) / (2 * h)
        fd_err = max(fd_err, float(np.max(np.abs(fd - ds(mids))) / np.max(np.abs(ds(mids)))))
        for f in system.functions:
            rows += len(f.dual.rows)
            slack = max(slack, f.dual.checkerboard_slack())
            diag_ok &= f.dual.diagonal_bound_holds(gram(f.basis))
    h = 1 / 64
    G = gram(BSplineBasis(make_grid(KnotSequence(2, tuple(uniform_points(63))), 64).tau, 2)).dense()
    gram_err = max(float(np.max(np.abs(np.diag(G)[1:-1] - 2 * h / 3))),
                   float(np.max(np.abs(np.diag(G, 1)[1:-1] - h / 6))))
    full = gram(BSplineBasis(make_grid(dyadic_sequence(3, 127), 128).tau, 3))
    inv = dual_rows(full, range(1, full.size + 1))
    slack = max(slack, inv.checkerboard_slack())
    diag_ok &= inv.diagonal_bound_holds(full)
    ok = pou < 1e-12 and fd_err < 1e-6 and gram_err < 1e-12 and slack <= 1e-12 and diag_ok
    verdict(3, ok, f"partition of unity {pou:.1e}, derivative vs FD {fd_err:.1e}, hat Gram {gram_err:.1e}, "
            f"checkerboard slack {slack:.1e} over {rows} inverse rows, b_jj >= 1/<N_j,N_j>: {diag_ok}")


def test_criterion_04_regularity_layer(verdict):
    gamma_dyadic = regularity_parameter(dyadic_sequence(2, 255), 1, 256).gamma
    seqs = [("dyadic k=2", dyadic_sequence(2, 127)), ("dyadic k=3", dyadic_sequence(3, 127)),
            ("random k=2", KnotSequence(2, tuple(random_points(127, np.random.default_rng(1))))),
            ("random k=3", KnotSequence(3, tuple(random_points(127, np.random.default_rng(2)))))]
    failures, total = [], 0
    for name, seq in seqs:
        for ell in range(1, seq.k + 1):
            gamma = regularity_parameter(seq, ell, seq.n_max).gamma
            chains = random_chains(seq, ell, 10_000, np.random.default_rng(ell))
            total += len(chains)
            bad = sum(not nested_decay_check(c, gamma, ell) for c in chains)
            if len(chains) < 10_000 or bad:
                failures.append(f"{name} ell={ell}: {bad} of {len(chains)}")
    ok = gamma_dyadic == 2.0 and not failures
    verdict(4, ok, f"dyadic gamma(ell=1) = {gamma_dyadic!r}; nested decay on {total} chains "
            f"(10^4 per sequence and ell), failures: {failures or 'none'}")


def test_criterion_05_decay(verdict):
    worst_q, missing, slopes = 0.0, [], {}
    for k, label, system in corpus():
        rep = system_decay_report(system)
        if not (rep.found and rep.q <= 0.95 and rep.holds()):
            missing.append((k, label))
        else:
            worst_q = max(worst_q, rep.q)
        if label == "dyadic":
            slopes[k] = system_coefficient_slope(system)
    ok = not missing and all(s < 0 for s in slopes.values())
    verdict(5, ok, f"q found on all but {len(missing)} of 63 systems (largest q {worst_q}); pooled "
            "log|w_j| vs d_n slope on dyadic: " + ", ".join(f"k={k}: {s:.3f}" for k, s in slopes.items()))


def test_criterion_06_combinatorics(verdict):
    ladder = (32, 64, 128, 256)
    rho, series = {}, {}
    for k in KS:
        per_N = np.zeros(len(ladder), int)
        for label in ("dyadic", *RANDOM_SEEDS):
            system = corpus_system(k, label)
            vals = [max_N0(system, N)[0] for N in ladder]
            per_N = np.maximum(per_N, vals)
        series[k] = per_N.tolist()
        r = spearmanr(ladder, per_N).statistic
        rho[k] = 0.0 if np.isnan(r) else float(r)
    ok = all(abs(r) < 0.3 for r in rho.values())
    verdict(6, ok, "max N0 over exhaustive knot pairs at N=32..256: "
            + "; ".join(f"k={k}: {series[k]} rho={rho[k]:.2f}" for k in KS) + " (need |rho| < 0.3)")


def test_criterion_07_atomic_decomposition(verdict):
    reps = equivalence_corpus(2, 256)
    recon = max(r.params["reconstruction_error"] for r in reps)
    invalid = sum(len(r.decomposition.invalid_atoms()) for r in reps)
    C = np.array([r.ratios["eta/S"] for r in reps])
    stable = C.max() / C.min() <= 3.0
    ok = recon < 1e-6 and invalid == 0 and stable
    verdict(7, ok, f"reconstruction {recon:.1e}, invalid atoms {invalid}, sum|eta| / ||S||_1 in "
            f"[{C.min():.2f}, {C.max():.2f}] (max/min {C.max() / C.min():.2f}, need <= 3 for +-50%)")


def test_criterion_08_khinchin(verdict):
    reps = equivalence_corpus(2, 256)
    C = np.array([r.ratios["P/sign"] for r in reps])
    ok = C.max() / C.min() <= 3.0
    verdict(8, ok, f"||P||_1 / sup_eps over 50 atoms in [{C.min():.3f}, {C.max():.3f}] "
            f"(max/min {C.max() / C.min():.2f}, need <= 3)")


def test_criterion_09_divergence(verdict):
    table = divergence_experiment([2, 4, 8, 16], AdversarialConfig(k=2, gamma=4, A=2))
    slope, r2 = table.fit("stage_sum")
    band = table.control_band()
    sums = ", ".join(f"{r.stage_sum:.3f}" for r in table.rows)
    ok = slope > 0 and r2 > 0.9 and band < 3
    verdict(9, ok, f"stage sums [{sums}] slope {slope:.4f} R^2 {r2:.4f}; "
            f"control ||P phi||_1 band {band:.3f} (need < 3)")


def test_criterion_10_sufficiency(verdict):
    lines, ok = [], True
    for k in (2, 3):
        bands = {}
        for N in (128, 256):
            reps = equivalence_corpus(k, N)
            bands[N] = {key: max(r.ratios[key] for r in reps) / min(r.ratios[key] for r in reps)
                        for key in reps[0].ratios}
        growth = {key: bands[256][key] / bands[128][key] for key in bands[256]}
        ok &= max(growth.values()) < 2
        lines.append(f"k={k}: widest band {max(bands[256].values()):.2f}, "
                     f"max band(256)/band(128) {max(growth.values()):.3f}")
    verdict(10, ok, "; ".join(lines) + " (need < 2)")
