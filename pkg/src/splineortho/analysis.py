"""Expansions in the orthonormal spline system and the H^1 diagnostics.

Four quantities are compared: the weight sum of a constructive atomic
decomposition, the L^1 norms of the maximal function S and the square
function P, and a Monte Carlo estimate of the supremum over sign changes.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import ContractError
from .bspline import Spline
from .orthosys import OrthoSystem
from .ppoly import PiecewisePoly, gauss01, merge_breaks, sample_nodes

S_NODES = 8


# --- atoms --------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    """The constant 1, or a mean-zero function on Gamma with sup <= 1/|Gamma|.

    ``profile`` is a piecewise polynomial whose breakpoints span Gamma
    (piecewise constant for the step atoms used as test input).
    """

    kind: str
    interval: tuple[float, float]
    profile: PiecewisePoly = field(repr=False)

    @classmethod
    def one(cls) -> "Atom":
        return cls("constant-one", (0.0, 1.0), PiecewisePoly.constant([0.0, 1.0], [1.0]))

    @classmethod
    def step(cls, breaks, values) -> "Atom":
        breaks = np.asarray(breaks, dtype=float)
        return cls("mean-zero", (float(breaks[0]), float(breaks[-1])), PiecewisePoly.constant(breaks, values))

    @property
    def length(self) -> float:
        return self.interval[1] - self.interval[0]

    def __call__(self, x):
        return self.profile(x)

    def to_ppoly(self) -> PiecewisePoly:
        """The atom on [0, 1], zero outside Gamma."""
        p = self.profile
        br = merge_breaks([0.0, 1.0], p.breaks)
        coef = np.zeros((br.size - 1, p.degree + 1))
        mid = 0.5 * (br[:-1] + br[1:])
        inside = (mid > p.breaks[0]) & (mid < p.breaks[-1])
        coef[inside] = p.refine(br[(br >= p.breaks[0]) & (br <= p.breaks[-1])]).coef
        return PiecewisePoly(br, coef)

    def violations(self, rtol: float = 1e-12) -> list[str]:
        """Names of the failed atom conditions (empty when valid)."""
        lo, hi = self.interval
        out = []
        if not 0.0 <= lo < hi <= 1.0:
            out.append("interval")
        if self.profile.breaks[0] < lo or self.profile.breaks[-1] > hi:
            out.append("support")
        if self.profile.norm(np.inf) > (1 + rtol) / self.length:
            out.append("sup")
        if self.kind == "mean-zero":
            scale = max(self.profile.norm(1), np.finfo(float).tiny)
            if abs(self.profile.integral()) > 1e-10 * scale:
                out.append("mean")
        elif self.kind == "constant-one":
            if (lo, hi) != (0.0, 1.0) or self.profile.norm(np.inf) != 1.0 or self.profile.degree != 0:
                out.append("constant")
        else:
            out.append("kind")
        return out

    @property
    def valid(self) -> bool:
        return not self.violations()


def random_atom(rng: np.random.Generator, max_level: int = 5, pieces=(2, 4)) -> Atom:
    """A mean-zero step atom on a random dyadic interval with dyadic steps.

    Gamma has length 2^{-j}, 1 <= j <= max_level; the profile is constant on
    2 or 4 equal parts with random values, centred and scaled to sup = 1/|Gamma|.
    """
    j = int(rng.integers(1, max_level + 1))
    pos = int(rng.integers(0, 2 ** j))
    lo, hi = pos / 2 ** j, (pos + 1) / 2 ** j
    m = int(rng.choice(pieces))
    vals = rng.standard_normal(m)
    vals -= vals.mean()
    if not np.any(vals):
        vals[0], vals[-1] = 1.0, -1.0
    vals *= 1.0 / ((hi - lo) * np.max(np.abs(vals)))
    return Atom.step(np.linspace(lo, hi, m + 1), vals)


def _as_ppoly(f) -> PiecewisePoly:
    if isinstance(f, PiecewisePoly):
        return f
    if isinstance(f, Atom):
        return f.to_ppoly()
    if isinstance(f, Spline):
        return f.to_ppoly()
    raise ContractError(f"cannot represent {type(f).__name__} as a piecewise polynomial")


# --- expansions ---------------------------------------------------------------

@dataclass
class Expansion:
    system: OrthoSystem = field(repr=False)
    coeffs: np.ndarray
    source: PiecewisePoly | None = field(default=None, repr=False)

    @property
    def indices(self) -> np.ndarray:
        return self.system.indices

    def coefficient(self, n: int) -> float:
        return float(self.coeffs[n + self.system.k - 2])

    def partial_sum(self, m: int | None = None) -> PiecewisePoly:
        """S_m = sum_{n <= m} a_n f_n on the finest grid."""
        c = self.coeffs.copy()
        if m is not None:
            c[self.indices > m] = 0.0
        return self.system.combination(c)

    def partial_sums_at(self, x) -> np.ndarray:
        """Rows: S_m(x) for m in index order."""
        return np.cumsum(self.coeffs[:, None] * self.system.values(x), axis=0)


def expand(f, system: OrthoSystem) -> Expansion:
    """a_n = <f, f_n>, exact Gauss quadrature over the merged breakpoints."""
    pp = _as_ppoly(f)
    if pp.breaks[0] < 0.0 or pp.breaks[-1] > 1.0:
        raise ContractError("f must live on [0, 1]")
    br = merge_breaks(system.breaks, pp.breaks)
    m = max(system.k, math.ceil((pp.degree + system.k) / 2))
    x, w = sample_nodes(br, m)
    a = system.values(x) @ (w * pp(x))
    return Expansion(system, a, pp)


# --- square and maximal functions -----------------------------------------------

def square_function(e: Expansion, x) -> np.ndarray:
    """P(x) = (sum_n a_n^2 f_n(x)^2)^{1/2}."""
    v = e.system.values(np.atleast_1d(np.asarray(x, dtype=float)))
    return np.sqrt(np.einsum("n,ni->i", e.coeffs ** 2, v ** 2))


def maximal_function(e: Expansion, x) -> np.ndarray:
    """S(x) = max_m |sum_{n <= m} a_n f_n(x)|."""
    return np.max(np.abs(e.partial_sums_at(np.atleast_1d(np.asarray(x, dtype=float)))), axis=0)


def adaptive_integral(func, breaks, rtol: float, m: int = S_NODES, max_rounds: int = 12) -> float:
    """Integrate a nonnegative function by m-point Gauss with cell bisection.

    A cell is accepted once the one-level refinement changes its value by at
    most its length share of ``rtol`` times the current total.
    """
    s, w = gauss01(m)
    lo, hi = np.asarray(breaks[:-1], float), np.asarray(breaks[1:], float)

    def gauss(a, b):
        h = b - a
        x = a[:, None] + h[:, None] * s[None, :]
        return h * (func(x.ravel()).reshape(x.shape) @ w)

    coarse = gauss(lo, hi)
    done = 0.0
    for _ in range(max_rounds):
        mid = 0.5 * (lo + hi)
        left, right = gauss(lo, mid), gauss(mid, hi)
        fine = left + right
        total = done + fine.sum()
        ok = np.abs(fine - coarse) <= rtol * max(total, np.finfo(float).tiny) * (hi - lo)
        done += fine[ok].sum()
        keep = ~ok
        if not keep.any():
            return float(done)
        lo, hi = np.concatenate([lo[keep], mid[keep]]), np.concatenate([mid[keep], hi[keep]])
        coarse = np.concatenate([left[keep], right[keep]])
    return float(done + coarse.sum())


def sq_norm1(e: Expansion, rtol: float = 1e-6) -> float:
    return adaptive_integral(lambda x: square_function(e, x), e.system.breaks, rtol)


def max_norm1(e: Expansion, rtol: float = 1e-4) -> float:
    """||S||_1 from 8 Gauss samples per cell, bisecting cells until stable.

    S is a pointwise maximum of polynomials, so this is a sampled estimate,
    not an exact integral.
    """
    return adaptive_integral(lambda x: maximal_function(e, x), e.system.breaks, rtol)


def hl_maximal(f, x, refine: int = 1) -> np.ndarray:
    """Hardy-Littlewood maximal function of |f| over candidate intervals.

    Candidates are intervals containing x whose endpoints are breakpoints of
    f (each cell split into ``refine`` equal parts) or x itself.  This is
    exact when |f| is piecewise constant.
    """
    pp = _as_ppoly(f)
    br = pp.breaks
    if refine > 1:
        br = merge_breaks(*(br[:-1] + np.diff(br) * j / refine for j in range(refine)), br[-1:])
        pp = pp.refine(br)
    cum = np.concatenate([[0.0], np.cumsum(pp.cell_power_integrals(1))])
    out = []
    for xv in np.atleast_1d(np.asarray(x, dtype=float)):
        c = int(pp.cell_of(xv))
        Fx = cum[c] + (pp.lp_norm_on(br[c], xv, 1) if xv > br[c] else 0.0)
        left_pts = np.concatenate([br[br < xv], [xv]])
        left_F = np.concatenate([cum[: left_pts.size - 1], [Fx]])
        right_pts = np.concatenate([[xv], br[br > xv]])
        right_F = np.concatenate([[Fx], cum[br > xv]])
        L = right_pts[None, :] - left_pts[:, None]
        M = right_F[None, :] - left_F[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            avg = np.where(L > 0, M / L, 0.0)
        out.append(float(avg.max()))
    return np.array(out)


def sign_flip_supremum(e: Expansion, trials: int, seed=0, history: bool = False):
    """max over random sign vectors eps of ||sum_n eps_n a_n f_n||_1.

    The L^1 norms are exact (piecewise polynomial with roots split out).
    With ``history`` the running maximum after each trial is returned too.
    """
    if trials < 1:
        raise ContractError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    eps = rng.choice([-1.0, 1.0], size=(trials, e.coeffs.size))
    br = e.system.breaks
    coef = np.tensordot(eps * e.coeffs, e.system.pp_coef, axes=(1, 0))
    values = np.array([PiecewisePoly(br, c).cell_power_integrals(1).sum() for c in coef])
    running = np.maximum.accumulate(values)
    return (float(running[-1]), running) if history else float(running[-1])


# --- atomic decomposition --------------------------------------------------------

def _merge_intervals(iv: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Union of intervals; ones that overlap or share an endpoint are joined."""
    out: list[list[float]] = []
    for a, b in sorted(iv):
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def superlevel_hl(E: list[tuple[float, float]], c: float) -> list[tuple[float, float]]:
    """Components of [M 1_E > c] on [0, 1], E a finite union of disjoint intervals.

    An interval I achieving density > c can be shrunk to a core [u, v] whose
    endpoints are endpoints of E; with m = |[u, v] cap E| the admissible
    points t are exactly those with max(v, t) - min(u, t) < m / c.
    """
    if not 0 < c < 1:
        raise ContractError("c must lie in (0, 1)")
    if not E:
        return []
    lo = np.array([a for a, _ in E])
    hi = np.array([b for _, b in E])
    cum = np.concatenate([[0.0], np.cumsum(hi - lo)])
    pieces = []
    for i in range(lo.size):
        mass = cum[i + 1:] - cum[i]
        u, v = lo[i], hi[i:]
        dens = mass / (v - u)
        good = dens > c
        if not good.any():
            continue
        a = np.maximum(0.0, v[good] - mass[good] / c)
        b = np.minimum(1.0, u + mass[good] / c)
        pieces.extend(zip(a.tolist(), b.tolist()))
    return _merge_intervals(pieces)


@dataclass
class AtomicDecomposition:
    eta0: float
    weights: list[float]
    atoms: list[Atom] = field(repr=False)
    levels: list[int] = field(repr=False)
    constant: float              # the power of two C
    level_count: int
    truncated: bool = False
    reconstruction_error: float = float("nan")

    @property
    def weight_sum(self) -> float:
        return abs(self.eta0) + float(np.sum(np.abs(self.weights)))

    def reconstruct(self) -> PiecewisePoly:
        total = PiecewisePoly.constant([0.0, 1.0], [self.eta0])
        for eta, atom in zip(self.weights, self.atoms):
            total = total + atom.to_ppoly() * eta
        return total

    def invalid_atoms(self) -> list[tuple[int, list[str]]]:
        return [(i, v) for i, a in enumerate(self.atoms) if (v := a.violations())]


def _superlevel_cells(e: Expansion, sub: int):
    """Subcells of the finest grid with a sampled value of S on each."""
    br = e.system.breaks
    fine = merge_breaks(*(br[:-1] + np.diff(br) * j / sub for j in range(sub)), br[-1:])
    s, _ = gauss01(3)
    x = fine[:-1, None] + np.diff(fine)[:, None] * s[None, :]
    vals = maximal_function(e, x.ravel()).reshape(x.shape).max(axis=1)
    return fine, vals


def atomic_decompose(e: Expansion, levels: int = 40, c_threshold: float = 0.4,
                     subcells: int = 8) -> AtomicDecomposition:
    """Atoms from the level sets of the maximal function.

    E_0 = B_0 = [0, 1]; for r >= 1, E_r = [S > 2^r] (S sampled on ``subcells``
    parts of every grid cell), B_r = [M 1_{E_r} > c].  g_r equals f off B_r
    and its average on each component of B_r; the atoms are the normalized
    differences g_{r+1} - g_r on the components of B_r.  f is the partial sum
    of the expansion.
    """
    if not 0 < c_threshold <= 0.5:
        raise ContractError("c_threshold must lie in (0, 1/2]")
    f = e.partial_sum()
    fine, svals = _superlevel_cells(e, subcells)

    B: list[list[tuple[float, float]]] = [[(0.0, 1.0)]]
    truncated = False
    r = 1
    while True:
        mask = svals > 2.0 ** r
        if not mask.any():
            B.append([])
            break
        if r > levels:
            truncated = True
            warnings.warn(f"maximal function exceeds 2^{levels}; decomposition truncated at level {levels}")
            B.append([])
            break
        idx = np.flatnonzero(mask)
        E = _merge_intervals(list(zip(fine[idx].tolist(), fine[idx + 1].tolist())))
        B.append(superlevel_hl(E, c_threshold))
        r += 1

    ends = [x for comps in B for iv in comps for x in iv]
    br = merge_breaks(f.breaks, ends)
    fr = f.refine(br)
    mid = 0.5 * (br[:-1] + br[1:])
    cell_int = fr.cell_integrals()
    cum = np.concatenate([[0.0], np.cumsum(cell_int)])

    def g_coef(comps):
        coef = fr.coef.copy()
        for a, b in comps:
            inside = (mid > a) & (mid < b)
            i0, i1 = np.searchsorted(br, a), np.searchsorted(br, b)
            avg = (cum[i1] - cum[i0]) / (b - a)
            coef[inside] = 0.0
            coef[inside, 0] = avg
        return coef

    g = [g_coef(comps) for comps in B]
    diffs = []
    for r in range(len(B) - 1):
        d = g[r + 1] - g[r]
        for a, b in B[r]:
            inside = (mid > a) & (mid < b)
            idx = np.flatnonzero(inside)
            piece = PiecewisePoly(br[idx[0]: idx[-1] + 2], d[idx])
            diffs.append((r, (a, b), piece))

    need = max((p.norm(np.inf) / 2.0 ** r for r, _, p in diffs), default=0.0)
    C = 2.0 ** math.ceil(math.log2(need)) if need > 0 else 1.0
    atoms, weights, lv = [], [], []
    for r, (a, b), piece in diffs:
        if not np.any(piece.coef):
            continue
        scale = C * 2.0 ** r
        atoms.append(Atom("mean-zero", (a, b), piece / (scale * (b - a))))
        weights.append(scale * (b - a))
        lv.append(r)
    dec = AtomicDecomposition(f.integral(), weights, atoms, lv, C, len(B) - 1, truncated)
    dec.reconstruction_error = (dec.reconstruct() - f).norm(1)
    return dec


# --- the four norms ---------------------------------------------------------------

NORM_NAMES = ("eta", "S", "P", "sign")


@dataclass
class EquivalenceReport:
    norms: dict[str, float]
    ratios: dict[str, float]
    params: dict
    decomposition: AtomicDecomposition | None = field(default=None, repr=False)

    def to_json(self) -> str:
        return json.dumps({"norms": self.norms, "ratios": self.ratios, "params": self.params},
                          sort_keys=True)


def pairwise_ratios(norms: dict[str, float]) -> dict[str, float]:
    out = {}
    for a, b in combinations(NORM_NAMES, 2):
        out[f"{a}/{b}"] = norms[a] / norms[b] if norms[b] > 0 else float("inf")
    return out


def equivalence_report(f, system: OrthoSystem, trials: int = 200, seed=0,
                       levels: int = 40, c_threshold: float = 0.4,
                       quad_rtol: float = 1e-6) -> EquivalenceReport:
    """Sum of atomic weights, ||S||_1, ||P||_1 and the sign-flip supremum of f.

    ``quad_rtol`` drives the quadrature of ||P||_1; ||S||_1 uses at least 1e-4.
    """
    e = expand(f, system)
    dec = atomic_decompose(e, levels, c_threshold)
    norms = {"eta": dec.weight_sum, "S": max_norm1(e, max(quad_rtol, 1e-4)), "P": sq_norm1(e, quad_rtol),
             "sign": sign_flip_supremum(e, trials, seed)}
    params = {"k": system.k, "N": system.N, "trials": trials, "seed": seed,
              "c_threshold": c_threshold, "levels_used": dec.level_count,
              "C": dec.constant, "reconstruction_error": dec.reconstruction_error}
    return EquivalenceReport(norms, pairwise_ratios(norms), params, dec)
