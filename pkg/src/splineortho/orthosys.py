"""The orthonormal spline system (f_n) and its characteristic intervals.

For n >= 2 the function f_n is computed from the explicit dual-basis
representation: with i0 the index of the new knot in T_n,
``g = sum_j alpha_j N_j^*`` over i0-k <= j <= i0, whose B-spline
coefficients are ``w_l = sum_j alpha_j b_{jl}`` (b the inverse Gram matrix).
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .bspline import BSplineBasis, GramInverseRows, Spline, dual_rows, gram
from .errors import ContractError
from .knotseq import Grid, KnotSequence, base_grid, count_to_interval, iter_grids, make_grid, inserted_index
from .ppoly import PiecewisePoly, gauss01, sample_nodes

LAMBDA_FACTOR = 2.0
Q_LADDER = tuple(np.round(np.arange(0.5, 0.951, 0.05), 2))


# --- polynomial part -------------------------------------------------------

def _legendre_monomial(d: int) -> np.ndarray:
    """Monomial coefficients of the orthonormal shifted Legendre polynomial of degree d."""
    c = np.array([(-1) ** (d + i) * math.comb(d, i) * math.comb(d + i, i) for i in range(d + 1)], float)
    return math.sqrt(2 * d + 1) * c


def _monomial_to_bernstein(c: np.ndarray, K: int) -> np.ndarray:
    c = np.concatenate([c, np.zeros(K + 1 - c.size)])
    return np.array([sum(math.comb(j, i) / math.comb(K, i) * c[i] for i in range(j + 1))
                     for j in range(K + 1)])


@dataclass(frozen=True)
class PolyMember:
    """One of the initial orthonormal polynomials f_n, -k+2 <= n <= 1."""

    n: int
    monomial: np.ndarray = field(repr=False)
    spline: Spline = field(repr=False)

    def __call__(self, x):
        return self.spline(x)


def initial_polynomials(k: int) -> list[PolyMember]:
    """f_{-k+2}, ..., f_1: orthonormal polynomials of degree 0, ..., k-1 on [0, 1].

    Each has a positive leading coefficient and is stored as a spline on
    T_1 (Bernstein form) as well as by its monomial coefficients.
    """
    if k < 1:
        raise ContractError("k must be >= 1")
    basis = BSplineBasis.from_grid(base_grid(k))
    out = []
    for d in range(k):
        mono = _legendre_monomial(d)
        out.append(PolyMember(d - k + 2, mono, basis.spline(_monomial_to_bernstein(mono, k - 1))))
    return out


# --- alpha coefficients and characteristic intervals -----------------------

@dataclass(frozen=True)
class AlphaVector:
    i0: int
    k: int
    values: np.ndarray = field(repr=False)  # alpha_j for j = i0-k .. i0

    @property
    def indices(self) -> np.ndarray:
        return np.arange(self.i0 - self.k, self.i0 + 1)

    def __getitem__(self, j: int) -> float:
        return float(self.values[j - (self.i0 - self.k)])


def alpha_coefficients(grid: Grid, i0: int) -> AlphaVector:
    """The alternating weights alpha_j, i0-k <= j <= i0, of the new orthogonal function."""
    k, n = grid.k, grid.n
    if not k + 1 <= i0 <= n + k - 1:
        raise ContractError(f"i0={i0} outside {k + 1}..{n + k - 1}")
    t = grid.t
    ti0 = t(i0)
    # ratio factors for l = i0-k+1 .. i0-1
    lower, upper = [], []
    for l in range(i0 - k + 1, i0):
        den = t(l + k) - t(l)
        if den <= 0:
            raise ContractError(f"zero-length support at l={l}: more than k coincident knots")
        lower.append((ti0 - t(l)) / den)
        upper.append((t(l + k) - ti0) / den)
    vals = np.empty(k + 1)
    base = i0 - k + 1
    for pos, j in enumerate(range(i0 - k, i0 + 1)):
        left = np.prod(lower[: max(0, j - base)])          # l = i0-k+1 .. j-1
        right = np.prod(upper[max(0, j + 1 - base):])      # l = j+1 .. i0-1
        vals[pos] = (-1) ** (j - i0 + k) * left * right
    return AlphaVector(i0, k, vals)


@dataclass(frozen=True)
class CharacteristicSelection:
    lambda0: tuple[int, ...]
    lambda1: tuple[int, ...]
    j0: int
    J: tuple[float, float]
    J_index: int  # 1-based i with J = [tau_i, tau_{i+1}]

    @property
    def length(self) -> float:
        return self.J[1] - self.J[0]


def characteristic_interval(grid: Grid, i0: int, alpha: AlphaVector,
                            factor: float = LAMBDA_FACTOR) -> CharacteristicSelection:
    """Select J_n: near-minimal support, then largest |alpha_j|, then longest knot interval.

    Ties are broken toward the smallest index j0 and the leftmost interval.
    """
    k = grid.k
    idx = alpha.indices
    supports = np.array([grid.t(j + k) - grid.t(j) for j in idx])
    lam0 = idx[supports <= factor * supports.min()]
    mags = np.array([abs(alpha[j]) for j in lam0])
    lam1 = lam0[mags == mags.max()]
    j0 = int(lam1.min())
    gaps = [grid.t(j0 + l + 1) - grid.t(j0 + l) for l in range(k)]
    l_best = int(np.argmax(gaps))
    J_index = j0 + l_best
    return CharacteristicSelection(tuple(int(j) for j in lam0), tuple(int(j) for j in lam1), j0,
                                   (grid.t(J_index), grid.t(J_index + 1)), J_index)


# --- the functions f_n -----------------------------------------------------

@dataclass(frozen=True)
class OrthoFunction:
    n: int
    i0: int
    grid: Grid = field(repr=False)
    w: np.ndarray = field(repr=False)   # B-spline coefficients of g (sign fixed: w_{j0} > 0)
    norm2: float
    J: tuple[float, float]
    j0: int
    alpha: AlphaVector | None = field(default=None, repr=False)
    selection: CharacteristicSelection | None = field(default=None, repr=False)
    dual: GramInverseRows | None = field(default=None, repr=False)
    sign: float = 1.0

    @cached_property
    def basis(self) -> BSplineBasis:
        return BSplineBasis.from_grid(self.grid)

    @property
    def coeffs(self) -> np.ndarray:
        return self.w / self.norm2

    @cached_property
    def spline(self) -> Spline:
        return self.basis.spline(self.coeffs)

    @property
    def J_length(self) -> float:
        return self.J[1] - self.J[0]

    def __call__(self, x):
        return self.spline(x)

    def to_ppoly(self) -> PiecewisePoly:
        return self.spline.to_ppoly()


def _ortho_from_grid(grid: Grid, i0: int, factor: float = LAMBDA_FACTOR) -> OrthoFunction:
    k = grid.k
    basis = BSplineBasis.from_grid(grid)
    G = gram(basis)
    alpha = alpha_coefficients(grid, i0)
    rows = dual_rows(G, alpha.indices)
    w = alpha.values @ rows.values
    sel = characteristic_interval(grid, i0, alpha, factor)
    sign = 1.0 if w[sel.j0 - 1] > 0 else -1.0
    w = sign * w
    norm2 = float(np.sqrt(w @ G.matvec(w)))
    return OrthoFunction(grid.n, i0, grid, w, norm2, sel.J, sel.j0, alpha, sel, rows, sign)


def orthonormal_function(seq: KnotSequence, n: int, factor: float = LAMBDA_FACTOR) -> OrthoFunction:
    """f_n for n >= 2: the unit-norm element of S_n orthogonal to S_{n-1}."""
    if n < 2:
        raise ContractError("spline members start at n = 2")
    return _ortho_from_grid(make_grid(seq, n), inserted_index(seq, n), factor)


@dataclass
class OrthoSystem:
    seq: KnotSequence
    polys: list[PolyMember]
    functions: list[OrthoFunction]

    @property
    def k(self) -> int:
        return self.seq.k

    @property
    def N(self) -> int:
        return self.functions[-1].n if self.functions else 1

    @property
    def members(self) -> list:
        return [*self.polys, *self.functions]

    @property
    def indices(self) -> np.ndarray:
        return np.array([m.n for m in self.members])

    def __len__(self) -> int:
        return len(self.polys) + len(self.functions)

    def function(self, n: int) -> OrthoFunction:
        return self.functions[n - 2]

    def member(self, n: int):
        return self.members[n + self.k - 2]

    @cached_property
    def finest_grid(self) -> Grid:
        return self.functions[-1].grid if self.functions else base_grid(self.k)

    @property
    def breaks(self) -> np.ndarray:
        return self.finest_grid.cells()

    @cached_property
    def pp_coef(self) -> np.ndarray:
        """Local power coefficients of every member on the cells of the finest grid.

        Shape ``(members, cells, k)``; see :class:`PiecewisePoly` for the
        cell-local variable.
        """
        br = self.breaks
        return np.stack([m.spline.to_ppoly().refine(br).elevate(self.k - 1).coef
                         for m in self.members])

    def values(self, x) -> np.ndarray:
        """Matrix of f_n(x_i), one row per member in index order."""
        x = np.asarray(x, dtype=float)
        br = self.breaks
        c = np.clip(np.searchsorted(br, x, side="right") - 1, 0, br.size - 2)
        s = (x - br[c]) / (br[c + 1] - br[c])
        coef = self.pp_coef[:, c, :]
        out = np.zeros((coef.shape[0], x.size))
        for p in range(self.k - 1, -1, -1):
            out = out * s + coef[:, :, p]
        inside = (x >= 0.0) & (x <= 1.0)
        return out * inside

    def combination(self, coeffs) -> PiecewisePoly:
        """sum_n c_n f_n as a piecewise polynomial on the finest grid."""
        coeffs = np.asarray(coeffs, dtype=float)
        return PiecewisePoly(self.breaks, np.tensordot(coeffs, self.pp_coef, axes=(0, 0)))

    def gram(self) -> np.ndarray:
        """Gram matrix of the members, exact via Gauss quadrature on the finest grid."""
        x, w = sample_nodes(self.breaks, self.k)
        V = self.values(x)
        return (V * w) @ V.T

    def orthonormality_error(self) -> float:
        G = self.gram()
        return float(np.max(np.abs(G - np.eye(G.shape[0]))))

    def J_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        J = np.array([f.J for f in self.functions]).reshape(-1, 2)
        return J[:, 0], J[:, 1]


def build_system(seq: KnotSequence, N: int, factor: float = LAMBDA_FACTOR,
                 workers: int = 1) -> OrthoSystem:
    """Polynomial part followed by f_2, ..., f_N."""
    if N < 2:
        raise ContractError("N must be >= 2")
    grids = list(iter_grids(seq, N))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            funcs = list(pool.map(lambda gi: _ortho_from_grid(gi[0], gi[1], factor), grids))
    else:
        funcs = [_ortho_from_grid(g, i0, factor) for g, i0 in grids]
    return OrthoSystem(seq, initial_polynomials(seq.k), funcs)


# --- dumps -----------------------------------------------------------------

def dumps_system(system: OrthoSystem) -> str:
    rows = [{"n": p.n, "monomial": p.monomial.tolist()} for p in system.polys]
    rows += [{"n": f.n, "i0": f.i0, "w": f.w.tolist(), "norm2": f.norm2,
              "J": list(f.J), "j0": f.j0} for f in system.functions]
    return json.dumps(rows)


def loads_system(seq: KnotSequence, text: str) -> OrthoSystem:
    """Rebuild a system from a dump without recomputing the coefficients."""
    rows = json.loads(text)
    k = seq.k
    polys, funcs = [], []
    basis1 = BSplineBasis.from_grid(base_grid(k))
    grids = None
    for row in rows:
        if "monomial" in row:
            mono = np.asarray(row["monomial"], float)
            polys.append(PolyMember(row["n"], mono, basis1.spline(_monomial_to_bernstein(mono, k - 1))))
            continue
        n = row["n"]
        if grids is None:
            n_last = max(r["n"] for r in rows)
            grids = {g.n: g for g, _ in iter_grids(seq, n_last)}
        w = np.asarray(row["w"], float)
        if w.size != grids[n].dim:
            raise ContractError(f"dump entry n={n} has {w.size} coefficients, expected {grids[n].dim}")
        funcs.append(OrthoFunction(n, row["i0"], grids[n], w, float(row["norm2"]),
                                   tuple(row["J"]), row["j0"]))
    return OrthoSystem(seq, polys, sorted(funcs, key=lambda f: f.n))


# --- decay diagnostics -------------------------------------------------------

def _interval_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return max(0.0, a[0] - b[1], b[0] - a[1])


@dataclass
class DecayReport:
    """Fitted decay base and constants for the coefficient and tail bounds.

    ``samples[name]`` holds ``(d, r)`` arrays where the bound reads
    ``r <= C q^d``; ``C[name]`` is the least such constant at the reported q.
    """

    q: float | None
    C: dict[str, float]
    q_fit: dict[str, float]
    samples: dict[str, tuple[np.ndarray, np.ndarray]] = field(repr=False)
    concentration: dict[str, float]
    wj0_ratio: float

    @property
    def found(self) -> bool:
        return self.q is not None and all(np.isfinite(c) for c in self.C.values())

    def constant(self, name: str, q: float) -> float:
        d, r = self.samples[name]
        return float(np.max(r / q ** d)) if d.size else 0.0

    def holds(self, q: float | None = None, C: dict[str, float] | None = None) -> bool:
        q = self.q if q is None else q
        C = self.C if C is None else C
        return all(np.all(r <= C[name] * q ** d * (1 + 1e-12)) for name, (d, r) in self.samples.items())


def _fit_q(d: np.ndarray, r: np.ndarray) -> float:
    good = r > 0
    d, r = d[good], r[good]
    if np.unique(d).size < 2:
        return 0.0
    slope = np.polyfit(d.astype(float), np.log(r), 1)[0]
    return float(min(np.exp(slope), np.inf))


def _decay_samples(f: OrthoFunction) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    grid, k = f.grid, f.grid.k
    tau = grid.tau
    J = f.J
    Jlen = f.J_length
    m = grid.dim
    j = np.arange(1, m + 1)
    lo, hi = tau[j - 1], tau[j - 1 + k]
    dist = np.maximum(0.0, np.maximum(lo - J[1], J[0] - hi))
    den = Jlen + dist + (hi - lo)
    d_coef = count_to_interval(tau, tau[j - 1], *J)
    out = {"coef": (d_coef, np.abs(f.w) * den)}

    pp = f.to_ppoly()
    br = pp.breaks
    cell = {1: pp.cell_power_integrals(1), 2: pp.h * 0 + _cell_sq(pp)}
    sup = pp.cell_sup()
    left_x = br[(br > 0) & (br < J[0])]
    right_x = br[(br < 1) & (br > J[1])]
    for p in (1, 2, np.inf):
        ds, rs = [], []
        if np.isinf(p):
            cum_left = np.maximum.accumulate(sup)
            cum_right = np.maximum.accumulate(sup[::-1])[::-1]
        else:
            cum_left = np.cumsum(cell[p]) ** (1 / p)
            cum_right = np.cumsum(cell[p][::-1])[::-1] ** (1 / p)
        expo = 1.0 if np.isinf(p) else 1 - 1 / p
        for xs, side in ((left_x, "L"), (right_x, "R")):
            if xs.size == 0:
                continue
            c = np.searchsorted(br, xs)  # xs == br[c]
            norms = cum_left[c - 1] if side == "L" else cum_right[c]
            dist = np.where(side == "L", J[0] - xs, xs - J[1])
            ds.append(count_to_interval(tau, xs, *J))
            rs.append(norms * (Jlen + dist) ** expo / np.sqrt(Jlen))
        name = f"tail_p{'inf' if np.isinf(p) else int(p)}"
        out[name] = (np.concatenate(ds) if ds else np.empty(0, int),
                     np.concatenate(rs) if rs else np.empty(0))
    return out


def _cell_sq(pp: PiecewisePoly) -> np.ndarray:
    s, w = gauss01(pp.degree + 1)
    v = np.polynomial.polynomial.polyval(s, pp.coef.T)
    return pp.h * (v ** 2 @ w)


def _concentration(f: OrthoFunction) -> dict[str, float]:
    pp = f.to_ppoly()
    out = {}
    for p, name in ((1, "p1"), (2, "p2"), (np.inf, "pinf")):
        out[name] = pp.lp_norm_on(f.J[0], f.J[1], p) / pp.norm(p)
    return out


def _wj0_ratio(f: OrthoFunction) -> float:
    if f.dual is None:
        return float("nan")
    b = f.dual.row(f.j0)[f.j0 - 1]
    return float(abs(f.w[f.j0 - 1]) / b)


def _assemble(samples, concentration, wj0, ladder) -> DecayReport:
    q_fit = {name: _fit_q(d, r) for name, (d, r) in samples.items() if d.size}
    worst = max(q_fit.values(), default=0.0)
    cands = [q for q in ladder if q >= worst - 1e-12]
    q = float(cands[0]) if cands else None
    qq = q if q is not None else float(ladder[-1])
    C = {name: (float(np.max(r / qq ** d)) if d.size else 0.0) for name, (d, r) in samples.items()}
    return DecayReport(q, C, q_fit, samples, concentration, wj0)


def decay_report(f: OrthoFunction, ladder=Q_LADDER) -> DecayReport:
    """Check the exponential-decay bounds for one f_n.

    The coefficient bound is ``|w_j| (|J_n| + dist(supp N_j, J_n) + |D_j|) <= C q^{d_n(tau_j)}``;
    tail bounds use the one-sided L^p norms at every knot outside J_n for
    p = 1, 2, inf.  q is the least ladder value above the fitted decay base.
    """
    return _assemble(_decay_samples(f), _concentration(f), _wj0_ratio(f), ladder)


def system_decay_report(system: OrthoSystem, ladder=Q_LADDER) -> DecayReport:
    """Pool the samples of every f_n so a single (q, C) must cover the whole system."""
    pooled: dict[str, list] = {}
    conc: dict[str, float] = {}
    wj0 = np.inf
    for f in system.functions:
        for name, (d, r) in _decay_samples(f).items():
            pooled.setdefault(name, []).append((d, r))
        for name, v in _concentration(f).items():
            conc[name] = min(conc.get(name, np.inf), v)
        wj0 = min(wj0, _wj0_ratio(f))
    samples = {name: (np.concatenate([d for d, _ in v]), np.concatenate([r for _, r in v]))
               for name, v in pooled.items()}
    return _assemble(samples, conc, float(wj0), ladder)


def coefficient_decay_slope(f: OrthoFunction) -> float:
    """Least-squares slope of log|w_j| against d_n(tau_j)."""
    tau = f.grid.tau
    j = np.arange(1, f.grid.dim + 1)
    d = count_to_interval(tau, tau[j - 1], *f.J)
    good = np.abs(f.w) > 0
    if np.unique(d[good]).size < 2:
        return float("nan")
    return float(np.polyfit(d[good].astype(float), np.log(np.abs(f.w[good])), 1)[0])


def system_coefficient_slope(system: OrthoSystem) -> float:
    """Slope of log|w_j| against d_n(tau_j), pooled over every f_n of the system."""
    ds, ls = [], []
    for f in system.functions:
        tau = f.grid.tau
        j = np.arange(1, f.grid.dim + 1)
        good = np.abs(f.w) > 0
        ds.append(count_to_interval(tau, tau[j - 1], *f.J)[good])
        ls.append(np.log(np.abs(f.w[good])))
    d = np.concatenate(ds).astype(float)
    if np.unique(d).size < 2:
        return float("nan")
    return float(np.polyfit(d, np.concatenate(ls), 1)[0])


# --- combinatorics of characteristic intervals --------------------------------

def max_N0(system: OrthoSystem, N: int | None = None) -> tuple[int, tuple[float, float]]:
    """max over knot pairs x < y of #{n : J_n in [x, y], |J_n| >= (y - x)/2}, n <= N."""
    N = system.N if N is None else N
    knots = np.unique(np.concatenate([[0.0, 1.0], system.seq.points[: N - 1]]))
    lo, hi = system.J_arrays()
    lo, hi = lo[: N - 1], hi[: N - 1]
    X, Y = np.meshgrid(knots, knots, indexing="ij")
    valid = X < Y
    count = np.zeros(X.shape, dtype=int)
    for a, b in zip(lo, hi):
        count += (X <= a) & (Y >= b) & (Y - X <= 2 * (b - a)) & valid
    ix = np.unravel_index(np.argmax(count), count.shape)
    return int(count[ix]), (float(knots[ix[0]]), float(knots[ix[1]]))


def char_combinatorics(system: OrthoSystem, samples: int = 100, seed: int = 0,
                       ell_max: int = 12) -> dict:
    """Empirical maxima of the characteristic-interval counting quantities.

    ``N0``: the count of J_n inside [x, y] with at least half its length,
    over all knot pairs.  ``V_ratio``: ``sum_{J_n in V} |J_n|^{1/2} int_{V^c} |f_n| / |V|``
    over sampled knot intervals V.  ``N_delta`` and ``M_delta``: the two
    sums over Delta = D^{(k-1)}_{m,i}, the second divided by (ell + 1)^2.
    """
    rng = np.random.default_rng(seed)
    k = system.k
    N = system.N
    out: dict = {}
    out["N0"], out["N0_pair"] = max_N0(system)

    knots = system.breaks
    Jlo, Jhi = system.J_arrays()
    Jlen = Jhi - Jlo
    # per-member cumulative L1 mass on the finest grid
    cum = []
    for f in system.functions:
        pp = f.to_ppoly().refine(knots)
        cum.append(np.concatenate([[0.0], np.cumsum(pp.cell_power_integrals(1))]))
    cum = np.array(cum)
    total = cum[:, -1]
    worst_v = 0.0
    for _ in range(samples):
        a, b = np.sort(rng.choice(knots.size, size=2, replace=False))
        alpha, beta = knots[a], knots[b]
        inside = (Jlo >= alpha) & (Jhi <= beta)
        outside_mass = total - (cum[:, b] - cum[:, a])
        val = np.sum(np.sqrt(Jlen[inside]) * outside_mass[inside]) / (beta - alpha)
        worst_v = max(worst_v, float(val))
    out["V_ratio"] = worst_v

    grids = [g for g, _ in iter_grids(system.seq, N)]
    worst_n, worst_m = 0.0, 0.0
    if k >= 2:
        for _ in range(samples):
            g = grids[rng.integers(len(grids))]
            i = int(rng.integers(1, g.n + 1))  # D^{(k-1)}_{m,i}, i in k-(k-1)+1 .. m+k-1
            lo_d, hi_d = g.t(i + 1), g.t(i + k)
            if hi_d <= lo_d:
                continue
            dlen = hi_d - lo_d
            s_n = 0.0
            s_m: dict[int, float] = {}
            for f, gr in zip(system.functions, grids):
                tau = gr.tau
                card = int(np.searchsorted(tau, hi_d, "right") - np.searchsorted(tau, lo_d, "left"))
                J = f.J
                if card == k and lo_d <= J[0] and J[1] <= hi_d:
                    s_n += J[1] - J[0]
                overlap = max(0.0, min(J[1], hi_d) - max(J[0], lo_d))
                if card >= k and overlap == 0:
                    if J[1] <= lo_d:
                        gap = (J[1], lo_d)
                    else:
                        gap = (hi_d, J[0])
                    ell = int(np.searchsorted(tau, gap[1], "right") - np.searchsorted(tau, gap[0], "left"))
                    if ell <= ell_max:
                        dist = gap[1] - gap[0]
                        s_m[ell] = s_m.get(ell, 0.0) + (J[1] - J[0]) / (dist + dlen)
            worst_n = max(worst_n, s_n / dlen)
            if s_m:
                worst_m = max(worst_m, max(v / (l + 1) ** 2 for l, v in s_m.items()))
    out["N_delta"] = worst_n
    out["M_delta"] = worst_m
    return out
