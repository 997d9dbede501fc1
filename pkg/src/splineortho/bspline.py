"""B-spline bases, exact Gram matrices and rows of their inverses.

B-splines are normalised to a partition of unity.  Evaluation uses the
triangular recursion for all k nonzero functions at a point; values are
right-continuous at interior knots and left-continuous at the right end.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .errors import ContractError, NumericalError
from .knotseq import Grid
from .ppoly import PiecewisePoly, gauss01


class BSplineBasis:
    """Order-k B-splines N_1, ..., N_m on a clamped knot vector ``tau``.

    ``tau`` has ``m + k`` entries; the first and last k entries coincide.
    Indices passed to public methods are 1-based, as in N_i.
    """

    def __init__(self, tau, k: int, n: int | None = None):
        tau = np.asarray(tau, dtype=float)
        if k < 1:
            raise ContractError("order must be >= 1")
        if tau.size < 2 * k or np.any(np.diff(tau) < 0):
            raise ContractError("knot vector must be nondecreasing with at least 2k entries")
        if np.any(tau[:k] != tau[0]) or np.any(tau[-k:] != tau[-1]):
            raise ContractError("boundary knots must have multiplicity k")
        self.tau = tau
        self.k = k
        self.m = tau.size - k
        # n is the grid label; for an order-k basis on T_n it is m - k + 1
        self.n = self.m - k + 1 if n is None else n

    @classmethod
    def from_grid(cls, grid: Grid) -> "BSplineBasis":
        return cls(grid.tau, grid.k, grid.n)

    @cached_property
    def breaks(self) -> np.ndarray:
        return np.unique(self.tau)

    @cached_property
    def _last_span(self) -> int:
        return int(np.flatnonzero(self.tau[:-1] < self.tau[1:]).max())

    def support_length(self, i) -> np.ndarray | float:
        """|D^{(k)}_i| = tau_{i+k} - tau_i for 1-based i."""
        i = np.asarray(i)
        return self.tau[i - 1 + self.k] - self.tau[i - 1]

    def span(self, x: np.ndarray) -> np.ndarray:
        """0-based mu with tau[mu] <= x < tau[mu+1] (closed at the right end)."""
        mu = np.searchsorted(self.tau, x, side="right") - 1
        return np.clip(mu, self.k - 1, self._last_span)

    def nonzero(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Span index and the k values N_{mu-k+2}, ..., N_{mu+1} (1-based) at x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        mu = self.span(x)
        k, tau = self.k, self.tau
        vals = np.zeros((x.size, k))
        vals[:, 0] = 1.0
        left = np.zeros((x.size, k))
        right = np.zeros((x.size, k))
        for j in range(1, k):
            left[:, j] = x - tau[mu + 1 - j]
            right[:, j] = tau[mu + j] - x
            saved = np.zeros(x.size)
            for r in range(j):
                temp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
                vals[:, r] = saved + right[:, r + 1] * temp
                saved = left[:, j - r] * temp
            vals[:, j] = saved
        return mu, vals

    def evaluate(self, i: int, x):
        """N_i(x) for a 1-based index i."""
        if not 1 <= i <= self.m:
            raise ContractError(f"B-spline index {i} outside 1..{self.m}")
        scalar = np.ndim(x) == 0
        mu, vals = self.nonzero(x)
        r = (i - 1) - (mu - self.k + 1)
        ok = (r >= 0) & (r < self.k)
        out = np.where(ok, vals[np.arange(mu.size), np.clip(r, 0, self.k - 1)], 0.0)
        return float(out[0]) if scalar else out

    def matrix(self, x) -> np.ndarray:
        """Dense collocation matrix, shape (len(x), m)."""
        mu, vals = self.nonzero(x)
        out = np.zeros((mu.size, self.m))
        rows = np.arange(mu.size)
        for r in range(self.k):
            out[rows, mu - self.k + 1 + r] = vals[:, r]
        return out

    def greville(self) -> np.ndarray:
        if self.k == 1:
            return 0.5 * (self.tau[:-1] + self.tau[1:])
        idx = np.arange(self.m)[:, None] + np.arange(1, self.k)[None, :]
        return self.tau[idx].mean(axis=1)

    def spline(self, coeffs) -> "Spline":
        return Spline(self, np.asarray(coeffs, dtype=float))


@dataclass(frozen=True)
class Spline:
    basis: BSplineBasis
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.coeffs.shape != (self.basis.m,):
            raise ContractError(f"expected {self.basis.m} coefficients, got {self.coeffs.shape}")

    @property
    def k(self) -> int:
        return self.basis.k

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        mu, vals = self.basis.nonzero(x)
        idx = mu[:, None] - self.k + 1 + np.arange(self.k)[None, :]
        out = np.einsum("ij,ij->i", vals, self.coeffs[idx])
        return float(out[0]) if scalar else out

    def derivative(self) -> "Spline":
        return derivative(self)

    def to_ppoly(self) -> PiecewisePoly:
        return PiecewisePoly.from_function(self.basis.breaks, self, self.k - 1)

    def scaled(self, c: float) -> "Spline":
        return Spline(self.basis, self.coeffs * c)


def derivative(s: Spline) -> Spline:
    """Derivative as an order-(k-1) spline on the same knots.

    Coefficient j is (k-1)(a_j - a_{j-1}) / |D^{(k-1)}_j|; terms whose
    support has zero length are dropped.
    """
    k = s.k
    if k < 2:
        raise ContractError("order-1 splines have no spline derivative")
    tau = s.basis.tau
    a = s.coeffs
    # D^{(k-1)}_j = [tau_j, tau_{j+k-1}] for j = 2 .. m  (1-based)
    j = np.arange(2, s.basis.m + 1)
    length = tau[j - 1 + k - 1] - tau[j - 1]
    diff = a[1:] - a[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.where(length > 0, (k - 1) * diff / length, 0.0)
    return Spline(BSplineBasis(tau[1:-1], k - 1, s.basis.n), c)


@dataclass
class GramMatrix:
    """Symmetric banded matrix (<N_i, N_j>) in LAPACK lower band storage.

    ``bands[d, j] = G[j + d, j]`` for d = 0 .. k-1 (0-based).
    """

    bands: np.ndarray
    k: int

    @property
    def size(self) -> int:
        return self.bands.shape[1]

    def dense(self) -> np.ndarray:
        m = self.size
        G = np.zeros((m, m))
        for d in range(self.k):
            idx = np.arange(m - d)
            G[idx + d, idx] = self.bands[d, : m - d]
            G[idx, idx + d] = self.bands[d, : m - d]
        return G

    def diagonal(self) -> np.ndarray:
        return self.bands[0].copy()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.bands[0][:, None] * x if x.ndim == 2 else self.bands[0] * x
        m = self.size
        for d in range(1, self.k):
            b = self.bands[d, : m - d]
            if x.ndim == 2:
                out[d:] += b[:, None] * x[: m - d]
                out[: m - d] += b[:, None] * x[d:]
            else:
                out[d:] += b * x[: m - d]
                out[: m - d] += b * x[d:]
        return out

    @cached_property
    def cholesky(self) -> np.ndarray:
        try:
            return cholesky_banded(self.bands, lower=True)
        except np.linalg.LinAlgError as exc:
            m = re.search(r"(\d+)-th leading minor", str(exc))
            pivot = int(m.group(1)) if m else None
            raise NumericalError(f"Gram matrix is not positive definite (pivot {pivot})", pivot) from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve_banded((self.cholesky, True), rhs)


def gram(basis: BSplineBasis) -> GramMatrix:
    """Exact Gram matrix: k-point Gauss-Legendre on every nonempty knot interval."""
    k = basis.k
    br = basis.breaks
    s, w = gauss01(k)
    h = np.diff(br)
    x = (br[:-1, None] + h[:, None] * s[None, :]).ravel()
    wt = (h[:, None] * w[None, :]).ravel()
    mu, vals = basis.nonzero(x)
    first = mu - k + 1
    bands = np.zeros((k, basis.m))
    for r in range(k):
        for c in range(r + 1):
            np.add.at(bands[r - c], first + c, wt * vals[:, r] * vals[:, c])
    return GramMatrix(bands, k)


@dataclass(frozen=True)
class GramInverseRows:
    """Rows b_{j.} of the inverse Gram matrix for the 1-based indices ``rows``."""

    rows: tuple[int, ...]
    values: np.ndarray = field(repr=False)

    def row(self, j: int) -> np.ndarray:
        return self.values[self.rows.index(j)]

    def checkerboard_slack(self) -> float:
        """Largest violation of (-1)^{i+j} b_ij >= 0, relative to the row diagonal."""
        worst = 0.0
        cols = np.arange(1, self.values.shape[1] + 1)
        for j, row in zip(self.rows, self.values):
            signed = ((-1.0) ** (cols + j)) * row
            worst = max(worst, float(np.max(-signed)) / abs(row[j - 1]))
        return max(worst, 0.0)

    def diagonal_bound_holds(self, g: GramMatrix, rtol: float = 1e-10) -> bool:
        """b_jj >= 1 / <N_j, N_j> for every stored row."""
        diag = g.diagonal()
        return all(self.values[r, j - 1] >= (1.0 - rtol) / diag[j - 1]
                   for r, j in enumerate(self.rows))


def dual_rows(g: GramMatrix, rows) -> GramInverseRows:
    """Solve G b_{j.} = e_j for each requested 1-based j using a banded Cholesky."""
    rows = tuple(int(j) for j in rows)
    m = g.size
    if any(not 1 <= j <= m for j in rows):
        raise ContractError(f"row indices must lie in 1..{m}")
    rhs = np.zeros((m, len(rows)))
    rhs[np.array(rows) - 1, np.arange(len(rows))] = 1.0
    sol = g.solve(rhs)
    return GramInverseRows(rows, np.ascontiguousarray(sol.T))


def stability_report(s: Spline, p: float = 2) -> tuple[float, float]:
    """Ratios in the L^p stability of the B-spline basis.

    r1 = max_j |a_j| |J_j|^{1/p} / ||s||_{L^p(J_j)} where J_j is a longest
    knot interval inside supp N_j; r2 = ||s||_p / ||(a_j |D_j|^{1/p})||_{l^p}.
    The zero spline returns (1, 1).
    """
    if not 1 <= p <= np.inf:
        raise ContractError("p must lie in [1, inf]")
    a = s.coeffs
    if not np.any(a):
        return 1.0, 1.0
    basis = s.basis
    k, tau = basis.k, basis.tau
    pp = s.to_ppoly()
    inv_p = 0.0 if np.isinf(p) else 1.0 / p

    r1 = 0.0
    for j in range(basis.m):
        if a[j] == 0:
            continue
        gaps = np.diff(tau[j: j + k + 1])
        t = int(np.argmax(gaps))
        lo, hi = tau[j + t], tau[j + t + 1]
        local = pp.lp_norm_on(lo, hi, p)
        r1 = max(r1, np.inf if local == 0 else abs(a[j]) * (hi - lo) ** inv_p / local)

    D = basis.support_length(np.arange(1, basis.m + 1))
    if np.isinf(p):
        seq_norm = np.max(np.abs(a))
    else:
        seq_norm = np.sum(np.abs(a) ** p * D) ** inv_p
    r2 = pp.norm(p) / seq_norm
    return float(r1), float(r2)


# --- file formats --------------------------------------------------------

def dumps_spline(s: Spline) -> str:
    return json.dumps({"k": s.k, "n": s.basis.n, "coeffs": s.coeffs.tolist()})


def loads_spline(text: str, grid: Grid) -> Spline:
    obj = json.loads(text)
    if obj["k"] != grid.k or obj["n"] != grid.n:
        raise ContractError("spline dump does not match the grid")
    return BSplineBasis.from_grid(grid).spline(obj["coeffs"])


def curve_rows(func, step: float = 1e-3):
    x = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    return x, np.asarray(func(x))


def write_curve_csv(path, x, **columns) -> None:
    names = list(columns) or ["value"]
    with open(path, "w") as fh:
        fh.write(",".join(["x", *names]) + "\n")
        cols = [np.asarray(columns[c]) for c in names]
        for i, xi in enumerate(x):
            fh.write(",".join([repr(float(xi)), *(repr(float(c[i])) for c in cols)]) + "\n")
