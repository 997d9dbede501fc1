"""Admissible knot sequences, the grids T_n and regularity diagnostics.

Indexing follows the usual 1-based convention for grid knots: ``tau_i`` with
``1 <= i <= n + 2k - 1``; the arrays themselves are 0-based, so ``tau_i`` is
``grid.tau[i - 1]``.
"""
from __future__ import annotations

import bisect
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import AdmissibilityError, ContractError


@dataclass(frozen=True)
class KnotSequence:
    """Order ``k`` and the points ``t_2, t_3, ...`` in insertion order."""

    k: int
    points: tuple[float, ...]

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise AdmissibilityError(f"order k must be a positive integer, got {self.k!r}")
        pts = tuple(float(p) for p in self.points)
        object.__setattr__(self, "points", pts)
        for p in pts:
            if not 0.0 < p < 1.0:
                raise AdmissibilityError(f"point {p!r} is not inside (0, 1)")
        counts = Counter(pts)
        worst = max(counts.values(), default=0)
        if worst > self.k:
            value = max(counts, key=counts.get)
            raise AdmissibilityError(
                f"point {value!r} occurs {worst} times, more than k={self.k}")

    @property
    def n_max(self) -> int:
        """Largest n for which T_n is defined by this finite prefix."""
        return len(self.points) + 1

    def point(self, n: int) -> float:
        """t_n for n >= 0 (t_0 = 0, t_1 = 1)."""
        if n == 0:
            return 0.0
        if n == 1:
            return 1.0
        return self.points[n - 2]

    def with_order(self, k: int) -> "KnotSequence":
        return KnotSequence(k, self.points)


@dataclass(frozen=True)
class Grid:
    """The knot vector T_n with k-fold boundary knots."""

    n: int
    k: int
    tau: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.tau.setflags(write=False)

    @property
    def dim(self) -> int:
        """Dimension n + k - 1 of the spline space on this grid."""
        return self.n + self.k - 1

    def t(self, i: int) -> float:
        """1-based knot access tau_{n,i}."""
        return float(self.tau[i - 1])

    def interval(self, i: int, ell: int) -> "GridInterval":
        """D^{(ell)}_{n,i} = [tau_i, tau_{i+ell}]."""
        if not 1 <= ell <= self.k:
            raise ContractError(f"ell={ell} outside 1..k={self.k}")
        if not self.k - ell + 1 <= i <= self.n + self.k - 1:
            raise ContractError(f"index i={i} outside {self.k - ell + 1}..{self.n + self.k - 1}")
        return GridInterval(self.n, i, ell, self.t(i), self.t(i + ell))

    def window_lengths(self, ell: int) -> np.ndarray:
        """|D^{(ell)}_{n,i}| for i = k-ell+1, ..., n+k-1 (in that order)."""
        lo = self.k - ell  # 0-based position of tau_{k-ell+1}
        hi = self.n + self.k - 1  # exclusive 0-based end of the start indices
        return self.tau[lo + ell:hi + ell] - self.tau[lo:hi]

    def cells(self) -> np.ndarray:
        """Distinct breakpoints of the grid (strictly increasing)."""
        return np.unique(self.tau)

    def interior(self) -> np.ndarray:
        return self.tau[self.k:self.n + self.k - 1]


@dataclass(frozen=True)
class GridInterval:
    """A closed interval [tau_{n,i}, tau_{n,i+ell}] remembered with its labels."""

    n: int
    i: int
    ell: int
    lo: float
    hi: float

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, other: "GridInterval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi


@dataclass(frozen=True)
class RegularityReport:
    ell: int
    gamma: float
    witness: tuple[int, int] | None  # (n, i) of the worst neighbouring pair

    @property
    def regular(self) -> bool:
        return math.isfinite(self.gamma)


def _tau_from_sorted(interior: Sequence[float], k: int) -> np.ndarray:
    return np.concatenate([np.zeros(k), np.asarray(interior, dtype=float), np.ones(k)])


def make_grid(seq: KnotSequence, n: int) -> Grid:
    """Build T_n from the first n + 1 points t_0, ..., t_n."""
    if n < 2:
        raise ContractError(f"grids are defined for n >= 2, got n={n}")
    if n > seq.n_max:
        raise ContractError(f"sequence has only {len(seq.points)} points; T_{n} needs {n - 1}")
    interior = sorted(seq.points[: n - 1])
    return Grid(n, seq.k, _tau_from_sorted(interior, seq.k))


def base_grid(k: int) -> Grid:
    """T_1: only the boundary knots; the spline space is the polynomials of order k."""
    return Grid(1, k, _tau_from_sorted([], k))


def iter_grids(seq: KnotSequence, n_max: int | None = None, n_min: int = 2) -> Iterator[tuple[Grid, int]]:
    """Yield ``(T_n, i0)`` for n_min <= n <= n_max, inserting points incrementally.

    ``i0`` is the 1-based index of t_n in T_n.  With repeated values the new
    point is placed after the existing copies.
    """
    n_max = seq.n_max if n_max is None else n_max
    if n_max > seq.n_max:
        raise ContractError(f"n_max={n_max} exceeds the available prefix ({seq.n_max})")
    interior: list[float] = []
    k = seq.k
    for n in range(2, n_max + 1):
        p = seq.points[n - 2]
        pos = bisect.bisect_right(interior, p)
        interior.insert(pos, p)
        if n >= n_min:
            yield Grid(n, k, _tau_from_sorted(interior, k)), k + pos + 1


def inserted_index(seq: KnotSequence, n: int) -> int:
    """1-based index i0 of the new point t_n inside T_n (after equal copies)."""
    if n < 2:
        raise ContractError("no inserted point for n < 2")
    prev = sorted(seq.points[: n - 2])
    return seq.k + bisect.bisect_right(prev, seq.points[n - 2]) + 1


def _neighbour_ratios(lengths: np.ndarray) -> np.ndarray:
    a, b = lengths[:-1], lengths[1:]
    both_zero = (a == 0) & (b == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.maximum(a / b, b / a)
    r[both_zero] = 1.0
    return r


def regularity_parameter(seq: KnotSequence, ell: int, n_max: int, n_min: int = 2) -> RegularityReport:
    """Smallest gamma with |D_i|/gamma <= |D_{i+1}| <= gamma |D_i| over all tested grids.

    A zero-length window next to a positive one makes gamma infinite; two
    adjacent zero-length windows are skipped.
    """
    if not 1 <= ell <= seq.k:
        raise ContractError(f"ell={ell} must lie in 1..k={seq.k}")
    if n_max < 2:
        raise ContractError("n_max must be >= 2")
    gamma, witness = 1.0, None
    for grid, _ in iter_grids(seq, n_max, n_min=max(2, n_min)):
        r = _neighbour_ratios(grid.window_lengths(ell))
        if r.size == 0:
            continue
        j = int(np.argmax(r))
        if r[j] > gamma:
            gamma, witness = float(r[j]), (grid.n, seq.k - ell + 1 + j)
    return RegularityReport(ell, gamma, witness)


def decay_factor(gamma: float, ell: int) -> float:
    g = gamma ** ell
    return g / (1.0 + g)


def nested_decay_check(chain: Sequence[GridInterval], gamma: float, ell: int) -> bool:
    """Geometric decay along a strictly decreasing chain of D^{(ell)} intervals.

    True iff every run of 2*ell consecutive members satisfies
    ``|last| <= gamma^ell / (1 + gamma^ell) * |first|``.
    """
    if len(chain) < 2 * ell:
        raise ContractError(f"chain of length {len(chain)} is shorter than 2*ell={2 * ell}")
    for a, b in zip(chain, chain[1:]):
        if not (a.contains(b) and (a.lo, a.hi) != (b.lo, b.hi)):
            raise ContractError(f"chain is not strictly decreasing at {a} -> {b}")
    factor = decay_factor(gamma, ell)
    for s in range(len(chain) - 2 * ell + 1):
        first, last = chain[s], chain[s + 2 * ell - 1]
        if last.length > factor * first.length * (1 + 1e-12):
            return False
    return True


def _as_interval(a) -> tuple[float, float]:
    if np.ndim(a) == 0:
        x = float(a)
        return x, x
    if isinstance(a, GridInterval):
        lo, hi = a.lo, a.hi
    else:
        lo, hi = map(float, a)
    if hi < lo:
        raise ContractError(f"interval [{lo}, {hi}] is reversed")
    return lo, hi


def count_points_between(grid: Grid | np.ndarray, a, b) -> int:
    """Grid points (with multiplicity) between two sets, endpoints included.

    ``a`` and ``b`` are points or ``(lo, hi)`` intervals.  The closed gap
    between them is counted, so a shared endpoint counts once (times its
    multiplicity).  Overlapping sets give 0.
    """
    tau = grid.tau if isinstance(grid, Grid) else np.asarray(grid)
    alo, ahi = _as_interval(a)
    blo, bhi = _as_interval(b)
    for v in (alo, ahi, blo, bhi):
        if not 0.0 <= v <= 1.0:
            raise ContractError(f"{v} lies outside [0, 1]")
    if ahi <= blo:
        lo, hi = ahi, blo
    elif bhi <= alo:
        lo, hi = bhi, alo
    else:
        return 0
    if (alo, ahi) == (blo, bhi):
        return 0
    return int(np.searchsorted(tau, hi, "right") - np.searchsorted(tau, lo, "left"))


def count_to_interval(tau: np.ndarray, x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Vectorised ``count_points_between(tau, x_i, (lo, hi))`` for points x."""
    x = np.asarray(x, dtype=float)
    left = x <= lo
    right = x >= hi
    out = np.zeros(x.shape, dtype=int)
    out[left] = np.searchsorted(tau, lo, "right") - np.searchsorted(tau, x[left], "left")
    out[right] = np.searchsorted(tau, x[right], "right") - np.searchsorted(tau, hi, "left")
    out[left & right] = 0  # x equal to a degenerate interval
    return out


# --- sequence generators -------------------------------------------------

def dyadic_points(count: int) -> list[float]:
    """Dyadic midpoints in level order: 1/2, 1/4, 3/4, 1/8, 3/8, ..."""
    pts: list[float] = []
    level = 1
    while len(pts) < count:
        den = 2 ** level
        pts.extend(j / den for j in range(1, den, 2))
        level += 1
    return pts[:count]


def uniform_points(count: int) -> list[float]:
    """The grid j/(count+1), inserted left to right."""
    return [j / (count + 1) for j in range(1, count + 1)]


def random_points(count: int, rng: np.random.Generator) -> list[float]:
    pts = rng.random(count)
    # a draw of exactly 0.0 is possible in principle
    pts[pts == 0.0] = 0.5
    return pts.tolist()


def dyadic_sequence(k: int, count: int) -> KnotSequence:
    return KnotSequence(k, tuple(dyadic_points(count)))


# --- file formats --------------------------------------------------------

def dumps_knots(seq: KnotSequence) -> str:
    return json.dumps({"k": seq.k, "points": list(seq.points)})


def loads_knots(text: str) -> KnotSequence:
    """Parse the JSON form, or the text form with a ``k=<int>`` header line."""
    stripped = text.strip()
    if stripped.startswith("{"):
        obj = json.loads(stripped)
        return KnotSequence(int(obj["k"]), tuple(obj["points"]))
    lines = [ln.strip() for ln in stripped.splitlines() if ln.strip()]
    if not lines or not lines[0].replace(" ", "").startswith("k="):
        raise ValueError("text knot file must start with a 'k=<int>' header")
    k = int(lines[0].replace(" ", "")[2:])
    return KnotSequence(k, tuple(float(v) for v in lines[1:]))


def load_knots(path) -> KnotSequence:
    return loads_knots(Path(path).read_text())


def save_knots(seq: KnotSequence, path) -> None:
    Path(path).write_text(dumps_knots(seq) + "\n")
