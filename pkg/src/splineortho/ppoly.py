"""Piecewise polynomials on a strictly increasing breakpoint vector.

Each cell ``[b_c, b_{c+1}]`` carries ascending power coefficients in the
local variable ``s = (x - b_c) / (b_{c+1} - b_c)`` in [0, 1], which keeps
tiny cells well conditioned.  Evaluation is right-continuous, with the last
cell closed at its right end.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P


@lru_cache(maxsize=None)
def gauss01(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(m)
    return (x + 1) / 2, w / 2


@lru_cache(maxsize=None)
def _fit_matrix(deg: int) -> np.ndarray:
    s, _ = gauss01(deg + 1)
    return np.linalg.inv(np.vander(s, deg + 1, increasing=True))


def merge_breaks(*arrays) -> np.ndarray:
    return np.unique(np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays]))


def sample_nodes(breaks: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes (m per cell) and the matching quadrature weights."""
    s, w = gauss01(m)
    h = np.diff(breaks)
    x = breaks[:-1, None] + h[:, None] * s[None, :]
    return x.ravel(), (h[:, None] * w[None, :]).ravel()


class PiecewisePoly:
    def __init__(self, breaks, coef):
        self.breaks = np.asarray(breaks, dtype=float)
        self.coef = np.atleast_2d(np.asarray(coef, dtype=float))
        if self.coef.shape[0] != self.breaks.size - 1:
            raise ValueError("need one coefficient row per cell")
        if np.any(np.diff(self.breaks) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    # -- construction ------------------------------------------------------
    @classmethod
    def from_function(cls, breaks, func, degree: int) -> "PiecewisePoly":
        """Interpolate ``func`` (a polynomial of at most ``degree`` per cell)."""
        breaks = np.asarray(breaks, dtype=float)
        x, _ = sample_nodes(breaks, degree + 1)
        vals = np.asarray(func(x), dtype=float).reshape(breaks.size - 1, degree + 1)
        return cls(breaks, vals @ _fit_matrix(degree).T)

    @classmethod
    def from_values(cls, breaks, values: np.ndarray) -> "PiecewisePoly":
        """Build from values at the ``deg + 1`` Gauss nodes of each cell."""
        values = np.asarray(values, dtype=float)
        return cls(breaks, values @ _fit_matrix(values.shape[1] - 1).T)

    @classmethod
    def constant(cls, breaks, values) -> "PiecewisePoly":
        return cls(breaks, np.asarray(values, dtype=float)[:, None])

    @property
    def degree(self) -> int:
        return self.coef.shape[1] - 1

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.breaks)

    # -- evaluation --------------------------------------------------------
    def cell_of(self, x) -> np.ndarray:
        c = np.searchsorted(self.breaks, x, side="right") - 1
        return np.clip(c, 0, self.breaks.size - 2)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = self.cell_of(x)
        s = (x - self.breaks[c]) / self.h[c]
        out = np.zeros_like(s)
        for p in range(self.degree, -1, -1):
            out = out * s + self.coef[c, p]
        inside = (x >= self.breaks[0]) & (x <= self.breaks[-1])
        return np.where(inside, out, 0.0)

    def refine(self, breaks) -> "PiecewisePoly":
        """Same function on a breakpoint vector containing the current one."""
        breaks = merge_breaks(self.breaks, breaks)
        breaks = breaks[(breaks >= self.breaks[0]) & (breaks <= self.breaks[-1])]
        if breaks.size == self.breaks.size:
            return self
        x, _ = sample_nodes(breaks, self.degree + 1)
        c = np.repeat(self.cell_of(0.5 * (breaks[:-1] + breaks[1:])), self.degree + 1)
        s = (x - self.breaks[c]) / self.h[c]
        vals = np.zeros_like(s)
        for p in range(self.degree, -1, -1):
            vals = vals * s + self.coef[c, p]
        return PiecewisePoly.from_values(breaks, vals.reshape(-1, self.degree + 1))

    def elevate(self, degree: int) -> "PiecewisePoly":
        if degree <= self.degree:
            return self
        pad = np.zeros((self.coef.shape[0], degree - self.degree))
        return PiecewisePoly(self.breaks, np.hstack([self.coef, pad]))

    # -- arithmetic ----------------------------------------------------------
    def _aligned(self, other: "PiecewisePoly"):
        br = merge_breaks(self.breaks, other.breaks)
        deg = max(self.degree, other.degree)
        return self.refine(br).elevate(deg), other.refine(br).elevate(deg)

    def __add__(self, other):
        if isinstance(other, PiecewisePoly):
            a, b = self._aligned(other)
            return PiecewisePoly(a.breaks, a.coef + b.coef)
        coef = self.coef.copy()
        coef[:, 0] += other
        return PiecewisePoly(self.breaks, coef)

    __radd__ = __add__

    def __neg__(self):
        return PiecewisePoly(self.breaks, -self.coef)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, scalar):
        return PiecewisePoly(self.breaks, self.coef * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def masked(self, keep: np.ndarray) -> "PiecewisePoly":
        """Zero every cell where ``keep`` is False."""
        return PiecewisePoly(self.breaks, self.coef * np.asarray(keep, dtype=float)[:, None])

    # -- integrals and norms -------------------------------------------------
    def cell_integrals(self) -> np.ndarray:
        p = np.arange(self.degree + 1)
        return self.h * (self.coef / (p + 1)).sum(axis=1)

    def integral(self) -> float:
        return float(self.cell_integrals().sum())

    def _cell_roots(self, coef: np.ndarray) -> np.ndarray:
        c = np.trim_zeros(coef, "b")
        if c.size <= 1:
            return np.empty(0)
        r = P.polyroots(c)
        r = r[np.abs(r.imag) < 1e-12].real
        return np.sort(r[(r > 0) & (r < 1)])

    def _batch_roots(self, coef: np.ndarray) -> np.ndarray:
        """Real roots in (0, 1) of every row polynomial, padded with 1.0.

        Returns shape ``(cells, deg)``.  Rows whose leading coefficient is
        negligible fall back to the per-cell root finder.
        """
        cells, deg = coef.shape[0], coef.shape[1] - 1
        out = np.ones((cells, max(deg, 0)))
        if deg == 0:
            return out
        lead = coef[:, -1]
        scale = np.max(np.abs(coef), axis=1)
        regular = np.abs(lead) > 1e-8 * scale
        if regular.any():
            c = coef[regular] / lead[regular, None]
            comp = np.zeros((c.shape[0], deg, deg))
            comp[:, 0, :] = -c[:, -2::-1]
            if deg > 1:
                comp[:, np.arange(1, deg), np.arange(deg - 1)] = 1.0
            r = np.linalg.eigvals(comp)
            real = (np.abs(r.imag) < 1e-6) & (r.real > 0) & (r.real < 1)
            out[regular] = np.sort(np.where(real, r.real, 1.0), axis=1)
        for cidx in np.flatnonzero(~regular & (scale > 0)):
            r = self._cell_roots(coef[cidx])
            out[cidx, : r.size] = r
        return out

    def cell_power_integrals(self, p: float) -> np.ndarray:
        """``int_cell |f|^p`` for each cell (p finite), split at sign changes."""
        coef = self.coef
        deg = self.degree
        roots = self._batch_roots(coef)
        cuts = np.hstack([np.zeros((coef.shape[0], 1)), roots, np.ones((coef.shape[0], 1))])
        s_nodes, s_w = gauss01(max(8, deg * int(np.ceil(p)) + 2))
        a, b = cuts[:, :-1], cuts[:, 1:]
        s = a[..., None] + (b - a)[..., None] * s_nodes          # (cells, pieces, nodes)
        vals = np.zeros_like(s)
        for q in range(deg, -1, -1):
            vals = vals * s + coef[:, q, None, None]
        total = ((b - a) * (np.abs(vals) ** p @ s_w)).sum(axis=1)
        return self.h * total

    def cell_sup(self) -> np.ndarray:
        """``max_cell |f|`` for each cell."""
        coef = self.coef
        deg = self.degree
        cells = coef.shape[0]
        if deg == 0:
            return np.abs(coef[:, 0])
        dcoef = coef[:, 1:] * np.arange(1, deg + 1)
        cand = np.hstack([np.zeros((cells, 1)), self._batch_roots(dcoef), np.ones((cells, 1))])
        vals = np.zeros_like(cand)
        for q in range(deg, -1, -1):
            vals = vals * cand + coef[:, q, None]
        return np.max(np.abs(vals), axis=1)

    def norm(self, p: float = 2) -> float:
        if np.isinf(p):
            return float(self.cell_sup().max())
        if p == 2:
            return float(np.sqrt(self.square_integral()))
        return float(self.cell_power_integrals(p).sum() ** (1.0 / p))

    def square_integral(self) -> float:
        s, w = gauss01(self.degree + 1)
        v = P.polyval(s, self.coef.T)
        return float(np.sum(self.h[:, None] * w[None, :] * v ** 2))

    def restricted(self, lo: float, hi: float) -> "PiecewisePoly":
        """The function on [lo, hi] (lo, hi inside the domain)."""
        br = merge_breaks(self.breaks, [lo, hi])
        r = self.refine(br)
        keep = (r.breaks[:-1] >= lo) & (r.breaks[1:] <= hi)
        idx = np.flatnonzero(keep)
        return PiecewisePoly(r.breaks[idx[0]: idx[-1] + 2], r.coef[idx])

    def lp_norm_on(self, lo: float, hi: float, p: float) -> float:
        if hi <= lo:
            return 0.0
        return self.restricted(lo, hi).norm(p)
