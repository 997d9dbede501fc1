"""Knot sequences that are k-regular but not (k-1)-regular, and the divergence experiment.

The generator synthesizes the stage structure directly.  A cluster of k
points of total width delta ends at tau = 1/2; stage j inserts the point
tau + h0 / 2^j, which halves the gap to the right of the cluster.  Each
stage is preceded by a mirror point lambda - h0 / 2^j left of the cluster
(lambda = tau - delta) so that both neighbours of the cluster shrink
together and k-regularity is kept.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .analysis import Atom, adaptive_integral, expand, sq_norm1
from .errors import ContractError, FeasibilityError, PlacementError
from .knotseq import KnotSequence, dyadic_points, inserted_index, make_grid, regularity_parameter
from .orthosys import build_system

CENTER = 0.5


@dataclass(frozen=True)
class AdversarialConfig:
    k: int = 2
    gamma: float = 4.0          # target k-regularity parameter
    ell: int = 4                # number of stages
    A: float = 2.0
    delta: float = 1e-4         # |Lambda_0|
    seed: int = 0
    background_level: int = 4   # h0 = 2^-background_level

    def __post_init__(self):
        if self.k < 2:
            raise ContractError("the construction needs k >= 2")
        if not self.gamma > 1:
            raise ContractError("gamma must exceed 1")
        if self.ell < 1:
            raise ContractError("ell must be >= 1")
        if self.A < 2:
            raise ContractError("A must be >= 2")
        if not self.delta > 0:
            raise ContractError("delta must be positive")
        if self.background_level < 2:
            raise ContractError("background_level must be >= 2")

    @property
    def h0(self) -> float:
        return 2.0 ** -self.background_level

    def max_feasible_ell(self) -> int:
        """Largest ell with h0 / 2^(ell-1) >= A delta (and the cluster inside its cell).

        Stages after the first need the mirror lambda - h0/2 inside the cell
        left of the cluster, i.e. delta < h0 / 2.
        """
        if self.delta >= self.h0:
            return 0
        ell = max(0, int(math.floor(math.log2(self.h0 / (self.A * self.delta)) + 1e-12)) + 1)
        return min(ell, 1) if self.delta >= self.h0 / 2 else ell


@dataclass(frozen=True)
class Stage:
    n: int
    i: int
    Lambda: tuple[float, float]
    L: tuple[float, float]
    R: tuple[float, float]
    left_gap: tuple[float, float]  # [tau_{i-k-1}, tau_{i-k}]


@dataclass
class AdversarialSequence:
    seq: KnotSequence
    stages: list[Stage]
    gamma: float
    center: float = CENTER
    config: AdversarialConfig | None = field(default=None, repr=False)

    @property
    def n_last(self) -> int:
        return self.stages[-1].n

    @property
    def delta(self) -> float:
        lo, hi = self.stages[0].Lambda
        return hi - lo

    def stages_json(self) -> str:
        return json.dumps({"gamma": self.gamma, "center": self.center,
                           "stages": [asdict(s) for s in self.stages]})


def stage_from_grid(seq: KnotSequence, n: int) -> Stage:
    """Read Lambda, L, R and the gap left of Lambda off the raw grid T_n."""
    grid = make_grid(seq, n)
    k = seq.k
    i = inserted_index(seq, n)
    t = grid.t
    if i - k - 1 < 1 or i + 1 > grid.n + 2 * k - 1:
        raise ContractError(f"stage n={n} is too close to the boundary")
    return Stage(n, i, (t(i - k), t(i - 1)), (t(i - 1), t(i)), (t(i), t(i + 1)),
                 (t(i - k - 1), t(i - k)))


def _points(cfg: AdversarialConfig, ell: int, order: str) -> tuple[list[float], list[int]]:
    """Points in insertion order and the 1-based n of every stage point."""
    k, h0, delta = cfg.k, cfg.h0, cfg.delta
    tau, lam = CENTER, CENTER - delta
    first_right = tau + h0
    background = [p for p in dyadic_points(2 ** cfg.background_level - 1) if p != first_right]
    cluster = [tau - delta * (k - 1 - j) / (k - 1) for j in range(k - 1)]  # tau itself is dyadic
    mirrors = [lam - h0 / 2 ** j for j in range(1, ell)]
    rights = [tau + h0 / 2 ** j for j in range(ell)]
    if order == "adversarial":
        pts = background + cluster + [rights[0]]
        stage_pos = [len(pts) - 1]
        for m, r in zip(mirrors, rights[1:]):
            pts += [m, r]
            stage_pos.append(len(pts) - 1)
    elif order == "control":
        pts = background + [rights[0]]
        for m, r in zip(mirrors, rights[1:]):
            pts += [m, r]
        pts += cluster
        stage_pos = []
    else:
        raise ContractError(f"unknown order {order!r}")
    return pts, [p + 2 for p in stage_pos]


def generate(cfg: AdversarialConfig) -> AdversarialSequence:
    """Synthesize a sequence with ell stages satisfying the six interval properties."""
    limit = cfg.max_feasible_ell()
    if cfg.ell > limit:
        raise FeasibilityError(
            f"ell={cfg.ell} infeasible for delta={cfg.delta}, A={cfg.A}, h0={cfg.h0}; "
            f"max feasible ell is {limit}", max_feasible=limit)
    pts, ns = _points(cfg, cfg.ell, "adversarial")
    seq = KnotSequence(cfg.k, tuple(pts))
    gk = regularity_parameter(seq, cfg.k, seq.n_max).gamma
    if gk > cfg.gamma:
        raise FeasibilityError(
            f"synthesized sequence has k-regularity {gk:.4g} > gamma_target={cfg.gamma}",
            max_feasible=limit)
    stages = [stage_from_grid(seq, n) for n in ns]
    return AdversarialSequence(seq, stages, cfg.gamma, CENTER, cfg)


def control_sequence(cfg: AdversarialConfig) -> KnotSequence:
    """The same points inserted coarse to fine, with the cluster last."""
    pts, _ = _points(cfg, cfg.ell, "control")
    return KnotSequence(cfg.k, tuple(pts))


@dataclass
class PropertyReport:
    passed: dict[int, bool]
    witnesses: dict[int, tuple | None]

    @property
    def ok(self) -> bool:
        return all(self.passed.values())


def _length(iv) -> float:
    return iv[1] - iv[0]


def verify_lemma_properties(adv: AdversarialSequence, A: float, gamma: float | None = None,
                            rtol: float = 1e-12) -> PropertyReport:
    """Check the six stage properties, re-deriving every interval from the raw knots."""
    if not adv.stages:
        raise ContractError("no stages to verify")
    g = adv.gamma if gamma is None else gamma
    k = adv.seq.k
    st = [stage_from_grid(adv.seq, s.n) for s in adv.stages]
    passed = {i: True for i in range(1, 7)}
    wit: dict[int, tuple | None] = {i: None for i in range(1, 7)}

    def fail(item, w):
        if passed[item]:
            passed[item], wit[item] = False, w

    for i in range(len(st)):
        for j in range(i + 1, len(st)):
            a, b = st[i].R, st[j].R
            if max(a[0], b[0]) < min(a[1], b[1]):
                fail(1, (i, j))
            if st[i].Lambda != st[j].Lambda:
                fail(2, (i, j))
    slack = 1 + rtol
    for j, s in enumerate(st):
        L, R, gap, lam = _length(s.L), _length(s.R), _length(s.left_gap), _length(s.Lambda)
        if not ((2 * g - 1) * L * slack >= gap and gap * slack >= L / (2 * g)):
            fail(3, (j,))
        if not R <= (2 * g - 1) * L * slack:
            fail(4, (j,))
        if not L <= 2 * (g + 1) * k * R * slack:
            fail(5, (j,))
        if not min(L, R) * slack >= A * lam:
            fail(6, (j,))
    return PropertyReport(passed, wit)


def adversarial_atom(adv: AdversarialSequence | None = None, *, center: float | None = None,
                     delta: float | None = None) -> Atom:
    """The two-step atom (1/(4 delta)) (1_[tau-2delta, tau] - 1_[tau, tau+2delta])."""
    tau = adv.stages[0].Lambda[1] if center is None else center
    d = adv.delta if delta is None else delta
    if not d > 0:
        raise PlacementError("|Lambda_0| must be positive")
    x, y = tau - 2 * d, tau + 2 * d
    if x < 0 or y > 1:
        raise PlacementError(f"atom support [{x}, {y}] leaves [0, 1]")
    h = 1.0 / (4 * d)
    return Atom.step([x, tau, y], [h, -h])


# --- the growth experiment -----------------------------------------------------

@dataclass
class GrowthRow:
    ell: int
    G: float
    stage_sum: float
    min_coeff_product: float
    control_P: float = float("nan")


@dataclass
class GrowthTable:
    rows: list[GrowthRow]
    params: dict

    def fit(self, column: str = "stage_sum") -> tuple[float, float]:
        """Slope and R^2 of the least-squares line of ``column`` against ell."""
        x = np.array([r.ell for r in self.rows], float)
        y = np.array([getattr(r, column) for r in self.rows], float)
        if x.size < 2:
            return float("nan"), float("nan")
        slope, icpt = np.polyfit(x, y, 1)
        ss_res = np.sum((y - (slope * x + icpt)) ** 2)
        ss_tot = np.sum((y - y.mean()) ** 2)
        return float(slope), float(1 - ss_res / ss_tot) if ss_tot > 0 else 1.0

    def control_band(self) -> float:
        v = np.array([r.control_P for r in self.rows])
        return float(v.max() / v.min())

    def to_csv(self) -> str:
        lines = ["ell,G,stage_sum,min_coeff_product"]
        lines += [f"{r.ell},{r.G!r},{r.stage_sum!r},{r.min_coeff_product!r}" for r in self.rows]
        return "\n".join(lines) + "\n"


def sup_term_norm1(e, rtol: float = 1e-4) -> float:
    """int_0^1 sup_n |a_n f_n(t)| dt by sampled adaptive quadrature."""
    a = e.coeffs
    return adaptive_integral(lambda x: np.max(np.abs(a[:, None] * e.system.values(x)), axis=0),
                             e.system.breaks, rtol)


def divergence_experiment(ladder, base: AdversarialConfig, control: bool = True,
                          self_similar: bool = True) -> GrowthTable:
    """G(ell), the stage lower sums and the coefficient products for each ell.

    With ``self_similar`` the cluster width is set to delta = h0 / (A 2^(ell-1))
    so the finest stage sits exactly at the feasibility limit; the control
    column is ||P phi||_1 for the same atom on the coarse-to-fine ordering.
    """
    rows = []
    for ell in ladder:
        delta = base.h0 / (base.A * 2 ** (ell - 1)) if self_similar else base.delta
        cfg = AdversarialConfig(base.k, base.gamma, ell, base.A, delta, base.seed, base.background_level)
        adv = generate(cfg)
        phi = adversarial_atom(adv)
        system = build_system(adv.seq, adv.n_last)
        e = expand(phi, system)
        pieces, prods = [], []
        for s in adv.stages:
            f = system.function(s.n)
            a = e.coefficient(s.n)
            pieces.append(abs(a) * f.to_ppoly().lp_norm_on(s.R[0], s.R[1], 1))
            prods.append(abs(a) * math.sqrt(_length(s.L)))
        row = GrowthRow(ell, sup_term_norm1(e), float(np.sum(pieces)), float(np.min(prods)))
        if control:
            cseq = control_sequence(cfg)
            csys = build_system(cseq, cseq.n_max)
            row.control_P = sq_norm1(expand(phi, csys))
        rows.append(row)
    params = {"k": base.k, "gamma": base.gamma, "A": base.A, "h0": base.h0,
              "self_similar": self_similar, "ladder": list(ladder)}
    return GrowthTable(rows, params)
