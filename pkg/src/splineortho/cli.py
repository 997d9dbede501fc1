"""Command-line entry point: ``splineortho {knots,system,experiment} ...``.

Exit codes: 0 success, 1 failed invariant or experiment check, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import adversary, analysis, knotseq, orthosys
from .errors import AdmissibilityError, ContractError, FeasibilityError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    k: int
    N: int | None
    seed: int
    threads: int
    out: Path | None
    fmt: str


def _threads(flag: int | None) -> int:
    cap = int(os.environ.get("SPLINEORTHO_THREADS", "0") or 0)
    n = flag if flag else (cap or 1)
    return max(1, min(n, cap) if cap else n)


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        out.write_text(text if text.endswith("\n") else text + "\n")


def _positive(name):
    def parse(v):
        try:
            x = int(v)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be an integer")
        if x < 1:
            raise argparse.ArgumentTypeError(f"{name} must be >= 1")
        return x
    return parse


def _ladder(v: str) -> list[int]:
    try:
        vals = [int(x) for x in v.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("ladder must be a comma-separated list of integers")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("ladder entries must be >= 1")
    return vals


# --- knots ----------------------------------------------------------------------

def _make_sequence(kind: str, k: int, count: int, seed: int) -> knotseq.KnotSequence:
    if kind == "dyadic":
        return knotseq.dyadic_sequence(k, count)
    if kind == "uniform":
        return knotseq.KnotSequence(k, tuple(knotseq.uniform_points(count)))
    if kind == "random":
        return knotseq.KnotSequence(k, tuple(knotseq.random_points(count, np.random.default_rng(seed))))
    raise UsageError(f"unknown kind {kind!r}")


def cmd_knots(args) -> int:
    if args.action == "gen":
        if args.kind == "adversarial":
            cfg = adversary.AdversarialConfig(args.k, args.gamma, args.ell, args.A, args.delta, args.seed)
            adv = adversary.generate(cfg)
            _emit(knotseq.dumps_knots(adv.seq), args.out)
            sidecar = Path(str(args.out) + ".stages.json") if args.out else None
            if sidecar:
                sidecar.write_text(adv.stages_json() + "\n")
            else:
                _emit(adv.stages_json(), None)
            return EXIT_OK
        if args.n is None:
            raise UsageError("--n is required for this kind")
        _emit(knotseq.dumps_knots(_make_sequence(args.kind, args.k, args.n, args.seed)), args.out)
        return EXIT_OK

    seq = knotseq.load_knots(args.input)
    ells = [args.ell] if args.ell is not None else list(range(1, seq.k + 1))
    for ell in ells:
        if not 1 <= ell <= seq.k:
            raise UsageError(f"--ell {ell} must lie in 1..k={seq.k}")
    n_max = seq.n_max if args.n is None else args.n
    if not 2 <= n_max <= seq.n_max:
        raise UsageError(f"--n must lie in 2..{seq.n_max}")
    rows = []
    for ell in ells:
        r = knotseq.regularity_parameter(seq, ell, n_max)
        rows.append({"ell": ell, "gamma": r.gamma if r.regular else "inf",
                     "witness": list(r.witness) if r.witness else None})
    _emit(json.dumps(rows, sort_keys=True), args.out)
    return EXIT_OK


# --- system ---------------------------------------------------------------------

def cmd_system(args) -> int:
    seq = knotseq.load_knots(args.knots)
    if args.action == "build":
        if args.N < 2 or args.N > seq.n_max:
            raise UsageError(f"--N must lie in 2..{seq.n_max}")
        system = orthosys.build_system(seq, args.N, workers=_threads(args.threads))
        _emit(orthosys.dumps_system(system), args.out)
        return EXIT_OK

    system = orthosys.loads_system(seq, Path(args.dump).read_text())
    failures = []
    err = system.orthonormality_error()
    if not err < args.tol_orth:
        failures.append(f"orthonormality: max |G - I| = {err:.3e} >= {args.tol_orth:g}")
    # independent check of the stored norms by sampled quadrature
    worst = 0.0
    for f in system.functions:
        sq = analysis.adaptive_integral(lambda x, f=f: f(x) ** 2, f.basis.breaks, args.tol_quad * 1e-2)
        worst = max(worst, abs(sq - 1.0))
    if not worst < args.tol_quad:
        failures.append(f"norm: max |int f_n^2 - 1| = {worst:.3e} >= {args.tol_quad:g}")
    decay = orthosys.system_decay_report(system)
    if not decay.found:
        failures.append(f"decay: no q <= 0.95 (fitted {decay.q_fit})")
    comb = orthosys.char_combinatorics(system, samples=50, seed=args.seed)
    if not all(np.isfinite(v) for key, v in comb.items() if key != "N0_pair"):
        failures.append("combinatorics: non-finite count")
    report = {"orthonormality_error": err, "norm_error": worst, "decay_q": decay.q, "decay_C": decay.C,
              "combinatorics": {k: v for k, v in comb.items() if k != "N0_pair"},
              "failures": failures}
    _emit(json.dumps(report, sort_keys=True), args.out)
    for f in failures:
        print(f"FAILED {f}", file=sys.stderr)
    return EXIT_FAIL if failures else EXIT_OK


# --- experiments ------------------------------------------------------------------

def _corpus(count: int, seed: int) -> list[analysis.Atom]:
    rng = np.random.default_rng(seed)
    return [analysis.random_atom(rng) for _ in range(count)]


def _system_for(args) -> orthosys.OrthoSystem:
    if args.knots:
        seq = knotseq.load_knots(args.knots)
        N = args.N or seq.n_max
    else:
        N = args.N or 128
        seq = _make_sequence(args.kind, args.k, N - 1, args.seed)
    if N < 2 or N > seq.n_max:
        raise UsageError(f"--N must lie in 2..{seq.n_max}")
    return orthosys.build_system(seq, N, workers=_threads(args.threads))


def _band(reports: list[dict]) -> dict:
    out = {}
    for key in reports[0]:
        v = np.array([r[key] for r in reports])
        out[key] = {"min": float(v.min()), "max": float(v.max())}
    return out


def cmd_experiment(args) -> int:
    if args.action == "divergence":
        base = adversary.AdversarialConfig(args.k, args.gamma, max(args.ladder), args.A, args.delta, args.seed)
        table = adversary.divergence_experiment(args.ladder, base)
        slope, r2 = table.fit()
        if args.format == "csv":
            _emit(table.to_csv(), args.out)
        else:
            _emit(json.dumps({"rows": [r.__dict__ for r in table.rows], "slope": slope, "r2": r2,
                              "control_band": table.control_band(), "params": table.params},
                             sort_keys=True), args.out)
        return EXIT_OK if slope > 0 else EXIT_FAIL

    system = _system_for(args)
    atoms = _corpus(args.atoms, args.seed)
    params = {"k": system.k, "N": system.N, "atoms": args.atoms, "seed": args.seed, "trials": args.trials}
    if args.action == "equivalence":
        reps = [analysis.equivalence_report(a, system, args.trials, args.seed + i, quad_rtol=args.tol_quad)
                for i, a in enumerate(atoms)]
        if args.format == "csv":
            lines = [",".join(["atom", *analysis.NORM_NAMES])]
            lines += [",".join([str(i), *(repr(r.norms[n]) for n in analysis.NORM_NAMES)])
                      for i, r in enumerate(reps)]
            _emit("\n".join(lines), args.out)
        else:
            _emit(json.dumps({"norms": [r.norms for r in reps], "ratios": _band([r.ratios for r in reps]),
                              "params": params}, sort_keys=True), args.out)
        if args.curves:
            e = analysis.expand(atoms[0], system)
            x = np.linspace(0.0, 1.0, 2001)
            from .bspline import write_curve_csv
            write_curve_csv(args.curves, x, P=analysis.square_function(e, x), S=analysis.maximal_function(e, x))
        bad = [r for r in reps if r.decomposition.invalid_atoms() or not r.params["reconstruction_error"] < 1e-6]
        return EXIT_FAIL if bad else EXIT_OK

    # khinchin sweep
    steps = sorted({1, 10, 50, args.trials} - {0})
    rows = []
    for i, a in enumerate(atoms):
        e = analysis.expand(a, system)
        _, running = analysis.sign_flip_supremum(e, max(steps), args.seed + i, history=True)
        P = analysis.sq_norm1(e, args.tol_quad)
        rows.append({"P": P, "sup": {str(t): float(running[t - 1]) for t in steps},
                     "ratio": P / running[-1]})
    if args.format == "csv":
        lines = ["atom,trials,sup,P"] + [f"{i},{t},{r['sup'][str(t)]!r},{r['P']!r}"
                                         for i, r in enumerate(rows) for t in steps]
        _emit("\n".join(lines), args.out)
    else:
        ratios = np.array([r["ratio"] for r in rows])
        _emit(json.dumps({"norms": rows, "ratios": {"P/sign": {"min": float(ratios.min()),
                                                                "max": float(ratios.max())}},
                          "params": params}, sort_keys=True), args.out)
    return EXIT_OK


# --- parser -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="splineortho", description="Orthonormal spline systems and H^1 diagnostics")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, k_default=2):
        sp.add_argument("--k", type=_positive("k"), default=k_default)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", type=Path, default=None)
        sp.add_argument("--threads", type=_positive("threads"), default=None)

    kn = sub.add_parser("knots").add_subparsers(dest="action", required=True)
    g = kn.add_parser("gen")
    common(g)
    g.add_argument("--kind", choices=["dyadic", "uniform", "random", "adversarial"], default="dyadic")
    g.add_argument("--n", type=_positive("n"), default=None, help="number of points t_2, t_3, ...")
    g.add_argument("--gamma", type=float, default=4.0)
    g.add_argument("--ell", type=_positive("ell"), default=4)
    g.add_argument("--A", type=float, default=2.0)
    g.add_argument("--delta", type=float, default=1e-4)
    c = kn.add_parser("check")
    common(c)
    c.add_argument("input", type=Path)
    c.add_argument("--ell", type=int, default=None)
    c.add_argument("--n", type=int, default=None, help="largest grid index tested")

    sy = sub.add_parser("system").add_subparsers(dest="action", required=True)
    b = sy.add_parser("build")
    common(b)
    b.add_argument("--knots", type=Path, required=True)
    b.add_argument("--N", type=int, required=True)
    v = sy.add_parser("verify")
    common(v)
    v.add_argument("--knots", type=Path, required=True)
    v.add_argument("--dump", type=Path, required=True)
    v.add_argument("--tol-orth", type=float, default=1e-9)
    v.add_argument("--tol-quad", type=float, default=1e-6)

    ex = sub.add_parser("experiment").add_subparsers(dest="action", required=True)
    for name in ("equivalence", "khinchin"):
        e = ex.add_parser(name)
        common(e)
        e.add_argument("--knots", type=Path, default=None)
        e.add_argument("--kind", choices=["dyadic", "uniform", "random"], default="dyadic")
        e.add_argument("--N", type=int, default=None)
        e.add_argument("--atoms", type=_positive("atoms"), default=50)
        e.add_argument("--trials", type=_positive("trials"), default=200)
        e.add_argument("--format", choices=["json", "csv"], default="json")
        e.add_argument("--tol-quad", type=float, default=1e-6)
        if name == "equivalence":
            e.add_argument("--curves", type=Path, default=None, help="write x,P,S for the first atom")
    d = ex.add_parser("divergence")
    common(d)
    d.add_argument("--ladder", type=_ladder, default=[2, 4, 8, 16])
    d.add_argument("--gamma", type=float, default=4.0)
    d.add_argument("--A", type=float, default=2.0)
    d.add_argument("--delta", type=float, default=1e-4)
    d.add_argument("--format", choices=["json", "csv"], default="csv")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    handlers = {"knots": cmd_knots, "system": cmd_system, "experiment": cmd_experiment}
    try:
        return handlers[args.command](args)
    except (UsageError, ContractError, AdmissibilityError, FeasibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
