"""Orthonormal spline systems of order k on general knot sequences.

Modules: ``knotseq`` (sequences, grids, regularity), ``bspline`` (basis,
Gram matrices), ``orthosys`` (the system f_n and its characteristic
intervals), ``analysis`` (expansions, square/maximal functions, atomic
decompositions), ``adversary`` (irregular sequences and the divergence
experiment).
"""
from .analysis import Atom, AtomicDecomposition, Expansion, atomic_decompose, equivalence_report, expand
from .bspline import BSplineBasis, GramMatrix, Spline, gram
from .knotseq import Grid, KnotSequence, make_grid, regularity_parameter
from .orthosys import OrthoFunction, OrthoSystem, build_system, orthonormal_function

__all__ = [
    "Atom", "AtomicDecomposition", "BSplineBasis", "Expansion", "GramMatrix", "Grid", "KnotSequence",
    "OrthoFunction", "OrthoSystem", "Spline", "atomic_decompose", "build_system", "equivalence_report",
    "expand", "gram", "make_grid", "orthonormal_function", "regularity_parameter",
]
__version__ = "0.1.0"
