"""Canard explosion points of planar slow-fast systems.

Submodules: ``expr`` (expressions and forward-mode gradients), ``funspace``
(Chebyshev interval functions), ``algorithm`` (fold finding and the
fold-removal iteration), ``oracle`` (direct simulation) and ``cli``.
"""
from .algorithm import CanardRun, Diagnostics, FoldData, check_assumptions, find_fold, iterate
from .expr import SystemDef, parse
from .oracle import OracleResult, limit_cycle_amplitude, locate_explosion

__all__ = [
    "CanardRun",
    "Diagnostics",
    "FoldData",
    "OracleResult",
    "SystemDef",
    "check_assumptions",
    "find_fold",
    "iterate",
    "limit_cycle_amplitude",
    "locate_explosion",
    "parse",
]
