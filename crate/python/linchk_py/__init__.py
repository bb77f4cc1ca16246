"""Python interface to the linchk verification toolkit.

Explore concurrent object models into labelled transition systems,
minimize them by (divergence-sensitive) branching bisimilarity, and run
the linearizability and lock-freedom checks. See ``help(linchk_py.explore)``
and friends for the keyword arguments shared by the checking entry points.
"""

from ._native import (
    Lts,
    bisimilar,
    check_linearizability,
    check_lockfree,
    explore,
    list_benchmarks,
    run_benchmark,
    validate,
)

__all__ = [
    "Lts",
    "bisimilar",
    "check_linearizability",
    "check_lockfree",
    "explore",
    "list_benchmarks",
    "run_benchmark",
    "validate",
]
