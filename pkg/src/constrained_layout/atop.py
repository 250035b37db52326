"""The ``atop`` relation, a custom predicate registered at run time.

``atop(a, b)`` holds when the bottom edge of ``a`` lies within ``b``'s
vertical extent, the right edge of ``a`` lies within ``b``'s horizontal
extent, and the top of ``a`` is strictly above the top of ``b``.
"""

from __future__ import annotations

from typing import List, Tuple

from .constraints import Tri
from .geometry import BoundingBox, BoxDomain
from .predicates import REGISTRY, CustomPredicate, PredicateRegistry, register_predicate

# Each condition is sum(sign * var) + const <= 0 over (object, kind) terms.
_CONDITIONS: Tuple[Tuple[Tuple[Tuple[int, str, int], ...], int], ...] = (
    (((1, "y", 1), (0, "y", -1), (0, "h", -1)), 0),                 # y_b <= y_a + h_a
    (((0, "y", 1), (0, "h", 1), (1, "y", -1), (1, "h", -1)), 0),    # y_a + h_a <= y_b + h_b
    (((1, "x", 1), (0, "x", -1), (0, "w", -1)), 0),                 # x_b <= x_a + w_a
    (((0, "x", 1), (0, "w", 1), (1, "x", -1), (1, "w", -1)), 0),    # x_a + w_a <= x_b + w_b
    (((0, "y", 1), (1, "y", -1)), 1),                               # y_a < y_b
)


def atop_point(a: BoundingBox, b: BoundingBox) -> bool:
    boxes = (a, b)
    return all(sum(s * boxes[o].get(k) for o, k, s in terms) + c <= 0
               for terms, c in _CONDITIONS)


def atop_interval(a: BoxDomain, b: BoxDomain) -> Tri:
    """Sound three-valued bound: each condition is judged on its range."""
    boxes = (a, b)
    results: List[Tri] = []
    for terms, c in _CONDITIONS:
        lo = hi = c
        for o, k, s in terms:
            vlo, vhi = getattr(boxes[o], k)
            lo += s * (vlo if s > 0 else vhi)
            hi += s * (vhi if s > 0 else vlo)
        if lo > 0:
            return Tri.FALSE
        results.append(Tri.TRUE if hi <= 0 else Tri.UNKNOWN)
    return min(results)


def register_atop(registry: PredicateRegistry = REGISTRY) -> CustomPredicate:
    """Register ``atop``; raises if it is already known to ``registry``."""
    return register_predicate("atop", 2, atop_point, atop_interval, registry=registry)
