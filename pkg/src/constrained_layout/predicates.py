"""Predicate table: built-in spatial relations and the extension registry.

Every built-in relation is a single linear (in)equality over the box
variables, ``sum(coef * var) + const <= 0`` or ``== 0``.  Keeping them in
that form gives exact integer negation and cheap interval bounds.

Signature letters: ``o`` object reference, ``c`` integer constant, ``C``
optional integer constant (defaults to 1), ``s`` string.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

LE = "le"
EQ = "eq"

OMITTED_OFFSET = 1

RECOGNIZED_TYPES = (
    "chair", "couch", "potted plant", "bed", "mirror", "dining table",
    "window", "desk", "toilet", "door", "tv", "microwave", "oven",
    "toaster", "sink", "refrigerator", "blender",
)

# Extra names used by the bundled examples and zero-shot tests.
_EXTRA_TYPES = ("plant", "table", "television", "coffee table", "flower", "fern")


@dataclass(frozen=True)
class Linear:
    """``sum(coef * var) + const`` compared against zero with ``op``."""

    terms: Tuple[Tuple[Tuple[int, str], int], ...]
    const: int
    op: str

    def value(self, lookup: Callable[[int, str], int]) -> int:
        return self.const + sum(c * lookup(o, k) for (o, k), c in self.terms)


def _lin(op, const, *pairs) -> Linear:
    acc: Dict[Tuple[int, str], int] = {}
    for key, coef in pairs:
        acc[key] = acc.get(key, 0) + coef
    terms = tuple(sorted((k, c) for k, c in acc.items() if c != 0))
    return Linear(terms, const, op)


def _rel(first_kind, size_first, second_kind, size_second, direction):
    """Relation between two objects: ``first + c <= second`` style.

    direction +1: lhs(o1) + c <= rhs(o2);  -1: lhs(o2)+c <= rhs(o1) mirrored.
    """

    def build(args):
        o1, o2, c = args
        if direction > 0:
            pairs = [((o1, first_kind), 1), ((o2, second_kind), -1)]
            if size_first:
                pairs.append(((o1, size_first), 1))
        else:
            pairs = [((o2, second_kind), 1), ((o1, first_kind), -1)]
            if size_second:
                pairs.append(((o2, size_second), 1))
        return _lin(LE, c, *pairs)

    return build


def _size(kind, smaller_first):
    def build(args):
        o1, o2, c = args
        if smaller_first:
            return _lin(LE, c, ((o1, kind), 1), ((o2, kind), -1))
        return _lin(LE, c, ((o2, kind), 1), ((o1, kind), -1))

    return build


def _below_const(kind):
    # var < c  <=>  var - c + 1 <= 0
    return lambda args: _lin(LE, 1 - args[1], ((args[0], kind), 1))


def _above_const(kind):
    # var > c  <=>  c + 1 - var <= 0
    return lambda args: _lin(LE, args[1] + 1, ((args[0], kind), -1))


def _eq_pair(kind):
    return lambda args: _lin(EQ, 0, ((args[0], kind), 1), ((args[1], kind), -1))


def _eq_const(kind):
    return lambda args: _lin(EQ, -args[1], ((args[0], kind), 1))


def _ends_within(pos, size):
    # pos + size <= c
    return lambda args: _lin(LE, -args[1], ((args[0], pos), 1), ((args[0], size), 1))


# name -> (signature, builder)
BUILTINS: Dict[str, Tuple[str, Callable]] = {
    "above": ("ooC", _rel("y", None, "y", None, +1)),
    "cabove": ("ooC", _rel("y", "h", "y", None, +1)),
    "above_value": ("oc", _below_const("y")),
    "below": ("ooC", _rel("y", None, "y", None, -1)),
    "cbelow": ("ooC", _rel("y", None, "y", "h", -1)),
    "below_value": ("oc", _above_const("y")),
    "left": ("ooC", _rel("x", None, "x", None, +1)),
    "cleft": ("ooC", _rel("x", "w", "x", None, +1)),
    "left_value": ("oc", _below_const("x")),
    "right": ("ooC", _rel("x", None, "x", None, -1)),
    "cright": ("ooC", _rel("x", None, "x", "w", -1)),
    "right_value": ("oc", _above_const("x")),
    "narrower": ("ooC", _size("w", True)),
    "narrower_value": ("oc", _below_const("w")),
    "shorter": ("ooC", _size("h", True)),
    "shorter_value": ("oc", _below_const("h")),
    "taller": ("ooC", _size("h", False)),
    "taller_value": ("oc", _above_const("h")),
    "wider": ("ooC", _size("w", False)),
    "wider_value": ("oc", _above_const("w")),
    "heq": ("oo", _eq_pair("h")),
    "heq_value": ("oc", _eq_const("h")),
    "weq": ("oo", _eq_pair("w")),
    "weq_value": ("oc", _eq_const("w")),
    "xeq": ("oo", _eq_pair("x")),
    "xeq_value": ("oc", _eq_const("x")),
    "yeq": ("oo", _eq_pair("y")),
    "yeq_value": ("oc", _eq_const("y")),
    # in-bounds pair produced by the ``default`` macro
    "inbounds_x": ("oc", _ends_within("x", "w")),
    "inbounds_y": ("oc", _ends_within("y", "h")),
}

TABLE_RELATIONS = tuple(n for n in BUILTINS if not n.startswith("inbounds"))

# metadata and macros: never geometric
METADATA = {"type": "os", "property": "os", "default": "o"}

# Complement within the built-in table: name -> (other name, how to map args).
# Offsets come from integer negation, e.g. not(y1 + c <= y2) <=> y1 >= y2 + (1 - c).
_FLIP_PAIR = {
    "above": "below", "below": "above", "left": "right", "right": "left",
    "narrower": "wider", "wider": "narrower", "shorter": "taller", "taller": "shorter",
}
_FLIP_VALUE = {
    # x < c  <=>  not (x > c - 1)
    "above_value": ("below_value", -1), "left_value": ("right_value", -1),
    "narrower_value": ("wider_value", -1), "shorter_value": ("taller_value", -1),
    # x > c  <=>  not (x < c + 1)
    "below_value": ("above_value", +1), "right_value": ("left_value", +1),
    "wider_value": ("narrower_value", +1), "taller_value": ("shorter_value", +1),
}
_SPLIT_EQ = {
    "xeq": ("left", "right"), "yeq": ("above", "below"),
    "weq": ("narrower", "wider"), "heq": ("shorter", "taller"),
    "xeq_value": ("left_value", "right_value"), "yeq_value": ("above_value", "below_value"),
    "weq_value": ("narrower_value", "wider_value"),
    "heq_value": ("shorter_value", "taller_value"),
}


@dataclass(frozen=True)
class CustomPredicate:
    name: str
    signature: str
    point_fn: Callable
    interval_fn: Callable


class PredicateRegistry:
    """Built-ins plus predicates registered at run time.

    Registration is expected during setup; lookups afterwards are read-only
    and safe from any thread.
    """

    def __init__(self):
        self._custom: Dict[str, CustomPredicate] = {}
        self._types = set(RECOGNIZED_TYPES) | set(_EXTRA_TYPES)
        self._lock = threading.Lock()

    def register(self, name: str, arity: int, point_fn, interval_fn,
                 signature: Optional[str] = None) -> CustomPredicate:
        sig = signature if signature is not None else "o" * arity
        if len(sig) != arity:
            raise ValueError(f"signature {sig!r} does not match arity {arity}")
        if any(ch not in "oc" for ch in sig):
            raise ValueError("custom predicates take object and integer arguments only")
        with self._lock:
            if self.known(name):
                raise ValueError(f"predicate {name!r} is already registered")
            pred = CustomPredicate(name, sig, point_fn, interval_fn)
            self._custom[name] = pred
        return pred

    def unregister(self, name: str):
        with self._lock:
            self._custom.pop(name)

    def known(self, name: str) -> bool:
        return name in BUILTINS or name in METADATA or name in self._custom

    def signature(self, name: str) -> str:
        if name in BUILTINS:
            return BUILTINS[name][0]
        if name in METADATA:
            return METADATA[name]
        return self._custom[name].signature

    def custom(self, name: str) -> Optional[CustomPredicate]:
        return self._custom.get(name)

    def register_type(self, type_name: str):
        with self._lock:
            self._types.add(type_name)

    def is_type(self, type_name: str) -> bool:
        return type_name in self._types

    @property
    def types(self):
        return frozenset(self._types)


REGISTRY = PredicateRegistry()


def register_predicate(name: str, arity: int, point_fn, interval_fn, *,
                       signature: Optional[str] = None,
                       registry: PredicateRegistry = REGISTRY) -> CustomPredicate:
    """Add a relation usable by the parser, evaluators and sampler.

    ``point_fn`` receives a :class:`BoundingBox` per object argument (ints for
    constants) and returns a bool.  ``interval_fn`` receives a
    :class:`BoxDomain` per object argument and must return a sound
    :class:`Tri`; returning ``Tri.UNKNOWN`` is always allowed.
    """
    return registry.register(name, arity, point_fn, interval_fn, signature)


def register_type(type_name: str, registry: PredicateRegistry = REGISTRY):
    registry.register_type(type_name)


def linear_form(name: str, args) -> Linear:
    return BUILTINS[name][1](tuple(args))
