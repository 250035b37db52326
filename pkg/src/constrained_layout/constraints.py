"""Point and interval evaluation of constraint formulas.

``eval_point`` walks the AST directly.  ``eval_interval`` goes through a
compiled form (:class:`CompiledFormula`) that the forward-checking search
also uses; keeping the two paths separate lets tests cross-check them.
"""

from __future__ import annotations

import enum
from typing import List, Mapping, Optional, Sequence

from .geometry import KINDS, BoundingBox, BoxDomain, DomainBox, VarKey
from .language import And, Atom, Formula, Not, Or, atoms
from .predicates import (
    BUILTINS, EQ, REGISTRY, PredicateRegistry, _FLIP_PAIR, _FLIP_VALUE, _SPLIT_EQ,
    linear_form,
)


class Tri(enum.IntEnum):
    """Kleene truth values ordered FALSE < UNKNOWN < TRUE."""

    FALSE = 0
    UNKNOWN = 1
    TRUE = 2

    def __invert__(self):
        return Tri(2 - self)


class UnresolvedAtom(ValueError):
    pass


# --------------------------------------------------------------------------
# point semantics


def eval_point(f: Formula, layout: Mapping[int, BoundingBox], *,
               registry: PredicateRegistry = REGISTRY) -> bool:
    """Truth of ``f`` for a complete layout (object id -> box)."""
    if isinstance(f, And):
        return all(eval_point(c, layout, registry=registry) for c in f.children)
    if isinstance(f, Or):
        return any(eval_point(c, layout, registry=registry) for c in f.children)
    if isinstance(f, Not):
        return not eval_point(f.child, layout, registry=registry)
    return _atom_point(f, layout, registry) != f.negated


def _box(layout, obj) -> BoundingBox:
    try:
        return layout[obj]
    except KeyError:
        raise UnresolvedAtom(f"layout has no box for object {obj}") from None


def _atom_point(a: Atom, layout, registry) -> bool:
    if a.predicate in BUILTINS:
        lin = linear_form(a.predicate, a.args)
        s = lin.value(lambda o, k: _box(layout, o).get(k))
        return s == 0 if lin.op == EQ else s <= 0
    custom = registry.custom(a.predicate)
    if custom is not None:
        args = [_box(layout, v) if s == "o" else v
                for v, s in zip(a.args, custom.signature)]
        return bool(custom.point_fn(*args))
    raise UnresolvedAtom(
        f"{a.predicate} has no geometric meaning here; resolve metadata and defaults first")


# --------------------------------------------------------------------------
# compiled interval semantics

_AND, _OR, _LIN, _CONST, _EXT = range(5)


class CompiledFormula:
    """NNF formula over indexed variables, evaluated on ``lo``/``hi`` lists."""

    def __init__(self, f: Formula, variables: Sequence[VarKey], *,
                 registry: PredicateRegistry = REGISTRY):
        self.variables = list(variables)
        self.index = {v: i for i, v in enumerate(self.variables)}
        self.registry = registry
        self.root = self._compile(f)
        self.used = sorted({i for i in self._vars(self.root)})
        self.bounds = self._collect_bounds(self.root)

    def _var(self, key: VarKey) -> int:
        try:
            return self.index[key]
        except KeyError:
            raise UnresolvedAtom(f"no domain for variable {key}") from None

    def _compile(self, f: Formula):
        if isinstance(f, Not):
            raise ValueError("formula must be in negation normal form")
        if isinstance(f, (And, Or)):
            kids = []
            tag = _AND if isinstance(f, And) else _OR
            for c in f.children:
                node = self._compile(c)
                # flatten nested groups of the same kind
                if node[0] == tag:
                    kids.extend(node[1])
                else:
                    kids.append(node)
            return (tag, tuple(kids))
        if f.predicate in BUILTINS:
            lin = linear_form(f.predicate, f.args)
            idx = tuple(self._var(k) for k, _ in lin.terms)
            coef = tuple(c for _, c in lin.terms)
            if not idx:
                s = lin.const
                truth = (s == 0) if lin.op == EQ else (s <= 0)
                return (_CONST, Tri.TRUE if truth != f.negated else Tri.FALSE)
            return (_LIN, idx, coef, lin.const, lin.op == EQ, f.negated)
        custom = self.registry.custom(f.predicate)
        if custom is None:
            raise UnresolvedAtom(
                f"{f.predicate} has no geometric meaning here; resolve metadata and defaults first")
        spec = []
        for v, s in zip(f.args, custom.signature):
            if s == "o":
                spec.append(("o", tuple(self._var((v, k)) for k in KINDS)))
            else:
                spec.append(("c", v))
        return (_EXT, custom, tuple(spec), f.negated)

    def _vars(self, node):
        tag = node[0]
        if tag in (_AND, _OR):
            for c in node[1]:
                yield from self._vars(c)
        elif tag == _LIN:
            yield from node[1]
        elif tag == _EXT:
            for kind, v in node[2]:
                if kind == "o":
                    yield from v

    def _collect_bounds(self, node):
        """Top-level linear ``<=`` rows usable for bound propagation."""
        rows = []
        kids = node[1] if node[0] == _AND else (node,)
        for c in kids:
            if c[0] != _LIN:
                continue
            _, idx, coef, const, is_eq, neg = c
            if is_eq and not neg:
                rows.append((idx, coef, const))
                rows.append((idx, tuple(-a for a in coef), -const))
            elif not is_eq:
                if neg:
                    # not (s <= 0)  <=>  -s + 1 <= 0
                    rows.append((idx, tuple(-a for a in coef), 1 - const))
                else:
                    rows.append((idx, coef, const))
        return rows

    def evaluate(self, lo: List[int], hi: List[int], pending: Optional[list] = None) -> Tri:
        """Kleene value on the box; indices of undecided variables go to ``pending``."""
        return Tri(_eval(self.root, lo, hi, pending))

    def propagate(self, lo: List[int], hi: List[int], rounds: int = 8) -> bool:
        """Tighten bounds in place from top-level linear rows; False if emptied."""
        rows = self.bounds
        if not rows:
            return True
        for _ in range(rounds):
            changed = False
            for idx, coef, const in rows:
                smin = const
                for i, a in zip(idx, coef):
                    smin += a * (lo[i] if a > 0 else hi[i])
                if smin > 0:
                    return False
                for i, a in zip(idx, coef):
                    # a * v <= -(smin - contribution of v)
                    rest = smin - a * (lo[i] if a > 0 else hi[i])
                    if a > 0:
                        bound = (-rest) // a
                        if bound < hi[i]:
                            hi[i] = bound
                            changed = True
                    else:
                        bound = -((-rest) // (-a))
                        if bound > lo[i]:
                            lo[i] = bound
                            changed = True
                    if lo[i] > hi[i]:
                        return False
            if not changed:
                break
        return True


def _eval(node, lo, hi, pending) -> int:
    tag = node[0]
    if tag == _LIN:
        _, idx, coef, const, is_eq, neg = node
        smin = smax = const
        for i, a in zip(idx, coef):
            if a > 0:
                smin += a * lo[i]
                smax += a * hi[i]
            else:
                smin += a * hi[i]
                smax += a * lo[i]
        if is_eq:
            if smin == 0 and smax == 0:
                r = 2
            elif smin > 0 or smax < 0:
                r = 0
            else:
                r = 1
        else:
            r = 2 if smax <= 0 else (0 if smin > 0 else 1)
        if r == 1:
            if pending is not None:
                pending.extend(i for i in idx if lo[i] < hi[i])
            return 1
        return 2 - r if neg else r
    if tag == _AND:
        best = 2
        for c in node[1]:
            v = _eval(c, lo, hi, pending)
            if v == 0:
                return 0
            if v < best:
                best = v
        return best
    if tag == _OR:
        best = 0
        for c in node[1]:
            v = _eval(c, lo, hi, pending)
            if v == 2:
                return 2
            if v > best:
                best = v
        return best
    if tag == _CONST:
        return int(node[1])
    _, custom, spec, neg = node
    point = True
    for kind, v in spec:
        if kind == "o" and any(lo[i] != hi[i] for i in v):
            point = False
            break
    if point:
        args = [BoundingBox(*(lo[i] for i in v)) if kind == "o" else v for kind, v in spec]
        r = 2 if custom.point_fn(*args) else 0
    else:
        args = [BoxDomain(*((lo[i], hi[i]) for i in v)) if kind == "o" else v
                for kind, v in spec]
        r = int(custom.interval_fn(*args))
        if r == 1 and pending is not None:
            for kind, v in spec:
                if kind == "o":
                    pending.extend(i for i in v if lo[i] < hi[i])
    return 2 - r if neg else r


def formula_variables(f: Formula, registry: PredicateRegistry = REGISTRY) -> List[VarKey]:
    out = set()
    for a in atoms(f):
        if a.predicate in BUILTINS:
            out.update(k for k, _ in linear_form(a.predicate, a.args).terms)
        elif registry.custom(a.predicate) is not None:
            for o in a.objects(registry):
                out.update((o, k) for k in KINDS)
    return sorted(out)


def eval_interval(f: Formula, d: DomainBox, *,
                  registry: PredicateRegistry = REGISTRY) -> Tri:
    """Sound three-valued value of an NNF formula over a domain box.

    TRUE means every completion satisfies ``f``, FALSE means none does.
    """
    keys = list(d)
    cf = CompiledFormula(f, keys, registry=registry)
    lo = [d[k][0] for k in keys]
    hi = [d[k][1] for k in keys]
    return cf.evaluate(lo, hi)


# --------------------------------------------------------------------------
# complements


def complement_atom(a: Atom) -> Formula:
    """Integer-exact negation of ``a`` expressed with positive atoms.

    Predicates with no counterpart in the table (``cabove``, custom
    relations, ...) come back with the ``negated`` flag flipped.
    """
    if a.negated:
        return Atom(a.predicate, a.args)
    name, args = a.predicate, a.args
    if name in _FLIP_PAIR:
        o1, o2, c = args
        return Atom(_FLIP_PAIR[name], (o1, o2, 1 - c))
    if name in _FLIP_VALUE:
        other, shift = _FLIP_VALUE[name]
        return Atom(other, (args[0], args[1] + shift))
    if name in _SPLIT_EQ:
        lower, upper = _SPLIT_EQ[name]
        if name.endswith("_value"):
            return Or((Atom(lower, args), Atom(upper, args)))
        return Or((Atom(lower, (*args, 1)), Atom(upper, (*args, 1))))
    return Atom(name, args, negated=True)


def layout_domain(layout: Mapping[int, BoundingBox]) -> DomainBox:
    return DomainBox({(o, k): (b.get(k), b.get(k)) for o, b in layout.items() for k in KINDS})
