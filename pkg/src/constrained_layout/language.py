"""The propositional design language: AST, parser, NNF and printer.

Surface syntax (see ``docs/grammar.md``)::

    # a comment
    given(0, "sink", 100, 120, 300, 200) ∧
    type(2, "microwave") ∧ property(2, "a blue microwave") ∧
    default(2) ∧ (cright(2, 1) | cleft(2, 1, 50))

``∧``/``&``, ``∨``/``|`` and ``¬``/``!`` are interchangeable.  Object
references are non-negative integers, optionally written ``o3``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from .geometry import DEFAULT_DOMAIN, KINDS, BoundingBox
from .predicates import OMITTED_OFFSET, REGISTRY, PredicateRegistry


class SpecError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class LexError(SpecError):
    pass


class ParseError(SpecError):
    pass


class SemanticError(SpecError):
    pass


# --------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Atom:
    predicate: str
    args: Tuple[Union[int, str], ...]
    negated: bool = False

    def objects(self, registry: PredicateRegistry = REGISTRY) -> Tuple[int, ...]:
        sig = registry.signature(self.predicate)
        return tuple(a for a, s in zip(self.args, sig) if s == "o")


@dataclass(frozen=True)
class And:
    children: Tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    children: Tuple["Formula", ...]


@dataclass(frozen=True)
class Not:
    child: "Formula"


Formula = Union[Atom, And, Or, Not]

TRUE = And(())
FALSE = Or(())


def conj(*fs: Formula) -> Formula:
    return And(tuple(fs))


def disj(*fs: Formula) -> Formula:
    return Or(tuple(fs))


def atoms(f: Formula) -> Iterator[Atom]:
    if isinstance(f, Atom):
        yield f
    elif isinstance(f, Not):
        yield from atoms(f.child)
    else:
        for c in f.children:
            yield from atoms(c)


def clauses(f: Formula) -> Tuple[Formula, ...]:
    """Top-level conjuncts; the unit counted by the accuracy metrics."""
    if isinstance(f, And):
        out: List[Formula] = []
        for c in f.children:
            out.extend(clauses(c))
        return tuple(out)
    return (f,)


@dataclass(frozen=True)
class ObjectDecl:
    id: int
    type_name: Optional[str] = None
    properties: Tuple[str, ...] = ()
    given_box: Optional[BoundingBox] = None

    @property
    def is_given(self) -> bool:
        return self.given_box is not None


@dataclass(frozen=True)
class DesignSpec:
    objects: Tuple[ObjectDecl, ...]
    constraint: Formula
    scene_domain: Dict[str, Tuple[int, int]] = field(
        default_factory=lambda: dict(DEFAULT_DOMAIN))

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate object ids: {ids}")
        for k in KINDS:
            lo, hi = self.scene_domain[k]
            if lo > hi:
                raise ValueError(f"empty scene domain for {k}")
        declared = set(ids)
        for a in atoms(self.constraint):
            if not REGISTRY.known(a.predicate):
                continue  # private-registry predicate, checked by the parser
            for o in a.objects():
                if o not in declared:
                    raise ValueError(f"atom {a.predicate} references undeclared object {o}")

    def object(self, obj_id: int) -> ObjectDecl:
        for o in self.objects:
            if o.id == obj_id:
                return o
        raise KeyError(obj_id)

    @property
    def given(self) -> Tuple[ObjectDecl, ...]:
        return tuple(o for o in self.objects if o.is_given)

    @property
    def new(self) -> Tuple[ObjectDecl, ...]:
        return tuple(o for o in self.objects if not o.is_given)


# --------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\#[^\n]*)
  | (?P<int>-?\d+)
  | (?P<obj>o\d+)(?![A-Za-z0-9_])
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<and>∧|&)
  | (?P<or>∨|\|)
  | (?P<not>¬|!)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<comma>,)
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


def tokenize(text: str) -> List[Token]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise LexError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            out.append(Token(kind, m.group(), pos))
        pos = m.end()
    out.append(Token("eof", "", len(text)))
    return out


# --------------------------------------------------------------------------
# Parser

_DESCRIBE = {"eof": "end of input", "lparen": "'('", "rparen": "')'", "comma": "','",
             "int": "integer", "string": "string", "ident": "predicate name",
             "and": "'∧'", "or": "'∨'", "not": "'¬'", "obj": "object reference"}


@dataclass(frozen=True)
class _Call:
    name: str
    args: Tuple[Tuple[str, Union[int, str], int], ...]   # (kind, value, pos)
    pos: int


class _Parser:
    def __init__(self, tokens: List[Token]):
        self.toks = tokens
        self.i = 0

    def peek(self) -> Token:
        return self.toks[self.i]

    def take(self, *kinds: str) -> Token:
        tok = self.peek()
        if tok.kind not in kinds:
            expected = " or ".join(_DESCRIBE[k] for k in kinds)
            found = _DESCRIBE.get(tok.kind, tok.kind)
            raise ParseError(f"expected {expected}, found {found}", tok.pos)
        self.i += 1
        return tok

    def formula(self):
        return self.disjunction()

    def disjunction(self):
        first = self.conjunction()
        items = [first]
        while self.peek().kind == "or":
            self.i += 1
            items.append(self.conjunction())
        return items[0] if len(items) == 1 else ("or", items)

    def conjunction(self):
        items = [self.unary()]
        while self.peek().kind == "and":
            self.i += 1
            items.append(self.unary())
        return items[0] if len(items) == 1 else ("and", items)

    def unary(self):
        tok = self.peek()
        if tok.kind == "not":
            self.i += 1
            return ("not", self.unary())
        if tok.kind == "lparen":
            self.i += 1
            inner = self.formula()
            self.take("rparen")
            return ("group", inner)
        return self.call()

    def call(self):
        name = self.take("ident")
        if name.text in ("true", "false"):
            return ("const", name.text == "true", name.pos)
        self.take("lparen")
        args = []
        if self.peek().kind != "rparen":
            while True:
                tok = self.take("int", "obj", "string", "ident")
                if tok.kind == "int":
                    args.append(("int", int(tok.text), tok.pos))
                elif tok.kind == "obj":
                    args.append(("obj", int(tok.text[1:]), tok.pos))
                elif tok.kind == "string":
                    args.append(("string", json.loads(tok.text), tok.pos))
                else:
                    args.append(("ident", tok.text, tok.pos))
                if self.peek().kind != "comma":
                    break
                self.i += 1
        self.take("rparen")
        return ("call", _Call(name.text, tuple(args), name.pos))


_STATEMENTS = {"given": "osiiii", "domain": "kii"}


class _Builder:
    """Turns the raw tree into a DesignSpec, enforcing signatures."""

    def __init__(self, registry: PredicateRegistry, implicit_objects: bool, strict_types: bool):
        self.registry = registry
        self.implicit = implicit_objects
        self.strict_types = strict_types
        self.decls: Dict[int, dict] = {}
        self.domain = dict(DEFAULT_DOMAIN)
        self.references: List[Tuple[int, int]] = []

    def _decl(self, obj: int) -> dict:
        return self.decls.setdefault(obj, {"type": None, "props": [], "box": None})

    def _check_type(self, name: str, pos: int):
        if self.strict_types and not self.registry.is_type(name):
            raise SemanticError(f"unknown object type {name!r}", pos)

    def statement(self, call: _Call):
        sig = _STATEMENTS[call.name]
        if len(call.args) != len(sig):
            raise SemanticError(f"{call.name} takes {len(sig)} arguments", call.pos)
        if call.name == "domain":
            (kk, kind, kpos), (_, lo, _), (_, hi, _) = call.args
            if kk != "ident" or kind not in KINDS:
                raise SemanticError(f"domain kind must be one of {KINDS}", kpos)
            if not (isinstance(lo, int) and isinstance(hi, int)) or lo > hi:
                raise SemanticError("domain bounds must be integers with lo <= hi", call.pos)
            self.domain[kind] = (lo, hi)
            return
        obj = self._object_arg(call.args[0], call.name)
        tk, tname, tpos = call.args[1]
        if tk != "string":
            raise SemanticError("given(...) type must be a string", tpos)
        self._check_type(tname, tpos)
        vals = []
        for k, v, p in call.args[2:]:
            if k != "int":
                raise SemanticError("given(...) box values must be integers", p)
            vals.append(v)
        d = self._decl(obj)
        if d["box"] is not None:
            raise SemanticError(f"object {obj} is given twice", call.pos)
        try:
            d["box"] = BoundingBox(*vals)
        except ValueError as exc:
            raise SemanticError(str(exc), call.pos) from None
        if d["type"] is None:
            d["type"] = tname

    def _object_arg(self, arg, pred) -> int:
        kind, value, pos = arg
        if kind not in ("int", "obj") or value < 0:
            raise SemanticError(f"{pred}: expected an object reference", pos)
        self.references.append((value, pos))
        return value

    def atom(self, call: _Call) -> Atom:
        if not self.registry.known(call.name):
            raise SemanticError(f"unknown predicate {call.name!r}", call.pos)
        sig = self.registry.signature(call.name)
        required = sig.rstrip("C")
        if not (len(required) <= len(call.args) <= len(sig)):
            want = str(len(sig)) if len(sig) == len(required) else f"{len(required)}-{len(sig)}"
            raise SemanticError(f"{call.name} takes {want} arguments, got {len(call.args)}",
                                call.pos)
        args: List[Union[int, str]] = []
        for s, arg in zip(sig, call.args):
            kind, value, pos = arg
            if s == "o":
                args.append(self._object_arg(arg, call.name))
            elif s in "cC":
                if kind != "int":
                    raise SemanticError(f"{call.name}: expected an integer constant", pos)
                args.append(value)
            else:
                if kind != "string":
                    raise SemanticError(f"{call.name}: expected a string", pos)
                args.append(value)
        if len(args) < len(sig):
            args.append(OMITTED_OFFSET)
        if call.name == "type":
            self._check_type(args[1], call.args[1][2])
        return Atom(call.name, tuple(args))

    def build(self, node) -> Formula:
        tag = node[0]
        if tag == "group":
            return self.build(node[1])
        if tag == "const":
            return TRUE if node[1] else FALSE
        if tag == "not":
            return Not(self.build(node[1]))
        if tag == "and":
            return And(tuple(self.build(c) for c in node[1]))
        if tag == "or":
            return Or(tuple(self.build(c) for c in node[1]))
        call = node[1]
        if call.name in _STATEMENTS:
            raise SemanticError(f"{call.name}(...) must be a top-level conjunct", call.pos)
        return self.atom(call)


def parse(text: str, *, registry: PredicateRegistry = REGISTRY,
          implicit_objects: bool = True, strict_types: bool = True) -> DesignSpec:
    """Parse spec text into a :class:`DesignSpec`.

    Objects come from ``given(...)`` statements, top-level ``type``/``property``
    atoms and, when ``implicit_objects`` is set, from any reference in the
    formula.  With ``implicit_objects=False`` every referenced id must be
    declared by ``given`` or a top-level ``type`` atom.
    """
    tokens = tokenize(text)
    p = _Parser(tokens)
    tree = p.formula()
    p.take("eof")

    b = _Builder(registry, implicit_objects, strict_types)
    top = tree[1] if tree[0] == "and" else [tree]
    kept = []
    for node in top:
        if node[0] == "call" and node[1].name in _STATEMENTS:
            b.statement(node[1])
        else:
            kept.append(node)
    parts = [b.build(n) for n in kept]
    for part in parts:
        if isinstance(part, Atom) and part.predicate in ("type", "property"):
            d = b._decl(part.args[0])
            if part.predicate == "type":
                if d["type"] is None:
                    d["type"] = part.args[1]
            else:
                d["props"].append(part.args[1])
    formula = parts[0] if len(parts) == 1 else And(tuple(parts))

    for obj, pos in b.references:
        if obj not in b.decls:
            if not implicit_objects:
                raise SemanticError(f"undeclared object {obj}", pos)
            b._decl(obj)
    objects = tuple(
        ObjectDecl(i, d["type"], tuple(d["props"]), d["box"])
        for i, d in sorted(b.decls.items()))
    for o in objects:
        if o.given_box is not None:
            for k in KINDS:
                lo, hi = b.domain[k]
                if not lo <= o.given_box.get(k) <= hi:
                    raise SemanticError(f"given object {o.id} lies outside the {k} domain", 0)
    return DesignSpec(objects, formula, b.domain)


# --------------------------------------------------------------------------
# Transformations


def to_nnf(f: Formula) -> Formula:
    """Push negations onto atoms (as their ``negated`` flag)."""
    return _nnf(f, False)


def _nnf(f: Formula, neg: bool) -> Formula:
    if isinstance(f, Atom):
        return replace(f, negated=f.negated != neg) if neg else f
    if isinstance(f, Not):
        return _nnf(f.child, not neg)
    kids = tuple(_nnf(c, neg) for c in f.children)
    if isinstance(f, And):
        return Or(kids) if neg else And(kids)
    return And(kids) if neg else Or(kids)


def _map_atoms(f: Formula, fn) -> Formula:
    if isinstance(f, Atom):
        return fn(f)
    if isinstance(f, Not):
        return Not(_map_atoms(f.child, fn))
    return type(f)(tuple(_map_atoms(c, fn) for c in f.children))


def expand_default(spec: DesignSpec, w_min: int = 256, w_max: int = 512) -> DesignSpec:
    """Replace each ``default(o)`` with size bounds plus the in-bounds pair."""
    if w_min > w_max:
        raise ValueError("w_min must not exceed w_max")
    x_max = spec.scene_domain["x"][1]
    y_max = spec.scene_domain["y"][1]

    def expand(a: Atom) -> Formula:
        if a.predicate != "default":
            return a
        o = a.args[0]
        body = And((
            Atom("wider_value", (o, w_min - 1)),
            Atom("narrower_value", (o, w_max + 1)),
            Atom("taller_value", (o, w_min - 1)),
            Atom("shorter_value", (o, w_max + 1)),
            Atom("inbounds_x", (o, x_max)),
            Atom("inbounds_y", (o, y_max)),
        ))
        return Not(body) if a.negated else body

    return replace(spec, constraint=_map_atoms(spec.constraint, expand))


def resolve_metadata(f: Formula, objects: Sequence[ObjectDecl]) -> Formula:
    """Replace ``type``/``property`` atoms by constants from the declarations."""
    by_id = {o.id: o for o in objects}

    def fix(a: Atom) -> Formula:
        if a.predicate == "type":
            hit = by_id[a.args[0]].type_name == a.args[1]
        elif a.predicate == "property":
            hit = a.args[1] in by_id[a.args[0]].properties
        else:
            return a
        return TRUE if hit != a.negated else FALSE

    return _map_atoms(f, fix)


def geometric_formula(spec: DesignSpec) -> Formula:
    """NNF constraint with metadata atoms folded to constants."""
    f = to_nnf(resolve_metadata(spec.constraint, spec.objects))
    if any(a.predicate == "default" for a in atoms(f)):
        raise ValueError("expand_default must be applied before evaluation")
    return f


# --------------------------------------------------------------------------
# Printer


def _fmt_arg(a) -> str:
    return json.dumps(a, ensure_ascii=False) if isinstance(a, str) else str(a)


def format_formula(f: Formula) -> str:
    if isinstance(f, Atom):
        s = f"{f.predicate}({', '.join(_fmt_arg(a) for a in f.args)})"
        return f"¬{s}" if f.negated else s
    if isinstance(f, Not):
        return f"¬{_wrap(f.child)}"
    if not f.children:
        return "true" if isinstance(f, And) else "false"
    if len(f.children) == 1:
        # never produced by the parser; printed as the lone child
        return format_formula(f.children[0])
    op = " ∧ " if isinstance(f, And) else " ∨ "
    return op.join(_wrap(c) for c in f.children)


def _wrap(f: Formula) -> str:
    if isinstance(f, Atom) or (isinstance(f, (And, Or)) and not f.children):
        return format_formula(f)
    if isinstance(f, Not):
        return format_formula(f)
    return f"({format_formula(f)})"


def pretty_print(spec: DesignSpec) -> str:
    """Canonical text for ``spec``; ``parse`` of the result equals ``spec``."""
    lines = []
    for k in KINDS:
        if tuple(spec.scene_domain[k]) != DEFAULT_DOMAIN[k]:
            lo, hi = spec.scene_domain[k]
            lines.append(f"domain({k}, {lo}, {hi})")
    for o in spec.given:
        b = o.given_box
        lines.append(f"given({o.id}, {_fmt_arg(o.type_name or '')}, {b.x}, {b.y}, {b.w}, {b.h})")
    body = _top_level(spec, bool(lines))
    parts = lines + ([body] if body else [])
    return " ∧\n".join(parts) + "\n"


def _top_level(spec: DesignSpec, has_statements: bool) -> str:
    f = spec.constraint
    if not has_statements:
        return format_formula(f)
    if isinstance(f, And) and len(f.children) != 1:
        return " ∧ ".join(_wrap(c) for c in f.children)
    return _wrap(f)
