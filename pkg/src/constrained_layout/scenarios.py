"""Synthetic benchmark scenarios: data generators, definitions and metrics.

Scenario files are line oriented::

    scenario basic
    domain x 0 1000
    object 1 x=rnd(1,500) y=uni(400,550) w=rnd(192,256) h=rnd(128,256)
    constraint above(o1, o2, 300)
    prefer 1 <= x_o1 <= 500

Generator bounds and preference bounds are arithmetic over numbers and
earlier variables named ``<kind>_o<id>`` (e.g. ``w_o1 * 1.5``).
"""

from __future__ import annotations

import ast
import math
import operator
import re
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from .geometry import DEFAULT_DOMAIN, KINDS, BoundingBox, DomainBox
from .language import (
    DesignSpec, ObjectDecl, TRUE, clauses, geometric_formula, parse,
)
from .constraints import eval_point
from .predicates import register_type
from .search import LayoutSampler, Status, satisfiable

# ---------------------------------------------------------------------------
# random draws


def rnd(j: float, k: float, rng: np.random.Generator) -> int:
    """Rounded normal draw, mean j + (k-j)/2 and std (k-j)/12, clamped to [j, k]."""
    lo, hi = _int_bounds(j, k)
    if lo == hi:
        return lo
    v = round(rng.normal(j + (k - j) / 2.0, (k - j) / 12.0))
    return int(min(max(v, lo), hi))


def uni(j: float, k: float, rng: np.random.Generator) -> int:
    """Uniform integer on [j, k]."""
    lo, hi = _int_bounds(j, k)
    return int(rng.integers(lo, hi + 1))


def _int_bounds(j, k) -> Tuple[int, int]:
    lo, hi = math.ceil(j), math.floor(k)
    if hi < lo:
        hi = lo
    return lo, hi


# ---------------------------------------------------------------------------
# bound expressions

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub,
           ast.Mult: operator.mul, ast.Div: operator.truediv}
_VAR_RE = re.compile(r"^([xywh])_o(\d+)$")


@dataclass(frozen=True)
class Expr:
    """Arithmetic over numbers and ``<kind>_o<id>`` variables."""

    text: str

    def __post_init__(self):
        self._check(ast.parse(self.text, mode="eval").body)

    def _check(self, node):
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            self._check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            pass
        elif isinstance(node, ast.Name) and _VAR_RE.match(node.id):
            pass
        else:
            raise ValueError(f"unsupported expression {self.text!r}")

    def variables(self) -> List[Tuple[int, str]]:
        out = []
        for node in ast.walk(ast.parse(self.text, mode="eval")):
            if isinstance(node, ast.Name):
                m = _VAR_RE.match(node.id)
                out.append((int(m.group(2)), m.group(1)))
        return out

    def __call__(self, values: Mapping[Tuple[int, str], float]) -> float:
        return self._eval(ast.parse(self.text, mode="eval").body, values)

    def _eval(self, node, values):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, values),
                                          self._eval(node.right, values))
        if isinstance(node, ast.UnaryOp):
            return -self._eval(node.operand, values)
        if isinstance(node, ast.Constant):
            return node.value
        m = _VAR_RE.match(node.id)
        return values[(int(m.group(2)), m.group(1))]


@dataclass(frozen=True)
class Generator:
    dist: str   # "rnd" or "uni"
    low: Expr
    high: Expr

    def draw(self, values, rng) -> int:
        fn = rnd if self.dist == "rnd" else uni
        return fn(self.low(values), self.high(values), rng)

    def __str__(self):
        return f"{self.dist}({self.low.text},{self.high.text})"


@dataclass(frozen=True)
class Preference:
    low: Expr
    var: Tuple[int, str]
    high: Expr

    def holds(self, layout: Mapping[int, BoundingBox]) -> bool:
        values = {(o, k): b.get(k) for o, b in layout.items() for k in KINDS}
        return self.low(values) <= values[self.var] <= self.high(values)

    def __str__(self):
        return f"{self.low.text} <= {self.var[1]}_o{self.var[0]} <= {self.high.text}"


@dataclass
class Scenario:
    name: str
    generators: Dict[int, Dict[str, Generator]]
    constraint_text: str
    preferences: List[Preference]
    domain: Dict[str, Tuple[int, int]] = field(default_factory=lambda: dict(DEFAULT_DOMAIN))

    @property
    def object_ids(self) -> List[int]:
        return sorted(self.generators)

    @staticmethod
    def type_name(obj: int) -> str:
        return f"object-{obj}"

    def spec(self) -> DesignSpec:
        """Design spec of the scenario: typed objects plus its constraints."""
        for o in self.object_ids:
            register_type(self.type_name(o))
        decls = tuple(ObjectDecl(o, self.type_name(o)) for o in self.object_ids)
        parsed = parse(self.constraint_text) if self.constraint_text.strip() else None
        formula = parsed.constraint if parsed is not None else TRUE
        return DesignSpec(decls, formula, dict(self.domain))

    def training_spec(self) -> DesignSpec:
        s = self.spec()
        return DesignSpec(s.objects, TRUE, dict(s.scene_domain))

    def generate(self, rng: np.random.Generator) -> Dict[int, BoundingBox]:
        values: Dict[Tuple[int, str], int] = {}
        for o in self.object_ids:
            for k in KINDS:
                values[(o, k)] = self.generators[o][k].draw(values, rng)
        return {o: BoundingBox(*(values[(o, k)] for k in KINDS)) for o in self.object_ids}

    def dataset(self, n: int, seed: int):
        rng = np.random.default_rng(seed)
        spec = self.training_spec()
        return [(spec, self.generate(rng)) for _ in range(n)]

    def preference_hits(self, layout) -> int:
        return sum(p.holds(layout) for p in self.preferences)

    def to_text(self) -> str:
        lines = [f"scenario {self.name}"]
        for k in KINDS:
            if tuple(self.domain[k]) != DEFAULT_DOMAIN[k]:
                lines.append(f"domain {k} {self.domain[k][0]} {self.domain[k][1]}")
        for o in self.object_ids:
            gens = " ".join(f"{k}={self.generators[o][k]}" for k in KINDS)
            lines.append(f"object {o} {gens}")
        for c in self.constraint_text.split("\n"):
            if c.strip():
                lines.append(f"constraint {c.rstrip().rstrip('∧').strip()}")
        for p in self.preferences:
            lines.append(f"prefer {p}")
        return "\n".join(lines) + "\n"


_GEN_RE = re.compile(r"^([xywh])=(rnd|uni)\((.*)\)$")
_PREF_RE = re.compile(r"^(.*?)<=\s*([xywh])_o(\d+)\s*<=(.*)$")


def parse_scenario(text: str) -> Scenario:
    name = None
    domain = dict(DEFAULT_DOMAIN)
    gens: Dict[int, Dict[str, Generator]] = {}
    constraints: List[str] = []
    prefs: List[Preference] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        try:
            if head == "scenario":
                name = rest
            elif head == "domain":
                k, lo, hi = rest.split()
                if k not in KINDS:
                    raise ValueError(f"unknown kind {k}")
                domain[k] = (int(lo), int(hi))
            elif head == "object":
                oid, _, body = rest.partition(" ")
                table = {}
                for part in re.split(r"\s+(?=[xywh]=)", body.strip()):
                    m = _GEN_RE.match(part.strip())
                    if m is None:
                        raise ValueError(f"cannot read generator {part!r}")
                    args = _split_args(m.group(3))
                    table[m.group(1)] = Generator(m.group(2), Expr(args[0]), Expr(args[1]))
                if set(table) != set(KINDS):
                    raise ValueError("object needs generators for x, y, w and h")
                gens[int(oid)] = table
            elif head == "constraint":
                constraints.append(rest.rstrip("∧&").strip())
            elif head == "prefer":
                m = _PREF_RE.match(rest)
                if m is None:
                    raise ValueError(f"cannot read preference {rest!r}")
                prefs.append(Preference(Expr(m.group(1).strip()), (int(m.group(3)), m.group(2)),
                                        Expr(m.group(4).strip())))
            else:
                raise ValueError(f"unknown directive {head!r}")
        except (ValueError, SyntaxError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if name is None:
        raise ValueError("missing 'scenario <name>' line")
    sc = Scenario(name, gens, " ∧\n".join(constraints), prefs, domain)
    _check_order(sc)
    return sc


def _split_args(text: str) -> List[str]:
    depth = 0
    for i, ch in enumerate(text):
        depth += (ch == "(") - (ch == ")")
        if ch == "," and depth == 0:
            return [text[:i].strip(), text[i + 1:].strip()]
    raise ValueError(f"expected two bounds in {text!r}")


def _check_order(sc: Scenario):
    seen = set()
    for o in sc.object_ids:
        for k in KINDS:
            g = sc.generators[o][k]
            for ref in g.low.variables() + g.high.variables():
                if ref not in seen:
                    raise ValueError(f"{k}_o{o} depends on {ref[1]}_o{ref[0]}, "
                                     "which is not generated earlier")
            seen.add((o, k))


# Transcribed from the synthetic-scenario tables.
BASIC = """\
scenario basic
object 1 x=rnd(1,500) y=uni(400,550) w=rnd(192,256) h=rnd(128,256)
object 2 x=rnd(500,1000) y=uni(400,550) w=rnd(192,256) h=rnd(128,256)
constraint above(o1, o2, 300)
prefer 1 <= x_o1 <= 500
prefer 500 <= x_o2 <= 1000
"""

TIGHT = """\
scenario tight
object 1 x=rnd(1,1000) y=rnd(300,700) w=rnd(220,256) h=rnd(120,150)
object 2 x=rnd(1,1000) y=rnd(300,700) w=rnd(120,150) h=rnd(120,150)
object 3 x=rnd(1,1000) y=rnd(300,700) w=rnd(120,150) h=rnd(220,256)
constraint left(o1, o2, 180)
constraint left(o2, o3, 180)
prefer 220 <= w_o1 <= 256
prefer 120 <= w_o2 <= 150
prefer 120 <= w_o3 <= 150
prefer 120 <= h_o1 <= 150
prefer 120 <= h_o2 <= 150
prefer 220 <= h_o3 <= 256
"""

COMPLEX = """\
scenario complex
domain x 0 1050
object 1 x=rnd(1,1050) y=rnd(375,565) w=rnd(64,128) h=rnd(w_o1*1.5,200)
object 2 x=rnd(1,1050) y=rnd(y_o1-10,y_o1+10) w=rnd(64,128) h=rnd(w_o2*1.5,200)
object 3 x=rnd(1,900) y=rnd(1,144) w=rnd(64,128) h=rnd(w_o3*2,w_o3*2)
object 4 x=rnd(1,1050) y=rnd(400,665) w=rnd(64,128) h=rnd(w_o4-10,w_o4+10)
constraint left(o1, o2, 400)
constraint above(o2, o4, 200)
constraint right(o4, o1, 250)
constraint right_value(o1, 500)
constraint wider_value(o4, 250)
constraint above_value(o3, 250)
prefer 1 <= x_o1 <= 1050
prefer 1 <= x_o2 <= 1050
prefer 1 <= x_o3 <= 900
prefer 1 <= x_o4 <= 1050
prefer 375 <= y_o1 <= 565
prefer y_o1 - 10 <= y_o2 <= y_o1 + 10
prefer 1 <= y_o3 <= 144
prefer 400 <= y_o4 <= 665
prefer 64 <= w_o1 <= 128
prefer 64 <= w_o2 <= 128
prefer 64 <= w_o3 <= 128
prefer 64 <= w_o4 <= 128
prefer w_o1 * 1.5 <= h_o1 <= 200
prefer w_o2 * 1.5 <= h_o2 <= 200
prefer w_o3 * 2 <= h_o3 <= w_o3 * 2
prefer w_o4 - 10 <= h_o4 <= w_o4 + 10
"""


def builtin_scenarios() -> List[Scenario]:
    out = []
    for text in (BASIC, TIGHT, COMPLEX):
        sc = parse_scenario(text)
        spec = sc.spec()
        if satisfiable(DomainBox.for_spec(spec), geometric_formula(spec)) != Status.SAT:
            raise AssertionError(f"built-in scenario {sc.name} is unsatisfiable")
        out.append(sc)
    return out


def get_scenario(name: str) -> Scenario:
    for sc in builtin_scenarios():
        if sc.name == name:
            return sc
    names = ", ".join(s.name for s in builtin_scenarios())
    raise KeyError(f"unknown scenario {name!r}; built-ins are: {names}")


# ---------------------------------------------------------------------------
# metrics


@dataclass
class Metrics:
    constraint_accuracy: float
    preference_accuracy: float
    episodes: int

    def line(self, name: str) -> str:
        return f"{name},{self.preference_accuracy:.3f},{self.constraint_accuracy:.3f}"


def evaluate(policy, scenario: Scenario, n: int = 256, seed: int = 0,
             budget: Optional[int] = None, layouts_out: Optional[list] = None) -> Metrics:
    """Sample ``n`` layouts under the scenario constraints and score clauses.

    Episode ``i`` draws from its own stream spawned from ``seed``.
    """
    spec = scenario.spec()
    sampler = LayoutSampler(spec, budget)
    cls = clauses(geometric_formula(spec))
    streams = np.random.SeedSequence(seed).spawn(n)
    c_hits = p_hits = 0
    for ss in streams:
        layout = sampler.sample(policy, np.random.default_rng(ss))
        if layouts_out is not None:
            layouts_out.append(layout)
        c_hits += sum(eval_point(c, layout) for c in cls)
        p_hits += scenario.preference_hits(layout)
    c_total = n * len(cls)
    p_total = n * len(scenario.preferences)
    return Metrics(c_hits / c_total if c_total else 1.0,
                   p_hits / p_total if p_total else 1.0, n)
