"""Forward checking: exact satisfiability over partial decisions and the
policy-guided sampler built on it.

The search is a depth-first walk over the refinement trees of the
variables.  Each node is pruned when the interval evaluation is FALSE and
accepted as soon as it is TRUE; top-level linear constraints also tighten
the bounds before evaluation.  Every integer in a variable's current
interval is reachable by some continuation, so searching over the integer
box is the same as searching over decision strings.
"""

from __future__ import annotations

import enum
import logging
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .constraints import CompiledFormula
from .geometry import KINDS, BoundingBox, DomainBox, VarKey
from .language import DesignSpec, Formula, geometric_formula
from .predicates import REGISTRY, PredicateRegistry
from .refinement import (
    DECISIONS, Token, VarState, child_interval, encode, legal_tokens,
    variable_order,
)

log = logging.getLogger(__name__)


class Status(enum.Enum):
    SAT = "sat"
    UNSAT = "unsat"
    BUDGET_EXCEEDED = "budget_exceeded"


class Unsatisfiable(ValueError):
    pass


class BudgetFailure(RuntimeError):
    """The budgeted sampler had to rewind past the start of a variable."""


class _OutOfBudget(Exception):
    pass


class Searcher:
    """DFS over a compiled formula; ``budget`` caps visited nodes per call."""

    def __init__(self, cf: CompiledFormula, budget: Optional[int] = None):
        self.cf = cf
        self.budget = budget
        self.nodes = 0
        self.calls = 0

    def run(self, lo: Sequence[int], hi: Sequence[int]) -> Tuple[Status, Optional[List[int]]]:
        self.calls += 1
        self._left = self.budget
        try:
            w = self._dfs(list(lo), list(hi))
        except _OutOfBudget:
            return Status.BUDGET_EXCEEDED, None
        return (Status.SAT, w) if w is not None else (Status.UNSAT, None)

    def _dfs(self, lo: List[int], hi: List[int]) -> Optional[List[int]]:
        self.nodes += 1
        if self._left is not None:
            if self._left <= 0:
                raise _OutOfBudget
            self._left -= 1
        if not self.cf.propagate(lo, hi):
            return None
        pending: List[int] = []
        t = self.cf.evaluate(lo, hi, pending)
        if t == 2:
            return lo
        if t == 0:
            return None
        v = max(pending, key=lambda i: hi[i] - lo[i])
        a, b = lo[v], hi[v]
        mid = (a + b) // 2
        for na, nb in ((mid, mid), (a, mid - 1), (mid + 1, b)):
            if na > nb:
                continue
            clo, chi = lo[:], hi[:]
            clo[v], chi[v] = na, nb
            w = self._dfs(clo, chi)
            if w is not None:
                return w
        return None


def _compile(d: DomainBox, f: Formula, registry) -> Tuple[CompiledFormula, List[VarKey]]:
    keys = list(d)
    return CompiledFormula(f, keys, registry=registry), keys


def search(d: DomainBox, f: Formula, budget: Optional[int] = None, *,
           registry: PredicateRegistry = REGISTRY) -> Tuple[Status, Optional[Dict[VarKey, int]]]:
    """Satisfiability of NNF ``f`` over ``d`` plus a witness assignment when SAT."""
    cf, keys = _compile(d, f, registry)
    status, w = Searcher(cf, budget).run([d[k][0] for k in keys], [d[k][1] for k in keys])
    return status, (dict(zip(keys, w)) if w is not None else None)


def satisfiable(d: DomainBox, f: Formula, budget: Optional[int] = None, *,
                registry: PredicateRegistry = REGISTRY) -> Status:
    return search(d, f, budget, registry=registry)[0]


def filter_feasible_tokens(s: VarState, var: VarKey, others: DomainBox, f: Formula,
                           budget: Optional[int] = None, *,
                           registry: PredicateRegistry = REGISTRY) -> FrozenSet[Token]:
    """Legal tokens for ``var`` whose resulting box still admits a solution.

    In budgeted mode an exhausted budget counts as feasible.
    """
    out = set()
    for t in legal_tokens(s.lo, s.hi):
        lo, hi = child_interval(s.lo, s.hi, t)
        st = satisfiable(others.replace(var, lo, hi), f, budget, registry=registry)
        if st != Status.UNSAT:
            out.add(t)
    return frozenset(out)


def resample_distribution(p: Sequence[float], blocked: Iterable[Token]) -> np.ndarray:
    """Zero the blocked decisions and renormalize what is left.

    ``p`` is ordered (LEFT, RIGHT, STOP).  If the unblocked mass is
    negligible the result is uniform over the unblocked tokens.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (3,) or abs(p.sum() - 1.0) > 1e-9 or (p < 0).any():
        raise ValueError(f"not a distribution over three decisions: {p}")
    mask = np.ones(3, dtype=bool)
    for t in blocked:
        mask[int(t)] = False
    if not mask.any():
        raise ValueError("every decision is blocked")
    q = np.where(mask, p, 0.0)
    total = q.sum()
    if total < 1e-12:
        return mask / mask.sum()
    return q / total


Layout = Dict[int, BoundingBox]


class LayoutSampler:
    """Runs sampling episodes for one spec.

    The formula is compiled once; each :meth:`sample` call owns its policy
    state and rng, so episodes are independent.
    """

    def __init__(self, spec: DesignSpec, budget: Optional[int] = None, *,
                 registry: PredicateRegistry = REGISTRY):
        self.spec = spec
        self.budget = budget
        self.order = variable_order(spec)
        self.keys = [v.key for v in self.order]
        self.formula = geometric_formula(spec)
        self.cf = CompiledFormula(self.formula, self.keys, registry=registry)
        d = DomainBox.for_spec(spec)
        self.domain = [d[k] for k in self.keys]
        self.used = set(self.cf.used)
        self.rewinds = 0
        status, w = Searcher(self.cf, budget).run(
            [iv[0] for iv in self.domain], [iv[1] for iv in self.domain])
        if status == Status.UNSAT:
            raise Unsatisfiable("the constraint has no solution within the scene domain")
        self._initial_witness = w

    def sample(self, policy, rng: np.random.Generator) -> Layout:
        spec = self.spec
        lo = [iv[0] for iv in self.domain]
        hi = [iv[1] for iv in self.domain]
        witness = self._initial_witness
        searcher = Searcher(self.cf, self.budget)

        def feasible(i, a, b):
            nonlocal witness
            if i not in self.used:
                return True
            if witness is not None and a <= witness[i] <= b:
                return True
            olo, ohi = lo[i], hi[i]
            lo[i], hi[i] = a, b
            status, w = searcher.run(lo, hi)
            lo[i], hi[i] = olo, ohi
            if status == Status.SAT:
                witness = w
                return True
            if status == Status.BUDGET_EXCEEDED:
                witness = None
                return True
            return False

        state = policy.initial_state(spec)
        for i, var in enumerate(self.order):
            decl = spec.object(var.obj)
            state = policy.begin_variable(state, var, decl.type_name)
            if decl.is_given:
                forced = encode(decl.given_box.get(var.kind), spec.scene_domain[var.kind])
                prev = Token.START
                for t in forced:
                    _, state = policy.step(state, prev)
                    prev = t
                continue
            state = self._sample_variable(i, policy, state, rng, lo, hi, feasible)
        return {o.id: BoundingBox(*(lo[self.keys.index((o.id, k))] for k in KINDS))
                for o in spec.objects}

    def _sample_variable(self, i, policy, state, rng, lo, hi, feasible):
        cur = self.domain[i]
        probs, st = policy.step(state, Token.START)
        blocked = set(DECISIONS) - set(legal_tokens(*cur))
        frames = []
        while True:
            if len(blocked) == 3:
                if not frames:
                    raise BudgetFailure(
                        f"no feasible decision left for variable {self.keys[i]}")
                self.rewinds += 1
                cur, st, probs, blocked, taken = frames.pop()
                blocked = blocked | {taken}
                lo[i], hi[i] = cur
                continue
            p = resample_distribution(probs, blocked)
            t = Token(int(rng.choice(3, p=p)))
            nxt = child_interval(cur[0], cur[1], t)
            if not feasible(i, *nxt):
                blocked.add(t)
                continue
            lo[i], hi[i] = nxt
            if t == Token.STOP:
                return st
            frames.append((cur, st, probs, blocked, t))
            cur = nxt
            probs, st = policy.step(st, t)
            blocked = set(DECISIONS) - set(legal_tokens(*cur))


def sample_layout(spec: DesignSpec, policy, rng: np.random.Generator,
                  budget: Optional[int] = None, *,
                  registry: PredicateRegistry = REGISTRY) -> Layout:
    """One layout satisfying the spec's constraint (``default`` already expanded)."""
    return LayoutSampler(spec, budget, registry=registry).sample(policy, rng)
