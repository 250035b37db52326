"""Decision tokens and the dyadic refinement codec.

An integer in ``[lo, hi]`` is chosen by a string of tokens.  With
``mid = (lo + hi) // 2``: ``LEFT`` keeps ``[lo, mid - 1]``, ``RIGHT`` keeps
``[mid + 1, hi]`` and ``STOP`` picks ``mid``.  On ``[0, 100]`` the string
LEFT, RIGHT, STOP yields 37.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple, Union

from .geometry import KINDS

Interval = Tuple[int, int]


class Token(enum.IntEnum):
    LEFT = 0
    RIGHT = 1
    STOP = 2
    START = 3


DECISIONS = (Token.LEFT, Token.RIGHT, Token.STOP)


class IllegalToken(ValueError):
    pass


class VariableId(NamedTuple):
    obj: int
    kind: str

    @property
    def key(self):
        return (self.obj, self.kind)


@dataclass(frozen=True)
class VarState:
    lo: int
    hi: int
    history: Tuple[Token, ...] = ()

    @property
    def mid(self) -> int:
        return (self.lo + self.hi) // 2

    def legal(self) -> Tuple[Token, ...]:
        return legal_tokens(self.lo, self.hi)


def midpoint(lo: int, hi: int) -> int:
    return (lo + hi) // 2


def legal_tokens(lo: int, hi: int) -> Tuple[Token, ...]:
    mid = (lo + hi) // 2
    out = []
    if mid > lo:
        out.append(Token.LEFT)
    if mid < hi:
        out.append(Token.RIGHT)
    out.append(Token.STOP)
    return tuple(out)


def child_interval(lo: int, hi: int, t: Token) -> Interval:
    """Interval after ``t``; STOP collapses to the midpoint."""
    mid = (lo + hi) // 2
    if t == Token.STOP:
        return (mid, mid)
    if t == Token.LEFT:
        if mid == lo:
            raise IllegalToken(f"LEFT leaves nothing in [{lo}, {hi}]")
        return (lo, mid - 1)
    if t == Token.RIGHT:
        if mid == hi:
            raise IllegalToken(f"RIGHT leaves nothing in [{lo}, {hi}]")
        return (mid + 1, hi)
    raise IllegalToken("START is an input marker, not a decision")


def apply_token(s: VarState, t: Token) -> Union[VarState, int]:
    """Advance one decision; STOP returns the final integer."""
    if s.lo > s.hi:
        raise IllegalToken("empty interval")
    lo, hi = child_interval(s.lo, s.hi, t)
    if t == Token.STOP:
        return lo
    return VarState(lo, hi, s.history + (t,))


def encode(value: int, initial: Interval) -> List[Token]:
    lo, hi = initial
    if not lo <= value <= hi:
        raise ValueError(f"{value} outside [{lo}, {hi}]")
    out = []
    while True:
        mid = (lo + hi) // 2
        if value == mid:
            out.append(Token.STOP)
            return out
        if value < mid:
            out.append(Token.LEFT)
            hi = mid - 1
        else:
            out.append(Token.RIGHT)
            lo = mid + 1


def decode(tokens: Sequence[Token], initial: Interval) -> int:
    s = VarState(*initial)
    for i, t in enumerate(tokens):
        r = apply_token(s, Token(t))
        if isinstance(r, int):
            if i != len(tokens) - 1:
                raise IllegalToken("tokens after STOP")
            return r
        s = r
    raise IllegalToken("decision string does not end with STOP")


def max_length(initial: Interval) -> int:
    """Longest decision string on ``initial`` (each step drops the midpoint)."""
    return (initial[1] - initial[0] + 1).bit_length()


def variable_order(spec, rng=None, training: bool = False) -> List[VariableId]:
    """Given objects first in spec order, then new objects; x, y, w, h within each.

    In training mode the new objects are shuffled with ``rng``.
    """
    given = [o.id for o in spec.given]
    new = [o.id for o in spec.new]
    if training:
        if rng is None:
            raise ValueError("training order needs an rng")
        new = [new[i] for i in rng.permutation(len(new))]
    return [VariableId(o, k) for o in given + new for k in KINDS]
