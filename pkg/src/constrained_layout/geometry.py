"""Bounding boxes and per-variable domains, all in integer per-mille units.

Coordinates follow image conventions: ``x`` grows to the right and ``y``
grows downward, so an object "above" another has the smaller ``y``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, Mapping, NamedTuple, Tuple

KINDS = ("x", "y", "w", "h")
KIND_INDEX = {k: i for i, k in enumerate(KINDS)}

DEFAULT_DOMAIN: Dict[str, Tuple[int, int]] = {k: (0, 1000) for k in KINDS}

VarKey = Tuple[int, str]


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in KINDS:
            if not isinstance(getattr(self, name), int):
                raise TypeError(f"BoundingBox.{name} must be an int")
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative box size: {self}")

    def get(self, kind: str) -> int:
        return getattr(self, kind)

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    def as_dict(self) -> Dict[str, int]:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}


class BoxDomain(NamedTuple):
    """Intervals of one object's four variables; handed to custom predicates."""

    x: Tuple[int, int]
    y: Tuple[int, int]
    w: Tuple[int, int]
    h: Tuple[int, int]


class DomainBox(Mapping):
    """Closed integer interval per ``(object, kind)`` variable."""

    def __init__(self, intervals: Mapping[VarKey, Tuple[int, int]]):
        self._iv = {}
        for key, (lo, hi) in intervals.items():
            lo, hi = int(lo), int(hi)
            if lo > hi:
                raise ValueError(f"empty interval for {key}: [{lo}, {hi}]")
            self._iv[key] = (lo, hi)

    @classmethod
    def for_spec(cls, spec) -> "DomainBox":
        """Initial domains of a spec; given objects are pinned to their boxes."""
        iv = {}
        for decl in spec.objects:
            for kind in KINDS:
                if decl.given_box is not None:
                    v = decl.given_box.get(kind)
                    iv[(decl.id, kind)] = (v, v)
                else:
                    iv[(decl.id, kind)] = tuple(spec.scene_domain[kind])
        return cls(iv)

    def __getitem__(self, key: VarKey) -> Tuple[int, int]:
        return self._iv[key]

    def __iter__(self) -> Iterator[VarKey]:
        return iter(self._iv)

    def __len__(self) -> int:
        return len(self._iv)

    def __repr__(self):
        return f"DomainBox({self._iv!r})"

    def replace(self, key: VarKey, lo: int, hi: int) -> "DomainBox":
        iv = dict(self._iv)
        iv[key] = (lo, hi)
        return DomainBox(iv)

    def is_point(self) -> bool:
        return all(lo == hi for lo, hi in self._iv.values())

    def completions(self) -> int:
        n = 1
        for lo, hi in self._iv.values():
            n *= hi - lo + 1
        return n

    def object_domain(self, obj: int) -> BoxDomain:
        return BoxDomain(*(self._iv[(obj, k)] for k in KINDS))
