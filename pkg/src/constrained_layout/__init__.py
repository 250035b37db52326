"""Layout sampling with guaranteed constraint satisfaction.

A design spec (propositional formula over spatial relations) is parsed,
then a recurrent policy proposes each coordinate as a string of halving
decisions while forward checking blocks any decision that would make the
spec unsatisfiable.
"""

from .atop import register_atop
from .constraints import Tri, eval_interval, eval_point
from .geometry import BoundingBox, DomainBox
from .io import LayoutDocument, render_svg
from .language import (
    DesignSpec, ParseError, SpecError, expand_default, geometric_formula, parse, pretty_print,
)
from .policy import GRUPolicy, PolicyParams, uniform_policy
from .predicates import register_predicate, register_type
from .refinement import Token, decode, encode
from .scenarios import builtin_scenarios, evaluate, get_scenario
from .search import LayoutSampler, Status, sample_layout, satisfiable, search
from .training import TrainConfig, load_checkpoint, save_checkpoint, train

__all__ = [
    "BoundingBox", "DesignSpec", "DomainBox", "GRUPolicy", "LayoutDocument", "LayoutSampler",
    "ParseError", "PolicyParams", "SpecError", "Status", "Token", "TrainConfig", "Tri",
    "builtin_scenarios", "decode", "encode", "eval_interval", "eval_point", "evaluate",
    "expand_default", "geometric_formula", "get_scenario", "load_checkpoint", "parse",
    "pretty_print", "register_atop", "register_predicate", "register_type", "render_svg",
    "sample_layout", "satisfiable", "save_checkpoint", "search", "train", "uniform_policy",
]
