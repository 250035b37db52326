import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from constrained_layout.geometry import BoundingBox
from constrained_layout.language import (
    And, Atom, DesignSpec, LexError, Not, ObjectDecl, Or, ParseError, SemanticError,
    atoms, expand_default, parse, pretty_print, to_nnf,
)
from constrained_layout.predicates import BUILTINS, TABLE_RELATIONS

from oracles import truth, random_formula

KITCHEN = """
# 0: a sink, 1: an oven.
given(0, "sink", 100, 150, 250, 200) ∧ given(1, "oven", 380, 500, 300, 300) ∧
type(2,"microwave") ∧ type(3,"toaster") ∧
property(2,"a blue microwave") ∧
property(3,"a green toaster") ∧
default(2) ∧ default(3) ∧
cright(2,1) ∧ cleft(3,1) ∧ cbelow(3,0)
"""


def test_parse_disjunction_example():
    s = parse('type(0,"chair") ∧ (cleft(0,1) ∨ cright(0,1))')
    assert s.constraint == And((
        Atom("type", (0, "chair")),
        Or((Atom("cleft", (0, 1, 1)), Atom("cright", (0, 1, 1)))),
    ))
    assert s.object(0).type_name == "chair"


def test_empty_input_reports_position_zero():
    with pytest.raises(ParseError) as e:
        parse("")
    assert e.value.position == 0


def test_default_atom_stays_pending():
    s = parse('type(0,"oven") ∧ default(0) ∧ right_value(0,400)')
    assert len(s.objects) == 1
    assert any(a.predicate == "default" for a in atoms(s.constraint))


def test_ascii_aliases_and_comments():
    a = parse("above(0,1) & !(left(0,1) | right(0,1)) # trailing note")
    b = parse("above(0,1) ∧ ¬(left(0,1) ∨ right(0,1))")
    assert a == b


def test_object_reference_forms_agree():
    assert parse("above(o0, o1, 3)") == parse("above(0, 1, 3)")


def test_omitted_offset_is_one():
    assert parse("above(0,1)").constraint == Atom("above", (0, 1, 1))


@pytest.mark.parametrize("text,err,pos", [
    ("above(0,1) $", LexError, 11),
    ("above(0,1", ParseError, 9),
    ("foo(0,1)", SemanticError, 0),
    ("above(0)", SemanticError, 0),
    ('left_value(0, "a")', SemanticError, 14),
    ("above(0,1) ∧ ", ParseError, 13),
])
def test_errors_carry_positions(text, err, pos):
    with pytest.raises(err) as e:
        parse(text)
    assert e.value.position == pos


def test_undeclared_object_when_implicit_disabled():
    with pytest.raises(SemanticError):
        parse('type(0,"chair") ∧ above(0, 1)', implicit_objects=False)
    s = parse('type(0,"chair") ∧ type(1,"couch") ∧ above(0, 1)', implicit_objects=False)
    assert [o.id for o in s.objects] == [0, 1]


def test_unknown_type_rejected():
    with pytest.raises(SemanticError):
        parse('type(0,"zebra-lamp")')


def test_given_statement_and_domain():
    s = parse('domain(x, 0, 1050) ∧ given(3, "sink", 1, 2, 3, 4) ∧ above(3, 4)')
    assert s.scene_domain["x"] == (0, 1050)
    assert s.object(3).given_box == BoundingBox(1, 2, 3, 4)
    assert [o.id for o in s.new] == [4]


def test_given_outside_domain_rejected():
    with pytest.raises(SemanticError):
        parse('given(0, "sink", 1200, 0, 10, 10)')


def test_given_only_at_top_level():
    with pytest.raises(SemanticError):
        parse('above(0,1) ∨ given(0, "sink", 1, 1, 1, 1)')


# -- arity table -------------------------------------------------------------

@pytest.mark.parametrize("name", TABLE_RELATIONS)
def test_arity_table(name):
    sig = BUILTINS[name][0]
    objs = ["0", "1"]
    required = [objs.pop(0) if s == "o" else "7" for s in sig if s != "C"]
    parse(f"{name}({', '.join(required)})")
    if "C" in sig:
        parse(f"{name}({', '.join(required + ['7'])})")
    for bad in (required[:-1], required + ["7", "7"] if "C" in sig else required + ["7"]):
        with pytest.raises(SemanticError):
            parse(f"{name}({', '.join(bad)})")


def test_table_has_28_relations():
    assert len(TABLE_RELATIONS) == 28


# -- default macro -------------------------------------------------------------

def test_default_expands_to_six_atoms():
    s = expand_default(parse('type(0,"oven") ∧ default(0)'), 256, 512)
    geo = [a for a in atoms(s.constraint) if a.predicate not in ("type",)]
    assert [a.predicate for a in geo] == [
        "wider_value", "narrower_value", "taller_value", "shorter_value",
        "inbounds_x", "inbounds_y"]
    assert geo[0].args == (0, 255) and geo[1].args == (0, 513)


def test_default_semantics_on_points():
    s = expand_default(parse("default(0)"))
    ok = {0: BoundingBox(100, 100, 256, 512)}
    assert truth_with_inbounds(s.constraint, ok)
    for bad in (BoundingBox(100, 100, 255, 300), BoundingBox(100, 100, 300, 513),
                BoundingBox(800, 100, 300, 300)):
        assert not truth_with_inbounds(s.constraint, {0: bad})


def truth_with_inbounds(f, layout):
    from constrained_layout.constraints import eval_point
    return eval_point(f, layout)


def test_default_pair_gives_twelve_independent_atoms():
    s = expand_default(parse("default(0) ∧ default(1)"))
    got = list(atoms(s.constraint))
    assert len(got) == 12
    assert {a.args[0] for a in got[:6]} == {0} and {a.args[0] for a in got[6:]} == {1}


def test_no_default_is_identity():
    s = parse("above(0,1,3)")
    assert expand_default(s) == s


def test_negated_default_is_wrapped():
    s = expand_default(parse("¬default(0)"))
    assert isinstance(s.constraint, Not)


def test_default_bounds_validated():
    with pytest.raises(ValueError):
        expand_default(parse("default(0)"), 600, 500)


# -- NNF -----------------------------------------------------------------------

A = Atom("above", (0, 1, 1))
B = Atom("left", (0, 1, 1))


def test_nnf_examples():
    assert to_nnf(Not(And((A, B)))) == Or((Atom("above", (0, 1, 1), True),
                                           Atom("left", (0, 1, 1), True)))
    assert to_nnf(A) == A
    assert to_nnf(Not(Not(A))) == A


def _no_not(f):
    if isinstance(f, Not):
        return False
    if isinstance(f, Atom):
        return True
    return all(_no_not(c) for c in f.children)


def test_nnf_preserves_semantics_on_grid():
    rng = np.random.default_rng(3)
    grid = [BoundingBox(x, y, w, h) for x, y, w, h in itertools.product((0, 4), (1, 5), (2, 3), (0, 6))]
    for _ in range(40):
        f = random_formula(rng, [0, 1, 2], depth=3, allow_not=True)
        g = to_nnf(f)
        assert _no_not(g)
        for i in range(60):
            lay = {o: grid[int(rng.integers(len(grid)))] for o in (0, 1, 2)}
            assert truth(f, lay) == truth(g, lay)


# -- printer round trip -------------------------------------------------------

def test_pretty_print_single_atom():
    assert pretty_print(parse("above(0,1,3)")).strip() == "above(0, 1, 3)"


def test_pretty_print_kitchen():
    s = parse(KITCHEN)
    text = pretty_print(s)
    assert "cright(2, 1" in text and "cleft(3, 1" in text
    assert parse(text) == s


def test_pretty_print_parenthesizes():
    s = parse('type(0,"chair") ∧ (cleft(0,1) ∨ cright(0,1))')
    assert "(cleft(0, 1, 1) ∨ cright(0, 1, 1))" in pretty_print(s)
    assert parse(pretty_print(s)) == s


_names = st.sampled_from(TABLE_RELATIONS)


@st.composite
def atoms_st(draw):
    name = draw(_names)
    sig = BUILTINS[name][0]
    args = []
    for s in sig:
        if s == "o":
            args.append(draw(st.integers(0, 3)))
        else:
            args.append(draw(st.integers(-50, 1000)))
    return Atom(name, tuple(args), draw(st.booleans()))


def formulas_st():
    return st.recursive(
        atoms_st(),
        lambda kids: st.one_of(
            st.lists(kids, min_size=2, max_size=3).map(lambda k: And(tuple(k))),
            st.lists(kids, min_size=2, max_size=3).map(lambda k: Or(tuple(k))),
            kids.map(lambda k: Not(k) if not isinstance(k, Atom) else k),
        ),
        max_leaves=8)


def _denegate(f):
    # the parser keeps negation as Not nodes; fold them the same way for comparison
    if isinstance(f, Atom):
        return Not(Atom(f.predicate, f.args)) if f.negated else f
    if isinstance(f, Not):
        return Not(_denegate(f.child))
    return type(f)(tuple(_denegate(c) for c in f.children))


@settings(max_examples=150, deadline=None)
@given(formulas_st(), st.lists(st.sampled_from(["chair", "oven", "sink"]), min_size=4, max_size=4))
def test_round_trip_random_specs(f, types):
    f = _denegate(f)
    used = sorted({o for a in atoms(f) for o in a.objects()})
    objs = tuple(ObjectDecl(o, types[o]) for o in used)
    typed = [Atom("type", (o, types[o])) for o in used]
    spec = DesignSpec(objs, And(tuple(typed) + (f,)))
    assert parse(pretty_print(spec)) == spec
