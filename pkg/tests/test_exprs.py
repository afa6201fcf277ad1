"""Expression trees: rendering, evaluation, parsing, negation."""

import pytest

from sliced import exprs
from sliced.exprs import (
    Add,
    Always,
    And,
    Case,
    Cmp,
    ComponentContext,
    Const,
    DownstreamDraw,
    Eventually,
    ExprError,
    InputPower,
    Mul,
    Next,
    Not,
    Or,
    Param,
    ParseError,
    PAnd,
    PCmp,
    PConst,
    PNot,
    POr,
    RenderNames,
    StateRef,
    Until,
    Var,
    parse_predicate,
    parse_temporal,
    render_value,
    state_is,
    temporal_atoms,
)

NAMES = RenderNames(state="state", inputs=("input",), output_draws=("output1.draw", "output2.draw"))
CTX = ComponentContext(state="nominal", power=True, draw=7, params={"capacity": 5})


def test_render_value_booleans_and_ints():
    assert render_value(True) == "TRUE"
    assert render_value(False) == "FALSE"
    assert render_value(3) == "3"
    assert render_value("dead") == "dead"


def test_state_ref_renders_and_evaluates():
    assert StateRef().to_smv(NAMES) == "state"
    assert StateRef().eval(CTX) == "nominal"


def test_input_power_multiple_inputs_renders_disjunction():
    names = RenderNames(state="s", inputs=("input1", "input2"), output_draws=())
    assert InputPower().to_smv(names) == "(input1.supplyingPower | input2.supplyingPower)"


def test_input_power_no_inputs_renders_false():
    names = RenderNames(state="s", inputs=(), output_draws=())
    assert InputPower().to_smv(names) == "FALSE"
    assert InputPower().eval(CTX) is True


def test_downstream_draw_rendering_by_arity():
    one = RenderNames(state="s", inputs=(), output_draws=("output1.draw",))
    none = RenderNames(state="s", inputs=(), output_draws=())
    assert DownstreamDraw().to_smv(NAMES) == "(output1.draw + output2.draw)"
    assert DownstreamDraw().to_smv(one) == "output1.draw"
    assert DownstreamDraw().to_smv(none) == "0"
    assert DownstreamDraw().eval(CTX) == 7


def test_param_resolves_or_raises():
    assert Param("capacity").to_smv(NAMES) == "capacity"
    assert Param("capacity").eval(CTX) == 5
    with pytest.raises(ExprError):
        Param("missing").eval(CTX)


def test_arithmetic_and_boolean_evaluation():
    assert Add((Const(2), Const(3))).eval(CTX) == 5
    assert Mul((Const(2), Const(3), Const(4))).eval(CTX) == 24
    assert And((Const(True), Const(True))).eval(CTX) is True
    assert Or((Const(False), Const(True))).eval(CTX) is True
    assert Not(Const(False)).eval(CTX) is True


def test_truth_rejects_non_boolean_operands():
    with pytest.raises(ExprError):
        Not(Const(3)).eval(CTX)
    with pytest.raises(ExprError):
        And((Const(1), Const(True))).eval(CTX)


def test_cmp_operators():
    assert Cmp(">", DownstreamDraw(), Param("capacity")).eval(CTX) is True
    assert Cmp("<=", Const(4), Const(4)).eval(CTX) is True
    assert Cmp("!=", StateRef(), Const("dead")).eval(CTX) is True
    assert state_is("nominal").eval(CTX) is True


def test_cmp_rejects_unknown_operator():
    with pytest.raises(ExprError):
        Cmp("==", Const(1), Const(1))


def test_case_first_match_wins():
    c = Case(((Const(True), Const(1)), (Const(True), Const(2))))
    assert c.eval(CTX) == 1


def test_case_falls_through_to_error():
    c = Case(((Const(False), Const(1)),))
    with pytest.raises(ExprError):
        c.eval(CTX)


def test_case_renders_smv_block():
    c = Case(((state_is("ok"), Const(1)), (Const(True), Const(0))))
    text = c.to_smv(RenderNames(state="state", inputs=(), output_draws=()))
    assert text.startswith("case")
    assert text.endswith("esac")
    assert "(state = ok) : 1;" in text
    assert "TRUE : 0;" in text


def test_uses_input_power_walks_all_node_kinds():
    assert exprs.uses_input_power(InputPower())
    assert exprs.uses_input_power(Not(InputPower()))
    assert exprs.uses_input_power(And((Const(True), InputPower())))
    assert exprs.uses_input_power(Case(((InputPower(), Const(1)),)))
    assert not exprs.uses_input_power(DownstreamDraw())
    assert exprs.uses_downstream_draw(Cmp(">", DownstreamDraw(), Const(0)))
    assert not exprs.uses_downstream_draw(StateRef())


# -- predicates over a machine labeling -------------------------------------


def test_var_eval_reads_labeling():
    assert Var("Battery1.state").eval({"Battery1.state": "dead"}) == "dead"
    with pytest.raises(ExprError):
        Var("nope").eval({})


def test_pcmp_eval_and_render():
    p = PCmp("<=", Var("BankFeed.count"), 10)
    assert p.to_smv() == "BankFeed.count <= 10"
    assert p.eval({"BankFeed.count": 11}) is False


def test_pcmp_negation_flips_operator():
    assert PCmp("=", Var("x"), 1).negated() == PCmp("!=", Var("x"), 1)
    assert PCmp("<", Var("x"), 1).negated() == PCmp(">=", Var("x"), 1)
    assert PCmp(">", Var("x"), 1).negated() == PCmp("<=", Var("x"), 1)


def test_pand_negation_is_de_morgan_in_order():
    p = PAnd((PCmp("=", Var("a"), 1), PCmp("=", Var("b"), 2)))
    n = p.negated()
    assert isinstance(n, POr)
    assert n.items == (PCmp("!=", Var("a"), 1), PCmp("!=", Var("b"), 2))


def test_pnot_negation_unwraps():
    inner = PCmp("=", Var("a"), 1)
    assert PNot(inner).negated() is inner


def test_pconst_eval_and_negation():
    assert PConst(True).eval({}) is True
    assert PConst(True).negated() == PConst(False)


def test_temporal_rendering_shapes():
    g = Always(PCmp("=", Var("b.state"), "connected"))
    assert g.to_smv() == "G (b.state = connected)"
    gf = Always(Eventually(Var("done")))
    assert gf.to_smv() == "G (F (done))"
    x = Next(PCmp("!=", Var("s"), "faulty"))
    assert x.to_smv() == "X (s != faulty)"
    u = Until(Var("a"), Var("b"))
    assert u.to_smv() == "((a) U (b))"


def test_temporal_rename_applies_to_atoms():
    g = Always(PCmp("=", Var("Net.count"), 3))
    assert g.to_smv(lambda n: n.replace(".", "_")) == "G (Net_count = 3)"


def test_temporal_atoms_collects_every_var():
    f = Always(POr((PCmp("=", Var("a"), 1), Eventually(Var("b")))))
    assert {v.name for v in temporal_atoms(f)} == {"a", "b"}


# -- parsing -----------------------------------------------------------------


def test_parse_predicate_comparison_atoms():
    assert parse_predicate("x.state = dead") == PCmp("=", Var("x.state"), "dead")
    assert parse_predicate("n >= -3") == PCmp(">=", Var("n"), -3)
    assert parse_predicate("flag = TRUE") == PCmp("=", Var("flag"), True)
    assert parse_predicate("ok") == Var("ok")
    assert parse_predicate("TRUE") == PConst(True)


def test_parse_predicate_precedence_or_binds_loosest():
    p = parse_predicate("a = 1 & b = 2 | c = 3")
    assert isinstance(p, POr)
    assert isinstance(p.items[0], PAnd)


def test_parse_predicate_parens_and_not():
    p = parse_predicate("!(a = 1 | b = 2)")
    assert isinstance(p, PNot)
    assert isinstance(p.operand, POr)


def test_parse_predicate_rejects_trailing_and_garbage():
    with pytest.raises(ParseError):
        parse_predicate("a = 1 b")
    with pytest.raises(ParseError):
        parse_predicate("a = ")
    with pytest.raises(ParseError):
        parse_predicate("a @ 1")
    with pytest.raises(ParseError):
        parse_predicate("")


def test_parse_error_carries_offset():
    try:
        parse_predicate("a @ 1")
    except ParseError as exc:
        assert exc.position == 1  # tokenizing stops right after 'a'
    else:
        pytest.fail("expected ParseError")


def test_parse_temporal_prefixes_and_until():
    f = parse_temporal("G (F (x = 1))")
    assert isinstance(f, Always)
    assert isinstance(f.body, Eventually)
    u = parse_temporal("a U b")
    assert u == Until(Var("a"), Var("b"))
    x = parse_temporal("X done")
    assert isinstance(x, Next)


def test_parse_temporal_keywords_stay_variables_in_predicates():
    # a predicate parse treats G as an ordinary name
    assert parse_predicate("G = 1") == PCmp("=", Var("G"), 1)


def test_parse_temporal_round_trips_rendered_text():
    cases = [
        Always(PCmp("!=", Var("Battery1.state"), "dead")),
        Always(Eventually(PCmp("=", Var("Relay.state"), "closed"))),
        Always(POr((PCmp("!=", Var("clock"), 200), PCmp("=", Var("S.state"), "nominal")))),
        Until(PCmp("=", Var("a"), 1), PAnd((Var("b"), PNot(Var("c"))))),
    ]
    for formula in cases:
        assert parse_temporal(formula.to_smv()).to_smv() == formula.to_smv()
