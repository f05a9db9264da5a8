import math
from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from headautomata.core import (
    EPS, LEFT, RIGHT, STOP, TRANSITION, AcceptorAction, ConstrainedTransducerModel, HeadAcceptor,
    HeadTransducer, RelationalAcceptorModel, TransducerAction, TransductionModel, from_cost,
    renormalize, to_cost, validate_acceptor, validate_model, validate_transducer,
)
from toys import fixture, identity_model

A, T = AcceptorAction, TransducerAction


def rules(report):
    return sorted(v.rule for v in report.violations)


@given(st.floats(min_value=1e-300, max_value=1.0))
def test_cost_round_trip(p):
    assert to_cost(p) >= 0
    assert math.isclose(from_cost(to_cost(p)), p, rel_tol=1e-12)


@pytest.mark.parametrize("p", [0.0, -0.5, math.nan])
def test_to_cost_rejects_non_positive(p):
    with pytest.raises(ValueError):
        to_cost(p)


def test_anbn_acceptor_is_valid():
    a = fixture("anbn.json").automata["anbn"]
    assert a.state_count == 2
    assert validate_acceptor(a, {"a", "b"}).ok


def test_acceptor_violations():
    a = HeadAcceptor("m", ((A(STOP, prob=0.5), A(LEFT, "x", 3, 0.4)),), alphabet="word")
    assert rules(validate_acceptor(a, {"y"})) == ["dangling-state", "normalization", "out-of-alphabet"]
    stop_payload = HeadAcceptor("m", ((A(STOP, "x", 0, 1.0),),))
    assert rules(validate_acceptor(stop_payload)) == ["stop-with-payload"]
    assert rules(validate_acceptor(HeadAcceptor("m", ()))) == ["no-states"]
    bad_initial = HeadAcceptor("m", ((A(STOP),),), initial=4)
    assert rules(validate_acceptor(bad_initial)) == ["dangling-initial-state"]


def test_zero_probability_is_a_range_violation():
    a = HeadAcceptor("m", ((A(STOP, prob=1.0), A(LEFT, "x", 0, 0.0)),))
    assert rules(validate_acceptor(a)) == ["probability-range"]


def test_transducer_violations():
    t = HeadTransducer("t", ((T(STOP, prob=0.5), T(TRANSITION, EPS, EPS, LEFT, "up", 0, 0.5)),))
    assert rules(validate_transducer(t)) == ["bad-valency", "epsilon-epsilon-transition"]
    t = HeadTransducer("t", ((T(TRANSITION, "a", "q", LEFT, LEFT, 0, 1.0),),))
    assert rules(validate_transducer(t, {"a"}, {"x"})) == ["out-of-target-alphabet"]


def small_acceptor_model():
    m = HeadAcceptor("m", ((A(STOP, prob=0.5), A(RIGHT, "obj", 1, 0.5)), (A(STOP, prob=1.0),)))
    return RelationalAcceptorModel(
        ("sees", "it"), ("obj",), {"m": m},
        {("sees", "obj"): {"it": 1.0}, ("it", "obj"): {"it": 1.0}},
        {("obj", "it"): {("m", 0): 1.0}},
        {("sees", "m", 0): 1.0})


def test_acceptor_model_checks():
    model = small_acceptor_model()
    assert validate_model(model).ok
    missing_row = replace(model, dependency_params={("sees", "obj"): {"it": 1.0}})
    assert rules(validate_model(missing_row)) == ["missing-dependency-row"]
    unknown = replace(model, lexicon_params={("obj", "it"): {("nope", 0): 1.0}})
    assert rules(validate_model(unknown)) == ["unknown-automaton"]
    dangling = replace(model, top_params={("sees", "m", 5): 1.0})
    assert "dangling-state" in rules(validate_model(dangling))
    dup = replace(model, vocab=("sees", "it", "sees"))
    assert rules(validate_model(dup)) == ["duplicate-symbol"]
    no_rel = replace(model, relations=())
    assert "empty-relation-set" in rules(validate_model(no_rel))


def test_transduction_model_checks():
    reorder = fixture("reorder.json")
    assert validate_model(reorder).ok
    no_top = replace(reorder, top_params={})
    assert rules(validate_model(no_top)) == ["missing-top-parameters"]
    lexicon = dict(reorder.bilingual_lexicon)
    del lexicon[("mary", "marie")]
    assert rules(validate_model(replace(reorder, bilingual_lexicon=lexicon))) == ["missing-lexicon-row"]


def test_constrained_model_checks():
    m = identity_model()
    assert validate_model(m).ok
    params = {k: dict(v) for k, v in m.params.items()}
    params[("a", "a")] = {STOP: 0.5, ("c", "c", LEFT, LEFT): 0.5}
    assert rules(validate_model(replace(m, params=params))) == ["dependent-pair-not-in-dictionary"]
    top = {("a", "b"): 1.0}
    assert rules(validate_model(replace(m, top_params=top))) == ["top-pair-not-in-dictionary"]
    params = {k: dict(v) for k, v in m.params.items()}
    params[("a", "a")] = {STOP: 0.5, (EPS, EPS, LEFT, LEFT): 0.5}
    assert rules(validate_model(replace(m, params=params))) == ["epsilon-epsilon-transition"]


def test_renormalize_fixes_drift():
    m = identity_model()
    drifted = replace(m, top_params={k: p * 1.01 for k, p in m.top_params.items()})
    assert not validate_model(drifted).ok
    assert validate_model(renormalize(drifted)).ok


def test_constrained_embedding():
    m = identity_model()
    tm = m.as_transduction_model
    assert isinstance(tm, TransductionModel)
    assert validate_model(tm).ok
    t = tm.transducers["a|a"]
    assert t.state_count == 1
    assert [act.event for act in t.states[0]] == list(m.params[("a", "a")])
    assert tm.bilingual_lexicon[("a", "a")] == {"a|a": 1.0}
    assert m.parameter_count() == 6
    assert isinstance(m, ConstrainedTransducerModel)
