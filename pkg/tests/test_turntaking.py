from fractions import Fraction

import pytest

from barsim.turntaking import (
    TRIGGERS,
    InteractionState,
    State,
    TransitionError,
    TurnPolicy,
    is_legal,
    select_active_user,
    transition,
    turn_scores,
)


def st(user="u", state=State.WAITING, arrival=0.0, last=0.0, group=False):
    return InteractionState(user, state, None, arrival, last, group)


def test_greeting_waits_when_others_present():
    s = InteractionState("u")
    assert transition(s, "turn-grant", 1.0).state is State.RECOMMENDATION
    assert transition(s, "turn-grant", 1.0, others_present=True).state is State.WAITING


def test_happy_path():
    s = InteractionState("u")
    for trig, want in [
        ("turn-grant", State.RECOMMENDATION),
        ("reject", State.RECOMMENDATION),
        ("accept", State.ORDERING),
        ("order-modify", State.ORDERING),
        ("order-confirm", State.CONFIRMATION),
        ("order-reject", State.ORDERING),
        ("order-confirm", State.CONFIRMATION),
        ("confirm", State.PREPARATION),
        ("drink-ready", State.SERVING),
        ("handover", State.FAREWELL),
        ("farewell-done", State.GONE),
    ]:
        s = transition(s, trig, 0.0)
        assert s.state is want, trig


def test_illegal_trigger_leaves_state_alone(caplog):
    s = st(state=State.ORDERING)
    with caplog.at_level("DEBUG"):
        assert transition(s, "drink-ready", 5.0) is s
    assert "ignored drink-ready" in caplog.text


def test_unknown_trigger_raises():
    with pytest.raises(TransitionError):
        is_legal(State.GREETING, "dance")


def test_out_of_sight_parks_and_restores():
    s = st(state=State.CONFIRMATION)
    lost = transition(s, "user-lost", 3.0)
    assert lost.state is State.OUT_OF_SIGHT and lost.saved_state is State.CONFIRMATION
    assert transition(lost, "user-seen", 4.0).state is State.CONFIRMATION
    assert transition(lost, "leave", 4.0).state is State.GONE


def test_saved_state_invariant():
    with pytest.raises(TransitionError):
        InteractionState("u", State.WAITING, State.GREETING)
    with pytest.raises(TransitionError):
        InteractionState("u", State.OUT_OF_SIGHT, None)
    with pytest.raises(TransitionError):
        InteractionState("u", State.OUT_OF_SIGHT, State.GONE)


def test_gone_absorbs_everything():
    g = st(state=State.GONE)
    for trig in TRIGGERS:
        assert transition(g, trig, 9.0).state is State.GONE


def test_longest_waiter_gets_the_turn():
    a, b = st("a", arrival=0, last=0), st("b", arrival=1, last=5)
    assert select_active_user([a, b], TurnPolicy(), now=10) == "a"


def test_group_and_bonus_shift_the_choice():
    a, b = st("a", arrival=0, last=4), st("b", arrival=1, last=4, group=True)
    pol = TurnPolicy(1.0, 1.0, 0.5)
    # a: 6 + 0.5 ; b: 6 + 1 + 0.25
    assert select_active_user([a, b], pol, now=10) == "b"
    assert select_active_user([a, b], pol, now=10, bonus={"a": 2.0}) == "a"


def test_scores_are_exact_fractions():
    s = turn_scores([st("a", last=0.1)], TurnPolicy(1.0, 0.5, 0.5), now=0.3)
    assert s["a"] == Fraction(0.3) - Fraction(0.1) + Fraction(1, 2)


def test_ties_go_to_earlier_arrival_then_id():
    a, b = st("a", arrival=2, last=0), st("b", arrival=1, last=0)
    assert select_active_user([a, b], TurnPolicy(1.0, 0.0, 0.0), now=1) == "b"
    pol0 = TurnPolicy(1.0, 0.0, 0.0)
    assert select_active_user([st("z", arrival=1), st("y", arrival=1)], pol0, now=1) == "y"


def test_selection_rejects_absent_users_and_handles_none():
    assert select_active_user([], TurnPolicy(), 0) is None
    with pytest.raises(TransitionError):
        select_active_user([st(state=State.GONE)], TurnPolicy(), 0)


def test_policy_validation():
    with pytest.raises(ValueError):
        TurnPolicy(-1, 1, 1)
    with pytest.raises(ValueError):
        TurnPolicy(0, 0, 0)
