import random

import pytest

from barsim.config import DATA_DIR
from barsim.fusion import EngagementEstimate
from barsim.orchestrator import INITIAL_WORLD
from barsim.plansched import (
    BasicAction,
    DeadlockError,
    FaceEvent,
    PlanError,
    Timetable,
    face_behavior,
    interleave_gesture,
    load_recipes,
    parse_recipes,
    plan_order,
    schedule,
    validate_plans,
)

from oracles import overlaps, random_workload, replay_violations


def act(i, dur, res=("arm_any",), pre=(), add=(), dele=(), after=(), order="o"):
    return BasicAction(i, order, dur, frozenset(res), frozenset(pre), frozenset(add), frozenset(dele), frozenset(after))


def chain(prefix, durs, res=("arm_any",)):
    out = []
    for k, d in enumerate(durs):
        out.append(act(f"{prefix}{k}", d, res, after={f"{prefix}{k - 1}"} if k else ()))
    return out


@pytest.fixture(scope="module")
def recipes():
    return load_recipes(DATA_DIR / "recipes.txt")


def test_three_steps_chain():
    book = parse_recipes("d\ngrab_glass\t1\tarm_any\tpre:\tadd:\tdel:\npour\t1\tarm_any\tpre:\tadd:\tdel:\nserve\t1\tarm_any\tpre:\tadd:\tdel:\n")
    plan = plan_order("d", book)
    assert [a.id for a in plan] == ["o1.1.grab_glass", "o1.2.pour", "o1.3.serve"]
    assert plan[2].predecessor_ids == {"o1.2.pour"} and not plan[0].predecessor_ids


def test_empty_recipe_rejected():
    with pytest.raises(PlanError, match="empty"):
        parse_recipes("d\n")


@pytest.mark.parametrize(
    "line,msg",
    [
        ("x\t0\tarm_any\tpre:\tadd:\tdel:", "duration"),
        ("x\t1\tarm_leg\tpre:\tadd:\tdel:", "unknown resources"),
        ("x\t1\tarm_any\tadd:\tpre:\tdel:", "pre:"),
        ("x\t1\tarm_any\tpre:", "expected step"),
        ("x\t1\tarm_any\tpre:\tadd:\tdel:\tafter:ghost", "unknown earlier"),
    ],
)
def test_recipe_errors(line, msg):
    with pytest.raises(PlanError, match=f":2: .*{msg}"):
        parse_recipes("d\n" + line + "\n")


def test_unknown_drink(recipes):
    with pytest.raises(PlanError):
        plan_order("water", recipes)


def test_smoothie_action_count_equals_recipe_lines(recipes):
    text = (DATA_DIR / "recipes.txt").read_text().split("\n\n")
    block = next(b for b in text if b.lstrip().startswith("green_power"))
    lines = [ln for ln in block.strip().splitlines()[1:] if "\t" in ln]
    assert len(plan_order("green_power", recipes)) == len(lines) == 6


def test_local_predicates_are_per_order(recipes):
    a = plan_order("mojito", recipes, "o7")
    assert "o7.glass_placed" in a[0].add and "glass_available" in a[0].preconditions


def test_sequential_sum_on_one_arm():
    assert schedule([chain("a", [2, 3, 5])], arms=1).makespan == 10.0


def test_two_identical_drinks_split_across_arms():
    plans = [chain("a", [2, 3, 5]), chain("b", [2, 3, 5])]
    assert schedule(plans, arms=1).makespan == 20.0
    assert schedule(plans, arms=2).makespan == 10.0


def test_shared_mixer_is_never_double_booked():
    plans = [[act("a", 4, ("arm_any", "mixer"))], [act("b", 4, ("arm_any", "mixer"))]]
    tt = schedule(plans, arms=2)
    a, b = sorted(tt.entries, key=lambda e: e.start_ms)
    assert a.end_ms <= b.start_ms and tt.makespan == 8.0


def test_lowest_busy_arm_then_left():
    tt = schedule([[act("a", 3)], [act("b", 1)], [act("c", 1, after=())]], arms=2)
    arms = {e.action_id: e.arm for e in tt.entries}
    assert arms["a"] == "arm_left" and arms["b"] == "arm_right"
    assert arms["c"] == "arm_right"  # right finished first and has less busy time


def test_preconditions_delay_start():
    plans = [[act("fill", 2), act("pour", 1, add={"ready"}, after={"fill"})],
             [act("drink", 2, pre={"ready"}, order="p")]]
    tt = schedule(plans, arms=2)
    start = {e.action_id: e.start_ms for e in tt.entries}
    assert start["drink"] == 3000
    assert not replay_violations(tt.entries, tt.actions, set(), 2)


def test_deadlock_names_action_and_predicate():
    with pytest.raises(DeadlockError) as err:
        schedule([[act("x", 1, pre={"unicorn"})]], arms=2)
    assert err.value.action_id == "x" and err.value.missing == ("unicorn",)


def test_plan_validation():
    with pytest.raises(PlanError, match="duplicate"):
        validate_plans([[act("a", 1)], [act("a", 1)]])
    with pytest.raises(PlanError, match="unknown predecessors"):
        validate_plans([[act("a", 1, after={"z"})]])
    with pytest.raises(PlanError, match="cycle"):
        validate_plans([[act("a", 1, after={"b"}), act("b", 1, after={"a"})]])
    with pytest.raises(PlanError):
        schedule([[act("a", 1)]], arms=3)
    with pytest.raises(PlanError):
        act("a", 0)


def test_single_arm_timetable_uses_left_for_everything():
    tt = schedule([[act("a", 1, ("arm_left", "arm_right")), act("b", 1, ("arm_right",), after={"a"})]], arms=1)
    assert {e.arm for e in tt.entries} == {"arm_left"}


def test_bundled_recipes_schedule_cleanly(recipes):
    for drink in recipes:
        plan = plan_order(drink, recipes, "o1")
        for arms in (1, 2):
            tt = schedule([plan], arms, INITIAL_WORLD)
            assert not replay_violations(tt.entries, tt.actions, INITIAL_WORLD, arms)
            assert not overlaps(tt.entries, tt.actions)


def test_export_format():
    tt = schedule([chain("a", [1.5])], arms=2)
    assert tt.export() == "a0\tarm_left\t0.000\t1.500\n"


def test_gesture_placement_and_drop():
    busy = schedule([[act("a", 10, ("arm_left", "arm_right"))]], arms=2)
    g = act("g", 1.5, order="")
    assert interleave_gesture(busy, g, (2, 8)).dropped == ["g"]
    idle = Timetable(arms=2)
    placed = interleave_gesture(idle, g, (3, 8))
    (e,) = placed.entries
    assert e.start_ms == 3000 and e.arm == "arm_left" and not placed.dropped
    half = schedule([[act("a", 10, ("arm_left",))]], arms=2)
    (ge,) = [x for x in interleave_gesture(half, g, (0, 5)).entries if x.action_id == "g"]
    assert ge.arm == "arm_right" and ge.start_ms == 0


def test_gesture_must_be_free_floating():
    with pytest.raises(PlanError):
        interleave_gesture(Timetable(), act("g", 1, ("arm_left",)), (0, 5))
    with pytest.raises(PlanError):
        interleave_gesture(Timetable(), act("g", 1, after={"x"}), (0, 5))


def test_gesture_keeps_timetable_invariants():
    rng = random.Random(11)
    for k in range(200):
        plans, world = random_workload(rng)
        tt = schedule(plans, 2, world)
        lo = rng.uniform(0, tt.makespan)
        g = act(f"g{k}", rng.choice((0.5, 1.0, 1.5)), order="")
        out = interleave_gesture(tt, g, (lo, lo + rng.uniform(0.5, 6)))
        assert not overlaps(out.entries, out.actions)
        if "g" + str(k) not in out.dropped:
            e = next(x for x in out.entries if x.action_id == g.id)
            assert to_s(e.start_ms) >= lo - 1e-3


def to_s(ms):
    return ms / 1000


def test_face_behaviour():
    low = face_behavior(EngagementEstimate(0.2), "understood")
    assert [(e.kind, e.expression) for e in low] == [("expression", "joy"), ("vocal_sound", None)]
    assert face_behavior(EngagementEstimate(0.9), "understood") == []
    assert [e.expression for e in face_behavior(None, "emoting", "negative")] == ["sadness"]
    assert [e.kind for e in face_behavior(None, "not_understood")] == ["expression", "speech"]
    assert [e.kind for e in face_behavior(None, "listening")] == ["gaze"]
    with pytest.raises(PlanError):
        face_behavior(None, "dancing")


def test_face_event_invariant():
    with pytest.raises(PlanError):
        FaceEvent("gaze", expression="joy")
    with pytest.raises(PlanError):
        FaceEvent("expression")
    with pytest.raises(PlanError):
        FaceEvent("expression", expression="boredom")
