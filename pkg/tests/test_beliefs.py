import pytest

from barsim.beliefs import (
    BeliefError,
    ColdStartError,
    IllegalOrderTransition,
    LongTermStore,
    OrderHistoryEntry,
    SemanticGraph,
    StoreError,
    UserRecord,
    WorkingState,
    display_name,
    preferred_drink_of,
)
from barsim.config import DATA_DIR

TINY = """NODE\tCATEGORY\tsmoothie
NODE\tCATEGORY\tcocktail
NODE\tDRINK\ta
NODE\tDRINK\tb
NODE\tDRINK\tc
NODE\tFOOD_INGREDIENT\tmint
NODE\tFOOD_INGREDIENT\tlime
NODE\tFLAVOR\tfresh
EDGE\tBELONGS_TO\ta\tsmoothie
EDGE\tBELONGS_TO\tb\tsmoothie
EDGE\tBELONGS_TO\tc\tcocktail
EDGE\tCONTAINS\ta\tmint
EDGE\tCONTAINS\ta\tlime
EDGE\tCONTAINS\tc\tmint
EDGE\tHAS_FLAVOR\tmint\tfresh
"""


def entry(drink, t=0.0, rating=None, visit=1):
    return OrderHistoryEntry(drink, t, rating, visit=visit)


def test_bundled_graph_shape():
    g = SemanticGraph.load(DATA_DIR / "graph.tsv")
    assert len(g.drinks) == 12
    assert {g.category[d] for d in g.drinks} == {"smoothie", "cocktail"}


def test_similarity_respects_category_flag_and_exclusions():
    g = SemanticGraph.parse(TINY)
    assert g.shared_ingredients("a", "c") == 1
    assert g.most_similar_drink("a", same_category=True) == "b"  # only other smoothie, zero overlap
    assert g.most_similar_drink("a", same_category=False) == "c"
    assert g.most_similar_drink("a", same_category=False, exclude={"c"}) is None
    with pytest.raises(BeliefError):
        g.most_similar_drink("zzz", True)


@pytest.mark.parametrize(
    "bad,msg",
    [
        ("NODE\tPLANET\tx", "unknown node type"),
        ("NODE\tDRINK\ta", "duplicate node"),
        ("EDGE\tLIKES\ta\tb", "unknown edge type"),
        ("EDGE\tCONTAINS\ta\tfresh", "not a FOOD_INGREDIENT"),
        ("EDGE\tBELONGS_TO\ta\tcocktail", "already in"),
        ("garbage", "expected NODE or EDGE"),
    ],
)
def test_graph_errors(bad, msg):
    with pytest.raises(BeliefError, match=msg):
        SemanticGraph.parse(TINY + bad + "\n")


def test_uncategorized_drink_rejected():
    with pytest.raises(BeliefError, match="without a category"):
        SemanticGraph.parse(TINY + "NODE\tDRINK\td\n")


def test_catalog_and_names():
    g = SemanticGraph.load(DATA_DIR / "graph.tsv")
    assert g.catalog()["green power"] == "green_power"
    assert display_name("pina_colada") == "Pina Colada"


def test_last_eval_thresholds():
    u = UserRecord("u", orders=[entry("a", rating=3)], visit_count=1)
    assert u.last_eval() == "positive"
    u.orders[-1].rating = 2
    assert u.last_eval() == "negative"
    u.orders[-1].rating = None
    assert u.last_eval() == "positive"
    assert u.last_eval(missing_is_positive=False) == "none"
    assert UserRecord("v").last_eval() == "none"


def test_record_validation():
    with pytest.raises(BeliefError):
        UserRecord("u", persona="boss")
    with pytest.raises(BeliefError):
        OrderHistoryEntry("a", 0, rating=6)
    with pytest.raises(BeliefError):
        OrderHistoryEntry("a", 0, channel="phone")
    with pytest.raises(BeliefError):
        UserRecord("u", orders=[entry("a", visit=1), entry("b", visit=2)], visit_count=1)


def test_preferred_drink_by_rating_then_frequency():
    rated = UserRecord("u", orders=[entry("a", rating=5), entry("b", rating=3), entry("b", rating=5)], visit_count=1)
    assert preferred_drink_of(rated) == "a"
    tie = UserRecord("u", orders=[entry("a", rating=4), entry("b", rating=4)], visit_count=1)
    assert preferred_drink_of(tie) == "b"  # most recent among equals
    unrated = UserRecord("u", orders=[entry("a"), entry("b"), entry("a")], visit_count=1)
    assert preferred_drink_of(unrated) == "a"
    assert preferred_drink_of(UserRecord("u")) is None


def test_most_ordered_is_global_with_lexicographic_ties():
    store = LongTermStore()
    with pytest.raises(ColdStartError):
        store.most_ordered_drink()
    store.add(UserRecord("x", orders=[entry("b"), entry("a")], visit_count=1))
    store.add(UserRecord("y", orders=[entry("c")], visit_count=1))
    assert store.most_ordered_drink() == "a"
    store.get("y").orders.append(entry("c"))
    assert store.most_ordered_drink() == "c"
    with pytest.raises(StoreError):
        store.add(UserRecord("x"))
    with pytest.raises(StoreError):
        store.get("nobody")


def test_store_round_trip(tmp_path):
    store = LongTermStore([
        UserRecord("x", "worker", 1.5, [OrderHistoryEntry("a", 2.0, 4, 0.5, "totem", ["food"], 1)], {"food": 1.0}, "totem", 1),
        UserRecord("y"),
    ])
    path = tmp_path / "p.jsonl"
    store.persist(path)
    assert LongTermStore.load(path) == store


def test_store_load_reports_bad_record(tmp_path):
    path = tmp_path / "p.jsonl"
    path.write_text('{"user_id":"a"}\n{"user_id":"b","persona":"boss"}\n')
    with pytest.raises(StoreError, match="record 2"):
        LongTermStore.load(path)
    path.write_text('{"user_id":"a"}\n{"user_id":"b"}')
    with pytest.raises(StoreError, match="record 2: truncated"):
        LongTermStore.load(path)
    path.write_text('{"user_id":"a"}\n{"user_id":"b"')
    with pytest.raises(StoreError, match="record 2"):
        LongTermStore.load(path)


def test_bundled_profiles_load():
    store = LongTermStore.load(DATA_DIR / "profiles.jsonl")
    assert store.preferred_drink("marco") == "mojito"


def test_order_lifecycle():
    ws = WorkingState()
    o = ws.add_order("u", None)
    assert o.order_id == "o1" and ws.open_order("u") is o
    ws.advance("o1", "confirmed")
    ws.advance("o1", "preparing")
    with pytest.raises(IllegalOrderTransition):
        ws.advance("o1", "cancelled")
    ws.advance("o1", "served")
    assert ws.open_order("u") is None
    with pytest.raises(IllegalOrderTransition):
        ws.advance("o1", "preparing")


def test_one_preparing_order_per_user():
    ws = WorkingState()
    for _ in range(2):
        o = ws.add_order("u", None)
        ws.advance(o.order_id, "confirmed")
    ws.advance("o1", "preparing")
    with pytest.raises(IllegalOrderTransition):
        ws.advance("o2", "preparing")
    ws.advance("o2", "cancelled")
