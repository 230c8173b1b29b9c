import pytest

from barsim.simbus import Bus, BusError, HandlerError, Trace, TraceError, canonical, fmt_seconds, to_ms


def make_bus(*topics):
    return Bus(topics or ("/a", "/b"))


def test_to_ms_rounds_half_away_from_zero():
    assert to_ms(0.0005) == 1
    assert to_ms(-0.0005) == -1
    assert to_ms("1.25") == 1250
    assert fmt_seconds(1250) == "1.250"
    assert fmt_seconds(-5) == "-0.005"


def test_canonical_json_is_sorted_and_compact():
    assert canonical({"b": 1, "a": [1, "é"]}) == '{"a":[1,"\\u00e9"],"b":1}'


def test_same_due_time_dispatches_in_publish_order():
    bus = make_bus()
    got = []
    bus.subscribe("/a", lambda m: got.append(m.payload["n"]))
    for n in range(5):
        bus.publish("/a", {"n": n}, delay=1.0)
    bus.run()
    assert got == [0, 1, 2, 3, 4]


def test_delays_order_messages_by_due_time():
    bus = make_bus()
    got = []
    bus.subscribe("/a", lambda m: got.append((m.time, m.payload["n"])))
    bus.publish("/a", {"n": 1}, delay=2.0)
    bus.publish("/a", {"n": 2}, delay=0.5)
    bus.run()
    assert got == [(0.5, 2), (2.0, 1)]


def test_handlers_may_publish_follow_ups():
    bus = make_bus()
    bus.subscribe("/a", lambda m: bus.publish("/b", {"echo": m.payload["x"]}, 0.25))
    bus.publish("/a", {"x": 7})
    trace = bus.run()
    assert [m.line() for m in trace] == ['0.000\t1\t/a\t{"x":7}', '0.250\t2\t/b\t{"echo":7}']


def test_unknown_topic_lists_known_ones():
    bus = make_bus()
    with pytest.raises(BusError, match="/a, /b"):
        bus.publish("/nope", {})


def test_duplicate_subscription_name_rejected():
    bus = make_bus()
    bus.subscribe("/a", print, name="p")
    with pytest.raises(BusError):
        bus.subscribe("/a", print, name="p")
    bus.subscribe("/b", print, name="p")  # same name on another topic is fine


def test_negative_delay_rejected():
    with pytest.raises(BusError):
        make_bus().publish("/a", {}, -1)


def test_handler_failure_names_the_message():
    bus = make_bus()

    def boom(_):
        raise RuntimeError("x")

    bus.subscribe("/a", boom)
    bus.publish("/a", {})
    with pytest.raises(HandlerError) as err:
        bus.run()
    assert err.value.seq == 1 and err.value.topic == "/a"


def test_run_until_stops_at_horizon_and_sets_clock():
    bus = make_bus()
    bus.publish("/a", {"n": 1}, 1)
    bus.publish("/a", {"n": 2}, 3)
    part = bus.run_until(2)
    assert len(part) == 1 and bus.now == 2.0 and bus.pending == 1
    with pytest.raises(BusError):
        bus.run_until(1)


def test_step_on_empty_queue_returns_none():
    assert make_bus().step() is None


def test_trace_round_trips_through_text(tmp_path):
    bus = make_bus()
    bus.publish("/a", {"k": [1, 2], "s": "tab\there"}, 0.001)
    bus.publish("/b", {}, 1)
    bus.run()
    path = tmp_path / "t.tsv"
    bus.trace.write(path)
    again = Trace.read(path)
    assert again.text() == bus.trace.text()
    assert [m.topic for m in again.on("/b")] == ["/b"]


@pytest.mark.parametrize("line", ["garbage", "1.0\tx\t/a\t{}", "1.0\t1\t/a\t[1]", "1.0\t1\t/a\t{bad"])
def test_malformed_trace_line_reports_line_number(line):
    with pytest.raises(TraceError, match=":2:"):
        Trace.parse('0.000\t1\t/a\t{}\n' + line)


def test_identical_inputs_give_identical_traces():
    def run():
        bus = make_bus()
        bus.subscribe("/a", lambda m: bus.publish("/b", {"v": m.payload["v"] * 2}, 0.1))
        for v in (3, 1, 2):
            bus.publish("/a", {"v": v}, v)
        bus.run()
        return bus.trace.text()

    assert run() == run()
