import io

import pytest

from barsim.cli import build_parser, cmd_interactive, main
from barsim.report import build_report
from barsim.simbus import Trace, TraceError

from conftest import SCENARIOS

EVENING = str(SCENARIOS / "bar_evening.scn")


def scripted(*lines):
    it = iter(lines)
    return lambda: next(it, None)


def interactive(tmp_path, lines, extra=""):
    cfg = tmp_path / "i.cfg"
    cfg.write_text(extra)
    out = io.StringIO()
    code = cmd_interactive(build_parser().parse_args(["interactive", "--config", str(cfg)]), out, scripted(*lines))
    return code, out.getvalue()


def test_run_writes_trace_and_report(tmp_path, capsys):
    trace = tmp_path / "t.tsv"
    assert main(["run", "--scenario", EVENING, "--trace", str(trace)]) == 0
    out = capsys.readouterr().out
    assert "# wait (s)" in out and "marco\t1.000" in out
    assert trace.read_text().startswith("0.000\t")


def test_same_seed_same_trace(tmp_path):
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    for path in (a, b):
        assert main(["run", "--scenario", EVENING, "--seed", "3", "--trace", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_missing_graph_is_reported(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("graph_path = nowhere.tsv\n")
    assert main(["run", "--scenario", EVENING, "--config", str(cfg)]) != 0
    assert "nowhere.tsv" in capsys.readouterr().err


def test_bad_scenario_is_reported(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("user a\nt=1 dance a\n")
    assert main(["run", "--scenario", str(bad), "--trace", str(tmp_path / "t")]) == 2
    assert "bad.scn:2" in capsys.readouterr().err


def test_interactive_greeting_advances(tmp_path):
    code, out = interactive(tmp_path, ["hello"])
    assert code == 0
    assert "robot: Hello guest, welcome to the bar!" in out
    assert "<GREETING -> RECOMMENDATION>" in out
    assert out.rstrip().endswith("session over")


def test_interactive_gibberish_asks_to_repeat(tmp_path):
    _, out = interactive(tmp_path, ["hello", "blorp zzt"])
    assert "robot: Sorry, could you repeat that?" in out


def test_interactive_full_order(tmp_path):
    _, out = interactive(tmp_path, ["hello", "a mojito please", "yes"] + ["no thanks"] * 5)
    assert "<PREPARATION -> SERVING>" in out and "<FAREWELL -> GONE>" in out


def test_interactive_cancel_in_confirmation(tmp_path):
    _, out = interactive(tmp_path, ["hello", "a daiquiri please", "yes", "cancel my order"], "interactive_user = marco\n")
    assert "You usually have the Mojito" in out
    assert "<CONFIRMATION -> GONE>" in out


def test_interactive_eof_leaves(tmp_path):
    _, out = interactive(tmp_path, [])
    assert "-> GONE>" in out and "session over" in out


def test_report_command(tmp_path, capsys):
    trace = tmp_path / "t.tsv"
    main(["run", "--scenario", EVENING, "--trace", str(trace)])
    capsys.readouterr()
    assert main(["report", "--trace", str(trace)]) == 0
    assert "sara\t22.000" in capsys.readouterr().out


def test_report_on_malformed_trace(tmp_path, capsys):
    trace = tmp_path / "t.tsv"
    trace.write_text('0.000\t0\t/state\t{"user": "a"}\nnot a trace line\n')
    assert main(["report", "--trace", str(trace)]) == 2
    assert ":2:" in capsys.readouterr().err


def test_report_on_payload_missing_fields():
    with pytest.raises(TraceError, match="line 1"):
        build_report(Trace.parse('0.000\t0\t/state\t{"user": "a"}\n'))


def test_empty_trace_gives_zero_report():
    rep = build_report(Trace.parse(""))
    assert rep.wait == {} and rep.gestures_placed == 0
    assert "mean\t0.000" in rep.text()


def test_validate_data(capsys):
    assert main(["validate-data"]) == 0
    out = capsys.readouterr().out
    assert "all schedulable" in out and "macro-F 0.9" in out
