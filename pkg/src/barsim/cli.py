"""Command line: batch scenario runs, an interactive customer session, trace
reports and data validation."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, TextIO

from . import nlu
from .config import ConfigError, RunConfig, load_config
from .decision import DecisionError
from .beliefs import BeliefError, StoreError
from .orchestrator import DataBundle, INITIAL_WORLD, Orchestrator, run_scenario
from .percepts import USERS_TOPIC, PERCEPTS_TOPIC, ScenarioError, script_load
from .plansched import PlanError, plan_order, schedule
from .report import build_report
from .simbus import BusError, HandlerError, Message, Trace, TraceError, fmt_seconds, to_ms

log = logging.getLogger("barsim")

DEFAULT_TRACE = Path("trace.tsv")
LOAD_ERRORS = (ConfigError, ScenarioError, BeliefError, StoreError, DecisionError, PlanError, nlu.NluError, OSError, ValueError)


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "scenario", None) is not None:
        cfg.scenario_path = Path(args.scenario)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "no_noise", False):
        cfg.noise_enabled = False
    if getattr(args, "trace", None) is not None:
        cfg.trace_out = Path(args.trace)
    return cfg


def cmd_run(args, out: TextIO | None = None) -> int:
    out = out or sys.stdout
    try:
        cfg = _config(args)
        if cfg.scenario_path is None:
            raise ConfigError("no scenario given (--scenario or scenario_path)")
        data = DataBundle.load(cfg)
        scenario = script_load(cfg.scenario_path)
    except LOAD_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        orch = run_scenario(cfg, scenario, data)
    except (HandlerError, BusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    trace_path = cfg.trace_out or DEFAULT_TRACE
    orch.bus.trace.write(trace_path)
    if cfg.profiles_out is not None:
        orch.store.persist(cfg.profiles_out)
    out.write(build_report(orch.bus.trace).text())
    print(f"trace written to {trace_path}", file=sys.stderr)
    return 0


def cmd_report(args, out: TextIO | None = None) -> int:
    out = out or sys.stdout
    try:
        trace = Trace.read(args.trace)
        out.write(build_report(trace).text())
    except (TraceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def cmd_validate(args, out: TextIO | None = None) -> int:
    out = out or sys.stdout
    try:
        cfg = _config(args)
        data = DataBundle.load(cfg)
        corpus = nlu.load_corpus(cfg.corpus_path)
        for drink in data.graph.drinks:
            schedule([plan_order(drink, data.recipes, "check")], cfg.arms, INITIAL_WORLD)
    except LOAD_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out.write(f"graph\t{len(data.graph.drinks)} drinks\n")
    out.write(f"recipes\t{len(data.recipes)} drinks, all schedulable\n")
    out.write(f"profiles\t{len(data.store.users)} users\n")
    out.write(f"news\t{len(data.feed.items)} items in {len(data.feed.categories)} categories\n")
    out.write(f"nlu\t{len(data.classifier.rules)} rules, macro-F {nlu.evaluate(data.classifier, corpus):.3f} on {len(corpus)} utterances\n")
    return 0


# ---------------------------------------------------------------- interactive


def describe(m: Message, user: str) -> str | None:
    """One line for what the customer would see or hear, or None."""
    p = m.payload
    t = f"[{fmt_seconds(m.due_ms):>8}]"
    if m.topic == "/speech" and p["user"] == user:
        return f"{t} robot: {p['text']}"
    if m.topic == "/face" and p["user"] == user:
        what = p.get("expression") or p.get("text") or ""
        return f"{t} (face {p['kind']} {what})".rstrip() if what else f"{t} (face {p['kind']})"
    if m.topic == "/arms" and p["phase"] != "end":
        return f"{t} (arm {p['arm']} {p['phase']} {p['action']})"
    if m.topic == "/state" and p["user"] == user:
        return f"{t} <{p['old']} -> {p['new']}>"
    return None


class InteractiveSession:
    """One typed customer against the full pipeline.

    The bus is stepped until the robot expects a reply from the customer (or
    has nothing left to do); then a line is read and published as an utterance
    ``typing_s`` later. ``/quit`` or end of input makes the customer leave.
    """

    def __init__(self, cfg: RunConfig, data: DataBundle, read: Callable[[], str | None], out: TextIO):
        self.cfg = cfg
        self.orch = Orchestrator(cfg, data)
        self.user = cfg.interactive_user
        self.read = read
        self.out = out
        bus = self.orch.bus
        if cfg.interactive_persona != "unspecified":
            bus.publish(USERS_TOPIC, {"kind": "register", "user": self.user,
                                      "persona": cfg.interactive_persona, "channel": "totem"})
        bus.publish(USERS_TOPIC, {"kind": "user-seen", "user": self.user})

    def _gone(self) -> bool:
        st = self.orch.states.get(self.user)
        return st is not None and st.state.value == "GONE"

    def _show(self, m: Message) -> None:
        line = describe(m, self.user)
        if line:
            print(line, file=self.out)

    def _flush_until(self, t_ms: int) -> None:
        bus = self.orch.bus
        while bus.pending and bus.next_due_ms() <= t_ms:
            self._show(bus.step())

    def _advance(self) -> None:
        """Dispatch until a reply is expected, the customer is gone, or the queue drains."""
        bus = self.orch.bus
        while bus.pending and not self._gone():
            m = bus.step()
            self._show(m)
            if m.topic == "/speech" and m.payload["user"] == self.user and m.payload["expects_reply"]:
                self._flush_until(bus.now_ms)
                return
        if self._gone():
            # let the robot finish what it was saying
            self._flush_until(bus.now_ms + to_ms(self.cfg.react_s))

    def run(self) -> int:
        bus = self.orch.bus
        while True:
            self._advance()
            if self._gone():
                break
            text = self.read()
            if text is None or text.strip() == "/quit":
                bus.publish(USERS_TOPIC, {"kind": "leave", "user": self.user})
                self._advance()
                break
            if not text.strip():
                continue
            bus.publish(PERCEPTS_TOPIC, {"kind": "utterance", "user": self.user, "text": text.strip()}, self.cfg.typing_s)
        print(f"[{fmt_seconds(bus.now_ms):>8}] session over", file=self.out)
        return 0


def _stdin_reader(prompt: str) -> Callable[[], str | None]:
    def read() -> str | None:
        try:
            return input(prompt)
        except EOFError:
            return None

    return read


def cmd_interactive(args, out: TextIO | None = None, read: Callable[[], str | None] | None = None) -> int:
    out = out or sys.stdout
    try:
        cfg = _config(args)
        data = DataBundle.load(cfg)
    except LOAD_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    session = InteractiveSession(cfg, data, read or _stdin_reader(f"{cfg.interactive_user}> "), out)
    code = session.run()
    if cfg.trace_out is not None:
        session.orch.bus.trace.write(cfg.trace_out)
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="barsim", description="Simulated robot bartender.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario script to completion")
    run.add_argument("--scenario", required=True)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--no-noise", action="store_true", help="deliver true intents at confidence 1")
    run.add_argument("--config")
    run.add_argument("--trace", help=f"trace output path (default {DEFAULT_TRACE})")
    run.set_defaults(func=cmd_run)

    inter = sub.add_parser("interactive", help="play one customer from the keyboard")
    inter.add_argument("--config")
    inter.set_defaults(func=cmd_interactive)

    rep = sub.add_parser("report", help="summarize a trace file")
    rep.add_argument("--trace", required=True)
    rep.set_defaults(func=cmd_report)

    val = sub.add_parser("validate-data", help="load and cross-check all data files")
    val.add_argument("--config")
    val.set_defaults(func=cmd_validate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
