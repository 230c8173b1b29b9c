"""Run configuration: flat ``key = value`` files layered over bundled defaults."""

from __future__ import annotations

from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

DATA_DIR = Path(str(resources.files("barsim") / "data"))
DEFAULT_CONFIG = DATA_DIR / "default.cfg"

PATH_KEYS = (
    "graph_path",
    "recipes_path",
    "rules_path",
    "corpus_path",
    "positive_lexicon",
    "negative_lexicon",
    "news_path",
    "utilities_path",
    "profiles_path",
)
# files that may legitimately be absent at startup
OPTIONAL_PATHS = ("profiles_path",)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario_path: Path | None = None
    trace_out: Path | None = None
    profiles_out: Path | None = None
    seed: int = 0
    noise_enabled: bool = True
    arms: int = 2

    graph_path: Path = DATA_DIR / "graph.tsv"
    recipes_path: Path = DATA_DIR / "recipes.txt"
    rules_path: Path = DATA_DIR / "rules.tsv"
    corpus_path: Path = DATA_DIR / "corpus.tsv"
    positive_lexicon: Path = DATA_DIR / "positive.txt"
    negative_lexicon: Path = DATA_DIR / "negative.txt"
    news_path: Path = DATA_DIR / "news.tsv"
    utilities_path: Path = DATA_DIR / "utilities.tsv"
    profiles_path: Path = DATA_DIR / "profiles.jsonl"

    weight_wait: float = 1.0
    weight_group: float = 0.5
    weight_arrival: float = 0.5
    claim_bonus: float = 2.0
    cr_threshold: float = 0.6
    low_engagement_threshold: float = 0.4
    missing_rating_positive: bool = True
    confidence_lo: float = 0.5
    confidence_hi: float = 1.0
    delete_order_recall: float = 0.9
    fusion_pose: float = 1.0
    fusion_valence: float = 1.0
    fusion_mood: float = 1.0
    fusion_sentiment: float = 1.0

    react_s: float = 0.5
    speech_s: float = 2.0
    greet_timeout_s: float = 4.0
    handover_s: float = 2.0
    oos_timeout_s: float = 60.0
    gesture_s: float = 1.5
    typing_s: float = 1.0
    interactive_user: str = "guest"
    interactive_persona: str = "unspecified"

    @property
    def fusion_weights(self) -> dict[str, float]:
        return {
            "pose": self.fusion_pose,
            "valence": self.fusion_valence,
            "mood": self.fusion_mood,
            "sentiment": self.fusion_sentiment,
        }

    def check_paths(self) -> None:
        for key in PATH_KEYS:
            p = getattr(self, key)
            if key not in OPTIONAL_PATHS and not Path(p).is_file():
                raise ConfigError(f"{key}: file not found: {p}")
        if self.scenario_path is not None and not Path(self.scenario_path).is_file():
            raise ConfigError(f"scenario_path: file not found: {self.scenario_path}")


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str, base: Path):
    kind = _TYPES[key]
    if "Path" in str(kind):
        p = Path(raw).expanduser()
        return p if p.is_absolute() else base / p
    if kind in ("bool", bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if kind in ("int", int):
        return int(raw)
    if kind in ("float", float):
        return float(raw)
    return raw


def parse_config(text: str, base: Path, cfg: RunConfig | None = None, source: str = "<config>") -> RunConfig:
    cfg = cfg or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            setattr(cfg, key, _coerce(key, value, base))
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return cfg


def load_config(path: str | Path | None = None) -> RunConfig:
    """Bundled defaults, overridden by ``path`` when given."""
    cfg = parse_config(DEFAULT_CONFIG.read_text(encoding="utf-8"), DATA_DIR, source=str(DEFAULT_CONFIG))
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        cfg = parse_config(p.read_text(encoding="utf-8"), p.parent, cfg, str(p))
    return cfg
