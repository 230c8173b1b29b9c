"""Engagement fusion over pose, facial valence, voice mood and text sentiment."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

MOOD_SCORE = {"pacey": 0.8, "neutral": 0.5, "calm": 0.4}
SENTIMENT_SCORE = {"positive": 1.0, "neutral": 0.5, "negative": 0.0}
COMPONENTS = ("pose", "valence", "mood", "sentiment")
DEFAULT_WEIGHTS = {c: 1.0 for c in COMPONENTS}
DEFAULT_LOW_THRESHOLD = 0.4

_WORD = re.compile(r"[a-z']+")


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class Lexicon:
    positive: frozenset[str]
    negative: frozenset[str]

    @classmethod
    def load(cls, positive_path: str | Path, negative_path: str | Path) -> "Lexicon":
        def words(p):
            return frozenset(
                w.strip().lower()
                for w in Path(p).read_text(encoding="utf-8").splitlines()
                if w.strip() and not w.startswith("#")
            )

        return cls(words(positive_path), words(negative_path))


def sentiment(text: str, lexicon: Lexicon) -> str:
    tokens = _WORD.findall(text.lower())
    score = sum(t in lexicon.positive for t in tokens) - sum(t in lexicon.negative for t in tokens)
    if score > 0:
        return "positive"
    if score < 0:
        return "negative"
    return "neutral"


@dataclass(frozen=True)
class EngagementEstimate:
    score: float
    components: Mapping[str, float] = field(default_factory=dict)
    at: float = 0.0


def fuse(
    pose: float | None = None,
    valence: float | None = None,
    mood: str | None = None,
    sent: str | None = None,
    weights: Mapping[str, float] | None = None,
    at: float = 0.0,
) -> EngagementEstimate:
    weights = DEFAULT_WEIGHTS if weights is None else weights
    if any(weights.get(c, 0.0) < 0 for c in COMPONENTS):
        raise FusionError("fusion weights must be non-negative")
    comps: dict[str, float] = {}
    if pose is not None:
        if not 0.0 <= pose <= 1.0:
            raise FusionError(f"pose engagement {pose} outside [0, 1]")
        comps["pose"] = float(pose)
    if valence is not None:
        if not -1.0 <= valence <= 1.0:
            raise FusionError(f"valence {valence} outside [-1, 1]")
        comps["valence"] = (valence + 1.0) / 2.0
    if mood is not None:
        comps["mood"] = MOOD_SCORE[mood]
    if sent is not None:
        comps["sentiment"] = SENTIMENT_SCORE[sent]
    if not comps:
        raise FusionError("no engagement component present")
    total_w = sum(weights.get(c, 0.0) for c in comps)
    if total_w <= 0:
        raise FusionError(f"all weights of present components {sorted(comps)} are zero")
    score = sum(weights.get(c, 0.0) * x for c, x in comps.items()) / total_w
    # guard against a 1-ulp overshoot from the division
    return EngagementEstimate(min(1.0, max(0.0, score)), comps, at)


def is_low_engagement(e: EngagementEstimate, threshold: float = DEFAULT_LOW_THRESHOLD) -> bool:
    return e.score < threshold
