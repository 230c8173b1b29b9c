import pytest

from barsim.config import DATA_DIR
from barsim.fusion import EngagementEstimate, FusionError, Lexicon, fuse, is_low_engagement, sentiment


@pytest.fixture(scope="module")
def lexicon():
    return Lexicon.load(DATA_DIR / "positive.txt", DATA_DIR / "negative.txt")


def test_sentiment_counts_words(lexicon):
    assert sentiment("this is great, I love it", lexicon) == "positive"
    assert sentiment("awful and boring", lexicon) == "negative"
    assert sentiment("a glass of water", lexicon) == "neutral"


def test_fuse_is_weighted_mean_of_present_components():
    e = fuse(pose=0.8, valence=0.0, mood="calm", sent="positive")
    assert e.score == pytest.approx((0.8 + 0.5 + 0.4 + 1.0) / 4)
    assert fuse(pose=0.3).score == 0.3
    w = {"pose": 3.0, "valence": 1.0, "mood": 0.0, "sentiment": 0.0}
    assert fuse(pose=1.0, valence=-1.0, mood="pacey", weights=w).score == pytest.approx(0.75)


def test_fuse_errors():
    with pytest.raises(FusionError):
        fuse()
    with pytest.raises(FusionError):
        fuse(pose=1.2)
    with pytest.raises(FusionError):
        fuse(valence=-1.5)
    with pytest.raises(FusionError):
        fuse(pose=0.5, weights={"pose": 0.0})
    with pytest.raises(FusionError):
        fuse(pose=0.5, weights={"pose": -1.0})


def test_low_engagement_is_strict():
    assert is_low_engagement(EngagementEstimate(0.39))
    assert not is_low_engagement(EngagementEstimate(0.4))
    assert is_low_engagement(EngagementEstimate(0.5), threshold=0.6)
