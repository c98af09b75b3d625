from __future__ import annotations

import pytest

from kvbench.corpus import (
    CorpusKind,
    GeneratorProfile,
    KeystrokeEvent,
    Session,
    generate_synthetic_corpus,
    subjects_from_key,
)

# Two age bins x two genders keeps every demographic pool comfortably above
# the 10-impostor minimum even for small test corpora.
NARROW_PROFILE = GeneratorProfile(age_min=20, age_max=39)


def make_session(session_id: str, rows) -> Session:
    """rows: iterable of (key_code, press_ms, release_ms)."""
    return Session.from_events(session_id, [KeystrokeEvent(*r) for r in rows])


@pytest.fixture(scope="session")
def dev_corpus():
    corpus, _ = generate_synthetic_corpus(30, 15, seed=11, profile=NARROW_PROFILE)
    return corpus


@pytest.fixture(scope="session")
def eval_pack():
    corpus, key = generate_synthetic_corpus(
        80, 15, seed=12, profile=NARROW_PROFILE, kind=CorpusKind.EVALUATION
    )
    return corpus, key, subjects_from_key(corpus, key)
