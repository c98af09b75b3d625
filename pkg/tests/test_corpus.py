from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kvbench.corpus import (
    Gender,
    GeneratorProfile,
    assert_open_set,
    corpus_stats,
    generate_synthetic_corpus,
    parse_corpus,
    parse_key,
    serialize_corpus,
    serialize_key,
    subjects_from_key,
)
from kvbench.errors import ParseError, ValidationError

from conftest import NARROW_PROFILE, make_session


class TestParse:
    def test_single_row(self):
        text = "subject_id,session_id,key_code,press_ms,release_ms\ns1,sess1,65,100,180\n"
        corpus = parse_corpus(text, "development")
        assert corpus.n_subjects == 1
        assert corpus.n_sessions == 1
        (event,) = corpus.sessions["sess1"].events
        assert event.key_code == 65
        assert event.release_ms - event.press_ms == 80

    def test_release_before_press_rejected(self):
        text = "subject_id,session_id,key_code,press_ms,release_ms\ns1,sess1,65,100,50\n"
        with pytest.raises(ValidationError, match="line 2"):
            parse_corpus(text, "development")

    def test_key_code_out_of_range_rejected(self):
        text = "subject_id,session_id,key_code,press_ms,release_ms\ns1,sess1,300,100,180\n"
        with pytest.raises(ValidationError, match="key_code"):
            parse_corpus(text, "development")

    def test_malformed_row_names_line(self):
        text = "subject_id,session_id,key_code,press_ms,release_ms\ns1,sess1,65,abc,180\n"
        with pytest.raises(ParseError, match="line 2"):
            parse_corpus(text, "development")

    def test_duplicate_session_rejected(self):
        text = (
            "subject_id,session_id,key_code,press_ms,release_ms\n"
            "s1,a,65,0,10\n"
            "s1,b,65,0,10\n"
            "s1,a,66,20,30\n"
        )
        with pytest.raises(ParseError, match="duplicate session"):
            parse_corpus(text, "development")

    def test_unsorted_press_times_rejected(self):
        text = (
            "subject_id,session_id,key_code,press_ms,release_ms\n"
            "s1,a,65,100,110\n"
            "s1,a,66,50,60\n"
        )
        with pytest.raises(ValidationError, match="sorted"):
            parse_corpus(text, "development")

    def test_evaluation_requires_blank_subject(self):
        text = "subject_id,session_id,key_code,press_ms,release_ms\ns1,a,65,0,10\n"
        with pytest.raises(ParseError, match="blank"):
            parse_corpus(text, "evaluation")

    def test_development_requires_subject(self):
        text = "subject_id,session_id,key_code,press_ms,release_ms\n,a,65,0,10\n"
        with pytest.raises(ParseError, match="subject_id"):
            parse_corpus(text, "development")

    def test_subject_count_reported(self):
        corpus, _ = generate_synthetic_corpus(23, 15, seed=4, profile=NARROW_PROFILE)
        reparsed = parse_corpus(serialize_corpus(corpus), "development")
        assert reparsed.n_subjects == 23


class TestRoundTrip:
    def test_development_round_trip(self):
        corpus, _ = generate_synthetic_corpus(4, 16, seed=9, profile=NARROW_PROFILE)
        assert parse_corpus(serialize_corpus(corpus), "development") == corpus

    def test_evaluation_round_trip_with_key(self):
        corpus, key = generate_synthetic_corpus(
            4, 15, seed=9, profile=NARROW_PROFILE, kind="evaluation"
        )
        assert parse_corpus(serialize_corpus(corpus), "evaluation") == corpus
        assert parse_key(serialize_key(key)) == key

    @settings(max_examples=25, deadline=None)
    @given(st.data())
    def test_round_trip_random_sessions(self, data):
        n_sessions = data.draw(st.integers(1, 4))
        subjects = []
        for s in range(data.draw(st.integers(1, 3))):
            sessions = []
            for k in range(n_sessions):
                events = []
                t = 0
                for _ in range(data.draw(st.integers(1, 6))):
                    t += data.draw(st.integers(0, 500))
                    hold = data.draw(st.integers(0, 400))
                    events.append((data.draw(st.integers(0, 255)), t, t + hold))
                sessions.append(make_session(f"s{s}-{k}", events))
            subjects.append((f"subj{s}", sessions))
        from kvbench.corpus import Corpus, SubjectRecord

        corpus = Corpus.from_subjects(
            SubjectRecord(sid, Gender.UNSPECIFIED, None, tuple(sess)) for sid, sess in subjects
        )
        assert parse_corpus(serialize_corpus(corpus), "development") == corpus

    def test_event_order_preserved(self):
        sess = make_session("x", [(65, 0, 30), (66, 10, 20), (67, 10, 50)])
        from kvbench.corpus import Corpus, SubjectRecord

        corpus = Corpus.from_subjects([SubjectRecord("s", Gender.UNSPECIFIED, None, (sess,))])
        reparsed = parse_corpus(serialize_corpus(corpus), "development")
        assert reparsed.sessions["x"].events == sess.events


class TestStats:
    def test_two_session_stats(self):
        a = make_session("a", [(65, i * 10, i * 10 + 5) for i in range(40)])
        b = make_session("b", [(65, i * 10, i * 10 + 5) for i in range(60)])
        from kvbench.corpus import Corpus

        stats = corpus_stats(Corpus.from_sessions([a, b]))
        assert stats.events_per_session_mean == 50
        assert stats.events_per_session_std == 10  # population convention

    def test_single_session(self):
        sess = make_session("a", [(65, i * 10, i * 10 + 5) for i in range(48)])
        from kvbench.corpus import Corpus

        stats = corpus_stats(Corpus.from_sessions([sess]))
        assert stats.events_per_session_mean == 48
        assert stats.events_per_session_std == 0

    def test_generator_hits_target_session_length(self):
        corpus, _ = generate_synthetic_corpus(67, 15, seed=3)  # 1,005 sessions
        stats = corpus_stats(corpus)
        # oracle: the generator draws lengths from the profile's normal law
        assert abs(stats.events_per_session_mean - 48.65) <= 1.0


class TestGenerator:
    def test_determinism(self):
        a = generate_synthetic_corpus(2, 15, seed=7, profile=NARROW_PROFILE)[0]
        b = generate_synthetic_corpus(2, 15, seed=7, profile=NARROW_PROFILE)[0]
        assert serialize_corpus(a) == serialize_corpus(b)

    def test_different_seeds_differ(self):
        a = generate_synthetic_corpus(2, 15, seed=7)[0]
        b = generate_synthetic_corpus(2, 15, seed=8)[0]
        assert serialize_corpus(a) != serialize_corpus(b)

    def test_counts(self):
        corpus, _ = generate_synthetic_corpus(100, 15, seed=1)
        assert corpus.n_subjects == 100
        assert corpus.n_sessions == 1500

    def test_development_minimum_sessions(self):
        with pytest.raises(ValidationError):
            generate_synthetic_corpus(2, 14, seed=1)

    def test_evaluation_fixed_sessions(self):
        with pytest.raises(ValidationError):
            generate_synthetic_corpus(2, 16, seed=1, kind="evaluation")
        corpus, key = generate_synthetic_corpus(3, 15, seed=1, kind="evaluation")
        per_subject: dict[str, int] = {}
        for rec in key.records.values():
            per_subject[rec.subject_id] = per_subject.get(rec.subject_id, 0) + 1
        assert set(per_subject.values()) == {15}

    def test_invalid_profile_rejected(self):
        with pytest.raises(ValidationError, match="hold_median_ms"):
            generate_synthetic_corpus(2, 15, seed=1, profile=GeneratorProfile(hold_median_ms=-1))

    def test_zero_subjects_rejected(self):
        with pytest.raises(ValidationError):
            generate_synthetic_corpus(0, 15, seed=1)

    def test_open_set_against_development(self):
        dev, _ = generate_synthetic_corpus(5, 15, seed=2, profile=NARROW_PROFILE)
        _, key = generate_synthetic_corpus(5, 15, seed=2, profile=NARROW_PROFILE, kind="evaluation")
        assert_open_set(dev, key)

    def test_profile_mapping_round_trip(self):
        profile = GeneratorProfile(age_min=20, age_max=59, hold_median_ms=101.5)
        assert GeneratorProfile.from_mapping(profile.to_mapping()) == profile


class TestKeyFile:
    def test_key_mismatch_detected(self, eval_pack):
        corpus, key, _ = eval_pack
        broken = dict(key.records)
        broken.pop(next(iter(broken)))
        from kvbench.corpus import EvaluationKey

        with pytest.raises(ValidationError, match="does not match"):
            subjects_from_key(corpus, EvaluationKey(broken))

    def test_subjects_carry_demographics(self, eval_pack):
        _, _, subjects = eval_pack
        assert all(s.gender in (Gender.FEMALE, Gender.MALE) for s in subjects)
        assert all(s.age_years is not None and s.age_years > 0 for s in subjects)
        assert all(s.n_sessions == 15 for s in subjects)

    def test_bad_gender_rejected(self):
        text = "session_id,subject_id,gender,age\ne1,u1,robot,30\n"
        with pytest.raises(ParseError, match="gender"):
            parse_key(text)

    def test_nonpositive_age_rejected(self):
        text = "session_id,subject_id,gender,age\ne1,u1,female,0\n"
        with pytest.raises(ValidationError, match="age"):
            parse_key(text)
