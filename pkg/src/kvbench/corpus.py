"""Keystroke corpus model, text serialization, and seeded synthetic generation.

Timestamps are integer milliseconds relative to session start. Development
corpora group sessions by subject; evaluation corpora are a flat pool of
anonymous sessions whose session-to-subject ground truth lives in a separate
key file, so scoring code never sees identities.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import IO, Iterable, Iterator, Mapping, NamedTuple

import numpy as np

from .errors import ParseError, ValidationError

CORPUS_HEADER = "subject_id,session_id,key_code,press_ms,release_ms"
KEY_HEADER = "session_id,subject_id,gender,age"


class Gender(str, Enum):
    FEMALE = "female"
    MALE = "male"
    UNSPECIFIED = "other"


class CorpusKind(str, Enum):
    DEVELOPMENT = "development"
    EVALUATION = "evaluation"


class KeystrokeEvent(NamedTuple):
    """One key press/release pair; times in ms since session start."""

    key_code: int
    press_ms: int
    release_ms: int


class Session:
    """One acquisition session: events ordered by press time.

    Events are stored as parallel int64 arrays; `events` materializes
    KeystrokeEvent tuples on demand for row-level access.
    """

    __slots__ = ("session_id", "key_codes", "press_ms", "release_ms")

    def __init__(
        self,
        session_id: str,
        key_codes: np.ndarray,
        press_ms: np.ndarray,
        release_ms: np.ndarray,
        validate: bool = True,
    ):
        self.session_id = session_id
        self.key_codes = np.asarray(key_codes, dtype=np.int64)
        self.press_ms = np.asarray(press_ms, dtype=np.int64)
        self.release_ms = np.asarray(release_ms, dtype=np.int64)
        if validate:
            self._validate()

    @classmethod
    def from_events(cls, session_id: str, events: Iterable[KeystrokeEvent]) -> "Session":
        rows = [(e[0], e[1], e[2]) for e in events]
        if not rows:
            raise ValidationError(f"session {session_id!r} has no events")
        arr = np.asarray(rows, dtype=np.int64)
        return cls(session_id, arr[:, 0], arr[:, 1], arr[:, 2])

    def _validate(self) -> None:
        n = self.press_ms.size
        if n == 0:
            raise ValidationError(f"session {self.session_id!r} has no events")
        if not (self.key_codes.size == n == self.release_ms.size):
            raise ValidationError(f"session {self.session_id!r} has ragged event arrays")
        if np.any((self.key_codes < 0) | (self.key_codes > 255)):
            raise ValidationError(f"session {self.session_id!r}: key_code outside [0, 255]")
        if np.any(self.press_ms < 0):
            raise ValidationError(f"session {self.session_id!r}: negative press time")
        if np.any(self.release_ms < self.press_ms):
            raise ValidationError(f"session {self.session_id!r}: release before press")
        if n > 1 and np.any(np.diff(self.press_ms) < 0):
            raise ValidationError(f"session {self.session_id!r}: events not sorted by press time")

    @property
    def n_events(self) -> int:
        return int(self.press_ms.size)

    @property
    def events(self) -> list[KeystrokeEvent]:
        return [
            KeystrokeEvent(int(k), int(p), int(r))
            for k, p, r in zip(self.key_codes, self.press_ms, self.release_ms)
        ]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Session):
            return NotImplemented
        return (
            self.session_id == other.session_id
            and np.array_equal(self.key_codes, other.key_codes)
            and np.array_equal(self.press_ms, other.press_ms)
            and np.array_equal(self.release_ms, other.release_ms)
        )

    def __hash__(self) -> int:  # identity by session_id; arrays are immutable by convention
        return hash(self.session_id)

    def __repr__(self) -> str:
        return f"Session({self.session_id!r}, n_events={self.n_events})"


@dataclass(frozen=True)
class SubjectRecord:
    """A subject with self-reported demographics and owned sessions.

    Development corpus files carry no demographics, so subjects parsed from
    them have gender UNSPECIFIED and age None; evaluation subjects rebuilt
    from a key file always carry both.
    """

    subject_id: str
    gender: Gender
    age_years: int | None
    sessions: tuple[Session, ...]

    @property
    def session_ids(self) -> tuple[str, ...]:
        return tuple(s.session_id for s in self.sessions)

    @property
    def n_sessions(self) -> int:
        return len(self.sessions)


@dataclass(frozen=True)
class Corpus:
    """A development (by-subject) or evaluation (flat anonymous) corpus."""

    kind: CorpusKind
    subjects: tuple[SubjectRecord, ...] | None
    sessions: dict[str, Session]

    @classmethod
    def from_subjects(cls, subjects: Iterable[SubjectRecord]) -> "Corpus":
        """Build a development corpus; sorts subjects and sessions by id."""
        canon = []
        for subj in sorted(subjects, key=lambda s: s.subject_id):
            canon.append(replace(subj, sessions=tuple(sorted(subj.sessions, key=lambda x: x.session_id))))
        canon = tuple(canon)
        _check_unique("subject_id", [s.subject_id for s in canon])
        session_map = {sess.session_id: sess for subj in canon for sess in subj.sessions}
        _check_unique("session_id", [sess.session_id for subj in canon for sess in subj.sessions])
        return cls(CorpusKind.DEVELOPMENT, canon, session_map)

    @classmethod
    def from_sessions(cls, sessions: Iterable[Session]) -> "Corpus":
        """Build an evaluation corpus from anonymous sessions, sorted by id."""
        ordered = sorted(sessions, key=lambda s: s.session_id)
        _check_unique("session_id", [s.session_id for s in ordered])
        return cls(CorpusKind.EVALUATION, None, {s.session_id: s for s in ordered})

    @property
    def n_sessions(self) -> int:
        return len(self.sessions)

    @property
    def n_subjects(self) -> int | None:
        return None if self.subjects is None else len(self.subjects)


class KeyRecord(NamedTuple):
    """Ground-truth identity and demographics of one evaluation session."""

    subject_id: str
    gender: Gender
    age_years: int


@dataclass(frozen=True)
class EvaluationKey:
    """session_id -> KeyRecord map distributed separately from the corpus."""

    records: dict[str, KeyRecord]

    @property
    def subject_ids(self) -> tuple[str, ...]:
        return tuple(sorted({r.subject_id for r in self.records.values()}))


def _check_unique(label: str, values: list[str]) -> None:
    seen: set[str] = set()
    for v in values:
        if v in seen:
            raise ValidationError(f"duplicate {label} {v!r}")
        seen.add(v)


# ---------------------------------------------------------------------------
# Parsing / serialization
# ---------------------------------------------------------------------------


def _iter_lines(source: str | bytes | IO) -> Iterator[str]:
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        yield from source.splitlines()
        return
    for line in source:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        yield line.rstrip("\n")


def parse_corpus(source: str | bytes | IO, kind: CorpusKind | str) -> Corpus:
    """Parse the neutral corpus text format into a validated Corpus.

    Development rows carry a subject_id; evaluation rows must leave it
    blank. Lines starting with '#' are ignored. Errors name the offending
    line number.
    """
    kind = CorpusKind(kind)
    header_seen = False
    # current group state
    cur_subject: str | None = None
    cur_session: str | None = None
    keys: list[int] = []
    presses: list[int] = []
    releases: list[int] = []
    closed_sessions: set[str] = set()
    closed_subjects: set[str] = set()
    sessions_by_subject: dict[str, list[Session]] = {}
    flat_sessions: list[Session] = []

    def flush(lineno: int) -> None:
        nonlocal keys, presses, releases
        if cur_session is None:
            return
        press_arr = np.asarray(presses, dtype=np.int64)
        if press_arr.size > 1 and np.any(np.diff(press_arr) < 0):
            raise ValidationError(
                f"line {lineno}: session {cur_session!r} events not sorted by press_ms"
            )
        sess = Session(cur_session, np.asarray(keys), press_arr, np.asarray(releases), validate=False)
        try:
            sess._validate()
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
        if kind is CorpusKind.DEVELOPMENT:
            sessions_by_subject.setdefault(cur_subject or "", []).append(sess)
        else:
            flat_sessions.append(sess)
        closed_sessions.add(cur_session)
        keys, presses, releases = [], [], []

    lineno = 0
    for lineno, raw in enumerate(_iter_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if line != CORPUS_HEADER:
                raise ParseError(f"expected header {CORPUS_HEADER!r}, got {line!r}", lineno)
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", lineno)
        subject_id, session_id, key_s, press_s, release_s = (p.strip() for p in parts)
        if kind is CorpusKind.DEVELOPMENT and not subject_id:
            raise ParseError("development rows need a subject_id", lineno)
        if kind is CorpusKind.EVALUATION and subject_id:
            raise ParseError("evaluation rows must leave subject_id blank", lineno)
        if not session_id:
            raise ParseError("missing session_id", lineno)
        try:
            key_code, press_ms, release_ms = int(key_s), int(press_s), int(release_s)
        except ValueError:
            raise ParseError(f"non-integer event fields {key_s!r},{press_s!r},{release_s!r}", lineno) from None
        if not 0 <= key_code <= 255:
            raise ValidationError(f"line {lineno}: key_code {key_code} outside [0, 255]")
        if press_ms < 0:
            raise ValidationError(f"line {lineno}: negative press_ms {press_ms}")
        if release_ms < press_ms:
            raise ValidationError(
                f"line {lineno}: release_ms {release_ms} earlier than press_ms {press_ms}"
            )
        if (subject_id, session_id) != (cur_subject, cur_session):
            flush(lineno)
            if session_id in closed_sessions:
                raise ParseError(f"duplicate session {session_id!r} (rows not contiguous)", lineno)
            if kind is CorpusKind.DEVELOPMENT:
                if subject_id != cur_subject and subject_id in closed_subjects:
                    raise ParseError(f"duplicate subject {subject_id!r} (rows not contiguous)", lineno)
                if cur_subject is not None and subject_id != cur_subject:
                    closed_subjects.add(cur_subject)
            cur_subject, cur_session = subject_id, session_id
        keys.append(key_code)
        presses.append(press_ms)
        releases.append(release_ms)
    if not header_seen:
        raise ParseError("empty input: missing header line", max(lineno, 1))
    flush(lineno)
    if kind is CorpusKind.DEVELOPMENT:
        if not sessions_by_subject:
            raise ParseError("no event rows", lineno)
        subjects = [
            SubjectRecord(sid, Gender.UNSPECIFIED, None, tuple(sess_list))
            for sid, sess_list in sessions_by_subject.items()
        ]
        return Corpus.from_subjects(subjects)
    if not flat_sessions:
        raise ParseError("no event rows", lineno)
    return Corpus.from_sessions(flat_sessions)


def serialize_corpus(corpus: Corpus, comments: Mapping[str, object] | None = None) -> str:
    """Render a corpus in the neutral text format (canonically sorted)."""
    out: list[str] = []
    if comments:
        out.extend(f"# {k}={v}" for k, v in comments.items())
    out.append(CORPUS_HEADER)
    if corpus.kind is CorpusKind.DEVELOPMENT:
        assert corpus.subjects is not None
        groups = [(subj.subject_id, sess) for subj in corpus.subjects for sess in subj.sessions]
    else:
        groups = [("", sess) for sess in corpus.sessions.values()]
    for subject_id, sess in groups:
        prefix = f"{subject_id},{sess.session_id},"
        out.extend(
            prefix + f"{k},{p},{r}"
            for k, p, r in zip(sess.key_codes, sess.press_ms, sess.release_ms)
        )
    out.append("")
    return "\n".join(out)


def parse_key(source: str | bytes | IO) -> EvaluationKey:
    """Parse an evaluation key file (session -> subject, gender, age)."""
    header_seen = False
    records: dict[str, KeyRecord] = {}
    lineno = 0
    for lineno, raw in enumerate(_iter_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if line != KEY_HEADER:
                raise ParseError(f"expected header {KEY_HEADER!r}, got {line!r}", lineno)
            header_seen = True
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise ParseError(f"expected 4 fields, got {len(parts)}", lineno)
        session_id, subject_id, gender_s, age_s = parts
        if not session_id or not subject_id:
            raise ParseError("missing session_id or subject_id", lineno)
        if session_id in records:
            raise ParseError(f"duplicate session {session_id!r}", lineno)
        try:
            gender = Gender(gender_s)
        except ValueError:
            raise ParseError(f"unknown gender {gender_s!r}", lineno) from None
        try:
            age = int(age_s)
        except ValueError:
            raise ParseError(f"non-integer age {age_s!r}", lineno) from None
        if age <= 0:
            raise ValidationError(f"line {lineno}: age must be positive, got {age}")
        records[session_id] = KeyRecord(subject_id, gender, age)
    if not header_seen:
        raise ParseError("empty input: missing header line", max(lineno, 1))
    if not records:
        raise ParseError("no key rows", lineno)
    return EvaluationKey(dict(sorted(records.items())))


def serialize_key(key: EvaluationKey, comments: Mapping[str, object] | None = None) -> str:
    out: list[str] = []
    if comments:
        out.extend(f"# {k}={v}" for k, v in comments.items())
    out.append(KEY_HEADER)
    for session_id, rec in sorted(key.records.items()):
        out.append(f"{session_id},{rec.subject_id},{rec.gender.value},{rec.age_years}")
    out.append("")
    return "\n".join(out)


def subjects_from_key(corpus: Corpus, key: EvaluationKey) -> tuple[SubjectRecord, ...]:
    """Join an evaluation corpus with its key file into SubjectRecords."""
    if corpus.kind is not CorpusKind.EVALUATION:
        raise ValidationError("subjects_from_key needs an evaluation corpus")
    missing = [sid for sid in corpus.sessions if sid not in key.records]
    extra = [sid for sid in key.records if sid not in corpus.sessions]
    if missing or extra:
        raise ValidationError(
            f"key file does not match corpus: {len(missing)} sessions without key "
            f"(first: {missing[:3]}), {len(extra)} keys without session (first: {extra[:3]})"
        )
    grouped: dict[str, list[Session]] = {}
    demo: dict[str, tuple[Gender, int]] = {}
    for session_id, rec in key.records.items():
        grouped.setdefault(rec.subject_id, []).append(corpus.sessions[session_id])
        prev = demo.setdefault(rec.subject_id, (rec.gender, rec.age_years))
        if prev != (rec.gender, rec.age_years):
            raise ValidationError(f"subject {rec.subject_id!r} has inconsistent demographics in key file")
    return tuple(
        SubjectRecord(sid, demo[sid][0], demo[sid][1], tuple(sorted(sess, key=lambda s: s.session_id)))
        for sid, sess in sorted(grouped.items())
    )


def assert_open_set(development: Corpus, evaluation_key: EvaluationKey) -> None:
    """Development and evaluation populations must not share subjects."""
    if development.subjects is None:
        raise ValidationError("open-set check needs a development corpus")
    dev_ids = {s.subject_id for s in development.subjects}
    shared = dev_ids.intersection(evaluation_key.subject_ids)
    if shared:
        raise ValidationError(f"subjects shared across development and evaluation: {sorted(shared)[:5]}")


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusStats:
    n_subjects: int | None
    n_sessions: int
    events_per_session_mean: float
    events_per_session_std: float  # population convention


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Session counts and the mean/std of characters typed per session."""
    if corpus.n_sessions == 0:
        raise ValidationError("empty corpus")
    counts = np.array([s.n_events for s in corpus.sessions.values()], dtype=np.float64)
    return CorpusStats(
        n_subjects=corpus.n_subjects,
        n_sessions=corpus.n_sessions,
        events_per_session_mean=float(counts.mean()),
        events_per_session_std=float(counts.std()),
    )


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorProfile:
    """Population parameters for the synthetic typing model.

    Each subject draws a persistent median hold time, median inter-press
    gap, and a jitter multiplier (log-normal, so strictly positive); events
    then draw log-normal times around the subject medians. Session lengths
    are normal draws rounded to a minimum of one event.
    """

    session_len_mean: float = 48.65
    session_len_std: float = 18.50
    hold_median_ms: float = 130.0
    gap_median_ms: float = 215.0
    hold_subject_sdlog: float = 0.35
    gap_subject_sdlog: float = 0.35
    hold_event_sdlog: float = 0.25
    gap_event_sdlog: float = 0.30
    jitter_subject_sdlog: float = 0.25
    gender_weights: tuple[tuple[Gender, float], ...] = ((Gender.FEMALE, 0.5), (Gender.MALE, 0.5))
    age_min: int = 18
    age_max: int = 69

    def validate(self) -> None:
        for name in ("session_len_mean", "hold_median_ms", "gap_median_ms"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"profile {name} must be positive")
        for name in (
            "session_len_std",
            "hold_subject_sdlog",
            "gap_subject_sdlog",
            "hold_event_sdlog",
            "gap_event_sdlog",
            "jitter_subject_sdlog",
        ):
            if getattr(self, name) < 0:
                raise ValidationError(f"profile {name} must be non-negative")
        weights = [w for _, w in self.gender_weights]
        if not weights or any(w < 0 for w in weights) or sum(weights) <= 0:
            raise ValidationError("gender_weights need non-negative weights with positive sum")
        if not 0 < self.age_min <= self.age_max:
            raise ValidationError("need 0 < age_min <= age_max")

    @classmethod
    def shared(cls, **overrides) -> "GeneratorProfile":
        """A degenerate profile: every subject types identically."""
        return cls(
            hold_subject_sdlog=0.0,
            gap_subject_sdlog=0.0,
            jitter_subject_sdlog=0.0,
            **overrides,
        )

    def to_mapping(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "gender_weights":
                out[f.name] = ",".join(f"{g.value}:{w:g}" for g, w in v)
            else:
                out[f.name] = f"{v:g}" if isinstance(v, float) else str(v)
        return out

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "GeneratorProfile":
        kwargs: dict[str, object] = {}
        known = {f.name: f for f in fields(cls)}
        for name, raw in mapping.items():
            if name not in known:
                raise ValidationError(f"unknown profile key {name!r}")
            if name == "gender_weights":
                pairs = []
                for chunk in raw.split(","):
                    g, _, w = chunk.partition(":")
                    try:
                        pairs.append((Gender(g.strip()), float(w)))
                    except ValueError:
                        raise ValidationError(f"bad gender_weights entry {chunk!r}") from None
                kwargs[name] = tuple(pairs)
            elif name in ("age_min", "age_max"):
                kwargs[name] = int(raw)
            else:
                kwargs[name] = float(raw)
        profile = cls(**kwargs)
        profile.validate()
        return profile


def load_profile(path) -> GeneratorProfile:
    """Read a flat key=value profile file."""
    mapping: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError(f"expected key=value, got {line!r}", lineno)
            mapping[key.strip()] = value.strip()
    return GeneratorProfile.from_mapping(mapping)


def save_profile(profile: GeneratorProfile, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in profile.to_mapping().items():
            fh.write(f"{k}={v}\n")


def _substream(seed: int, *parts: object) -> np.random.Generator:
    """Independent, platform-stable RNG substream keyed by (seed, parts)."""
    digest = hashlib.sha256("\x1f".join(map(str, (seed, *parts))).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:16], "little"))


def _draw_sessions(
    rng: np.random.Generator,
    n_sessions: int,
    profile: GeneratorProfile,
) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    mu_hold = profile.hold_median_ms * math.exp(rng.normal(0.0, profile.hold_subject_sdlog))
    mu_gap = profile.gap_median_ms * math.exp(rng.normal(0.0, profile.gap_subject_sdlog))
    jitter = math.exp(rng.normal(0.0, profile.jitter_subject_sdlog))
    sd_hold = profile.hold_event_sdlog * jitter
    sd_gap = profile.gap_event_sdlog * jitter

    lengths = rng.normal(profile.session_len_mean, profile.session_len_std, n_sessions)
    lengths = np.maximum(np.rint(lengths), 1.0).astype(np.int64)
    total = int(lengths.sum())

    holds = np.maximum(np.rint(mu_hold * np.exp(rng.normal(0.0, sd_hold, total))), 1.0).astype(np.int64)
    gaps = np.maximum(np.rint(mu_gap * np.exp(rng.normal(0.0, sd_gap, total))), 1.0).astype(np.int64)
    keys = rng.integers(32, 127, total)

    out = []
    offset = 0
    for n in lengths:
        sl = slice(offset, offset + int(n))
        press = np.concatenate(([0], np.cumsum(gaps[sl][1:])))
        release = press + holds[sl]
        out.append((keys[sl].copy(), press, release))
        offset += int(n)
    return out


def generate_synthetic_corpus(
    n_subjects: int,
    sessions_per_subject: int = 15,
    seed: int = 0,
    profile: GeneratorProfile | None = None,
    kind: CorpusKind | str = CorpusKind.DEVELOPMENT,
) -> tuple[Corpus, EvaluationKey | None]:
    """Generate a deterministic synthetic corpus.

    Development corpora need >= 15 sessions per subject; evaluation corpora
    are fixed at exactly 15 (5 enrollment + 10 verification capacity) and
    come with a key file carrying drawn demographics. Identical arguments
    produce identical corpora.
    """
    kind = CorpusKind(kind)
    profile = profile or GeneratorProfile()
    profile.validate()
    if n_subjects < 1:
        raise ValidationError("n_subjects must be >= 1")
    if kind is CorpusKind.DEVELOPMENT and sessions_per_subject < 15:
        raise ValidationError("development corpora need >= 15 sessions per subject")
    if kind is CorpusKind.EVALUATION and sessions_per_subject != 15:
        raise ValidationError("evaluation corpora have exactly 15 sessions per subject")

    genders = [g for g, _ in profile.gender_weights]
    weights = np.array([w for _, w in profile.gender_weights], dtype=np.float64)
    weights = weights / weights.sum()

    if kind is CorpusKind.DEVELOPMENT:
        subjects = []
        for i in range(n_subjects):
            rng = _substream(seed, "subject", kind.value, i)
            subject_id = f"d{i:05d}"
            sessions = tuple(
                Session(f"{subject_id}-{k:02d}", *arrays, validate=False)
                for k, arrays in enumerate(_draw_sessions(rng, sessions_per_subject, profile))
            )
            subjects.append(SubjectRecord(subject_id, Gender.UNSPECIFIED, None, sessions))
        return Corpus.from_subjects(subjects), None

    # evaluation: opaque, shuffled session ids; identities only in the key
    total_sessions = n_subjects * sessions_per_subject
    id_perm = _substream(seed, "session-ids").permutation(total_sessions)
    width = max(6, len(str(total_sessions - 1)))
    sessions: list[Session] = []
    records: dict[str, KeyRecord] = {}
    flat = 0
    for i in range(n_subjects):
        rng = _substream(seed, "subject", kind.value, i)
        subject_id = f"u{i:05d}"
        gender = genders[int(rng.choice(len(genders), p=weights))]
        age = int(rng.integers(profile.age_min, profile.age_max + 1))
        for arrays in _draw_sessions(rng, sessions_per_subject, profile):
            session_id = f"e{id_perm[flat]:0{width}d}"
            sessions.append(Session(session_id, *arrays, validate=False))
            records[session_id] = KeyRecord(subject_id, gender, age)
            flat += 1
    corpus = Corpus.from_sessions(sessions)
    return corpus, EvaluationKey(dict(sorted(records.items())))
