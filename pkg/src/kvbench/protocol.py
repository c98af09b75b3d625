"""Deterministic enrollment/verification comparison-list construction.

Every subject contributes 30 score groups of 5 comparisons each (one
verification session against 5 enrollment sessions): 10 genuine groups,
10 same-demographic-group impostor groups, and 10 impostor groups whose
subjects differ in both gender and age bin.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .corpus import Gender, SubjectRecord, _substream
from .errors import ParseError, ValidationError

COMPARISON_HEADER = "enroll_session,verify_session,label,target_subject,score_group"

ENROLL_SESSIONS = 5
VERIFY_SESSIONS = 10
GROUPS_PER_SUBJECT = 30  # 10 genuine + 10 similar + 10 dissimilar
COMPARISONS_PER_SUBJECT = GROUPS_PER_SUBJECT * ENROLL_SESSIONS


class ComparisonLabel(str, Enum):
    GENUINE = "genuine"
    IMPOSTOR_SIMILAR = "impostor_similar"
    IMPOSTOR_DISSIMILAR = "impostor_dissimilar"


class Comparison(NamedTuple):
    enroll_session: str
    verify_session: str
    label: ComparisonLabel
    target_subject: str
    score_group: int


@dataclass(frozen=True)
class DemographicBinning:
    """Maps a subject to its (gender, age bin) demographic group.

    Ages below the first edge form their own bin; ages at or above the last
    edge share the open-ended top bin.
    """

    age_bin_edges: tuple[int, ...] = (10, 20, 30, 40, 50, 60, 70)

    def __post_init__(self):
        edges = self.age_bin_edges
        if not edges or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValidationError("age_bin_edges must be strictly increasing and non-empty")

    def age_bin(self, age_years: int) -> int:
        return bisect.bisect_right(self.age_bin_edges, age_years)

    def bin_label(self, index: int) -> str:
        edges = self.age_bin_edges
        if index == 0:
            return f"<{edges[0]}"
        if index == len(edges):
            return f"{edges[-1]}+"
        return f"{edges[index - 1]}-{edges[index] - 1}"

    def group(self, subject: SubjectRecord) -> tuple[Gender, int]:
        if subject.gender is Gender.UNSPECIFIED or subject.age_years is None:
            raise ValidationError(
                f"subject {subject.subject_id!r} lacks demographics; cannot assign a group"
            )
        return subject.gender, self.age_bin(subject.age_years)


@dataclass(frozen=True)
class RoleAssignment:
    subject_id: str
    enrollment: tuple[str, ...]
    verification: tuple[str, ...]


def assign_roles(subject: SubjectRecord, seed: int) -> RoleAssignment:
    """Deterministically split a subject's sessions into 5 + 10 roles."""
    ids = subject.session_ids
    if len(ids) < ENROLL_SESSIONS + VERIFY_SESSIONS:
        raise ValidationError(
            f"subject {subject.subject_id!r} has {len(ids)} sessions; "
            f"need >= {ENROLL_SESSIONS + VERIFY_SESSIONS}"
        )
    rng = _substream(seed, "roles", subject.subject_id)
    perm = rng.permutation(len(ids))
    picked = [ids[i] for i in perm[: ENROLL_SESSIONS + VERIFY_SESSIONS]]
    return RoleAssignment(
        subject.subject_id,
        tuple(picked[:ENROLL_SESSIONS]),
        tuple(picked[ENROLL_SESSIONS:]),
    )


class _Pools:
    """Precomputed demographic pools and role assignments for one corpus.

    Similar pools are the target's own (gender, age bin) group minus the
    target itself; dissimilar pools depend only on the target's group and
    are cached per group, keeping list generation linear in corpus size.
    """

    def __init__(self, subjects: Sequence[SubjectRecord], binning: DemographicBinning, seed: int):
        self.binning = binning
        self.seed = seed
        self.subjects = {s.subject_id: s for s in sorted(subjects, key=lambda s: s.subject_id)}
        self.roles = {sid: assign_roles(s, seed) for sid, s in self.subjects.items()}
        self.groups: dict[tuple[Gender, int], list[str]] = {}
        self.group_of: dict[str, tuple[Gender, int] | None] = {}
        self._demo: list[tuple[str, Gender, int | None]] = []
        for sid, subj in self.subjects.items():
            bin_ = None if subj.age_years is None else binning.age_bin(subj.age_years)
            self._demo.append((sid, subj.gender, bin_))
            if subj.gender is Gender.UNSPECIFIED or bin_ is None:
                self.group_of[sid] = None  # dissimilar-impostor material only
                continue
            group = (subj.gender, bin_)
            self.groups.setdefault(group, []).append(sid)
            self.group_of[sid] = group
        self._group_pos = {
            sid: i for members in self.groups.values() for i, sid in enumerate(members)
        }
        self._dissimilar_cache: dict[tuple[Gender, int], list[str]] = {}

    def target_group(self, target_id: str) -> tuple[Gender, int]:
        group = self.group_of[target_id]
        if group is None:
            raise ValidationError(f"subject {target_id!r} lacks demographics; cannot be a target")
        return group

    def dissimilar_pool(self, group: tuple[Gender, int]) -> list[str]:
        pool = self._dissimilar_cache.get(group)
        if pool is None:
            gender, age_bin = group
            pool = [sid for sid, g, b in self._demo if g is not gender and b != age_bin]
            self._dissimilar_cache[group] = pool
        return pool


def select_impostors(
    target_subject: SubjectRecord,
    all_subjects: Sequence[SubjectRecord],
    binning: DemographicBinning,
    seed: int,
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Pick 10 similar and 10 dissimilar impostor verification sessions.

    Each score group draws one verification session from a distinct
    impostor subject; similar impostors share the target's gender and age
    bin, dissimilar ones differ in both.
    """
    pools = _Pools(all_subjects, binning, seed)
    return _select_impostors_pooled(pools, target_subject.subject_id)


def _pick_sessions(pools: _Pools, impostors: list[str], rng: np.random.Generator) -> list[str]:
    out = []
    for impostor in impostors:
        verification = pools.roles[impostor].verification
        out.append(verification[int(rng.integers(len(verification)))])
    return out


def _select_impostors_pooled(pools: _Pools, target_id: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
    rng = _substream(pools.seed, "impostors", target_id)
    group = pools.target_group(target_id)
    members = pools.groups[group]
    n_similar = len(members) - 1
    if n_similar < VERIFY_SESSIONS:
        raise ValidationError(
            f"subject {target_id!r}: similar-impostor pool has "
            f"{n_similar} subjects; need >= {VERIFY_SESSIONS}"
        )
    pos = pools._group_pos[target_id]
    picks = rng.choice(n_similar, size=VERIFY_SESSIONS, replace=False)
    similar_subjects = [members[int(i) + (int(i) >= pos)] for i in picks]
    similar = _pick_sessions(pools, similar_subjects, rng)
    pool = pools.dissimilar_pool(group)
    if len(pool) < VERIFY_SESSIONS:
        raise ValidationError(
            f"subject {target_id!r}: dissimilar-impostor pool has "
            f"{len(pool)} subjects; need >= {VERIFY_SESSIONS}"
        )
    picks = rng.choice(len(pool), size=VERIFY_SESSIONS, replace=False)
    dissimilar = _pick_sessions(pools, [pool[int(i)] for i in picks], rng)
    return tuple(similar), tuple(dissimilar)


@dataclass
class ComparisonList:
    """Ordered comparisons plus the config echoed into serialized headers."""

    comparisons: list[Comparison]
    seed: int = 0
    age_bin_edges: tuple[int, ...] = DemographicBinning().age_bin_edges

    def __len__(self) -> int:
        return len(self.comparisons)

    def __iter__(self):
        return iter(self.comparisons)

    def session_ids(self) -> set[str]:
        out: set[str] = set()
        for c in self.comparisons:
            out.add(c.enroll_session)
            out.add(c.verify_session)
        return out

    def target_subjects(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(c.target_subject for c in self.comparisons))

    def per_subject_label_counts(self) -> dict[str, dict[ComparisonLabel, int]]:
        counts: dict[str, dict[ComparisonLabel, int]] = {}
        for c in self.comparisons:
            counts.setdefault(c.target_subject, {lab: 0 for lab in ComparisonLabel})[c.label] += 1
        return counts


def generate_comparison_list(
    subjects: Sequence[SubjectRecord],
    binning: DemographicBinning | None = None,
    seed: int = 0,
    targets: Sequence[str] | None = None,
) -> ComparisonList:
    """Build the full comparison list over the evaluation subjects.

    `targets` defaults to every subject with specified demographics;
    subjects without demographics still serve as dissimilar-impostor
    material. Output order and score-group numbering are deterministic:
    per target, 10 genuine groups then 10 similar then 10 dissimilar, each
    group enumerating its 5 enrollment sessions in role order.
    """
    binning = binning or DemographicBinning()
    pools = _Pools(subjects, binning, seed)
    if targets is None:
        target_ids = [sid for sid in pools.subjects if pools.group_of[sid] is not None]
    else:
        target_ids = list(targets)
        unknown = [t for t in target_ids if t not in pools.subjects]
        if unknown:
            raise ValidationError(f"unknown target subjects: {unknown[:5]}")
    comparisons: list[Comparison] = []
    group_id = 0
    for target_id in target_ids:
        roles = pools.roles[target_id]
        similar, dissimilar = _select_impostors_pooled(pools, target_id)
        for label, verify_sessions in (
            (ComparisonLabel.GENUINE, roles.verification),
            (ComparisonLabel.IMPOSTOR_SIMILAR, similar),
            (ComparisonLabel.IMPOSTOR_DISSIMILAR, dissimilar),
        ):
            for verify in verify_sessions:
                for enroll in roles.enrollment:
                    comparisons.append(Comparison(enroll, verify, label, target_id, group_id))
                group_id += 1
    return ComparisonList(comparisons, seed=seed, age_bin_edges=binning.age_bin_edges)


def validate_comparison_list(
    clist: ComparisonList, key_subjects: Mapping[str, str] | None = None
) -> None:
    """Check the structural count identities (and labels, given a key).

    `key_subjects` maps session_id -> ground-truth subject_id; when given,
    genuine labels must coincide exactly with same-subject pairs.
    """
    if len(clist) % COMPARISONS_PER_SUBJECT:
        raise ValidationError(
            f"comparison count {len(clist)} is not a multiple of {COMPARISONS_PER_SUBJECT}"
        )
    group_sizes: dict[int, int] = {}
    group_meta: dict[int, tuple[str, ComparisonLabel, str]] = {}
    for c in clist:
        if c.enroll_session == c.verify_session:
            raise ValidationError(f"comparison pairs session {c.enroll_session!r} with itself")
        group_sizes[c.score_group] = group_sizes.get(c.score_group, 0) + 1
        meta = (c.verify_session, c.label, c.target_subject)
        if group_meta.setdefault(c.score_group, meta) != meta:
            raise ValidationError(f"score group {c.score_group} mixes verification sessions or labels")
        if key_subjects is not None:
            same = key_subjects[c.enroll_session] == key_subjects[c.verify_session]
            if same != (c.label is ComparisonLabel.GENUINE):
                raise ValidationError(
                    f"label {c.label.value} contradicts ground truth for group {c.score_group}"
                )
            if key_subjects[c.enroll_session] != c.target_subject:
                raise ValidationError(f"group {c.score_group} enrolls a non-target session")
    bad = {g: n for g, n in group_sizes.items() if n != ENROLL_SESSIONS}
    if bad:
        raise ValidationError(f"score groups without exactly {ENROLL_SESSIONS} comparisons: {list(bad)[:5]}")
    for target, counts in clist.per_subject_label_counts().items():
        if any(counts[lab] != VERIFY_SESSIONS * ENROLL_SESSIONS for lab in ComparisonLabel):
            raise ValidationError(f"subject {target!r} has unbalanced label counts {counts}")


def serialize_comparison_list(clist: ComparisonList, comments: Mapping[str, object] | None = None) -> str:
    lines = [
        f"# seed={clist.seed}",
        f"# age_bin_edges={','.join(map(str, clist.age_bin_edges))}",
    ]
    lines.extend(f"# {k}={v}" for k, v in (comments or {}).items())
    lines.append(COMPARISON_HEADER)
    lines.extend(
        f"{c.enroll_session},{c.verify_session},{c.label.value},{c.target_subject},{c.score_group}"
        for c in clist.comparisons
    )
    lines.append("")
    return "\n".join(lines)


def parse_comparison_list(source: str | bytes | IO) -> ComparisonList:
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        lines: Iterable[str] = source.splitlines()
    else:
        lines = (ln.decode("utf-8") if isinstance(ln, bytes) else ln for ln in source)
    seed = 0
    edges = DemographicBinning().age_bin_edges
    comparisons: list[Comparison] = []
    header_seen = False
    lineno = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line.lstrip("# ").partition("=")
            if key == "seed":
                seed = int(value)
            elif key == "age_bin_edges":
                edges = tuple(int(x) for x in value.split(","))
            continue
        if not header_seen:
            if line != COMPARISON_HEADER:
                raise ParseError(f"expected header {COMPARISON_HEADER!r}, got {line!r}", lineno)
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(f"expected 5 fields, got {len(parts)}", lineno)
        try:
            label = ComparisonLabel(parts[2])
        except ValueError:
            raise ParseError(f"unknown label {parts[2]!r}", lineno) from None
        try:
            group = int(parts[4])
        except ValueError:
            raise ParseError(f"non-integer score_group {parts[4]!r}", lineno) from None
        comparisons.append(Comparison(parts[0], parts[1], label, parts[3], group))
    if not header_seen:
        raise ParseError("empty input: missing header line", max(lineno, 1))
    if not comparisons:
        raise ParseError("no comparison rows", lineno)
    return ComparisonList(comparisons, seed=seed, age_bin_edges=edges)
