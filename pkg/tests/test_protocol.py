from __future__ import annotations

import numpy as np
import pytest

from kvbench.corpus import Gender, SubjectRecord
from kvbench.errors import ValidationError
from kvbench.protocol import (
    COMPARISONS_PER_SUBJECT,
    ComparisonLabel,
    DemographicBinning,
    assign_roles,
    generate_comparison_list,
    parse_comparison_list,
    select_impostors,
    serialize_comparison_list,
    validate_comparison_list,
)

from conftest import make_session


def stub_subject(subject_id: str, gender: Gender, age: int, n_sessions: int = 15) -> SubjectRecord:
    sessions = tuple(
        make_session(f"{subject_id}-{k:02d}", [(65, 0, 50)]) for k in range(n_sessions)
    )
    return SubjectRecord(subject_id, gender, age, sessions)


def stub_population(groups: list[tuple[Gender, int, int]], prefix: str = "p") -> list[SubjectRecord]:
    """groups: (gender, age, count) triples."""
    out = []
    idx = 0
    for gender, age, count in groups:
        for _ in range(count):
            out.append(stub_subject(f"{prefix}{idx:04d}", gender, age, 15))
            idx += 1
    return out


class TestBinning:
    def test_default_decades(self):
        binning = DemographicBinning()
        assert binning.age_bin(25) == binning.age_bin(29)
        assert binning.age_bin(29) != binning.age_bin(30)
        assert binning.bin_label(binning.age_bin(25)) == "20-29"
        assert binning.bin_label(binning.age_bin(75)) == "70+"
        assert binning.bin_label(binning.age_bin(5)) == "<10"

    def test_every_age_maps_once(self):
        binning = DemographicBinning()
        for age in range(1, 120):
            b = binning.age_bin(age)
            assert 0 <= b <= len(binning.age_bin_edges)

    def test_non_increasing_edges_rejected(self):
        with pytest.raises(ValidationError):
            DemographicBinning((10, 10, 30))

    def test_unspecified_gender_has_no_group(self):
        binning = DemographicBinning()
        subject = stub_subject("x", Gender.UNSPECIFIED, 30)
        with pytest.raises(ValidationError, match="demographics"):
            binning.group(subject)


class TestRoles:
    def test_split_counts(self):
        roles = assign_roles(stub_subject("s", Gender.FEMALE, 30), seed=1)
        assert len(roles.enrollment) == 5
        assert len(roles.verification) == 10
        assert not set(roles.enrollment) & set(roles.verification)

    def test_deterministic(self):
        subject = stub_subject("s", Gender.FEMALE, 30)
        assert assign_roles(subject, seed=1) == assign_roles(subject, seed=1)
        assert assign_roles(subject, seed=1) != assign_roles(subject, seed=2)

    def test_extra_sessions_unused(self):
        subject = stub_subject("s", Gender.FEMALE, 30, n_sessions=20)
        roles = assign_roles(subject, seed=3)
        used = set(roles.enrollment) | set(roles.verification)
        assert len(used) == 15
        assert used < set(subject.session_ids)

    def test_too_few_sessions(self):
        with pytest.raises(ValidationError, match="need >= 15"):
            assign_roles(stub_subject("s", Gender.FEMALE, 30, n_sessions=14), seed=1)


class TestImpostorSelection:
    def test_demographic_constraints(self):
        population = stub_population(
            [
                (Gender.MALE, 25, 12),  # same group as target
                (Gender.MALE, 45, 12),  # same gender only
                (Gender.FEMALE, 25, 12),  # same age bin only
                (Gender.FEMALE, 45, 12),  # differs in both
            ]
        )
        target = population[0]
        owner = {}
        demo = {}
        binning = DemographicBinning()
        for subj in population:
            demo[subj.subject_id] = (subj.gender, binning.age_bin(subj.age_years))
            for sid in subj.session_ids:
                owner[sid] = subj.subject_id
        similar, dissimilar = select_impostors(target, population, binning, seed=5)
        assert len(similar) == len(dissimilar) == 10
        target_group = demo[target.subject_id]
        similar_owners = [owner[s] for s in similar]
        dissimilar_owners = [owner[s] for s in dissimilar]
        assert len(set(similar_owners)) == 10  # one session per distinct subject
        assert len(set(dissimilar_owners)) == 10
        assert all(demo[o] == target_group for o in similar_owners)
        for o in dissimilar_owners:
            gender, age_bin = demo[o]
            assert gender != target_group[0] and age_bin != target_group[1]

    def test_sessions_come_from_verification_split(self):
        population = stub_population([(Gender.MALE, 25, 12), (Gender.FEMALE, 45, 12)])
        target = population[0]
        similar, dissimilar = select_impostors(target, population, DemographicBinning(), seed=5)
        verification = {
            sid
            for subj in population
            for sid in assign_roles(subj, 5).verification
        }
        assert set(similar) <= verification
        assert set(dissimilar) <= verification

    def test_small_similar_pool_rejected(self):
        population = stub_population([(Gender.MALE, 25, 10), (Gender.FEMALE, 45, 12)])
        # target + 9 same-group subjects: one short of the 10 needed
        with pytest.raises(ValidationError, match="similar.*9 subjects"):
            select_impostors(population[0], population, DemographicBinning(), seed=5)

    def test_small_dissimilar_pool_rejected(self):
        population = stub_population([(Gender.MALE, 25, 12), (Gender.FEMALE, 45, 9)])
        with pytest.raises(ValidationError, match="dissimilar.*9 subjects"):
            select_impostors(population[0], population, DemographicBinning(), seed=5)

    def test_unspecified_gender_only_dissimilar_material(self):
        population = stub_population([(Gender.MALE, 25, 12), (Gender.FEMALE, 45, 11)])
        population.append(stub_subject("zz-unknown", Gender.UNSPECIFIED, 45))
        target = population[0]
        similar, dissimilar = select_impostors(target, population, DemographicBinning(), seed=5)
        owner = {sid: s.subject_id for s in population for sid in s.session_ids}
        assert all(owner[s] != "zz-unknown" for s in similar)
        # unknown-gender subjects may appear on the dissimilar side
        clist = generate_comparison_list(population, seed=5)
        assert "zz-unknown" not in clist.target_subjects()

    def test_selection_succeeds_for_uniform_demographics(self):
        rng = np.random.default_rng(0)
        genders = [Gender.FEMALE, Gender.MALE]
        population = [
            stub_subject(f"u{i:04d}", genders[int(rng.integers(2))], int(rng.integers(18, 70)))
            for i in range(1000)
        ]
        binning = DemographicBinning()
        # oracle: exhaustive per-group pool-size check implies selection succeeds
        groups: dict[tuple[Gender, int], int] = {}
        for s in population:
            groups[binning.group(s)] = groups.get(binning.group(s), 0) + 1
        assert min(groups.values()) >= 11
        clist = generate_comparison_list(population, binning, seed=7)
        assert len(clist) == 150 * len(population)


@pytest.fixture(scope="module")
def population():
    return stub_population(
        [
            (Gender.MALE, 25, 15),
            (Gender.MALE, 45, 15),
            (Gender.FEMALE, 25, 15),
            (Gender.FEMALE, 45, 15),
        ]
    )


class TestComparisonList:
    def test_counts_per_subject(self, population):
        clist = generate_comparison_list(population, seed=1)
        assert len(clist) == COMPARISONS_PER_SUBJECT * len(population)
        for counts in clist.per_subject_label_counts().values():
            assert counts[ComparisonLabel.GENUINE] == 50
            assert counts[ComparisonLabel.IMPOSTOR_SIMILAR] == 50
            assert counts[ComparisonLabel.IMPOSTOR_DISSIMILAR] == 50

    def test_single_target(self, population):
        clist = generate_comparison_list(population, seed=1, targets=[population[0].subject_id])
        assert len(clist) == 150
        assert len({c.score_group for c in clist}) == 30

    def test_structure_against_key(self, population):
        owner = {sid: s.subject_id for s in population for sid in s.session_ids}
        clist = generate_comparison_list(population, seed=1)
        validate_comparison_list(clist, owner)

    def test_genuine_iff_same_subject(self, population):
        owner = {sid: s.subject_id for s in population for sid in s.session_ids}
        clist = generate_comparison_list(population, seed=1)
        for c in clist:
            assert (owner[c.enroll_session] == owner[c.verify_session]) == (
                c.label is ComparisonLabel.GENUINE
            )
            assert c.enroll_session != c.verify_session

    def test_deterministic_serialization(self, population):
        a = serialize_comparison_list(generate_comparison_list(population, seed=1))
        b = serialize_comparison_list(generate_comparison_list(population, seed=1))
        assert a == b
        c = serialize_comparison_list(generate_comparison_list(population, seed=2))
        assert a != c

    def test_parse_round_trip(self, population):
        clist = generate_comparison_list(population, seed=3)
        reparsed = parse_comparison_list(serialize_comparison_list(clist))
        assert reparsed.comparisons == clist.comparisons
        assert reparsed.seed == clist.seed
        assert reparsed.age_bin_edges == clist.age_bin_edges

    def test_unknown_target_rejected(self, population):
        with pytest.raises(ValidationError, match="unknown target"):
            generate_comparison_list(population, seed=1, targets=["nope"])

    def test_generated_fixture_counts(self, eval_pack):
        _, key, subjects = eval_pack
        clist = generate_comparison_list(subjects, seed=2)
        assert len(clist) == 150 * len(subjects)
        validate_comparison_list(clist, {sid: r.subject_id for sid, r in key.records.items()})
