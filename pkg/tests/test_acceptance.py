"""Acceptance suite: one printed pass/fail line per criterion.

Run with `pytest tests/test_acceptance.py -v -s`. The heavyweight shared
artifacts (paper-scale lists, demo pipelines) are built once per module.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from kvbench.cli import file_digest, run_pipeline
from kvbench.corpus import GeneratorProfile, generate_synthetic_corpus, save_profile, subjects_from_key
from kvbench.metrics import REPORT_COLUMNS, aggregate, compute_auc, compute_eer, det_curve, fnmr_at_fmr
from kvbench.protocol import generate_comparison_list, parse_comparison_list
from kvbench.verifier import StatDistanceScorer, read_score_file, run_comparisons, triplet_loss

from test_metrics import (
    oracle_auc_trapezoid,
    oracle_det_diagonal,
    oracle_eer,
    oracle_fnmr_at_fmr,
    random_score_set,
)


def criterion(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def mobile_scale_pack():
    """5,000-subject evaluation corpus with its comparison list."""
    corpus, key = generate_synthetic_corpus(5000, 15, seed=52, kind="evaluation")
    clist = generate_comparison_list(subjects_from_key(corpus, key), seed=53)
    return corpus, clist


@pytest.fixture(scope="module")
def separability_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("distinct")
    results = run_pipeline(
        out_dir=out,
        seed=2024,
        dev_subjects=200,
        dev_sessions=15,
        eval_subjects=1000,
        scorer="both",
        workers=2,
        age_bins="10,20,30,40,50,60,70",
        clip_low=0.001,
        clip_high=0.999,
        epochs=60,
        seq_len=70,
        embedding_dim=64,
        hidden_sizes=(128,),
        margin=1.5,
        learning_rate=0.05,
        subjects_per_batch=16,
        sessions_per_subject=4,
    )
    return out, results


@pytest.fixture(scope="module")
def degenerate_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("degenerate")
    results = run_pipeline(
        out_dir=out,
        seed=7070,
        dev_subjects=120,
        dev_sessions=15,
        eval_subjects=1000,
        scorer="both",
        workers=2,
        age_bins="10,20,30,40,50,60,70",
        clip_low=0.001,
        clip_high=0.999,
        shared_profile=True,
        epochs=30,
        seq_len=70,
        embedding_dim=64,
        hidden_sizes=(128,),
        margin=1.5,
        learning_rate=0.05,
        subjects_per_batch=16,
        sessions_per_subject=4,
    )
    return out, results


def test_protocol_count_identity(mobile_scale_pack):
    corpus, key = generate_synthetic_corpus(15000, 15, seed=42, kind="evaluation")
    subjects = subjects_from_key(corpus, key)
    started = time.perf_counter()
    clist = generate_comparison_list(subjects, seed=43)
    elapsed = time.perf_counter() - started
    _, mobile_list = mobile_scale_pack
    ok = len(clist) == 2_250_000 and len(mobile_list) == 750_000 and elapsed < 30.0
    criterion(
        "protocol count identity",
        ok,
        f"15,000 subjects -> {len(clist):,} comparisons in {elapsed:.1f}s (< 30s); "
        f"5,000 subjects -> {len(mobile_list):,}",
    )


def test_mobile_scale_scoring_emits_every_line(mobile_scale_pack, tmp_path):
    corpus, clist = mobile_scale_pack
    dev, _ = generate_synthetic_corpus(50, 15, seed=54)
    out = tmp_path / "scores.txt"
    scores = run_comparisons(clist, corpus, StatDistanceScorer().fit(dev), workers=2, out_path=out)
    n_lines = sum(1 for _ in open(out))
    criterion(
        "mobile-scale scoring",
        scores.size == 750_000 and n_lines == 750_000,
        f"emitted {n_lines:,} score lines for 750,000 comparisons",
    )


def test_per_subject_score_structure(separability_run):
    out, _ = separability_run
    with open(out / "comparisons.csv") as fh:
        clist = parse_comparison_list(fh)
    with open(out / "scores_stat.txt") as fh:
        scores = read_score_file(fh)
    score_set = aggregate(scores, clist)
    sizes = {
        (s.genuine.size, s.impostor_similar.size, s.impostor_dissimilar.size)
        for s in score_set.per_subject.values()
    }
    ok = sizes == {(10, 10, 10)} and len(score_set.per_subject) == 1000
    criterion(
        "per-subject score structure",
        ok,
        f"{len(score_set.per_subject)} subjects, each with genuine/similar/dissimilar sizes {sizes}",
    )


def test_metrics_oracle_equivalence():
    rng = np.random.default_rng(20240915)
    worst_eer = worst_auc = worst_fnmr = 0.0
    for _ in range(500):
        g, i = random_score_set(rng)
        worst_eer = max(worst_eer, abs(compute_eer(g, i) - oracle_eer(g, i)))
        worst_auc = max(worst_auc, abs(compute_auc(g, i) - oracle_auc_trapezoid(g, i)))
        for pct in (1.0, 10.0):
            got = fnmr_at_fmr(g, i, pct)
            want_value, want_flag = oracle_fnmr_at_fmr(g, i, pct)
            worst_fnmr = max(worst_fnmr, abs(got.value_pct - want_value))
            assert got.extrapolated == want_flag
    ok = worst_eer < 1e-6 and worst_auc < 1e-12 and worst_fnmr < 1e-9
    criterion(
        "metrics oracle equivalence",
        ok,
        f"500 sets: max |EER err| {worst_eer:.2e} (<1e-6), max |AUC err| {worst_auc:.2e} (<1e-12), "
        f"max |FNMR@FMR err| {worst_fnmr:.2e} (<1e-9)",
    )


def test_monotone_transform_invariance(separability_run):
    out, _ = separability_run
    with open(out / "comparisons.csv") as fh:
        clist = parse_comparison_list(fh)
    with open(out / "scores_stat.txt") as fh:
        score_set = aggregate(read_score_file(fh), clist)
    g, i = score_set.genuine, score_set.impostor
    d_eer = abs(compute_eer(g, i) - compute_eer(g**3, i**3))
    d_auc = abs(compute_auc(g, i) - compute_auc(g**3, i**3))
    rng = np.random.default_rng(99)
    for _ in range(50):
        rg, ri = random_score_set(rng)
        d_eer = max(d_eer, abs(compute_eer(rg, ri) - compute_eer(rg**3, ri**3)))
        d_auc = max(d_auc, abs(compute_auc(rg, ri) - compute_auc(rg**3, ri**3)))
    ok = d_eer < 1e-9 and d_auc < 1e-9
    criterion(
        "monotone-transform invariance",
        ok,
        f"x -> x^3 changes EER by {d_eer:.2e} and AUC by {d_auc:.2e} (< 1e-9)",
    )


def test_gradient_correctness():
    rng = np.random.default_rng(77)
    h = 1e-5
    worst = 0.0
    checked = 0
    while checked < 100:
        a, p, n = rng.normal(0.0, 1.0, (3, 8))
        if abs(np.linalg.norm(a - p) - np.linalg.norm(a - n) + 1.5) < 1e-3:
            continue  # the hinge kink makes finite differences meaningless
        _, grads = triplet_loss(a, p, n, margin=1.5)
        numeric = []
        for vec_idx in range(3):
            g = np.zeros(8)
            for j in range(8):
                vecs = [a.copy(), p.copy(), n.copy()]
                vecs[vec_idx][j] += h
                up, _ = triplet_loss(*vecs, margin=1.5)
                vecs[vec_idx][j] -= 2 * h
                down, _ = triplet_loss(*vecs, margin=1.5)
                g[j] = (up - down) / (2 * h)
            numeric.append(g)
        analytic = np.concatenate(grads)
        fd = np.concatenate(numeric)
        rel = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-8)
        worst = max(worst, rel)
        checked += 1
    criterion(
        "triplet gradient correctness",
        worst < 1e-4,
        f"100 triplets, central differences (step 1e-5): max relative error {worst:.2e} (< 1e-4)",
    )


def test_separability_and_runtime(separability_run, degenerate_run):
    _, results = separability_run
    stat_eer = results["stat"]["report"].pooled.global_eer
    emb_eer = results["embedding"]["report"].pooled.global_eer
    elapsed = results["elapsed_s"]
    _, deg_results = degenerate_run
    deg_stat = deg_results["stat"]["report"].pooled.global_eer
    deg_emb = deg_results["embedding"]["report"].pooled.global_eer
    ok = (
        stat_eer <= 15.0
        and emb_eer <= stat_eer + 2.0
        and abs(deg_stat - 50.0) <= 3.0
        and abs(deg_emb - 50.0) <= 3.0
        and elapsed < 300.0
    )
    criterion(
        "separability property",
        ok,
        f"distinct profiles: stat EER {stat_eer:.2f}% (<= 15%), embedding EER {emb_eer:.2f}% "
        f"(<= stat + 2pp); shared profile: stat {deg_stat:.2f}%, embedding {deg_emb:.2f}% "
        f"(50 +- 3); pipeline wall time {elapsed:.0f}s (< 300s)",
    )


def test_ordering_regularity(separability_run, degenerate_run):
    reports = [
        run["report"]
        for _, results in (separability_run, degenerate_run)
        for name, run in results.items()
        if isinstance(run, dict) and "report" in run
    ]
    worst_gap = 0.0
    for report in reports:
        for block in (report.pooled, report.similar_only, report.dissimilar_only):
            assert block.fnmr_at_fmr1.value_pct >= block.fnmr_at_fmr10.value_pct >= 0.0
        worst_gap = max(
            worst_gap, abs(oracle_det_diagonal(report.det_global) - report.pooled.global_eer)
        )
    rng = np.random.default_rng(555)
    for _ in range(200):
        g, i = random_score_set(rng)
        at1, at10 = fnmr_at_fmr(g, i, 1.0), fnmr_at_fmr(g, i, 10.0)
        assert at1.value_pct >= at10.value_pct >= 0.0
        worst_gap = max(worst_gap, abs(oracle_det_diagonal(det_curve(g, i)) - compute_eer(g, i)))
    criterion(
        "ordering regularity",
        worst_gap < 1e-9,
        f"FNMR@1%FMR >= FNMR@10%FMR >= 0 in {len(reports)} reports + 200 random sets; "
        f"DET/diagonal intersection within {worst_gap:.2e} of EER (< 1e-9)",
    )


def test_determinism_across_workers(tmp_path_factory):
    digests = []
    base = tmp_path_factory.mktemp("determinism")
    profile = GeneratorProfile(age_min=20, age_max=39)
    profile_path = base / "profile.txt"
    save_profile(profile, profile_path)
    for workers in (1, 8):
        out = base / f"workers{workers}"
        run_pipeline(
            out_dir=out,
            seed=31337,
            dev_subjects=16,
            dev_sessions=15,
            eval_subjects=80,
            scorer="both",
            workers=workers,
            age_bins="10,20,30,40,50,60,70",
            clip_low=0.001,
            clip_high=0.999,
            profile_path=profile_path,
            epochs=15,
            seq_len=50,
            embedding_dim=32,
            hidden_sizes=(64,),
            margin=1.5,
            learning_rate=0.05,
            subjects_per_batch=8,
            sessions_per_subject=4,
        )
        digests.append(
            {
                rel: file_digest(out / rel)
                for rel in (
                    "scores_stat.txt",
                    "scores_embedding.txt",
                    "metrics_stat/report.txt",
                    "metrics_embedding/report.txt",
                    "metrics_stat/summary.txt",
                    "metrics_embedding/summary.txt",
                )
            }
        )
    ok = digests[0] == digests[1]
    criterion(
        "determinism across workers",
        ok,
        "1-worker and 8-worker pipeline reruns produce byte-identical score files and reports",
    )


def test_report_format(separability_run):
    out, _ = separability_run
    report_text = (out / "metrics_stat" / "report.txt").read_text()
    have_columns = all(column in report_text for column in REPORT_COLUMNS)
    row = next(line for line in report_text.splitlines() if line.startswith("pooled"))
    cells = [c.strip() for c in row.split("|")[1:]]
    two_decimals = len(cells) == 5 and all(len(c.partition(".")[2]) == 2 for c in cells)
    criterion(
        "report format",
        have_columns and two_decimals,
        f"all five metric columns present with 2-decimal values: {', '.join(cells)}",
    )
