"""Command-line surface wiring the full benchmark pipeline.

Every command resolves its configuration as flags > config file > defaults,
echoes the resolved values into a JSON run manifest next to its outputs,
and draws all randomness from explicit --seed flags. Exit codes: 0 success,
2 usage error, 3 validation/parse error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import __version__
from .corpus import (
    CorpusKind,
    GeneratorProfile,
    assert_open_set,
    corpus_stats,
    generate_synthetic_corpus,
    load_profile,
    parse_corpus,
    parse_key,
    serialize_corpus,
    serialize_key,
    subjects_from_key,
)
from .errors import KvbenchError, ParseError, ValidationError
from .features import SequenceNormalizer, extract_features
from .metrics import aggregate, build_report, report_summary, report_table, write_curve
from .protocol import (
    DemographicBinning,
    generate_comparison_list,
    parse_comparison_list,
    serialize_comparison_list,
    validate_comparison_list,
)
from .verifier import (
    StatDistanceScorer,
    TripletEmbedder,
    read_score_file,
    run_comparisons,
    write_score_file,
)

USAGE_ERROR = 2


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(directory, command: str, config: dict, inputs: dict, outputs: dict) -> Path:
    """Write <command>.manifest.json describing one reproducible run."""
    path = Path(directory) / f"{command}.manifest.json"
    data = {
        "tool": "kvbench",
        "version": __version__,
        "command": command,
        "config": {k: str(v) for k, v in sorted(config.items())},
        "inputs": {name: {"path": str(p), "sha256": file_digest(p)} for name, p in sorted(inputs.items())},
        "outputs": {name: {"path": str(p), "sha256": file_digest(p)} for name, p in sorted(outputs.items())},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _load_config_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ParseError(f"expected key=value, got {line!r}", lineno)
            out[key.strip()] = value.strip()
    return out


class Option:
    """One resolvable option: flag > config-file key > default."""

    def __init__(self, name, type=str, default=None, required=False, help="", choices=None):
        self.name = name
        self.type = type
        self.default = default
        self.required = required
        self.help = help
        self.choices = choices

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")


def _add_options(parser: argparse.ArgumentParser, options: list[Option]) -> None:
    parser.add_argument("--config", help="key=value file with defaults for any option")
    for opt in options:
        kwargs: dict = {"help": opt.help, "default": None, "dest": opt.name}
        if opt.type is bool:
            kwargs["action"] = "store_true"
            kwargs["default"] = None
        else:
            kwargs["type"] = str
            if opt.choices:
                kwargs["choices"] = opt.choices
        parser.add_argument(opt.flag, **kwargs)


def _resolve(args: argparse.Namespace, options: list[Option]) -> dict:
    config_file = _load_config_file(args.config) if args.config else {}
    unknown = set(config_file) - {o.name for o in options}
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    resolved: dict = {}
    for opt in options:
        value = getattr(args, opt.name)
        if value is None and opt.name in config_file:
            value = config_file[opt.name]
        if value is None:
            value = opt.default
        elif opt.type is bool and isinstance(value, str):
            value = value.lower() in ("1", "true", "yes")
        elif opt.type is not bool:
            try:
                value = opt.type(value)
            except (TypeError, ValueError):
                raise ValidationError(f"bad value for {opt.flag}: {value!r}") from None
        if opt.required and value is None:
            raise _UsageError(f"missing required option {opt.flag}")
        resolved[opt.name] = value
    return resolved


class _UsageError(Exception):
    pass


def _parse_edges(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _parse_hidden(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",")) if text else ()


# ---------------------------------------------------------------------------
# Command implementations (shared by the CLI and the pipeline command)
# ---------------------------------------------------------------------------


def run_synth(kind, subjects, sessions, seed, out_dir, profile_path=None, shared_profile=False) -> dict:
    kind = CorpusKind(kind)
    profile = load_profile(profile_path) if profile_path else None
    if shared_profile:
        base = (profile or GeneratorProfile()).to_mapping()
        for k in ("hold_subject_sdlog", "gap_subject_sdlog", "jitter_subject_sdlog"):
            base[k] = "0"
        profile = GeneratorProfile.from_mapping(base)
    corpus, key = generate_synthetic_corpus(subjects, sessions, seed, profile, kind)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    command = f"synth-{kind.value}"
    comments = {"seed": seed, "manifest": f"{command}.manifest.json"}
    corpus_path = out / f"{kind.value}_corpus.csv"
    corpus_path.write_text(serialize_corpus(corpus, comments), encoding="utf-8")
    outputs = {"corpus": corpus_path}
    if key is not None:
        key_path = out / f"{kind.value}_key.csv"
        key_path.write_text(serialize_key(key, comments), encoding="utf-8")
        outputs["key"] = key_path
    config = {
        "kind": kind.value,
        "subjects": subjects,
        "sessions": sessions,
        "seed": seed,
        "shared_profile": shared_profile,
        **{f"profile.{k}": v for k, v in (profile or GeneratorProfile()).to_mapping().items()},
    }
    inputs = {"profile": profile_path} if profile_path else {}
    write_manifest(out, command, config, inputs, outputs)
    stats = corpus_stats(corpus)
    print(
        f"synth: wrote {corpus_path} ({stats.n_sessions} sessions, "
        f"mean length {stats.events_per_session_mean:.2f})"
    )
    return {"corpus": corpus_path, "key": outputs.get("key")}


def run_ingest(corpus_path, kind, key_path=None, min_sessions=None, canonical_out=None) -> dict:
    kind = CorpusKind(kind)
    with open(corpus_path, "r", encoding="utf-8") as fh:
        corpus = parse_corpus(fh, kind)
    if key_path:
        with open(key_path, "r", encoding="utf-8") as fh:
            key = parse_key(fh)
        subjects_from_key(corpus, key)  # raises on mismatch
    if min_sessions and corpus.subjects is not None:
        thin = [s.subject_id for s in corpus.subjects if s.n_sessions < min_sessions]
        if thin:
            raise ValidationError(
                f"{len(thin)} subjects below {min_sessions} sessions (first: {thin[:5]})"
            )
    stats = corpus_stats(corpus)
    subj = "n/a" if stats.n_subjects is None else str(stats.n_subjects)
    print(
        f"ingest: {corpus_path}: subjects={subj} sessions={stats.n_sessions} "
        f"events/session mean={stats.events_per_session_mean:.2f} "
        f"std={stats.events_per_session_std:.2f}"
    )
    outputs = {}
    if canonical_out:
        Path(canonical_out).write_text(serialize_corpus(corpus), encoding="utf-8")
        outputs["canonical"] = Path(canonical_out)
        out_dir = Path(canonical_out).parent
        inputs = {"corpus": corpus_path, **({"key": key_path} if key_path else {})}
        write_manifest(out_dir, "ingest", {"kind": kind.value, "min_sessions": min_sessions}, inputs, outputs)
    return {"stats": stats}


def run_features(corpus_path, out, clip_low, clip_high) -> dict:
    with open(corpus_path, "r", encoding="utf-8") as fh:
        corpus = parse_corpus(fh, CorpusKind.DEVELOPMENT)
    sequences = [extract_features(s) for s in corpus.sessions.values()]
    norm = SequenceNormalizer(clip_quantiles=(clip_low, clip_high)).fit(sequences)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    norm.save(out, comments={"manifest": "features.manifest.json"})
    write_manifest(
        out.parent,
        "features",
        {"clip_low": clip_low, "clip_high": clip_high},
        {"corpus": corpus_path},
        {"normalizer": out},
    )
    print(f"features: wrote {out}")
    return {"normalizer": out}


def run_protocol(corpus_path, key_path, out, seed, age_bins) -> dict:
    with open(corpus_path, "r", encoding="utf-8") as fh:
        corpus = parse_corpus(fh, CorpusKind.EVALUATION)
    with open(key_path, "r", encoding="utf-8") as fh:
        key = parse_key(fh)
    subjects = subjects_from_key(corpus, key)
    binning = DemographicBinning(_parse_edges(age_bins))
    clist = generate_comparison_list(subjects, binning, seed)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(
        serialize_comparison_list(clist, comments={"manifest": "protocol.manifest.json"}),
        encoding="utf-8",
    )
    write_manifest(
        out.parent,
        "protocol",
        {"seed": seed, "age_bins": age_bins},
        {"corpus": corpus_path, "key": key_path},
        {"comparisons": out},
    )
    print(f"protocol: wrote {out} ({len(clist)} comparisons, {len(clist.target_subjects())} subjects)")
    return {"comparisons": out, "n_comparisons": len(clist)}


_TRAIN_OPTION_NAMES = (
    "seq_len",
    "embedding_dim",
    "hidden_sizes",
    "margin",
    "learning_rate",
    "epochs",
    "subjects_per_batch",
    "sessions_per_subject",
)


def run_train(corpus_path, normalizer_path, out, seed, **hyper) -> dict:
    with open(corpus_path, "r", encoding="utf-8") as fh:
        corpus = parse_corpus(fh, CorpusKind.DEVELOPMENT)
    normalizer = SequenceNormalizer.load(normalizer_path) if normalizer_path else None
    est = TripletEmbedder(seed=seed, **hyper)
    est.fit(corpus, normalizer=normalizer)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    est.save(out)
    inputs = {"corpus": corpus_path}
    if normalizer_path:
        inputs["normalizer"] = normalizer_path
    write_manifest(out.parent, "train", {"seed": seed, **hyper}, inputs, {"model": out})
    final = est.loss_trace_[-1] if est.loss_trace_ else float("nan")
    print(f"train: wrote {out} ({len(est.loss_trace_)} batches, final loss {final:.4f})")
    return {"model": out}


def run_score(corpus_path, list_path, scorer, out, workers, dev_corpus=None, model=None, normalizer=None) -> dict:
    with open(corpus_path, "r", encoding="utf-8") as fh:
        corpus = parse_corpus(fh, CorpusKind.EVALUATION)
    with open(list_path, "r", encoding="utf-8") as fh:
        clist = parse_comparison_list(fh)
    inputs = {"corpus": corpus_path, "comparisons": list_path}
    if scorer == "stat":
        if not dev_corpus:
            raise _UsageError("--scorer stat needs --dev-corpus")
        with open(dev_corpus, "r", encoding="utf-8") as fh:
            dev = parse_corpus(fh, CorpusKind.DEVELOPMENT)
        engine = StatDistanceScorer().fit(dev)
        inputs["dev_corpus"] = dev_corpus
    elif scorer == "embedding":
        if not (model and normalizer):
            raise _UsageError("--scorer embedding needs --model and --normalizer")
        engine = TripletEmbedder.load(model, normalizer)
        inputs.update(model=model, normalizer=normalizer)
    else:
        raise _UsageError(f"unknown scorer {scorer!r}")
    scores = run_comparisons(clist, corpus, engine, workers=workers)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_score_file(scores, out)
    write_manifest(
        out.parent, f"score-{scorer}", {"scorer": scorer, "workers": workers}, inputs, {"scores": out}
    )
    print(f"score: wrote {out} ({scores.size} scores)")
    return {"scores": out}


def run_evaluate(scores_path, list_path, out_dir, key_path=None, normal_deviate=False) -> dict:
    with open(list_path, "r", encoding="utf-8") as fh:
        clist = parse_comparison_list(fh)
    with open(scores_path, "r", encoding="utf-8") as fh:
        scores = read_score_file(fh)
    if scores.size != len(clist):
        raise ValidationError(
            f"score file has {scores.size} lines but the comparison list has {len(clist)}"
        )
    inputs = {"scores": scores_path, "comparisons": list_path}
    if key_path:
        with open(key_path, "r", encoding="utf-8") as fh:
            key = parse_key(fh)
        validate_comparison_list(clist, {sid: rec.subject_id for sid, rec in key.records.items()})
        inputs["key"] = key_path
    score_set = aggregate(scores, clist)
    echo = {
        "protocol_seed": clist.seed,
        "age_bin_edges": ",".join(map(str, clist.age_bin_edges)),
        "manifest": "evaluate.manifest.json",
    }
    report = build_report(score_set, config_echo=echo)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = report_table(report)
    (out / "report.txt").write_text(f"# manifest=evaluate.manifest.json\n{table}", encoding="utf-8")
    (out / "summary.txt").write_text(report_summary(report), encoding="utf-8")
    curves = {
        "det_global": report.det_global,
        "det_similar": report.det_similar,
        "det_dissimilar": report.det_dissimilar,
    }
    outputs = {"report": out / "report.txt", "summary": out / "summary.txt"}
    for name, curve in curves.items():
        path = out / f"{name}.csv"
        write_curve(curve, path, normal_deviate=normal_deviate, comments={"manifest": "evaluate.manifest.json"})
        outputs[name] = path
    write_manifest(out, "evaluate", {"normal_deviate": normal_deviate}, inputs, outputs)
    print(table, end="")
    return {"report": report, "out_dir": out}


def run_report(summary_path) -> dict:
    values: dict[str, str] = {}
    with open(summary_path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key] = value
    try:
        row = (
            float(values["pooled.global_eer_pct"]),
            float(values["pooled.fnmr_at_fmr1_pct"]),
            float(values["pooled.fnmr_at_fmr10_pct"]),
            float(values["pooled.auc_pct"]),
            float(values["mean_per_subject_eer_pct"]),
        )
    except KeyError as exc:
        raise ValidationError(f"summary file missing key {exc}") from None
    from .metrics import REPORT_COLUMNS

    widths = [max(len(c), 8) for c in REPORT_COLUMNS]
    print(" | ".join(c.rjust(w) for c, w in zip(REPORT_COLUMNS, widths)))
    print(" | ".join(f"{v:.2f}".rjust(w) for v, w in zip(row, widths)))
    return {"row": row}


def run_pipeline(
    out_dir,
    seed,
    dev_subjects,
    dev_sessions,
    eval_subjects,
    scorer,
    workers,
    age_bins,
    clip_low,
    clip_high,
    profile_path=None,
    shared_profile=False,
    normal_deviate=False,
    **hyper,
) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scorers = ("stat", "embedding") if scorer == "both" else (scorer,)
    started = time.perf_counter()
    results: dict = {}

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except KvbenchError as exc:
            raise type(exc)(f"stage {name}: {exc}") from exc

    dev = stage(
        "synth-development",
        run_synth,
        "development",
        dev_subjects,
        dev_sessions,
        seed,
        out,
        profile_path,
        shared_profile,
    )
    ev = stage(
        "synth-evaluation", run_synth, "evaluation", eval_subjects, 15, seed, out, profile_path, shared_profile
    )
    with open(dev["corpus"], "r", encoding="utf-8") as fh:
        dev_corpus = parse_corpus(fh, CorpusKind.DEVELOPMENT)
    with open(ev["key"], "r", encoding="utf-8") as fh:
        assert_open_set(dev_corpus, parse_key(fh))
    norm = stage("features", run_features, dev["corpus"], out / "normalizer.txt", clip_low, clip_high)
    proto = stage("protocol", run_protocol, ev["corpus"], ev["key"], out / "comparisons.csv", seed, age_bins)
    model_path = None
    if "embedding" in scorers:
        model_path = stage(
            "train", run_train, dev["corpus"], norm["normalizer"], out / "model.txt", seed, **hyper
        )["model"]
    for name in scorers:
        score_path = out / f"scores_{name}.txt"
        stage(
            f"score-{name}",
            run_score,
            ev["corpus"],
            proto["comparisons"],
            name,
            score_path,
            workers,
            dev_corpus=dev["corpus"],
            model=model_path,
            normalizer=norm["normalizer"],
        )
        results[name] = stage(
            f"evaluate-{name}",
            run_evaluate,
            score_path,
            proto["comparisons"],
            out / f"metrics_{name}",
            key_path=ev["key"],
            normal_deviate=normal_deviate,
        )
    config = {
        "seed": seed,
        "dev_subjects": dev_subjects,
        "dev_sessions": dev_sessions,
        "eval_subjects": eval_subjects,
        "scorer": scorer,
        "workers": workers,
        "age_bins": age_bins,
        "clip_low": clip_low,
        "clip_high": clip_high,
        "shared_profile": shared_profile,
        **hyper,
    }
    outputs = {"comparisons": proto["comparisons"]}
    for name in scorers:
        outputs[f"scores_{name}"] = out / f"scores_{name}.txt"
        outputs[f"report_{name}"] = out / f"metrics_{name}" / "report.txt"
    write_manifest(out, "pipeline", config, {}, outputs)
    elapsed = time.perf_counter() - started
    print(f"pipeline: finished in {elapsed:.1f}s; artifacts in {out}")
    results["elapsed_s"] = elapsed
    return results


# ---------------------------------------------------------------------------
# Argument wiring
# ---------------------------------------------------------------------------

_SYNTH_OPTS = [
    Option("kind", str, "development", help="corpus kind", choices=["development", "evaluation"]),
    Option("subjects", int, required=True, help="number of subjects"),
    Option("sessions", int, 15, help="sessions per subject"),
    Option("seed", int, 0, help="generator seed"),
    Option("out_dir", str, required=True, help="output directory"),
    Option("profile", str, help="generator profile file (key=value)"),
    Option("shared_profile", bool, False, help="all subjects share one typing profile"),
]

_INGEST_OPTS = [
    Option("corpus", str, required=True, help="corpus file"),
    Option("kind", str, "development", choices=["development", "evaluation"], help="corpus kind"),
    Option("key", str, help="evaluation key file"),
    Option("min_sessions", int, help="reject subjects with fewer sessions"),
    Option("canonical_out", str, help="write a canonically sorted copy here"),
]

_FEATURES_OPTS = [
    Option("corpus", str, required=True, help="development corpus file"),
    Option("out", str, required=True, help="normalizer output file"),
    Option("clip_low", float, 0.001, help="lower clip quantile"),
    Option("clip_high", float, 0.999, help="upper clip quantile"),
]

_PROTOCOL_OPTS = [
    Option("corpus", str, required=True, help="evaluation corpus file"),
    Option("key", str, required=True, help="evaluation key file"),
    Option("out", str, required=True, help="comparison list output file"),
    Option("seed", int, 0, help="protocol seed"),
    Option("age_bins", str, "10,20,30,40,50,60,70", help="age bin edges"),
]

_TRAIN_HYPER = [
    Option("seq_len", int, 70, help="fixed sequence length"),
    Option("embedding_dim", int, 64, help="embedding width"),
    Option("hidden_sizes", str, "128", help="comma-separated hidden layer widths"),
    Option("margin", float, 1.5, help="triplet margin"),
    Option("learning_rate", float, 0.05, help="SGD learning rate"),
    Option("epochs", int, 30, help="training epochs"),
    Option("subjects_per_batch", int, 16, help="subjects per batch"),
    Option("sessions_per_subject", int, 4, help="sessions per subject per batch"),
]

_TRAIN_OPTS = [
    Option("corpus", str, required=True, help="development corpus file"),
    Option("normalizer", str, help="pre-fitted normalizer file (fit internally if omitted)"),
    Option("out", str, required=True, help="model output file"),
    Option("seed", int, 0, help="training seed"),
    *_TRAIN_HYPER,
]

_SCORE_OPTS = [
    Option("corpus", str, required=True, help="evaluation corpus file"),
    Option("list", str, required=True, help="comparison list file"),
    Option("scorer", str, "stat", choices=["stat", "embedding"], help="scorer backend"),
    Option("out", str, required=True, help="score output file"),
    Option("workers", int, 1, help="scoring worker threads"),
    Option("dev_corpus", str, help="development corpus (stat scorer)"),
    Option("model", str, help="model file (embedding scorer)"),
    Option("normalizer", str, help="normalizer file (embedding scorer)"),
]

_EVALUATE_OPTS = [
    Option("scores", str, required=True, help="score file"),
    Option("list", str, required=True, help="comparison list file"),
    Option("key", str, help="evaluation key file (verifies labels)"),
    Option("out_dir", str, required=True, help="metrics output directory"),
    Option("normal_deviate", bool, False, help="add probit columns to curve files"),
]

_REPORT_OPTS = [Option("summary", str, required=True, help="summary.txt from evaluate")]

_PIPELINE_OPTS = [
    Option("out_dir", str, required=True, help="artifact directory"),
    Option("seed", int, 0, help="seed for every stage"),
    Option("dev_subjects", int, 60, help="development subjects"),
    Option("dev_sessions", int, 15, help="development sessions per subject"),
    Option("eval_subjects", int, 40, help="evaluation subjects"),
    Option("scorer", str, "both", choices=["stat", "embedding", "both"], help="scorers to run"),
    Option("workers", int, 1, help="scoring worker threads"),
    Option("age_bins", str, "10,20,30,40,50,60,70", help="age bin edges"),
    Option("clip_low", float, 0.001, help="lower clip quantile"),
    Option("clip_high", float, 0.999, help="upper clip quantile"),
    Option("profile", str, help="generator profile file"),
    Option("shared_profile", bool, False, help="degenerate corpus: one shared typing profile"),
    Option("normal_deviate", bool, False, help="add probit columns to curve files"),
    *_TRAIN_HYPER,
]


def _hyper_kwargs(cfg: dict) -> dict:
    out = {name: cfg[name] for name in _TRAIN_OPTION_NAMES if name in cfg}
    out["hidden_sizes"] = _parse_hidden(cfg["hidden_sizes"])
    return out


def _dispatch_synth(cfg):
    run_synth(cfg["kind"], cfg["subjects"], cfg["sessions"], cfg["seed"], cfg["out_dir"], cfg["profile"], cfg["shared_profile"])


def _dispatch_ingest(cfg):
    run_ingest(cfg["corpus"], cfg["kind"], cfg["key"], cfg["min_sessions"], cfg["canonical_out"])


def _dispatch_features(cfg):
    run_features(cfg["corpus"], cfg["out"], cfg["clip_low"], cfg["clip_high"])


def _dispatch_protocol(cfg):
    run_protocol(cfg["corpus"], cfg["key"], cfg["out"], cfg["seed"], cfg["age_bins"])


def _dispatch_train(cfg):
    run_train(cfg["corpus"], cfg["normalizer"], cfg["out"], cfg["seed"], **_hyper_kwargs(cfg))


def _dispatch_score(cfg):
    run_score(
        cfg["corpus"], cfg["list"], cfg["scorer"], cfg["out"], cfg["workers"],
        dev_corpus=cfg["dev_corpus"], model=cfg["model"], normalizer=cfg["normalizer"],
    )


def _dispatch_evaluate(cfg):
    run_evaluate(cfg["scores"], cfg["list"], cfg["out_dir"], cfg["key"], cfg["normal_deviate"])


def _dispatch_report(cfg):
    run_report(cfg["summary"])


def _dispatch_pipeline(cfg):
    run_pipeline(
        cfg["out_dir"], cfg["seed"], cfg["dev_subjects"], cfg["dev_sessions"], cfg["eval_subjects"],
        cfg["scorer"], cfg["workers"], cfg["age_bins"], cfg["clip_low"], cfg["clip_high"],
        profile_path=cfg["profile"], shared_profile=cfg["shared_profile"],
        normal_deviate=cfg["normal_deviate"], **_hyper_kwargs(cfg),
    )


_COMMANDS = [
    ("synth", "generate a synthetic corpus", _SYNTH_OPTS, _dispatch_synth),
    ("ingest", "validate a corpus file and print statistics", _INGEST_OPTS, _dispatch_ingest),
    ("features", "fit and write the feature normalizer", _FEATURES_OPTS, _dispatch_features),
    ("protocol", "generate the comparison list", _PROTOCOL_OPTS, _dispatch_protocol),
    ("train", "train the embedding verifier", _TRAIN_OPTS, _dispatch_train),
    ("score", "score a comparison list", _SCORE_OPTS, _dispatch_score),
    ("evaluate", "compute metrics from a score file", _EVALUATE_OPTS, _dispatch_evaluate),
    ("report", "re-render the metric table from a summary file", _REPORT_OPTS, _dispatch_report),
    ("pipeline", "run the whole demo pipeline", _PIPELINE_OPTS, _dispatch_pipeline),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kvbench", description=__doc__)
    parser.add_argument("--version", action="version", version=f"kvbench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text, options, dispatch in _COMMANDS:
        p = sub.add_parser(name, help=help_text)
        _add_options(p, options)
        p.set_defaults(_options=options, _dispatch=dispatch)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        cfg = _resolve(args, args._options)
        args._dispatch(cfg)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KvbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
