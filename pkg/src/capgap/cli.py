"""Command-line front door for every pipeline phase and the validation harness.

Exit codes: 0 success, 1 operational error, 2 usage error. Configuration
precedence: flags win over the config file; environment variables supply only
secrets and endpoints.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import clarify
from .backends import (
    EvaluatorBackend,
    OracleBackend,
    OracleConfig,
    RemoteBackend,
    RemoteConfig,
    ReplayBackend,
    default_oracle_config,
    fixture_subgoal_set,
)
from .corruption import PoolConfig, build_pool, load_builtin_patterns, load_patterns, run_experiment
from .coverage import assess, load_matrix, save_matrix
from .errors import CapgapError, PartialResultError
from .gaps import GapReport, detect_gaps
from .model import (
    Dataset,
    ExperimentReport,
    Goal,
    Sample,
    SubgoalSet,
    canonical_json,
    dataset_from_jsonl,
)
from .planter import plant_pool
from .reports import insights_markdown, write_report
from .stats import SeparationResult, separation_report
from .storage import FieldMapping, ReplayStore, ScoreCache, load_dataset, write_dataset_jsonl
from .synthesis import (
    FilterPolicy,
    RecommendationFailure,
    SynthesisConfig,
    SynthesisRun,
    filter_dataset,
    recommend_for_gaps,
    synthesize,
)


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _setting(args: argparse.Namespace, config: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _build_backend(args: argparse.Namespace, config: dict) -> EvaluatorBackend:
    kind = _setting(args, config, "backend", "oracle")
    if kind == "oracle":
        oracle_config_path = _setting(args, config, "oracle_config")
        domain = _setting(args, config, "domain")
        if oracle_config_path:
            raw = json.loads(Path(oracle_config_path).read_text(encoding="utf-8"))
            if isinstance(raw, dict) and "keywords" in raw:
                raw = raw["keywords"]
            oracle_config = OracleConfig.from_dict(raw)
        elif domain:
            oracle_config = default_oracle_config(domain)
        else:
            raise CapgapError("oracle backend needs --oracle-config or --domain")
        return OracleBackend(oracle_config)
    if kind == "remote":
        return RemoteBackend(RemoteConfig.from_env())
    if kind == "replay":
        replay_dir = _setting(args, config, "replay_dir")
        if not replay_dir:
            raise CapgapError("replay backend needs --replay-dir")
        store = ReplayStore(replay_dir)
        if getattr(args, "record", False):
            return ReplayBackend(store, inner=RemoteBackend(RemoteConfig.from_env()))
        return ReplayBackend(store)
    raise CapgapError(f"unknown backend {kind!r}")


def _open_cache(args: argparse.Namespace, config: dict) -> Optional[ScoreCache]:
    cache_dir = _setting(args, config, "cache_dir")
    return ScoreCache(cache_dir) if cache_dir else None


def _read_dataset(args: argparse.Namespace, config: dict) -> Dataset:
    mapping = FieldMapping(
        input_field=_setting(args, config, "input_field", "input"),
        output_field=_setting(args, config, "output_field", "output"),
        id_field=_setting(args, config, "id_field"),
    )
    return load_dataset(args.dataset, mapping, limit=getattr(args, "limit", None))


def _read_subgoals(path: str) -> SubgoalSet:
    return SubgoalSet.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _write_json(payload: dict, path: str | Path) -> None:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(canonical_json(payload) + "\n", encoding="utf-8")


# -- subcommand implementations -------------------------------------------------


def _cmd_clarify(args: argparse.Namespace, config: dict) -> int:
    backend = _build_backend(args, config)
    store = None
    if args.data_dir:
        from .storage import DocumentStore

        store = DocumentStore(Path(args.data_dir) / "sessions")

    def persist(session) -> None:
        if store is not None:
            store.save(session.id, session.to_dict())

    scripted: Optional[list[list[str]]] = None
    if args.responses_file:
        scripted = json.loads(Path(args.responses_file).read_text(encoding="utf-8"))

    if args.resume:
        if store is None:
            raise CapgapError("--resume requires --data-dir")
        doc = store.load(args.resume)
        if doc is None:
            raise CapgapError(f"no stored session {args.resume!r}")
        session = clarify.ClarificationSession.from_dict(doc)
    else:
        if not args.goal:
            raise CapgapError("either --goal or --resume is required")
        goal = Goal(
            id="",
            statement=args.goal,
            domain_label=_setting(args, config, "domain", "") or "",
            task_type=_setting(args, config, "task_type", "") or "",
        )
        session = clarify.start_session(goal, backend, max_rounds=args.max_rounds)
        persist(session)
        if store is not None:
            print(f"session id: {session.id}")
    round_index = 0
    while session.state is clarify.SessionState.AWAITING_RESPONSES:
        questions = session.pending_questions
        if scripted is not None:
            if round_index < len(scripted):
                answers = [str(a) for a in scripted[round_index]]
                if len(answers) != len(questions):
                    answers = (answers + [""] * len(questions))[: len(questions)]
                    answers = [a or "(no answer)" for a in answers]
            else:
                session = clarify.force_finalize(session, backend)
                persist(session)
                break
        else:
            answers = []
            for question in questions:
                print(f"? {question}")
                answers.append(input("> ").strip() or "(no answer)")
        round_index += 1
        session = clarify.submit_responses(session, answers, backend)
        persist(session)

    if session.result is None:
        raise CapgapError("session did not produce a decomposition")
    print(f"decomposed into {len(session.result.subgoals)} subgoals:")
    for subgoal in session.result.subgoals:
        print(f"  - {subgoal.label}: {subgoal.description}")
    if args.out:
        _write_json(session.result.to_dict(), args.out)
    if args.transcript:
        _write_json(session.to_dict(), args.transcript)
    return 0


def _validate_oracle_config(backend: EvaluatorBackend, subgoals: SubgoalSet) -> None:
    config = getattr(backend, "config", None)
    if isinstance(config, OracleConfig):
        config.validate_against(subgoals)


def _cmd_assess(args: argparse.Namespace, config: dict) -> int:
    backend = _build_backend(args, config)
    dataset = _read_dataset(args, config)
    subgoals = _read_subgoals(args.subgoals)
    _validate_oracle_config(backend, subgoals)
    tau = float(_setting(args, config, "tau", 0.4))
    concurrency = int(_setting(args, config, "concurrency", 8))
    cache = _open_cache(args, config)
    try:
        if args.dry_run:
            pairs = len(dataset) * len(subgoals.subgoals)
            cached = 0
            if cache is not None:
                from .storage import ScoreCacheKey

                for sample in dataset.samples:
                    for subgoal in subgoals.subgoals:
                        key = ScoreCacheKey.for_pair(sample, subgoal.id, backend.id)
                        if cache.get(key) is not None:
                            cached += 1
            print(f"pairs: {pairs} ({len(dataset)} samples x {len(subgoals.subgoals)} subgoals)")
            print(f"cached: {cached}")
            print(f"estimated evaluations: {pairs - cached}")
            return 0
        try:
            matrix = assess(
                dataset, subgoals, backend,
                tau=tau, concurrency_limit=concurrency, cache=cache,
            )
        except PartialResultError as exc:
            save_matrix(exc.partial, args.out)
            print(f"partial result: {exc}", file=sys.stderr)
            return 1
        summary_path, records_path = save_matrix(matrix, args.out)
        print(f"wrote {records_path} ({len(matrix.records)} records) and {summary_path}")
        for summary in matrix.summaries:
            mean = "unscorable" if summary.mean_score is None else f"{summary.mean_score:.3f}"
            print(f"  {summary.subgoal_id}: mean={mean} low={summary.n_low} failed={summary.n_failed}")
        return 0
    finally:
        if cache is not None:
            cache.close()


def _cmd_gaps(args: argparse.Namespace, config: dict) -> int:
    backend = _build_backend(args, config)
    matrix = load_matrix(args.matrix)
    tau = float(_setting(args, config, "tau", matrix.threshold_tau))
    report = detect_gaps(matrix, tau, backend, max_evidence=args.max_evidence)
    _write_json(report.to_dict(), args.out)
    if args.markdown:
        write_report(report, "markdown", args.markdown)
    print(f"flagged {len(report.flagged_subgoal_ids)} subgoal(s): "
          f"{', '.join(report.flagged_subgoal_ids) or '(none)'}")
    return 0


def _cmd_recommend(args: argparse.Namespace, config: dict) -> int:
    backend = _build_backend(args, config)
    report = GapReport.from_dict(json.loads(Path(args.gaps).read_text(encoding="utf-8")))
    results = recommend_for_gaps(report, backend)
    _write_json(
        {"gaps_id": report.matrix_id, "recommendations": [r.to_dict() for r in results]},
        args.out,
    )
    if args.markdown:
        Path(args.markdown).parent.mkdir(parents=True, exist_ok=True)
        Path(args.markdown).write_text(insights_markdown(report, results), encoding="utf-8")
    failures = sum(1 for r in results if isinstance(r, RecommendationFailure))
    print(f"{len(results)} recommendation(s), {failures} failure marker(s)")
    return 0


def _cmd_synthesize(args: argparse.Namespace, config: dict) -> int:
    backend = _build_backend(args, config)
    subgoals = _read_subgoals(args.subgoals)
    subgoal = subgoals.get(args.subgoal_id)
    finding = None
    if args.gaps:
        report = GapReport.from_dict(json.loads(Path(args.gaps).read_text(encoding="utf-8")))
        finding = next((f for f in report.findings if f.subgoal_id == args.subgoal_id), None)
    run_config = SynthesisConfig(
        target_count=args.target,
        accept_threshold=args.threshold,
        max_iterations=args.max_iterations,
        batch_size=args.batch_size,
    )
    try:
        run = synthesize(subgoal, finding, backend, backend, run_config)
    except PartialResultError as exc:
        write_report(exc.partial, "json", Path(args.out).with_suffix(".run.json"))
        print(f"synthesis failed: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    write_dataset_jsonl(
        Dataset(id="", samples=run.accepted, source=f"synthesize({subgoal.id})"), out
    )
    provenance = {s.id: sorted(s.tags) for s in run.accepted}
    _write_json(
        {"schema_version": 1, "kind": "synthesis_provenance", "samples": provenance},
        out.with_suffix(".provenance.json"),
    )
    write_report(run, "json", out.with_suffix(".run.json"))
    print(f"accepted {len(run.accepted)}/{run.target_count} in {run.iterations_used} iteration(s)")
    return 0


def _cmd_filter(args: argparse.Namespace, config: dict) -> int:
    dataset = _read_dataset(args, config)
    matrix = load_matrix(args.matrix)
    policy = FilterPolicy(mode=args.mode, theta=args.theta)
    filtered = filter_dataset(dataset, matrix, policy)
    write_dataset_jsonl(filtered, args.out)
    print(f"kept {len(filtered)} of {len(dataset)} samples")
    return 0


def _cmd_corrupt(args: argparse.Namespace, config: dict) -> int:
    backend = _build_backend(args, config)
    dataset = _read_dataset(args, config)
    subgoals = _read_subgoals(args.subgoals)
    _validate_oracle_config(backend, subgoals)
    tau = float(_setting(args, config, "tau", 0.4))
    patterns = load_builtin_patterns() if args.builtin_patterns else load_patterns(args.patterns)
    if args.pattern:
        patterns = [p for p in patterns if p.name == args.pattern]
        if not patterns:
            raise CapgapError(f"no pattern named {args.pattern!r}")
    known = set(subgoals.subgoal_ids())
    foreign = [p.name for p in patterns if p.target_subgoal_id not in known]
    if foreign:
        # the builtin file spans several domains; only strategies aimed at
        # the active subgoal set can run
        print(f"skipping {len(foreign)} pattern(s) targeting other subgoal sets: "
              f"{', '.join(foreign)}", file=sys.stderr)
        patterns = [p for p in patterns if p.target_subgoal_id in known]
    if not patterns:
        raise CapgapError("no pattern targets a subgoal in the active set")
    cache = _open_cache(args, config)
    labels = {s.id: s.label for s in subgoals.subgoals}
    try:
        original_matrix = assess(
            dataset, subgoals, backend, tau=tau,
            concurrency_limit=int(_setting(args, config, "concurrency", 8)), cache=cache,
        )
        for pattern in patterns:
            report = run_experiment(
                dataset, subgoals, pattern, backend, tau=tau,
                original_matrix=original_matrix,
            )
            out = Path(args.out) / f"{pattern.name}.experiment.json"
            write_report(report, "json", out)
            if args.markdown:
                write_report(
                    report, "markdown",
                    Path(args.out) / f"{pattern.name}.experiment.md", labels=labels,
                )
            target = report.target_row
            rel = "n/a" if target.delta_rel_pct is None else f"{target.delta_rel_pct:+.2f}%"
            print(f"{pattern.name}: retention {report.retention_pct:.1f}%, target delta_rel {rel}")
        return 0
    finally:
        if cache is not None:
            cache.close()


def _cmd_stats(args: argparse.Namespace, config: dict) -> int:
    experiments = []
    for path in args.reports:
        experiments.append(
            ExperimentReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        )
    result = separation_report(experiments)
    write_report(result, "json", args.out)
    if args.markdown:
        write_report(result, "markdown", args.markdown)
    print(
        f"targets {result.mean_target_degradation:.1f}% vs "
        f"non-targets {result.mean_nontarget_degradation:.1f}% degradation; "
        f"d={result.cohens_d:.2f}, t={result.t_statistic:.3f}, p={result.p_value:.4g}"
    )
    return 0


def _cmd_pool(args: argparse.Namespace, config: dict) -> int:
    source = _read_dataset(args, config)
    patterns = load_builtin_patterns() if args.builtin_patterns else load_patterns(args.patterns)
    pool_config = PoolConfig(
        target_size=args.target_size,
        pool_factor=args.pool_factor,
        base_fraction=args.base_fraction,
        seed=args.seed,
    )
    pool = build_pool(source, patterns, pool_config)
    write_dataset_jsonl(pool, args.out)
    print(f"pool of {len(pool)} samples written to {args.out}")
    return 0


def _cmd_plant(args: argparse.Namespace, config: dict) -> int:
    keywords = json.loads(Path(args.keywords).read_text(encoding="utf-8"))
    densities = json.loads(Path(args.densities).read_text(encoding="utf-8"))
    pool = plant_pool(keywords, densities, n=args.n, seed=args.seed)
    write_dataset_jsonl(pool, args.out)
    print(f"planted {len(pool)} samples to {args.out}")
    return 0


def _cmd_report(args: argparse.Namespace, config: dict) -> int:
    payload = json.loads(Path(args.infile).read_text(encoding="utf-8"))
    kind = payload.get("kind")
    if kind == "experiment_report":
        report = ExperimentReport.from_dict(payload)
    elif kind == "gap_report":
        report = GapReport.from_dict(payload)
    elif kind == "separation_result":
        report = SeparationResult.from_dict(payload)
    elif kind == "synthesis_run":
        report = SynthesisRun.from_dict(payload)
    else:
        raise CapgapError(f"cannot render report of kind {kind!r}")
    write_report(report, args.format, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_serve(args: argparse.Namespace, config: dict) -> int:
    import uvicorn

    from .service import create_app

    backend = _build_backend(args, config)
    app = create_app(args.data_dir, backend, static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


# -- parser -----------------------------------------------------------------------


def _add_backend_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["oracle", "remote", "replay"], default=None)
    parser.add_argument("--oracle-config", dest="oracle_config", default=None,
                        help="JSON file mapping subgoal_id to keyword terms")
    parser.add_argument("--domain", default=None,
                        help="use the shipped fixture config for this domain")
    parser.add_argument("--replay-dir", dest="replay_dir", default=None)
    parser.add_argument("--record", action="store_true",
                        help="record remote calls into the replay store")


def _add_dataset_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="JSONL dataset path")
    parser.add_argument("--input-field", dest="input_field", default=None)
    parser.add_argument("--output-field", dest="output_field", default=None)
    parser.add_argument("--id-field", dest="id_field", default=None)
    parser.add_argument("--limit", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capgap",
        description="Capability-gap diagnostics for fine-tuning datasets.",
    )
    parser.add_argument("--config", default=None, help="JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clarify", help="interactive goal clarification")
    p.add_argument("--goal", default=None)
    p.add_argument("--task-type", dest="task_type", default=None)
    p.add_argument("--max-rounds", type=int, default=3)
    p.add_argument("--responses-file", default=None,
                   help="JSON list of answer rounds for scripted runs")
    p.add_argument("--data-dir", dest="data_dir", default=None,
                   help="persist the session after every transition")
    p.add_argument("--resume", default=None, help="resume a persisted session id")
    p.add_argument("--out", default=None, help="write the subgoal set JSON here")
    p.add_argument("--transcript", default=None)
    _add_backend_options(p)
    p.set_defaults(func=_cmd_clarify)

    p = sub.add_parser("assess", help="score every (sample, subgoal) pair")
    _add_dataset_options(p)
    p.add_argument("--subgoals", required=True, help="subgoal set JSON")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--concurrency", type=int, default=None)
    p.add_argument("--cache-dir", dest="cache_dir", default=None)
    p.add_argument("--out", required=True, help="output prefix for matrix files")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    _add_backend_options(p)
    p.set_defaults(func=_cmd_assess)

    p = sub.add_parser("gaps", help="flag subgoals below tau and analyze them")
    p.add_argument("--matrix", required=True, help="matrix summary JSON")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--max-evidence", type=int, default=50)
    p.add_argument("--out", required=True)
    p.add_argument("--markdown", default=None)
    _add_backend_options(p)
    p.set_defaults(func=_cmd_gaps)

    p = sub.add_parser("recommend", help="remediation for a gap report")
    p.add_argument("--gaps", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--markdown", default=None)
    _add_backend_options(p)
    p.set_defaults(func=_cmd_recommend)

    p = sub.add_parser("synthesize", help="generator-discriminator synthesis")
    p.add_argument("--subgoals", required=True)
    p.add_argument("--subgoal-id", dest="subgoal_id", required=True)
    p.add_argument("--gaps", default=None)
    p.add_argument("--target", type=int, default=8)
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--max-iterations", dest="max_iterations", type=int, default=5)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=8)
    p.add_argument("--out", required=True, help="accepted samples JSONL path")
    p.add_argument("--seed", type=int, default=0)
    _add_backend_options(p)
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("filter", help="goal-aligned dataset filtering")
    _add_dataset_options(p)
    p.add_argument("--matrix", required=True)
    p.add_argument("--mode", default="mean_over_subgoals",
                   choices=["mean_over_subgoals", "max_over_subgoals", "all_subgoals"])
    p.add_argument("--theta", type=float, default=0.4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("corrupt", help="targeted-removal experiments")
    _add_dataset_options(p)
    p.add_argument("--subgoals", required=True)
    p.add_argument("--patterns", default=None, help="removal patterns JSON")
    p.add_argument("--builtin-patterns", dest="builtin_patterns", action="store_true")
    p.add_argument("--pattern", default=None, help="run only this named pattern")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--concurrency", type=int, default=None)
    p.add_argument("--cache-dir", dest="cache_dir", default=None)
    p.add_argument("--out", required=True, help="output directory for reports")
    p.add_argument("--markdown", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    _add_backend_options(p)
    p.set_defaults(func=_cmd_corrupt)

    p = sub.add_parser("stats", help="separation statistics over experiment reports")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--markdown", default=None)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("pool", help="build a strategic experiment pool")
    _add_dataset_options(p)
    p.add_argument("--patterns", default=None)
    p.add_argument("--builtin-patterns", dest="builtin_patterns", action="store_true")
    p.add_argument("--target-size", dest="target_size", type=int, required=True)
    p.add_argument("--pool-factor", dest="pool_factor", type=float, default=1.5)
    p.add_argument("--base-fraction", dest="base_fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pool)

    p = sub.add_parser("plant", help="plant a fixture pool with known densities")
    p.add_argument("--keywords", required=True, help="JSON subgoal_id -> terms")
    p.add_argument("--densities", required=True, help="JSON subgoal_id -> density")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plant)

    p = sub.add_parser("report", help="re-render a JSON report as markdown")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=["json", "markdown"], default="markdown")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--data-dir", dest="data_dir", default="capgap_data")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8400)
    p.add_argument("--static-dir", dest="static_dir", default=None)
    _add_backend_options(p)
    p.set_defaults(func=_cmd_serve)

    return parser


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.func(args, config)
    except CapgapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
