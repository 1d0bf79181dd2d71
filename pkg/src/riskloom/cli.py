"""Command-line entry point.

Exit codes: 0 on success, 1 for invalid arguments, configuration or inputs that
fail validation, 2 for runtime failures (missing files, unreachable services,
malformed data).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .bdi import DEFAULT_CUTOFFS, SymptomVector, assessment_report, load_persona_scores, validate_cutoffs
from .corpus import (
    DEFAULT_COMMUNITIES,
    Source,
    build_training_corpus,
    corpus_stats,
    load_provided,
    load_thread_dump,
    read_corpus,
    subject_from_tree,
    write_corpus,
)
from .dialogue import InteractionStats, TranscriptWriter, interaction_stats, run_session
from .gateway import (
    EndpointConfig,
    MockEvaluator,
    MockGateway,
    OpenAIChatGateway,
    PersonaScript,
    ScriptedPersona,
    load_personas,
)
from .metrics import DEFAULT_CHECKPOINTS, KeyMismatch, decision_report, ranking_report
from .prompts import StrategyKind
from .report import (
    assessment_table,
    decision_table,
    emit,
    interaction_table,
    ranking_table,
    render_table,
    stats_table,
)
from .scoring import DecisionPolicy, RemoteScorer, StreamClient, default_lexicon, load_lexicon, score_lexicon
from .stream import DecisionLog, RunState, run_stream, serve_jsonl

log = logging.getLogger("riskloom")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
MOCK_GATEWAY = "mock"


class ValidationError(ValueError):
    """Bad arguments, configuration, or inputs that cannot be evaluated."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


# -- argument helpers -----------------------------------------------------------------

def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(x) for x in str(text).split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _name_list(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in str(text).split(",") if x.strip())


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) in (None, "", [])]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise ValidationError(f"{args.command}: missing required option(s) {flags}")


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("._") or "persona"


# -- subcommands ------------------------------------------------------------------------

def _load_labeled_trees(args):
    trees = []
    for path in args.positive or []:
        trees += [(t, 1, Source.SCRAPED_POSITIVE) for t in load_thread_dump(path)]
    for path in args.negative or []:
        trees += [(t, 0, Source.SCRAPED_NEGATIVE) for t in load_thread_dump(path)]
    return trees


def cmd_ingest(args) -> tuple[dict, list[str]]:
    _require(args, "out")
    if not (args.positive or args.negative or args.provided):
        raise ValidationError("ingest: give at least one of --positive, --negative, --provided")
    communities = args.communities or DEFAULT_COMMUNITIES
    scraped = [subject_from_tree(t, y, src, communities) for t, y, src in _load_labeled_trees(args)]
    pos = [r for r in scraped if r.label == 1]
    neg = [r for r in scraped if r.label == 0]
    provided = load_provided(args.provided, communities) if args.provided else []
    provided_neg = [r for r in provided if r.label == 0]
    if len(provided_neg) < len(provided):
        log.warning("ignoring %d provided subjects labeled positive; only negatives are sampled", len(provided) - len(provided_neg))
    sample_n = len(provided_neg) if args.sample_n is None else args.sample_n
    corpus, manifest = build_training_corpus(pos, neg, provided_neg, sample_n, args.seed, args.created_at)

    write_corpus(args.out, corpus)
    manifest_path = args.manifest or f"{args.out}.manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    counts = {f"{label}:{source}": n for (label, source), n in sorted(manifest.counts.items())}
    doc = {
        "subjects": manifest.size,
        "positives": sum(n for (label, _), n in manifest.counts.items() if label == 1),
        "negatives": sum(n for (label, _), n in manifest.counts.items() if label == 0),
        "counts": counts,
        "seed": args.seed,
    }
    rows = [[k, str(v)] for k, v in counts.items()] + [["total", str(manifest.size)]]
    return doc, [render_table(["label:source", "subjects"], rows)]


def cmd_stats(args) -> tuple[dict, list[str]]:
    if not (args.positive or args.negative):
        raise ValidationError("stats: give at least one of --positive, --negative")
    report = corpus_stats((t, y) for t, y, _ in _load_labeled_trees(args))
    if args.figures:
        from .plotting import plot_stats

        plot_stats(report, args.figures)
    return report.to_json(), [stats_table(report)]


def _scorer(args) -> Callable[[str], float]:
    if args.scorer == "remote":
        url = args.scorer_url or os.environ.get("RISKLOOM_SCORER_URL")
        if not url:
            raise ValidationError("stream-run: remote scorer needs --scorer-url or RISKLOOM_SCORER_URL")
        return RemoteScorer(url, timeout=args.timeout)
    table = load_lexicon(args.lexicon) if args.lexicon else default_lexicon()
    return lambda text: score_lexicon(text, table)


def _policy(args) -> DecisionPolicy:
    try:
        return DecisionPolicy(args.threshold, args.min_rounds, args.consecutive_hits)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _run_summary(result: DecisionLog) -> tuple[dict, list[str]]:
    first = result.first_positive()
    flagged = sum(1 for k in first.values() if k != float("inf"))
    rounds = max((r.k for r in result), default=0)
    doc = {"subjects": len(first), "rounds": rounds, "flagged": flagged, "decisions": len(result)}
    return doc, [render_table(["subjects", "rounds", "flagged", "decisions"], [[str(doc[k]) for k in ("subjects", "rounds", "flagged", "decisions")]])]


def cmd_stream_run(args) -> tuple[dict, list[str]]:
    _require(args, "corpus", "out")
    policy = _policy(args)
    state = RunState.from_corpus(read_corpus(args.corpus))
    result = run_stream(state, StreamClient(_scorer(args), policy))
    result.write(args.out)
    return _run_summary(result)


def cmd_stream_serve(args) -> tuple[dict, list[str]]:
    _require(args, "corpus", "out")
    state = RunState.from_corpus(read_corpus(args.corpus))
    result = serve_jsonl(state, sys.stdin, sys.stdout)
    result.write(args.out)
    return _run_summary(result)


def _load_truth(path: str) -> dict[str, int]:
    truth: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                subject = row.get("subject", row.get("subject_id"))
                label = int(row["label"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as exc:
                raise ValueError(f"{path}: line {lineno}: bad truth record ({exc})") from None
            if subject is None or label not in (0, 1):
                raise ValueError(f"{path}: line {lineno}: need a subject id and a 0/1 label")
            truth[str(subject)] = label
    return truth


def cmd_eval(args) -> tuple[dict, list[str]]:
    _require(args, "log", "truth")
    decisions = DecisionLog.read(args.log)
    if not len(decisions):
        raise ValidationError(f"eval: decision log {args.log} is empty")
    truth = _load_truth(args.truth)
    try:
        report = decision_report(decisions, truth)
    except KeyMismatch as exc:
        raise ValidationError(f"eval: {exc}") from None
    ranking = ranking_report(decisions, truth, args.checkpoints)
    if args.figures:
        from .plotting import plot_eval

        plot_eval(report, ranking, args.figures)
    doc = {"decision": report.to_json(), "ranking": {str(c): row for c, row in ranking.items()}}
    return doc, [decision_table(report, args.label), ranking_table(ranking)]


def _gateway_factory(args) -> Callable[[PersonaScript], object]:
    if args.gateway == MOCK_GATEWAY:
        return lambda script: MockGateway(MockEvaluator(script.codebook(), script.aliases))
    try:
        config = EndpointConfig.from_env(
            args.gateway, model=args.model, timeout=args.timeout, max_retries=args.max_retries, max_in_flight=args.workers
        )
    except ValueError as exc:
        raise ValidationError(f"dialogue-run: {exc}") from None
    if args.api_key:
        config.api_key = args.api_key
    shared = OpenAIChatGateway(config)
    return lambda script: shared


def cmd_dialogue_run(args) -> tuple[dict, list[str]]:
    _require(args, "persona_file", "out")
    strategies = [StrategyKind(s) for s in args.strategy]
    scripts = load_personas(args.persona_file)
    names = [s.name for s in scripts]
    if len(set(names)) != len(names):
        raise ValidationError("dialogue-run: persona names must be unique")
    make_gateway = _gateway_factory(args)
    out = Path(args.out)

    def one(strategy: StrategyKind, script: PersonaScript):
        run_dir = out / strategy.value
        run_dir.mkdir(parents=True, exist_ok=True)
        stem = _safe_name(script.name)
        writer = TranscriptWriter(run_dir / f"{stem}.jsonl")
        vector, turns = run_session(strategy, script.name, make_gateway(script), ScriptedPersona(script), writer)
        with open(run_dir / f"{stem}.json", "w", encoding="utf-8") as fh:
            json.dump({"persona": script.name, "scores": vector.as_dict()}, fh, indent=2)
            fh.write("\n")
        return vector, turns

    doc: dict = {"runs": {}}
    stats: dict[str, InteractionStats] = {}
    lengths: dict[str, list[int]] = {}
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        for strategy in strategies:
            results = list(pool.map(lambda s: one(strategy, s), scripts))
            sessions = [turns for _, turns in results]
            stats[strategy.value] = interaction_stats(sessions)
            lengths[strategy.value] = [sum(1 for t in turns if t.speaker.value == "agent") for turns in sessions]
            truths = [s.ground_truth for s in scripts]
            doc["runs"][strategy.value] = {
                "interaction": stats[strategy.value].to_json(),
                "assessment": assessment_report([v for v, _ in results], truths),
                "predictions": {s.name: v.as_dict() for s, (v, _) in zip(scripts, results)},
            }
    with open(out / "interaction_stats.json", "w", encoding="utf-8") as fh:
        json.dump({k: v.to_json() for k, v in stats.items()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if args.figures:
        from .plotting import plot_interaction

        plot_interaction(lengths, args.figures)
    tables = [interaction_table(stats)]
    tables.append(assessment_table({name: run["assessment"] for name, run in doc["runs"].items()}))
    return doc, tables


def _load_predictions(pred_dir: str) -> dict[str, SymptomVector]:
    path = Path(pred_dir)
    if not path.is_dir():
        raise FileNotFoundError(f"prediction directory not found: {pred_dir}")
    preds: dict[str, SymptomVector] = {}
    for file in sorted(path.glob("*.json")):
        if file.name == "interaction_stats.json":
            continue
        for name, vector in load_persona_scores(file).items():
            if name in preds:
                raise ValidationError(f"assess: persona {name!r} predicted twice (again in {file})")
            preds[name] = vector
    return preds


def cmd_assess(args) -> tuple[dict, list[str]]:
    _require(args, "pred", "truth")
    try:
        cutoffs = validate_cutoffs(args.cutoffs)
    except ValueError as exc:
        raise ValidationError(f"assess: {exc}") from None
    preds = _load_predictions(args.pred)
    truths = load_persona_scores(args.truth)
    if not preds:
        raise ValidationError(f"assess: no predictions found in {args.pred}")
    if set(preds) != set(truths):
        raise ValidationError(
            f"assess: personas differ (predicted only: {sorted(set(preds) - set(truths))}, "
            f"truth only: {sorted(set(truths) - set(preds))})"
        )
    names = sorted(truths)
    p = [preds[n] for n in names]
    t = [truths[n] for n in names]
    scores = assessment_report(p, t, cutoffs)
    if args.figures:
        from .plotting import plot_assessment

        plot_assessment(names, p, t, args.figures)
    doc = {
        **scores,
        "personas": {n: {"predicted_total": preds[n].total(), "true_total": truths[n].total()} for n in names},
    }
    return doc, [assessment_table({args.label: scores})]


# -- parser ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="riskloom", description="Early risk detection and interview-based symptom assessment.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="TOML or JSON file with option defaults")
    parser.add_argument("--format", choices=("both", "json", "table"), default="both", help="stdout report format")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    def add(name: str, func, help_: str) -> _Parser:
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(func=func)
        return p

    def dumps_args(p):
        p.add_argument("--positive", action="append", metavar="DUMP", help="thread dump of positive subjects (repeatable)")
        p.add_argument("--negative", action="append", metavar="DUMP", help="thread dump of negative subjects (repeatable)")

    p = add("ingest", cmd_ingest, "Build a labeled training corpus from thread dumps and provided subjects.")
    dumps_args(p)
    p.add_argument("--provided", metavar="JSONL", help="context-free subjects to sample negatives from")
    p.add_argument("--sample-n", type=int, help="provided negatives to sample (default: all)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--communities", type=_name_list, help="comma list of community names to scrub")
    p.add_argument("--created-at", type=int, help="manifest timestamp (default: SOURCE_DATE_EPOCH or now)")
    p.add_argument("--out", metavar="CORPUS")
    p.add_argument("--manifest", metavar="PATH")

    p = add("stats", cmd_stats, "Volumetric statistics of thread dumps.")
    dumps_args(p)
    p.add_argument("--figures", metavar="DIR")

    for name, func, help_ in (
        ("stream-run", cmd_stream_run, "Replay a corpus round by round against a scorer."),
        ("stream-serve", cmd_stream_serve, "Replay a corpus over JSON lines on stdin/stdout."),
    ):
        p = add(name, func, help_)
        p.add_argument("--corpus", metavar="JSONL")
        p.add_argument("--out", metavar="LOG")
        if name == "stream-run":
            p.add_argument("--scorer", choices=("lexicon", "remote"), default="lexicon")
            p.add_argument("--lexicon", metavar="TSV")
            p.add_argument("--scorer-url")
            p.add_argument("--threshold", type=float, default=0.5)
            p.add_argument("--min-rounds", type=int, default=1)
            p.add_argument("--consecutive-hits", type=int, default=1)
            p.add_argument("--timeout", type=float, default=10.0)

    p = add("eval", cmd_eval, "Decision and ranking metrics for a decision log.")
    p.add_argument("--log", metavar="LOG")
    p.add_argument("--truth", metavar="JSONL")
    p.add_argument("--checkpoints", type=_int_list, default=DEFAULT_CHECKPOINTS)
    p.add_argument("--label", default="run", help="row label in the table")
    p.add_argument("--figures", metavar="DIR")

    p = add("dialogue-run", cmd_dialogue_run, "Interview scripted personas and record predicted symptom scores.")
    p.add_argument("--strategy", type=_name_list, default=("run0",), help="comma list of run0, run1, run2")
    p.add_argument("--persona-file", metavar="JSON")
    p.add_argument("--gateway", help=f"chat-completions base URL, or '{MOCK_GATEWAY}' for the offline loop")
    p.add_argument("--api-key", help="prefer the RISKLOOM_LLM_KEY environment variable")
    p.add_argument("--model", default=EndpointConfig.model)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--workers", type=int, default=1, help="concurrent persona sessions")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--figures", metavar="DIR")

    p = add("assess", cmd_assess, "DCHR, ADODL and ASHR of predicted symptom scores.")
    p.add_argument("--pred", metavar="DIR")
    p.add_argument("--truth", metavar="FILE")
    p.add_argument("--cutoffs", type=_int_list, default=DEFAULT_CUTOFFS, help="upper bounds of the four severity bands")
    p.add_argument("--label", default="run")
    p.add_argument("--figures", metavar="DIR")
    return parser


# -- config ---------------------------------------------------------------------------

_GLOBAL_KEYS = {"format", "verbose"}


def _read_config(path: str) -> dict:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.endswith(".json"):
            data = json.loads(raw)
        else:
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            data = tomllib.loads(raw.decode("utf-8"))
    except ValueError as exc:
        raise ValidationError(f"config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"config {path}: top level must be a table")
    return data


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str], args: argparse.Namespace) -> argparse.Namespace:
    """Config values become defaults, so explicit flags still win.

    Keys may sit at the top level or under a table named after the subcommand.
    """
    data = _read_config(args.config)
    sub = _subparser(parser, args.command)
    known = {a.dest for a in sub._actions if a.dest not in ("help", "func")}
    commands = set(parser._subparsers._group_actions[0].choices)
    flat = {k: v for k, v in data.items() if k not in commands}
    section = data.get(args.command, {})
    if not isinstance(section, dict):
        raise ValidationError(f"config: [{args.command}] must be a table")
    merged = {**flat, **section}
    normalized = {k.replace("-", "_"): v for k, v in merged.items()}
    unknown = sorted(set(normalized) - known - _GLOBAL_KEYS)
    if unknown:
        raise ValidationError(f"config: unknown key(s) for {args.command}: {', '.join(unknown)}")

    converters = {a.dest: a.type for a in sub._actions if a.type is not None}
    sub_defaults = {}
    for key, value in normalized.items():
        if key in _GLOBAL_KEYS:
            continue
        conv = converters.get(key)
        if conv in (_int_list, _name_list) and isinstance(value, list):
            value = ",".join(str(v) for v in value)
        if key in ("positive", "negative") and isinstance(value, str):
            value = [value]
        try:
            sub_defaults[key] = conv(value) if conv is not None and not isinstance(value, list) else value
        except (argparse.ArgumentTypeError, ValueError, TypeError) as exc:
            raise ValidationError(f"config: bad value for {key}: {exc}") from None
    sub.set_defaults(**sub_defaults)
    top_defaults = {k: normalized[k] for k in _GLOBAL_KEYS if k in normalized}
    parser.set_defaults(**top_defaults)
    return parser.parse_args(argv)


# -- main -----------------------------------------------------------------------------

def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help and --version
            return int(exc.code or 0)
        if args.config:
            args = _apply_config(parser, argv, args)
        if args.format not in ("both", "json", "table"):
            raise ValidationError(f"unknown format {args.format!r}")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        doc, tables = args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        log.debug("failure details", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    # stream-serve owns stdout for the wire protocol
    out = sys.stderr if args.command == "stream-serve" else sys.stdout
    out.write(emit(doc, tables, args.format))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
