"""Command-line driver: ``diarcorrect <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import adapters, correction, harness, merge, metrics, prep, tpst
from .prompts import PromptVariant
from .transcript import load_transcript, save_transcript

logger = logging.getLogger("diarcorrect")


def _load_config(path: str) -> dict[str, Any]:
    p = Path(path)
    if p.suffix.lower() == ".toml":
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(p, "rb") as fh:
            return tomllib.load(fh)
    with open(p, encoding="utf-8") as fh:
        return json.load(fh)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# --- subcommands -----------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    data = Path(args.input).read_bytes()
    t = adapters.ingest(args.format, data, id=args.id or Path(args.input).stem)
    save_transcript(t, args.out)
    logger.info("%s: %d words, %d speakers", t.id, len(t), adapters.count_speakers(t) if t.words else 0)
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    oracle = tpst.make_oracle(load_transcript(args.reference), load_transcript(args.asr))
    save_transcript(oracle, args.out)
    return 0


def _seg_cfg(args: argparse.Namespace) -> prep.SegmentationConfig:
    return prep.SegmentationConfig(token_budget=args.budget, pair_budget=args.pair_budget)


def cmd_prep(args: argparse.Namespace) -> int:
    in_dir, ref_dir, out_dir = Path(args.input), Path(args.reference), Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "oracle").mkdir(exist_ok=True)
    cfg = _seg_cfg(args)
    counts = prep.StageCounts()
    drops: list[tuple[str, str, str]] = []
    records: list[dict] = []

    def drop(ident: str, decision: prep.FilterDecision) -> None:
        counts.record(decision.stage, decision)
        drops.append((ident, decision.stage, decision.reason))

    for path in sorted(in_dir.glob("*.json")):
        asr = load_transcript(path)
        ref_path = ref_dir / path.name
        if not ref_path.exists():
            drop(asr.id, prep.FilterDecision(False, "no reference transcript", "reference"))
            continue
        reference = load_transcript(ref_path)
        decision = prep.filter_speaker_count(asr)
        if not decision.keep:
            drop(asr.id, decision)
            continue
        counts.record("speakers", decision)
        if asr.has_timestamps and reference.has_timestamps:
            asr = prep.trim_to_reference(asr, reference)
        oracle = tpst.make_oracle(reference, asr)
        save_transcript(oracle, out_dir / "oracle" / path.name)

        if args.pairs:
            chunks = [
                (p.word_range, {"prompt": p.prompt, "completion": p.completion})
                for p in prep.build_training_pairs(asr, oracle, cfg)
            ]
        else:
            overhead = correction.template_overhead(PromptVariant.FINETUNED, cfg.token_counter)
            chunks = [(s.word_range, s.as_dict()) for s in prep.segment_transcript(asr, cfg, overhead)]
        counts.kept["segmentation"] += len(chunks)
        for k, ((s, e), record) in enumerate(chunks):
            rep = prep.filter_repeats(asr.slice(s, e), args.max_ngram, args.repeat_threshold)
            if not rep.keep:
                drop(f"{asr.id}#{k}", rep)
                continue
            counts.record("repeats", rep)
            records.append(record)

    name = "pairs.jsonl" if args.pairs else "segments.jsonl"
    with open(out_dir / name, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    with open(out_dir / "drops.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "stage", "reason"])
        writer.writerows(drops)
    summary = counts.summary()
    _write_text(out_dir / "counts.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    report = metrics.metrics_report(
        load_transcript(args.reference), load_transcript(args.hypothesis), mean=args.mean
    )
    if args.table:
        print("| WER | cpWER | SA-WER | deltaCP | deltaSA |")
        print("|---|---|---|---|---|")
        vals = [report.wer, report.cpwer, report.sawer, report.delta_cp, report.delta_sa]
        print("| " + " | ".join(harness.format_value(v) for v in vals) + " |")
    else:
        print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    return 0


def _make_client(spec: str, t, variant: PromptVariant) -> correction.CompletionClient:
    kind, _, arg = spec.partition(":")
    if kind == "http":
        return correction.HttpCompletionClient()
    if kind == "echo":
        return correction.EchoClient(variant)
    if kind == "oracle":
        if not arg:
            raise SystemExit("oracle client needs a reference file: --client oracle:REFFILE")
        return correction.OracleClient([tpst.make_oracle(load_transcript(arg), t)], variant)
    if kind == "fixture":
        return correction.FixtureClient(arg)
    raise SystemExit(f"unknown client {spec!r}")


def cmd_correct(args: argparse.Namespace) -> int:
    t = load_transcript(args.input)
    variant = PromptVariant.parse(args.variant)
    client = _make_client(args.client, t, variant)
    result = correction.correct_transcript(
        t,
        client,
        _seg_cfg(args),
        variant,
        retries=args.retries,
        jobs=getattr(args, "jobs", 1),
        min_coverage=args.min_coverage,
    )
    save_transcript(result.corrected, args.out)
    for k, status in enumerate(result.per_segment_status):
        logger.info("segment %d: %s", k, status)
    print(json.dumps({"segments": len(result.per_segment_status), "fallbacks": result.fallbacks}))
    return 0


def _parse_model(spec: str) -> tuple[str, float | None]:
    path, sep, weight = spec.rpartition(":")
    if not sep:
        return spec, None
    try:
        return path, float(weight)
    except ValueError:
        return spec, None


def cmd_merge(args: argparse.Namespace) -> int:
    models = [_parse_model(m) for m in args.model]
    paths = [p for p, _ in models]
    if all(w is None for _, w in models):
        cfg = merge.MergeConfig.for_models(len(paths), density=args.density, conflict=args.conflict)
    elif any(w is None for _, w in models):
        raise SystemExit("give a weight for every model or for none")
    else:
        cfg = merge.MergeConfig(
            weights=tuple(w for _, w in models), density=args.density, conflict=args.conflict  # type: ignore[misc]
        )
    merge.merge_checkpoints(args.base, paths, cfg, args.out)
    logger.info("merged %d models with weights %s, density %s", len(paths), cfg.weights, cfg.density)
    return 0


def _emit_report(rows, out: str | None, layout: str) -> None:
    table = harness.render_comparison_table(rows) if layout == "comparison" else harness.render_baseline_table(rows)
    print(table, end="")
    if out:
        out_dir = Path(out)
        _write_text(out_dir / "report.md", table)
        _write_text(out_dir / "report.csv", harness.render_csv(rows, layout))
        _write_text(out_dir / "results.json", harness.results_json(rows))


def cmd_evaluate(args: argparse.Namespace) -> int:
    ref_dir, hyp_dir = Path(args.reference), Path(args.hypothesis)
    systems_dirs: dict[str, Path] = {}
    for spec in args.system or []:
        name, sep, directory = spec.partition("=")
        if not sep:
            raise SystemExit(f"--system expects NAME=DIR, got {spec!r}")
        systems_dirs[name] = Path(directory)

    corpus: dict[str, list[harness.EvalItem]] = {}
    corrected: dict[str, dict[str, Any]] = {name: {} for name in systems_dirs}
    for path in sorted(hyp_dir.glob("*.json")):
        ref_path = ref_dir / path.name
        if not ref_path.exists():
            logger.warning("no reference for %s, skipped", path.name)
            continue
        hyp = load_transcript(path)
        corpus.setdefault(hyp.source.value, []).append(harness.EvalItem(load_transcript(ref_path), hyp))
        for name, directory in systems_dirs.items():
            corrected[name][(hyp.source.value, hyp.id)] = load_transcript(directory / path.name)

    def lookup(name):
        return lambda h: corrected[name][(h.source.value, h.id)]

    rows = harness.run_evaluation(
        corpus,
        {name: lookup(name) for name in systems_dirs},
        baseline_name=args.baseline_name,
        per_file_mean=args.per_file_mean,
        jobs=getattr(args, "jobs", 1),
    )
    _emit_report(rows, args.out, "comparison" if systems_dirs else "baseline")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    seed = getattr(args, "seed", 0)
    model = prep.ErrorModel(
        seed=seed,
        boundary_shift_rate=args.boundary_shift_rate,
        boundary_shift_span=args.boundary_shift_span,
        phrase_flip_rate=args.phrase_flip_rate,
    )
    rows = harness.run_synthetic_experiment(
        args.n, seed, model, args.client, seg_cfg=_seg_cfg(args), jobs=getattr(args, "jobs", 1)
    )
    _emit_report(rows, args.out, "comparison")
    return 0


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="TOML or JSON defaults")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="diarcorrect", parents=[common], description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=func)
        return p

    def budgets(p: argparse.ArgumentParser) -> None:
        p.add_argument("--budget", type=int, default=4096, help="prompt token budget")
        p.add_argument("--pair-budget", type=int, default=8192, help="prompt+completion budget")

    p = add("ingest", cmd_ingest, "convert a vendor ASR document to canonical JSON")
    p.add_argument("--format", required=True, choices=[f.value for f in adapters.AsrFormat])
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--id")

    p = add("oracle", cmd_oracle, "transfer reference labels onto ASR wording")
    p.add_argument("--reference", required=True)
    p.add_argument("--asr", required=True)
    p.add_argument("--out", required=True)

    p = add("prep", cmd_prep, "filter, segment and export training data")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", required=True)
    budgets(p)
    p.add_argument("--pairs", action="store_true", help="export prompt/completion pairs")
    p.add_argument("--max-ngram", type=int, default=5)
    p.add_argument("--repeat-threshold", type=int, default=10)

    p = add("metrics", cmd_metrics, "WER, cpWER, SA-WER and deltas for one pair")
    p.add_argument("--reference", required=True)
    p.add_argument("--hypothesis", required=True)
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", default=True)
    fmt.add_argument("--table", action="store_true")
    p.add_argument("--mean", action="store_true", help="unweighted mean of per-speaker WERs")

    p = add("correct", cmd_correct, "correct speaker labels with an LLM client")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--client", required=True, help="http | echo | oracle:REFFILE | fixture:DIR")
    p.add_argument("--variant", default="finetuned", help="finetuned | zero-shot | dlm")
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--min-coverage", type=float, default=correction.DEFAULT_MIN_COVERAGE)
    budgets(p)

    p = add("merge", cmd_merge, "TIES-merge fine-tuned checkpoints")
    p.add_argument("--base", required=True)
    p.add_argument("--model", required=True, nargs="+", metavar="FILE[:WEIGHT]")
    p.add_argument("--density", type=float, default=merge.DEFAULT_DENSITY)
    p.add_argument("--conflict", choices=["elect", "max_magnitude"], default="elect")
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "corpus deltaCP/deltaSA tables")
    p.add_argument("--reference", required=True)
    p.add_argument("--hypothesis", required=True)
    p.add_argument("--system", action="append", metavar="NAME=DIR")
    p.add_argument("--baseline-name", default="Baseline")
    p.add_argument("--per-file-mean", action="store_true")
    p.add_argument("--out")

    p = add("synth", cmd_synth, "seeded synthetic corruption/correction experiment")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--boundary-shift-rate", type=float, default=0.3)
    p.add_argument("--boundary-shift-span", type=int, default=3)
    p.add_argument("--phrase-flip-rate", type=float, default=0.2)
    p.add_argument("--client", choices=["oracle", "echo"], default="oracle")
    p.add_argument("--out")
    budgets(p)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str], config: dict[str, Any]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    sub_defaults = {k: v for k, v in config.items() if not isinstance(v, dict)}
    sub_defaults.update(config.get(args.command, {}))
    provided = {a.split("=")[0] for a in argv if a.startswith("--")}
    for key, value in sub_defaults.items():
        dest = key.replace("-", "_")
        flag = "--" + dest.replace("_", "-")
        if flag not in provided:
            setattr(args, dest, value)
    return args


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        args = _apply_config(parser, argv, _load_config(args.config))
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
