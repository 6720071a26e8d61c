"""Command-line surface wiring the library into reproducible workflows.

Exit codes: 0 success, 1 validation failure, 2 usage error, 3
environment/IO failure. Every output file carries a header with the tool
version, the seed, and a hash of the effective configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .codebook import CodebookError, load_codebook, load_default_codebook
from .corpus import (
    CorpusError,
    long_tail_profile,
    read_corpus,
    select_exemplar_records,
    stratified_split,
    synthesize_corpus,
    write_corpus,
)
from .infer import (
    DecodingConfig,
    EndpointConfig,
    InferenceRecordCache,
    batch_run,
)
from .metrics import evaluate, format_report
from .parse import Policy, validate_completion, write_reports
from .prompt import Exemplar, load_template, render_prompt
from .sftprep import build_pairs, export_manifest, serialize_annotations

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_ENVIRONMENT = 3


def _config_hash(args: argparse.Namespace) -> str:
    skip = {"func"}
    doc = {k: str(v) for k, v in vars(args).items() if k not in skip}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def _header(args: argparse.Namespace) -> dict:
    header = {"tool_version": __version__, "config_hash": _config_hash(args)}
    seed = getattr(args, "seed", None)
    if seed is not None:
        header["seed"] = seed
    return header


def _load_cb(args: argparse.Namespace):
    if args.codebook is None:
        return load_default_codebook()
    return load_codebook(Path(args.codebook))


def _parse_ratios(spec: str) -> dict[str, float]:
    ratios = {}
    for part in spec.split(","):
        name, _, value = part.partition("=")
        if not value:
            raise ValueError(f"bad ratio entry {part!r}; expected name=fraction")
        ratios[name.strip()] = float(value)
    return ratios


def _load_exemplars(args: argparse.Namespace, cb) -> list[Exemplar]:
    shots = getattr(args, "shots", 0)
    if not shots:
        return []
    source = getattr(args, "shot_corpus", None) or getattr(args, "corpus", None)
    if source is None:
        raise ValueError("--shots requires --shot-corpus (or --corpus) for exemplars")
    records = read_corpus(Path(source), cb)
    shot_ids = getattr(args, "shot_ids", None)
    if shot_ids:
        by_id = {r.id: r for r in records}
        chosen = [by_id[i] for i in shot_ids]
    else:
        chosen = select_exemplar_records(records, shots, seed=getattr(args, "seed", 0))
    return [
        Exemplar(message=r.message, gold=serialize_annotations(r.annotations))
        for r in chosen
    ]


def cmd_validate(args: argparse.Namespace) -> int:
    cb = _load_cb(args)
    warnings: list[CorpusError] = []
    try:
        records = read_corpus(Path(args.corpus), cb, strict=args.strict,
                              warnings_out=warnings)
    except CorpusError as exc:
        print(f"FAIL: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"OK: {len(records)} records, {len(warnings)} warnings")
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    cb = _load_cb(args)
    records = read_corpus(Path(args.corpus), cb)
    ratios = _parse_ratios(args.ratios)
    assignment = stratified_split(records, ratios, seed=args.seed)
    doc = {
        "header": _header(args),
        "ratios": ratios,
        "folds": {f: list(ids) for f, ids in assignment.folds.items()},
    }
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    sizes = ", ".join(f"{f}={len(ids)}" for f, ids in assignment.folds.items())
    print(f"wrote {args.out} ({sizes})")
    return EXIT_OK


def cmd_synthesize(args: argparse.Namespace) -> int:
    cb = _load_cb(args)
    if args.profile:
        raw = json.loads(Path(args.profile).read_text(encoding="utf-8"))
        profile = {(e["code"], e["subcode"]): e["weight"] for e in raw}
    else:
        profile = long_tail_profile(cb)
    records = synthesize_corpus(cb, profile, n=args.n, seed=args.seed)
    write_corpus(records, Path(args.out))
    print(f"wrote {args.out} ({len(records)} records)")
    return EXIT_OK


def cmd_prompt(args: argparse.Namespace) -> int:
    cb = _load_cb(args)
    template = load_template(args.template)
    shots = _load_exemplars(args, cb)
    if args.message is not None:
        from .corpus import Message

        message = Message(id="cli", text=args.message, direction=args.direction)
    else:
        records = read_corpus(Path(args.corpus), cb)
        by_id = {r.id: r for r in records}
        if args.id not in by_id:
            raise ValueError(f"record id {args.id!r} not in corpus")
        message = by_id[args.id].message
    sys.stdout.write(render_prompt(template, cb, message, shots))
    sys.stdout.write("\n")
    return EXIT_OK


def _decoding_config(args: argparse.Namespace) -> DecodingConfig:
    cfg = DecodingConfig(
        max_new_tokens=args.max_new_tokens,
        max_context_tokens=args.max_context_tokens,
    )
    if getattr(args, "shots", 0) and args.max_context_tokens == 8096:
        cfg = cfg.for_few_shot()
    return cfg


def _run_batch(args: argparse.Namespace, cb, records) -> dict[str, str]:
    template = load_template(args.template)
    shots = _load_exemplars(args, cb)
    endpoint = EndpointConfig(
        base_url=args.endpoint, model=args.model,
        api_key=args.api_key, timeout=args.timeout,
    )
    cache = InferenceRecordCache(args.cache_dir) if args.cache_dir else None
    result = batch_run(
        records, template, cb, endpoint, _decoding_config(args),
        cache=cache, concurrency=args.concurrency, shots=shots,
    )
    for record_id, error in sorted(result.failures.items()):
        print(f"failure: {record_id}: {error}", file=sys.stderr)
    return result.completions


def cmd_run(args: argparse.Namespace) -> int:
    cb = _load_cb(args)
    records = read_corpus(Path(args.corpus), cb)
    completions = _run_batch(args, cb, records)
    with Path(args.out).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(_header(args)) + "\n")
        for record_id in sorted(completions):
            fh.write(json.dumps({"id": record_id, "completion": completions[record_id]},
                                ensure_ascii=False) + "\n")
    print(f"wrote {args.out} ({len(completions)} completions)")
    return EXIT_OK if len(completions) == len(records) else EXIT_VALIDATION


def _read_completions(path: Path) -> dict[str, str]:
    completions = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not raw.strip():
            continue
        doc = json.loads(raw)
        if lineno == 1 and "id" not in doc:
            continue  # header line
        completions[str(doc["id"])] = doc["completion"]
    return completions


def cmd_evaluate(args: argparse.Namespace) -> int:
    cb = _load_cb(args)
    records = read_corpus(Path(args.corpus), cb)
    if args.completions:
        completions = _read_completions(Path(args.completions))
    elif args.endpoint:
        completions = _run_batch(args, cb, records)
    else:
        print("error: provide --completions or --endpoint", file=sys.stderr)
        return EXIT_USAGE
    by_id = {r.id: r for r in records}
    reports = {
        record_id: validate_completion(text, by_id[record_id].message, cb,
                                       policy=Policy(args.policy))
        for record_id, text in completions.items()
        if record_id in by_id
    }
    missing = sorted(set(by_id) - set(reports))
    if missing and args.strict_alignment:
        for record_id in missing:
            print(f"MissingPrediction: {record_id}", file=sys.stderr)
        return EXIT_VALIDATION
    report = evaluate(records, reports, cb, threshold=args.threshold,
                      one_to_one=args.one_to_one)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    machine = {"header": _header(args), **report.to_dict()}
    (out_dir / "report.json").write_text(
        json.dumps(machine, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    (out_dir / "report.txt").write_text(format_report(report), encoding="utf-8")
    write_reports(reports, out_dir / "parse_reports.jsonl")
    print(format_report(report))
    return EXIT_OK


def cmd_prepare_sft(args: argparse.Namespace) -> int:
    cb = _load_cb(args)
    records = read_corpus(Path(args.corpus), cb)
    template = load_template(args.template)
    shots = _load_exemplars(args, cb)
    from .prompt import render_instruction

    instruction = render_instruction(template, cb, shots)
    pairs = build_pairs(records, instruction, include_stop=args.include_stop)
    export_manifest(pairs, Path(args.out), seed=getattr(args, "seed", None),
                    config={"template": args.template, "include_stop": args.include_stop})
    print(f"wrote {args.out} ({len(pairs)} pairs)")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    from .metrics import EvalReport, PRF

    doc = json.loads(Path(args.input).read_text(encoding="utf-8"))

    def prf(d: dict) -> PRF:
        return PRF(tp=d["tp"], fp=d["fp"], fn=d["fn"])

    report = EvalReport(
        code=prf(doc["code"]),
        subcode=prf(doc["subcode"]),
        span=prf(doc["span"]),
        per_class_code={k: prf(v) for k, v in doc["per_class_code"].items()},
        per_class_subcode={k: prf(v) for k, v in doc["per_class_subcode"].items()},
        swaps_code={(e["gold"], e["pred"]): e["count"] for e in doc["swaps_code"]},
        swaps_subcode={(e["gold"], e["pred"]): e["count"] for e in doc["swaps_subcode"]},
        instance_count=doc.get("instance_count", 0),
    )
    print(format_report(report))
    return EXIT_OK


def _add_codebook_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--codebook", default=None,
                   help="codebook YAML path (default: shipped codebook)")


def _add_shot_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--shots", type=int, default=0, help="few-shot exemplar count")
    p.add_argument("--shot-corpus", default=None,
                   help="corpus to draw exemplars from (default: --corpus)")
    p.add_argument("--shot-ids", nargs="*", default=None,
                   help="explicit exemplar record ids")


def _add_endpoint_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--endpoint", default=None, help="chat-completions base URL")
    p.add_argument("--model", default=None, help="model id at the endpoint")
    p.add_argument("--api-key", default=None)
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--max-new-tokens", type=int, default=1024)
    p.add_argument("--max-context-tokens", type=int, default=8096)
    p.add_argument("--template", choices=["baseline", "engineered"],
                   default="engineered")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvminer",
        description="Hierarchical, span-grounded annotation toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a corpus file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--strict", action="store_true")
    _add_codebook_arg(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("split", help="iterative-stratification split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ratios", default="train=0.8,test=0.2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_codebook_arg(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("synthesize", help="generate a synthetic corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", default=None,
                   help="JSON list of {code, subcode, weight} (default: long tail)")
    p.add_argument("--out", required=True)
    _add_codebook_arg(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("prompt", help="render a prompt to stdout")
    p.add_argument("--template", choices=["baseline", "engineered"], required=True)
    p.add_argument("--message", default=None)
    p.add_argument("--direction", choices=["Y", "N"], default="N")
    p.add_argument("--corpus", default=None)
    p.add_argument("--id", default=None, help="record id when using --corpus")
    p.add_argument("--seed", type=int, default=0)
    _add_shot_args(p)
    _add_codebook_arg(p)
    p.set_defaults(func=cmd_prompt)

    p = sub.add_parser("run", help="complete a corpus against an endpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_endpoint_args(p)
    _add_shot_args(p)
    _add_codebook_arg(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("--corpus", required=True)
    p.add_argument("--completions", default=None,
                   help="completions JSONL from `run` (or use endpoint flags)")
    p.add_argument("--policy", choices=["strict", "lenient"], default="lenient")
    p.add_argument("--threshold", type=float, default=0.6)
    p.add_argument("--one-to-one", action="store_true")
    p.add_argument("--strict-alignment", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_endpoint_args(p)
    _add_shot_args(p)
    _add_codebook_arg(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("prepare-sft", help="export an SFT manifest")
    p.add_argument("--corpus", required=True)
    p.add_argument("--template", choices=["baseline", "engineered"],
                   default="engineered")
    p.add_argument("--include-stop", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_shot_args(p)
    _add_codebook_arg(p)
    p.set_defaults(func=cmd_prepare_sft)

    p = sub.add_parser("report", help="render a machine report as text tables")
    p.add_argument("--input", required=True, help="report.json from `evaluate`")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CodebookError, CorpusError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_ENVIRONMENT


if __name__ == "__main__":
    sys.exit(main())
