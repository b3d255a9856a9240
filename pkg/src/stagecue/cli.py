"""Command-line pipeline: parse, extract, generate, stats, train, distill, eval, synth.

Exit codes: 0 success; 1 input/runtime errors (missing file, bad schema,
diverged training) with a single-line ``error: ...`` message on stderr;
2 usage errors (unknown subcommand or preset, bad flag values).

Artifacts are deterministic: the same command with the same config and
seed writes byte-identical files. ``STAGECUE_OUT_DIR`` redirects relative
output paths; ``STAGECUE_THREADS`` sets the default worker count for
parse/extract.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import distill as dst
from . import evaluate as ev
from .extraction import (ExtractionStats, KnowledgeExtractor, Stoplist, TripleKind,
                         extract_all, triple_from_record, triple_to_record)
from .instances import (corpus_stats, generate_instances, instance_to_record,
                        instance_from_record)
from .jsonl import (SCHEMA_INSTANCES, SCHEMA_ORACLE, SCHEMA_SCENES, SCHEMA_TRIPLES,
                    read_jsonl, write_jsonl)
from .reader import build_vocab, init_params, load_params, save_params
from .screenplay import (ActionLine, HeadingLine, Parenthetical, ParserConfig,
                         RawScript, ScriptDecodeError, parse_script, read_script)
from .synth import FixtureSpec, build_bundle, synthesize_corpus
from .util import config_hash
from .validation import check_instances


class UsageError(Exception):
    pass


def _resolve_out(path_str: str) -> Path:
    path = Path(path_str)
    base = os.environ.get("STAGECUE_OUT_DIR")
    if base and not path.is_absolute():
        path = Path(base) / path
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _default_threads() -> int:
    value = os.environ.get("STAGECUE_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        raise UsageError(f"STAGECUE_THREADS must be an integer, got {value!r}")


def _collect_scripts(in_path: str) -> list:
    path = Path(in_path)
    if path.is_dir():
        files = sorted(path.glob("*.txt"))
        if not files:
            raise FileNotFoundError(f"no .txt scripts found in {path}")
        return [read_script(f) for f in files]
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    return [read_script(path)]


def _parser_config(args) -> ParserConfig:
    return ParserConfig(max_speaker_span_chars=args.max_speaker_span)


def _parser_config_dict(cfg: ParserConfig) -> dict:
    return {"heading_lexicon": list(cfg.heading_lexicon),
            "max_speaker_span_chars": cfg.max_speaker_span_chars,
            "colon_chars": cfg.colon_chars,
            "paren_pairs": [list(p) for p in cfg.paren_pairs]}


def _scene_record(scene) -> dict:
    lines = []
    for ln in scene.lines:
        if isinstance(ln, HeadingLine):
            lines.append({"kind": "heading", "text": ln.text})
        elif isinstance(ln, ActionLine):
            lines.append({"kind": "action", "text": ln.text})
        else:
            segments = [{"kind": "parenthetical" if isinstance(seg, Parenthetical)
                         else "utterance", "text": seg.text} for seg in ln.segments]
            lines.append({"kind": "turn", "text": ln.text, "first_span": ln.first_span,
                          "speaker": ln.speaker,
                          "name_parenthetical": ln.name_parenthetical,
                          "segments": segments})
    return {"scene_id": scene.scene_id, "script_id": scene.script_id,
            "heading": scene.heading, "lines": lines}


def _parse_worker(payload) -> list:
    script, cfg = payload
    return [_scene_record(s) for s in parse_script(script, cfg)]


def _extract_worker(payload) -> tuple:
    script, cfg, stoplist, boundary = payload
    stats = ExtractionStats()
    records = []
    for scene in parse_script(script, cfg):
        for triple in extract_all(scene, stoplist, stats, boundary):
            records.append(triple_to_record(triple))
    return records, stats.as_dict()


def _map_scripts(worker, payloads, threads: int):
    if threads <= 1:
        return [worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, payloads))


def _cmd_parse(args) -> int:
    cfg = _parser_config(args)
    scripts = _collect_scripts(args.in_path)
    threads = args.threads or _default_threads()
    results = _map_scripts(_parse_worker, [(s, cfg) for s in scripts], threads)
    records = [rec for batch in results for rec in batch]
    chash = config_hash({"command": "parse", "parser": _parser_config_dict(cfg)})
    out = _resolve_out(args.out)
    write_jsonl(out, records, SCHEMA_SCENES, config_hash=chash)
    print(json.dumps({"scripts": len(scripts), "scenes": len(records),
                      "out": str(out)}, sort_keys=True))
    return 0


def _resolve_stoplist(spec: str) -> Stoplist:
    if spec == "default":
        return Stoplist.default()
    return Stoplist.from_file(spec)


def _cmd_extract(args) -> int:
    cfg = _parser_config(args)
    stoplist = _resolve_stoplist(args.stoplist)
    scripts = _collect_scripts(args.in_path)
    threads = args.threads or _default_threads()
    payloads = [(s, cfg, stoplist, not args.no_boundary) for s in scripts]
    results = _map_scripts(_extract_worker, payloads, threads)
    records = [rec for batch, _ in results for rec in batch]
    totals: dict = {}
    for _, stats in results:
        for group, values in stats.items():
            if isinstance(values, dict):
                bucket = totals.setdefault(group, {})
                for k, v in values.items():
                    bucket[k] = bucket.get(k, 0) + v
            else:
                totals[group] = totals.get(group, 0) + values
    chash = config_hash({"command": "extract", "parser": _parser_config_dict(cfg),
                         "stoplist": args.stoplist,
                         "require_space_boundary": not args.no_boundary})
    out = _resolve_out(args.out)
    write_jsonl(out, records, SCHEMA_TRIPLES, config_hash=chash)
    print(json.dumps(totals, sort_keys=True), file=sys.stderr)
    if args.counts:
        per_type = {k.value: 0 for k in TripleKind}
        for rec in records:
            per_type[rec["ktype"]] += 1
        print(json.dumps({"per_type": per_type, "total": len(records)}, sort_keys=True))
    return 0


def _cmd_generate(args) -> int:
    _, records = read_jsonl(args.triples, expect_schema=SCHEMA_TRIPLES)
    triples = [triple_from_record(r) for r in records]
    result = generate_instances(triples, n_distractors=args.n_distractors,
                                seed=args.seed, max_units=args.max_units,
                                unit=args.unit, tokenizer=args.tokenizer)
    chash = config_hash({"command": "generate", "n_distractors": args.n_distractors,
                         "seed": args.seed, "max_units": args.max_units,
                         "unit": args.unit, "tokenizer": args.tokenizer})
    out = _resolve_out(args.out)
    write_jsonl(out, [instance_to_record(i) for i in result.instances],
                SCHEMA_INSTANCES, config_hash=chash, seed=args.seed)
    summary = {"triples": len(triples), "instances": len(result.instances),
               "skipped": dict(sorted(result.skip_reasons().items()))}
    print(json.dumps(summary, sort_keys=True), file=sys.stderr)
    return 0


def _cmd_stats(args) -> int:
    header, records = read_jsonl(args.in_path)
    schema = header.get("schema", SCHEMA_INSTANCES)
    if schema == SCHEMA_TRIPLES:
        items = [triple_from_record(r) for r in records]
    elif schema in (SCHEMA_INSTANCES,):
        items = [instance_from_record(r) for r in records]
    else:
        raise ValueError(f"{args.in_path}: cannot compute stats for schema {schema!r}")
    stats = corpus_stats(items)
    text = json.dumps(stats, sort_keys=True, indent=2, ensure_ascii=False)
    print(text)
    if args.out:
        _resolve_out(args.out).write_text(text + "\n", encoding="utf-8")
    return 0


def _cmd_train(args) -> int:
    data = dst.load_instances(args.data)
    check_instances(data)
    cfg = dst.TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                          embed_dim=args.embed_dim, tokenizer=args.tokenizer,
                          init_scale=args.init_scale, seed=args.seed)
    vocab = build_vocab(data, args.tokenizer)
    params = init_params(vocab, dim=args.embed_dim, seed=args.seed,
                         scale=args.init_scale, tokenizer=args.tokenizer)
    trained = dst.train_hard(data, params, cfg, epochs=args.epochs)
    chash = config_hash({"command": "train", "train": cfg.as_dict(),
                         "epochs": args.epochs})
    out = _resolve_out(args.out)
    save_params(trained, out, config_hash=chash)
    summary = {"instances": len(data), "vocab": len(vocab), "out": str(out)}
    if args.dev:
        dev = dst.load_instances(args.dev)
        summary["dev_accuracy"] = ev.accuracy(trained, dev).accuracy
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_eval(args) -> int:
    params = load_params(args.model)
    data = dst.load_instances(args.data)
    report = ev.per_category(params, data) if args.per_category else ev.accuracy(params, data)
    payload = report.as_dict()
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False)
    print(text)
    if args.out:
        _resolve_out(args.out).write_text(text + "\n", encoding="utf-8")
    return 0


_DATA_KEYS = {"labeled", "weak", "dev", "test"}
_RUN_KEYS = {"n_seeds", "seeds", "weak_index"}


def _load_bundle_config(config_path: str) -> tuple:
    path = Path(config_path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    for key in ("labeled", "dev", "test"):
        if key not in raw:
            raise ValueError(f"{path}: config missing key {key!r}")
    base = path.parent

    def _data(p):
        return dst.load_instances(base / p if not Path(p).is_absolute() else p)

    bundle = dst.DatasetBundle(labeled=_data(raw["labeled"]),
                               weak_sets=[_data(p) for p in raw.get("weak", [])],
                               dev=_data(raw["dev"]), test=_data(raw["test"]))
    train_kwargs = {k: v for k, v in raw.items() if k not in _DATA_KEYS | _RUN_KEYS}
    valid = set(dst.TrainConfig.__dataclass_fields__)
    unknown = set(train_kwargs) - valid
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    cfg = dst.TrainConfig(**train_kwargs)
    run = {"n_seeds": raw.get("n_seeds", 5), "seeds": raw.get("seeds"),
           "weak_index": raw.get("weak_index", 0)}
    return bundle, cfg, run


def _cmd_distill(args) -> int:
    if args.preset not in dst.PRESETS:
        raise UsageError(f"unknown preset {args.preset!r}; expected one of "
                         f"{', '.join(dst.PRESETS)}")
    bundle, cfg, run = _load_bundle_config(args.config)
    report = dst.run_pipeline(args.preset, bundle, cfg, n_seeds=run["n_seeds"],
                              seeds=run["seeds"], weak_index=run["weak_index"])
    print(report.format_table())
    if args.out:
        out = _resolve_out(args.out)
        out.write_text(json.dumps(report.as_dict(), sort_keys=True, indent=2,
                                  ensure_ascii=False) + "\n", encoding="utf-8")
    if args.save_soft_labels:
        if not bundle.weak_sets:
            raise UsageError("--save-soft-labels requires a bundle with weak sets")
        teachers = dst.train_teachers(bundle, cfg)
        labels = dst.soft_labels(bundle, teachers, cfg.hard_label_weight)
        dst.save_soft_labels(_resolve_out(args.save_soft_labels), labels,
                             config_hash_value=report.config_hash, seed=cfg.seed)
    return 0


def _cmd_synth(args) -> int:
    signal: object = args.signal
    lo, _, hi = args.utterance_tokens.partition(",")
    spec = FixtureSpec(n_scripts=args.n_scripts, scenes_per_script=args.scenes,
                       turns_per_scene=args.turns, signal_strength=signal,
                       vocab_size=args.vocab_size, seed=args.seed,
                       categories_per_kind=args.categories,
                       utterance_tokens=(int(lo), int(hi or lo)),
                       cue_repeats=args.cue_repeats)
    corpus = synthesize_corpus(spec)
    out_dir = _resolve_out(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scripts_dir = out_dir / "scripts"
    scripts_dir.mkdir(exist_ok=True)
    for script in corpus.scripts:
        (scripts_dir / f"{script.script_id}.txt").write_text(script.text,
                                                             encoding="utf-8")
    chash = config_hash({"command": "synth", "spec": spec.as_dict()})
    write_jsonl(out_dir / "oracle.jsonl", corpus.oracle, SCHEMA_ORACLE,
                config_hash=chash, seed=spec.seed)
    manifest = {"spec": spec.as_dict(), "config_hash": chash,
                "scripts": len(corpus.scripts), "oracle_triples": len(corpus.oracle)}
    if args.bundle:
        split = tuple(float(x) for x in args.split.split(","))
        bundle, info = build_bundle(corpus, n_distractors=args.n_distractors,
                                    weak_fraction=args.weak_fraction, split=split,
                                    weak_label_noise=args.weak_label_noise,
                                    weak_noise_mode=args.weak_noise_mode)
        bundle_dir = out_dir / "bundle"
        bundle_dir.mkdir(exist_ok=True)
        dst.save_instances(bundle_dir / "labeled.jsonl", bundle.labeled,
                           config_hash_value=chash, seed=spec.seed)
        dst.save_instances(bundle_dir / "dev.jsonl", bundle.dev,
                           config_hash_value=chash, seed=spec.seed)
        dst.save_instances(bundle_dir / "test.jsonl", bundle.test,
                           config_hash_value=chash, seed=spec.seed)
        for kind, wset in zip(TripleKind, bundle.weak_sets):
            dst.save_instances(bundle_dir / f"weak_{kind.value}.jsonl", wset,
                               config_hash_value=chash, seed=spec.seed)
        manifest["bundle"] = info
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8")
    print(json.dumps({"out": str(out_dir), "scripts": len(corpus.scripts),
                      "oracle_triples": len(corpus.oracle)}, sort_keys=True))
    return 0


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stagecue",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse scripts into a scenes JSONL file")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-speaker-span", type=int, default=30)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_parse)

    p = sub.add_parser("extract", help="extract knowledge triples from scripts")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stoplist", default="default",
                   help="'default' or a path to a terms file")
    p.add_argument("--max-speaker-span", type=int, default=30)
    p.add_argument("--no-boundary", action="store_true",
                   help="drop the whitespace requirement after a matched name")
    p.add_argument("--counts", action="store_true",
                   help="print per-type totals to stdout")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("generate", help="turn triples into multiple-choice instances")
    p.add_argument("--triples", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-distractors", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-units", type=int, default=None)
    p.add_argument("--unit", choices=("tokens", "chars"), default="tokens")
    p.add_argument("--tokenizer", choices=("unicode_words", "characters"),
                   default="unicode_words")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("stats", help="per-type counts for a triples/instances file")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("train", help="train a reader on an instance file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dev", default=None)
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--init-scale", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tokenizer", choices=("unicode_words", "characters"),
                   default="unicode_words")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("distill", help="run a training pipeline preset")
    p.add_argument("--preset", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--save-soft-labels", default=None)
    p.set_defaults(func=_cmd_distill)

    p = sub.add_parser("eval", help="evaluate a checkpoint on an instance file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--per-category", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic corpus (and optional bundle)")
    p.add_argument("--out", required=True)
    p.add_argument("--n-scripts", type=int, default=20)
    p.add_argument("--scenes", type=int, default=6)
    p.add_argument("--turns", type=int, default=6)
    p.add_argument("--signal", type=float, default=1.0)
    p.add_argument("--vocab-size", type=int, default=80)
    p.add_argument("--categories", type=int, default=12)
    p.add_argument("--utterance-tokens", default="4,8", metavar="LO,HI",
                   help="tokens per synthetic utterance, inclusive range")
    p.add_argument("--cue-repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bundle", action="store_true",
                   help="also write labeled/dev/test/weak instance files")
    p.add_argument("--n-distractors", type=int, default=3)
    p.add_argument("--weak-fraction", type=float, default=0.8)
    p.add_argument("--split", default="0.5,0.25,0.25")
    p.add_argument("--weak-label-noise", type=float, default=0.0)
    p.add_argument("--weak-noise-mode", choices=("uniform", "systematic"),
                   default="uniform")
    p.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_arg_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return int(args.func(args) or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ScriptDecodeError, FileNotFoundError, IsADirectoryError,
            NotADirectoryError, PermissionError, OSError, ValueError, KeyError,
            RuntimeError, json.JSONDecodeError) as exc:
        message = str(exc).replace("\n", " ") or type(exc).__name__
        if isinstance(exc, KeyError):
            message = f"missing key {message}"
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
