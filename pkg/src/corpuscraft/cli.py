"""Command-line front end: one subcommand per toolkit module plus a
config-driven multi-stage runner. Everything is offline unless a subcommand
is explicitly handed a live resource, and all randomness flows from the
seed arguments.
"""

import argparse
import json
import sys

from . import niah, pipeline
from .align import choose_template, get_template, pair_from_record, render_pair
from .mixplan import (aggregate_composition, apply_epochs, dump_schedule,
                      load_composition, load_epochs, rampup_curve,
                      warmup_cosine_curve, write_epoch_plan)
from .records import read_records, record_from_obj
from .sft import (SEQUENCE_LENGTH, Conversation, SftExample, Turn,
                  build_example, prepare_chat_model, sft_filter)
from .tokenizer import (encode, fertility, load_tokenizer, save_tokenizer,
                        train_bpe)


def _print(line: str) -> None:
    sys.stdout.write(line + "\n")


def _fail(message: str) -> int:
    sys.stderr.write("error: " + message + "\n")
    return 2


def _cmd_run(args) -> int:
    try:
        result = pipeline.run(args.config, seed=args.seed, mode=args.mode)
    except pipeline.ConfigError as exc:
        return _fail(str(exc))
    for entry in result.manifest["stages"]:
        if entry["status"] == "ok":
            dropped = sum(entry["dropped"].values())
            _print("stage %s: %d in, %d out, %d dropped"
                   % (entry["name"], entry["input_count"],
                      entry["output_count"], dropped))
        else:
            _print("stage %s: FAILED (%s)" % (entry["name"], entry["error"]))
    _print("manifest %s" % result.manifest_path)
    return result.exit_code


def _cmd_validate(args) -> int:
    n_in, n_out, dropped = pipeline.op_validate(args.input, args.output,
                                                args.report)
    _print("%d in, %d out, %d dropped" % (n_in, n_out,
                                          sum(dropped.values())))
    return 0


def _cmd_filter(args) -> int:
    badwords = ()
    if args.badwords:
        with open(args.badwords, "r", encoding="utf-8") as fh:
            badwords = tuple(line.strip() for line in fh if line.strip())
    n_in, n_out, dropped = pipeline.op_filter(args.input, args.output,
                                              args.rule, args.mode,
                                              badwords, args.report)
    for rule in sorted(dropped):
        _print("dropped %d by %s" % (dropped[rule], rule))
    _print("%d in, %d out" % (n_in, n_out))
    return 0


def _cmd_webselect(args) -> int:
    n_in, n_out, dropped = pipeline.op_webselect(
        args.urls, args.output, args.blacklist, args.robots_snapshot,
        args.agent, args.report)
    for reason in sorted(dropped):
        _print("dropped %d by %s" % (dropped[reason], reason))
    _print("%d in, %d out" % (n_in, n_out))
    return 0


def _cmd_dedup(args) -> int:
    n_in, n_out, dropped = pipeline.op_dedup(
        args.input, args.output, args.seed, args.mode, args.shingle_k,
        args.num_perm, args.bands, args.rows, args.threshold, args.report,
        args.partition)
    _print("%d in, %d out, %d dropped"
           % (n_in, n_out, sum(dropped.values())))
    return 0


def _read_corpus_file(path):
    if str(path).endswith((".jsonl", ".jsonl.gz")):
        return [doc.text for doc in read_records(path)]
    with open(path, "r", encoding="utf-8") as fh:
        return [fh.read()]


def _cmd_tok_train(args) -> int:
    corpus = []
    for path in args.input:
        corpus.extend(_read_corpus_file(path))
    model = train_bpe(corpus, args.vocab_size)
    save_tokenizer(model, args.output)
    _print("trained vocabulary of %d tokens" % len(model))
    return 0


def _cmd_tok_encode(args) -> int:
    model = load_tokenizer(args.model)
    n = 0
    with open(args.input, "r", encoding="utf-8") as src, \
            open(args.output, "w", encoding="utf-8") as dst:
        for line in src:
            ids = encode(model, line.rstrip("\n"),
                         with_specials=args.with_specials)
            dst.write(" ".join(str(i) for i in ids) + "\n")
            n += 1
    _print("encoded %d lines" % n)
    return 0


def _cmd_fertility(args) -> int:
    import csv
    model = load_tokenizer(args.model)
    docs = list(read_records(args.input))
    report = fertility(model, docs)
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["language", "corpus", "tokens", "words",
                         "tokens_per_word"])
        for row in report.rows:
            writer.writerow([row.language, row.corpus, row.token_count,
                             row.word_count, "%.6f" % row.tokens_per_word])
    _print("overall fertility %.6f" % report.overall())
    return 0


def _cmd_align(args) -> int:
    rendered = 0
    skipped = 0
    with open(args.output, "w", encoding="utf-8") as fh:
        for doc in read_records(args.input, mode=args.mode):
            pair = pair_from_record(doc)
            if pair is None:
                if args.mode == "strict":
                    return _fail("record %r is not an aligned pair" % doc.id)
                skipped += 1
                continue
            if args.template is not None:
                template = get_template(args.template)
            else:
                template = choose_template(
                    pipeline.derive_seed(args.seed, doc.id))
            text = render_pair(pair, template)
            out = record_from_obj({
                "id": doc.id, "source": doc.source,
                "language": doc.language.serialize(), "text": text})
            fh.write(json.dumps(out.to_json_obj(), ensure_ascii=False,
                                separators=(", ", ": ")) + "\n")
            rendered += 1
    _print("%d rendered, %d skipped" % (rendered, skipped))
    return 0


def _cmd_plan_mix(args) -> int:
    table = load_composition(args.composition)
    totals = aggregate_composition(table)
    plan = apply_epochs(table, load_epochs(args.epochs))
    write_epoch_plan(plan, args.output)
    _print("raw total %s B tokens" % totals.total.b_tokens)
    _print("effective total %s B tokens" % plan.effective_total)
    return 0


def _cmd_schedule(args) -> int:
    batch = rampup_curve(args.batch_horizon, args.batch_start,
                         args.batch_end, args.batch_step)
    lr = warmup_cosine_curve(args.samples, args.max_lr, args.final_lr,
                             args.warmup)
    if args.positions:
        positions = [int(p) for p in args.positions.split(",")]
    else:
        positions = [args.samples * i // 12 for i in range(13)]
    dump_schedule(args.output, batch, lr, positions)
    _print("wrote %d schedule rows" % len(positions))
    return 0


def _load_conversations(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            turns = tuple(Turn(t["role"], t["content"])
                          for t in obj["turns"])
            yield lineno, SftExample(Conversation(turns),
                                     obj.get("language"),
                                     obj.get("source", ""))


def _cmd_sft_prep(args) -> int:
    model = prepare_chat_model(load_tokenizer(args.model))
    languages = None
    if args.languages:
        languages = tuple(args.languages.split(","))
    n_in = 0
    kept = 0
    dropped = {}
    with open(args.output, "w", encoding="utf-8") as fh:
        for _, example in _load_conversations(args.input):
            n_in += 1
            if languages is not None:
                decision = sft_filter(example, languages=languages)
            else:
                decision = sft_filter(example)
            if not decision.keep:
                dropped[decision.rule_id] = dropped.get(decision.rule_id,
                                                        0) + 1
                continue
            out = build_example(example.conversation, model, args.length,
                                not args.no_eot, example.source,
                                example.language)
            fh.write(json.dumps({"ids": list(out.ids),
                                 "loss_mask": list(out.loss_mask),
                                 "source": out.source,
                                 "language": out.language,
                                 "truncated": out.truncated}) + "\n")
            kept += 1
    for rule in sorted(dropped):
        _print("dropped %d by %s" % (dropped[rule], rule))
    _print("%d in, %d out" % (n_in, kept))
    return 0


def _cmd_niah_gen(args) -> int:
    model = load_tokenizer(args.model)
    filler = niah.load_filler(args.filler)
    if args.lengths:
        lengths = tuple(int(v) for v in args.lengths.split(","))
    else:
        lengths = niah.DEFAULT_LENGTHS
    if args.depths:
        depths = tuple(float(v) for v in args.depths.split(","))
    else:
        depths = niah.DEFAULT_DEPTHS
    source = args.filler if args.filler else "bundled-essays"
    grid = niah.NiahGrid(lengths, depths, source)
    cases = niah.build_grid(filler, grid, model, seed=args.seed)
    n = niah.export_cases(cases, args.output)
    _print("wrote %d cases" % n)
    return 0


def _cmd_niah_score(args) -> int:
    cases = niah.load_cases(args.cases)
    responses = niah.import_responses(args.responses)
    results = niah.score_cases(cases, responses)
    grid = niah.grid_of_cases(cases)
    hm = niah.heatmap(results, grid)
    niah.write_heatmap_csv(hm, args.output)
    _print("effective window %d tokens at threshold %g"
           % (niah.effective_window(hm, args.threshold), args.threshold))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corpuscraft",
        description="Corpus curation, tokenization, and evaluation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a declarative pipeline config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--mode", choices=pipeline.MODES, default=None,
                   help="override the config error mode")
    p.add_argument("--jobs", type=int, default=1,
                   help="accepted for compatibility; stages run "
                        "sequentially for deterministic merges")
    p.add_argument("--offline", action="store_true",
                   help="assert no network use (always true here)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="schema-check a record stream")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--report")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("filter", help="apply one quality rule set")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--rule", required=True, choices=pipeline.FILTER_RULES)
    p.add_argument("--badwords", help="one bad word per line, for c4")
    p.add_argument("--report")
    p.add_argument("--mode", choices=pipeline.MODES, default="strict")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("webselect", help="overlap, blacklist, and opt-out "
                                         "checks on a URL list")
    p.add_argument("--urls", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--blacklist")
    p.add_argument("--robots-snapshot",
                   help="directory of cached robots.txt bodies per host")
    p.add_argument("--agent", default="CCBot")
    p.add_argument("--report")
    p.set_defaults(func=_cmd_webselect)

    p = sub.add_parser("dedup", help="MinHash near-duplicate removal")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--report")
    p.add_argument("--shingle-k", type=int, default=None)
    p.add_argument("--num-perm", type=int, default=None)
    p.add_argument("--bands", type=int, default=None)
    p.add_argument("--rows", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--partition", choices=pipeline.DEDUP_PARTITIONS,
                   default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=pipeline.MODES, default="strict")
    p.set_defaults(func=_cmd_dedup)

    p = sub.add_parser("tok-train", help="train the constrained BPE "
                                         "tokenizer")
    p.add_argument("--input", nargs="+", required=True,
                   help="text files, or .jsonl record files")
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_tok_train)

    p = sub.add_parser("tok-encode", help="encode text lines to token ids")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--with-specials", action="store_true")
    p.set_defaults(func=_cmd_tok_encode)

    p = sub.add_parser("fertility", help="tokens-per-word report by corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="record .jsonl")
    p.add_argument("--output", required=True, help="report CSV")
    p.set_defaults(func=_cmd_fertility)

    p = sub.add_parser("align", help="render bilingual pair records into "
                                     "training text")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--template", type=int, default=None,
                   help="fixed template id instead of per-record choice")
    p.add_argument("--mode", choices=pipeline.MODES, default="strict")
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("plan-mix", help="apply epoch multipliers to the "
                                        "composition table")
    p.add_argument("--composition", default=None,
                   help="defaults to the bundled table")
    p.add_argument("--epochs", default=None,
                   help="defaults to the bundled multipliers")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_plan_mix)

    p = sub.add_parser("schedule", help="dump batch-size and learning-rate "
                                        "schedules")
    p.add_argument("--output", required=True)
    p.add_argument("--samples", type=int, required=True,
                   help="total training samples (lr horizon)")
    p.add_argument("--warmup", type=int, default=2_000_000)
    p.add_argument("--max-lr", type=float, default=3e-4)
    p.add_argument("--final-lr", type=float, default=3e-5)
    p.add_argument("--batch-start", type=int, default=256)
    p.add_argument("--batch-end", type=int, default=1024)
    p.add_argument("--batch-step", type=int, default=64)
    p.add_argument("--batch-horizon", type=int, default=10_000_000)
    p.add_argument("--positions", default=None,
                   help="comma-separated sample positions")
    p.set_defaults(func=_cmd_schedule)

    p = sub.add_parser("sft-prep", help="filter and tokenize chat "
                                        "conversations")
    p.add_argument("--input", required=True,
                   help="jsonl of {turns, language, source}")
    p.add_argument("--model", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--length", type=int, default=SEQUENCE_LENGTH)
    p.add_argument("--no-eot", action="store_true",
                   help="exclude end-of-turn tokens from the loss")
    p.add_argument("--languages", default=None,
                   help="comma-separated allowlist override")
    p.set_defaults(func=_cmd_sft_prep)

    p = sub.add_parser("niah-gen", help="generate long-context retrieval "
                                        "probes")
    p.add_argument("--model", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--filler", default=None,
                   help="substitute distractor text file")
    p.add_argument("--lengths", default=None,
                   help="comma-separated token lengths")
    p.add_argument("--depths", default=None,
                   help="comma-separated depth fractions")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_niah_gen)

    p = sub.add_parser("niah-score", help="grade responses and report the "
                                          "effective window")
    p.add_argument("--cases", required=True)
    p.add_argument("--responses", required=True)
    p.add_argument("--output", required=True, help="heatmap CSV")
    p.add_argument("--threshold", type=float, default=niah.DEFAULT_THRESHOLD)
    p.set_defaults(func=_cmd_niah_score)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
