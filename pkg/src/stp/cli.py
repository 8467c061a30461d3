"""``stp`` command-line entry point.

Every subcommand accepts ``--config FILE``: an INI file whose section named
after the subcommand supplies defaults (keys are flag names with or without
the leading dashes).  Explicit flags override the file.

Exit status: 0 on success, 1 on invalid input or arguments, 2 on I/O errors.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

from . import __version__
from .errors import StpError

CONFIG_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")

    def exit(self, status=0, message=None):
        if message:
            sys.stderr.write(message)
        raise SystemExit(status)


# ---------------------------------------------------------------------------
# I/O helpers
# ---------------------------------------------------------------------------

def _read_lines(path) -> list[str]:
    if path in (None, "-"):
        return [line.rstrip("\n") for line in sys.stdin]
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _write_text(path, text: str):
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False) + "\n"


def _load_scorer(spec: str):
    from .lm import NGramLM
    from .search import make_ngram_scorer

    kind, _, path = spec.partition(":")
    if kind != "ngram" or not path:
        raise UsageError(f"unsupported scorer {spec!r} (expected ngram:PATH)")
    return make_ngram_scorer(NGramLM.load(path))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_vad(args):
    from .segments import format_segments
    from .vad import VadConfig, energy_vad, read_wav

    cfg = VadConfig(args.frame_ms, args.padding_ms, args.aggressiveness, args.energy_floor_db)
    audio = read_wav(args.wav)
    rec_id = args.rec_id or Path(args.wav).stem
    segs = energy_vad(audio, cfg, rec_id=rec_id)
    _write_text(args.out, format_segments(segs, args.format))


def cmd_merge_segments(args):
    from .segments import MergeParams, format_segments, merge_segments, parse_segments, segment_stats

    params = MergeParams(args.m_dur, args.m_int)
    by_rec = parse_segments(_read_lines(args.input), args.format, path=args.input)
    merged = [merge_segments(sl, params) for sl in by_rec.values()]
    _write_text(args.out, format_segments(merged, args.format))
    if args.stats:
        for before, after in zip(by_rec.values(), merged):
            sys.stderr.write(_json_line({
                "rec_id": before.rec_id,
                "before": segment_stats(before).as_dict(),
                "after": segment_stats(after).as_dict(),
            }))


def cmd_stats(args):
    from .segments import parse_segments, segment_stats

    by_rec = parse_segments(_read_lines(args.input), args.format, path=args.input)
    _write_text(args.out, "".join(
        _json_line({"rec_id": rec, **segment_stats(sl).as_dict()}) for rec, sl in by_rec.items()
    ))


def cmd_train_lm(args):
    from .lm import train_ngram_lm

    lines = [ln for ln in _read_lines(args.input) if ln.strip()]
    lm = train_ngram_lm(lines, order=args.order, smoothing=args.smoothing, k=args.k)
    lm.save(args.out)


def cmd_train_langid(args):
    from .langid import train_langid

    corpora = {}
    for item in args.lang:
        label, sep, path = item.partition("=")
        if not sep or not label or not path:
            raise UsageError(f"--lang expects LABEL=PATH, got {item!r}")
        corpora[label] = _read_lines(path)
    train_langid(corpora).save(args.out)


def cmd_filter_bitext(args):
    from .filter import CHARACTER_CLASSES, CrossEntropyDiff, FilterConfig, Threshold, TopK, make_records, run_pipeline
    from .langid import LangIdModel
    from .lm import NGramLM

    if args.tsv:
        pairs = []
        for lineno, line in enumerate(_read_lines(args.tsv), 1):
            parts = line.split("\t")
            if len(parts) != 2:
                raise UsageError(f"{args.tsv}:{lineno}: expected 'src<TAB>tgt'")
            pairs.append((parts[0], parts[1]))
    else:
        if not (args.src and args.tgt):
            raise UsageError("give --tsv or both --src and --tgt")
        src, tgt = _read_lines(args.src), _read_lines(args.tgt)
        if len(src) != len(tgt):
            raise UsageError(f"--src has {len(src)} lines but --tgt has {len(tgt)}")
        pairs = list(zip(src, tgt))

    lms = {}
    if args.indomain_lm:
        lms["in_domain"] = NGramLM.load(args.indomain_lm)
    if args.indomain_lm_tgt:
        lms["in_domain_tgt"] = NGramLM.load(args.indomain_lm_tgt)

    selection = None
    if args.general_lm:
        if args.threshold is None or args.top_k is not None:
            raise UsageError("--general-lm selects by cross-entropy difference and needs --threshold")
        selection = CrossEntropyDiff(NGramLM.load(args.general_lm), args.threshold)
    elif args.top_k is not None:
        selection = TopK(args.top_k)
    elif args.threshold is not None:
        selection = Threshold(args.threshold)
    if selection is not None and "in_domain" not in lms:
        raise UsageError("--top-k/--threshold need --indomain-lm")

    blocked = CHARACTER_CLASSES if args.blocked is None else tuple(c for c in args.blocked.split(",") if c)
    config = FilterConfig(selection, args.side, args.src_lang, args.tgt_lang, args.max_tokens, args.max_ratio, blocked)
    langid = LangIdModel.load(args.langid) if args.langid else None

    kept, report = run_pipeline(make_records(pairs), lms, langid, config, jobs=args.jobs)
    if args.out_src or args.out_tgt:
        _write_text(args.out_src, "".join(r.src + "\n" for r in kept))
        _write_text(args.out_tgt, "".join(r.tgt + "\n" for r in kept))
    else:
        _write_text(args.out, "".join(f"{r.src}\t{r.tgt}\n" for r in kept))
    if args.report:
        _write_text(args.report, report.to_jsonl())


def cmd_learn_bpe(args):
    from .subword import learn_bpe, word_counts

    counts = word_counts(line for path in args.input for line in _read_lines(path))
    _write_text(args.out, learn_bpe(counts, args.merges).dumps())


def cmd_apply_bpe(args):
    from .subword import BPE, MergeTable

    bpe = BPE(MergeTable.load(args.table))
    _write_text(args.out, "".join(" ".join(bpe(line)) + "\n" for line in _read_lines(args.input)))


def cmd_decode(args):
    from .search import DecodeConfig, beam_search, ensemble, strip_eos

    scorer = ensemble([_load_scorer(s) for s in args.scorer])
    contexts = _read_lines(args.input) if args.input else [""]
    cfg = DecodeConfig(args.beam, args.max_len, length_norm=args.length_norm)
    out = []
    for ctx in contexts:
        hyps = beam_search(scorer, ctx.split(), cfg)
        if args.format == "text":
            best = strip_eos(hyps[0].tokens, scorer.eos) if hyps else ()
            out.append(" ".join(scorer.vocab[t] for t in best) + "\n")
            continue
        for rank, h in enumerate(hyps[: args.nbest], 1):
            words = " ".join(scorer.vocab[t] for t in strip_eos(h.tokens, scorer.eos))
            out.append(f"{rank}\t{h.score(args.length_norm):.6f}\t{words}\n")
        if len(contexts) > 1:
            out.append("\n")
    _write_text(args.out, "".join(out))


def cmd_seqkd(args):
    from .seqkd import (ORIGINAL_TAG, build_multi_ref, filter_utterances, format_tsv, generate_pseudo_labels,
                        parse_recipe, read_frame_counts, read_tsv)

    original = read_tsv(args.input)
    tags = [t for t in parse_recipe(args.recipe) if t != ORIGINAL_TAG]
    teachers = {}
    unnamed = []
    for item in args.teacher or []:
        head, sep, rest = item.partition("=")
        if sep and ":" not in head:
            teachers[head] = rest
        else:
            unnamed.append(item)
    for tag in tags:
        if tag not in teachers and unnamed:
            teachers[tag] = unnamed.pop(0)
    missing = [t for t in tags if t not in teachers]
    if missing:
        raise UsageError(f"no --teacher for recipe tag(s) {', '.join(missing)}")

    sources = [(r.utt_id, r.src) for r in original]
    pseudo = {
        tag: dict(generate_pseudo_labels(_load_scorer(teachers[tag]), sources, args.beam, args.max_len, args.jobs))
        for tag in tags
    }
    data = build_multi_ref(original, pseudo, args.recipe)
    if args.frames:
        data = filter_utterances(data, read_frame_counts(args.frames), args.max_frames, args.max_chars)
    _write_text(args.out, format_tsv(data))


def cmd_score(args):
    from .metrics import corpus_bleu, corpus_wer
    from .subword import normalize_asr_text

    hyps = _read_lines(args.hyp)
    ref_files = [_read_lines(p) for p in args.ref]
    for path, refs in zip(args.ref, ref_files):
        if len(refs) != len(hyps):
            raise UsageError(f"{path} has {len(refs)} lines but --hyp has {len(hyps)}")

    def prep(text):
        if args.no_punct:
            text = normalize_asr_text(text) if args.lc else _strip_punct(text)
        elif args.lc:
            text = text.lower()
        return text

    hyps = [prep(h) for h in hyps]
    ref_files = [[prep(r) for r in refs] for refs in ref_files]
    if args.metric == "wer":
        if len(ref_files) != 1:
            raise UsageError("wer takes exactly one --ref")
        value = corpus_wer(ref_files[0], hyps, normalize=not args.raw)
    else:
        value = corpus_bleu([list(rs) for rs in zip(*ref_files)], hyps, smoothing=args.smoothing)
    _write_text(args.out, f"{value:.4f}\n")


def _strip_punct(text):
    import unicodedata

    return " ".join("".join(" " if unicodedata.category(c).startswith("P") and c != "'" else c
                            for c in text).split())


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stp", description="Speech translation data and decoding pipeline tools.")
    parser.add_argument("--version", action="version",
                        version=f"stp {__version__} (config schema {CONFIG_SCHEMA_VERSION})")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.set_defaults(func=func)
        p.add_argument("--config", help="INI file; section [%s] provides defaults" % name)
        return p

    fmt_choices = ("kaldi", "rttm", "jsonl")

    p = add("vad", cmd_vad, "Energy-based voice activity detection on a 16-bit PCM WAV file.")
    p.add_argument("wav")
    p.add_argument("--out")
    p.add_argument("--format", choices=fmt_choices, default="kaldi")
    p.add_argument("--rec-id")
    p.add_argument("--frame-ms", type=int, default=10)
    p.add_argument("--padding-ms", type=int, default=150)
    p.add_argument("--aggressiveness", type=int, default=3)
    p.add_argument("--energy-floor-db", type=float, default=-60.0)

    p = add("merge-segments", cmd_merge_segments, "Merge short VAD segments into longer chunks.")
    p.add_argument("--in", dest="input", default="-")
    p.add_argument("--out")
    p.add_argument("--format", choices=fmt_choices, default="kaldi")
    p.add_argument("--m-dur", type=int, default=2000, help="max merged duration, 10-ms frames")
    p.add_argument("--m-int", type=int, default=100, help="max gap to bridge, 10-ms frames")
    p.add_argument("--stats", action="store_true", help="print before/after statistics to stderr")

    p = add("stats", cmd_stats, "Per-recording segment statistics as JSON lines.")
    p.add_argument("--in", dest="input", default="-")
    p.add_argument("--out")
    p.add_argument("--format", choices=fmt_choices, default="kaldi")

    p = add("train-lm", cmd_train_lm, "Train a word n-gram LM from one sentence per line.")
    p.add_argument("--in", dest="input", default="-")
    p.add_argument("--out", required=True)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--smoothing", choices=("add_k", "interpolated_kneser_ney"), default="interpolated_kneser_ney")
    p.add_argument("--k", type=float, default=1.0)

    p = add("train-langid", cmd_train_langid, "Train a character n-gram language identifier.")
    p.add_argument("--lang", action="append", required=True, metavar="LABEL=PATH")
    p.add_argument("--out", required=True)

    p = add("filter-bitext", cmd_filter_bitext, "Filter a parallel corpus and report per-stage counts.")
    p.add_argument("--src")
    p.add_argument("--tgt")
    p.add_argument("--tsv")
    p.add_argument("--indomain-lm")
    p.add_argument("--indomain-lm-tgt")
    p.add_argument("--general-lm")
    p.add_argument("--top-k", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--side", choices=("src", "tgt", "both"), default="src")
    p.add_argument("--langid")
    p.add_argument("--src-lang", default="en")
    p.add_argument("--tgt-lang", default="de")
    p.add_argument("--max-tokens", type=int, default=250)
    p.add_argument("--max-ratio", type=float, default=1.5)
    p.add_argument("--blocked", help="comma-separated character classes")
    p.add_argument("--out")
    p.add_argument("--out-src")
    p.add_argument("--out-tgt")
    p.add_argument("--report")
    p.add_argument("--jobs", type=int, default=1)

    p = add("learn-bpe", cmd_learn_bpe, "Learn BPE merges from text (several --in files form a joint vocabulary).")
    p.add_argument("--in", dest="input", action="append", default=None)
    p.add_argument("--merges", type=int, default=16000)
    p.add_argument("--out")

    p = add("apply-bpe", cmd_apply_bpe, "Segment text with a learned merge table.")
    p.add_argument("--table", required=True)
    p.add_argument("--in", dest="input", default="-")
    p.add_argument("--out")

    p = add("decode", cmd_decode, "Beam search with one scorer or an ensemble of scorers.")
    p.add_argument("--scorer", action="append", required=True, metavar="ngram:PATH")
    p.add_argument("--in", dest="input", help="one whitespace-tokenised context per line")
    p.add_argument("--out")
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--max-len", type=int, default=100)
    p.add_argument("--nbest", type=int, default=5)
    p.add_argument("--length-norm", action="store_true")
    p.add_argument("--format", choices=("nbest", "text"), default="nbest")

    p = add("seqkd", cmd_seqkd, "Build a multi-reference distillation dataset from teacher outputs.")
    p.add_argument("--in", dest="input", required=True, help="TSV utt_id, tag, src, tgt")
    p.add_argument("--teacher", action="append", metavar="[TAG=]ngram:PATH")
    p.add_argument("--recipe", default="X+Y")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=100)
    p.add_argument("--frames", help="utt_id frames per line; enables utterance filtering")
    p.add_argument("--max-frames", type=int, default=3000)
    p.add_argument("--max-chars", type=int, default=400)
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)

    p = add("score", cmd_score, "Corpus WER or BLEU.")
    p.add_argument("--metric", choices=("wer", "bleu"), required=True)
    p.add_argument("--ref", action="append", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--lc", action="store_true", help="lowercase both sides")
    p.add_argument("--no-punct", action="store_true", help="remove punctuation")
    p.add_argument("--raw", action="store_true", help="wer without transcript normalisation")
    p.add_argument("--smoothing", choices=("none", "floor"), default="none")
    p.add_argument("--out")
    return parser


def _prescan(argv, commands):
    """Find the subcommand and its ``--config`` path without a full parse."""
    command = config = None
    for i, tok in enumerate(argv):
        if command is None and tok in commands:
            command = tok
        elif command is not None and tok == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif command is not None and tok.startswith("--config="):
            config = tok.split("=", 1)[1]
    return command, config


def _apply_config(parser, command, path):
    """Install defaults from section ``[command]`` of the INI file at ``path``."""
    choices = parser._subparsers._group_actions[0].choices
    sub = choices[command]
    cp = configparser.ConfigParser(interpolation=None)
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    unknown_sections = set(cp.sections()) - set(choices)
    if unknown_sections:
        raise UsageError(f"{path}: unknown section(s) {sorted(unknown_sections)}")
    if not cp.has_section(command):
        return
    actions = {a.dest: a for a in sub._actions if a.option_strings and a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in cp.items(command):
        dest = key.lstrip("-").replace("-", "_")
        action = actions.get(dest)
        if action is None:
            raise UsageError(f"{path}: unknown key {key!r} in [{command}]")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            try:
                value = cp.getboolean(command, key)
            except ValueError:
                raise UsageError(f"{path}: {key} must be a boolean") from None
        else:
            conv = action.type or str
            items = raw.split() if isinstance(action, argparse._AppendAction) else [raw.strip()]
            try:
                value = [conv(x) for x in items]
            except (TypeError, ValueError):
                raise UsageError(f"{path}: bad value {raw!r} for {key}") from None
            if action.choices is not None and any(v not in action.choices for v in value):
                raise UsageError(f"{path}: {key} must be one of {list(action.choices)}")
            if not isinstance(action, argparse._AppendAction):
                value = value[0]
        defaults[dest] = value
        action.required = False
        # append actions extend their default, so a config list would be
        # merged with flags; keep it aside and use it only if no flag is given
        if isinstance(action, argparse._AppendAction):
            action.default = None
            sub.set_defaults(**{f"_config_{dest}": value})
        else:
            action.default = value


def _fill_config_lists(args):
    for key in [k for k in vars(args) if k.startswith("_config_")]:
        dest = key[len("_config_"):]
        if getattr(args, dest, None) is None:
            setattr(args, dest, getattr(args, key))
        delattr(args, key)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        command, config = _prescan(argv, parser._subparsers._group_actions[0].choices)
        if command and config:
            _apply_config(parser, command, config)
        args = parser.parse_args(argv)
        _fill_config_lists(args)
        if getattr(args, "input", None) is None and args.command == "learn-bpe":
            args.input = ["-"]
        args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_INVALID
    except (StpError, ValueError, KeyError) as exc:
        sys.stderr.write(f"stp: error: {exc}\n")
        return EXIT_INVALID
    except OSError as exc:
        sys.stderr.write(f"stp: I/O error: {exc}\n")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
