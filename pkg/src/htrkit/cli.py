"""``htrkit`` command line.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import alignment, corpus, scale
from .combiner import combine
from .ctc import Hypothesis, best_path_decode
from .lm import read_arpa, write_arpa
from .pipeline import (ConfigError, PipelineConfig, StageError, cmd_align, cmd_augment, cmd_experiment,
                       cmd_lm_train, cmd_scale_classify, cmd_segment, cmd_select, decode_files, dump_json,
                       line_images, load_config, write_report)
from .recognizer import RecognizerConfig, synth_posteriorgram
from .synthetic import SentenceSource, make_vocabulary, render_page

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("htrkit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _need_file(path: Optional[str], what: str) -> Path:
    if not path:
        raise UsageError(f"{what} is required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _read_lines(path: Path) -> List[str]:
    return path.read_text(encoding="utf-8").splitlines()


# -- handlers ----------------------------------------------------------------


def _segment(cfg: PipelineConfig, args) -> None:
    if args.corpus:
        cfg.paths.corpus = args.corpus
    if args.output:
        cfg.paths.output = args.output
    _need_file(cfg.paths.corpus, "corpus manifest")
    lines = cmd_segment(cfg)
    log.info("segmented %d lines into %s", len(lines), cfg.paths.output)


def _align(cfg: PipelineConfig, args) -> None:
    lines_path = _need_file(args.lines, "--lines")
    corpus_path = _need_file(args.corpus or cfg.paths.corpus, "corpus manifest")
    rec_path = _need_file(args.recognized, "--recognized")
    lines = corpus.load_line_manifest(lines_path)
    pages = corpus.load_corpus_manifest(corpus_path)
    recognized = json.loads(rec_path.read_text(encoding="utf-8"))
    report, updated = cmd_align(lines, pages, recognized, cfg.alignment.threshold)
    dump_json(report, args.report)
    corpus.save_line_manifest(updated, args.out_lines or lines_path)
    log.info("selected fraction %.4f", report["selected_fraction"])


def _select(cfg: PipelineConfig, args) -> None:
    lines_path = _need_file(args.lines, "--lines")
    corpus_path = _need_file(args.corpus or cfg.paths.corpus, "corpus manifest")
    report_path = _need_file(args.report, "--report")
    report = json.loads(report_path.read_text(encoding="utf-8"))
    updated = cmd_select(corpus.load_line_manifest(lines_path), corpus.load_corpus_manifest(corpus_path), report)
    corpus.save_line_manifest(updated, args.out_lines or lines_path)


def _scale_classify(cfg: PipelineConfig, args) -> None:
    lines_path = _need_file(args.lines, "--lines")
    lines = corpus.load_line_manifest(lines_path)
    result = cmd_scale_classify(line_images(lines, lines_path), cfg)
    dump_json(result.to_dict(), args.out)


def _augment(cfg: PipelineConfig, args) -> None:
    lines_path = _need_file(args.lines, "--lines")
    cls_path = _need_file(args.classification, "--classification")
    lines = corpus.load_line_manifest(lines_path)
    cls = scale.ScaleClassification.from_dict(json.loads(cls_path.read_text(encoding="utf-8")))
    if len(cls.labels) != len(lines):
        raise UsageError("classification does not match the line manifest")
    out_dir = Path(args.out_dir)
    plan, written = cmd_augment(lines, line_images(lines, lines_path), cls, out_dir, cfg.scale.augment_mode)
    dump_json({**plan.to_dict(), "files": written}, out_dir / "plan.json")


def _lm_train(cfg: PipelineConfig, args) -> None:
    sentences: List[List[str]] = []
    if args.text:
        sentences += [ln.split() for ln in _read_lines(_need_file(args.text, "--text")) if ln.strip()]
    if args.lines:
        for rec in corpus.load_line_manifest(_need_file(args.lines, "--lines")):
            if rec.status in (corpus.LineStatus.SELECTED, corpus.LineStatus.VERIFIED) and rec.transcript:
                sentences.append(rec.transcript.split())
    if not args.text and not args.lines:
        raise UsageError("give --text and/or --lines")
    write_arpa(cmd_lm_train(sentences, cfg), args.out)


def _decode(cfg: PipelineConfig, args) -> None:
    for p in args.posteriorgram:
        _need_file(p, "posteriorgram")
    words = [w for w in _read_lines(_need_file(args.lexicon, "--lexicon")) if w.strip()]
    lm = read_arpa(_need_file(args.lm, "--lm"))
    results = decode_files(args.posteriorgram, words, lm, cfg.decode.params())
    dump_json(results, args.out)


def _combine(cfg: PipelineConfig, args) -> None:
    hyps = []
    for p in args.hyps:
        data = json.loads(_need_file(p, "hypothesis file").read_text(encoding="utf-8"))
        items = data if isinstance(data, list) else [data]
        hyps += [Hypothesis.from_dict(d) for d in items]
    if not hyps:
        raise UsageError("no hypotheses given")
    final, trace = combine(hyps, cfg.combiner.alpha, cfg.combiner.null_conf)
    dump_json({"final": final.to_dict(), "text": final.text, "votes": trace}, args.out)


def _evaluate(cfg: PipelineConfig, args) -> None:
    refs = _read_lines(_need_file(args.refs, "--refs"))
    hyps = _read_lines(_need_file(args.hyps, "--hyps"))
    raw = _read_lines(_need_file(args.raw, "--raw")) if args.raw else hyps
    if not len(refs) == len(hyps) == len(raw):
        raise UsageError("reference and hypothesis files need the same number of lines")
    rates = alignment.error_rates(refs, raw, hyps)
    out = {"lines": len(refs), "ler": rates.ler, "cer": rates.cer, "wer": rates.wer}
    text = json.dumps(out, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _experiment(cfg: PipelineConfig, args) -> None:
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    report = cmd_experiment(cfg, jobs=args.jobs)
    jpath, cpath = write_report(report, args.output or cfg.paths.output)
    log.info("wrote %s and %s", jpath, cpath)


def _synth_corpus(cfg: PipelineConfig, args) -> None:
    """Write a seeded synthetic corpus, optionally with noisy recognizer output."""
    e = cfg.experiment
    rng = np.random.default_rng([cfg.seed, 2])
    vocab = make_vocabulary(rng, e.vocab_size)
    source = SentenceSource(vocab, rng)
    pref = cfg.recognizer.preferred_scale
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    pages, recognized = [], {}
    rcfg = cfg.recognizer
    noisy = RecognizerConfig(rcfg.alphabet, rcfg.frames_per_char, e.bootstrap_noise, 0.0, pref, rcfg.seed)
    for i in range(args.pages):
        n = int(rng.integers(e.lines_per_page[0], e.lines_per_page[1] + 1))
        texts = [" ".join(source.sentence(rng, int(rng.integers(e.words_per_line[0], e.words_per_line[1] + 1))))
                 for _ in range(n)]
        cores = [max(2, int(round(pref * rng.uniform(*e.scale_range)))) for _ in texts]
        page = render_page(texts, cores)
        pid = f"page{i:03d}"
        corpus.write_pgm(page.image, out / f"{pid}.pgm")
        pages.append(corpus.PageRecord(pid, f"{pid}.pgm", texts))
        recognized[pid] = [best_path_decode(synth_posteriorgram(t, pref, noisy)) for t in texts]
    corpus.save_corpus_manifest(pages, out / "corpus.json")
    dump_json(recognized, out / "recognized.json")
    (out / "lexicon.txt").write_text("\n".join(vocab) + "\n", encoding="utf-8")


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. decode.beam=16 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="htrkit", description="Handwritten text recognition pipeline tools.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("segment", parents=[common], help="segment corpus pages into line strips")
    p.add_argument("--corpus", help="corpus manifest (overrides paths.corpus)")
    p.add_argument("--output", help="output directory (overrides paths.output)")
    p.set_defaults(handler=_segment)

    p = sub.add_parser("align", parents=[common], help="map recognized lines to reference transcripts")
    p.add_argument("--lines", required=True)
    p.add_argument("--corpus")
    p.add_argument("--recognized", required=True, help="JSON object: page id -> recognized lines")
    p.add_argument("--report", required=True)
    p.add_argument("--out-lines", help="updated line manifest (default: overwrite --lines)")
    p.set_defaults(handler=_align)

    p = sub.add_parser("select", parents=[common], help="apply an alignment report to a line manifest")
    p.add_argument("--lines", required=True)
    p.add_argument("--corpus")
    p.add_argument("--report", required=True)
    p.add_argument("--out-lines")
    p.set_defaults(handler=_select)

    p = sub.add_parser("scale-classify", parents=[common], help="group line strips into scale classes")
    p.add_argument("--lines", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_scale_classify)

    p = sub.add_parser("augment", parents=[common], help="write rescaled copies of line strips")
    p.add_argument("--lines", required=True)
    p.add_argument("--classification", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=_augment)

    p = sub.add_parser("lm-train", parents=[common], help="train a bigram language model")
    p.add_argument("--text", help="one sentence per line")
    p.add_argument("--lines", help="line manifest; selected and verified transcripts are used")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_lm_train)

    p = sub.add_parser("decode", parents=[common], help="decode posteriorgram files")
    p.add_argument("--posteriorgram", nargs="+", required=True)
    p.add_argument("--lexicon", required=True, help="one word per line")
    p.add_argument("--lm", required=True, help="ARPA bigram model")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_decode)

    p = sub.add_parser("combine", parents=[common], help="ROVER over hypothesis files")
    p.add_argument("--hyps", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_combine)

    p = sub.add_parser("evaluate", parents=[common], help="LER/CER/WER of hypothesis lines")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--raw", help="raw recognizer lines for LER (default: --hyps)")
    p.add_argument("--out")
    p.set_defaults(handler=_evaluate)

    p = sub.add_parser("experiment", parents=[common], help="run the synthetic end-to-end experiment")
    p.add_argument("--output", help="report directory (overrides paths.output)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(handler=_experiment)

    p = sub.add_parser("synth-corpus", parents=[common], help="write a synthetic page corpus")
    p.add_argument("--output", required=True)
    p.add_argument("--pages", type=int, default=2)
    p.set_defaults(handler=_synth_corpus)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        args.handler(cfg, args)
    except (ConfigError, UsageError) as exc:
        print(f"htrkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"htrkit {args.command}: stage {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"htrkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
