"""Configuration and the stage commands behind the CLI."""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import alignment, corpus, scale, segmentation
from .combiner import DEFAULT_GRID, normalize_and_recognize
from .ctc import DecodeParams, Hypothesis, Lexicon, read_posteriorgram, token_passing_decode
from .lm import BigramLM, read_arpa, train_bigram_kn, write_arpa
from .recognizer import RecognizerConfig, SyntheticRecognizer
from .synthetic import SentenceSource, make_vocabulary, render_line, render_page

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid configuration; reported as a usage error."""


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class PathsConfig:
    corpus: Optional[str] = None
    output: str = "out"


@dataclass
class SegmentationConfig:
    binarize_threshold: int = 128
    min_area: int = 1
    smoothing_sigma: float = 3.0
    min_peak_ratio: float = 0.1
    target_height: int = 64


@dataclass
class AlignmentConfig:
    threshold: float = 0.5


@dataclass
class ScaleConfig:
    k: int = 3
    grid: List[float] = field(default_factory=lambda: list(DEFAULT_GRID))
    augment_mode: str = "free"


@dataclass
class LMConfig:
    min_count: int = 1


@dataclass
class DecodeConfig:
    lm_scale: float = 1.0
    word_penalty: float = 0.0
    beam: Optional[int] = 64

    def params(self) -> DecodeParams:
        return DecodeParams(self.lm_scale, self.word_penalty, self.beam)


@dataclass
class CombinerConfig:
    alpha: float = 0.7
    null_conf: float = 0.5


@dataclass
class ExperimentConfig:
    vocab_size: int = 80
    train_pages: int = 20
    lines_per_page: List[int] = field(default_factory=lambda: [4, 8])
    words_per_line: List[int] = field(default_factory=lambda: [3, 6])
    bootstrap_fraction: float = 0.1
    bootstrap_noise: float = 0.235
    test_lines: int = 60
    scale_range: List[float] = field(default_factory=lambda: [0.7, 1.3])
    # scale sensitivity of the multi-scale model relative to the baseline
    multiscale_kappa_factor: float = 0.5


@dataclass
class PipelineConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    alignment: AlignmentConfig = field(default_factory=AlignmentConfig)
    scale: ScaleConfig = field(default_factory=ScaleConfig)
    lm: LMConfig = field(default_factory=LMConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    recognizer: RecognizerConfig = field(
        default_factory=lambda: RecognizerConfig(noise=0.4, scale_sensitivity=1.0))
    combiner: CombinerConfig = field(default_factory=CombinerConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def validate(self) -> None:
        s, a, sc, d, c, e = (self.segmentation, self.alignment, self.scale, self.decode,
                             self.combiner, self.experiment)
        checks = [
            (0 <= s.binarize_threshold <= 255, "segmentation.binarize_threshold must lie in [0, 255]"),
            (s.min_area >= 1, "segmentation.min_area must be >= 1"),
            (s.smoothing_sigma >= 0, "segmentation.smoothing_sigma must be >= 0"),
            (0 <= s.min_peak_ratio <= 1, "segmentation.min_peak_ratio must lie in [0, 1]"),
            (s.target_height >= 1, "segmentation.target_height must be >= 1"),
            (0 <= a.threshold <= 1, "alignment.threshold must lie in [0, 1]"),
            (sc.k >= 1, "scale.k must be >= 1"),
            (bool(sc.grid) and all(f > 0 for f in sc.grid), "scale.grid must hold positive factors"),
            (sc.augment_mode in ("free", "canvas_preserving"), "scale.augment_mode is unknown"),
            (self.lm.min_count >= 1, "lm.min_count must be >= 1"),
            (d.lm_scale >= 0, "decode.lm_scale must be >= 0"),
            (d.beam is None or d.beam >= 1, "decode.beam must be >= 1 or null"),
            (0 <= c.alpha <= 1 and 0 <= c.null_conf <= 1, "combiner.alpha/null_conf must lie in [0, 1]"),
            (e.vocab_size >= 1 and e.train_pages >= 1 and e.test_lines >= 1,
             "experiment sizes must be positive"),
            (len(e.lines_per_page) == 2 and 1 <= e.lines_per_page[0] <= e.lines_per_page[1],
             "experiment.lines_per_page must be [lo, hi]"),
            (len(e.words_per_line) == 2 and 1 <= e.words_per_line[0] <= e.words_per_line[1],
             "experiment.words_per_line must be [lo, hi]"),
            (0 <= e.bootstrap_fraction <= 1, "experiment.bootstrap_fraction must lie in [0, 1]"),
            (0 <= e.bootstrap_noise < 1, "experiment.bootstrap_noise must lie in [0, 1)"),
            (len(e.scale_range) == 2 and 0 < e.scale_range[0] <= e.scale_range[1],
             "experiment.scale_range must be [lo, hi] with lo > 0"),
            (e.multiscale_kappa_factor >= 0, "experiment.multiscale_kappa_factor must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)


def _build(cls, data: Any, where: str):
    if not is_dataclass(cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys in {where or 'config'}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = _SECTIONS.get(name) if cls is PipelineConfig else None
        kwargs[name] = _build(sub, value, f"{where}.{name}".lstrip(".")) if sub else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


_SECTIONS = {
    "paths": PathsConfig, "segmentation": SegmentationConfig, "alignment": AlignmentConfig,
    "scale": ScaleConfig, "lm": LMConfig, "decode": DecodeConfig, "recognizer": RecognizerConfig,
    "combiner": CombinerConfig, "experiment": ExperimentConfig,
}


def config_from_dict(data: dict) -> PipelineConfig:
    base = PipelineConfig().to_dict()
    for key, value in data.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            base[key].update(value)
        else:
            base[key] = value
    cfg = _build(PipelineConfig, base, "")
    cfg.validate()
    return cfg


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values parse as JSON when possible."""
    data = copy.deepcopy(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = value
    return data


def load_config(path: Optional[str], overrides: Sequence[str] = ()) -> PipelineConfig:
    data: dict = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
    return config_from_dict(apply_overrides(data, overrides))


def dump_json(obj: Any, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


# -- stage commands ----------------------------------------------------------


def cmd_segment(cfg: PipelineConfig) -> List[corpus.LineRecord]:
    """Segment every page of the corpus; writes strips and ``lines.json``."""
    if not cfg.paths.corpus:
        raise ConfigError("paths.corpus is required")
    manifest = Path(cfg.paths.corpus)
    pages = corpus.load_corpus_manifest(manifest)
    for page in pages:
        img_path = corpus.resolve(manifest, page.image_path)
        if not img_path.is_file():
            raise StageError("segment", f"page {page.page_id!r}: missing image file {img_path}")
    out = Path(cfg.paths.output)
    (out / "lines").mkdir(parents=True, exist_ok=True)
    (out / "lines64").mkdir(parents=True, exist_ok=True)
    s = cfg.segmentation
    records = []
    for page in pages:
        image = corpus.read_image(corpus.resolve(manifest, page.image_path))
        lines = segmentation.segment_page(image, page.page_id, s.binarize_threshold, s.min_area,
                                          s.smoothing_sigma, s.min_peak_ratio)
        for rec in lines:
            name = f"{page.page_id}_{rec.line_index:03d}.pgm"
            corpus.write_pgm(rec.image, out / "lines" / name)
            corpus.write_pgm(segmentation.normalize_height(rec.image, s.target_height), out / "lines64" / name)
            rec.image_path = f"lines/{name}"
        records.extend(lines)
    corpus.save_line_manifest(records, out / "lines.json")
    return records


def _group_by_page(lines: Sequence[corpus.LineRecord]) -> Dict[str, List[int]]:
    groups: Dict[str, List[int]] = {}
    for i, rec in enumerate(lines):
        groups.setdefault(rec.page_id, []).append(i)
    return groups


def cmd_align(lines: Sequence[corpus.LineRecord], pages: Sequence[corpus.PageRecord],
              recognized: Dict[str, List[str]], threshold: float):
    """Map recognized lines to reference lines page by page.

    Returns the alignment report and the updated line records.
    """
    refs = {p.page_id: p.transcript for p in pages}
    groups = _group_by_page(lines)
    report_pages = []
    updated = list(lines)
    n_lines = n_selected = 0
    for page_id, idx in groups.items():
        if page_id not in refs:
            raise StageError("align", f"page {page_id!r} is not in the corpus manifest")
        rec_text = recognized.get(page_id)
        if rec_text is None or len(rec_text) != len(idx):
            raise StageError("align", f"page {page_id!r}: need {len(idx)} recognized lines")
        amap = alignment.map_lines(rec_text, refs[page_id], threshold)
        chosen = alignment.select_training_lines(amap, [lines[i] for i in idx], refs[page_id])
        for i, rec in zip(idx, chosen):
            updated[i] = rec
        n_lines += len(idx)
        n_selected += len(amap.entries)
        report_pages.append({"page_id": page_id, **amap.to_dict()})
    report = {
        "threshold": threshold,
        "pages": report_pages,
        "selected_fraction": n_selected / n_lines if n_lines else 0.0,
    }
    return report, updated


def cmd_select(lines: Sequence[corpus.LineRecord], pages: Sequence[corpus.PageRecord],
               report: dict) -> List[corpus.LineRecord]:
    refs = {p.page_id: p.transcript for p in pages}
    groups = _group_by_page(lines)
    updated = list(lines)
    for entry in report["pages"]:
        page_id = entry["page_id"]
        if page_id not in groups or page_id not in refs:
            raise StageError("select", f"report page {page_id!r} not found")
        idx = groups[page_id]
        amap = alignment.AlignmentMap.from_dict(entry)
        for i, rec in zip(idx, alignment.select_training_lines(amap, [lines[i] for i in idx], refs[page_id])):
            updated[i] = rec
    return updated


def line_images(lines: Sequence[corpus.LineRecord], manifest: Path) -> List[corpus.GrayImage]:
    return [corpus.read_image(corpus.resolve(manifest, rec.image_path)) for rec in lines]


def cmd_scale_classify(images: Sequence[corpus.GrayImage], cfg: PipelineConfig) -> scale.ScaleClassification:
    scores = [scale.scale_score(im, cfg.segmentation.binarize_threshold) for im in images]
    return scale.jenks_classify(scores, cfg.scale.k)


def cmd_augment(lines: Sequence[corpus.LineRecord], images: Sequence[corpus.GrayImage],
                classification: scale.ScaleClassification, out_dir: Path, mode: str = "free"):
    plan = scale.plan_augmentation(classification)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for item in plan.items:
        rec = lines[item.line_index]
        stem = Path(rec.image_path).stem
        name = f"{stem}{scale.factor_suffix(item.factor)}.pgm"
        corpus.write_pgm(scale.rescale_ink(images[item.line_index], item.factor, mode), out_dir / name)
        written.append(name)
    return plan, written


def cmd_lm_train(sentences: Sequence[Sequence[str]], cfg: PipelineConfig) -> BigramLM:
    return train_bigram_kn(sentences, cfg.lm.min_count)


# -- synthetic experiment ----------------------------------------------------


@dataclass
class _Scenario:
    vocab: List[str]
    pages: list
    test_texts: List[str]
    test_cores: List[int]


def _scenario(cfg: PipelineConfig) -> Tuple[_Scenario, SentenceSource, np.random.Generator]:
    e = cfg.experiment
    rng = np.random.default_rng([cfg.seed, 1])
    vocab = make_vocabulary(rng, e.vocab_size)
    source = SentenceSource(vocab, rng)
    pref = cfg.recognizer.preferred_scale
    lo, hi = e.scale_range

    def line():
        return " ".join(source.sentence(rng, int(rng.integers(e.words_per_line[0], e.words_per_line[1] + 1))))

    def core():
        return max(2, int(round(pref * rng.uniform(lo, hi))))

    pages = []
    for _ in range(e.train_pages):
        n = int(rng.integers(e.lines_per_page[0], e.lines_per_page[1] + 1))
        texts = [line() for _ in range(n)]
        pages.append(render_page(texts, [core() for _ in texts]))
    test_texts = [line() for _ in range(e.test_lines)]
    test_cores = [core() for _ in test_texts]
    return _Scenario(vocab, pages, test_texts, test_cores), source, rng


def _truth_for_lines(page, records) -> List[Optional[int]]:
    """Index of the rendered line whose baseline falls inside each strip."""
    out = []
    for rec in records:
        x, y, w, h = rec.bbox
        hits = [i for i, b in enumerate(page.baselines) if y <= b < y + h]
        out.append(hits[0] if len(hits) == 1 else None)
    return out


_WORKER: Dict[str, Any] = {}


def _init_worker(recognizers, grid, alpha, null_conf):
    _WORKER.update(recognizers=recognizers, grid=grid, alpha=alpha, null_conf=null_conf)


def _evaluate_line(task):
    text, core = task
    image = render_line(text, core)
    recs = _WORKER["recognizers"]
    base = recs["baseline"].recognize(image, text)
    multi = recs["multiscale"].recognize(image, text)
    combined = normalize_and_recognize(image, recs["multiscale"], text, _WORKER["grid"],
                                       _WORKER["alpha"], _WORKER["null_conf"])
    raw = {k: r.raw(image, text) for k, r in recs.items()}
    return {"baseline": base.text, "multiscale": multi.text, "normalized": combined.final.text,
            "raw_baseline": raw["baseline"], "raw_multiscale": raw["multiscale"]}


def run_test_conditions(texts, cores, recognizers, grid, alpha, null_conf, jobs: int = 1):
    tasks = list(zip(texts, cores))
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_init_worker,
                                 initargs=(recognizers, grid, alpha, null_conf)) as pool:
            return list(pool.map(_evaluate_line, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    _init_worker(recognizers, grid, alpha, null_conf)
    return [_evaluate_line(t) for t in tasks]


def cmd_experiment(cfg: PipelineConfig, jobs: int = 1) -> dict:
    """Synthetic end-to-end run: bootstrap, align, classify scales, decode three ways."""
    e = cfg.experiment
    stage = "corpus"
    try:
        scen, _, _ = _scenario(cfg)
        rcfg = cfg.recognizer

        stage = "segment"
        s = cfg.segmentation
        page_lines = []
        for pi, page in enumerate(scen.pages):
            recs = segmentation.segment_page(page.image, f"p{pi:03d}", s.binarize_threshold, s.min_area,
                                             s.smoothing_sigma, s.min_peak_ratio)
            page_lines.append((page, recs, _truth_for_lines(page, recs)))
        n_seg = sum(len(r) for _, r, _ in page_lines)
        n_truth = sum(len(p.lines) for p in scen.pages)

        stage = "bootstrap"
        boot_cfg = RecognizerConfig(rcfg.alphabet, rcfg.frames_per_char, e.bootstrap_noise, 0.0,
                                    rcfg.preferred_scale, rcfg.seed)
        uniform = BigramLM.uniform(scen.vocab)
        boot = SyntheticRecognizer(boot_cfg, Lexicon(scen.vocab, rcfg.alphabet), uniform, cfg.decode.params())
        n_boot = int(round(e.bootstrap_fraction * len(page_lines)))
        train_sentences = []
        raw_refs, raw_hyps = [], []
        align_pages = []
        for pi, (page, recs, truth) in enumerate(page_lines):
            if pi < n_boot:
                train_sentences += [page.lines[t].split() for t in truth if t is not None]
                continue
            rec_text = []
            for rec, t in zip(recs, truth):
                text = page.lines[t] if t is not None else ""
                hyp = boot.raw(rec.image, text) if text else ""
                rec_text.append(hyp)
                if text:
                    raw_refs.append(text)
                    raw_hyps.append(hyp)
            align_pages.append((page, recs, truth, rec_text))
        bootstrap_ler = alignment.error_rate(raw_refs, raw_hyps) if raw_refs else 0.0

        stage = "align"
        mapped = correct = considered = 0
        selected_images = []
        for page, recs, truth, rec_text in align_pages:
            amap = alignment.map_lines(rec_text, page.lines, cfg.alignment.threshold)
            considered += len(recs)
            for li, ri in amap.entries:
                mapped += 1
                correct += truth[li] == ri
                train_sentences.append(page.lines[ri].split())
                selected_images.append(recs[li].image)
        for pi in range(n_boot):
            selected_images += [r.image for r in page_lines[pi][1]]
        selected_fraction = mapped / considered if considered else 0.0
        precision = correct / mapped if mapped else 1.0

        stage = "scale"
        scale_info: dict = {"lines": len(selected_images)}
        if len(selected_images) >= cfg.scale.k:
            cls = cmd_scale_classify(selected_images, cfg)
            counts = np.bincount(cls.labels, minlength=cfg.scale.k).tolist()
            scale_info.update(breaks=cls.breaks, class_means=cls.class_means, class_sizes=counts)
            if all(counts):
                scale_info["augmented_lines"] = len(scale.plan_augmentation(cls).items)

        stage = "lm"
        lm = train_bigram_kn(train_sentences, cfg.lm.min_count)

        stage = "evaluate"
        lex = Lexicon(scen.vocab, rcfg.alphabet)
        multi_cfg = RecognizerConfig(rcfg.alphabet, rcfg.frames_per_char, rcfg.noise,
                                     rcfg.scale_sensitivity * e.multiscale_kappa_factor,
                                     rcfg.preferred_scale, rcfg.seed)
        recognizers = {
            "baseline": SyntheticRecognizer(rcfg, lex, lm, cfg.decode.params()),
            "multiscale": SyntheticRecognizer(multi_cfg, lex, lm, cfg.decode.params()),
        }
        outputs = run_test_conditions(scen.test_texts, scen.test_cores, recognizers, cfg.scale.grid,
                                      cfg.combiner.alpha, cfg.combiner.null_conf, jobs)
        refs = scen.test_texts
        conditions = []
        base_rates = None
        for name, raw_key in (("baseline", "raw_baseline"), ("multiscale", "raw_multiscale"),
                              ("normalized", "raw_multiscale")):
            rates = alignment.error_rates(refs, [o[raw_key] for o in outputs], [o[name] for o in outputs])
            if base_rates is None:
                base_rates = rates
            conditions.append({
                "condition": name,
                "ler": rates.ler,
                "cer": rates.cer,
                "wer": rates.wer,
                "rel_cer_improvement": alignment.relative_improvement(base_rates.cer, rates.cer),
                "rel_wer_improvement": alignment.relative_improvement(base_rates.wer, rates.wer),
            })
    except (ValueError, RuntimeError) as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(stage, str(exc)) from exc

    return {
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "segmentation": {"pages": len(scen.pages), "reference_lines": n_truth, "segmented_lines": n_seg},
        "bootstrap": {"pages": n_boot, "raw_ler": bootstrap_ler},
        "alignment": {"considered": considered, "mapped": mapped, "selected_fraction": selected_fraction,
                      "precision": precision},
        "scale": scale_info,
        "lm": {"sentences": len(train_sentences)},
        "conditions": conditions,
    }


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    cols = ["condition", "ler", "cer", "wer", "rel_cer_improvement", "rel_wer_improvement"]
    writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    writer.writeheader()
    for row in report["conditions"]:
        writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k] for k in cols})
    return buf.getvalue()


def write_report(report: dict, out_dir) -> Tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jpath, cpath = out / "report.json", out / "report.csv"
    dump_json(report, jpath)
    cpath.write_text(report_csv(report), encoding="utf-8")
    return jpath, cpath


def decode_files(pg_paths: Sequence[str], lexicon_words: Sequence[str], lm: BigramLM,
                 params: DecodeParams) -> List[dict]:
    out = []
    for p in pg_paths:
        pg = read_posteriorgram(p)
        hyp = token_passing_decode(pg, Lexicon(lexicon_words, pg.alphabet), lm, params)
        out.append({"posteriorgram": str(p), **hyp.to_dict()})
    return out
