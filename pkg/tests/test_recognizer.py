import numpy as np
import pytest

from htrkit.alignment import error_rate, levenshtein
from htrkit.ctc import DecodeParams, Lexicon, best_path_decode
from htrkit.lm import BigramLM, train_bigram_kn
from htrkit.recognizer import (DEFAULT_ALPHABET, RecognizerConfig, SyntheticRecognizer, frame_targets,
                               synth_posteriorgram)
from htrkit.scale import scale_score
from htrkit.synthetic import SentenceSource, make_vocabulary, render_line


def random_strings(n, length=10, seed=0):
    rng = np.random.default_rng(seed)
    return ["".join(rng.choice(list("abcdefghij"), size=length)) for _ in range(n)]


class TestConfig:
    @pytest.mark.parametrize("kw", [{"noise": 1.0}, {"noise": -0.1}, {"frames_per_char": 0},
                                    {"scale_sensitivity": -1}, {"preferred_scale": 0}, {"alphabet": []},
                                    {"alphabet": ["a", "a"]}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            RecognizerConfig(**kw)

    def test_effective_noise_symmetric_in_log_scale(self):
        cfg = RecognizerConfig(noise=0.1, scale_sensitivity=0.2, preferred_scale=24)
        assert cfg.effective_noise(24) == pytest.approx(0.1)
        assert cfg.effective_noise(48) == pytest.approx(cfg.effective_noise(12))
        assert cfg.effective_noise(36) > cfg.effective_noise(30) > cfg.effective_noise(24)

    def test_effective_noise_capped(self):
        cfg = RecognizerConfig(noise=0.5, scale_sensitivity=10)
        assert cfg.effective_noise(1000) == pytest.approx(0.95)


class TestFrames:
    def test_repeat_gets_a_blank(self):
        cfg = RecognizerConfig(alphabet=["a", "b"], frames_per_char=2)
        assert [lab for lab, _ in frame_targets("aab", cfg)] == [0, 0, 2, 0, 1, 1, 2, 2]

    def test_foreign_character(self):
        with pytest.raises(ValueError, match="alphabet"):
            frame_targets("a?", RecognizerConfig())

    @pytest.mark.parametrize("text", ["hello world", "aa bb", "x", ""])
    def test_noiseless_best_path_is_the_text(self, text):
        pg = synth_posteriorgram(text, 24.0, RecognizerConfig(noise=0.0))
        assert best_path_decode(pg) == text

    def test_rows_are_distributions(self):
        pg = synth_posteriorgram("some text", 30.0, RecognizerConfig(noise=0.3, scale_sensitivity=1))
        assert np.allclose(pg.frames.sum(axis=1), 1.0) and (pg.frames > 0).all()

    def test_deterministic(self):
        cfg = RecognizerConfig(noise=0.3, seed=5)
        a = synth_posteriorgram("repeatable", 20.0, cfg).frames
        b = synth_posteriorgram("repeatable", 20.0, cfg).frames
        assert np.array_equal(a, b)
        c = synth_posteriorgram("repeatable", 20.0, RecognizerConfig(noise=0.3, seed=6)).frames
        assert not np.array_equal(a, c)


class TestNoise:
    def test_moderate_noise_band(self):
        texts = random_strings(200)
        cfg = RecognizerConfig(noise=0.3)
        hyps = [best_path_decode(synth_posteriorgram(t, 24.0, cfg)) for t in texts]
        cer = error_rate(texts, hyps)
        assert 0.05 < cer < 0.45

    def test_more_noise_never_fewer_errors(self):
        texts = random_strings(100, seed=3)
        errs = []
        for eps in (0.0, 0.1, 0.2, 0.3):
            cfg = RecognizerConfig(noise=eps)
            errs.append(sum(levenshtein(t, best_path_decode(synth_posteriorgram(t, 24.0, cfg))) for t in texts))
        assert errs[0] == 0
        assert errs == sorted(errs)

    def test_scale_mismatch_is_symmetric(self):
        texts = random_strings(60, seed=4)
        cfg = RecognizerConfig(noise=0.05, scale_sensitivity=0.3)
        assert cfg.effective_noise(12.0) == pytest.approx(cfg.effective_noise(48.0))
        at = {s: error_rate(texts, [best_path_decode(synth_posteriorgram(t, s, cfg)) for t in texts])
              for s in (24.0, 48.0)}
        assert at[48.0] > at[24.0]


class TestSyntheticRecognizer:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.vocab = make_vocabulary(rng, 30)
        src = SentenceSource(self.vocab, rng)
        self.lm = train_bigram_kn([src.sentence(rng, 4) for _ in range(200)])
        self.lines = [" ".join(src.sentence(rng, 4)) for _ in range(20)]
        self.lex = Lexicon(self.vocab, DEFAULT_ALPHABET)

    def test_noiseless_lines_recognized_exactly(self):
        rec = SyntheticRecognizer(RecognizerConfig(noise=0.0), self.lex, self.lm)
        for text in self.lines[:5]:
            img = render_line(text, 24)
            assert scale_score(img) == 24
            hyp = rec.recognize(img, text)
            assert " ".join(hyp.words) == text
            assert rec.raw(img, text) == text

    def test_scale_mismatch_raises_wer(self):
        cfg = RecognizerConfig(noise=0.2, scale_sensitivity=1.0)
        rec = SyntheticRecognizer(cfg, self.lex, self.lm, DecodeParams(beam=16))

        def wer(core):
            hyps = [" ".join(rec.recognize(render_line(t, core), t).words) for t in self.lines]
            return error_rate(self.lines, hyps, "word")

        assert wer(48) > wer(24)

    def test_needs_truth(self):
        rec = SyntheticRecognizer(RecognizerConfig(), self.lex, self.lm)
        with pytest.raises(ValueError, match="ground-truth"):
            rec.recognize(render_line("abc", 24))

    def test_empty_lexicon(self):
        rec = SyntheticRecognizer(RecognizerConfig(), Lexicon([], DEFAULT_ALPHABET), BigramLM.uniform([]))
        with pytest.raises(ValueError, match="empty lexicon"):
            rec.recognize(render_line("abc", 24), "abc")
