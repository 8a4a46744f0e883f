"""Image metrics, feature-space distance, and per-pair reporting."""

import json
import math

import numpy as np
import pytest

from glyphdiff.errors import ValidationError
from glyphdiff.glyphdata import GlyphImage
from glyphdiff.metrics import (
    MetricsReport,
    PairRecord,
    aggregate_rows,
    evaluate,
    fid,
    grayscale_histogram,
    grey,
    histogram_cosine,
    l1,
    load_report,
    ocr_accuracy,
    report_to_csv,
    save_report,
    ssim,
)

# Stabilizer constants mirrored from the implementation's documented contract
# (unit dynamic range): C1 = 0.01^2, C2 = 0.03^2.
_C1 = 1e-4


def _img(values):
    return np.asarray(values, dtype=np.float64)


class TestL1:
    def test_hand_case(self):
        a = _img([[0.0, 0.5], [1.0, 0.25]])
        b = _img([[0.5, 0.5], [0.0, 0.75]])
        assert l1(a, b) == pytest.approx((0.5 + 0.0 + 1.0 + 0.5) / 4, abs=1e-15)

    def test_identical_zero(self):
        a = np.random.default_rng(0).random((16, 16))
        assert l1(a, a) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((8, 8)), rng.random((8, 8))
        assert l1(a, b) == l1(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            l1(np.zeros((4, 4)), np.zeros((4, 5)))


class TestSsim:
    def test_identical_is_exactly_one(self):
        rng = np.random.default_rng(2)
        a = rng.random((32, 32))
        assert ssim(a, a) == 1.0

    def test_constant_vs_constant_closed_form(self):
        # Flat images: variance terms vanish, leaving (2c1c2+C1)/(c1^2+c2^2+C1).
        a = np.zeros((32, 32))
        b = np.ones((32, 32))
        expected = _C1 / (1.0 + _C1)
        assert ssim(a, b) == pytest.approx(expected, rel=1e-9)

    def test_constant_pair_general_values(self):
        c1, c2 = 0.25, 0.75
        a = np.full((32, 32), c1)
        b = np.full((32, 32), c2)
        expected = (2 * c1 * c2 + _C1) / (c1 * c1 + c2 * c2 + _C1)
        assert ssim(a, b) == pytest.approx(expected, rel=1e-9)

    def test_symmetry_bitwise(self):
        rng = np.random.default_rng(3)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert ssim(a, b) == ssim(b, a)

    def test_bounded_by_one_for_positive_images(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            a, b = rng.random((16, 16)), rng.random((16, 16))
            assert ssim(a, b) <= 1.0
            assert ssim(a, b) > -1.0

    def test_window_validation(self):
        a = np.zeros((16, 16))
        with pytest.raises(ValidationError):
            ssim(a, a, window=4)
        with pytest.raises(ValidationError):
            ssim(a, a, window=21)
        with pytest.raises(ValidationError):
            ssim(a, a, sigma=0.0)

    def test_accepts_glyph_images(self):
        px = np.random.default_rng(5).random((16, 16)).astype(np.float32)
        g = GlyphImage(pixels=px, char_id=0, style_id=0)
        assert ssim(g, g) == 1.0


class TestGrey:
    def test_identical_is_one(self):
        rng = np.random.default_rng(6)
        a = rng.random((16, 16))
        assert grey(a, a) == 1.0

    def test_disjoint_histograms_zero(self):
        a = np.full((8, 8), 0.1)
        b = np.full((8, 8), 0.9)
        assert grey(a, b) == 0.0

    def test_three_bin_hand_case(self):
        # Histograms [3, 4, 0] vs [3, 0, 4]: cosine = 9 / (5 * 5) = 0.36.
        a = _img([[0.1, 0.1, 0.1, 0.5, 0.5, 0.5, 0.5]])
        b = _img([[0.1, 0.1, 0.1, 0.9, 0.9, 0.9, 0.9]])
        assert grey(a, b, bins=3) == 0.36

    def test_pixel_shuffle_invariance(self):
        rng = np.random.default_rng(7)
        a = rng.random((8, 8))
        b = rng.random((8, 8))
        value = grey(a, b)
        perm = rng.permutation(64)
        a2 = a.ravel()[perm].reshape(8, 8)
        assert grey(a2, b) == value

    def test_symmetry(self):
        rng = np.random.default_rng(8)
        a, b = rng.random((8, 8)), rng.random((8, 8))
        assert grey(a, b) == grey(b, a)

    def test_unequal_pixel_counts_normalized(self):
        a = np.full((4, 4), 0.1)
        b = np.full((8, 8), 0.1)
        assert grey(a, b) == pytest.approx(1.0, rel=1e-12)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            grey(np.full((4, 4), 1.5), np.zeros((4, 4)))

    def test_histogram_census(self):
        a = _img([[0.0, 0.1], [0.5, 1.0]])
        h = grayscale_histogram(a, bins=4)
        assert h.sum() == 4.0
        assert np.array_equal(h, [2.0, 0.0, 1.0, 1.0])  # last bin closed at 1.0

    def test_histogram_cosine_validation(self):
        with pytest.raises(ValidationError):
            histogram_cosine(np.zeros(3), np.ones(3))
        with pytest.raises(ValidationError):
            histogram_cosine(np.ones(3), np.ones(4))


class TestFid:
    def test_self_distance_negligible(self):
        rng = np.random.default_rng(9)
        feats = rng.standard_normal((200, 8))
        assert fid(feats, feats) <= 1e-4

    def test_one_dimensional_gaussian_closed_form(self):
        # FID of two 1-D Gaussians is (mu1-mu2)^2 + (s1-s2)^2.
        rng = np.random.default_rng(10)
        n = 10_000
        mu1, s1 = 0.3, 1.0
        mu2, s2 = 0.0, 1.5
        a = (mu1 + s1 * rng.standard_normal(n))[:, None]
        b = (mu2 + s2 * rng.standard_normal(n))[:, None]
        closed = (mu1 - mu2) ** 2 + (s1 - s2) ** 2
        assert fid(a, b) == pytest.approx(closed, rel=0.10)

    def test_mean_shift_only(self):
        rng = np.random.default_rng(11)
        n = 10_000
        a = rng.standard_normal((n, 1))
        b = a + 2.0
        assert fid(a, b) == pytest.approx(4.0, rel=0.05)

    def test_symmetry(self):
        rng = np.random.default_rng(12)
        a = rng.standard_normal((100, 4))
        b = 0.5 * rng.standard_normal((120, 4)) + 1.0
        assert fid(a, b) == pytest.approx(fid(b, a), rel=1e-8)

    def test_validation(self):
        with pytest.raises(ValidationError):
            fid(np.zeros((1, 4)), np.zeros((10, 4)))  # too few samples
        with pytest.raises(ValidationError):
            fid(np.zeros((10, 4)), np.zeros((10, 5)))  # dim mismatch
        with pytest.raises(ValidationError):
            fid(np.zeros(10), np.zeros(10))  # not 2-D


def _pairs_from_corpus(corpus, n=4, noise=0.0, seed=0):
    """Aligned (generated, target) lists drawn from real corpus glyphs."""
    m = corpus.manifest
    rng = np.random.default_rng(seed)
    style = m.seen_styles[0]
    pairs_g, pairs_t = [], []
    for cid in m.seen_chars[:n]:
        target = corpus.glyph(style, cid)
        px = target.pixels
        if noise > 0:
            px = np.clip(px + noise * rng.standard_normal(px.shape).astype(np.float32), 0, 1)
        pairs_g.append(GlyphImage(pixels=px.astype(np.float32), char_id=cid, style_id=style))
        pairs_t.append(target)
    return pairs_g, pairs_t


class TestEvaluate:
    def test_perfect_generation_scores(self, tiny_corpus, tiny_classifier):
        gen, tgt = _pairs_from_corpus(tiny_corpus, n=4)
        report = evaluate(gen, tgt, "scsf", tiny_classifier)
        assert report.setting == "scsf"
        assert len(report.rows) == 4
        for row in report.rows:
            assert row.l1 == 0.0
            assert row.ssim == 1.0
            assert row.grey == 1.0
        assert report.aggregates["l1"] == 0.0
        assert report.aggregates["ssim"] == 1.0
        assert report.aggregates["fid"] <= 1e-4
        assert report.meta["n_pairs"] == 4
        assert len(report.meta["classifier_hash"]) == 16

    def test_aggregates_are_exact_means(self, tiny_corpus, tiny_classifier):
        gen, tgt = _pairs_from_corpus(tiny_corpus, n=5, noise=0.2)
        report = evaluate(gen, tgt, "ucsf", tiny_classifier)
        for key in ("l1", "ssim", "grey"):
            expected = math.fsum(getattr(r, key) for r in report.rows) / len(report.rows)
            assert report.aggregates[key] == expected
        hits = sum(1 for r in report.rows if r.ocr_correct)
        assert report.aggregates["ocr_accuracy"] == hits / len(report.rows)

    def test_input_order_invariance(self, tiny_corpus, tiny_classifier):
        gen, tgt = _pairs_from_corpus(tiny_corpus, n=5, noise=0.1)
        r1 = evaluate(gen, tgt, "scsf", tiny_classifier)
        order = [3, 0, 4, 1, 2]
        r2 = evaluate([gen[i] for i in order], [tgt[i] for i in order], "scsf", tiny_classifier)
        assert r1.to_dict() == r2.to_dict()

    def test_single_pair_has_no_fid(self, tiny_corpus, tiny_classifier):
        gen, tgt = _pairs_from_corpus(tiny_corpus, n=1)
        report = evaluate(gen, tgt, "scsf", tiny_classifier)
        assert "fid" not in report.aggregates

    def test_identity_mismatch_rejected(self, tiny_corpus, tiny_classifier):
        gen, tgt = _pairs_from_corpus(tiny_corpus, n=2)
        gen = [GlyphImage(pixels=g.pixels, char_id=g.char_id + 1, style_id=g.style_id) for g in gen]
        with pytest.raises(ValidationError):
            evaluate(gen, tgt, "scsf", tiny_classifier)

    def test_bad_setting_rejected(self, tiny_corpus, tiny_classifier):
        gen, tgt = _pairs_from_corpus(tiny_corpus, n=2)
        with pytest.raises(ValidationError):
            evaluate(gen, tgt, "held-out", tiny_classifier)

    def test_report_round_trip(self, tiny_corpus, tiny_classifier, tmp_path):
        gen, tgt = _pairs_from_corpus(tiny_corpus, n=3, noise=0.1)
        report = evaluate(gen, tgt, "ucuf", tiny_classifier)
        path = tmp_path / "report.json"
        save_report(report, path)
        loaded = load_report(path)
        assert loaded.to_dict() == report.to_dict()

    def test_csv_matches_rows(self, tiny_corpus, tiny_classifier, tmp_path):
        gen, tgt = _pairs_from_corpus(tiny_corpus, n=3, noise=0.1)
        report = evaluate(gen, tgt, "scuf", tiny_classifier)
        path = tmp_path / "report.csv"
        report_to_csv(report, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "char_id,style_id,l1,ssim,grey,ocr_correct"
        assert len(lines) == 1 + len(report.rows)
        first = lines[1].split(",")
        assert int(first[0]) == report.rows[0].char_id
        assert float(first[2]) == report.rows[0].l1  # repr round-trips exactly


class TestOcr:
    def test_trained_classifier_reads_training_glyphs(self, tiny_corpus, tiny_classifier):
        m = tiny_corpus.manifest
        glyphs = [tiny_corpus.glyph(m.seen_styles[0], cid) for cid in m.seen_chars]
        acc = ocr_accuracy(glyphs, [g.char_id for g in glyphs], tiny_classifier)
        assert acc >= 0.8

    def test_accuracy_range_and_exactness(self, tiny_corpus, tiny_classifier):
        m = tiny_corpus.manifest
        glyphs = [tiny_corpus.glyph(m.seen_styles[0], cid) for cid in m.seen_chars[:4]]
        acc = ocr_accuracy(glyphs, [g.char_id for g in glyphs], tiny_classifier)
        assert acc in {i / 4 for i in range(5)}


class TestAggregateRows:
    def test_hand_case(self):
        rows = [
            PairRecord(char_id=0, style_id=1, l1=0.1, ssim=0.9, grey=0.8, ocr_correct=True),
            PairRecord(char_id=1, style_id=1, l1=0.3, ssim=0.5, grey=0.6, ocr_correct=False),
        ]
        agg = aggregate_rows(rows)
        assert agg["l1"] == pytest.approx(0.2, abs=1e-15)
        assert agg["ssim"] == pytest.approx(0.7, abs=1e-15)
        assert agg["grey"] == pytest.approx(0.7, abs=1e-15)
        assert agg["ocr_accuracy"] == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            aggregate_rows([])
