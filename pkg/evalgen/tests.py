import math
import tempfile
from pathlib import Path

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase, tag

from WordCloudDJ.config import PipelineConfig
from WordCloudDJ.exceptions import LayoutError
from evalgen.services import (
    VOCABULARY,
    GroundTruth,
    GroundTruthEntry,
    LayoutConfig,
    evaluate,
    match_words,
    random_entries,
    rank_agreement,
    rmse,
    run_benchmark,
    save_cloud,
    synthesize_cloud,
)
from raster.services import WHITE, encode_png, load_image
from sizing.services import CloudData, DecodedWord, decode_cloud


def decoded(text, weight):
    return DecodedWord(text=text, raw_size=weight ** 2, font_size_estimate=weight, bbox=(0, 0, 10, 10),
                       orientation="horizontal")


def truth_of(*pairs):
    return GroundTruth(entries=tuple(
        GroundTruthEntry(text=text, font_size=size, bbox=(0, 0, 10, 10), orientation="horizontal", color=(0, 0, 0))
        for text, size in pairs
    ))


def separated(a, b, padding):
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax + aw + padding <= bx or bx + bw + padding <= ax or ay + ah + padding <= by or by + bh + padding <= ay


class RmseTests(SimpleTestCase):
    def test_exact_estimates(self):
        self.assertEqual(rmse([(10, 10), (20, 20)]), 0.0)

    def test_known_value(self):
        self.assertAlmostEqual(rmse([(3, 0), (4, 0)]), 3.5355339, places=6)

    def test_matches_numpy(self):
        rng = np.random.default_rng(11)
        for case in range(100):
            with self.subTest(case=case):
                n = int(rng.integers(1, 30))
                estimates, truths = rng.uniform(0, 100, n), rng.uniform(0, 100, n)
                expected = float(np.sqrt(np.mean((estimates - truths) ** 2)))
                got = rmse(list(zip(estimates.tolist(), truths.tolist())))
                self.assertAlmostEqual(got, expected, delta=1e-9 * max(1.0, expected))

    def test_empty_pairs(self):
        with self.assertRaises(ValidationError) as ctx:
            rmse([])
        self.assertEqual(ctx.exception.code, "empty")


class MatchWordsTests(SimpleTestCase):
    def test_identical_words(self):
        [(i, j, pair)] = match_words([decoded("data", 30)], truth_of(("data", 32)))
        self.assertEqual((i, j, pair.distance), (0, 0, 0))
        self.assertEqual(pair.error, -2)

    def test_one_unknown_letter(self):
        [(_, _, pair)] = match_words([decoded("dat?", 30)], truth_of(("data", 30)))
        self.assertEqual(pair.distance, 1)

    def test_case_insensitive(self):
        [(_, _, pair)] = match_words([decoded("DaTa", 30)], truth_of(("data", 30)))
        self.assertEqual(pair.distance, 0)

    def test_distant_words_never_pair(self):
        self.assertEqual(match_words([decoded("xyz", 30)], truth_of(("data", 30))), [])

    def test_exact_words_pair_with_each_other(self):
        rng = np.random.default_rng(4)
        for case in range(30):
            with self.subTest(case=case):
                texts = [VOCABULARY[int(i)] for i in rng.choice(len(VOCABULARY), 6, replace=False)]
                predicted = [decoded(str(t), float(rng.integers(10, 70))) for t in rng.permutation(texts)]
                truth = truth_of(*((t, int(rng.integers(10, 70))) for t in texts))
                matches = match_words(predicted, truth)
                self.assertEqual(len(matches), 6)
                for _, _, pair in matches:
                    self.assertEqual(pair.predicted, pair.truth)

    def test_one_to_one(self):
        matches = match_words([decoded("data", 30), decoded("date", 30)], truth_of(("data", 30)))
        self.assertEqual(len(matches), 1)
        self.assertEqual(matches[0][2].predicted, "data")


class EvaluateTests(SimpleTestCase):
    def test_perfect_decode(self):
        truth = truth_of(("alpha", 40), ("beta", 20), ("gamma", 30))
        cloud = CloudData(words=tuple(decoded(e.text, e.font_size) for e in truth.entries))
        report = evaluate(cloud, truth)
        self.assertEqual(report.rmse, 0.0)
        self.assertEqual(report.recovery_rate, 1.0)
        self.assertEqual(report.rank_agreement, 1.0)
        self.assertEqual(report.unmatched_gt, [])
        self.assertEqual(report.spurious_pred, [])

    def test_empty_decode(self):
        truth = truth_of(("alpha", 40), ("beta", 20))
        report = evaluate(CloudData(words=()), truth)
        self.assertIsNone(report.rmse)
        self.assertEqual(report.recovery_rate, 0.0)
        self.assertEqual(report.unmatched_gt, ["alpha", "beta"])

    def test_spurious_and_edit1(self):
        truth = truth_of(("alpha", 40), ("beta", 20))
        cloud = CloudData(words=(decoded("alpha", 40), decoded("bet?", 20), decoded("zzzz", 12)))
        report = evaluate(cloud, truth)
        self.assertEqual(report.recovery_rate, 0.5)
        self.assertEqual(report.recovery_rate_edit1, 1.0)
        self.assertEqual(report.spurious_pred, ["zzzz"])

    def test_rank_agreement_skips_close_sizes(self):
        truth = truth_of(("alpha", 40), ("beta", 36), ("gamma", 10))
        matches = match_words([decoded("alpha", 20), decoded("beta", 30), decoded("gamma", 5)], truth)
        # alpha/beta are within the gap, the two remaining pairs agree
        self.assertEqual(rank_agreement(matches, truth), 1.0)
        self.assertIsNone(rank_agreement([], truth_of(("a", 10), ("b", 12))))


class SynthesizeTests(SimpleTestCase):
    def test_empty_list(self):
        image, truth = synthesize_cloud([], LayoutConfig(width=40, height=30))
        self.assertEqual((image.width, image.height), (40, 30))
        self.assertTrue((image.pixels == np.array(WHITE, dtype=np.uint8)).all())
        self.assertEqual(truth.entries, ())

    def test_deterministic(self):
        entries = random_entries(3, count=8)
        first = synthesize_cloud(entries, seed=9)
        second = synthesize_cloud(entries, seed=9)
        self.assertEqual(encode_png(first[0]), encode_png(second[0]))
        self.assertEqual(first[1].to_json(), second[1].to_json())

    def test_boxes_are_disjoint_and_inside(self):
        layout = LayoutConfig()
        image, truth = synthesize_cloud(random_entries(7, count=20), layout, seed=7)
        boxes = [e.bbox for e in truth.entries]
        for a in range(len(boxes)):
            x, y, w, h = boxes[a]
            self.assertTrue(x >= 0 and y >= 0 and x + w <= layout.width and y + h <= layout.height)
            for b in range(a + 1, len(boxes)):
                self.assertTrue(separated(boxes[a], boxes[b], layout.padding), (boxes[a], boxes[b]))

    def test_entries_keep_input_order(self):
        entries = [("small", 12), ("large", 60), ("medium", 30)]
        _, truth = synthesize_cloud(entries, LayoutConfig(width=400, height=300))
        self.assertEqual([(e.text, e.font_size) for e in truth.entries], entries)

    def test_letter_boxes_inside_word(self):
        _, truth = synthesize_cloud([("cloud", 40), ("data", 30)], LayoutConfig(width=400, height=300, p_vertical=0.5))
        for entry in truth.entries:
            self.assertEqual(len(entry.letters), len(entry.text))
            x, y, w, h = entry.bbox
            for lx, ly, lw, lh in entry.letters:
                self.assertTrue(x <= lx and y <= ly and lx + lw <= x + w and ly + lh <= y + h)

    def test_vertical_words_are_tall(self):
        _, truth = synthesize_cloud([("vertical", 30)], LayoutConfig(width=200, height=400, p_vertical=1.0))
        [entry] = truth.entries
        self.assertEqual(entry.orientation, "vertical")
        self.assertGreater(entry.bbox[3], entry.bbox[2])
        # letters run bottom to top
        self.assertGreater(entry.letters[0][1], entry.letters[-1][1])

    def test_invalid_entries(self):
        for entries in ([("", 20)], [("héllo", 20)], [("word", 4)], [("word", 200)]):
            with self.subTest(entries=entries):
                with self.assertRaises(ValidationError):
                    synthesize_cloud(entries, LayoutConfig(width=100, height=100))

    def test_word_too_large_for_canvas(self):
        with self.assertRaises(LayoutError) as ctx:
            synthesize_cloud([("mountain", 100)], LayoutConfig(width=120, height=120))
        self.assertEqual(ctx.exception.word, "mountain")

    def test_palette_without_contrast(self):
        layout = LayoutConfig(width=50, height=50, palette=((250, 250, 250),))
        with self.assertRaises(ValidationError):
            synthesize_cloud([("a", 20)], layout)

    def test_save_cloud_writes_pair(self):
        image, truth = synthesize_cloud([("data", 30)], LayoutConfig(width=200, height=100))
        with tempfile.TemporaryDirectory() as tmp:
            png_path, json_path = save_cloud(image, truth, Path(tmp) / "cloud")
            self.assertEqual(png_path.name, "cloud.png")
            self.assertTrue((load_image(png_path).pixels == image.pixels).all())
            self.assertEqual(GroundTruth.from_json(json_path.read_text()).to_json(), truth.to_json())


class RandomEntriesTests(SimpleTestCase):
    def test_distinct_words_within_range(self):
        entries = random_entries(5, count=20, min_size=12, max_size=72)
        self.assertEqual(len({text for text, _ in entries}), 20)
        self.assertTrue(all(12 <= size <= 72 for _, size in entries))
        self.assertEqual(entries, random_entries(5, count=20, min_size=12, max_size=72))

    def test_vocabulary_too_small(self):
        with self.assertRaises(ValidationError):
            random_entries(0, count=len(VOCABULARY) + 1)


@tag("slow")
class RoundTripTests(SimpleTestCase):
    def test_small_benchmark(self):
        report = run_benchmark(clouds=2, words=12, seed=100, config=PipelineConfig())
        self.assertEqual(len(report.reports), 2)
        self.assertGreaterEqual(report.recovery_rate_edit1, 0.5)
        self.assertTrue(math.isfinite(report.mean_rmse))

    def test_seeded_corpus_meets_acceptance_thresholds(self):
        report = run_benchmark(clouds=10, words=20, seed=0, config=PipelineConfig())
        self.assertEqual(report.failures(), [], report.to_dict())

    def test_size_order_is_preserved(self):
        entries = random_entries(7, count=12)
        image, truth = synthesize_cloud(entries, LayoutConfig(), seed=7)
        report = evaluate(decode_cloud(image, PipelineConfig()), truth)
        self.assertGreaterEqual(report.rank_agreement, 0.8)

    def test_each_word_size_within_a_fifth(self):
        entries = [("network", 64), ("data", 48), ("cloud", 36), ("graph", 28), ("sweep", 20)]
        image, truth = synthesize_cloud(entries, LayoutConfig(width=600, height=400, p_vertical=0.0), seed=4)
        report = evaluate(decode_cloud(image, PipelineConfig()), truth)
        self.assertEqual(sorted(p.truth for p in report.pairs), sorted(text for text, _ in entries))
        for pair in report.pairs:
            with self.subTest(word=pair.truth):
                self.assertLessEqual(abs(pair.error), 0.2 * pair.truth_size)
