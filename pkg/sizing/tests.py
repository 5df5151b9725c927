import json

from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from WordCloudDJ.config import PipelineConfig
from evalgen.services import LayoutConfig, synthesize_cloud
from glyph.services import get_atlas, word_calibration_factor
from raster.services import RasterImage
from sizing.services import (
    CloudData,
    DecodedWord,
    calibrate_font_size,
    decode_cloud,
    decode_stages,
    estimate_size,
)
from wordgraph.services import HORIZONTAL, GlyphNode, WordCluster

FLAT = LayoutConfig(width=400, height=200, p_vertical=0.0)


def boxed_node(node_id, bbox):
    x, y, w, h = bbox
    return GlyphNode(
        id=node_id, letter="a", confidence=1.0, x=x + w / 2, y=y + h / 2,
        width=w, height=h, area=w * h, color=(0, 0, 0), bbox=bbox,
    )


def word(text, weight, raw_size=100.0):
    return DecodedWord(text=text, raw_size=raw_size, font_size_estimate=weight, bbox=(0, 0, 10, 10),
                       orientation=HORIZONTAL)


def decode_single(text, size, layout=FLAT):
    image, _ = synthesize_cloud([(text, size)], layout, seed=1)
    return decode_cloud(image, PipelineConfig())


class EstimateSizeTests(SimpleTestCase):
    def test_word_box_area_per_letter(self):
        nodes = tuple(boxed_node(i, (20 * i, 0, 20, 20)) for i in range(5))
        self.assertEqual(estimate_size(WordCluster(nodes)), 400)

    def test_single_letter(self):
        self.assertEqual(estimate_size(WordCluster((boxed_node(0, (3, 4, 12, 30)),))), 360)

    def test_area_grows_quadratically_with_font_size(self):
        small = decode_single("data", 20)
        large = decode_single("data", 40)
        self.assertEqual(len(small.words), 1)
        self.assertEqual(len(large.words), 1)
        ratio = large.words[0].raw_size / small.words[0].raw_size
        self.assertGreaterEqual(ratio, 3.5)
        self.assertLessEqual(ratio, 4.5)


class CalibrationTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        config = PipelineConfig()
        cls.atlas = get_atlas(config.font, config.alphabet, config.ref_size, config.render_size)

    def test_square_root_homogeneity(self):
        base = calibrate_font_size(250.0, self.atlas)
        self.assertAlmostEqual(calibrate_font_size(1000.0, self.atlas), 2 * base)

    def test_monotonic(self):
        sizes = [calibrate_font_size(raw, self.atlas) for raw in (10, 50, 51, 400, 9000)]
        self.assertEqual(sizes, sorted(set(sizes)))

    def test_rejects_non_positive(self):
        with self.assertRaises(ValidationError):
            calibrate_font_size(0, self.atlas)

    def test_reference_size_round_trip(self):
        reference = self.atlas.render_size
        cloud = decode_single("data", reference)
        estimate = cloud.words[0].weight
        self.assertLessEqual(abs(estimate - reference), 0.15 * reference)

    def test_word_factor_recovers_the_rendering_size(self):
        reference = self.atlas.render_size
        factor = word_calibration_factor(self.atlas.font_id, "data", reference)
        raw = (reference / factor) ** 2
        self.assertAlmostEqual(calibrate_font_size(raw, self.atlas, "data"), reference)

    def test_narrow_letters_are_not_read_as_small(self):
        wide = calibrate_font_size(400.0, self.atlas, "mmmm")
        narrow = calibrate_font_size(400.0, self.atlas, "iiii")
        self.assertGreater(narrow, wide)

    def test_unknown_characters_fall_back_to_the_alphabet_factor(self):
        self.assertEqual(calibrate_font_size(400.0, self.atlas, "d@t@"), calibrate_font_size(400.0, self.atlas))

    def test_alphabet_calibration_on_request(self):
        cloud = decode_cloud(synthesize_cloud([("data", 48)], FLAT, seed=1)[0], PipelineConfig(calibration="alphabet"))
        self.assertLessEqual(abs(cloud.words[0].weight - 48), 0.25 * 48)


class DecodeCloudTests(SimpleTestCase):
    def test_blank_image(self):
        cloud = decode_cloud(RasterImage.blank(64, 48), PipelineConfig())
        self.assertEqual(cloud.words, ())
        self.assertEqual(cloud.to_dict()["words"], [])

    def test_single_word(self):
        cloud = decode_single("data", 48)
        [decoded] = cloud.words
        self.assertEqual(decoded.text.lower(), "data")
        self.assertLessEqual(abs(decoded.weight - 48), 0.2 * 48)

    def test_hello_round_trip(self):
        [decoded] = decode_single("hello", 40).words
        self.assertEqual(decoded.text.lower(), "hello")

    def test_scale_equivariance(self):
        small = decode_single("cloud", 24).words[0].weight
        large = decode_single("cloud", 48, LayoutConfig(width=800, height=400, p_vertical=0.0)).words[0].weight
        self.assertAlmostEqual(large / small, 2.0, delta=0.2)

    def test_vertical_word(self):
        layout = LayoutConfig(width=200, height=400, p_vertical=1.0)
        image, truth = synthesize_cloud([("data", 48)], layout, seed=3)
        [decoded] = decode_cloud(image, PipelineConfig()).words
        self.assertEqual(truth.entries[0].orientation, "vertical")
        self.assertEqual(decoded.orientation, "vertical")
        self.assertEqual(decoded.text.lower(), "data")

    def test_deterministic_output(self):
        image, _ = synthesize_cloud([("alpha", 40), ("beta", 30)], FLAT, seed=5)
        config = PipelineConfig()
        self.assertEqual(decode_cloud(image, config).to_json(), decode_cloud(image, config).to_json())

    def test_stages_cover_every_node(self):
        image, truth = synthesize_cloud([("sweep", 36), ("line", 28)], FLAT, seed=2)
        stages = decode_stages(image, PipelineConfig())
        covered = sorted(i for cluster in stages.clusters for i in cluster.node_ids)
        self.assertEqual(covered, [n.id for n in stages.nodes])
        letters = sum(len(entry.letters) for entry in truth.entries)
        self.assertEqual(len(stages.nodes), letters)

    def test_metadata_records_config(self):
        config = PipelineConfig(tau=2.5)
        cloud = decode_cloud(RasterImage.blank(8, 8), config, source="blank.png")
        self.assertEqual(cloud.meta["config_hash"], config.digest())
        self.assertEqual(cloud.meta["source"], "blank.png")
        self.assertEqual(cloud.meta["image_size"], [8, 8])


class CloudDataTests(SimpleTestCase):
    def test_sorted_by_descending_weight(self):
        cloud = CloudData(words=(word("b", 10), word("a", 30), word("c", 20)))
        self.assertEqual([w.text for w in cloud.words], ["a", "c", "b"])

    def test_csv_export(self):
        cloud = CloudData(words=(word("small", 12.5), word("big", 40)))
        self.assertEqual(cloud.to_csv(), "text,weight\nbig,40\nsmall,12.5\n")

    def test_json_round_trip_keeps_words(self):
        cloud = CloudData(words=(word("alpha", 33.25, raw_size=400),), meta={"source": "x.png"})
        loaded = CloudData.from_json(cloud.to_json())
        self.assertEqual(loaded.words, cloud.words)
        self.assertEqual(loaded.meta, {"source": "x.png"})

    def test_schema_errors(self):
        for payload in ("not json", json.dumps({"items": []}), json.dumps({"words": [{"text": "a"}]})):
            with self.subTest(payload=payload):
                with self.assertRaises(ValidationError):
                    CloudData.from_json(payload)

    def test_weights_must_be_positive(self):
        with self.assertRaises(ValidationError):
            word("zero", 0)
