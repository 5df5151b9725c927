import json
import re
import tempfile
from io import StringIO
from pathlib import Path

from django.core.exceptions import ValidationError
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from cli.services import chart_bars, classify_error, render_bar_chart
from evalgen.services import GroundTruth, LayoutConfig, save_cloud, synthesize_cloud
from raster.services import RasterImage, save_png
from sizing.services import CloudData, DecodedWord
from WordCloudDJ.config import PipelineConfig
from WordCloudDJ.exceptions import ImageDecodeError, ImageReadError, LayoutError


def weighted(*pairs):
    return CloudData(words=tuple(
        DecodedWord(text=text, raw_size=weight ** 2, font_size_estimate=weight, bbox=(0, 0, 5, 5),
                    orientation="horizontal")
        for text, weight in pairs
    ))


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.addCleanup(self._tmp.cleanup)

    def run_command(self, *args, **kwargs):
        out, err = StringIO(), StringIO()
        call_command(*args, stdout=out, stderr=err, **kwargs)
        return out.getvalue(), err.getvalue()

    def assert_fails(self, code, *args, **kwargs):
        err = StringIO()
        with self.assertRaises(CommandError) as ctx:
            call_command(*args, stdout=StringIO(), stderr=err, **kwargs)
        self.assertEqual(ctx.exception.returncode, code)
        payload = json.loads(err.getvalue().strip().splitlines()[-1])
        self.assertEqual(payload["exit_code"], code)
        return payload

    def blank_png(self, name="blank.png"):
        path = self.tmp / name
        save_png(RasterImage.blank(48, 32), path)
        return str(path)

    def fixture(self, entries, name="cloud", seed=1):
        image, truth = synthesize_cloud(entries, LayoutConfig(width=400, height=240, p_vertical=0.0), seed=seed)
        png_path, json_path = save_cloud(image, truth, self.tmp / name)
        return str(png_path), str(json_path)


class PipelineConfigTests(SimpleTestCase):
    def test_defaults_are_valid(self):
        config = PipelineConfig()
        self.assertEqual(config.connectivity, 8)
        self.assertEqual(len(config.digest()), 64)

    def test_out_of_bounds_values(self):
        for changes in ({"connectivity": 6}, {"tau": -1}, {"alphabet": "aa"}, {"k": 0.5},
                        {"scale_mode": "global"}, {"output_format": "xml"}, {"min_pixel_count": True},
                        {"join_rule": "hue"}, {"resample": "bilinear"}, {"variant_sizes": [12, 2]},
                        {"hue_tolerance": -5}, {"gap_ratio": -0.1}, {"baseline_check": "yes"},
                        {"calibration": "font"}):
            with self.subTest(changes=changes):
                with self.assertRaises(ValidationError) as ctx:
                    PipelineConfig().replace(**changes)
                self.assertEqual(ctx.exception.code, "config")

    def test_unknown_keys_rejected(self):
        with self.assertRaises(ValidationError):
            PipelineConfig.from_dict({"tua": 2.0})

    def test_digest_tracks_values(self):
        self.assertEqual(PipelineConfig().digest(), PipelineConfig().digest())
        self.assertNotEqual(PipelineConfig().digest(), PipelineConfig(tau=2.0).digest())

    def test_variant_sizes_from_json_list(self):
        config = PipelineConfig.from_dict(json.loads(PipelineConfig().to_json()))
        self.assertIsInstance(config.variant_sizes, tuple)
        self.assertEqual(config, PipelineConfig())
        self.assertEqual(config.digest(), PipelineConfig().digest())

    def test_gates_can_be_switched_off(self):
        config = PipelineConfig.from_dict({"hue_tolerance": None, "gap_ratio": None, "baseline_check": False})
        self.assertIsNone(config.hue_tolerance)
        self.assertIsNone(config.gap_ratio)
        self.assertFalse(config.baseline_check)

    @override_settings(CLOUDDECODE={"tau": 2.0, "color_tolerance": 30.0})
    def test_precedence(self):
        with tempfile.NamedTemporaryFile("w", suffix=".json", delete=False) as fh:
            json.dump({"tau": 4.0, "connectivity": 4}, fh)
        self.addCleanup(Path(fh.name).unlink)
        config = PipelineConfig.resolve(fh.name, connectivity=8, k=None)
        self.assertEqual(config.color_tolerance, 30.0)
        self.assertEqual(config.tau, 4.0)
        self.assertEqual(config.connectivity, 8)
        self.assertIsNone(config.k)

    @override_settings(CLOUDECODE_CONFIG="")
    def test_from_settings_without_file(self):
        self.assertEqual(PipelineConfig.resolve(), PipelineConfig.from_settings())


class ErrorMappingTests(SimpleTestCase):
    def test_exit_codes(self):
        cases = [
            (ImageReadError("gone"), 1),
            (FileNotFoundError("gone"), 1),
            (ValidationError("bad", code="config"), 2),
            (ImageDecodeError("garbage"), 3),
            (LayoutError("word"), 3),
        ]
        for exc, code in cases:
            with self.subTest(exc=exc):
                self.assertEqual(classify_error(exc)[1], code)


class DecodeCommandTests(CommandTestCase):
    def test_blank_image(self):
        out, _ = self.run_command("decode", self.blank_png())
        data = json.loads(out)
        self.assertEqual(data["words"], [])
        self.assertEqual(data["meta"]["image_size"], [48, 32])

    def test_malformed_config(self):
        config = self.tmp / "bad.json"
        config.write_text('{"connectivity": 5}')
        self.assert_fails(2, "decode", self.blank_png(), config=str(config))

    def test_config_not_json(self):
        config = self.tmp / "bad.json"
        config.write_text("{connectivity")
        self.assert_fails(2, "decode", self.blank_png(), config=str(config))

    def test_missing_image(self):
        payload = self.assert_fails(1, "decode", str(self.tmp / "missing.png"))
        self.assertEqual(payload["error"], "io")

    def test_not_a_png(self):
        path = self.tmp / "notes.png"
        path.write_text("plain text")
        self.assert_fails(3, "decode", str(path))

    def test_no_images(self):
        self.assert_fails(2, "decode")

    def test_decodes_fixture_and_is_deterministic(self):
        png, _ = self.fixture([("data", 48)])
        first, _ = self.run_command("decode", png)
        second, _ = self.run_command("decode", png)
        self.assertEqual(first, second)
        [word] = json.loads(first)["words"]
        self.assertEqual(word["text"].lower(), "data")

    def test_csv_output_to_file(self):
        png, _ = self.fixture([("data", 48)])
        target = self.tmp / "words.csv"
        self.run_command("decode", png, "--format=csv", out=str(target))
        lines = target.read_text().splitlines()
        self.assertEqual(lines[0], "text,weight")
        self.assertEqual(len(lines), 2)

    def test_dumped_config_reproduces_output(self):
        png, _ = self.fixture([("cloud", 40)])
        dumped = self.tmp / "effective.json"
        self.run_command("decode", dump_config=True, tau=2.5, out=str(dumped))
        self.assertEqual(json.loads(dumped.read_text())["tau"], 2.5)
        with_flags, _ = self.run_command("decode", png, tau=2.5)
        with_file, _ = self.run_command("decode", png, config=str(dumped))
        self.assertEqual(with_flags, with_file)

    def test_flags_override_config_file(self):
        config = self.tmp / "config.json"
        config.write_text(json.dumps({"tau": 1.0, "connectivity": 4}))
        out, _ = self.run_command("decode", dump_config=True, config=str(config), tau=2.0)
        effective = json.loads(out)
        self.assertEqual(effective["tau"], 2.0)
        self.assertEqual(effective["connectivity"], 4)

    def test_debug_artifacts(self):
        png, _ = self.fixture([("data", 40)], name="debugged")
        debug_dir = self.tmp / "debug"
        self.run_command("decode", png, debug=str(debug_dir))
        self.assertTrue((debug_dir / "debugged.components.png").exists())
        steps = (debug_dir / "debugged.sweep.jsonl").read_text().splitlines()
        self.assertTrue(steps)
        self.assertIn("open_chains", json.loads(steps[0]))

    def test_several_images_into_directory(self):
        first = self.blank_png("one.png")
        second = self.blank_png("two.png")
        self.run_command("decode", first, second, out=str(self.tmp / "decoded"))
        self.assertTrue((self.tmp / "decoded" / "one.json").exists())
        self.assertTrue((self.tmp / "decoded" / "two.json").exists())


class SynthCommandTests(CommandTestCase):
    def test_single_entry(self):
        prefix = self.tmp / "one"
        self.run_command("synth", "data:30", out=str(prefix), width=200, height=100)
        truth = GroundTruth.from_json((self.tmp / "one.json").read_text())
        self.assertTrue((self.tmp / "one.png").exists())
        self.assertEqual(len(truth.entries), 1)

    def test_same_seed_same_bytes(self):
        entries_file = self.tmp / "entries.json"
        entries_file.write_text(json.dumps([{"text": "alpha", "size": 40}, ["beta", 24]]))
        for name in ("a", "b"):
            self.run_command("synth", entries_file=str(entries_file), out=str(self.tmp / name), seed=3)
        self.assertEqual((self.tmp / "a.png").read_bytes(), (self.tmp / "b.png").read_bytes())
        self.assertEqual((self.tmp / "a.json").read_bytes(), (self.tmp / "b.json").read_bytes())

    def test_random_entries(self):
        self.run_command("synth", random=5, out=str(self.tmp / "rand"), seed=2)
        self.assertEqual(len(GroundTruth.from_json((self.tmp / "rand.json").read_text()).entries), 5)

    def test_placement_failure_names_word(self):
        payload = self.assert_fails(3, "synth", "mountain:100", out=str(self.tmp / "x"), width=80, height=80)
        self.assertIn("mountain", payload["message"])

    def test_bad_inline_entry(self):
        self.assert_fails(2, "synth", "data", out=str(self.tmp / "x"))


class EvalCommandTests(CommandTestCase):
    def test_truth_against_itself(self):
        _, truth_path = self.fixture([("alpha", 40), ("beta", 24)])
        truth = GroundTruth.from_json(Path(truth_path).read_text())
        decoded = weighted(*((e.text, e.font_size) for e in truth.entries))
        decoded_path = self.tmp / "decoded.json"
        decoded_path.write_text(decoded.to_json())
        out, _ = self.run_command("eval", str(decoded_path), truth_path)
        report = json.loads(out)
        self.assertEqual(report["rmse"], 0.0)
        self.assertEqual(report["recovery_rate"], 1.0)

    def test_empty_decode(self):
        _, truth_path = self.fixture([("alpha", 40)])
        decoded_path = self.tmp / "decoded.json"
        decoded_path.write_text(json.dumps({"words": []}))
        out, _ = self.run_command("eval", str(decoded_path), truth_path)
        self.assertEqual(json.loads(out)["recovery_rate"], 0.0)

    def test_schema_mismatch(self):
        _, truth_path = self.fixture([("alpha", 40)])
        self.assert_fails(2, "eval", truth_path, truth_path)


class RedesignTests(CommandTestCase):
    def bar_widths(self, svg):
        return [float(w) for w in re.findall(r'<rect x="[\d.]+" y="[\d.]+" width="([\d.]+)"', svg)]

    def test_single_bar(self):
        svg = render_bar_chart(weighted(("data", 10)))
        self.assertEqual(svg.count('<g class="bar">'), 1)
        self.assertIn(">data</text>", svg)

    def test_linear_lengths(self):
        widths = self.bar_widths(render_bar_chart(weighted(("b", 20), ("c", 10), ("a", 30))))
        self.assertEqual(widths[0], 3 * widths[2])
        self.assertEqual(widths[1], 2 * widths[2])

    def test_bars_follow_weight_order(self):
        labels = [bar["label"] for bar in chart_bars(weighted(("low", 12), ("high", 50), ("mid", 30)))]
        self.assertEqual(labels, ["high", "mid", "low"])

    def test_labels_are_escaped(self):
        svg = render_bar_chart(weighted(("a<b", 10)))
        self.assertIn("a&lt;b", svg)

    def test_empty_chart(self):
        decoded_path = self.tmp / "decoded.json"
        decoded_path.write_text(json.dumps({"words": []}))
        target = self.tmp / "chart.svg"
        self.run_command("redesign", str(decoded_path), out=str(target))
        svg = target.read_text()
        self.assertTrue(svg.startswith("<?xml"))
        self.assertNotIn('<g class="bar">', svg)

    def test_invalid_decoded_file(self):
        decoded_path = self.tmp / "decoded.json"
        decoded_path.write_text("[]")
        self.assert_fails(2, "redesign", str(decoded_path))


class BenchmarkCommandTests(CommandTestCase):
    def test_small_run(self):
        out, _ = self.run_command("benchmark", clouds=1, words=3, seed=4)
        report = json.loads(out)
        self.assertEqual(report["clouds"], 1)
        self.assertEqual(len(report["per_cloud"]), 1)
