import io
import os
import tempfile
from collections import deque

import numpy as np
from PIL import Image
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from WordCloudDJ.exceptions import ImageDecodeError, ImageReadError
from glyph.services import render_text
from raster.services import (
    ComponentRegion,
    RasterImage,
    chroma_distance,
    color_distance,
    decode_png,
    detect_background,
    encode_png,
    extract_components,
    load_image,
    merge_diacritics,
    render_component_map,
    union_regions,
)

WHITE = (255, 255, 255)
RED = (200, 30, 30)
BLUE = (20, 40, 190)


def paint(width, height, strokes, background=WHITE):
    """Image with ``strokes`` = {color: [(x, y), ...]} over a flat background."""
    pixels = np.empty((height, width, 3), dtype=np.uint8)
    pixels[:, :] = background
    for color, points in strokes.items():
        for x, y in points:
            pixels[y, x] = color
    return RasterImage.from_array(pixels)


def flood_fill_components(image, background, connectivity, tolerance, join_rule="color"):
    """Plain breadth-first flood fill used as a reference labeling."""
    if join_rule == "chroma":
        def distance(a, b):
            return chroma_distance(a, b, background)
    else:
        distance = color_distance
    if connectivity == 4:
        steps = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    else:
        steps = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)]
    seen = set()
    regions = []
    for y in range(image.height):
        for x in range(image.width):
            if (x, y) in seen or color_distance(image.pixel(x, y), background) <= tolerance:
                continue
            region = {(x, y)}
            seen.add((x, y))
            queue = deque([(x, y)])
            while queue:
                cx, cy = queue.popleft()
                for dx, dy in steps:
                    nx, ny = cx + dx, cy + dy
                    if not (0 <= nx < image.width and 0 <= ny < image.height) or (nx, ny) in seen:
                        continue
                    color = image.pixel(nx, ny)
                    if color_distance(color, background) <= tolerance:
                        continue
                    if distance(color, image.pixel(cx, cy)) > tolerance:
                        continue
                    seen.add((nx, ny))
                    region.add((nx, ny))
                    queue.append((nx, ny))
            regions.append(frozenset(region))
    return regions


class RasterImageTests(SimpleTestCase):
    def test_rejects_zero_dimension(self):
        with self.assertRaises(ValidationError):
            RasterImage(width=0, height=3, pixels=np.zeros((3, 0, 3), dtype=np.uint8))

    def test_rejects_mismatched_grid(self):
        with self.assertRaises(ValidationError):
            RasterImage(width=2, height=2, pixels=np.zeros((3, 2, 3), dtype=np.uint8))

    def test_pixel_is_x_then_y(self):
        image = paint(4, 3, {RED: [(3, 1)]})
        self.assertEqual(image.pixel(3, 1), RED)
        self.assertEqual(image.pixel(1, 2), WHITE)


class LoadImageTests(SimpleTestCase):
    def test_missing_file_is_read_error(self):
        with self.assertRaises(ImageReadError):
            load_image("/nonexistent/cloud.png")

    def test_read_error_is_an_os_error(self):
        self.assertTrue(issubclass(ImageReadError, OSError))

    def test_non_png_is_decode_error(self):
        buffer = io.BytesIO()
        Image.new("RGB", (4, 4), RED).save(buffer, format="JPEG")
        with self.assertRaises(ImageDecodeError):
            decode_png(buffer.getvalue())

    def test_garbage_bytes_are_decode_error(self):
        with self.assertRaises(ImageDecodeError):
            decode_png(b"definitely not an image")

    def test_alpha_is_composited_over_white(self):
        rgba = Image.new("RGBA", (2, 1), (0, 0, 0, 0))
        rgba.putpixel((1, 0), (0, 0, 255, 255))
        buffer = io.BytesIO()
        rgba.save(buffer, format="PNG")
        image = decode_png(buffer.getvalue())
        self.assertEqual(image.pixel(0, 0), WHITE)
        self.assertEqual(image.pixel(1, 0), (0, 0, 255))

    def test_file_round_trip(self):
        image = paint(5, 4, {BLUE: [(1, 1), (2, 2)]})
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "cloud.png")
            with open(path, "wb") as fh:
                fh.write(encode_png(image))
            loaded = load_image(path)
        self.assertTrue(np.array_equal(loaded.pixels, image.pixels))


class DetectBackgroundTests(SimpleTestCase):
    def test_flat_image(self):
        self.assertEqual(detect_background(RasterImage.blank(6, 5, (10, 20, 30))), (10, 20, 30))

    def test_interior_colors_are_ignored(self):
        interior = [(x, y) for x in range(1, 5) for y in range(1, 5)]
        image = paint(6, 6, {RED: interior})
        self.assertEqual(detect_background(image), WHITE)

    def test_tie_goes_to_smallest_color(self):
        # 2x2 image: every pixel is on the border, two of each color
        image = paint(2, 2, {RED: [(0, 0), (1, 0)], BLUE: [(0, 1), (1, 1)]})
        self.assertEqual(detect_background(image), BLUE)

    def test_interior_permutation_does_not_matter(self):
        rng = np.random.default_rng(7)
        pixels = np.full((12, 12, 3), 240, dtype=np.uint8)
        pixels[1:-1, 1:-1] = rng.integers(0, 256, size=(10, 10, 3), dtype=np.uint8)
        expected = detect_background(RasterImage.from_array(pixels))
        for _ in range(5):
            inner = pixels[1:-1, 1:-1].reshape(-1, 3)
            pixels[1:-1, 1:-1] = inner[rng.permutation(len(inner))].reshape(10, 10, 3)
            self.assertEqual(detect_background(RasterImage.from_array(pixels)), expected)


class ExtractComponentsTests(SimpleTestCase):
    def test_plus_sign_is_one_component(self):
        plus = [(1, 0), (0, 1), (1, 1), (2, 1), (1, 2)]
        components = extract_components(paint(3, 3, {RED: plus}), WHITE)
        self.assertEqual(len(components), 1)
        self.assertEqual(components[0].bbox, (0, 0, 3, 3))
        self.assertEqual(components[0].pixel_count, 5)
        self.assertEqual(components[0].mean_color, RED)

    def test_background_only_gives_nothing(self):
        self.assertEqual(extract_components(RasterImage.blank(8, 8), WHITE), [])

    def test_diagonal_touch_depends_on_connectivity(self):
        diagonal = [(0, 0), (1, 1)]
        image = paint(3, 3, {RED: diagonal})
        eight = extract_components(image, WHITE, connectivity=8, min_pixel_count=1)
        four = extract_components(image, WHITE, connectivity=4, min_pixel_count=1)
        self.assertEqual(len(eight), 1)
        self.assertEqual(len(four), 2)

    def test_different_colors_split(self):
        image = paint(4, 1, {RED: [(0, 0), (1, 0)], BLUE: [(2, 0), (3, 0)]})
        components = extract_components(image, WHITE, min_pixel_count=1)
        self.assertEqual([c.mean_color for c in components], [RED, BLUE])

    def test_black_and_gray_neighbours_split(self):
        pixels = np.full((4, 8, 3), 255, dtype=np.uint8)
        pixels[1:3, 1:4] = (0, 0, 0)
        pixels[1:3, 4:7] = (100, 100, 100)
        components = extract_components(RasterImage.from_array(pixels), WHITE, 8, 48.0, 1)
        self.assertEqual([c.mean_color for c in components], [(0, 0, 0), (100, 100, 100)])

    def test_antialiased_edge_follows_join_rule(self):
        edge = (228, 178, 178)  # RED blended about a third over white
        image = paint(4, 1, {RED: [(0, 0), (1, 0), (2, 0)], edge: [(3, 0)]})
        by_color = extract_components(image, WHITE, min_pixel_count=1)
        by_chroma = extract_components(image, WHITE, min_pixel_count=1, join_rule="chroma")
        self.assertEqual([c.pixel_count for c in by_color], [3, 1])
        self.assertEqual([c.pixel_count for c in by_chroma], [4])
        self.assertEqual(len(merge_diacritics(by_color, background=WHITE)), 1)

    def test_intensity_is_distance_from_background(self):
        edge = (228, 178, 178)
        image = paint(3, 1, {RED: [(0, 0), (1, 0)], edge: [(2, 0)]})
        [region] = extract_components(image, WHITE, min_pixel_count=1, join_rule="chroma")
        self.assertEqual(region.intensity.tolist(), [[225, 225, 77]])

    def test_small_regions_are_dropped(self):
        image = paint(6, 6, {RED: [(0, 0)], BLUE: [(3, 3), (3, 4), (4, 3), (4, 4)]})
        components = extract_components(image, WHITE)
        self.assertEqual(len(components), 1)
        self.assertEqual(components[0].mean_color, BLUE)

    def test_sorted_by_top_then_left(self):
        image = paint(6, 6, {RED: [(4, 0), (0, 3)], BLUE: [(1, 0)]})
        components = extract_components(image, WHITE, min_pixel_count=1)
        self.assertEqual([(c.min_y, c.min_x) for c in components], [(0, 1), (0, 4), (3, 0)])

    def test_invalid_configuration(self):
        image = RasterImage.blank(2, 2)
        with self.assertRaises(ValidationError):
            extract_components(image, WHITE, connectivity=6)
        with self.assertRaises(ValidationError):
            extract_components(image, WHITE, color_tolerance=-1)
        with self.assertRaises(ValidationError):
            extract_components(image, WHITE, join_rule="hue")

    def test_matches_flood_fill_on_random_images(self):
        rng = np.random.default_rng(2024)
        palette = np.array([
            WHITE, RED, BLUE, (0, 0, 0), (128, 128, 128), (200, 200, 200), (60, 60, 60), (250, 250, 250),
        ], dtype=np.uint8)
        for case in range(200):
            width, height = rng.integers(1, 33, size=2)
            pixels = palette[rng.integers(0, len(palette), size=(height, width))]
            image = RasterImage.from_array(pixels)
            background = detect_background(image)
            for connectivity, join_rule in ((4, "color"), (8, "color"), (8, "chroma")):
                with self.subTest(case=case, connectivity=connectivity, join_rule=join_rule):
                    components = extract_components(
                        image, background, connectivity=connectivity, min_pixel_count=1, join_rule=join_rule
                    )
                    expected = flood_fill_components(image, background, connectivity, 48.0, join_rule)
                    self.assertEqual(
                        sorted(sorted(r) for r in expected),
                        sorted(sorted(c.pixels()) for c in components),
                    )

    def test_regions_partition_foreground_with_tight_boxes(self):
        rng = np.random.default_rng(11)
        for case in range(10):
            pixels = np.full((24, 24, 3), 255, dtype=np.uint8)
            pixels[rng.random((24, 24)) < 0.3] = RED
            image = RasterImage.from_array(pixels)
            components = extract_components(image, WHITE, min_pixel_count=1)
            with self.subTest(case=case):
                seen = set()
                for region in components:
                    points = region.pixels()
                    self.assertFalse(points & seen)
                    seen |= points
                    xs = [x for x, _ in points]
                    ys = [y for _, y in points]
                    self.assertEqual(region.bbox, (min(xs), min(ys), max(xs) - min(xs) + 1, max(ys) - min(ys) + 1))
                    self.assertEqual(region.pixel_count, len(points))
                ys, xs = np.nonzero((pixels != 255).any(axis=-1))
                self.assertEqual(seen, set(zip(xs.tolist(), ys.tolist())))


def block(x, y, w, h, color=RED):
    return ComponentRegion.from_pixels([(x + i, y + j) for i in range(w) for j in range(h)], color)


class MergeDiacriticsTests(SimpleTestCase):
    def test_dot_above_stem_merges(self):
        stem = block(10, 8, 3, 12)
        dot = block(10, 3, 3, 3)
        merged = merge_diacritics([stem, dot])
        self.assertEqual(len(merged), 1)
        self.assertEqual(merged[0].bbox, (10, 3, 3, 17))
        self.assertEqual(merged[0].pixel_count, stem.pixel_count + dot.pixel_count)

    def test_dot_beside_rotated_stem_merges(self):
        stem = block(3, 10, 12, 3)
        dot = block(17, 10, 3, 3)
        self.assertEqual(len(merge_diacritics([stem, dot])), 1)

    def test_distant_or_offset_marks_stay_apart(self):
        stem = block(10, 20, 3, 12)
        far_dot = block(10, 3, 3, 3)
        side_dot = block(30, 14, 3, 3)
        self.assertEqual(len(merge_diacritics([stem, far_dot, side_dot])), 3)

    def test_different_colors_stay_apart(self):
        stem = block(10, 8, 3, 12, RED)
        dot = block(10, 3, 3, 3, BLUE)
        self.assertEqual(len(merge_diacritics([stem, dot], background=WHITE)), 2)

    def test_two_letters_side_by_side_stay_apart(self):
        left = block(0, 0, 5, 10)
        right = block(7, 0, 5, 10)
        self.assertEqual(len(merge_diacritics([left, right])), 2)

    def test_small_letter_beside_wide_letter_stays_apart(self):
        wide = block(0, 0, 30, 24)
        small = block(34, 10, 5, 6)
        self.assertEqual(len(merge_diacritics([wide, small])), 2)

    def test_rendered_letter_i_becomes_one_region(self):
        coverage = render_text("default", "i", 40).coverage
        ink = np.pad(coverage > 127, 4)
        for mask in (ink, np.rot90(ink)):
            pixels = np.where(mask[:, :, None], 0, 255).astype(np.uint8).repeat(3, axis=2)
            image = RasterImage.from_array(pixels)
            parts = extract_components(image, WHITE)
            self.assertEqual(len(parts), 2)
            self.assertEqual(len(merge_diacritics(parts, background=WHITE)), 1)

    def test_antialiased_letter_pieces_rejoin(self):
        coverage = render_text("default", "o", 40).coverage
        gray = np.pad(255 - coverage, 4, constant_values=255)
        image = RasterImage.from_array(np.repeat(gray[..., None], 3, axis=2))
        pieces = extract_components(image, WHITE, min_pixel_count=1)
        [letter] = merge_diacritics(pieces, background=WHITE)
        [reference] = extract_components(image, WHITE, min_pixel_count=1, join_rule="chroma")
        self.assertEqual(letter.pixels(), reference.pixels())
        self.assertEqual(letter.intensity.max(), 255)

    def test_solid_shades_stay_apart(self):
        pixels = np.full((6, 10, 3), 255, dtype=np.uint8)
        pixels[1:5, 1:5] = (0, 0, 0)
        pixels[1:5, 5:9] = (100, 100, 100)
        parts = extract_components(RasterImage.from_array(pixels), WHITE)
        self.assertEqual(len(merge_diacritics(parts, background=WHITE)), 2)

    def test_touching_fringe_of_another_hue_stays_apart(self):
        image = paint(6, 4, {RED: [(x, y) for x in range(3) for y in range(4)], BLUE: [(3, 1), (3, 2)]})
        parts = extract_components(image, WHITE, min_pixel_count=1)
        self.assertEqual(len(merge_diacritics(parts, background=WHITE)), 2)

    def test_union_keeps_strongest_intensity(self):
        image = paint(3, 1, {RED: [(0, 0), (1, 0)], (228, 178, 178): [(2, 0)]})
        core, edge = extract_components(image, WHITE, min_pixel_count=1)
        union = union_regions(core, edge)
        self.assertEqual(union.intensity.tolist(), [[225, 225, 77]])
        self.assertIsNone(union_regions(core, block(3, 0, 1, 1)).intensity)

    def test_idempotent_with_background(self):
        coverage = render_text("default", "i j", 36).coverage
        gray = np.pad(255 - coverage, 4, constant_values=255)
        image = RasterImage.from_array(np.repeat(gray[..., None], 3, axis=2))
        once = merge_diacritics(extract_components(image, WHITE, min_pixel_count=1), background=WHITE)
        twice = merge_diacritics(once, background=WHITE)
        self.assertEqual([r.bbox for r in once], [r.bbox for r in twice])
        self.assertEqual(len(once), 2)

    def test_idempotent(self):
        regions = [block(10, 8, 3, 12), block(10, 3, 3, 3), block(20, 8, 3, 12), block(20, 3, 3, 3), block(40, 0, 6, 9)]
        once = merge_diacritics(regions)
        twice = merge_diacritics(once)
        self.assertEqual([r.bbox for r in once], [r.bbox for r in twice])
        self.assertEqual(len(once), 3)


class ComponentMapTests(SimpleTestCase):
    def test_map_has_image_size_and_paints_components(self):
        image = paint(8, 8, {RED: [(2, 2), (2, 3), (3, 2), (3, 3)]})
        components = extract_components(image, WHITE)
        picture = render_component_map(image, components)
        self.assertEqual((picture.width, picture.height), (8, 8))
        self.assertNotEqual(picture.pixel(2, 2), WHITE)
        self.assertEqual(picture.pixel(6, 6), WHITE)
