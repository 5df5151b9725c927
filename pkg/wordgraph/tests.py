import math
from dataclasses import replace
from itertools import permutations

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from glyph.services import Classification
from raster.services import ComponentRegion
from wordgraph.services import (
    HORIZONTAL,
    VERTICAL,
    GlyphNode,
    SweepConfig,
    WeightParams,
    WordCluster,
    assert_partition,
    build_nodes,
    chain_to_word,
    edge_weight,
    extract_words,
    match_bipartite,
    resolve_orientations,
    sweep_extract,
)

BLACK = (0, 0, 0)
RED = (200, 30, 30)
BLUE = (20, 40, 190)


def node(node_id, x, y, width=10, height=14, color=BLACK, letter="a", rotated_letter=None):
    return GlyphNode(
        id=node_id,
        letter=letter,
        confidence=0.9,
        rotated_letter=rotated_letter or letter,
        rotated_confidence=0.9,
        x=x,
        y=y,
        width=width,
        height=height,
        area=width * height,
        color=color,
        bbox=(int(x - width / 2), int(y - height / 2), width, height),
    )


def word_nodes(text, start_id, x0, y, color, spacing=12):
    return [node(start_id + i, x0 + i * spacing, y, color=color, letter=ch) for i, ch in enumerate(text)]


def cluster_ids(clusters):
    return sorted(tuple(sorted(c.node_ids)) for c in clusters)


class BuildNodesTests(SimpleTestCase):
    def test_empty(self):
        self.assertEqual(build_nodes([], []), [])

    def test_node_geometry(self):
        region = ComponentRegion.from_pixels(
            [(5 + i, 7 + j) for i in range(10) for j in range(20)], BLACK
        )
        [glyph] = build_nodes([region], [Classification("a", 0.8, "e", 0.4)])
        self.assertEqual((glyph.x, glyph.y), (10, 17))
        self.assertEqual((glyph.width, glyph.height, glyph.area), (10, 20, 200))
        self.assertEqual(glyph.letter, "a")
        self.assertEqual(glyph.rotated_letter, "e")

    def test_ids_follow_scan_order(self):
        lower = ComponentRegion.from_pixels([(0, 10), (1, 10)], BLACK)
        upper = ComponentRegion.from_pixels([(8, 0), (9, 0)], BLACK)
        nodes = build_nodes([lower, upper], [Classification("l", 1, "l", 1), Classification("u", 1, "u", 1)])
        self.assertEqual([(n.id, n.letter) for n in nodes], [(0, "u"), (1, "l")])

    def test_low_confidence_is_unknown(self):
        region = ComponentRegion.from_pixels([(0, 0)], BLACK)
        [glyph] = build_nodes([region], [Classification("a", 0.2, "b", 0.9)], confidence_floor=0.35)
        self.assertIsNone(glyph.letter)
        self.assertEqual(glyph.rotated_letter, "b")

    def test_length_mismatch(self):
        region = ComponentRegion.from_pixels([(0, 0)], BLACK)
        with self.assertRaises(ValidationError) as ctx:
            build_nodes([region], [])
        self.assertEqual(ctx.exception.code, "length_mismatch")

    def test_node_box_must_be_consistent(self):
        with self.assertRaises(ValidationError):
            GlyphNode(id=0, letter="a", confidence=1, x=0, y=0, width=2, height=3, area=5, color=BLACK)

    def test_hue_from_background(self):
        region = ComponentRegion.from_pixels([(0, 0), (1, 0)], BLACK)
        [plain] = build_nodes([region], [Classification("a", 1, "a", 1)])
        [tinted] = build_nodes([region], [Classification("a", 1, "a", 1)], background=(255, 255, 255))
        self.assertIsNone(plain.hue)
        self.assertEqual(tinted.hue, (-255.0, -255.0, -255.0))

    def test_box_spans_per_orientation(self):
        glyph = GlyphNode(id=0, letter="a", confidence=1, x=12, y=23, width=4, height=6, area=24,
                          color=BLACK, bbox=(10, 20, 4, 6))
        self.assertEqual(glyph.span_along(HORIZONTAL), (10, 14))
        self.assertEqual(glyph.span_across(HORIZONTAL), (20, 26))
        self.assertEqual(glyph.span_along(VERTICAL), (-26, -20))
        self.assertEqual(glyph.span_across(VERTICAL), (10, 14))


class EdgeWeightTests(SimpleTestCase):
    params = WeightParams(x_scale=20, y_scale=7, color_scale=60, size_scale=14)

    def test_identical_nodes(self):
        a = node(0, 10, 10)
        self.assertEqual(edge_weight(a, a, self.params), 0)

    def test_one_unit_along_x(self):
        self.assertAlmostEqual(edge_weight(node(0, 0, 5), node(1, 20, 5), self.params), 1.0)

    def test_matches_term_by_term_recomputation(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            values = rng.integers(1, 200, size=12)
            a = node(0, values[0], values[1], int(values[2]), int(values[3]), tuple(int(v) for v in values[4:7]))
            b = node(1, values[7], values[8], int(values[9]), int(values[10]), (int(values[11]), 0, 255))
            p = WeightParams(*(float(v) for v in rng.uniform(0.5, 50, size=4)))
            color = math.sqrt(sum((ca - cb) ** 2 for ca, cb in zip(a.color, b.color)))
            expected = (
                abs(a.x - b.x) / p.x_scale
                + abs(a.y - b.y) / p.y_scale
                + color / p.color_scale
                + abs(a.height - b.height) / p.size_scale
                + abs(a.width - b.width) / p.size_scale
            )
            self.assertAlmostEqual(edge_weight(a, b, p), expected, delta=1e-12 * max(1.0, expected))
            self.assertEqual(edge_weight(a, b, p), edge_weight(b, a, p))

    def test_scales_must_be_positive(self):
        with self.assertRaises(ValidationError):
            WeightParams(x_scale=0, y_scale=1, color_scale=1, size_scale=1)


def brute_force(left, right, cost):
    """Every maximum-size matching; returns (best total, lexicographically first best pair list)."""
    best = None
    if len(left) <= len(right):
        options = ([(l, r) for l, r in zip(left, perm)] for perm in permutations(right, len(left)))
    else:
        options = ([(l, r) for l, r in zip(perm, right)] for perm in permutations(left, len(right)))
    for pairs in options:
        total = sum(cost[l][r] for l, r in pairs)
        key = (total, sorted(pairs))
        if best is None or key < best:
            best = key
    return best


class MatchBipartiteTests(SimpleTestCase):
    def test_single_option(self):
        self.assertEqual(match_bipartite([0], [1], lambda l, r: 42.0), {(0, 1)})

    def test_two_by_two(self):
        weights = {(0, 10): 1, (0, 11): 2, (1, 10): 2, (1, 11): 1}
        self.assertEqual(match_bipartite([0, 1], [10, 11], lambda l, r: weights[(l, r)]), {(0, 10), (1, 11)})

    def test_empty_side(self):
        self.assertEqual(match_bipartite([], [1, 2], lambda l, r: 0), set())
        self.assertEqual(match_bipartite([1], [], lambda l, r: 0), set())

    def test_ties_pick_smallest_pairs(self):
        self.assertEqual(match_bipartite([1, 0], [5, 4], lambda l, r: 1.0), {(0, 4), (1, 5)})

    def test_agrees_with_exhaustive_enumeration(self):
        rng = np.random.default_rng(17)
        for case in range(150):
            n_left, n_right = (int(v) for v in rng.integers(1, 7, size=2))
            left = list(range(n_left))
            right = list(range(100, 100 + n_right))
            # small integer weights produce plenty of ties
            cost = {l: {r: int(rng.integers(0, 4)) for r in right} for l in left}
            with self.subTest(case=case, shape=(n_left, n_right)):
                pairs = match_bipartite(left, right, lambda l, r: cost[l][r])
                total, expected = brute_force(left, right, cost)
                self.assertEqual(len(pairs), min(n_left, n_right))
                self.assertEqual(sum(cost[l][r] for l, r in pairs), total)
                self.assertEqual(sorted(pairs), expected)

    def test_real_valued_totals(self):
        rng = np.random.default_rng(3)
        for case in range(30):
            cost = rng.uniform(0, 10, size=(5, 5))
            pairs = match_bipartite(range(5), range(5), lambda l, r: cost[l, r])
            total, _ = brute_force(list(range(5)), list(range(5)), cost)
            with self.subTest(case=case):
                self.assertAlmostEqual(sum(cost[l, r] for l, r in pairs), total, places=9)


class SweepExtractTests(SimpleTestCase):
    def test_empty(self):
        self.assertEqual(sweep_extract([], SweepConfig()), [])

    def test_single_node(self):
        clusters = sweep_extract([node(0, 5, 5)], SweepConfig())
        self.assertEqual(cluster_ids(clusters), [(0,)])

    def test_two_words_in_separate_rows(self):
        nodes = word_nodes("alpha", 0, 20, 20, RED) + word_nodes("beta", 5, 26, 60, BLUE)
        for mode in ("chain", "image"):
            with self.subTest(scale_mode=mode):
                clusters = sweep_extract(nodes, SweepConfig(scale_mode=mode))
                self.assertEqual(cluster_ids(clusters), [(0, 1, 2, 3, 4), (5, 6, 7, 8)])
                self.assertEqual(sorted(chain_to_word(c) for c in clusters), ["alpha", "beta"])

    def test_color_separates_adjacent_words(self):
        nodes = word_nodes("ab", 0, 20, 20, RED) + word_nodes("cd", 2, 44, 20, BLUE)
        clusters = sweep_extract(nodes, SweepConfig())
        self.assertEqual(cluster_ids(clusters), [(0, 1), (2, 3)])

    def test_reading_order_is_strictly_increasing(self):
        nodes = word_nodes("sweep", 0, 10, 30, BLACK)
        [cluster] = sweep_extract(list(reversed(nodes)), SweepConfig())
        xs = [n.x for n in cluster.nodes]
        self.assertEqual(xs, sorted(set(xs)))

    def test_vertical_word_reads_bottom_to_top(self):
        nodes = [
            node(i, 40, 100 - 12 * i, width=14, height=10, letter="?", rotated_letter=ch)
            for i, ch in enumerate("up")
        ]
        [cluster] = sweep_extract(nodes, SweepConfig(orientation=VERTICAL))
        self.assertEqual(cluster.orientation, VERTICAL)
        self.assertEqual(cluster.node_ids, (0, 1))
        self.assertEqual(chain_to_word(cluster), "up")

    def test_zero_tau_gives_singletons(self):
        nodes = word_nodes("alpha", 0, 20, 20, RED)
        clusters = sweep_extract(nodes, SweepConfig(tau=0))
        self.assertEqual(len(clusters), 5)

    def test_trace_reports_every_step(self):
        steps = []
        sweep_extract(word_nodes("abc", 0, 0, 0, BLACK), SweepConfig(k=12), trace=steps.append)
        self.assertEqual([s["visited"] for s in steps], [[0], [1], [2]])
        self.assertEqual(steps[-1]["open_chains"], [[0, 1, 2]])

    def test_invalid_config(self):
        with self.assertRaises(ValidationError):
            SweepConfig(k=0.5)
        with self.assertRaises(ValidationError):
            SweepConfig(orientation="diagonal")
        with self.assertRaises(ValidationError):
            SweepConfig(scale_mode="global")
        with self.assertRaises(ValidationError):
            SweepConfig(hue_tolerance=-1)
        with self.assertRaises(ValidationError):
            SweepConfig(gap_ratio=-0.1)
        with self.assertRaises(ValidationError):
            SweepConfig(profiles=((0.0, 0.5),))

    def _random_layout(self, rng):
        nodes = []
        palette = [RED, BLUE, BLACK, (27, 158, 119)]
        y = 20
        for row in range(int(rng.integers(1, 5))):
            x = int(rng.integers(0, 30))
            for _ in range(int(rng.integers(1, 4))):
                length = int(rng.integers(1, 7))
                color = palette[int(rng.integers(0, len(palette)))]
                nodes += word_nodes("w" * length, len(nodes), x, y, color)
                x += length * 12 + int(rng.integers(15, 40))
            y += int(rng.integers(25, 60))
        return nodes

    def test_partition_translation_and_determinism(self):
        rng = np.random.default_rng(99)
        for case in range(25):
            nodes = self._random_layout(rng)
            dx, dy = (int(v) for v in rng.integers(-500, 500, size=2))
            moved = [node(n.id, n.x + dx, n.y + dy, n.width, n.height, n.color, n.letter) for n in nodes]
            for orientation in (HORIZONTAL, VERTICAL):
                with self.subTest(case=case, orientation=orientation):
                    config = SweepConfig(orientation=orientation)
                    clusters = sweep_extract(nodes, config)
                    assert_partition(clusters, nodes)
                    self.assertEqual(cluster_ids(clusters), cluster_ids(sweep_extract(moved, config)))
                    self.assertEqual(
                        [c.node_ids for c in clusters],
                        [c.node_ids for c in sweep_extract(nodes, config)],
                    )


class SweepGateTests(SimpleTestCase):
    """Hue, box-gap and baseline checks on top of the edge weight."""

    def test_hue_splits_same_color_neighbours(self):
        nodes = word_nodes("abcd", 0, 20, 20, BLACK)
        hues = [(255.0, 0.0, 0.0)] * 2 + [(0.0, 255.0, 0.0)] * 2
        tinted = [replace(n, hue=hue) for n, hue in zip(nodes, hues)]
        self.assertEqual(cluster_ids(sweep_extract(tinted, SweepConfig())), [(0, 1, 2, 3)])
        clusters = sweep_extract(tinted, SweepConfig(hue_tolerance=40.0))
        self.assertEqual(cluster_ids(clusters), [(0, 1), (2, 3)])

    def test_close_hues_still_link(self):
        nodes = word_nodes("ab", 0, 20, 20, BLACK)
        tinted = [replace(nodes[0], hue=(255.0, 10.0, 0.0)), replace(nodes[1], hue=(255.0, 30.0, 0.0))]
        self.assertEqual(cluster_ids(sweep_extract(tinted, SweepConfig(hue_tolerance=40.0))), [(0, 1)])

    def test_wide_gap_splits_same_color_words(self):
        nodes = word_nodes("ab", 0, 20, 20, BLACK) + word_nodes("cd", 2, 52, 20, BLACK)
        self.assertEqual(cluster_ids(sweep_extract(nodes, SweepConfig())), [(0, 1, 2, 3)])
        clusters = sweep_extract(nodes, SweepConfig(gap_ratio=0.3))
        self.assertEqual(cluster_ids(clusters), [(0, 1), (2, 3)])

    def test_letter_gaps_pass_the_gap_check(self):
        nodes = word_nodes("word", 0, 20, 20, BLACK)
        self.assertEqual(cluster_ids(sweep_extract(nodes, SweepConfig(gap_ratio=0.3))), [(0, 1, 2, 3)])

    def _pair(self, offset):
        return [
            node(0, 30, 50, width=20, height=30, letter="x"),
            node(1, 54, 50 + offset, width=20, height=30, letter="x"),
        ]

    def test_letter_off_the_baseline_is_rejected(self):
        profiles = ((0.5, 0.0), (0.7, 0.0))
        self.assertEqual(cluster_ids(sweep_extract(self._pair(8), SweepConfig())), [(0, 1)])
        self.assertEqual(cluster_ids(sweep_extract(self._pair(8), SweepConfig(profiles=profiles))), [(0,), (1,)])
        self.assertEqual(cluster_ids(sweep_extract(self._pair(0), SweepConfig(profiles=profiles))), [(0, 1)])

    def test_descender_shares_the_baseline(self):
        # "x" then "p": the descender reaches below the shared baseline
        profiles = ((0.5, 0.0), (0.5, -0.2))
        nodes = [
            node(0, 30, 50, width=20, height=20, letter="x"),
            node(1, 54, 54, width=20, height=28, letter="p"),
        ]
        self.assertEqual(cluster_ids(sweep_extract(nodes, SweepConfig(profiles=profiles))), [(0, 1)])


class ResolveOrientationsTests(SimpleTestCase):
    def test_no_vertical_candidates(self):
        nodes = word_nodes("cat", 0, 10, 10, BLACK)
        horizontal = [WordCluster(tuple(nodes[:2])), WordCluster((nodes[2],))]
        self.assertEqual(cluster_ids(resolve_orientations(horizontal, [])), [(0, 1), (2,)])

    def test_longest_chain_wins(self):
        nodes = word_nodes("hello", 0, 10, 10, BLACK)
        horizontal = [WordCluster(tuple(nodes))]
        vertical = [WordCluster((n,), VERTICAL) for n in nodes]
        [word] = resolve_orientations(horizontal, vertical)
        self.assertEqual(word.orientation, HORIZONTAL)
        self.assertEqual(word.node_ids, (0, 1, 2, 3, 4))

    def test_equal_length_prefers_horizontal(self):
        a, b = node(0, 0, 0), node(1, 12, 0)
        [word] = resolve_orientations([WordCluster((a, b))], [WordCluster((b, a), VERTICAL)])
        self.assertEqual(word.orientation, HORIZONTAL)

    def test_disjoint_words_are_both_kept(self):
        flat = word_nodes("abc", 0, 10, 10, RED)
        upright = [node(3 + i, 200, 100 - 12 * i, 14, 10, BLUE) for i in range(3)]
        words = resolve_orientations(
            [WordCluster(tuple(flat))] + [WordCluster((n,)) for n in upright],
            [WordCluster(tuple(upright), VERTICAL)] + [WordCluster((n,), VERTICAL) for n in flat],
        )
        self.assertEqual(
            sorted((c.orientation, c.node_ids) for c in words),
            [(HORIZONTAL, (0, 1, 2)), (VERTICAL, (3, 4, 5))],
        )

    def test_leftovers_become_singletons(self):
        nodes = word_nodes("abc", 0, 10, 10, BLACK)
        horizontal = [WordCluster(tuple(nodes[:2])), WordCluster((nodes[2],))]
        vertical = [WordCluster((nodes[1], nodes[2]), VERTICAL), WordCluster((nodes[0],), VERTICAL)]
        words = resolve_orientations(horizontal, vertical)
        assert_partition(words, nodes)
        self.assertEqual(cluster_ids(words), [(0, 1), (2,)])


class ChainToWordTests(SimpleTestCase):
    def test_horizontal_order(self):
        nodes = [node(0, 30, 5, letter="t"), node(1, 10, 5, letter="c"), node(2, 20, 5, letter="a")]
        self.assertEqual(chain_to_word(WordCluster(tuple(nodes))), "cat")

    def test_single_letter(self):
        self.assertEqual(chain_to_word(WordCluster((node(0, 0, 0, letter="z"),))), "z")

    def test_unknown_letters(self):
        nodes = (node(0, 0, 0, letter="o"), node(1, 12, 0, letter=None), node(2, 24, 0, letter="k"))
        self.assertEqual(chain_to_word(WordCluster(nodes)), "o?k")

    def test_vertical_uses_rotated_letters(self):
        nodes = (node(0, 0, 50, letter="x", rotated_letter="o"), node(1, 0, 30, letter="y", rotated_letter="n"))
        self.assertEqual(chain_to_word(WordCluster(nodes, VERTICAL)), "on")


class ExtractWordsTests(SimpleTestCase):
    def test_mixed_orientations(self):
        flat = word_nodes("flat", 0, 20, 20, RED)
        upright = [
            node(4 + i, 200, 150 - 12 * i, 14, 10, BLUE, letter="?", rotated_letter=ch)
            for i, ch in enumerate("tall")
        ]
        words = extract_words(flat + upright, SweepConfig())
        self.assertEqual(sorted(chain_to_word(w) for w in words), ["flat", "tall"])
