"""
Word assembly: letter-similarity weights, bipartite matching and the
sweep-line grouping of classified glyphs into words.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from itertools import chain
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from django.core.exceptions import ValidationError

from WordCloudDJ.exceptions import CloudDecodeError
from glyph.services import UNKNOWN_LETTER, Classification
from raster.services import BBox, Color, ComponentRegion, chroma

logger = logging.getLogger(__name__)

HORIZONTAL = "horizontal"
VERTICAL = "vertical"
ORIENTATIONS = (HORIZONTAL, VERTICAL)
SCALE_MODES = ("chain", "image")

DEFAULT_TAU = 3.0
DEFAULT_COLOR_SCALE = 60.0

# Cost standing in for "no edge" inside the assignment matrix.
NO_EDGE = 1e6

# Pixels of slack on the box-gap and baseline checks, which also allow
# BASELINE_SLACK_EM of the font size on the latter.
GAP_SLACK = 2.0
BASELINE_SLACK = 2.0
BASELINE_SLACK_EM = 0.05

Trace = Callable[[dict], None]


@dataclass(frozen=True)
class GlyphNode:
    id: int
    letter: Optional[str]
    confidence: float
    x: float
    y: float
    width: int
    height: int
    area: int
    color: Color
    rotated_letter: Optional[str] = None
    rotated_confidence: float = 0.0
    bbox: BBox = (0, 0, 0, 0)
    hue: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"Node {self.id} has an empty box {self.width}x{self.height}", code="invalid")
        if self.area != self.width * self.height:
            raise ValidationError(f"Node {self.id} area {self.area} != {self.width}x{self.height}", code="invalid")

    def reading(self, orientation: str) -> Tuple[Optional[str], float]:
        if orientation == VERTICAL:
            return self.rotated_letter, self.rotated_confidence
        return self.letter, self.confidence

    def along(self, orientation: str) -> float:
        """Position along the sweep direction."""
        return self.x if orientation == HORIZONTAL else -self.y

    def across(self, orientation: str) -> float:
        return self.y if orientation == HORIZONTAL else self.x

    def extent_along(self, orientation: str) -> int:
        return self.width if orientation == HORIZONTAL else self.height

    def extent_across(self, orientation: str) -> int:
        return self.height if orientation == HORIZONTAL else self.width

    def span_along(self, orientation: str) -> Tuple[int, int]:
        """Box [start, end) in sweep coordinates."""
        x, y, w, h = self.bbox
        return (x, x + w) if orientation == HORIZONTAL else (-(y + h), -y)

    def span_across(self, orientation: str) -> Tuple[int, int]:
        """Box [start, end) across the sweep, growing towards the glyph's own bottom."""
        x, y, w, h = self.bbox
        return (y, y + h) if orientation == HORIZONTAL else (x, x + w)


@dataclass(frozen=True)
class WeightParams:
    x_scale: float
    y_scale: float
    color_scale: float
    size_scale: float

    def __post_init__(self):
        for name in ("x_scale", "y_scale", "color_scale", "size_scale"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0, got {getattr(self, name)}", code="config")


@dataclass(frozen=True)
class SweepConfig:
    """``k`` None means a quarter of the median glyph extent along the sweep.

    The optional checks narrow the candidate window further. With
    ``hue_tolerance`` set, nodes of different hue never link. With
    ``gap_ratio`` set, the empty run between the head's box and the node's
    box may not exceed ``gap_ratio`` times the chain height plus
    GAP_SLACK. A non-empty ``profiles`` (glyph (top, bottom) extents in
    ems) requires every node to sit on one baseline at one font size with
    the rest of its chain.
    """
    k: Optional[float] = None
    tau: float = DEFAULT_TAU
    orientation: str = HORIZONTAL
    scale_mode: str = "chain"
    color_scale: float = DEFAULT_COLOR_SCALE
    hue_tolerance: Optional[float] = None
    gap_ratio: Optional[float] = None
    profiles: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.hue_tolerance is not None and self.hue_tolerance < 0:
            raise ValidationError("hue_tolerance must be >= 0", code="config")
        if self.gap_ratio is not None and self.gap_ratio < 0:
            raise ValidationError("gap_ratio must be >= 0", code="config")
        if any(top <= bottom for top, bottom in self.profiles):
            raise ValidationError("Every glyph profile needs top > bottom", code="config")
        if self.k is not None and self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}", code="config")
        if self.tau < 0:
            raise ValidationError(f"tau must be >= 0, got {self.tau}", code="config")
        if self.orientation not in ORIENTATIONS:
            raise ValidationError(f"Unknown orientation '{self.orientation}'", code="config")
        if self.scale_mode not in SCALE_MODES:
            raise ValidationError(f"Unknown scale_mode '{self.scale_mode}'", code="config")
        if self.color_scale <= 0:
            raise ValidationError("color_scale must be > 0", code="config")


@dataclass(frozen=True)
class WordCluster:
    """Nodes in reading order: ascending x, or bottom-to-top for vertical words."""
    nodes: Tuple[GlyphNode, ...]
    orientation: str = HORIZONTAL

    def __post_init__(self):
        if not self.nodes:
            raise ValidationError("A word cluster needs at least one node", code="empty")

    def __len__(self):
        return len(self.nodes)

    @property
    def node_ids(self) -> Tuple[int, ...]:
        return tuple(node.id for node in self.nodes)

    @property
    def bbox(self) -> BBox:
        min_x = min(n.bbox[0] for n in self.nodes)
        min_y = min(n.bbox[1] for n in self.nodes)
        max_x = max(n.bbox[0] + n.bbox[2] for n in self.nodes)
        max_y = max(n.bbox[1] + n.bbox[3] for n in self.nodes)
        return min_x, min_y, max_x - min_x, max_y - min_y

    @property
    def mean_confidence(self) -> float:
        return sum(n.reading(self.orientation)[1] for n in self.nodes) / len(self.nodes)


def build_nodes(
    components: Sequence[ComponentRegion],
    classifications: Sequence[Classification],
    confidence_floor: float = 0.0,
    background: Optional[Color] = None,
) -> List[GlyphNode]:
    """One node per component, ids dense in (min_y, min_x) order.

    Matches scoring below ``confidence_floor`` leave the letter unknown.
    A known ``background`` gives every node the hue of its mean color.
    """
    if len(components) != len(classifications):
        raise ValidationError(
            f"{len(components)} components but {len(classifications)} classifications",
            code="length_mismatch",
        )
    pairs = sorted(zip(components, classifications), key=lambda pair: pair[0].scan_key)
    nodes = []
    for node_id, (region, match) in enumerate(pairs):
        upright_ok = match.confidence >= confidence_floor
        rotated_ok = match.rotated_confidence >= confidence_floor
        nodes.append(GlyphNode(
            id=node_id,
            letter=match.letter if upright_ok else None,
            confidence=match.confidence,
            rotated_letter=match.rotated_letter if rotated_ok else None,
            rotated_confidence=match.rotated_confidence,
            x=region.min_x + region.width / 2,
            y=region.min_y + region.height / 2,
            width=region.width,
            height=region.height,
            area=region.width * region.height,
            color=region.mean_color,
            bbox=region.bbox,
            hue=chroma(region.mean_color, background) if background is not None else None,
        ))
    unknown = sum(1 for n in nodes if n.letter is None)
    if unknown:
        logger.warning(f"{unknown} of {len(nodes)} glyphs fell below confidence {confidence_floor}")
    return nodes


def edge_weight(a: GlyphNode, b: GlyphNode, p: WeightParams) -> float:
    return (
        abs(a.x - b.x) / p.x_scale
        + abs(a.y - b.y) / p.y_scale
        + math.dist(a.color, b.color) / p.color_scale
        + abs(a.height - b.height) / p.size_scale
        + abs(a.width - b.width) / p.size_scale
    )


def _assignment_total(cost: np.ndarray, rows: List[int], cols: List[int]) -> Tuple[float, int]:
    if not rows or not cols:
        return 0.0, 0
    sub = cost[np.ix_(rows, cols)]
    r, c = linear_sum_assignment(sub)
    return float(sub[r, c].sum()), len(r)


def match_bipartite(
    left: Sequence[int],
    right: Sequence[int],
    weight: Callable[[int, int], float],
) -> Set[Tuple[int, int]]:
    """Minimum-total-weight matching of size min(|left|, |right|).

    Among optimal matchings the lexicographically smallest sorted pair list
    wins: pairs are fixed one left id at a time, each time taking the
    smallest right id that still admits an optimal completion.
    """
    left, right = sorted(left), sorted(right)
    if not left or not right:
        return set()
    cost = np.array([[weight(l, r) for r in right] for l in left], dtype=float)
    size = min(len(left), len(right))
    best, _ = _assignment_total(cost, list(range(len(left))), list(range(len(right))))
    tolerance = 1e-9 + 1e-12 * abs(best)

    fixed: List[Tuple[int, int]] = []
    fixed_cost = 0.0
    skipped: Set[int] = set()
    for i in range(len(left)):
        if len(fixed) == size:
            break
        used = {j for _, j in fixed}
        for j in range(len(right)):
            if j in used:
                continue
            rows = [r for r in range(i + 1, len(left)) if r not in skipped]
            cols = [c for c in range(len(right)) if c not in used and c != j]
            rest, matched = _assignment_total(cost, rows, cols)
            if matched != size - len(fixed) - 1:
                continue
            if fixed_cost + cost[i, j] + rest <= best + tolerance:
                fixed.append((i, j))
                fixed_cost += cost[i, j]
                break
        else:
            skipped.add(i)
    return {(left[i], right[j]) for i, j in fixed}


def median_extents(nodes: Sequence[GlyphNode], orientation: str) -> Tuple[float, float]:
    """Median glyph extent (along, across) the sweep direction."""
    along = float(np.median([n.extent_along(orientation) for n in nodes]))
    across = float(np.median([n.extent_across(orientation) for n in nodes]))
    return along, across


def _frame_params(along_scale: float, across_scale: float, size_scale: float,
                  color_scale: float, orientation: str) -> WeightParams:
    if orientation == HORIZONTAL:
        return WeightParams(along_scale, across_scale, color_scale, size_scale)
    return WeightParams(across_scale, along_scale, color_scale, size_scale)


def default_weight_params(nodes: Sequence[GlyphNode], orientation: str = HORIZONTAL,
                          color_scale: float = DEFAULT_COLOR_SCALE) -> WeightParams:
    """Image-wide scales from median glyph extents."""
    along, across = median_extents(nodes, orientation)
    return _frame_params(2 * along, 0.5 * across, across, color_scale, orientation)


def _baseline_hypotheses(node: GlyphNode, orientation: str, profiles: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(font size, baseline) pairs that would draw ``node`` as each profile."""
    top, bottom = node.span_across(orientation)
    sizes = (bottom - top) / (profiles[:, 0] - profiles[:, 1])
    return sizes, bottom + profiles[:, 1] * sizes


def _on_baseline(sizes: np.ndarray, baselines: np.ndarray, node: GlyphNode, orientation: str,
                 profiles: np.ndarray) -> np.ndarray:
    """Per hypothesis, whether some profile puts ``node`` where its box is."""
    top, bottom = node.span_across(orientation)
    slack = (BASELINE_SLACK + BASELINE_SLACK_EM * sizes)[:, None]
    top_at = baselines[:, None] - profiles[None, :, 0] * sizes[:, None]
    bottom_at = baselines[:, None] - profiles[None, :, 1] * sizes[:, None]
    return ((np.abs(top_at - top) <= slack) & (np.abs(bottom_at - bottom) <= slack)).any(axis=1)


@dataclass
class _Chain:
    nodes: List[GlyphNode] = field(default_factory=list)
    open: bool = True
    # surviving (font size, baseline) hypotheses when baselines are checked
    sizes: Optional[np.ndarray] = None
    baselines: Optional[np.ndarray] = None

    @property
    def head(self) -> GlyphNode:
        return self.nodes[-1]

    @classmethod
    def start(cls, node: GlyphNode, orientation: str, profiles: np.ndarray) -> "_Chain":
        chain_ = cls(nodes=[node])
        if len(profiles):
            chain_.sizes, chain_.baselines = _baseline_hypotheses(node, orientation, profiles)
        return chain_

    def height(self, orientation: str) -> int:
        return max(n.extent_across(orientation) for n in self.nodes)

    def admits(self, node: GlyphNode, config: SweepConfig, profiles: np.ndarray) -> bool:
        """Hue, box-gap and baseline checks of ``config`` for linking ``node`` to the head."""
        orientation = config.orientation
        head = self.head
        if config.hue_tolerance is not None and node.hue is not None and head.hue is not None:
            if max(abs(p - q) for p, q in zip(node.hue, head.hue)) > config.hue_tolerance:
                return False
        if config.gap_ratio is not None:
            gap = node.span_along(orientation)[0] - head.span_along(orientation)[1]
            if gap > config.gap_ratio * self.height(orientation) + GAP_SLACK:
                return False
        if self.sizes is not None:
            return bool(_on_baseline(self.sizes, self.baselines, node, orientation, profiles).any())
        return True

    def extend(self, node: GlyphNode, orientation: str, profiles: np.ndarray) -> None:
        self.nodes.append(node)
        if self.sizes is not None:
            keep = _on_baseline(self.sizes, self.baselines, node, orientation, profiles)
            self.sizes, self.baselines = self.sizes[keep], self.baselines[keep]


class _Scales:
    """Weight parameters and candidate window for a chain head."""

    def __init__(self, nodes: Sequence[GlyphNode], config: SweepConfig, params: Optional[WeightParams]):
        self.orientation = config.orientation
        self.mode = config.scale_mode
        self.color_scale = params.color_scale if params is not None else config.color_scale
        along, across = median_extents(nodes, self.orientation)
        if params is not None:
            # x_scale of caller params is the along-sweep scale
            self.image_params = _frame_params(
                params.x_scale, params.y_scale, params.size_scale, params.color_scale, self.orientation
            )
        else:
            self.image_params = _frame_params(2 * along, 0.5 * across, across, self.color_scale, self.orientation)
        self.image_window = (3 * along, 1.5 * across)

    def for_chain(self, chain_: _Chain) -> Tuple[WeightParams, Tuple[float, float]]:
        if self.mode == "image":
            return self.image_params, self.image_window
        height = chain_.height(self.orientation)
        params = _frame_params(1.5 * height, 0.5 * height, height, self.color_scale, self.orientation)
        return params, (2.25 * height, 0.75 * height)


def sweep_extract(
    nodes: Sequence[GlyphNode],
    config: SweepConfig = SweepConfig(),
    params: Optional[WeightParams] = None,
    trace: Optional[Trace] = None,
) -> List[WordCluster]:
    """Group nodes into words by sweeping a line across the image.

    The line advances ``k`` pixels per step (left to right, or bottom to top
    for vertical words). Nodes the line passes are matched against the
    heads of open chains; an edge is usable when the head lies strictly
    behind the node, inside the candidate window, passes the optional hue,
    box-gap and baseline checks and weighs at most ``tau``. Matching repeats inside a step until nothing usable is left;
    the earliest node still unmatched then opens a chain of its own.
    """
    if not nodes:
        return []
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise ValidationError("Node ids must be unique", code="invalid")

    orientation = config.orientation
    scales = _Scales(nodes, config, params)
    along_median, _ = median_extents(nodes, orientation)
    k = config.k if config.k is not None else max(1.0, 0.25 * along_median)
    profiles = np.asarray(config.profiles, dtype=float).reshape(-1, 2)

    start = min(n.along(orientation) for n in nodes)
    steps: Dict[int, List[GlyphNode]] = {}
    for node in nodes:
        step = max(0, math.ceil((node.along(orientation) - start) / k - 1e-9))
        steps.setdefault(step, []).append(node)

    chains: List[_Chain] = []
    for step in sorted(steps):
        line = start + step * k
        batch = sorted(steps[step], key=lambda n: (n.along(orientation), n.across(orientation), n.id))
        pending = {n.id: n for n in batch}
        matched, opened = [], []

        for chain_ in chains:
            _, (window_along, _) = scales.for_chain(chain_)
            if chain_.open and chain_.head.along(orientation) + window_along < line - k:
                chain_.open = False

        while pending:
            heads = {c.head.id: c for c in chains if c.open}
            costs = {}
            for node in pending.values():
                for head_id, chain_ in heads.items():
                    head = chain_.head
                    chain_params, (window_along, window_across) = scales.for_chain(chain_)
                    gap = node.along(orientation) - head.along(orientation)
                    if not 0 < gap <= window_along:
                        continue
                    if abs(node.across(orientation) - head.across(orientation)) > window_across:
                        continue
                    if not chain_.admits(node, config, profiles):
                        continue
                    w = edge_weight(node, head, chain_params)
                    if w <= config.tau:
                        costs[(node.id, head_id)] = w

            if not costs:
                first = next(n for n in batch if n.id in pending)
                chains.append(_Chain.start(pending.pop(first.id), orientation, profiles))
                opened.append(first.id)
                continue

            candidates = {pair[0] for pair in costs}
            pairs = match_bipartite(
                candidates,
                {pair[1] for pair in costs},
                lambda a, b: costs.get((a, b), NO_EDGE),
            )
            for node_id, head_id in sorted(pairs):
                if (node_id, head_id) in costs:
                    heads[head_id].extend(pending.pop(node_id), orientation, profiles)
                    matched.append([head_id, node_id])

        if trace is not None:
            trace({
                "orientation": orientation,
                "step": step,
                "line": line,
                "visited": [n.id for n in batch],
                "matched": matched,
                "opened": opened,
                "open_chains": [[n.id for n in c.nodes] for c in chains if c.open],
            })

    clusters = [WordCluster(nodes=tuple(c.nodes), orientation=orientation) for c in chains]
    logger.debug(f"{orientation} sweep: {len(nodes)} nodes -> {len(clusters)} chains (k={k:.2f})")
    return clusters


def assert_partition(clusters: Iterable[WordCluster], nodes: Sequence[GlyphNode]) -> None:
    seen = list(chain.from_iterable(c.node_ids for c in clusters))
    if len(seen) != len(set(seen)) or set(seen) != {n.id for n in nodes}:
        raise CloudDecodeError("Word clusters do not partition the glyph nodes")


def resolve_orientations(horizontal: Sequence[WordCluster], vertical: Sequence[WordCluster]) -> List[WordCluster]:
    """Keep the longest clusters of both passes without sharing a node."""
    candidates = [(c, 0) for c in horizontal] + [(c, 1) for c in vertical]
    candidates.sort(key=lambda item: (-len(item[0]), item[1], min(item[0].node_ids)))

    kept: List[WordCluster] = []
    used: Set[int] = set()
    for cluster, _ in candidates:
        if used.isdisjoint(cluster.node_ids):
            kept.append(cluster)
            used.update(cluster.node_ids)

    leftovers = {n.id: n for c in chain(horizontal, vertical) for n in c.nodes if n.id not in used}
    kept.extend(WordCluster(nodes=(leftovers[i],), orientation=HORIZONTAL) for i in sorted(leftovers))
    kept.sort(key=lambda c: min(c.node_ids))
    return kept


def chain_to_word(cluster: WordCluster) -> str:
    if cluster.orientation == VERTICAL:
        ordered = sorted(cluster.nodes, key=lambda n: -n.y)
    else:
        ordered = sorted(cluster.nodes, key=lambda n: n.x)
    letters = (n.reading(cluster.orientation)[0] for n in ordered)
    return "".join(letter if letter is not None else UNKNOWN_LETTER for letter in letters)


def extract_words(
    nodes: Sequence[GlyphNode],
    config: SweepConfig = SweepConfig(),
    params: Optional[WeightParams] = None,
    trace: Optional[Trace] = None,
) -> List[WordCluster]:
    """Both sweeps followed by orientation resolution."""
    horizontal = sweep_extract(nodes, replace(config, orientation=HORIZONTAL), params, trace)
    vertical = sweep_extract(nodes, replace(config, orientation=VERTICAL), params, trace)
    words = resolve_orientations(horizontal, vertical)
    assert_partition(words, nodes)
    logger.info(f"Assembled {len(words)} words from {len(nodes)} glyphs")
    return words
