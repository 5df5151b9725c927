"""
Synthetic word clouds with known ground truth, and scoring of decoded
clouds against them.
"""
import json
import logging
import math
import time
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import Levenshtein
import numpy as np
from django.core.exceptions import ValidationError

from WordCloudDJ.exceptions import LayoutError
from WordCloudDJ.config import PipelineConfig
from glyph.services import DEFAULT_ALPHABET, DEFAULT_FONT, render_text
from raster.services import WHITE, BBox, Color, RasterImage, color_distance, save_png
from sizing.services import CloudData, DecodedWord, decode_cloud
from wordgraph.services import HORIZONTAL, VERTICAL

logger = logging.getLogger(__name__)

MIN_FONT_SIZE = 8
MAX_FONT_SIZE = 128

# ColorBrewer Dark2
DARK2 = ("#1B9E77", "#D95F02", "#7570B3", "#E7298A", "#66A61E", "#E6AB02", "#A6761D", "#666666")

# Lowercase words for random corpora.
VOCABULARY = (
    "data", "cloud", "word", "chart", "graph", "pixel", "letter", "font", "color", "size",
    "weight", "value", "table", "image", "vision", "layout", "spiral", "sweep", "match", "edge",
    "node", "cluster", "glyph", "atlas", "render", "decode", "encode", "design", "visual", "text",
    "python", "model", "error", "metric", "sample", "signal", "vector", "matrix", "linear", "random",
    "report", "poster", "study", "result", "method", "system", "network", "search", "query", "index",
    "science", "number", "summer", "winter", "garden", "forest", "river", "mountain", "ocean", "planet",
    "market", "budget", "energy", "travel", "health", "music", "camera", "window", "bridge", "castle",
)


def hex_to_rgb(hex_color: str) -> Color:
    h = hex_color.lstrip("#")
    return int(h[0:2], 16), int(h[2:4], 16), int(h[4:6], 16)


@dataclass(frozen=True)
class LayoutConfig:
    width: int = 800
    height: int = 600
    background: Color = WHITE
    palette: Tuple[Color, ...] = tuple(hex_to_rgb(c) for c in DARK2)
    min_contrast: int = 96
    p_vertical: float = 0.2
    padding: int = 6
    spiral_step: int = 4
    font: str = DEFAULT_FONT

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError("Cloud dimensions must be positive", code="config")
        if not 0 <= self.p_vertical <= 1:
            raise ValidationError("p_vertical must be in [0, 1]", code="config")
        if self.padding < 2:
            raise ValidationError("padding must be at least 2 pixels", code="config")
        if self.spiral_step < 1:
            raise ValidationError("spiral_step must be >= 1", code="config")

    def usable_colors(self) -> List[Color]:
        colors = [c for c in self.palette if color_distance(c, self.background) >= self.min_contrast]
        if not colors:
            raise ValidationError(
                f"No palette color has contrast >= {self.min_contrast} against {self.background}",
                code="config",
            )
        return colors


@dataclass(frozen=True)
class GroundTruthEntry:
    text: str
    font_size: int
    bbox: BBox
    orientation: str
    color: Color
    letters: Tuple[BBox, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "text": self.text,
            "font_size": self.font_size,
            "bbox": list(self.bbox),
            "orientation": self.orientation,
            "color": list(self.color),
            "letters": [list(box) for box in self.letters],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GroundTruthEntry":
        try:
            return cls(
                text=str(data["text"]),
                font_size=int(data["font_size"]),
                bbox=tuple(int(v) for v in data["bbox"]),
                orientation=data.get("orientation", HORIZONTAL),
                color=tuple(int(v) for v in data.get("color", (0, 0, 0))),
                letters=tuple(tuple(int(v) for v in box) for box in data.get("letters", [])),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed ground-truth entry {data!r}: {e}", code="invalid") from e


@dataclass(frozen=True)
class GroundTruth:
    entries: Tuple[GroundTruthEntry, ...]
    background: Color = WHITE
    width: int = 0
    height: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "background": list(self.background),
            "width": self.width,
            "height": self.height,
            "entries": [e.to_dict() for e in self.entries],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GroundTruth":
        if not isinstance(data, dict) or not isinstance(data.get("entries"), list):
            raise ValidationError("Ground truth must be an object with an 'entries' list", code="invalid")
        return cls(
            entries=tuple(GroundTruthEntry.from_dict(e) for e in data["entries"]),
            background=tuple(int(v) for v in data.get("background", WHITE)),
            width=int(data.get("width", 0)),
            height=int(data.get("height", 0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ValidationError(f"Ground truth is not valid JSON: {e}", code="invalid") from e


def _validate_entries(entries: Sequence[Tuple[str, float]], alphabet: str) -> List[Tuple[str, int]]:
    cleaned = []
    for text, size in entries:
        if not text:
            raise ValidationError("Cloud words must not be empty", code="invalid")
        missing = sorted(set(text) - set(alphabet))
        if missing:
            raise ValidationError(f"Word '{text}' uses characters outside the alphabet: {missing}", code="invalid")
        if not MIN_FONT_SIZE <= size <= MAX_FONT_SIZE:
            raise ValidationError(
                f"Font size {size} of '{text}' outside [{MIN_FONT_SIZE}, {MAX_FONT_SIZE}]", code="invalid"
            )
        cleaned.append((text, int(round(size))))
    return cleaned


def _rectangular_spiral(step: int, limit: int) -> Iterator[Tuple[int, int]]:
    """Offsets ring by ring around the origin, each ring walked clockwise from its top-left corner."""
    yield 0, 0
    for ring in range(1, limit + 1):
        r = ring * step
        for dx in range(-r, r, step):
            yield dx, -r
        for dy in range(-r, r, step):
            yield r, dy
        for dx in range(r, -r, -step):
            yield dx, r
        for dy in range(r, -r, -step):
            yield -r, dy


def _is_overlap(box: BBox, placed: Sequence[BBox], padding: int) -> bool:
    x, y, w, h = box
    for px, py, pw, ph in placed:
        if x < px + pw + padding and px < x + w + padding and y < py + ph + padding and py < y + h + padding:
            return True
    return False


def _rotate_letter_box(box: BBox, word_width: int) -> BBox:
    # a quarter turn counter-clockwise maps (x, y) to (y, W - 1 - x)
    x, y, w, h = box
    return y, word_width - (x + w), h, w


def synthesize_cloud(
    entries: Sequence[Tuple[str, float]],
    layout: LayoutConfig = LayoutConfig(),
    seed: int = 0,
    alphabet: str = DEFAULT_ALPHABET,
) -> Tuple[RasterImage, GroundTruth]:
    """Render ``entries`` largest first, each at the first free spot of a spiral from the center."""
    words = _validate_entries(entries, alphabet)
    rng = np.random.default_rng(seed)
    colors = layout.usable_colors()

    canvas = np.empty((layout.height, layout.width, 3), dtype=np.float64)
    canvas[...] = layout.background

    order = sorted(range(len(words)), key=lambda i: (-words[i][1], i))
    placed: List[BBox] = []
    results: Dict[int, GroundTruthEntry] = {}
    limit = max(layout.width, layout.height) // layout.spiral_step + 1

    for index in order:
        text, size = words[index]
        vertical = bool(rng.random() < layout.p_vertical)
        color = colors[int(rng.integers(len(colors)))]

        rendered = render_text(layout.font, text, size)
        coverage, letters = rendered.coverage, rendered.letter_boxes
        if vertical:
            letters = [_rotate_letter_box(box, rendered.width) for box in letters]
            coverage = np.rot90(coverage)
        h, w = coverage.shape

        origin_x, origin_y = (layout.width - w) // 2, (layout.height - h) // 2
        position = None
        for dx, dy in _rectangular_spiral(layout.spiral_step, limit):
            x, y = origin_x + dx, origin_y + dy
            if x < 0 or y < 0 or x + w > layout.width or y + h > layout.height:
                continue
            if not _is_overlap((x, y, w, h), placed, layout.padding):
                position = (x, y)
                break
        if position is None:
            raise LayoutError(text)

        x, y = position
        alpha = (coverage.astype(np.float64) / 255.0)[..., None]
        region = canvas[y:y + h, x:x + w]
        canvas[y:y + h, x:x + w] = region + (np.asarray(color, dtype=np.float64) - region) * alpha
        placed.append((x, y, w, h))
        results[index] = GroundTruthEntry(
            text=text,
            font_size=size,
            bbox=(x, y, w, h),
            orientation=VERTICAL if vertical else HORIZONTAL,
            color=tuple(color),
            letters=tuple((x + lx, y + ly, lw, lh) for lx, ly, lw, lh in letters),
        )

    image = RasterImage.from_array(np.rint(canvas).astype(np.uint8))
    truth = GroundTruth(
        entries=tuple(results[i] for i in range(len(words))),
        background=tuple(layout.background),
        width=layout.width,
        height=layout.height,
    )
    logger.info(f"Synthesized {len(words)} words on {layout.width}x{layout.height} (seed {seed})")
    return image, truth


def save_cloud(image: RasterImage, truth: GroundTruth, prefix: Union[str, Path]) -> Tuple[Path, Path]:
    """Write ``<prefix>.png`` and ``<prefix>.json``."""
    prefix = Path(prefix)
    png_path, json_path = prefix.with_name(prefix.name + ".png"), prefix.with_name(prefix.name + ".json")
    save_png(image, png_path)
    json_path.write_text(truth.to_json() + "\n", encoding="utf-8")
    return png_path, json_path


@dataclass(frozen=True)
class MatchedPair:
    predicted: str
    truth: str
    distance: int
    estimate: float
    truth_size: float

    @property
    def error(self) -> float:
        return self.estimate - self.truth_size

    def to_dict(self) -> Dict[str, Any]:
        return {
            "predicted": self.predicted,
            "truth": self.truth,
            "edit_distance": self.distance,
            "estimate": round(self.estimate, 4),
            "truth_size": self.truth_size,
            "error": round(self.error, 4),
        }


def match_words(predicted: Sequence[DecodedWord], truth: GroundTruth) -> List[Tuple[int, int, MatchedPair]]:
    """Greedy cheapest-first pairing by (edit distance, size gap).

    Distances are case-insensitive Levenshtein; pairs whose distance exceeds
    half the longer word are never formed. Returns (predicted index,
    ground-truth index, pair) triples.
    """
    candidates = []
    for i, word in enumerate(predicted):
        for j, entry in enumerate(truth.entries):
            distance = Levenshtein.distance(word.text.lower(), entry.text.lower())
            if distance / max(len(word.text), len(entry.text)) > 0.5:
                continue
            candidates.append((distance, abs(word.weight - entry.font_size), i, j))
    candidates.sort()

    used_pred, used_truth = set(), set()
    matches = []
    for distance, _, i, j in candidates:
        if i in used_pred or j in used_truth:
            continue
        used_pred.add(i)
        used_truth.add(j)
        entry = truth.entries[j]
        matches.append((i, j, MatchedPair(
            predicted=predicted[i].text,
            truth=entry.text,
            distance=distance,
            estimate=predicted[i].weight,
            truth_size=entry.font_size,
        )))
    return matches


def rmse(pairs: Sequence[Tuple[float, float]]) -> float:
    if not pairs:
        raise ValidationError("RMSE needs at least one (estimate, truth) pair", code="empty")
    return math.sqrt(math.fsum((e - g) ** 2 for e, g in pairs) / len(pairs))


@dataclass
class EvalReport:
    rmse: Optional[float]
    pairs: List[MatchedPair]
    unmatched_gt: List[str]
    spurious_pred: List[str]
    recovery_rate: float
    recovery_rate_edit1: float
    rank_agreement: Optional[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rmse": None if self.rmse is None else round(self.rmse, 6),
            "recovery_rate": round(self.recovery_rate, 6),
            "recovery_rate_edit1": round(self.recovery_rate_edit1, 6),
            "rank_agreement": None if self.rank_agreement is None else round(self.rank_agreement, 6),
            "pairs": [p.to_dict() for p in self.pairs],
            "unmatched_gt": self.unmatched_gt,
            "spurious_pred": self.spurious_pred,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def rank_agreement(matches, truth: GroundTruth, min_gap: float = 8) -> Optional[float]:
    """Share of ground-truth pairs at least ``min_gap`` apart whose decoded order agrees."""
    estimates = {j: pair.estimate for _, j, pair in matches}
    agree = total = 0
    for a, b in combinations(range(len(truth.entries)), 2):
        size_a, size_b = truth.entries[a].font_size, truth.entries[b].font_size
        if abs(size_a - size_b) < min_gap:
            continue
        total += 1
        if a in estimates and b in estimates and (estimates[a] - estimates[b]) * (size_a - size_b) > 0:
            agree += 1
    return agree / total if total else None


def evaluate(decoded: CloudData, truth: GroundTruth) -> EvalReport:
    matches = match_words(decoded.words, truth)
    pairs = [pair for _, _, pair in matches]
    matched_pred = {i for i, _, _ in matches}
    matched_truth = {j for _, j, _ in matches}
    count = len(truth.entries)

    report = EvalReport(
        rmse=rmse([(p.estimate, p.truth_size) for p in pairs]) if pairs else None,
        pairs=pairs,
        unmatched_gt=[e.text for j, e in enumerate(truth.entries) if j not in matched_truth],
        spurious_pred=[w.text for i, w in enumerate(decoded.words) if i not in matched_pred],
        recovery_rate=sum(p.distance == 0 for p in pairs) / count if count else 1.0,
        recovery_rate_edit1=sum(p.distance <= 1 for p in pairs) / count if count else 1.0,
        rank_agreement=rank_agreement(matches, truth),
    )
    logger.info(
        f"Evaluated {len(decoded.words)} decoded vs {count} true words: "
        f"rmse={report.rmse}, recovery={report.recovery_rate:.3f}"
    )
    return report


def random_entries(
    seed: int,
    count: int = 20,
    min_size: int = 12,
    max_size: int = 72,
    vocabulary: Sequence[str] = VOCABULARY,
) -> List[Tuple[str, int]]:
    """Distinct words with font sizes drawn uniformly from [min_size, max_size]."""
    if count > len(vocabulary):
        raise ValidationError(f"Vocabulary has only {len(vocabulary)} words, {count} requested", code="invalid")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(vocabulary), size=count, replace=False)
    sizes = rng.integers(min_size, max_size + 1, size=count)
    return [(vocabulary[int(i)], int(s)) for i, s in zip(picks, sizes)]


@dataclass
class BenchmarkReport:
    reports: List[EvalReport] = field(default_factory=list)
    seconds: float = 0.0

    def _mean(self, values) -> Optional[float]:
        values = [v for v in values if v is not None]
        return float(np.mean(values)) if values else None

    @property
    def mean_rmse(self) -> Optional[float]:
        return self._mean(r.rmse for r in self.reports)

    @property
    def recovery_rate(self) -> Optional[float]:
        return self._mean(r.recovery_rate for r in self.reports)

    @property
    def recovery_rate_edit1(self) -> Optional[float]:
        return self._mean(r.recovery_rate_edit1 for r in self.reports)

    @property
    def rank_agreement(self) -> Optional[float]:
        return self._mean(r.rank_agreement for r in self.reports)

    def failures(self, max_rmse=15.0, min_recovery=0.90, min_recovery_edit1=0.98, min_rank=0.95) -> List[str]:
        checks = [
            ("mean_rmse", self.mean_rmse, lambda v: v <= max_rmse),
            ("recovery_rate", self.recovery_rate, lambda v: v >= min_recovery),
            ("recovery_rate_edit1", self.recovery_rate_edit1, lambda v: v >= min_recovery_edit1),
            ("rank_agreement", self.rank_agreement, lambda v: v >= min_rank),
        ]
        return [name for name, value, ok in checks if value is not None and not ok(value)]

    def to_dict(self) -> Dict[str, Any]:
        def rounded(value):
            return None if value is None else round(value, 6)

        return {
            "clouds": len(self.reports),
            "mean_rmse": rounded(self.mean_rmse),
            "recovery_rate": rounded(self.recovery_rate),
            "recovery_rate_edit1": rounded(self.recovery_rate_edit1),
            "rank_agreement": rounded(self.rank_agreement),
            "seconds": round(self.seconds, 3),
            "per_cloud": [
                {"rmse": rounded(r.rmse), "recovery_rate": rounded(r.recovery_rate)} for r in self.reports
            ],
        }


def run_benchmark(
    clouds: int = 10,
    words: int = 20,
    seed: int = 0,
    layout: LayoutConfig = LayoutConfig(),
    config: Optional[PipelineConfig] = None,
    min_size: int = 12,
    max_size: int = 72,
) -> BenchmarkReport:
    """Synthesize, decode and score ``clouds`` seeded clouds."""
    config = config or PipelineConfig.from_settings()
    report = BenchmarkReport()
    started = time.perf_counter()
    for number in range(clouds):
        cloud_seed = seed + number
        entries = random_entries(cloud_seed, words, min_size, max_size)
        image, truth = synthesize_cloud(entries, layout, seed=cloud_seed, alphabet=config.alphabet)
        decoded = decode_cloud(image, config, source=f"benchmark-{cloud_seed}")
        report.reports.append(evaluate(decoded, truth))
    report.seconds = time.perf_counter() - started
    logger.info(f"Benchmark of {clouds} clouds: mean rmse {report.mean_rmse}, {report.seconds:.1f}s")
    return report
