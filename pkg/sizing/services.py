"""
Size estimation, calibration and the end-to-end decode pipeline
"""
import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from django.core.exceptions import ValidationError

from WordCloudDJ.config import PipelineConfig
from glyph.services import GlyphAtlas, classify_all, get_atlas, word_calibration_factor
from raster.services import (
    BBox,
    Color,
    ComponentRegion,
    RasterImage,
    detect_background,
    extract_components,
    merge_diacritics,
)
from wordgraph.services import (
    ORIENTATIONS,
    GlyphNode,
    SweepConfig,
    Trace,
    WordCluster,
    build_nodes,
    chain_to_word,
    extract_words,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecodedWord:
    text: str
    raw_size: float
    font_size_estimate: float
    bbox: BBox
    orientation: str
    confidence: float = 1.0

    def __post_init__(self):
        if not self.text:
            raise ValidationError("Decoded word text must not be empty", code="invalid")
        if not self.raw_size > 0 or not self.font_size_estimate > 0:
            raise ValidationError(f"Word '{self.text}' needs positive sizes", code="invalid")
        if self.orientation not in ORIENTATIONS:
            raise ValidationError(f"Unknown orientation '{self.orientation}'", code="invalid")

    @property
    def weight(self) -> float:
        return self.font_size_estimate

    def to_dict(self) -> Dict[str, Any]:
        return {
            "text": self.text,
            "weight": round(self.font_size_estimate, 4),
            "raw_size": round(self.raw_size, 4),
            "bbox": list(self.bbox),
            "orientation": self.orientation,
            "confidence": round(self.confidence, 4),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DecodedWord":
        try:
            return cls(
                text=str(data["text"]),
                raw_size=float(data["raw_size"]),
                font_size_estimate=float(data["weight"]),
                bbox=tuple(int(v) for v in data["bbox"]),
                orientation=data.get("orientation", "horizontal"),
                confidence=float(data.get("confidence", 1.0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed decoded word {data!r}: {e}", code="invalid") from e


def _word_order(word: DecodedWord):
    return -word.weight, word.text, word.bbox


@dataclass(frozen=True)
class CloudData:
    """Decoded (word, weight) records, heaviest first, plus decoder metadata."""
    words: Tuple[DecodedWord, ...]
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(sorted(self.words, key=_word_order)))

    def to_dict(self) -> Dict[str, Any]:
        return {"words": [w.to_dict() for w in self.words], "meta": self.meta}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["text", "weight"])
        for word in self.words:
            writer.writerow([word.text, round(word.weight, 4)])
        return buffer.getvalue()

    def render(self, output_format: str) -> str:
        return self.to_csv() if output_format == "csv" else self.to_json() + "\n"

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CloudData":
        if not isinstance(data, dict) or not isinstance(data.get("words"), list):
            raise ValidationError("Decoded cloud must be an object with a 'words' list", code="invalid")
        return cls(words=tuple(DecodedWord.from_dict(w) for w in data["words"]), meta=data.get("meta") or {})

    @classmethod
    def from_json(cls, text: str) -> "CloudData":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValidationError(f"Decoded cloud is not valid JSON: {e}", code="invalid") from e
        return cls.from_dict(data)


def estimate_size(cluster: WordCluster) -> float:
    """Tight word box area divided by the number of letters."""
    _, _, width, height = cluster.bbox
    return width * height / len(cluster)


def calibrate_font_size(raw_size: float, atlas: GlyphAtlas, text: Optional[str] = None) -> float:
    """sqrt(raw_size) times the atlas calibration factor.

    Given the decoded ``text`` the factor is measured on that word rendered
    at the atlas render size instead, so words with tall or wide letters
    are not mistaken for larger ones. Text with characters outside the
    atlas alphabet falls back to the alphabet factor.
    """
    if not raw_size > 0:
        raise ValidationError(f"raw_size must be > 0, got {raw_size}", code="invalid")
    factor = atlas.calibration_factor
    if text and set(text) <= set(atlas.alphabet):
        factor = word_calibration_factor(atlas.font_id, text, atlas.render_size) or factor
    return math.sqrt(raw_size) * factor


def decode_word(cluster: WordCluster, atlas: GlyphAtlas, calibration: str = "alphabet") -> DecodedWord:
    """``calibration="word"`` calibrates against the decoded text itself."""
    raw_size = estimate_size(cluster)
    text = chain_to_word(cluster)
    return DecodedWord(
        text=text,
        raw_size=raw_size,
        font_size_estimate=calibrate_font_size(raw_size, atlas, text if calibration == "word" else None),
        bbox=cluster.bbox,
        orientation=cluster.orientation,
        confidence=cluster.mean_confidence,
    )


@dataclass
class DecodeStages:
    """Intermediate results of one decode, kept for debug output."""
    image: RasterImage
    background: Color
    components: List[ComponentRegion]
    nodes: List[GlyphNode]
    clusters: List[WordCluster]
    cloud: CloudData


def sweep_config(config: PipelineConfig, atlas: Optional[GlyphAtlas] = None) -> SweepConfig:
    return SweepConfig(
        k=config.k,
        tau=config.tau,
        scale_mode=config.scale_mode,
        color_scale=config.color_scale,
        hue_tolerance=config.hue_tolerance,
        gap_ratio=config.gap_ratio,
        profiles=atlas.profiles if atlas is not None and config.baseline_check else (),
    )


def decode_stages(
    image: RasterImage,
    config: Optional[PipelineConfig] = None,
    source: str = "<memory>",
    trace: Optional[Trace] = None,
) -> DecodeStages:
    config = config or PipelineConfig.from_settings()
    atlas = get_atlas(
        config.font, config.alphabet, config.ref_size, config.render_size, config.resample, config.variant_sizes
    )

    background = detect_background(image)
    # Small pieces are kept until fringes and marks are merged; a thin
    # letter can arrive as several of them.
    components = extract_components(
        image,
        background,
        connectivity=config.connectivity,
        color_tolerance=config.color_tolerance,
        min_pixel_count=1,
        join_rule=config.join_rule,
    )
    components = merge_diacritics(
        components,
        max_gap=config.merge_max_gap,
        color_tolerance=config.color_tolerance,
        mark_ratio=config.merge_mark_ratio,
        background=background,
    )
    components = [c for c in components if c.pixel_count >= config.min_pixel_count]
    nodes = build_nodes(components, classify_all(components, atlas), config.confidence_floor, background)
    clusters = extract_words(nodes, sweep_config(config, atlas), trace=trace) if nodes else []
    if not nodes:
        logger.warning(f"{source}: no foreground found")

    cloud = CloudData(
        words=tuple(decode_word(cluster, atlas, config.calibration) for cluster in clusters),
        meta={
            "source": source,
            "config_hash": config.digest(),
            "image_size": [image.width, image.height],
            "background": list(background),
        },
    )
    logger.info(f"Decoded {source}: {len(cloud.words)} words from {len(components)} components")
    return DecodeStages(image, background, components, nodes, clusters, cloud)


def decode_cloud(
    image: RasterImage,
    config: Optional[PipelineConfig] = None,
    source: str = "<memory>",
) -> CloudData:
    return decode_stages(image, config, source).cloud
