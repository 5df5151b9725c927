"""
Glyph recognition by template matching against a rendered atlas
"""
import logging
import math
import string
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw, ImageFont
from django.core.exceptions import ValidationError

from raster.services import ComponentRegion

logger = logging.getLogger(__name__)

DEFAULT_FONT = "default"
DEFAULT_ALPHABET = string.ascii_lowercase + string.ascii_uppercase + string.digits
UNKNOWN_LETTER = "?"

# Coverage (0-255) above which a rendered pixel counts as ink for templates,
# and the lower cut used when measuring rendered boxes for calibration.
TEMPLATE_COVERAGE = 128
BOX_COVERAGE = 51

RESAMPLE_MODES = ("nearest", "pool")

# Point sizes of the extra small renderings, and how far (as a ratio) a
# region's height may stray from a variant's before it is ignored.
DEFAULT_VARIANT_SIZES = (12, 14, 16, 19, 23, 28, 34, 42, 52)
VARIANT_SPAN = 1.25

# A code point no font maps; whatever it renders is the font's .notdef glyph.
_NOTDEF_CHAR = "\uffff"


@lru_cache(maxsize=64)
def load_font(font_spec: str, size: int) -> ImageFont.FreeTypeFont:
    """Scalable font for ``font_spec``: ``"default"`` is Pillow's bundled font."""
    if size < 1:
        raise ValidationError(f"Font size must be positive, got {size}", code="config")
    if font_spec == DEFAULT_FONT:
        try:
            font = ImageFont.load_default(size=size)
        except TypeError as e:
            raise ValidationError("The built-in font needs Pillow >= 10.1", code="config") from e
        if not isinstance(font, ImageFont.FreeTypeFont):
            raise ValidationError("The built-in font needs Pillow built with FreeType", code="config")
        return font
    try:
        return ImageFont.truetype(font_spec, size=size)
    except OSError as e:
        raise ValidationError(f"Cannot load font '{font_spec}': {e}", code="config") from e


def _draw_text(font: ImageFont.FreeTypeFont, text: str, antialias: bool) -> Tuple[np.ndarray, Tuple[int, int]]:
    left, top, right, bottom = font.getbbox(text)
    canvas = Image.new("L", (max(1, right - left) + 4, max(1, bottom - top) + 4), 0)
    draw = ImageDraw.Draw(canvas)
    if not antialias:
        draw.fontmode = "1"
    origin = (2 - left, 2 - top)
    draw.text(origin, text, fill=255, font=font)
    return np.asarray(canvas), origin


def ink_bbox(coverage: np.ndarray, threshold: int = 0) -> Optional[Tuple[int, int, int, int]]:
    """(min_x, min_y, width, height) of pixels with coverage above ``threshold``."""
    ys, xs = np.nonzero(coverage > threshold)
    if ys.size == 0:
        return None
    return int(xs.min()), int(ys.min()), int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1)


@dataclass(frozen=True, eq=False)
class RenderedText:
    """Coverage of a rendered string cropped to its ink, with per-letter boxes."""
    coverage: np.ndarray
    letter_boxes: List[Tuple[int, int, int, int]]

    @property
    def width(self) -> int:
        return int(self.coverage.shape[1])

    @property
    def height(self) -> int:
        return int(self.coverage.shape[0])


def render_text(font_spec: str, text: str, size: int, antialias: bool = True) -> RenderedText:
    """Render ``text`` the way clouds are drawn; letter boxes are relative to the crop."""
    font = load_font(font_spec, size)
    coverage, _ = _draw_text(font, text, antialias)
    box = ink_bbox(coverage)
    if box is None:
        return RenderedText(coverage=np.zeros((0, 0), dtype=np.uint8), letter_boxes=[])
    x0, y0, w, h = box
    cropped = coverage[y0:y0 + h, x0:x0 + w]

    # Letter i is whatever ink text[:i + 1] adds over text[:i], drawn on one canvas.
    letter_boxes = []
    previous = np.zeros_like(coverage)
    left, top, _, _ = font.getbbox(text)
    for i in range(len(text)):
        partial = Image.new("L", (coverage.shape[1], coverage.shape[0]), 0)
        draw = ImageDraw.Draw(partial)
        if not antialias:
            draw.fontmode = "1"
        draw.text((2 - left, 2 - top), text[:i + 1], fill=255, font=font)
        current = np.asarray(partial)
        added = ink_bbox(np.where(current > previous, current, 0))
        if added is None:
            letter_boxes.append((0, 0, 0, 0))
        else:
            letter_boxes.append((added[0] - x0, added[1] - y0, added[2], added[3]))
        previous = current
    return RenderedText(coverage=cropped, letter_boxes=letter_boxes)


def glyph_mask(font_spec: str, char: str, size: int) -> Optional[np.ndarray]:
    """Binary mask of one character at ``size``, or None when it renders no ink."""
    coverage, _ = _draw_text(load_font(font_spec, size), char, antialias=True)
    box = ink_bbox(coverage, TEMPLATE_COVERAGE - 1)
    if box is None:
        return None
    x0, y0, w, h = box
    return coverage[y0:y0 + h, x0:x0 + w] >= TEMPLATE_COVERAGE


def _resample_axis(mask: np.ndarray, size: int, axis: int, resample: str = "nearest") -> np.ndarray:
    n = mask.shape[axis]
    if resample == "pool":
        # each output cell ORs its whole footprint when shrinking
        starts = (np.arange(size) * n) // size
        return np.logical_or.reduceat(mask, starts, axis=axis)
    centers = ((2 * np.arange(size) + 1) * n) // (2 * size)
    return np.take(mask, centers, axis=axis)


def fit_mask(mask: np.ndarray, ref_size: int, resample: str = "nearest") -> np.ndarray:
    """Crop to the tight box, scale keeping aspect, center in a ref_size square.

    ``resample="nearest"`` samples the source cell under each output cell
    center. ``"pool"`` ORs every source cell an output cell covers, so thin
    strokes survive heavy shrinking; both repeat cells when growing.
    """
    if resample not in RESAMPLE_MODES:
        raise ValidationError(f"resample must be one of {RESAMPLE_MODES}, got {resample!r}", code="config")
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise ValidationError("Cannot normalize an empty mask", code="empty")
    crop = mask[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
    h, w = crop.shape
    scale = ref_size / max(h, w)
    new_h = min(ref_size, max(1, int(round(h * scale))))
    new_w = min(ref_size, max(1, int(round(w * scale))))
    fitted = _resample_axis(_resample_axis(crop, new_h, 0, resample), new_w, 1, resample)

    box = np.zeros((ref_size, ref_size), dtype=bool)
    top, left = (ref_size - new_h) // 2, (ref_size - new_w) // 2
    box[top:top + new_h, left:left + new_w] = fitted
    return box


def ink_mask(region: ComponentRegion) -> np.ndarray:
    """Region pixels at half the region's peak ink strength or more.

    Templates keep rendered pixels of at least half coverage; this is the
    same cut for a cloud region, whose faint edge pixels would otherwise
    thicken every stroke. Regions without intensity keep their mask.
    """
    if region.intensity is None:
        return region.mask
    peak = int(region.intensity.max())
    if peak == 0:
        return region.mask
    return region.mask & (2 * region.intensity.astype(np.int32) >= peak)


def normalize_mask(region: ComponentRegion, ref_size: int, resample: str = "nearest") -> np.ndarray:
    return fit_mask(ink_mask(region), ref_size, resample)


@dataclass(frozen=True)
class Classification:
    """Best upright match and best match among glyphs turned a quarter turn."""
    letter: str
    confidence: float
    rotated_letter: str
    rotated_confidence: float

    def for_orientation(self, vertical: bool) -> Tuple[str, float]:
        if vertical:
            return self.rotated_letter, self.rotated_confidence
        return self.letter, self.confidence


@dataclass(frozen=True, eq=False)
class GlyphAtlas:
    """Per-character templates plus the font data the later stages need.

    Every character has one template rendered at ``render_size``. Variants
    are extra renderings at small point sizes, where hinting changes the
    shapes; one only competes for regions of about its own pixel height.
    ``profiles`` lists the distinct (top, bottom) ink extents around the
    baseline, in ems.
    """
    alphabet: Tuple[str, ...]
    templates: np.ndarray          # (n, ref_size, ref_size) upright
    rotated_templates: np.ndarray  # (n, ref_size, ref_size) turned 90 degrees counter-clockwise
    font_id: str
    ref_size: int
    render_size: int
    calibration_factor: float
    resample: str = "nearest"
    variant_templates: Optional[np.ndarray] = None
    variant_rotated: Optional[np.ndarray] = None
    variant_letters: Optional[np.ndarray] = None  # alphabet index of each variant
    variant_extents: Optional[np.ndarray] = None  # rendered ink height in pixels
    profiles: Tuple[Tuple[float, float], ...] = ()

    def template(self, letter: str, rotated: bool = False) -> np.ndarray:
        index = self.alphabet.index(letter)
        return (self.rotated_templates if rotated else self.templates)[index]

    def plausible_variants(self, extent: int) -> np.ndarray:
        """Variants whose rendered height is within VARIANT_SPAN of ``extent``."""
        if self.variant_extents is None:
            return np.zeros(0, dtype=bool)
        ratio = np.maximum(extent, 1) / np.maximum(self.variant_extents, 1)
        return (ratio <= VARIANT_SPAN) & (ratio >= 1 / VARIANT_SPAN)

    def __len__(self):
        return len(self.alphabet)


def calibration_runs(alphabet: Sequence[str], run_length: int = 4) -> List[str]:
    """Reference "words" for calibration: lowercase letters in short runs."""
    letters = [c for c in alphabet if c.islower()] or list(alphabet)
    return ["".join(letters[i:i + run_length]) for i in range(0, len(letters), run_length)]


def _area_per_letter(font_spec: str, text: str, size: int) -> Optional[float]:
    coverage, _ = _draw_text(load_font(font_spec, size), text, antialias=True)
    box = ink_bbox(coverage, BOX_COVERAGE)
    if box is None:
        return None
    return box[2] * box[3] / len(text)


def measure_calibration_factor(font_spec: str, alphabet: Sequence[str], reference_size: int) -> float:
    """reference_size / sqrt(mean word-box area per letter) at the reference size."""
    per_letter = [area for area in (_area_per_letter(font_spec, run, reference_size)
                                    for run in calibration_runs(alphabet)) if area is not None]
    if not per_letter:
        raise ValidationError(f"Font '{font_spec}' renders none of the calibration text", code="config")
    return reference_size / math.sqrt(float(np.mean(per_letter)))


@lru_cache(maxsize=4096)
def word_calibration_factor(font_spec: str, text: str, reference_size: int) -> Optional[float]:
    """Like ``measure_calibration_factor`` but for ``text`` itself; None when it renders no ink."""
    if not text:
        return None
    area = _area_per_letter(font_spec, text, reference_size)
    if not area:
        return None
    return reference_size / math.sqrt(area)


def glyph_profile(font_spec: str, char: str, size: int) -> Optional[Tuple[float, float]]:
    """(top, bottom) of a character's ink relative to the baseline, in ems, up positive."""
    canvas = Image.new("L", (3 * size, 3 * size), 0)
    baseline = 2 * size
    ImageDraw.Draw(canvas).text((size, baseline), char, fill=255, font=load_font(font_spec, size), anchor="ls")
    box = ink_bbox(np.asarray(canvas), BOX_COVERAGE)
    if box is None:
        return None
    _, top, _, height = box
    return (baseline - top) / size, (baseline - top - height) / size


def _variants(font_spec: str, chars: Sequence[str], ref_size: int, sizes: Sequence[int], resample: str):
    upright, rotated, letters, extents = [], [], [], []
    for size in sorted(set(sizes)):
        font = load_font(font_spec, size)
        for index, char in enumerate(chars):
            coverage, _ = _draw_text(font, char, antialias=True)
            box = ink_bbox(coverage, BOX_COVERAGE)
            mask = coverage >= TEMPLATE_COVERAGE
            if box is None or not mask.any():
                continue
            upright.append(fit_mask(mask, ref_size, resample))
            rotated.append(fit_mask(np.rot90(mask), ref_size, resample))
            letters.append(index)
            extents.append(box[3])
    if not upright:
        return None, None, None, None
    return np.stack(upright), np.stack(rotated), np.array(letters), np.array(extents)


def build_atlas(
    font_spec: str = DEFAULT_FONT,
    alphabet: Sequence[str] = DEFAULT_ALPHABET,
    ref_size: int = 32,
    render_size: int = 64,
    resample: str = "nearest",
    variant_sizes: Sequence[int] = DEFAULT_VARIANT_SIZES,
) -> GlyphAtlas:
    """Render each character, crop it, scale it into a ref_size box and binarize."""
    chars = tuple(alphabet)
    if not chars:
        raise ValidationError("Atlas alphabet must not be empty", code="config")
    if len(set(chars)) != len(chars):
        raise ValidationError("Atlas alphabet contains duplicate characters", code="config")
    if ref_size < 8:
        raise ValidationError(f"ref_size must be >= 8, got {ref_size}", code="config")

    notdef = glyph_mask(font_spec, _NOTDEF_CHAR, render_size)
    upright, rotated, profiles = [], [], set()
    for char in chars:
        mask = glyph_mask(font_spec, char, render_size)
        missing = mask is None or (
            notdef is not None and mask.shape == notdef.shape and np.array_equal(mask, notdef)
        )
        if missing:
            raise ValidationError(f"Character {char!r} is missing from font '{font_spec}'", code="config")
        upright.append(fit_mask(mask, ref_size, resample))
        rotated.append(fit_mask(np.rot90(mask), ref_size, resample))
        profile = glyph_profile(font_spec, char, render_size)
        if profile is not None:
            profiles.add((round(profile[0], 2), round(profile[1], 2)))

    variant_templates, variant_rotated, variant_letters, variant_extents = _variants(
        font_spec, chars, ref_size, variant_sizes, resample
    )
    atlas = GlyphAtlas(
        alphabet=chars,
        templates=np.stack(upright),
        rotated_templates=np.stack(rotated),
        font_id=font_spec,
        ref_size=ref_size,
        render_size=render_size,
        calibration_factor=measure_calibration_factor(font_spec, chars, render_size),
        resample=resample,
        variant_templates=variant_templates,
        variant_rotated=variant_rotated,
        variant_letters=variant_letters,
        variant_extents=variant_extents,
        profiles=tuple(sorted(profiles)),
    )
    variants = 0 if variant_letters is None else len(variant_letters)
    logger.info(f"Built atlas for font '{font_spec}': {len(chars)} glyphs at {ref_size}px, {variants} variants")
    return atlas


@lru_cache(maxsize=8)
def get_atlas(
    font_spec: str,
    alphabet: str,
    ref_size: int,
    render_size: int,
    resample: str = "nearest",
    variant_sizes: Tuple[int, ...] = DEFAULT_VARIANT_SIZES,
) -> GlyphAtlas:
    """Atlases are immutable, so one per configuration is shared."""
    return build_atlas(font_spec, alphabet, ref_size, render_size, resample, tuple(variant_sizes))


def jaccard_scores(mask: np.ndarray, templates: np.ndarray) -> np.ndarray:
    inter = np.logical_and(templates, mask).sum(axis=(1, 2))
    union = np.logical_or(templates, mask).sum(axis=(1, 2))
    return inter / np.maximum(union, 1)


def _letter_scores(mask: np.ndarray, atlas: GlyphAtlas, rotated: bool, extent: int) -> np.ndarray:
    """Best score per alphabet character over its template and plausible variants."""
    scores = jaccard_scores(mask, atlas.rotated_templates if rotated else atlas.templates)
    plausible = atlas.plausible_variants(extent)
    if plausible.any():
        variants = (atlas.variant_rotated if rotated else atlas.variant_templates)[plausible]
        np.maximum.at(scores, atlas.variant_letters[plausible], jaccard_scores(mask, variants))
    return scores


def classify(region: ComponentRegion, atlas: GlyphAtlas) -> Classification:
    """Best Jaccard match; ties go to the earlier alphabet character.

    Upright readings compare the region's height with variant heights,
    rotated readings its width.
    """
    mask = normalize_mask(region, atlas.ref_size, atlas.resample)
    scores = _letter_scores(mask, atlas, False, region.height)
    rotated_scores = _letter_scores(mask, atlas, True, region.width)
    best, rotated_best = int(np.argmax(scores)), int(np.argmax(rotated_scores))
    return Classification(
        letter=atlas.alphabet[best],
        confidence=float(scores[best]),
        rotated_letter=atlas.alphabet[rotated_best],
        rotated_confidence=float(rotated_scores[rotated_best]),
    )


def classify_all(regions: Sequence[ComponentRegion], atlas: GlyphAtlas) -> List[Classification]:
    results = [classify(region, atlas) for region in regions]
    if results:
        mean_confidence = sum(r.confidence for r in results) / len(results)
        logger.debug(f"Classified {len(results)} regions, mean upright confidence {mean_confidence:.3f}")
    return results
