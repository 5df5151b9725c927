"""
Raster services: PNG loading, background detection and letter segmentation
"""
import io
import logging
import colorsys
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from django.core.exceptions import ValidationError

from WordCloudDJ.exceptions import ImageDecodeError, ImageReadError

logger = logging.getLogger(__name__)

Color = Tuple[int, int, int]
BBox = Tuple[int, int, int, int]  # (min_x, min_y, width, height)

WHITE: Color = (255, 255, 255)

# Neighbour offsets (dy, dx) looking forward in scan order only; every
# undirected adjacency is visited exactly once.
NEIGHBOUR_OFFSETS = {
    4: ((0, 1), (1, 0)),
    8: ((0, 1), (1, 0), (1, 1), (1, -1)),
}

# "color" compares raw pixels, "chroma" compares background-relative hue.
JOIN_RULES = ("color", "chroma")


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Decoded pixel grid, ``pixels`` is a (height, width, 3) uint8 array."""
    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError(
                f"Image must be at least 1x1 pixels, got {self.width}x{self.height}",
                code="invalid",
            )
        if self.pixels.shape != (self.height, self.width, 3):
            raise ValidationError(
                f"Pixel grid shape {self.pixels.shape} does not match {self.width}x{self.height} RGB",
                code="invalid",
            )
        if self.pixels.dtype != np.uint8:
            raise ValidationError("Pixel channels must be 8-bit", code="invalid")

    @classmethod
    def from_array(cls, array) -> "RasterImage":
        """Build an image from any (h, w, 3) array-like with channels in [0, 255]."""
        arr = np.asarray(array)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValidationError(f"Expected an (h, w, 3) array, got shape {arr.shape}", code="invalid")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValidationError("Channel values must lie in [0, 255]", code="invalid")
            arr = arr.astype(np.uint8)
        return cls(width=int(arr.shape[1]), height=int(arr.shape[0]), pixels=np.ascontiguousarray(arr))

    @classmethod
    def blank(cls, width: int, height: int, color: Color = WHITE) -> "RasterImage":
        if width < 1 or height < 1:
            raise ValidationError(f"Image must be at least 1x1 pixels, got {width}x{height}", code="invalid")
        pixels = np.empty((height, width, 3), dtype=np.uint8)
        pixels[...] = color
        return cls(width=width, height=height, pixels=pixels)

    def to_pil(self) -> Image.Image:
        return Image.fromarray(self.pixels)

    def pixel(self, x: int, y: int) -> Color:
        r, g, b = self.pixels[y, x]
        return int(r), int(g), int(b)


@dataclass(frozen=True, eq=False)
class ComponentRegion:
    """One connected same-color foreground segment.

    ``mask`` is a boolean array cropped to ``bbox``; ``pixels()`` gives the
    absolute (x, y) coordinate set. ``intensity``, when known, holds each
    mask pixel's max-channel distance from the background (0 off the mask).
    """
    bbox: BBox
    mask: np.ndarray
    mean_color: Color
    pixel_count: int
    intensity: Optional[np.ndarray] = None

    @property
    def min_x(self) -> int:
        return self.bbox[0]

    @property
    def min_y(self) -> int:
        return self.bbox[1]

    @property
    def width(self) -> int:
        return self.bbox[2]

    @property
    def height(self) -> int:
        return self.bbox[3]

    @property
    def max_x(self) -> int:
        return self.bbox[0] + self.bbox[2] - 1

    @property
    def max_y(self) -> int:
        return self.bbox[1] + self.bbox[3] - 1

    @property
    def scan_key(self) -> Tuple[int, int, int, int]:
        """(min_y, min_x) plus the first mask pixel in scan order as tie-break."""
        first = int(np.argmax(self.mask.ravel()))
        row, col = divmod(first, self.width)
        return self.min_y, self.min_x, self.min_y + row, self.min_x + col

    @property
    def is_thin(self) -> bool:
        """No pixel has its whole 3x3 neighbourhood inside the region."""
        return not ndimage.binary_erosion(self.mask, structure=np.ones((3, 3), dtype=bool)).any()

    def pixels(self) -> Set[Tuple[int, int]]:
        ys, xs = np.nonzero(self.mask)
        return {(int(x) + self.min_x, int(y) + self.min_y) for y, x in zip(ys, xs)}

    @classmethod
    def from_pixels(cls, pixels: Iterable[Tuple[int, int]], mean_color: Color) -> "ComponentRegion":
        coords = sorted(set(pixels))
        if not coords:
            raise ValidationError("A component needs at least one pixel", code="empty")
        xs = [p[0] for p in coords]
        ys = [p[1] for p in coords]
        min_x, min_y = min(xs), min(ys)
        width, height = max(xs) - min_x + 1, max(ys) - min_y + 1
        mask = np.zeros((height, width), dtype=bool)
        mask[np.array(ys) - min_y, np.array(xs) - min_x] = True
        return cls(bbox=(min_x, min_y, width, height), mask=mask,
                   mean_color=tuple(mean_color), pixel_count=len(coords))


def color_distance(a: Color, b: Color) -> int:
    """Max-channel distance between two colors."""
    return max(abs(int(a[i]) - int(b[i])) for i in range(3))


def chroma(color: Color, background: Color) -> Tuple[float, float, float]:
    """Deviation from the background rescaled so its largest channel is 255.

    Anti-aliased pixels are blends of ink and background and keep their
    ink's chroma; the background itself maps to (0, 0, 0).
    """
    dev = [int(color[i]) - int(background[i]) for i in range(3)]
    span = max(abs(d) for d in dev)
    if span == 0:
        return 0.0, 0.0, 0.0
    return tuple(d * 255.0 / span for d in dev)


def chroma_distance(a: Color, b: Color, background: Color) -> float:
    ca, cb = chroma(a, background), chroma(b, background)
    return max(abs(ca[i] - cb[i]) for i in range(3))


def load_image(path: Union[str, Path]) -> RasterImage:
    """Read a PNG file; alpha is composited over opaque white."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as e:
        raise ImageReadError(f"Cannot read image {path}: {e}") from e
    return decode_png(data, source=str(path))


def decode_png(data: bytes, source: str = "<bytes>") -> RasterImage:
    try:
        with Image.open(io.BytesIO(data)) as img:
            if img.format != "PNG":
                raise ImageDecodeError(f"{source} is not a PNG image (format: {img.format})")
            img.load()
            rgb = _flatten_alpha(img)
    except (UnidentifiedImageError, SyntaxError, OSError, ValueError) as e:
        raise ImageDecodeError(f"Cannot decode PNG {source}: {e}") from e

    if rgb.width < 1 or rgb.height < 1:
        raise ValidationError(f"{source} has zero dimension", code="invalid")
    image = RasterImage.from_array(np.asarray(rgb, dtype=np.uint8))
    logger.debug(f"Loaded {source}: {image.width}x{image.height}")
    return image


def _flatten_alpha(img: Image.Image) -> Image.Image:
    has_alpha = img.mode in ("RGBA", "LA", "PA") or "transparency" in img.info
    if not has_alpha:
        return img.convert("RGB")
    rgba = img.convert("RGBA")
    base = Image.new("RGBA", rgba.size, WHITE + (255,))
    return Image.alpha_composite(base, rgba).convert("RGB")


def save_png(image: RasterImage, path: Union[str, Path]) -> None:
    image.to_pil().save(path, format="PNG")


def encode_png(image: RasterImage) -> bytes:
    buffer = io.BytesIO()
    image.to_pil().save(buffer, format="PNG")
    return buffer.getvalue()


def detect_background(image: RasterImage) -> Color:
    """Most frequent color on the outermost pixel ring, ties to the smallest (r, g, b)."""
    border = np.zeros((image.height, image.width), dtype=bool)
    border[0, :] = border[-1, :] = True
    border[:, 0] = border[:, -1] = True
    # np.unique sorts rows lexicographically, argmax keeps the first maximum
    colors, counts = np.unique(image.pixels[border], axis=0, return_counts=True)
    r, g, b = colors[int(np.argmax(counts))]
    return int(r), int(g), int(b)


def _chroma_field(pixels: np.ndarray, background: Color) -> Tuple[np.ndarray, np.ndarray]:
    dev = pixels.astype(np.int16) - np.asarray(background, dtype=np.int16)
    span = np.abs(dev).max(axis=-1)
    safe = np.where(span > 0, span, 1)[..., None]
    field = np.where(span[..., None] > 0, dev * 255.0 / safe, 0.0)
    return span, field


def _neighbour_slices(height: int, width: int, dy: int, dx: int):
    src = (slice(0, height - dy), slice(max(0, -dx), width - max(0, dx)))
    dst = (slice(dy, height), slice(max(0, dx), width + min(0, dx)))
    return src, dst


def extract_components(
    image: RasterImage,
    background: Color,
    connectivity: int = 8,
    color_tolerance: float = 48.0,
    min_pixel_count: int = 4,
    join_rule: str = "color",
) -> List[ComponentRegion]:
    """Group foreground pixels into connected same-color regions.

    A pixel is foreground when its max-channel distance from the background
    exceeds ``color_tolerance``. Adjacent foreground pixels join when their
    max-channel color distance is within ``color_tolerance``; with
    ``join_rule="chroma"`` their background-relative hues are compared
    instead, which keeps anti-aliased edges on their letter. Regions below
    ``min_pixel_count`` are dropped as noise. Output is sorted by
    (min_y, min_x).
    """
    if connectivity not in NEIGHBOUR_OFFSETS:
        raise ValidationError(f"connectivity must be 4 or 8, got {connectivity}", code="config")
    if color_tolerance < 0:
        raise ValidationError("color_tolerance must be >= 0", code="config")
    if join_rule not in JOIN_RULES:
        raise ValidationError(f"join_rule must be one of {JOIN_RULES}, got {join_rule!r}", code="config")

    height, width = image.height, image.width
    span, field = _chroma_field(image.pixels, background)
    foreground = span > color_tolerance
    if not foreground.any():
        logger.debug("No foreground pixels found")
        return []
    values = field if join_rule == "chroma" else image.pixels.astype(np.int16)

    index = np.arange(height * width).reshape(height, width)
    rows, cols = [], []
    for dy, dx in NEIGHBOUR_OFFSETS[connectivity]:
        src, dst = _neighbour_slices(height, width, dy, dx)
        joined = (
            foreground[src]
            & foreground[dst]
            & (np.abs(values[src] - values[dst]).max(axis=-1) <= color_tolerance)
        )
        rows.append(index[src][joined])
        cols.append(index[dst][joined])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)

    graph = coo_matrix(
        (np.ones(rows.size, dtype=np.int8), (rows, cols)),
        shape=(height * width, height * width),
    )
    _, labels = connected_components(graph, directed=False)
    labels = labels.reshape(height, width)

    _, compact = np.unique(labels[foreground], return_inverse=True)
    label_image = np.zeros((height, width), dtype=np.int32)
    label_image[foreground] = compact.ravel() + 1

    components = []
    dropped = 0
    for number, (ys, xs) in enumerate(ndimage.find_objects(label_image), start=1):
        mask = label_image[ys, xs] == number
        count = int(mask.sum())
        if count < min_pixel_count:
            dropped += 1
            continue
        mean = np.rint(image.pixels[ys, xs][mask].mean(axis=0)).astype(int)
        components.append(ComponentRegion(
            bbox=(xs.start, ys.start, xs.stop - xs.start, ys.stop - ys.start),
            mask=mask,
            mean_color=(int(mean[0]), int(mean[1]), int(mean[2])),
            pixel_count=count,
            intensity=np.where(mask, span[ys, xs], 0).astype(np.uint8),
        ))

    components.sort(key=lambda c: c.scan_key)
    logger.info(f"Extracted {len(components)} components ({dropped} below {min_pixel_count} px dropped)")
    return components


def _overlap(a0: int, a1: int, b0: int, b1: int) -> int:
    return max(0, min(a1, b1) - max(a0, b0) + 1)


def _gap(a0: int, a1: int, b0: int, b1: int) -> int:
    """Empty pixels between two inclusive spans, negative when they intersect."""
    return max(b0 - a1, a0 - b1) - 1


def _is_diacritic_pair(
    a: ComponentRegion,
    b: ComponentRegion,
    max_gap: int,
    color_tolerance: float,
    mark_ratio: float,
    background: Optional[Color],
) -> bool:
    if background is not None:
        distance = chroma_distance(a.mean_color, b.mean_color, background)
    else:
        distance = color_distance(a.mean_color, b.mean_color)
    if distance > color_tolerance:
        return False

    mark, body = (a, b) if a.pixel_count <= b.pixel_count else (b, a)
    if mark.pixel_count > mark_ratio * body.pixel_count:
        return False
    if max(mark.width, mark.height) > 2 * min(mark.width, mark.height):
        return False
    allowed = max(max_gap, 1.5 * max(mark.width, mark.height))

    # dot above or below a slender stem
    x_overlap = _overlap(a.min_x, a.max_x, b.min_x, b.max_x)
    y_gap = _gap(a.min_y, a.max_y, b.min_y, b.max_y)
    if (body.height >= 2 * body.width and x_overlap >= 0.5 * min(a.width, b.width)
            and 0 <= y_gap <= allowed):
        return True

    # dot beside a stem (glyphs rotated a quarter turn)
    y_overlap = _overlap(a.min_y, a.max_y, b.min_y, b.max_y)
    x_gap = _gap(a.min_x, a.max_x, b.min_x, b.max_x)
    return (body.width >= 2 * body.height and y_overlap >= 0.5 * min(a.height, b.height)
            and 0 <= x_gap <= allowed)


def union_regions(*regions: ComponentRegion) -> ComponentRegion:
    min_x, min_y = min(r.min_x for r in regions), min(r.min_y for r in regions)
    max_x, max_y = max(r.max_x for r in regions), max(r.max_y for r in regions)
    shape = (max_y - min_y + 1, max_x - min_x + 1)
    mask = np.zeros(shape, dtype=bool)
    keep_intensity = all(r.intensity is not None for r in regions)
    intensity = np.zeros(shape, dtype=np.uint8) if keep_intensity else None
    for region in regions:
        oy, ox = region.min_y - min_y, region.min_x - min_x
        window = (slice(oy, oy + region.height), slice(ox, ox + region.width))
        mask[window] |= region.mask
        if keep_intensity:
            intensity[window] = np.maximum(intensity[window], region.intensity)
    total = sum(r.pixel_count for r in regions)
    mean = tuple(
        int(round(sum(r.mean_color[i] * r.pixel_count for r in regions) / total))
        for i in range(3)
    )
    return ComponentRegion(
        bbox=(min_x, min_y, mask.shape[1], mask.shape[0]),
        mask=mask,
        mean_color=mean,
        pixel_count=total,
        intensity=intensity,
    )


def _touching_pairs(regions: Sequence[ComponentRegion]) -> Set[Tuple[int, int]]:
    """Index pairs of regions with 8-adjacent pixels."""
    min_x, min_y = min(r.min_x for r in regions), min(r.min_y for r in regions)
    width = max(r.max_x for r in regions) - min_x + 1
    height = max(r.max_y for r in regions) - min_y + 1
    labels = np.zeros((height, width), dtype=np.int32)
    for number, region in enumerate(regions, start=1):
        oy, ox = region.min_y - min_y, region.min_x - min_x
        window = labels[oy:oy + region.height, ox:ox + region.width]
        window[region.mask] = number

    pairs = set()
    for dy, dx in NEIGHBOUR_OFFSETS[8]:
        src, dst = _neighbour_slices(height, width, dy, dx)
        a, b = labels[src], labels[dst]
        touching = (a > 0) & (b > 0) & (a != b)
        for p, q in zip(a[touching].tolist(), b[touching].tolist()):
            pairs.add((min(p, q) - 1, max(p, q) - 1))
    return pairs


def rejoin_fringes(
    components: Sequence[ComponentRegion],
    background: Color,
    color_tolerance: float = 48.0,
) -> List[ComponentRegion]:
    """Glue anti-aliased fringe pieces back onto the letters they touch.

    Two touching regions join when their mean colors share a hue (chroma
    distance within ``color_tolerance``) and at least one of them is thin,
    i.e. has no 3x3 interior. Solid letters of different shades stay apart.
    """
    regions = list(components)
    if len(regions) < 2:
        return regions
    thin = [r.is_thin for r in regions]
    rows, cols = [], []
    for i, j in sorted(_touching_pairs(regions)):
        if not (thin[i] or thin[j]):
            continue
        if chroma_distance(regions[i].mean_color, regions[j].mean_color, background) > color_tolerance:
            continue
        rows.append(i)
        cols.append(j)
    if not rows:
        return regions

    graph = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(len(regions), len(regions)))
    _, labels = connected_components(graph, directed=False)
    groups: Dict[int, List[ComponentRegion]] = {}
    for label, region in zip(labels.tolist(), regions):
        groups.setdefault(label, []).append(region)
    joined = [group[0] if len(group) == 1 else union_regions(*group) for group in groups.values()]
    logger.debug(f"Rejoined {len(regions) - len(joined)} fringe pieces")
    return sorted(joined, key=lambda c: c.scan_key)


def _merge_marks(regions, max_gap, color_tolerance, mark_ratio, background) -> Tuple[List[ComponentRegion], int]:
    merges = 0
    changed = True
    while changed:
        changed = False
        for i, j in combinations(range(len(regions)), 2):
            if _is_diacritic_pair(regions[i], regions[j], max_gap, color_tolerance, mark_ratio, background):
                union = union_regions(regions[i], regions[j])
                regions = [r for k, r in enumerate(regions) if k not in (i, j)]
                regions.append(union)
                regions.sort(key=lambda c: c.scan_key)
                merges += 1
                changed = True
                break
    return regions, merges


def merge_diacritics(
    components: List[ComponentRegion],
    max_gap: int = 4,
    color_tolerance: float = 48.0,
    mark_ratio: float = 0.35,
    background: Optional[Color] = None,
) -> List[ComponentRegion]:
    """Join dots of i/j (and similar marks) to their stems, repeated to a fixpoint.

    With a known ``background`` anti-aliased fringe pieces are rejoined
    first (see ``rejoin_fringes``), alternating with the mark merge until
    neither changes anything.
    """
    regions = sorted(components, key=lambda c: c.scan_key)
    merges = 0
    while True:
        before = len(regions)
        if background is not None:
            regions = rejoin_fringes(regions, background, color_tolerance)
        regions, count = _merge_marks(regions, max_gap, color_tolerance, mark_ratio, background)
        merges += count
        if len(regions) == before:
            break
    if merges:
        logger.debug(f"Merged {merges} diacritic marks")
    return regions


def _debug_color(index: int) -> Color:
    hue = (index * 0.618033988749895) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.75, 0.9)
    return int(r * 255), int(g * 255), int(b * 255)


def render_component_map(image: RasterImage, components: List[ComponentRegion]) -> RasterImage:
    """Debug view: every component painted in its own color with its bbox outlined."""
    canvas = np.full_like(image.pixels, 255)
    for number, region in enumerate(components):
        ys, xs = np.nonzero(region.mask)
        canvas[ys + region.min_y, xs + region.min_x] = _debug_color(number)
    picture = Image.fromarray(canvas)
    draw = ImageDraw.Draw(picture)
    for number, region in enumerate(components):
        draw.rectangle([region.min_x, region.min_y, region.max_x, region.max_y],
                       outline=_debug_color(number))
    return RasterImage.from_array(np.asarray(picture))
