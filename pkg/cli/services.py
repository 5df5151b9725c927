"""
Helpers shared by the management commands: decoding files, writing
outputs, debug artifacts, the bar-chart redesign and error reporting.
"""
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from django.core.exceptions import ValidationError
from django.core.management.base import CommandError
from django.template.loader import render_to_string

from WordCloudDJ.exceptions import CloudDecodeError, ImageReadError
from WordCloudDJ.config import PipelineConfig
from raster.services import load_image, render_component_map, save_png
from sizing.services import CloudData, decode_stages

logger = logging.getLogger(__name__)

EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_PROCESSING = 3

CHART_WIDTH = 800
LABEL_WIDTH = 160
VALUE_WIDTH = 60
BAR_HEIGHT = 22
BAR_GAP = 8
CHART_MARGIN = 20
TITLE_HEIGHT = 32


def classify_error(exc: BaseException) -> Tuple[str, int]:
    """Map an exception to its (kind, exit code)."""
    if isinstance(exc, ValidationError):
        return "config", EXIT_CONFIG
    if isinstance(exc, (ImageReadError, FileNotFoundError, PermissionError, IsADirectoryError)):
        return "io", EXIT_IO
    if isinstance(exc, CloudDecodeError):
        return "processing", EXIT_PROCESSING
    if isinstance(exc, OSError):
        return "io", EXIT_IO
    return "processing", EXIT_PROCESSING


def error_message(exc: BaseException) -> str:
    if isinstance(exc, ValidationError):
        return "; ".join(exc.messages)
    return str(exc)


def fail(stderr, exc: BaseException) -> CommandError:
    """Write the one-line JSON error to ``stderr`` and build the CommandError to raise."""
    kind, code = classify_error(exc)
    message = error_message(exc)
    payload = {"error": kind, "message": message, "exit_code": code}
    stderr.write(json.dumps(payload, sort_keys=True))
    logger.error(f"{kind} failure: {message}", exc_info=code == EXIT_PROCESSING)
    return CommandError(message, returncode=code)


# (flag, config field, type, help)
PIPELINE_FLAGS = (
    ("--connectivity", "connectivity", int, "Pixel adjacency, 4 or 8"),
    ("--color-tolerance", "color_tolerance", float, "Max channel distance joining adjacent pixels"),
    ("--min-pixel-count", "min_pixel_count", int, "Drop components smaller than this"),
    ("--font", "font", str, "TrueType/OpenType path, or 'default'"),
    ("--alphabet", "alphabet", str, "Characters the glyph atlas knows"),
    ("--confidence-floor", "confidence_floor", float, "Minimum match score for a known letter"),
    ("--scale-mode", "scale_mode", str, "Edge weight scales: 'chain' or 'image'"),
    ("--tau", "tau", float, "Maximum edge weight that still extends a word"),
    ("--k", "k", float, "Sweep step in pixels (default: derived from glyph sizes)"),
    ("--color-scale", "color_scale", float, "Color difference normalizer"),
    ("--join-rule", "join_rule", str, "Pixel join test: 'color' (max-channel) or 'chroma'"),
    ("--resample", "resample", str, "Glyph scaling: 'nearest' or 'pool'"),
    ("--hue-tolerance", "hue_tolerance", float, "Max hue distance between letters of one word"),
    ("--gap-ratio", "gap_ratio", float, "Max letter gap as a share of the word height"),
    ("--calibration", "calibration", str, "Size calibration: 'word' or 'alphabet'"),
)


def add_pipeline_arguments(parser) -> None:
    parser.add_argument(
        '--config',
        help='JSON config file (default: $CLOUDECODE_CONFIG)',
    )
    for flag, dest, kind, text in PIPELINE_FLAGS:
        parser.add_argument(flag, dest=dest, type=kind, help=text)


def resolve_config(options: Dict[str, Any], **extra) -> PipelineConfig:
    overrides = {dest: options.get(dest) for _, dest, _, _ in PIPELINE_FLAGS}
    overrides.update(extra)
    return PipelineConfig.resolve(options.get("config"), **overrides)


def write_output(text: str, out: Optional[str], stdout) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        stdout.write(text, ending="")


def read_json_file(path) -> Any:
    """Load a JSON file; malformed content is a schema problem, missing files an I/O one."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path} is not valid JSON: {e}", code="invalid") from e


def write_debug(stages, debug_dir, stem: str, trace_records: List[dict]) -> Tuple[Path, Path]:
    """Component map PNG plus one JSON line per sweep step."""
    debug_dir = Path(debug_dir)
    debug_dir.mkdir(parents=True, exist_ok=True)
    map_path = debug_dir / f"{stem}.components.png"
    sweep_path = debug_dir / f"{stem}.sweep.jsonl"
    save_png(render_component_map(stages.image, stages.components), map_path)
    with open(sweep_path, "w", encoding="utf-8") as fh:
        for record in trace_records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return map_path, sweep_path


@dataclass
class DecodeJob:
    path: str
    config: PipelineConfig
    debug_dir: Optional[str] = None


def decode_file(job: DecodeJob) -> str:
    """Decode one image file and return the rendered output text."""
    image = load_image(job.path)
    records: List[dict] = []
    trace = records.append if job.debug_dir else None
    stages = decode_stages(image, job.config, source=os.path.basename(job.path), trace=trace)
    if job.debug_dir:
        paths = write_debug(stages, job.debug_dir, Path(job.path).stem, records)
        logger.info(f"Debug artifacts: {', '.join(str(p) for p in paths)}")
    return stages.cloud.render(job.config.output_format)


def init_worker() -> None:
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "WordCloudDJ.settings")
    import django

    django.setup()


def chart_bars(cloud: CloudData) -> List[Dict[str, Any]]:
    """Bars heaviest first; lengths are linear in weight, the heaviest spans the plot width."""
    plot_width = CHART_WIDTH - LABEL_WIDTH - VALUE_WIDTH - 2 * CHART_MARGIN
    if not cloud.words:
        return []
    top = max(word.weight for word in cloud.words)
    bars = []
    for rank, word in enumerate(cloud.words):
        length = word.weight * plot_width / top
        y = TITLE_HEIGHT + CHART_MARGIN + rank * (BAR_HEIGHT + BAR_GAP)
        bars.append({
            "label": word.text,
            "weight": round(word.weight, 2),
            "x": CHART_MARGIN + LABEL_WIDTH,
            "y": y,
            "length": round(length, 3),
            "text_y": y + BAR_HEIGHT // 2 + 5,
            "value_x": round(CHART_MARGIN + LABEL_WIDTH + length + 6, 3),
        })
    return bars


def render_bar_chart(cloud: CloudData, title: str = "Decoded word cloud") -> str:
    bars = chart_bars(cloud)
    height = TITLE_HEIGHT + 2 * CHART_MARGIN + max(len(bars), 1) * (BAR_HEIGHT + BAR_GAP)
    return render_to_string("cli/bar_chart.svg", {
        "title": title,
        "bars": bars,
        "width": CHART_WIDTH,
        "height": height,
        "bar_height": BAR_HEIGHT,
        "label_x": CHART_MARGIN + LABEL_WIDTH - 8,
        "axis_x": CHART_MARGIN + LABEL_WIDTH,
        "axis_top": TITLE_HEIGHT + CHART_MARGIN - BAR_GAP // 2,
        "axis_bottom": height - CHART_MARGIN + BAR_GAP // 2,
        "margin": CHART_MARGIN,
        "empty_y": TITLE_HEIGHT + CHART_MARGIN + BAR_HEIGHT // 2 + 5,
    })
