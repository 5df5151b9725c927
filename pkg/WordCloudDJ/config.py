"""
Effective decoder configuration.

Defaults come from ``settings.CLOUDDECODE`` (itself overridable from the
environment), then a JSON config file, then command-line flags.
"""
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Optional, Tuple

from django.conf import settings
from django.core.exceptions import ValidationError

logger = logging.getLogger(__name__)

OUTPUT_FORMATS = ("json", "csv")
JOIN_RULES = ("color", "chroma")
RESAMPLE_MODES = ("nearest", "pool")
CALIBRATION_MODES = ("word", "alphabet")


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the decode pipeline, validated on construction."""
    connectivity: int = 8
    color_tolerance: float = 48.0
    min_pixel_count: int = 4
    merge_max_gap: int = 4
    merge_mark_ratio: float = 0.35
    font: str = "default"
    alphabet: str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    ref_size: int = 32
    render_size: int = 64
    confidence_floor: float = 0.35
    scale_mode: str = "chain"
    tau: float = 3.0
    k: Optional[float] = None
    color_scale: float = 60.0
    output_format: str = "json"
    join_rule: str = "color"
    resample: str = "nearest"
    variant_sizes: Tuple[int, ...] = (12, 14, 16, 19, 23, 28, 34, 42, 52)
    hue_tolerance: Optional[float] = 40.0
    gap_ratio: Optional[float] = 0.3
    baseline_check: bool = True
    calibration: str = "word"

    def __post_init__(self):
        if isinstance(self.variant_sizes, list):
            object.__setattr__(self, "variant_sizes", tuple(self.variant_sizes))
        errors = {}

        def check(name, ok, message):
            if not ok:
                errors[name] = f"{name} {message}, got {getattr(self, name)!r}"

        check("connectivity", self.connectivity in (4, 8) and _is_int(self.connectivity), "must be 4 or 8")
        check("color_tolerance", _is_number(self.color_tolerance) and 0 <= self.color_tolerance <= 255,
              "must be a number in [0, 255]")
        check("min_pixel_count", _is_int(self.min_pixel_count) and self.min_pixel_count >= 1,
              "must be an integer >= 1")
        check("merge_max_gap", _is_int(self.merge_max_gap) and self.merge_max_gap >= 0,
              "must be an integer >= 0")
        check("merge_mark_ratio", _is_number(self.merge_mark_ratio) and 0 < self.merge_mark_ratio <= 1,
              "must be in (0, 1]")
        check("font", isinstance(self.font, str) and self.font != "", "must be a font path or 'default'")
        check("alphabet", isinstance(self.alphabet, str) and self.alphabet != ""
              and len(set(self.alphabet)) == len(self.alphabet) and not any(c.isspace() for c in self.alphabet),
              "must be a non-empty string of distinct visible characters")
        check("ref_size", _is_int(self.ref_size) and 8 <= self.ref_size <= 256, "must be an integer in [8, 256]")
        check("render_size", _is_int(self.render_size) and 8 <= self.render_size <= 512,
              "must be an integer in [8, 512]")
        check("confidence_floor", _is_number(self.confidence_floor) and 0 <= self.confidence_floor <= 1,
              "must be in [0, 1]")
        check("scale_mode", self.scale_mode in ("chain", "image"), "must be 'chain' or 'image'")
        check("tau", _is_number(self.tau) and self.tau >= 0, "must be a number >= 0")
        check("k", self.k is None or (_is_number(self.k) and self.k >= 1), "must be null or a number >= 1")
        check("color_scale", _is_number(self.color_scale) and self.color_scale > 0, "must be a number > 0")
        check("output_format", self.output_format in OUTPUT_FORMATS, f"must be one of {OUTPUT_FORMATS}")
        check("join_rule", self.join_rule in JOIN_RULES, f"must be one of {JOIN_RULES}")
        check("resample", self.resample in RESAMPLE_MODES, f"must be one of {RESAMPLE_MODES}")
        check("variant_sizes", isinstance(self.variant_sizes, tuple)
              and all(_is_int(s) and 6 <= s <= 256 for s in self.variant_sizes),
              "must be a list of integers in [6, 256]")
        check("hue_tolerance", self.hue_tolerance is None
              or (_is_number(self.hue_tolerance) and 0 <= self.hue_tolerance <= 255),
              "must be null or a number in [0, 255]")
        check("gap_ratio", self.gap_ratio is None or (_is_number(self.gap_ratio) and self.gap_ratio >= 0),
              "must be null or a number >= 0")
        check("baseline_check", isinstance(self.baseline_check, bool), "must be true or false")
        check("calibration", self.calibration in CALIBRATION_MODES, f"must be one of {CALIBRATION_MODES}")
        if errors:
            raise ValidationError(list(errors.values()), code="config")

    @classmethod
    def field_names(cls):
        return {f.name for f in fields(cls)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any], base: Optional["PipelineConfig"] = None) -> "PipelineConfig":
        """Apply ``data`` on top of ``base`` (built-in defaults when omitted)."""
        if not isinstance(data, dict):
            raise ValidationError("Config must be a JSON object", code="config")
        unknown = sorted(set(data) - cls.field_names())
        if unknown:
            raise ValidationError(f"Unknown config keys: {', '.join(unknown)}", code="config")
        values = asdict(base) if base is not None else {}
        values.update(data)
        return cls(**values)

    @classmethod
    def from_settings(cls) -> "PipelineConfig":
        """Load configuration from Django settings."""
        return cls.from_dict(dict(getattr(settings, "CLOUDDECODE", {})))

    @classmethod
    def from_file(cls, path, base: Optional["PipelineConfig"] = None) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as e:
                raise ValidationError(f"Config file {path} is not valid JSON: {e}", code="config") from e
        return cls.from_dict(data, base=base)

    @classmethod
    def resolve(cls, config_path: Optional[str] = None, **overrides) -> "PipelineConfig":
        """Settings, then the config file (``--config`` or CLOUDECODE_CONFIG), then non-None flags."""
        config = cls.from_settings()
        path = config_path or getattr(settings, "CLOUDECODE_CONFIG", "")
        if path:
            config = cls.from_file(path, base=config)
            logger.debug(f"Loaded config file {path}")
        flags = {key: value for key, value in overrides.items() if value is not None}
        return config.replace(**flags) if flags else config

    def replace(self, **changes) -> "PipelineConfig":
        return PipelineConfig.from_dict(changes, base=self)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
