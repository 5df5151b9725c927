"""
Decoding of uploaded word cloud images
"""
import hashlib
import json
import logging
from typing import Any, Dict, Optional, Union

from django.core.exceptions import ValidationError

from WordCloudDJ.config import PipelineConfig
from raster.services import decode_png
from sizing.services import decode_cloud
from .models import DecodedCloud

logger = logging.getLogger(__name__)


class CloudUploadService:
    """Turns an uploaded PNG into a stored DecodedCloud."""

    @staticmethod
    def parse_config(raw: Optional[Union[str, Dict[str, Any]]]) -> PipelineConfig:
        base = PipelineConfig.from_settings()
        if raw in (None, "", {}):
            return base
        if isinstance(raw, str):
            try:
                raw = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ValidationError(f"config is not valid JSON: {e}", code="config") from e
        return PipelineConfig.from_dict(raw, base=base)

    @classmethod
    def decode_upload(cls, data: bytes, name: str = "", config: Optional[PipelineConfig] = None) -> DecodedCloud:
        config = config or PipelineConfig.from_settings()
        source = name or "upload"
        image = decode_png(data, source=source)
        cloud = decode_cloud(image, config, source=source)
        record = DecodedCloud.objects.create(
            name=name,
            image_sha256=hashlib.sha256(data).hexdigest(),
            width=image.width,
            height=image.height,
            background=cloud.meta["background"],
            config_hash=cloud.meta["config_hash"],
            words=[word.to_dict() for word in cloud.words],
        )
        logger.info(f"Stored decoded cloud {record.id} ({len(cloud.words)} words)")
        return record
