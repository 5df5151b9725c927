from django.db import models

from sizing.services import CloudData


class DecodedCloud(models.Model):
    name = models.CharField(max_length=255, blank=True)
    image_sha256 = models.CharField(max_length=64, db_index=True)
    width = models.PositiveIntegerField()
    height = models.PositiveIntegerField()
    background = models.JSONField(default=list)
    config_hash = models.CharField(max_length=64)
    words = models.JSONField(default=list)
    created_at = models.DateTimeField(auto_now_add=True, editable=False)

    class Meta:
        ordering = ["-created_at", "-id"]
        indexes = [
            models.Index(fields=["config_hash"], name="clouds_config_hash_idx"),
        ]

    def __str__(self):
        return f"{self.name or self.image_sha256[:12]} ({len(self.words)} words)"

    def to_cloud_data(self) -> CloudData:
        return CloudData.from_dict({
            "words": self.words,
            "meta": {
                "source": self.name,
                "config_hash": self.config_hash,
                "image_size": [self.width, self.height],
                "background": self.background,
            },
        })
