from rest_framework import serializers

from .models import DecodedCloud


class DecodedWordSerializer(serializers.Serializer):
    text = serializers.CharField()
    weight = serializers.FloatField()
    raw_size = serializers.FloatField()
    bbox = serializers.ListField(child=serializers.IntegerField(), min_length=4, max_length=4)
    orientation = serializers.ChoiceField(choices=["horizontal", "vertical"])
    confidence = serializers.FloatField()


class DecodedCloudSerializer(serializers.ModelSerializer):
    words = DecodedWordSerializer(many=True, read_only=True)

    class Meta:
        model = DecodedCloud
        fields = ["id", "name", "image_sha256", "width", "height", "background", "config_hash", "words", "created_at"]
        read_only_fields = fields


class DecodeRequestSerializer(serializers.Serializer):
    image = serializers.FileField()
    name = serializers.CharField(max_length=255, required=False, allow_blank=True)
    config = serializers.JSONField(required=False, help_text="Pipeline overrides, e.g. {\"tau\": 2.5}")
