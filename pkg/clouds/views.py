import logging

from django.core.exceptions import ValidationError
from django.http import HttpResponse
from drf_spectacular.utils import OpenApiParameter, extend_schema
from rest_framework import status, viewsets
from rest_framework.decorators import action
from rest_framework.parsers import JSONParser, MultiPartParser
from rest_framework.response import Response

from WordCloudDJ.exceptions import CloudDecodeError
from cli.services import error_message, render_bar_chart
from .models import DecodedCloud
from .serializers import DecodedCloudSerializer, DecodeRequestSerializer
from .services import CloudUploadService

logger = logging.getLogger(__name__)


class DecodedCloudViewSet(viewsets.ModelViewSet):
    queryset = DecodedCloud.objects.all()
    serializer_class = DecodedCloudSerializer
    parser_classes = [MultiPartParser, JSONParser]
    http_method_names = ["get", "post", "delete", "head", "options"]

    @extend_schema(
        summary="Decode a word cloud",
        description="Upload a PNG word cloud; the decoded (word, weight) records are stored and returned.",
        request={"multipart/form-data": DecodeRequestSerializer},
        responses={201: DecodedCloudSerializer},
    )
    def create(self, request, *args, **kwargs):
        payload = DecodeRequestSerializer(data=request.data)
        payload.is_valid(raise_exception=True)
        upload = payload.validated_data["image"]
        try:
            config = CloudUploadService.parse_config(payload.validated_data.get("config"))
            record = CloudUploadService.decode_upload(
                upload.read(),
                name=payload.validated_data.get("name") or upload.name,
                config=config,
            )
        except ValidationError as e:
            return Response({"error": error_message(e)}, status=status.HTTP_400_BAD_REQUEST)
        except CloudDecodeError as e:
            logger.warning(f"Upload {upload.name} could not be decoded: {e}")
            return Response({"error": str(e)}, status=status.HTTP_400_BAD_REQUEST)
        return Response(DecodedCloudSerializer(record).data, status=status.HTTP_201_CREATED)

    @extend_schema(
        summary="Bar chart redesign",
        description="The decoded words as a static SVG bar chart, heaviest first.",
        responses={(200, "image/svg+xml"): str},
    )
    @action(detail=True, methods=["get"])
    def redesign(self, request, pk=None):
        cloud = self.get_object()
        svg = render_bar_chart(cloud.to_cloud_data(), title=cloud.name or "Decoded word cloud")
        return HttpResponse(svg, content_type="image/svg+xml")

    @extend_schema(
        summary="Export decoded words",
        parameters=[
            OpenApiParameter(
                name="format",
                type=str,
                enum=["json", "csv"],
                default="json",
                description="csv keeps only text and weight",
            ),
        ],
        responses={(200, "text/csv"): str, (200, "application/json"): DecodedCloudSerializer},
    )
    @action(detail=True, methods=["get"])
    def export(self, request, pk=None):
        cloud = self.get_object()
        output_format = request.query_params.get("format", "json")
        if output_format not in ("json", "csv"):
            return Response(
                {"error": "Invalid format. Use json or csv"},
                status=status.HTTP_400_BAD_REQUEST
            )
        data = cloud.to_cloud_data()
        content_type = "text/csv" if output_format == "csv" else "application/json"
        response = HttpResponse(data.render(output_format), content_type=content_type)
        filename = f"cloud-{cloud.id}.{output_format}"
        response["Content-Disposition"] = f'attachment; filename="{filename}"'
        return response
