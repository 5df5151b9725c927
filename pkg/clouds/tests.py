from django.core.files.uploadedfile import SimpleUploadedFile
from django.test import TestCase
from rest_framework.test import APIClient

from evalgen.services import LayoutConfig, synthesize_cloud
from raster.services import RasterImage, encode_png
from .models import DecodedCloud


def png_upload(image, name="cloud.png"):
    return SimpleUploadedFile(name, encode_png(image), content_type="image/png")


class DecodeUploadTests(TestCase):
    def setUp(self):
        self.client = APIClient()

    def test_decode_single_word(self):
        image, _ = synthesize_cloud([("data", 48)], LayoutConfig(width=300, height=150, p_vertical=0.0), seed=1)
        response = self.client.post("/api/clouds/", {"image": png_upload(image)}, format="multipart")
        self.assertEqual(response.status_code, 201)
        [word] = response.data["words"]
        self.assertEqual(word["text"].lower(), "data")
        self.assertEqual(response.data["name"], "cloud.png")
        self.assertEqual(DecodedCloud.objects.count(), 1)

    def test_blank_image(self):
        response = self.client.post(
            "/api/clouds/",
            {"image": png_upload(RasterImage.blank(40, 30)), "name": "empty"},
            format="multipart",
        )
        self.assertEqual(response.status_code, 201)
        self.assertEqual(response.data["words"], [])
        self.assertEqual((response.data["width"], response.data["height"]), (40, 30))

    def test_config_override_changes_hash(self):
        plain = self.client.post("/api/clouds/", {"image": png_upload(RasterImage.blank(8, 8))}, format="multipart")
        tuned = self.client.post(
            "/api/clouds/",
            {"image": png_upload(RasterImage.blank(8, 8)), "config": '{"tau": 2.5}'},
            format="multipart",
        )
        self.assertEqual(tuned.status_code, 201)
        self.assertNotEqual(plain.data["config_hash"], tuned.data["config_hash"])

    def test_invalid_config(self):
        response = self.client.post(
            "/api/clouds/",
            {"image": png_upload(RasterImage.blank(8, 8)), "config": '{"tau": -1}'},
            format="multipart",
        )
        self.assertEqual(response.status_code, 400)
        self.assertIn("tau", response.data["error"])

    def test_not_a_png(self):
        upload = SimpleUploadedFile("notes.png", b"plain text", content_type="image/png")
        response = self.client.post("/api/clouds/", {"image": upload}, format="multipart")
        self.assertEqual(response.status_code, 400)
        self.assertIn("error", response.data)
        self.assertEqual(DecodedCloud.objects.count(), 0)

    def test_missing_image(self):
        response = self.client.post("/api/clouds/", {"name": "nothing"}, format="multipart")
        self.assertEqual(response.status_code, 400)


class DecodedCloudViewTests(TestCase):
    def setUp(self):
        self.client = APIClient()
        self.cloud = DecodedCloud.objects.create(
            name="fixture",
            image_sha256="0" * 64,
            width=200,
            height=100,
            background=[255, 255, 255],
            config_hash="f" * 64,
            words=[
                {"text": "small", "weight": 10.0, "raw_size": 40.0, "bbox": [0, 0, 30, 10],
                 "orientation": "horizontal", "confidence": 0.9},
                {"text": "large", "weight": 30.0, "raw_size": 360.0, "bbox": [0, 20, 90, 30],
                 "orientation": "horizontal", "confidence": 0.95},
            ],
        )

    def test_list_and_retrieve(self):
        listing = self.client.get("/api/clouds/")
        self.assertEqual(listing.status_code, 200)
        self.assertEqual(len(listing.data), 1)
        detail = self.client.get(f"/api/clouds/{self.cloud.id}/")
        self.assertEqual(detail.data["words"][1]["text"], "large")

    def test_redesign_svg(self):
        response = self.client.get(f"/api/clouds/{self.cloud.id}/redesign/")
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response["Content-Type"], "image/svg+xml")
        svg = response.content.decode()
        self.assertLess(svg.index(">large</text>"), svg.index(">small</text>"))

    def test_export_csv(self):
        response = self.client.get(f"/api/clouds/{self.cloud.id}/export/", {"format": "csv"})
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.content.decode(), "text,weight\nlarge,30.0\nsmall,10.0\n")

    def test_export_json(self):
        response = self.client.get(f"/api/clouds/{self.cloud.id}/export/")
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()["meta"]["config_hash"], "f" * 64)

    def test_export_unknown_format(self):
        response = self.client.get(f"/api/clouds/{self.cloud.id}/export/", {"format": "xml"})
        self.assertEqual(response.status_code, 400)

    def test_updates_not_allowed(self):
        response = self.client.put(f"/api/clouds/{self.cloud.id}/", {"name": "x"}, format="json")
        self.assertEqual(response.status_code, 405)

    def test_delete(self):
        response = self.client.delete(f"/api/clouds/{self.cloud.id}/")
        self.assertEqual(response.status_code, 204)
        self.assertFalse(DecodedCloud.objects.exists())
