from django.urls import path, include
from rest_framework.routers import DefaultRouter
from .views import DecodedCloudViewSet

router = DefaultRouter()
router.register(r"clouds", DecodedCloudViewSet, basename="cloud")

urlpatterns = [
    path("", include(router.urls)),
]
