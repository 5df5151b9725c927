from django.contrib import admin
from .models import DecodedCloud


@admin.register(DecodedCloud)
class DecodedCloudAdmin(admin.ModelAdmin):
    list_display = ['id', 'name', 'width', 'height', 'config_hash', 'created_at']
    list_filter = ['created_at']
    search_fields = ['name', 'image_sha256']
    readonly_fields = ['image_sha256', 'config_hash', 'words', 'created_at']
