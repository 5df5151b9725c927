from django.apps import AppConfig


class GlyphConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'glyph'
    verbose_name = 'Glyph recognition'
