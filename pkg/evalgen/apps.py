from django.apps import AppConfig


class EvalgenConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'evalgen'
    verbose_name = 'Cloud synthesis and evaluation'
