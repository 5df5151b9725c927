from django.apps import AppConfig


class WordgraphConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'wordgraph'
    verbose_name = 'Word graph'
