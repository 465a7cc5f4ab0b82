from django.apps import AppConfig


class RhpConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'rhp'
