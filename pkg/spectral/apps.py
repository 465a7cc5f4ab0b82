from django.apps import AppConfig


class SpectralConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'spectral'

    def ready(self):
        """Register the sweep tasks with celery"""
        import spectral.tasks  # noqa: F401
