from django.apps import AppConfig


class OdConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "apps.od"
