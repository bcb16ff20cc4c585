from pathlib import Path
from decouple import config, Csv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent.parent

# No request handling happens in this project; the key only satisfies Django's checks
SECRET_KEY = config("SECRET_KEY", default="odflow-insecure-local-key")

ALLOWED_HOSTS = config("ALLOWED_HOSTS", default="", cast=Csv())


# Application definition

DJANGO_APPS = [
    "django.contrib.contenttypes",
]

LOCAL_APPS = [
    "apps.common",
    "apps.geo",
    "apps.cdr",
    "apps.places",
    "apps.od",
    "apps.transit",
    "apps.analysis",
    "apps.synth",
    "apps.pipeline",
]

INSTALLED_APPS = DJANGO_APPS + LOCAL_APPS

# All inputs and outputs are files; nothing is persisted in a database
DATABASES = {}

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# Pipeline defaults. Every default equals the value stated by the method's
# authors; each one can be overridden from the environment or a .env file.
ODFLOW = {
    "DELTA_D_M": config("ODFLOW_DELTA_D_M", default=2000.0, cast=float),
    "DELTA_T_MIN": config("ODFLOW_DELTA_T_MIN", default=20.0, cast=float),
    "FREQUENT_THRESHOLD_MIN": config(
        "ODFLOW_FREQUENT_THRESHOLD_MIN", default=60.0, cast=float
    ),
    "RADIUS_M": config("ODFLOW_RADIUS_M", default=1000.0, cast=float),
    "MIN_SHARE": config("ODFLOW_MIN_SHARE", default=0.15, cast=float),
    "MAX_ITER": config("ODFLOW_MAX_ITER", default=50, cast=int),
    "TRANSFER_MIN": config("ODFLOW_TRANSFER_MIN", default=45.0, cast=float),
    "MARKET_SHARE": config("ODFLOW_MARKET_SHARE", default=0.453, cast=float),
    "PENETRATION": config("ODFLOW_PENETRATION", default=1.44, cast=float),
    # empty means "use the share measured from the input data"
    "FREQUENT_SHARE": config(
        "ODFLOW_FREQUENT_SHARE",
        default="",
        cast=lambda v: float(v) if v else None,
    ),
    "FALLBACK_FREQUENT_SHARE": 0.34,
    "TIMEZONE": config("ODFLOW_TIMEZONE", default="Asia/Singapore"),
    "WORKERS": config("ODFLOW_WORKERS", default=1, cast=int),
    "MAX_MALFORMED_FRACTION": config(
        "ODFLOW_MAX_MALFORMED_FRACTION", default=0.01, cast=float
    ),
    "CSV_CHUNK_ROWS": config("ODFLOW_CSV_CHUNK_ROWS", default=1_000_000, cast=int),
    "TOP_K": config("ODFLOW_TOP_K", default=50, cast=int),
    "INTRA_SAMPLES": config("ODFLOW_INTRA_SAMPLES", default=100_000, cast=int),
    "SEED": config("ODFLOW_SEED", default=0, cast=int),
}


# Structured Logging - No file logging, all to stdout for container environments
LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "json": {
            "format": '{"level": "%(levelname)s", "timestamp": "%(asctime)s", "logger": "%(name)s", "message": "%(message)s", "module": "%(module)s"}',
        },
        "simple": {
            "()": "logging.Formatter",
            "format": "\033[32m%(levelname)s\033[0m:     \033[36m%(name)s\033[0m - %(message)s",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "simple",
            "stream": "ext://sys.stdout",
        },
        "error_console": {
            "class": "logging.StreamHandler",
            "formatter": "json",
            "level": "ERROR",
            "stream": "ext://sys.stderr",
        },
    },
    "loggers": {
        "django": {
            "handlers": ["console"],
            "level": "WARNING",
            "propagate": False,
        },
        "apps": {
            "handlers": ["console", "error_console"],
            "level": config("ODFLOW_LOG_LEVEL", default="INFO"),
            "propagate": False,
        },
    },
    "root": {
        "handlers": ["console", "error_console"],
        "level": "WARNING",
    },
}
