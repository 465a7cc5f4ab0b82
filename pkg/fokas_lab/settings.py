"""
Django settings for fokas_lab project.

The project has no HTTP surface: Django provides configuration, the app
registry, the run ledger and the management-command/test runners.
"""

from pathlib import Path
from dotenv import load_dotenv
import os

load_dotenv()

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


SECRET_KEY = os.getenv(
    "DJANGO_SECRET_KEY", "fokas-lab-local-only-7c1e0b2a9d4f"
)

DEBUG = os.getenv("DEBUG", "True").lower() in ("1", "true", "yes")

ALLOWED_HOSTS = [h.strip() for h in (os.getenv("ALLOWED_HOSTS") or "localhost").split(",")]


# Application definition

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "common",
    "spectral",
    "rhp",
    "oracle",
    "pipeline",
]

MIDDLEWARE = []


# Database

_db_name = os.getenv("DB_NAME")
if _db_name:
    DATABASES = {
        "default": {
            "ENGINE": "django.db.backends.postgresql",
            "NAME": _db_name,
            "USER": os.getenv("DB_USER", ""),
            "PASSWORD": os.getenv("DB_PASSWORD", ""),
            "HOST": os.getenv("DB_HOST", "localhost"),
            "PORT": os.getenv("DB_PORT", "5432"),
            "OPTIONS": {"connect_timeout": 10},
        }
    }
else:
    os.makedirs(BASE_DIR / "data", exist_ok=True)
    DATABASES = {
        "default": {
            "ENGINE": "django.db.backends.sqlite3",
            "NAME": BASE_DIR / "data" / "db.sqlite3",
        }
    }


LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"


# Numerical defaults. RunConfig layers config files and --set overrides on top.
FOKAS_DEFAULTS = {
    "x_max": float(os.getenv("FOKAS_X_MAX", "20")),
    "L": float(os.getenv("FOKAS_L", "0.1")),
    "truncation_radius": float(os.getenv("FOKAS_TRUNCATION_RADIUS", "8")),
    "nodes_per_ray": int(os.getenv("FOKAS_NODES_PER_RAY", "48")),
    "rtol": float(os.getenv("FOKAS_RTOL", "1e-10")),
    "amplitude_guard": float(os.getenv("FOKAS_AMPLITUDE_GUARD", "0.5")),
    "output_dir": os.getenv("FOKAS_OUTPUT_DIR", str(BASE_DIR / "runs")),
    "seed": int(os.getenv("FOKAS_SEED", "0")),
    "hx": float(os.getenv("FOKAS_HX", "0.05")),
    "hy": float(os.getenv("FOKAS_HY", "1e-4")),
}

# Spread spectral sweeps over celery workers instead of running them inline.
FOKAS_DISPATCH_SWEEPS = os.getenv("FOKAS_DISPATCH_SWEEPS", "false").lower() == "true"
FOKAS_SWEEP_CHUNK = int(os.getenv("FOKAS_SWEEP_CHUNK", "64"))


LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "root": {
        "handlers": ["console"],
        "level": os.getenv("FOKAS_LOG_LEVEL", "INFO"),
    },
}


# Celery configuration
CELERY_BROKER_URL = os.getenv("CELERY_BROKER_URL", "redis://localhost:6379/0")
CELERY_RESULT_BACKEND = os.getenv("CELERY_RESULT_BACKEND", CELERY_BROKER_URL)
CELERY_TASK_ALWAYS_EAGER = os.getenv(
    "CELERY_TASK_ALWAYS_EAGER", "false").lower() == "true"
CELERY_TASK_TIME_LIMIT = 30 * 60
CELERY_TASK_SOFT_TIME_LIMIT = 25 * 60
CELERY_ACCEPT_CONTENT = ["json"]
CELERY_TASK_SERIALIZER = "json"
CELERY_RESULT_SERIALIZER = "json"
