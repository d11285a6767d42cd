"""
Django settings for the afex_explainer project.

The project has no database and no HTTP surface: Django provides the app
registry, management commands, the template engine (SVG plots) and the
test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path

from afex_explainer.env import getEnvConfig

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

envConfig = getEnvConfig()

SECRET_KEY = envConfig.DJANGO_SECRET_KEY

DEBUG = envConfig.DJANGO_DEBUG

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "autodiff.apps.AutodiffConfig",
    "basis.apps.BasisConfig",
    "weighting.apps.WeightingConfig",
    "oracle.apps.OracleConfig",
    "trainer.apps.TrainerConfig",
    "explain.apps.ExplainConfig",
    "cli_io.apps.CliIoConfig",
]

TEMPLATES = [
    {
        "BACKEND": "django.template.backends.django.DjangoTemplates",
        "DIRS": [],
        "APP_DIRS": True,
        "OPTIONS": {},
    },
]


# No database: only SimpleTestCase is used and nothing is persisted through the ORM.
DATABASES = {}


USE_I18N = False

USE_TZ = True
TIME_ZONE = "UTC"


# Defaults for output written by the management commands
AFEX_OUTPUT_DIR = BASE_DIR / envConfig.AFEX_OUTPUT_DIR


LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "simple": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "simple",
        },
    },
    "loggers": {
        app: {"handlers": ["console"], "level": envConfig.AFEX_LOG_LEVEL, "propagate": False}
        for app in ("autodiff", "basis", "weighting", "oracle", "trainer", "explain", "cli_io")
    },
}
