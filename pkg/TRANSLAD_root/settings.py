"""
Django settings for the TRANSLAD project.

TRANSLAD learns per-scene normality by translating video frames into
semantic segmentation maps and optical-flow magnitude maps, and scores
test frames by their translation error. Django provides the settings,
the management commands that make up the pipeline, logging and the
test runner; there is no web surface.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from pathlib import Path
from decouple import config, Csv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='django-insecure-translad-batch-only')

DEBUG = config('DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = config('ALLOWED_HOSTS', default='localhost,127.0.0.1', cast=Csv())


# Application definition

INSTALLED_APPS = [
    'rest_framework',
    'corpora',
    'targets',
    'translator',
    'scoring',
    'evaluation',
    'synth',
    'pipeline',
]

# Serializers are used for config validation only.
REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
    'DEFAULT_AUTHENTICATION_CLASSES': [],
    'DEFAULT_PERMISSION_CLASSES': [],
}

# No tables: every artifact lives in the corpus root or the run directory.
DATABASES = {}

USE_TZ = True
TIME_ZONE = 'UTC'

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Pipeline defaults: 224x224 frames, dt=1 flow, Adam, lr 0.005 halved every 10 epochs,
# 9 patches, 3x3 opening, Savitzky-Golay window 41 / order 1.

TRANSLAD_RUN_DIR = config('TRANSLAD_RUN_DIR', default=str(BASE_DIR / 'runs' / 'default'))

TRANSLAD_FRAME_SIDE = config('TRANSLAD_FRAME_SIDE', default=224, cast=int)

TRANSLAD_WORKERS = config('TRANSLAD_WORKERS', default=4, cast=int)

TRANSLAD_PRETRAINED_ENCODER = config('TRANSLAD_PRETRAINED_ENCODER', default=True, cast=bool)

TRANSLAD_DEVICE = config('TRANSLAD_DEVICE', default='cpu')

TRANSLAD_REFERENCE_SCENE = BASE_DIR / 'synth' / 'scenes' / 'reference.yaml'

# Pluggable backends, resolved with django.utils.module_loading.import_string
TRANSLAD_SEGMENTATION_ORACLES = {
    'analytic': 'synth.oracles.AnalyticSegmentationOracle',
    'maskrcnn': 'targets.oracles.MaskRCNNOracle',
}

TRANSLAD_FLOW_ESTIMATORS = {
    'farneback': 'targets.flow.FarnebackEstimator',
    'analytic': 'synth.oracles.AnalyticFlowEstimator',
}

# Farneback parameters: pyr_scale, levels, winsize, iterations, poly_n, poly_sigma, flags
TRANSLAD_FARNEBACK_PARAMS = [0.5, 3, 15, 3, 5, 1.2, 0]


LOG_LEVEL = config('LOG_LEVEL', default='DEBUG' if DEBUG else 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': LOG_LEVEL,
    },
    'loggers': {
        'matplotlib': {'level': 'WARNING'},
        'PIL': {'level': 'WARNING'},
    },
}
