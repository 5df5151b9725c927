"""
Django settings for the WordCloudDJ project.

The decoder itself is a set of pure services; settings only carry the
pipeline defaults (``CLOUDDECODE``), the HTTP surface and the logging setup.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.1/ref/settings/
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Load .env file from the project root
load_dotenv(os.path.join(BASE_DIR, '.env'))


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = os.getenv('SECRET_KEY', 'django-insecure-wordcloud-decoder-dev-key-change-me')

# SECURITY WARNING: don't run with debug turned on in production!
DEBUG = os.getenv('DEBUG', 'True').lower() in ('true', '1', 'yes')

ALLOWED_HOSTS = ['127.0.0.1', 'localhost', '0.0.0.0', 'web']


# Application definition

INSTALLED_APPS = [
    'django.contrib.admin',
    'django.contrib.auth',
    'django.contrib.contenttypes',
    'django.contrib.sessions',
    'django.contrib.messages',
    'django.contrib.staticfiles',
    'WordCloudDJ',
    'raster',
    'glyph',
    'wordgraph',
    'sizing',
    'evalgen',
    'cli',
    'clouds',
    'rest_framework',
    'drf_spectacular',
    'drf_spectacular_sidecar',
]

REST_FRAMEWORK = {
    'DEFAULT_AUTHENTICATION_CLASSES': (
        'rest_framework.authentication.SessionAuthentication',
    ),
    'DEFAULT_PERMISSION_CLASSES': (
        'rest_framework.permissions.AllowAny',
    ),
    'DEFAULT_SCHEMA_CLASS': 'drf_spectacular.openapi.AutoSchema',
    'DEFAULT_RENDERER_CLASSES': [
        'rest_framework.renderers.JSONRenderer',
        'rest_framework.renderers.BrowsableAPIRenderer',
    ],
    'DEFAULT_PARSER_CLASSES': [
        'rest_framework.parsers.JSONParser',
        'rest_framework.parsers.FormParser',
        'rest_framework.parsers.MultiPartParser',
    ],
    # export/ takes ?format=json|csv itself
    'URL_FORMAT_OVERRIDE': None,
}

# Decoder pipeline defaults. Every key can be overridden from the environment
# (or .env) and then again by a JSON config file and command-line flags.
CLOUDDECODE = {
    'connectivity': int(os.getenv('CLOUDDECODE_CONNECTIVITY', 8)),
    'color_tolerance': float(os.getenv('CLOUDDECODE_COLOR_TOLERANCE', 48)),
    'min_pixel_count': int(os.getenv('CLOUDDECODE_MIN_PIXEL_COUNT', 4)),
    'merge_max_gap': int(os.getenv('CLOUDDECODE_MERGE_MAX_GAP', 4)),
    'merge_mark_ratio': float(os.getenv('CLOUDDECODE_MERGE_MARK_RATIO', 0.35)),
    'font': os.getenv('CLOUDDECODE_FONT', 'default'),
    'alphabet': os.getenv(
        'CLOUDDECODE_ALPHABET',
        'abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789',
    ),
    'ref_size': int(os.getenv('CLOUDDECODE_REF_SIZE', 32)),
    'render_size': int(os.getenv('CLOUDDECODE_RENDER_SIZE', 64)),
    'confidence_floor': float(os.getenv('CLOUDDECODE_CONFIDENCE_FLOOR', 0.35)),
    'scale_mode': os.getenv('CLOUDDECODE_SCALE_MODE', 'chain'),
    'tau': float(os.getenv('CLOUDDECODE_TAU', 3.0)),
    'k': float(os.getenv('CLOUDDECODE_K')) if os.getenv('CLOUDDECODE_K') else None,
    'color_scale': float(os.getenv('CLOUDDECODE_COLOR_SCALE', 60)),
    'output_format': os.getenv('CLOUDDECODE_OUTPUT_FORMAT', 'json'),
    'join_rule': os.getenv('CLOUDDECODE_JOIN_RULE', 'color'),
    'resample': os.getenv('CLOUDDECODE_RESAMPLE', 'nearest'),
    'variant_sizes': [
        int(size) for size in os.getenv('CLOUDDECODE_VARIANT_SIZES', '12,14,16,19,23,28,34,42,52').split(',')
        if size.strip()
    ],
    'hue_tolerance': float(os.getenv('CLOUDDECODE_HUE_TOLERANCE', 40)),
    'gap_ratio': float(os.getenv('CLOUDDECODE_GAP_RATIO', 0.3)),
    'baseline_check': os.getenv('CLOUDDECODE_BASELINE_CHECK', 'True').lower() in ('true', '1', 'yes'),
    'calibration': os.getenv('CLOUDDECODE_CALIBRATION', 'word'),
}

# Config file picked up by the management commands when --config is absent.
CLOUDECODE_CONFIG = os.getenv('CLOUDECODE_CONFIG', '')

MIDDLEWARE = [
    'django.middleware.security.SecurityMiddleware',
    'django.contrib.sessions.middleware.SessionMiddleware',
    'django.middleware.common.CommonMiddleware',
    'django.middleware.csrf.CsrfViewMiddleware',
    'django.contrib.auth.middleware.AuthenticationMiddleware',
    'django.contrib.messages.middleware.MessageMiddleware',
    'django.middleware.clickjacking.XFrameOptionsMiddleware',
]

ROOT_URLCONF = 'WordCloudDJ.urls'

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [
                'django.template.context_processors.request',
                'django.contrib.auth.context_processors.auth',
                'django.contrib.messages.context_processors.messages',
            ],
        },
    },
]

WSGI_APPLICATION = 'WordCloudDJ.wsgi.application'


# Database
# https://docs.djangoproject.com/en/5.1/ref/settings/#databases

DB_ENGINE = os.getenv('DB_ENGINE', 'django.db.backends.sqlite3')

if DB_ENGINE.endswith('sqlite3'):
    DATABASES = {
        'default': {
            'ENGINE': DB_ENGINE,
            'NAME': os.getenv('DB_NAME', str(BASE_DIR / 'wordcloud.sqlite3')),
        }
    }
else:
    DATABASES = {
        'default': {
            'ENGINE': DB_ENGINE,
            'NAME': os.getenv('DB_NAME', 'wordclouddb'),
            'USER': os.getenv('DB_USER', 'postgres'),
            'PASSWORD': os.getenv('DB_PASSWORD', ''),
            'HOST': os.getenv('DB_HOST', 'localhost'),
            'PORT': os.getenv('DB_PORT', '5432'),
        }
    }


AUTH_PASSWORD_VALIDATORS = [
    {
        'NAME': 'django.contrib.auth.password_validation.UserAttributeSimilarityValidator',
    },
    {
        'NAME': 'django.contrib.auth.password_validation.MinimumLengthValidator',
    },
]


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# Static files (CSS, JavaScript, Images)

STATIC_URL = 'static/'
STATIC_ROOT = os.path.join(BASE_DIR, 'staticfiles')

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': os.getenv('LOG_LEVEL', 'WARNING'),
    },
    'loggers': {
        name: {
            'handlers': ['console'],
            'level': os.getenv('LOG_LEVEL', 'WARNING'),
            'propagate': False,
        }
        for name in ('raster', 'glyph', 'wordgraph', 'sizing', 'evalgen', 'cli', 'clouds')
    },
}

# DRF Spectacular settings
SPECTACULAR_SETTINGS = {
    'TITLE': 'Word Cloud Decoder API',
    'DESCRIPTION': 'Decode bitmap word clouds into (word, weight) data and redesign them as bar charts',
    'VERSION': '1.0.0',
    'SERVE_INCLUDE_SCHEMA': False,
    'COMPONENT_SPLIT_REQUEST': True,
    'SCHEMA_PATH_PREFIX': '/api/',
}
