"""
Django settings for diffdisc_lab project.

The project has no web surface and no database: Django provides the settings
layer, logging configuration, the management-command CLI, form validation of
run configurations, and the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/6.0/ref/settings/
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# Never used for signing anything here, but Django refuses to start without one.
SECRET_KEY = os.environ.get('FDD_SECRET_KEY', 'diffdisc-lab-local-only')

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'core',
]

# No persistence: results are written as files, never stored.
DATABASES = {}


# Internationalization
# https://docs.djangoproject.com/en/6.0/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Logging
# https://docs.djangoproject.com/en/6.0/topics/logging/

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '%(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'core': {
            'handlers': ['console'],
            'level': os.environ.get('FDD_LOG_LEVEL', 'WARNING'),
            'propagate': False,
        },
    },
}


# Estimation defaults. Library functions carry the same literal defaults;
# only the command layer reads these.

FDD_SCHEMA_VERSION = '1.0'

FDD_DEFAULT_KERNEL = 'triangular'

FDD_MIN_FIRST_STAGE = 0.05

FDD_ALPHA = 0.05

FDD_BIN_WIDTH = 0.25

FDD_BOOTSTRAP_FAILURE_WARN = 0.10

FDD_WEAK_F_THRESHOLD = 4.0

FDD_N_JOBS = int(os.environ.get('FDD_N_JOBS', '1'))

FDD_SEED = int(os.environ.get('FDD_SEED', '0'))


# Tests
# Monte Carlo acceptance tests are tagged "slow" and only run with --tag slow.

TEST_RUNNER = 'diffdisc_lab.test_runner.FastByDefaultRunner'
