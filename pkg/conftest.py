"""pytest wiring: configure Django the way manage.py does and mirror
diffdisc_lab.test_runner.FastByDefaultRunner (tests tagged "slow" only run
when requested, here with --slow)."""
import os

import django
import pytest

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'diffdisc_lab.settings')
django.setup()


def pytest_addoption(parser):
    parser.addoption('--slow', action='store_true', default=False,
                     help='also run tests tagged "slow" (Monte Carlo acceptance checks)')


def _tags(item):
    tags = set(getattr(getattr(item, 'obj', None), 'tags', ()) or ())
    tags |= set(getattr(getattr(item, 'cls', None), 'tags', ()) or ())
    return tags


def pytest_collection_modifyitems(config, items):
    if config.getoption('--slow'):
        return
    skip_slow = pytest.mark.skip(reason='tagged "slow"; run with --slow')
    for item in items:
        if 'slow' in _tags(item):
            item.add_marker(skip_slow)
