import importlib.util
import os
import sys

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# the repository root is the package itself
if 'pseudosphere' not in sys.modules:
    try:
        import pseudosphere
    except ImportError:
        spec = importlib.util.spec_from_file_location('pseudosphere', os.path.join(ROOT, '__init__.py'), submodule_search_locations = [ROOT])
        module = importlib.util.module_from_spec(spec)
        sys.modules['pseudosphere'] = module
        spec.loader.exec_module(module)


@pytest.fixture(scope = 'session')
def mkdv():
    from pseudosphere import models
    return models.load(models.MKDV_MODEL)


@pytest.fixture(scope = 'session')
def sine_gordon():
    from pseudosphere import models
    return models.load(models.SINE_GORDON_MODEL)
