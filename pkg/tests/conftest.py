import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from pointtrack._backend import available_backends  # noqa: E402

BACKENDS = available_backends()


@pytest.fixture(params=sorted(BACKENDS))
def kern(request):
    """Each importable kernel backend in turn."""
    return BACKENDS[request.param]
