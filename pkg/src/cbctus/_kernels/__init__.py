"""Classification kernel backend selection.

The compiled Cython kernel is preferred when it was built; otherwise (or
when CBCTUS_PURE_PYTHON is set) the vectorized numpy implementation is
used.  Both expose the same `classify` signature.
"""

import os

from . import numpy_backend

BACKEND = "python"
classify = numpy_backend.classify

if not os.environ.get("CBCTUS_PURE_PYTHON"):
    try:
        from . import _native

        classify = _native.classify
        BACKEND = "native"
    except ImportError:
        pass

__all__ = ["classify", "BACKEND", "numpy_backend"]
