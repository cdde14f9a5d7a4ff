"""Hot-loop dispatch: compiled extension when built, numpy fallback otherwise.

Set ``EDCAUSAL_PURE_PYTHON=1`` before import to force the fallback.
"""
import os

from . import _kernels_py as python_backend

compiled_backend = None
if os.environ.get("EDCAUSAL_PURE_PYTHON") != "1":
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

pairwise_entropy_diff = _impl.pairwise_entropy_diff
var_recursion = _impl.var_recursion
