"""Backend selection for the hot kernels.

The compiled extension is used when importable. Set ``GERVE_BACKEND=python``
to force the numpy fallback, or ``GERVE_BACKEND=compiled`` to fail loudly
when the extension is missing.
"""

import os

from . import _kernels_py

_requested = os.environ.get("GERVE_BACKEND", "auto").lower()

if _requested not in ("auto", "compiled", "python"):
    raise ImportError(f"GERVE_BACKEND must be auto, compiled or python, got {_requested!r}")

_impl = _kernels_py
BACKEND = "python"
if _requested != "python":
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise

component_logpdf = _impl.component_logpdf
mixture_logpdf = _impl.mixture_logpdf
data_moments = _impl.data_moments
entropy_moments = _impl.entropy_moments

__all__ = [
    "BACKEND",
    "component_logpdf",
    "mixture_logpdf",
    "data_moments",
    "entropy_moments",
]
