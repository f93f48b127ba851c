"""Kernel backend selection.

Prefers the compiled extension when it imported cleanly; falls back to the
numpy implementation otherwise. LINGUALIGN_BACKEND=python|cython forces a
choice (forcing cython without the built extension is an error).
"""

import os

from . import _kernels_py

_forced = os.environ.get("LINGUALIGN_BACKEND", "").strip().lower()

if _forced == "python":
    kernels = _kernels_py
elif _forced == "cython":
    from . import _kernels as kernels  # noqa: F401  (raises if not built)
elif _forced:
    raise ValueError(f"unknown LINGUALIGN_BACKEND={_forced!r} (use 'python' or 'cython')")
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py

BACKEND_NAME = kernels.BACKEND_NAME
