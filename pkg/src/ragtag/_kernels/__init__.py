"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the
pure-Python fallback takes over. Both expose the same two primitives
(``hash_embed`` and ``Index``) with bit-identical numeric behaviour, so the
choice only affects speed. Set ``RAGTAG_BACKEND=python`` or
``RAGTAG_BACKEND=native`` to force one side (import fails if a forced native
backend is unavailable).
"""

from __future__ import annotations

import os

from . import _pyfallback

_requested = os.environ.get("RAGTAG_BACKEND", "").strip().lower()

if _requested == "python":
    _impl = _pyfallback
elif _requested == "native":
    from . import _native as _impl  # type: ignore[no-redef]
elif _requested:
    raise ImportError(f"unknown RAGTAG_BACKEND value: {_requested!r}")
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pyfallback

BACKEND: str = _impl.BACKEND
hash_embed = _impl.hash_embed
Index = _impl.Index


def backend_modules() -> dict:
    """All importable backend modules keyed by name (for tests and benchmarks)."""
    modules = {"python": _pyfallback}
    try:
        from . import _native

        modules["native"] = _native
    except ImportError:
        pass
    return modules
