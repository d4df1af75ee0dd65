"""Kernel backend selection.

The compiled extension (``softalign._kernels``) is preferred when it was
built; otherwise the numpy twin (``softalign._kernels_py``) backs the
package. ``SOFTALIGN_BACKEND=ext|python`` forces one side, which the test
suite and the benchmark use to compare both.
"""

from __future__ import annotations

import os

from . import _kernels_py


def _load_ext():
    from . import _kernels  # noqa: PLC0415 - optional compiled module

    return _kernels


def available_backends() -> dict:
    """Name -> kernel module for every backend importable here."""
    backends = {"python": _kernels_py}
    try:
        backends["ext"] = _load_ext()
    except ImportError:
        pass
    return backends


_forced = os.environ.get("SOFTALIGN_BACKEND", "auto").strip().lower()
if _forced in ("", "auto"):
    try:
        kernels = _load_ext()
    except ImportError:
        kernels = _kernels_py
elif _forced in ("ext", "c", "compiled"):
    kernels = _load_ext()
elif _forced in ("python", "py", "pure"):
    kernels = _kernels_py
else:
    raise ValueError(
        f"SOFTALIGN_BACKEND={_forced!r} not recognized (use 'auto', 'ext' or 'python')"
    )

BACKEND_NAME: str = kernels.NAME
