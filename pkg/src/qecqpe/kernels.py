"""Kernel backend selection: compiled extension if importable, NumPy otherwise.

Set QECQPE_KERNELS=python (or =compiled) to force a backend; forcing
``compiled`` when the extension is missing raises at import time rather than
silently degrading.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py

try:
    from . import _kernels as _compiled  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - build-environment dependent
    _compiled = None

HAVE_COMPILED = _compiled is not None


def select_backend(name: str | None = None) -> ModuleType:
    name = name or os.environ.get("QECQPE_KERNELS", "")
    if name in ("", "auto"):
        return _compiled if HAVE_COMPILED else _kernels_py
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if not HAVE_COMPILED:
            raise ImportError("compiled kernels requested but the extension is not built")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r} (want auto|python|compiled)")


_backend = select_backend()
BACKEND_NAME = "compiled" if _backend is _compiled else "python"

apply_1q = _backend.apply_1q
apply_diag_1q = _backend.apply_diag_1q
apply_x = _backend.apply_x
apply_2q = _backend.apply_2q
apply_cx = _backend.apply_cx
apply_diag_2q = _backend.apply_diag_2q
prob_one = _backend.prob_one
project = _backend.project
norm_sq = _backend.norm_sq
apply_x_mask = _backend.apply_x_mask
zmeas_prob = _backend.zmeas_prob
zmeas_collapse = _backend.zmeas_collapse
xmeas_prob = _backend.xmeas_prob
xmeas_collapse = _backend.xmeas_collapse
