"""Kernel backend selection.

The compiled Cython extension is preferred when importable; the
pure-numpy module is the fallback.  ``COLLECTIVE_FPF_BACKEND`` may pin
``python`` or ``compiled`` explicitly (``auto`` is the default), and
:func:`set_backend` overrides at runtime (used by tests and the
backend benchmark).
"""

from __future__ import annotations

import os

from . import _kernels_py
from .errors import ConfigError

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_MODES = ("auto", "python", "compiled")
_mode = os.environ.get("COLLECTIVE_FPF_BACKEND", "auto").lower()
if _mode not in _MODES:
    raise ConfigError(
        f"COLLECTIVE_FPF_BACKEND must be one of {_MODES}, got {_mode!r}")
if _mode == "compiled" and _compiled is None:
    raise ConfigError("COLLECTIVE_FPF_BACKEND=compiled but the extension is not built")


def available() -> dict[str, object]:
    out = {"python": _kernels_py}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out


def set_backend(mode: str) -> None:
    global _mode
    if mode not in _MODES:
        raise ConfigError(f"backend must be one of {_MODES}, got {mode!r}")
    if mode == "compiled" and _compiled is None:
        raise ConfigError("compiled backend requested but the extension is not built")
    _mode = mode


def active():
    """The kernel module in effect for this process."""
    if _mode == "python":
        return _kernels_py
    if _mode == "compiled":
        return _compiled
    return _compiled if _compiled is not None else _kernels_py


def active_name() -> str:
    return active().BACKEND_NAME
