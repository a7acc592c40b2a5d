"""Hot-kernel dispatch: compiled extension when available, numpy otherwise.

Set QBOLTZ_FORCE_PY=1 to force the pure-python backend (used by the
benchmark and the parity tests).
"""

from __future__ import annotations

import os

from . import _kernels_py

_force_py = os.environ.get("QBOLTZ_FORCE_PY", "") not in ("", "0")

if not _force_py:
    try:
        from . import _core  # type: ignore[attr-defined]

        BACKEND = "compiled"
        collision_bracket = _core.collision_bracket
        memory_bracket_sum = _core.memory_bracket_sum
    except ImportError:
        BACKEND = "python"
        collision_bracket = _kernels_py.collision_bracket
        memory_bracket_sum = _kernels_py.memory_bracket_sum
else:
    BACKEND = "python"
    collision_bracket = _kernels_py.collision_bracket
    memory_bracket_sum = _kernels_py.memory_bracket_sum


def backend() -> str:
    return BACKEND
