"""Selects compiled kernels when the extension is importable.

Set ``KINEGRAPH_PURE=1`` to force the numpy fallback (used by the benchmark
and by tests that compare the two implementations).
"""

from __future__ import annotations

import os

from . import _kernels_py

_compiled = None
if os.environ.get("KINEGRAPH_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        _compiled = None

HAVE_COMPILED = _compiled is not None


def backend_name() -> str:
    return "compiled" if HAVE_COMPILED else "pure"


def _pick(name: str):
    if _compiled is not None and hasattr(_compiled, name):
        return getattr(_compiled, name)
    return getattr(_kernels_py, name)


power_sum = _pick("power_sum")
diffuse_iter = _pick("diffuse_iter")
jacobi_eigh = _pick("jacobi_eigh")
make_micro_loss = _pick("make_micro_loss")
