"""Kernel backend selection: compiled extension when importable, pure
Python otherwise. APDLBENCH_PURE_KERNELS=1 forces the pure twin."""

from __future__ import annotations

import os

if os.environ.get("APDLBENCH_PURE_KERNELS"):
    from . import _pykernels as kernels

    BACKEND_NAME = "pure-python (forced)"
else:
    try:
        from . import _ckernels as kernels  # type: ignore[no-redef]

        BACKEND_NAME = "compiled"
    except ImportError:
        from . import _pykernels as kernels  # type: ignore[no-redef]

        BACKEND_NAME = "pure-python"


def backend_name() -> str:
    return BACKEND_NAME
