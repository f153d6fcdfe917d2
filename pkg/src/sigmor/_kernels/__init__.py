"""Backend selection for the time-stepping kernels.

The compiled Cython extension is used when it imports cleanly; otherwise
the pure-numpy implementation takes over. SIGMOR_BACKEND=python|compiled
forces a backend (forcing `compiled` raises if the extension is missing).

`benchmarks/bench_backends.py` compares the two.
"""

import os

from . import _numpy as _python_backend

_FORCED = os.environ.get("SIGMOR_BACKEND", "").strip().lower()
if _FORCED not in ("", "python", "compiled"):
    raise ImportError(
        f"SIGMOR_BACKEND must be 'python' or 'compiled', got {_FORCED!r}")

if _FORCED == "python":
    _active = _python_backend
else:
    try:
        from . import _stepper as _active  # type: ignore[no-redef]
    except ImportError:
        if _FORCED == "compiled":
            raise
        _active = _python_backend

BACKEND_NAME = _active.BACKEND_NAME
simulate_dense = _active.simulate_dense
simulate_csr = _active.simulate_csr


def get_backend(name: str):
    """Return a specific backend module (for tests and benchmarks)."""
    if name == "python":
        return _python_backend
    if name == "compiled":
        from . import _stepper
        return _stepper
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list:
    names = ["python"]
    try:
        from . import _stepper  # noqa: F401
        names.append("compiled")
    except ImportError:
        pass
    return names
