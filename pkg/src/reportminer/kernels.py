"""Backend selection for the skip-gram training loop.

The compiled extension is used when importable; set ``REPORTMINER_PURE=1``
to force the numpy implementation.
"""
import os

from . import _sgns_py

if os.environ.get("REPORTMINER_PURE", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _sgns as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
sgns_sweep = _compiled.sgns_sweep if _compiled is not None else _sgns_py.sgns_sweep
python_sgns_sweep = _sgns_py.sgns_sweep
compiled_sgns_sweep = _compiled.sgns_sweep if _compiled is not None else None
