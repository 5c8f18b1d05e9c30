"""Kernel backend selection.

The compiled extension is preferred when present; the NumPy fallback is
always available.  Set ``CFKMER_KERNEL=python`` to force the fallback (used
by the equivalence tests and the benchmark).
"""
import os

from cfkmer._kernels._python import new_carry
from cfkmer._kernels import _python

if os.environ.get("CFKMER_KERNEL", "").lower() == "python":
    consume_excursions = _python.consume_excursions
    BACKEND = "python"
else:
    try:
        from cfkmer._kernels import _native

        consume_excursions = _native.consume_excursions
        BACKEND = "native"
    except ImportError:
        consume_excursions = _python.consume_excursions
        BACKEND = "python"

__all__ = ["consume_excursions", "new_carry", "BACKEND"]
