"""Hot-kernel backend selection.

Two interchangeable backends implement the numeric kernels: a compiled
Cython extension (``_core``) and a pure-numpy reference (``_reference``).
The compiled one is picked when it imported cleanly; set METADIFF_KERNELS to
``python`` or ``compiled`` to force a backend (``compiled`` raises if the
extension is unavailable). ``benchmarks/bench_kernels.py`` compares the two.
"""

import os

from . import _reference

_choice = os.environ.get("METADIFF_KERNELS", "auto")
if _choice not in ("auto", "compiled", "python"):
    raise ImportError(
        f"METADIFF_KERNELS must be 'auto', 'compiled' or 'python', got {_choice!r}"
    )

_impl = None
if _choice in ("auto", "compiled"):
    try:
        from . import _core as _impl
    except ImportError:
        if _choice == "compiled":
            raise
if _impl is None:
    _impl = _reference

BACKEND = _impl.BACKEND

dense_forward = _impl.dense_forward
dense_backward = _impl.dense_backward
rowscale = _impl.rowscale
rowscale_backward = _impl.rowscale_backward
softmax_xent = _impl.softmax_xent
normalize_rows = _impl.normalize_rows
gda_fit = _impl.gda_fit
