"""Hot numeric kernels with a compiled fast path and a pure-Python fallback.

The compiled extension (Cython) is used when it imported successfully.
Set ``GRADECAST_KERNELS=reference`` to force the pure-Python backend or
``GRADECAST_KERNELS=compiled`` to fail loudly when the extension is missing.
"""

import os

_choice = os.environ.get("GRADECAST_KERNELS", "auto").strip().lower()

if _choice in ("auto", "", "compiled", "c", "cy", "fast"):
    try:
        from . import _fastpath as _impl

        BACKEND = "compiled"
    except ImportError:
        if _choice not in ("auto", ""):
            raise
        from . import _reference as _impl

        BACKEND = "reference"
elif _choice in ("reference", "py", "python", "pure"):
    from . import _reference as _impl

    BACKEND = "reference"
else:
    raise ValueError(f"GRADECAST_KERNELS={_choice!r} not recognized")

sgd_epoch = _impl.sgd_epoch
delta_for_dyads = _impl.delta_for_dyads
predict_dyads = _impl.predict_dyads
influence_data_term = _impl.influence_data_term

__all__ = [
    "BACKEND",
    "sgd_epoch",
    "delta_for_dyads",
    "predict_dyads",
    "influence_data_term",
]
