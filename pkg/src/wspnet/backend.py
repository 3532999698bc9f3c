"""Kernel backend selection.

The compiled extension (``wspnet._kernels_cy``) is preferred when it built;
otherwise the pure numpy module is used.  Set the ``WSPNET_BACKEND``
environment variable to ``cython`` or ``numpy`` before import to force a
choice; forcing ``cython`` when the extension is missing raises ImportError
rather than silently falling back.
"""

import os

_forced = os.environ.get("WSPNET_BACKEND", "").lower()

if _forced == "numpy":
    from wspnet import _kernels_py as kernels

    BACKEND = "numpy"
elif _forced == "cython":
    from wspnet import _kernels_cy as kernels

    BACKEND = "cython"
elif _forced:
    raise ImportError(f"unknown WSPNET_BACKEND {_forced!r}; use 'cython' or 'numpy'")
else:
    try:
        from wspnet import _kernels_cy as kernels

        BACKEND = "cython"
    except ImportError:
        from wspnet import _kernels_py as kernels

        BACKEND = "numpy"

lstm_forward = kernels.lstm_forward
lstm_backward = kernels.lstm_backward
gru_forward = kernels.gru_forward
gru_backward = kernels.gru_backward
boucwen_z_path = kernels.boucwen_z_path
boucwen_mdof = kernels.boucwen_mdof
gmp_stress = kernels.gmp_stress
