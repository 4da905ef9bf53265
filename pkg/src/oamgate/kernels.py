"""Gate objective kernels with compiled/numpy dispatch.

The compiled three-layer kernel is used when the extension imported cleanly
and ``OAMGATE_KERNEL`` is not set to ``numpy``. Both backends share the same
signature, so callers never branch on the backend.
"""

import os

import numpy as np

from . import _kernel_py

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

if _ckernel is not None and os.environ.get("OAMGATE_KERNEL", "").lower() != "numpy":
    BACKEND = "cython"
    _three = _ckernel.three_layer_grad
else:
    BACKEND = "numpy"
    _three = _kernel_py.three_layer_grad

stack_grad = _kernel_py.stack_grad


def three_layer_grad(e1, e3, eg, enc, ks, U, backend=None):
    """Dispatch to the active (or requested) three-layer kernel.

    Parameters
    ----------
    e1, e3, eg : ndarray of complex
        Unit phase factors of the left ANGLE, right ANGLE and SPECTRUM layers.
    enc, ks : ndarray of int
        Encoding channels and channels kept between layers.
    U : ndarray
        Target block.
    backend : {"cython", "numpy"}, optional
        Force a backend. Defaults to :data:`BACKEND`.
    """
    fn = _three
    if backend == "numpy":
        fn = _kernel_py.three_layer_grad
    elif backend == "cython":
        if _ckernel is None:
            raise RuntimeError("compiled kernel not available")
        fn = _ckernel.three_layer_grad
    return fn(
        np.ascontiguousarray(e1, dtype=np.complex128),
        np.ascontiguousarray(e3, dtype=np.complex128),
        np.ascontiguousarray(eg, dtype=np.complex128),
        np.ascontiguousarray(enc, dtype=np.int64),
        np.ascontiguousarray(ks, dtype=np.int64),
        np.ascontiguousarray(U, dtype=np.complex128),
    )
