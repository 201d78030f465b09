"""Import-time selection between the compiled kernels and the numpy fallback.

Set ``QML_PURE_PYTHON=1`` to force the fallback even when the extension is
built. ``BACKEND`` names the implementation in use.
"""

import os

from qml import _pykernels as python_kernels

compiled_kernels = None
if os.environ.get("QML_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from qml import _kernels as compiled_kernels
    except ImportError:
        compiled_kernels = None

_impl = compiled_kernels if compiled_kernels is not None else python_kernels
BACKEND = "compiled" if compiled_kernels is not None else "python"

jacobi = _impl.jacobi
incgamma_q = _impl.incgamma_q
v_of_u = _impl.v_of_u
chi8p_fill = _impl.chi8p_fill
afe_sum = _impl.afe_sum
batch_afe = _impl.batch_afe
chi8p_matrix = _impl.chi8p_matrix


def available_backends():
    out = {"python": python_kernels}
    if compiled_kernels is not None:
        out["compiled"] = compiled_kernels
    return out
