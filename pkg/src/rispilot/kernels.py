"""Backend selection for the fused numeric kernels.

The compiled extension is used when it was built; otherwise (or when
``RISPILOT_PURE_PYTHON=1`` is set) the numpy fallback is loaded.
"""

import contextlib
import importlib
import os

if os.environ.get("RISPILOT_PURE_PYTHON", "") not in ("", "0"):
    from . import _pykernels as _impl
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _pykernels as _impl
        BACKEND = "python"

adam_update = _impl.adam_update
bias_relu = _impl.bias_relu
bias_add = _impl.bias_add
relu_backward = _impl.relu_backward
bn_forward_train = _impl.bn_forward_train
bn_forward_infer = _impl.bn_forward_infer
bn_backward_params = _impl.bn_backward_params
zf_cancel = _impl.zf_cancel
FrameReceiver = _impl.FrameReceiver

_NAMES = ("adam_update", "bias_relu", "bias_add", "relu_backward", "bn_forward_train",
          "bn_forward_infer", "bn_backward_params", "zf_cancel", "FrameReceiver")


def available_backends() -> list:
    out = ["python"]
    try:
        importlib.import_module(f"{__name__.rsplit('.', 1)[0]}._ckernels")
        out.insert(0, "cython")
    except ImportError:
        pass
    return out


@contextlib.contextmanager
def use_backend(name: str):
    """Temporarily route every kernel through ``name`` ("cython" or "python")."""
    global BACKEND
    pkg = __name__.rsplit(".", 1)[0]
    mod = importlib.import_module(f"{pkg}._ckernels" if name == "cython" else f"{pkg}._pykernels")
    g = globals()
    saved = {k: g[k] for k in _NAMES}, BACKEND
    g.update({k: getattr(mod, k) for k in _NAMES})
    BACKEND = name
    try:
        yield
    finally:
        g.update(saved[0])
        BACKEND = saved[1]


__all__ = [
    "BACKEND", "available_backends", "use_backend", "adam_update", "bias_relu", "bias_add", "relu_backward",
    "bn_forward_train", "bn_forward_infer", "bn_backward_params", "zf_cancel", "FrameReceiver",
]
