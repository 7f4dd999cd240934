"""Backend selection for the per-token kernels.

The compiled ``_kernels`` extension is used when it imports; otherwise, or when
``WMLAB_PURE_PYTHON`` is set to a non-empty value, the pure-Python twin is.
Both produce identical results.
"""
import os

from . import _fallback

if os.environ.get("WMLAB_PURE_PYTHON"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"

mix64 = _impl.mix64
uniform_vector = _impl.uniform_vector
gumbel_vector = _impl.gumbel_vector
gumbel_argmax_seeded = _impl.gumbel_argmax_seeded
gumbel_argmax_many = _impl.gumbel_argmax_many
plus_excess = _impl.plus_excess
aux_select = _impl.aux_select
aux_select_rows = _impl.aux_select_rows
residual_sample = _impl.residual_sample
categorical_sample = _impl.categorical_sample


def available_backends():
    """Map backend name to module for every backend importable here."""
    found = {"python": _fallback}
    try:
        from . import _kernels
        found["cython"] = _kernels
    except ImportError:
        pass
    return found
