"""Kernel backend selection.

The numba backend is used when numba imports cleanly; set ``SFAM_NO_NUMBA=1``
to force the pure-NumPy fallback. ``benchmarks/bench_kernels.py`` compares
the two backends directly.
"""

import os

from . import _kernels_numpy

_force_numpy = os.environ.get("SFAM_NO_NUMBA", "").strip() not in ("", "0")

if not _force_numpy:
    try:
        from . import _kernels_numba as _impl

        BACKEND = "numba"
    except ImportError:
        _impl = _kernels_numpy
        BACKEND = "numpy"
else:
    _impl = _kernels_numpy
    BACKEND = "numpy"

bilinear_sample = _impl.bilinear_sample
pd_chunk = _impl.pd_chunk
dual_chunk = _impl.dual_chunk
data_energy_kernel = _impl.data_energy_kernel
tv_energy_kernel = _impl.tv_energy_kernel
pegasos_chunk = _impl.pegasos_chunk
rank_objective = _impl.rank_objective
