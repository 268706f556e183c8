"""Edge-kernel backend selection.

The hot loop of the sparse propagation path is a coordinate-format
scatter product, out[rows[i]] += vals[i] * x[cols[i]]. A compiled
extension implements it when available; otherwise a numpy fallback
(np.add.at) is used. Both accumulate in entry order and agree bitwise.

Set ADVDIFF_NO_EXT=1 to force the fallback (used by the benchmark to
compare backends).
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["coo_scatter_matmul", "BACKEND"]


def _coo_scatter_matmul_numpy(rows, cols, vals, x, n_out):
    out = np.zeros((int(n_out), x.shape[1]), dtype=np.float64)
    if rows.size:
        np.add.at(out, rows, vals[:, None] * x[cols])
    return out


if os.environ.get("ADVDIFF_NO_EXT"):
    coo_scatter_matmul = _coo_scatter_matmul_numpy
    BACKEND = "numpy"
else:
    try:
        from ._edge_kernels import coo_scatter_matmul as _compiled
    except ImportError:
        coo_scatter_matmul = _coo_scatter_matmul_numpy
        BACKEND = "numpy"
    else:
        coo_scatter_matmul = _compiled
        BACKEND = "compiled"
