"""Small rank/regression statistics used to summarize sweep output."""

from __future__ import annotations

import numpy as np

__all__ = ["rankdata_average", "spearman_rho", "least_squares_slope"]


def rankdata_average(x) -> np.ndarray:
    """Ranks starting at 1; tied values share the average of their ranks."""
    x = np.asarray(x, dtype=np.float64).ravel()
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size)
    ranks[order] = np.arange(1, x.size + 1, dtype=np.float64)
    # Average ranks within tie groups.
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = ranks[order[i : j + 1]].mean()
        i = j + 1
    return ranks


def spearman_rho(x, y) -> float:
    """Spearman rank correlation (Pearson correlation of average ranks)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size or x.size < 2:
        raise ValueError("spearman_rho: need two same-length samples of size >= 2")
    rx = rankdata_average(x)
    ry = rankdata_average(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0.0:
        return 0.0
    return float((rx * ry).sum() / denom)


def least_squares_slope(x, y) -> float:
    """Slope of the one-dimensional least-squares line y = a + b x."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size or x.size < 2:
        raise ValueError("least_squares_slope: need two same-length samples of size >= 2")
    xc = x - x.mean()
    denom = (xc * xc).sum()
    if denom == 0.0:
        return 0.0
    return float((xc * (y - y.mean())).sum() / denom)
