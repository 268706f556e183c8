"""Row-stochastic attention couplings over node embeddings.

A head scores node pairs as 1 plus the cosine of query/key projections,
so every unnormalized score lies in [0, 2]; row normalization then yields
a dense, strictly nonnegative, row-stochastic coupling matrix. Because
the scores factor through unit-norm projections, C @ z can also be formed
in O(n d d') without ever materializing the n x n matrix; both paths are
differentiable and agree to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Var

__all__ = ["AttentionHead", "coupling_dense", "coupling_apply_linear"]


@dataclass
class AttentionHead:
    """Query/key projections of one attention head, applied on the right."""

    w_q: Var  # (d, d)
    w_k: Var  # (d, d)


def _projections(z0: Var, head: AttentionHead) -> tuple[Var, Var]:
    q = ad.row_l2_normalize(ad.matmul(z0, head.w_q))
    k = ad.row_l2_normalize(ad.matmul(z0, head.w_k))
    return q, k


def coupling_dense(z0: Var, head: AttentionHead) -> Var:
    """Materialize the full (n, n) row-stochastic coupling matrix.

    Scores include the self pair, so every row has at least one positive
    entry; the division floor below is purely defensive.
    """
    n = z0.value.shape[0]
    q, k = _projections(z0, head)
    ones = z0.tape.const(np.ones((n, n)))
    scores = ad.add(ones, ad.matmul(q, ad.transpose(k)))
    return ad.div_rows(scores, ad.row_sum(scores))


def coupling_apply_linear(z0: Var, head: AttentionHead, z: Var) -> Var:
    """Compute coupling(z0) @ z without forming the n x n coupling.

    Expands the normalized scores into rank-one structure:
    numerator 1 (1^T z) + Q (K^T z), denominator n + Q (K^T 1), both per
    row. Cost is O(n d d') for z of width d'.
    """
    tape = z0.tape
    n = z0.value.shape[0]
    if z.value.shape[0] != n:
        from .errors import DimensionError

        raise DimensionError("coupling_apply_linear", z0.value.shape, z.value.shape)
    q, k = _projections(z0, head)
    ones_n1 = tape.const(np.ones((n, 1)))
    ones_1n = tape.const(np.ones((1, n)))
    # Denominator: n + Q (K^T 1), one positive scalar per row.
    k_sum = ad.matmul(ad.transpose(k), ones_n1)  # (d, 1)
    denom = ad.add(tape.const(np.full((n, 1), float(n))), ad.matmul(q, k_sum))
    # Numerator: 1 (1^T z) + Q (K^T z).
    col_sums = ad.matmul(ones_1n, z)  # (1, m)
    lifted = ad.matmul(ones_n1, col_sums)  # (n, m)
    kz = ad.matmul(ad.transpose(k), z)  # (d, m)
    numer = ad.add(lifted, ad.matmul(q, kz))
    return ad.div_rows(numer, denom)
