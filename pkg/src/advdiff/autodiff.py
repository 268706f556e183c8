"""Reverse-mode automatic differentiation over dense float64 matrices.

The value carrier is a plain 2-D numpy array (C order, float64); every
tensor in the package, including scalars, is such a matrix. Computations
are recorded on a `Tape` as they run: each operation appends one node
holding vector-Jacobian closures for its inputs. `backward` walks the
nodes once in reverse and accumulates total gradients for every leaf
variable created with `requires_grad=True`.

Tapes are cheap and rebuilt for every forward pass; nothing here retains
state between passes.

Conventions enforced throughout:
  * shapes are checked up front, mismatches raise `DimensionError`;
  * any NaN/Inf appearing in a result raises `NumericalError` instead of
    propagating silently;
  * gradients have exactly the shape of the value they correspond to.
"""

from __future__ import annotations

import warnings
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionError, NumericalError, SingularMatrixError
from .kernels import coo_scatter_matmul

__all__ = [
    "Matrix",
    "Tape",
    "Var",
    "as_matrix",
    "matmul",
    "add",
    "sub",
    "add_row",
    "scale",
    "mul",
    "relu",
    "log",
    "concat_cols",
    "row_sum",
    "sum_all",
    "transpose",
    "gather_rows",
    "div_rows",
    "row_l2_normalize",
    "softmax_rows",
    "coo_matmul",
    "linsolve",
]

Matrix = np.ndarray

# Floor used wherever a denominator or log argument must stay positive.
EPS = 1e-12

# |pivot| below this during LU factorization counts as singular.
PIVOT_FLOOR = 1e-12

# Relative residual bound every linear solve must meet.
LINSOLVE_RTOL = 1e-8


def as_matrix(obj) -> Matrix:
    """Coerce to a 2-D float64 C-order array, rejecting non-finite entries.

    1-D input is treated as a single column.
    """
    m = np.asarray(obj, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise DimensionError("as_matrix", m.shape)
    m = np.ascontiguousarray(m)
    if not np.isfinite(m).all():
        raise NumericalError("as_matrix: non-finite entries in input")
    return m


def _ensure_finite(value: Matrix, op: str) -> Matrix:
    if not np.isfinite(value).all():
        raise NumericalError(f"{op}: produced non-finite values")
    return value


class Var:
    """A matrix-valued node on a tape."""

    __slots__ = ("tape", "id", "value", "requires_grad")

    def __init__(self, tape: "Tape", vid: int, value: Matrix, requires_grad: bool):
        self.tape = tape
        self.id = vid
        self.value = value
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(id={self.id}, shape={self.value.shape}, grad={self.requires_grad})"


class _Node:
    __slots__ = ("out_id", "parents")

    def __init__(self, out_id: int, parents: list[tuple[Var, Callable[[Matrix], Matrix]]]):
        self.out_id = out_id
        self.parents = parents


class Tape:
    """Records a computation so gradients can be replayed in reverse.

    Node ids increase in creation order, which is a valid topological
    order of the dataflow graph; `backward` visits each node exactly once
    in reverse order.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._next_id = 0
        self._grad_leaves: dict[int, Var] = {}

    def var(self, value, requires_grad: bool = False) -> Var:
        """Create a leaf variable from matrix-like data (copied)."""
        v = Var(self, self._alloc(), as_matrix(value).copy(), requires_grad)
        if requires_grad:
            self._grad_leaves[v.id] = v
        return v

    def const(self, value) -> Var:
        """Create a non-differentiable leaf (alias for var without grad)."""
        return self.var(value, requires_grad=False)

    def _alloc(self) -> int:
        vid = self._next_id
        self._next_id += 1
        return vid

    def _record(self, value: Matrix, parents: list[tuple[Var, Callable]], op: str) -> Var:
        _ensure_finite(value, op)
        track = [(p, vjp) for p, vjp in parents if _tracked(p)]
        out = Var(self, self._alloc(), value, requires_grad=bool(track))
        if track:
            self._nodes.append(_Node(out.id, track))
        return out

    def backward(self, loss: Var) -> dict[int, Matrix]:
        """Accumulate d(loss)/d(leaf) for every requires_grad leaf.

        `loss` must be a 1x1 variable on this tape. Returns a map from
        leaf variable id to its total gradient; leaves the loss does not
        depend on get a zero matrix of their shape.
        """
        if loss.tape is not self:
            raise ValueError("backward: loss belongs to a different tape")
        if loss.value.shape != (1, 1):
            raise DimensionError("backward(loss)", loss.value.shape, (1, 1))
        adjoint: dict[int, Matrix] = {loss.id: np.ones((1, 1))}
        for node in reversed(self._nodes):
            g = adjoint.pop(node.out_id, None)
            if g is None:
                continue
            for parent, vjp in node.parents:
                contrib = vjp(g)
                if contrib.shape != parent.value.shape:
                    raise DimensionError("backward(vjp)", contrib.shape, parent.value.shape)
                _ensure_finite(contrib, "backward")
                acc = adjoint.get(parent.id)
                adjoint[parent.id] = contrib if acc is None else acc + contrib
        grads: dict[int, Matrix] = {}
        for vid, leaf in self._grad_leaves.items():
            grads[vid] = adjoint.get(vid, np.zeros(leaf.value.shape))
        return grads


def _tracked(v: Var) -> bool:
    return v.requires_grad


def _check_same_tape(op: str, *vars_: Var) -> Tape:
    tape = vars_[0].tape
    for v in vars_[1:]:
        if v.tape is not tape:
            raise ValueError(f"{op}: variables belong to different tapes")
    return tape


# ---------------------------------------------------------------------------
# operations


def matmul(a: Var, b: Var) -> Var:
    """Matrix product a @ b."""
    tape = _check_same_tape("matmul", a, b)
    if a.value.shape[1] != b.value.shape[0]:
        raise DimensionError("matmul", a.value.shape, b.value.shape)
    av, bv = a.value, b.value
    value = av @ bv
    return tape._record(
        value,
        [(a, lambda g: g @ bv.T), (b, lambda g: av.T @ g)],
        "matmul",
    )


def add(a: Var, b: Var) -> Var:
    """Elementwise sum; shapes must match exactly (no broadcasting)."""
    tape = _check_same_tape("add", a, b)
    if a.value.shape != b.value.shape:
        raise DimensionError("add", a.value.shape, b.value.shape)
    return tape._record(
        a.value + b.value,
        [(a, lambda g: g), (b, lambda g: g)],
        "add",
    )


def sub(a: Var, b: Var) -> Var:
    """Elementwise difference a - b; shapes must match exactly."""
    tape = _check_same_tape("sub", a, b)
    if a.value.shape != b.value.shape:
        raise DimensionError("sub", a.value.shape, b.value.shape)
    return tape._record(
        a.value - b.value,
        [(a, lambda g: g), (b, lambda g: -g)],
        "sub",
    )


def add_row(a: Var, row: Var) -> Var:
    """Add a 1xm row to every row of an nxm matrix (bias addition)."""
    tape = _check_same_tape("add_row", a, row)
    if row.value.shape != (1, a.value.shape[1]):
        raise DimensionError("add_row", a.value.shape, row.value.shape)
    return tape._record(
        a.value + row.value,
        [(a, lambda g: g), (row, lambda g: g.sum(axis=0, keepdims=True))],
        "add_row",
    )


def scale(a: Var, s: float) -> Var:
    """Multiply by a python scalar constant."""
    s = float(s)
    return a.tape._record(a.value * s, [(a, lambda g: g * s)], "scale")


def mul(a: Var, b: Var) -> Var:
    """Hadamard (elementwise) product; shapes must match exactly."""
    tape = _check_same_tape("mul", a, b)
    if a.value.shape != b.value.shape:
        raise DimensionError("mul", a.value.shape, b.value.shape)
    av, bv = a.value, b.value
    return tape._record(
        av * bv,
        [(a, lambda g: g * bv), (b, lambda g: g * av)],
        "mul",
    )


def relu(a: Var) -> Var:
    """max(x, 0); the subgradient at 0 is taken as 0."""
    mask = a.value > 0.0
    return a.tape._record(
        np.where(mask, a.value, 0.0),
        [(a, lambda g: g * mask)],
        "relu",
    )


def log(a: Var, eps: float = EPS) -> Var:
    """Natural log with the argument floored at eps.

    Entries below the floor are treated as the constant log(eps), so
    their gradient is zero.
    """
    av = a.value
    live = av > eps
    value = np.log(np.maximum(av, eps))
    return a.tape._record(
        value,
        [(a, lambda g: np.where(live, g / np.maximum(av, eps), 0.0))],
        "log",
    )


def concat_cols(parts: Sequence[Var]) -> Var:
    """Concatenate along columns; all parts must share the row count."""
    parts = list(parts)
    if not parts:
        raise ValueError("concat_cols: empty part list")
    tape = _check_same_tape("concat_cols", *parts)
    rows = parts[0].value.shape[0]
    for p in parts:
        if p.value.shape[0] != rows:
            raise DimensionError("concat_cols", parts[0].value.shape, p.value.shape)
    value = np.concatenate([p.value for p in parts], axis=1)
    offsets = np.cumsum([0] + [p.value.shape[1] for p in parts])

    def slicer(i):
        lo, hi = offsets[i], offsets[i + 1]
        return lambda g: g[:, lo:hi]

    return tape._record(value, [(p, slicer(i)) for i, p in enumerate(parts)], "concat_cols")


def row_sum(a: Var) -> Var:
    """Sum each row: (n, m) -> (n, 1)."""
    m = a.value.shape[1]
    return a.tape._record(
        a.value.sum(axis=1, keepdims=True),
        [(a, lambda g: np.repeat(g, m, axis=1))],
        "row_sum",
    )


def sum_all(a: Var) -> Var:
    """Sum all entries into a 1x1 matrix."""
    shape = a.value.shape
    return a.tape._record(
        np.array([[a.value.sum()]]),
        [(a, lambda g: np.full(shape, g[0, 0]))],
        "sum_all",
    )


def transpose(a: Var) -> Var:
    """Matrix transpose."""
    return a.tape._record(
        np.ascontiguousarray(a.value.T),
        [(a, lambda g: np.ascontiguousarray(g.T))],
        "transpose",
    )


def gather_rows(a: Var, indices) -> Var:
    """Select rows by index (duplicates allowed); gradient scatter-adds."""
    idx = np.asarray(indices, dtype=np.int64).ravel()
    n = a.value.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"gather_rows: index out of range for {n} rows")
    shape = a.value.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return out

    return a.tape._record(a.value[idx].copy(), [(a, vjp)], "gather_rows")


def div_rows(a: Var, denom: Var, eps: float = EPS) -> Var:
    """Divide each row of a by a per-row denominator, floored at eps.

    `denom` is (n, 1) and expected nonnegative; rows whose denominator
    sits at the floor are treated as constant there (zero gradient into
    the denominator).
    """
    tape = _check_same_tape("div_rows", a, denom)
    n = a.value.shape[0]
    if denom.value.shape != (n, 1):
        raise DimensionError("div_rows", a.value.shape, denom.value.shape)
    d = np.maximum(denom.value, eps)
    live = denom.value > eps
    av = a.value
    value = av / d

    def vjp_denom(g):
        contrib = -(g * av).sum(axis=1, keepdims=True) / (d * d)
        return np.where(live, contrib, 0.0)

    return tape._record(value, [(a, lambda g: g / d), (denom, vjp_denom)], "div_rows")


def row_l2_normalize(a: Var, eps: float = EPS) -> Var:
    """Scale every row to unit L2 norm; the norm is floored at eps.

    Rows with norm below the floor are divided by eps instead, which
    keeps the map differentiable (plain 1/eps scaling there).
    """
    av = a.value
    norms = np.sqrt((av * av).sum(axis=1, keepdims=True))
    d = np.maximum(norms, eps)
    live = norms > eps
    value = av / d

    def vjp(g):
        # d(x/r)/dx = (I - y y^T)/r on live rows, identity/eps otherwise.
        inner = (g * value).sum(axis=1, keepdims=True)
        full = (g - value * inner) / d
        return np.where(live, full, g / eps)

    return a.tape._record(value, [(a, vjp)], "row_l2_normalize")


def softmax_rows(a: Var) -> Var:
    """Row-wise softmax (computed with the usual max-shift for stability)."""
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    value = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        inner = (g * value).sum(axis=1, keepdims=True)
        return value * (g - inner)

    return a.tape._record(value, [(a, vjp)], "softmax_rows")


def coo_matmul(rows, cols, vals, x: Var, n_out: int) -> Var:
    """Sparse-matrix product S @ x from coordinate data.

    S is the (n_out, x.rows) matrix with S[rows[i], cols[i]] += vals[i].
    The coordinate arrays are constants; the gradient flows through x
    only (transposed scatter with the same coefficients).
    """
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    if not (rows.shape == cols.shape == vals.shape) or rows.ndim != 1:
        raise DimensionError("coo_matmul(coords)", rows.shape, cols.shape, vals.shape)
    p = x.value.shape[0]
    if rows.size:
        if rows.min() < 0 or rows.max() >= n_out:
            raise IndexError(f"coo_matmul: row index out of range for {n_out} rows")
        if cols.min() < 0 or cols.max() >= p:
            raise IndexError(f"coo_matmul: column index out of range for {p} rows of x")
    value = coo_scatter_matmul(rows, cols, vals, x.value, int(n_out))
    return x.tape._record(
        value,
        [(x, lambda g: coo_scatter_matmul(cols, rows, vals, g, p))],
        "coo_matmul",
    )


def linsolve(l: Var, b: Var) -> Var:
    """Solve the dense square system l @ X = b by LU with partial pivoting.

    Raises `SingularMatrixError` (carrying the pivot index) when a pivot
    falls below 1e-12 in magnitude, and `NumericalError` if the solution
    fails the relative residual bound. The backward pass uses the
    implicit-function adjoint: solve l^T lam = G, then
    grad_b += lam and grad_l += -lam @ X^T.
    """
    tape = _check_same_tape("linsolve", l, b)
    n, m = l.value.shape
    if n != m:
        raise DimensionError("linsolve(l)", l.value.shape)
    if b.value.shape[0] != n:
        raise DimensionError("linsolve", l.value.shape, b.value.shape)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # pivot check below supersedes scipy's warning
        lu, piv = scipy.linalg.lu_factor(l.value, check_finite=False)
    diag = np.abs(np.diag(lu))
    small = np.where(diag < PIVOT_FLOOR)[0]
    if small.size:
        i = int(small[0])
        raise SingularMatrixError(i, float(diag[i]))
    x = scipy.linalg.lu_solve((lu, piv), b.value, check_finite=False)
    _ensure_finite(x, "linsolve")
    resid = np.linalg.norm(l.value @ x - b.value)
    bound = LINSOLVE_RTOL * np.linalg.norm(b.value)
    if resid > bound:
        raise NumericalError(
            f"linsolve: residual {resid:.3e} exceeds bound {bound:.3e}"
        )

    def vjp_pair(g):
        lam = scipy.linalg.lu_solve((lu, piv), g, trans=1, check_finite=False)
        return lam

    # The adjoint solve is shared between both parents for a given g;
    # a tiny one-slot cache avoids solving twice per backward visit.
    cache: dict[int, Matrix] = {}

    def adjoint(g):
        key = id(g)
        lam = cache.get(key)
        if lam is None:
            cache.clear()
            lam = vjp_pair(g)
            cache[key] = lam
        return lam

    return tape._record(
        x,
        [(l, lambda g: -adjoint(g) @ x.T), (b, lambda g: adjoint(g))],
        "linsolve",
    )
