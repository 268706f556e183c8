"""Diffusion baselines and the matrix-exponential utilities behind them.

All four baselines share the encoder/decoder plumbing of the main models
and differ only in how node states propagate between them:

  * diff_linear: closed-form heat kernel, Z(T) = expm(-(I - A~) T) Z(0).
    The kernel is a constant of the graph, so gradients flow only
    through Z(0).
  * diff_multilayer: K explicit Euler steps, each followed by a learned
    dense transform with ReLU between propagation layers
    (tau = 1 recovers graph-convolution layers).
  * diff_time: K explicit Euler steps whose coupling is recomputed from
    the current state by an attention head, masked to observed edges
    (self pairs excluded) and row-renormalized.
  * diff_nonlocal: exactly the variant "s" forward with beta = 0 (same
    code path), i.e. attention-only propagation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .attention import AttentionHead
from .autodiff import Var
from .errors import ConfigError, DimensionError, NumericalError
from .graphs import Graph, NormMode, normalized_adjacency
from .models import DenseLayer, _mlp

__all__ = [
    "EulerConfig",
    "expm_oracle",
    "expm_rational",
    "fit_rational_coeffs",
    "heat_kernel",
    "diff_linear_propagate",
    "diff_multilayer_propagate",
    "diff_time_propagate",
]

# Taylor series is truncated once the largest term entry drops below this.
TAYLOR_TOL = 1e-16

# Scaled norms above this are rejected rather than trusted.
NORM_LIMIT = 1e4


@dataclass
class EulerConfig:
    """Shared knobs of the explicit-Euler baselines."""

    steps: int = 2
    tau: float = 1.0

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError("EulerConfig: steps must be nonnegative")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"EulerConfig: tau must lie in (0, 1], got {self.tau}")


def expm_oracle(m: np.ndarray, t: float = 1.0) -> np.ndarray:
    """e^(m t) by scaling-and-squaring with a truncated Taylor series.

    The argument is halved until its 1-norm is at most 0.5, the series is
    summed until terms vanish below 1e-16, and the result is squared back
    up. Arguments with 1-norm beyond 1e4 raise `NumericalError`.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError("expm_oracle", m.shape)
    x = m * float(t)
    norm = float(np.abs(x).sum(axis=0).max()) if x.size else 0.0
    if not np.isfinite(norm) or norm > NORM_LIMIT:
        raise NumericalError(f"expm_oracle: argument norm {norm:.3e} exceeds {NORM_LIMIT:.0e}")
    squarings = 0
    while norm > 0.5:
        x = x / 2.0
        norm /= 2.0
        squarings += 1
    n = x.shape[0]
    acc = np.eye(n)
    term = np.eye(n)
    for k in range(1, 128):
        term = term @ x / k
        acc = acc + term
        if np.abs(term).max() < TAYLOR_TOL:
            break
    else:
        raise NumericalError("expm_oracle: series failed to converge")
    for _ in range(squarings):
        acc = acc @ acc
    if not np.isfinite(acc).all():
        raise NumericalError("expm_oracle: non-finite result")
    return acc


def expm_rational(m: np.ndarray, t: float, coeffs) -> np.ndarray:
    """Rational (pole-sum) approximation of e^(-m t).

    Evaluates -sum_i alpha_i (m t + theta_i I)^{-1} for user-supplied
    (alpha_i, theta_i) pairs; an empty list gives the zero matrix.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError("expm_rational", m.shape)
    n = m.shape[0]
    x = m * float(t)
    out = np.zeros((n, n))
    eye = np.eye(n)
    for i, (alpha, theta) in enumerate(coeffs):
        try:
            inv = np.linalg.solve(x + float(theta) * eye, eye)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"expm_rational: term {i} is singular ({exc})") from exc
        out -= float(alpha) * inv
    if not np.isfinite(out).all():
        raise NumericalError("expm_rational: non-finite result")
    return out


def fit_rational_coeffs(
    r: int = 7,
    x_max: float = 4.0,
    grid_points: int = 401,
) -> list[tuple[float, float]]:
    """Least-squares (alpha_i, theta_i) pairs approximating e^{-x}.

    Poles are fixed at a geometric spread and the weights solved by
    linear least squares over a uniform grid on [0, x_max].
    """
    if r < 1:
        raise ConfigError("fit_rational_coeffs: r must be positive")
    thetas = np.array([0.5 * 2.0**i for i in range(r)])
    xs = np.linspace(0.0, x_max, grid_points)
    design = -1.0 / (xs[:, None] + thetas[None, :])
    target = np.exp(-xs)
    alphas, *_ = np.linalg.lstsq(design, target, rcond=None)
    return [(float(a), float(th)) for a, th in zip(alphas, thetas)]


def heat_kernel(g: Graph, t: float, mode: NormMode) -> np.ndarray:
    """expm(-(I - A~) t), cached per graph, mode and horizon."""
    key = ("heat", NormMode(mode), float(t))
    out = g._cache.get(key)
    if out is None:
        lap = np.eye(g.n) - normalized_adjacency(g, mode)
        out = expm_oracle(-lap, t)
        g._cache[key] = out
    return out


def diff_linear_propagate(g: Graph, z0: Var, t: float, mode: NormMode) -> Var:
    """Closed-form diffusion: constant heat kernel applied to Z(0)."""
    kernel = z0.tape.const(heat_kernel(g, t, mode))
    return ad.matmul(kernel, z0)


def diff_multilayer_propagate(
    g: Graph, z0: Var, layers: list[DenseLayer], euler: EulerConfig, mode: NormMode
) -> Var:
    """K Euler steps, each followed by a learned transform.

    One step: Z <- relu(((1 - tau) Z + tau A~ Z) W + b). `layers` holds
    one DenseLayer (of Vars) per step; zero steps return Z(0).
    """
    if len(layers) != euler.steps:
        raise ConfigError(
            f"diff_multilayer_propagate: {len(layers)} transforms for {euler.steps} steps"
        )
    tape = z0.tape
    a_norm = tape.const(normalized_adjacency(g, mode))
    z = z0
    for layer in layers:
        mixed = ad.add(ad.scale(z, 1.0 - euler.tau), ad.scale(ad.matmul(a_norm, z), euler.tau))
        z = ad.relu(ad.add_row(ad.matmul(mixed, layer.weight), layer.bias))
    return z


def diff_time_propagate(
    g: Graph, z0: Var, head: AttentionHead, euler: EulerConfig
) -> Var:
    """K Euler steps with state-dependent, edge-masked attention coupling.

    Each step rebuilds unnormalized scores 1 + <q_u, k_v> from the
    current state, zeroes non-neighbor and self entries, renormalizes
    rows (floor 1e-12), and mixes: Z <- (1 - tau) Z + tau C Z. Nodes
    without neighbors simply decay by (1 - tau) per step.
    """
    tape = z0.tape
    n = g.n
    mask = tape.const(g.adjacency_mask())
    ones = tape.const(np.ones((n, n)))
    z = z0
    for _ in range(euler.steps):
        q = ad.row_l2_normalize(ad.matmul(z, head.w_q))
        k = ad.row_l2_normalize(ad.matmul(z, head.w_k))
        scores = ad.mul(ad.add(ones, ad.matmul(q, ad.transpose(k))), mask)
        coupling = ad.div_rows(scores, ad.row_sum(scores))
        z = ad.add(ad.scale(z, 1.0 - euler.tau), ad.scale(ad.matmul(coupling, z), euler.tau))
    return z
