"""Brute-force references for the fast paths, used by tests and ``ce-sim selfcheck``.

Each function recomputes a quantity the slow, obvious way: dense grids instead
of closed forms, full convolutions instead of patched residuals, cofactor
expansion instead of a Cholesky factor.
"""

from __future__ import annotations

import math

import numpy as np

from .model import ChannelRealization, PhaseSchedule, SymbolFrame, mui_block


def local_cost(H: ChannelRealization, theta: PhaseSchedule, U: SymbolFrame, r: int, q: int, candidates):
    """Objective terms touched by ``theta[r, q]`` for each candidate angle, plus a magnitude scale.

    Only residuals at times ``q .. q+L-1`` depend on ``theta[r, q]``; the rest
    of the objective is a constant offset and is left out.
    """
    d = H.dims
    S = mui_block(H, theta, U)
    times = np.arange(q, min(d.T, q + d.L))
    h = H.taps[:, r, times - q] / math.sqrt(d.N)  # (M, n_times)
    # residuals with this antenna-time contribution removed
    base = S[:, times] - h * np.exp(1j * theta.angles[r, q])
    # sum |b + h e^{jx}|^2 = sum |b|^2 + sum |h|^2 + 2 |g| cos(x + arg g), g = sum conj(b) h
    const = float(np.sum(np.abs(base) ** 2) + np.sum(np.abs(h) ** 2))
    g = complex(np.sum(np.conj(base) * h))
    cost = const + 2.0 * abs(g) * np.cos(np.asarray(candidates, dtype=np.float64) + np.angle(g))
    scale = float(np.sum((np.abs(base) + np.abs(h)) ** 2))
    return cost, scale


def grid_minimum(H, theta, U, r: int, q: int, alpha: float, points: int = 1 << 16, center=None):
    """Smallest local cost over ``points`` uniform steps in ``[-alpha*pi, alpha*pi]``.

    The arc is centred on ``theta[r, q-1]`` (the history anchor for ``q == 0``)
    unless ``center`` is given.
    """
    if center is None:
        center = theta.angles[r, q - 1] if q > 0 else theta.anchor[r]
    omegas = np.linspace(-alpha * np.pi, alpha * np.pi, points)
    cost, scale = local_cost(H, theta, U, r, q, center + omegas)
    return float(cost.min()), scale


def two_sided_grid_minimum(H, theta, U, r: int, q: int, alpha: float, points: int = 1 << 16):
    """Grid minimum over the backward arc, keeping only points also within ``alpha*pi`` of ``theta[r, q+1]``."""
    prev = theta.angles[r, q - 1] if q > 0 else theta.anchor[r]
    omegas = np.linspace(-alpha * np.pi, alpha * np.pi, points)
    cand = prev + omegas
    if q + 1 < H.dims.T:
        nxt = theta.angles[r, q + 1]
        gap = np.abs(np.angle(np.exp(1j * (cand - nxt))))
        cand = cand[gap <= alpha * np.pi + 1e-12]
    if cand.size == 0:
        return math.inf, 0.0
    cost, scale = local_cost(H, theta, U, r, q, cand)
    return float(cost.min()), scale


def cofactor_det(A: np.ndarray):
    """Determinant by Laplace expansion along the first row; exponential cost, tiny matrices only."""
    n = A.shape[0]
    if n == 1:
        return A[0, 0]
    total = 0
    for j in range(n):
        minor = np.delete(np.delete(A, 0, axis=0), j, axis=1)
        total += (-1) ** j * A[0, j] * cofactor_det(minor)
    return total


def naive_rate(energy: float, cov: np.ndarray, snr: float) -> float:
    T = cov.shape[0]
    det = cofactor_det(np.asarray(cov, dtype=np.complex128) + np.eye(T) / snr)
    return max(0.0, math.log2(energy) - math.log2(det.real) / T)


def random_psd(rng: np.random.Generator, T: int, rank: int | None = None) -> np.ndarray:
    rank = T if rank is None else rank
    A = (rng.standard_normal((T, rank)) + 1j * rng.standard_normal((T, rank))) / math.sqrt(2 * max(rank, 1))
    return A @ A.conj().T



def random_instance(rng: np.random.Generator, alpha: float = 1.0, feasible: bool = True, max_dims=(6, 4, 4, 8)):
    """Small random ``(H, theta, U)``; with ``feasible`` the angles form an admissible walk."""
    import warnings

    from .model import ChannelRealization, Dimensions

    n_max, m_max, l_max, t_max = max_dims
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        d = Dimensions(
            int(rng.integers(1, n_max + 1)), int(rng.integers(1, m_max + 1)),
            int(rng.integers(1, l_max + 1)), int(rng.integers(1, t_max + 1)),
        )
    taps = (rng.standard_normal((d.M, d.N, d.L)) + 1j * rng.standard_normal((d.M, d.N, d.L))) / math.sqrt(2 * d.L)
    H = ChannelRealization(taps, d)
    history = rng.uniform(-np.pi, np.pi, (d.N, d.L - 1))
    anchor = history[:, -1] if d.L > 1 else np.zeros(d.N)
    if feasible:
        steps = rng.uniform(-alpha * np.pi, alpha * np.pi, (d.N, d.T))
        angles = anchor[:, None] + np.cumsum(steps, axis=1)
    else:
        angles = rng.uniform(-np.pi, np.pi, (d.N, d.T))
    symbols = (rng.standard_normal((d.M, d.T)) + 1j * rng.standard_normal((d.M, d.T))) / math.sqrt(2)
    U = SymbolFrame(symbols, rng.uniform(0.1, 5.0, d.M))
    return H, PhaseSchedule(angles, history), U
