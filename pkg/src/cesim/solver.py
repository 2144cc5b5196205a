"""Cyclic coordinate descent on the transmit phase angles.

One sub-iteration minimizes the residual energy over a single angle
``theta[r, q]`` with every other angle frozen. The minimizer has a closed form
(negative phase of a correlation, clamped to the admissible arc) and the
residuals are patched in ``O(M L)`` afterwards.

Two arc rules are available through ``PrecoderConfig.arc``:

``"backward"``
    Only ``|theta[r, q] - theta[r, q-1]| <= alpha*pi`` is imposed, with the
    clamp applied literally. If ``theta[r, q-1]`` moved earlier in the same pass
    the old value of ``theta[r, q]`` may lie outside the arc, so a sub-iteration
    can raise the objective when ``alpha < 1``.
``"two-sided"`` (default)
    The arc is additionally intersected with the circular ``alpha*pi``
    neighbourhood of the current ``theta[r, q+1]``. The old value then always
    stays admissible, which makes every sub-iteration a descent step. For
    ``alpha == 1`` both rules coincide.

In either case the schedule satisfies the step bound at the end of every pass,
because passes sweep time in ascending order.

Inside the kernels angles are carried as unit phasors ``exp(j*theta)``. The
unwrapped angles are rebuilt from consecutive phasor ratios, which is exact
because every step is at most ``alpha*pi <= pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .model import (
    ChannelRealization,
    Dimensions,
    PhaseSchedule,
    PrecoderConfig,
    ResidualState,
    SymbolFrame,
    _check_consistent,
    mui_block,
    received_block,
)

FEASIBILITY_ATOL = 1e-12
# membership slack when intersecting arcs; a degenerate (single point) intersection
# must survive rounding
_ARC_SLACK = 1e-12


@dataclass
class SolveReport:
    final_objective: float
    objective_per_iteration: np.ndarray
    iterations_run: int
    sub_iteration_monotone: bool
    initial_objective: float = float("nan")
    feasible_at_boundaries: bool = True
    # objective after every sub-iteration; filled only by solve(..., trace=True)
    trace: np.ndarray = field(default_factory=lambda: np.empty(0))


@numba.njit(cache=True, inline="always", error_model="numpy")
def _choose(xpr, xpi, xnr, xni, has_next, wr, wi, xcr, xci, cos_a, sin_a, two_sided, flip):
    """Phasor of the best admissible angle.

    ``xp`` is the previous-time phasor, ``xn`` the next-time one, ``xc`` the
    current value and ``w = sum h * conj(S_without_this_angle)``. Written
    without early exits so the frame loop around it vectorizes.
    """
    nw = math.sqrt(wr * wr + wi * wi)
    flat = nw == 0.0
    inv = 1.0 / (1.0 if flat else nw)
    # unconstrained minimizer; a flat coordinate aims at its current value
    tr = xcr if flat else -wr * inv
    ti = xci if flat else wi * inv
    # target relative to the previous phasor, exp(j*omega*)
    rr = tr * xpr + ti * xpi
    ri = ti * xpr - tr * xpi
    if flip:
        # negative control: rotate the wrong way
        ri = -ri
        tr = xpr * rr - xpi * ri
        ti = xpr * ri + xpi * rr

    # arc endpoints around the previous phasor
    up_r = xpr * cos_a - xpi * sin_a
    up_i = xpi * cos_a + xpr * sin_a
    dn_r = xpr * cos_a + xpi * sin_a
    dn_i = xpi * cos_a - xpr * sin_a
    # printed intervals: c = -alpha*pi keeps omega = alpha*pi, c = alpha*pi clamps
    inside = rr > cos_a or (rr == cos_a and ri > 0.0)
    out_r = tr if inside else (up_r if ri > 0.0 else dn_r)
    out_i = ti if inside else (up_i if ri > 0.0 else dn_i)

    if two_sided and has_next and cos_a > -1.0:
        lim = cos_a - _ARC_SLACK
        nup_r = xnr * cos_a - xni * sin_a
        nup_i = xni * cos_a + xnr * sin_a
        ndn_r = xnr * cos_a + xni * sin_a
        ndn_i = xni * cos_a - xnr * sin_a
        target_ok = rr >= lim and tr * xnr + ti * xni >= lim
        # endpoints of the intersection, scored by closeness to the target
        s1 = up_r * tr + up_i * ti if up_r * xnr + up_i * xni >= lim else -3.0
        s2 = dn_r * tr + dn_i * ti if dn_r * xnr + dn_i * xni >= lim else -3.0
        s3 = nup_r * tr + nup_i * ti if nup_r * xpr + nup_i * xpi >= lim else -3.0
        s4 = ndn_r * tr + ndn_i * ti if ndn_r * xpr + ndn_i * xpi >= lim else -3.0
        best_r = up_r
        best_i = up_i
        best = s1
        if s2 > best:
            best_r = dn_r
            best_i = dn_i
            best = s2
        if s3 > best:
            best_r = nup_r
            best_i = nup_i
            best = s3
        if s4 > best:
            best_r = ndn_r
            best_i = ndn_i
            best = s4
        # an empty intersection only arises from an infeasible start: keep the backward rule
        use = best > -2.0
        out_r = tr if target_ok else (best_r if use else out_r)
        out_i = ti if target_ok else (best_i if use else out_i)

    norm = math.sqrt(out_r * out_r + out_i * out_i)
    return out_r / norm, out_i / norm


@numba.njit(cache=True, error_model="numpy")
def _ccd_frames(
    taps_r, taps_i, tap_energy, Xr, Xi, Sr, Si,
    alpha, max_iter, rel_tol, two_sided, flip,
    per_iter, iterations, monotone, feasible, trace,
):
    """Coordinate descent on ``F`` frames in lockstep, all arrays updated in place.

    Shapes: taps (N, L, M), residuals S (T, M, F), phasors X (N, T + 2, F) with
    column 0 the fixed anchor, columns 1..T the block and column T + 1 padding.
    Frames stop individually once a pass improves them by less than ``rel_tol``.
    """
    N, L, M = taps_r.shape
    T = Sr.shape[0]
    F = Sr.shape[2]
    inv_sqrt_n = 1.0 / math.sqrt(N)
    a = alpha * math.pi
    cos_a = math.cos(a)
    sin_a = math.sin(a)
    cos_bound = math.cos(min(a + FEASIBILITY_ATOL, math.pi)) - 1e-15
    tracing = trace.shape[0] > 0

    obj = np.zeros(F)
    for t in range(T):
        for k in range(M):
            for f in range(F):
                obj[f] += Sr[t, k, f] * Sr[t, k, f] + Si[t, k, f] * Si[t, k, f]
    active = np.ones(F, dtype=np.bool_)
    Gr = np.empty(F)
    Gi = np.empty(F)
    Dr = np.empty(F)
    Di = np.empty(F)
    step = 0

    for it in range(max_iter):
        start = obj.copy()
        for q in range(T):
            n_taps = min(L, T - q)
            has_next = q + 1 < T
            for r in range(N):
                hh = 0.0
                for l in range(n_taps):
                    hh += tap_energy[r, l]
                Gr[:] = 0.0
                Gi[:] = 0.0
                for l in range(n_taps):
                    for k in range(M):
                        ha = taps_r[r, l, k]
                        hb = taps_i[r, l, k]
                        for f in range(F):
                            sr = Sr[q + l, k, f]
                            si = Si[q + l, k, f]
                            Gr[f] += ha * sr + hb * si
                            Gi[f] += hb * sr - ha * si
                for f in range(F):
                    xcr = Xr[r, q + 1, f]
                    xci = Xi[r, q + 1, f]
                    wr = Gr[f] - xcr * inv_sqrt_n * hh
                    wi = Gi[f] + xci * inv_sqrt_n * hh
                    nr, ni = _choose(
                        Xr[r, q, f], Xi[r, q, f], Xr[r, q + 2, f], Xi[r, q + 2, f], has_next,
                        wr, wi, xcr, xci, cos_a, sin_a, two_sided, flip,
                    )
                    live = active[f]
                    dr = (nr - xcr) * inv_sqrt_n if live else 0.0
                    di = (ni - xci) * inv_sqrt_n if live else 0.0
                    change = 2.0 * (Gr[f] * dr - Gi[f] * di) + (dr * dr + di * di) * hh
                    monotone[f] = monotone[f] and change <= 1e-12 * (obj[f] + 1.0)
                    obj[f] += change
                    Xr[r, q + 1, f] = nr if live else xcr
                    Xi[r, q + 1, f] = ni if live else xci
                    Dr[f] = dr
                    Di[f] = di
                for l in range(n_taps):
                    for k in range(M):
                        ha = taps_r[r, l, k]
                        hb = taps_i[r, l, k]
                        for f in range(F):
                            Sr[q + l, k, f] += ha * Dr[f] - hb * Di[f]
                            Si[q + l, k, f] += ha * Di[f] + hb * Dr[f]
                if tracing:
                    trace[step] = obj[0]
                step += 1

        # resync: drop rounding accumulated by the incremental bookkeeping
        obj[:] = 0.0
        for t in range(T):
            for k in range(M):
                for f in range(F):
                    obj[f] += Sr[t, k, f] * Sr[t, k, f] + Si[t, k, f] * Si[t, k, f]
        any_active = False
        for f in range(F):
            if not active[f]:
                continue
            per_iter[it, f] = obj[f]
            iterations[f] = it + 1
            for i in range(N):
                for t in range(T):
                    dot = Xr[i, t + 1, f] * Xr[i, t, f] + Xi[i, t + 1, f] * Xi[i, t, f]
                    if dot < cos_bound:
                        feasible[f] = False
            if start[f] <= 0.0 or (start[f] - obj[f]) / start[f] < rel_tol:
                active[f] = False
            else:
                any_active = True
        if not any_active:
            break


@numba.njit(cache=True, error_model="numpy")
def _coordinate_correlation(r, q, taps, S):
    """``(sum h * conj(S), sum |h|^2)`` over the residuals touched by ``theta[r, q]``."""
    L = taps.shape[1]
    M = taps.shape[2]
    T = S.shape[1]
    g = 0j
    hh = 0.0
    for l in range(min(L, T - q)):
        for k in range(M):
            h = taps[r, l, k]
            g += h * S[k, q + l].conjugate()
            hh += h.real * h.real + h.imag * h.imag
    return g, hh


@numba.njit(cache=True, error_model="numpy")
def _patch_residuals(r, q, delta, taps, S):
    L = taps.shape[1]
    M = taps.shape[2]
    T = S.shape[1]
    change = 0.0
    for l in range(min(L, T - q)):
        for k in range(M):
            before = S[k, q + l]
            after = before + taps[r, l, k] * delta
            change += (after.real * after.real + after.imag * after.imag) - (
                before.real * before.real + before.imag * before.imag
            )
            S[k, q + l] = after
    return change


def _history_array(dims: Dimensions, history) -> np.ndarray:
    if history is None:
        return np.zeros((dims.N, dims.L - 1))
    history = np.asarray(history, dtype=np.float64)
    if history.shape != (dims.N, dims.L - 1):
        raise ValueError(f"history has shape {history.shape}, expected {(dims.N, dims.L - 1)}")
    return history


def init_schedule(dims: Dimensions, history=None, config: PrecoderConfig | None = None) -> PhaseSchedule:
    """Constant extension of the last history angle over the whole block.

    Zero increments make the start feasible for every ``alpha``.
    """
    history = _history_array(dims, history)
    anchor = history[:, -1] if dims.L > 1 else np.zeros(dims.N)
    angles = np.repeat(anchor[:, None], dims.T, axis=1)
    return PhaseSchedule(angles, history)


def init_residuals(H: ChannelRealization, theta: PhaseSchedule, U: SymbolFrame) -> ResidualState:
    return ResidualState(mui_block(H, theta, U))


def _check_coordinate(H: ChannelRealization, r: int, q: int):
    if not (0 <= r < H.dims.N):
        raise IndexError(f"antenna index {r} out of range [0, {H.dims.N})")
    if not (0 <= q < H.dims.T):
        raise IndexError(f"time index {q} out of range [0, {H.dims.T})")


def coordinate_update(
    r: int,
    q: int,
    H: ChannelRealization,
    theta: PhaseSchedule,
    state: ResidualState,
    config: PrecoderConfig,
    *,
    _flip_branch: bool = False,
) -> float:
    """Best admissible value of ``theta[r, q]`` given all other angles.

    The arc is anchored at the *current* ``theta[r, q-1]`` (the history anchor
    when ``q == 0``). ``_flip_branch`` deliberately corrupts the rule and exists
    only for negative-control tests.
    """
    _check_consistent(H, theta)
    _check_coordinate(H, r, q)
    g, hh = _coordinate_correlation(r, q, H.tap_major, state.residuals)
    inv_sqrt_n = 1.0 / math.sqrt(H.dims.N)
    prev = theta.angles[r, q - 1] if q > 0 else theta.anchor[r]
    cur = theta.angles[r, q]
    has_next = q + 1 < H.dims.T
    nxt = theta.angles[r, q + 1] if has_next else 0.0
    # w = sum h * conj(S - h exp(j cur)/sqrt(N))
    w = g - np.exp(-1j * cur) * inv_sqrt_n * hh
    a = config.alpha * np.pi
    nr, ni = _choose(
        math.cos(prev), math.sin(prev), math.cos(nxt), math.sin(nxt), has_next,
        w.real, w.imag, math.cos(cur), math.sin(cur), math.cos(a), math.sin(a),
        config.arc == "two-sided", _flip_branch,
    )
    # step relative to the previous angle, principal value
    omega = math.atan2(ni * math.cos(prev) - nr * math.sin(prev), nr * math.cos(prev) + ni * math.sin(prev))
    return float(prev + omega)


def apply_update(
    r: int,
    q: int,
    new_angle: float,
    H: ChannelRealization,
    theta: PhaseSchedule,
    state: ResidualState,
) -> None:
    """Write ``new_angle`` into ``theta`` and patch the touched residuals in place."""
    _check_consistent(H, theta)
    _check_coordinate(H, r, q)
    delta = (np.exp(1j * new_angle) - np.exp(1j * theta.angles[r, q])) / math.sqrt(H.dims.N)
    state.objective += _patch_residuals(r, q, complex(delta), H.tap_major, state.residuals)
    theta.angles[r, q] = new_angle


def _unwrap(anchor: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Cumulative angles from phasors ``X[i, t]``, starting at the anchor angles."""
    prev = np.concatenate([np.exp(1j * anchor)[:, None], X[:, :-1]], axis=1)
    return anchor[:, None] + np.cumsum(np.angle(X * np.conj(prev)), axis=1)


def _run_frames(H: ChannelRealization, targets: np.ndarray, config: PrecoderConfig, history,
                *, trace: bool = False, flip: bool = False):
    d = H.dims
    history = _history_array(d, history)
    theta0 = init_schedule(d, history, config)
    F = targets.shape[0]
    # the constant starting schedule gives the same received signal for every frame
    rx0 = received_block(H, theta0)
    S = rx0[None] - targets
    Sr = np.ascontiguousarray(S.real.transpose(2, 1, 0))
    Si = np.ascontiguousarray(S.imag.transpose(2, 1, 0))
    anchor = theta0.anchor
    X0 = np.exp(1j * np.concatenate([anchor[:, None], theta0.angles, anchor[:, None]], axis=1))
    Xr = np.ascontiguousarray(np.repeat(X0.real[:, :, None], F, axis=2))
    Xi = np.ascontiguousarray(np.repeat(X0.imag[:, :, None], F, axis=2))
    taps = H.tap_major
    per_iter = np.zeros((config.max_iterations, F))
    iterations = np.zeros(F, dtype=np.int64)
    monotone = np.ones(F, dtype=np.bool_)
    feasible = np.ones(F, dtype=np.bool_)
    trace_buf = np.empty(config.max_iterations * d.N * d.T if trace else 0)
    initial = np.sum(np.abs(S) ** 2, axis=(1, 2))
    _ccd_frames(
        np.ascontiguousarray(taps.real), np.ascontiguousarray(taps.imag),
        np.ascontiguousarray(np.sum(np.abs(taps) ** 2, axis=2)),
        Xr, Xi, Sr, Si,
        float(config.alpha), int(config.max_iterations), float(config.rel_tolerance),
        config.arc == "two-sided", flip,
        per_iter, iterations, monotone, feasible, trace_buf,
    )
    residuals = (Sr + 1j * Si).transpose(2, 1, 0)
    X = (Xr + 1j * Xi)[:, 1 : d.T + 1]
    return X, residuals, initial, per_iter, iterations, monotone, feasible, trace_buf, history


def solve(
    H: ChannelRealization,
    U: SymbolFrame,
    config: PrecoderConfig,
    history=None,
    *,
    trace: bool = False,
    _flip_branch: bool = False,
) -> tuple[PhaseSchedule, SolveReport]:
    d = H.dims
    if U.symbols.shape != (d.M, d.T):
        raise ValueError(f"symbols have shape {U.symbols.shape}, expected {(d.M, d.T)}")
    X, residuals, initial, per_iter, iterations, monotone, feasible, trace_buf, history = _run_frames(
        H, U.targets[None], config, history, trace=trace, flip=_flip_branch
    )
    n_it = int(iterations[0])
    anchor = history[:, -1] if d.L > 1 else np.zeros(d.N)
    theta = PhaseSchedule(_unwrap(anchor, X[:, :, 0]), history)
    report = SolveReport(
        final_objective=float(per_iter[n_it - 1, 0]),
        objective_per_iteration=per_iter[:n_it, 0].copy(),
        iterations_run=n_it,
        sub_iteration_monotone=bool(monotone[0]),
        initial_objective=float(initial[0]),
        feasible_at_boundaries=bool(feasible[0])
        and theta.max_step() <= config.alpha * np.pi + FEASIBILITY_ATOL,
        trace=trace_buf[: n_it * d.N * d.T],
    )
    return theta, report


def solve_frames(
    H: ChannelRealization,
    targets: np.ndarray,
    config: PrecoderConfig,
    history=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve a stack of frames ``targets[f, k, t]`` (already energy-scaled) on one channel.

    Frame ``f`` gets the result ``solve`` would give it on its own, up to rounding.
    Returns the final residuals ``(F, M, T)`` and the final objectives ``(F,)``.
    """
    d = H.dims
    targets = np.asarray(targets, dtype=np.complex128)
    if targets.ndim != 3 or targets.shape[1:] != (d.M, d.T):
        raise ValueError(f"targets have shape {targets.shape}, expected (F, {d.M}, {d.T})")
    _, residuals, _, per_iter, iterations, _, feasible, _, _ = _run_frames(H, targets, config, history)
    if not feasible.all():
        raise RuntimeError("solver returned a schedule violating the phase-step bound")
    finals = per_iter[iterations - 1, np.arange(targets.shape[0])]
    return residuals, finals
