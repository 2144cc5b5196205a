"""Domain types and the noise-free signal model for CE downlink precoding.

Index conventions used throughout the package (0-based, Python style):

* users ``k`` in ``[0, M)``, antennas ``i`` in ``[0, N)``, taps ``l`` in ``[0, L)``
* block time ``t`` in ``[0, T)``; time index 0 is the first transmitted sample
* ``PhaseSchedule.history[:, j]`` holds the fixed angle at block time ``j - (L - 1)``,
  so ``history[:, -1]`` is the sample sent just before the block starts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Dimensions:
    num_antennas: int
    num_users: int
    channel_taps: int
    block_length: int

    def __post_init__(self):
        for name in ("num_antennas", "num_users", "channel_taps", "block_length"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.num_antennas < self.num_users:
            warnings.warn(
                f"N={self.num_antennas} < M={self.num_users}: precoding is unlikely to "
                "suppress multi-user interference",
                stacklevel=3,
            )

    # short aliases, the algorithm code reads better with them
    @property
    def N(self) -> int:
        return self.num_antennas

    @property
    def M(self) -> int:
        return self.num_users

    @property
    def L(self) -> int:
        return self.channel_taps

    @property
    def T(self) -> int:
        return self.block_length


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Complex FIR taps ``taps[k, i, l]`` from antenna ``i`` to user ``k``."""

    taps: np.ndarray
    dims: Dimensions

    def __post_init__(self):
        taps = np.ascontiguousarray(self.taps, dtype=np.complex128)
        expected = (self.dims.M, self.dims.N, self.dims.L)
        if taps.shape != expected:
            raise ValueError(f"channel taps have shape {taps.shape}, expected {expected}")
        if not np.all(np.isfinite(taps)):
            raise ValueError("channel taps must be finite")
        taps.flags.writeable = False
        object.__setattr__(self, "taps", taps)
        # [antenna, tap, user] layout keeps one coordinate update's working set contiguous
        tap_major = np.ascontiguousarray(taps.transpose(1, 2, 0))
        tap_major.flags.writeable = False
        object.__setattr__(self, "tap_major", tap_major)


@dataclass(frozen=True, eq=False)
class SymbolFrame:
    """Unit-energy symbols ``symbols[k, t]`` and per-user energies ``E_k``."""

    symbols: np.ndarray
    energies: np.ndarray

    def __post_init__(self):
        symbols = np.ascontiguousarray(self.symbols, dtype=np.complex128)
        energies = np.ascontiguousarray(np.atleast_1d(self.energies), dtype=np.float64)
        if symbols.ndim != 2:
            raise ValueError("symbols must be a 2-D [user, time] array")
        if energies.shape != (symbols.shape[0],):
            raise ValueError(
                f"energies has shape {energies.shape}, expected ({symbols.shape[0]},)"
            )
        if np.any(energies < 0) or not np.all(np.isfinite(energies)):
            raise ValueError("energies must be finite and nonnegative")
        if not np.all(np.isfinite(symbols)):
            raise ValueError("symbols must be finite")
        symbols.flags.writeable = False
        energies.flags.writeable = False
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "energies", energies)

    @classmethod
    def with_common_energy(cls, symbols: np.ndarray, energy: float) -> "SymbolFrame":
        return cls(symbols, np.full(np.shape(symbols)[0], float(energy)))

    @property
    def targets(self) -> np.ndarray:
        """Scaled symbols ``sqrt(E_k) u_k[t]`` the users should receive."""
        return np.sqrt(self.energies)[:, None] * self.symbols


@dataclass
class PhaseSchedule:
    """Unwrapped transmit angles ``angles[i, t]`` plus fixed boundary ``history``.

    ``history`` has shape ``(N, L - 1)`` and is never modified by the solver.
    ``angles`` is mutated in place while solving.
    """

    angles: np.ndarray
    history: np.ndarray

    def __post_init__(self):
        self.angles = np.ascontiguousarray(self.angles, dtype=np.float64)
        history = np.array(self.history, dtype=np.float64, copy=True)
        if self.angles.ndim != 2 or history.ndim != 2:
            raise ValueError("angles and history must be 2-D [antenna, time] arrays")
        if history.shape[0] != self.angles.shape[0]:
            raise ValueError("history and angles disagree on the number of antennas")
        if not (np.all(np.isfinite(self.angles)) and np.all(np.isfinite(history))):
            raise ValueError("phase angles must be finite")
        history.flags.writeable = False
        self.history = history

    @property
    def anchor(self) -> np.ndarray:
        """Angle sent right before the block; zero when ``L == 1`` (empty history)."""
        if self.history.shape[1] == 0:
            return np.zeros(self.angles.shape[0])
        return self.history[:, -1]

    def extended(self) -> np.ndarray:
        """History and block angles side by side, shape ``(N, L - 1 + T)``."""
        return np.concatenate([self.history, self.angles], axis=1)

    def wrapped(self) -> np.ndarray:
        """Block angles mapped to ``[-pi, pi)`` for export."""
        return np.mod(self.angles + np.pi, 2 * np.pi) - np.pi

    def max_step(self) -> float:
        """Largest ``|theta_i[t] - theta_i[t-1]|`` over the block, anchor included."""
        steps = np.diff(np.concatenate([self.anchor[:, None], self.angles], axis=1), axis=1)
        return float(np.max(np.abs(steps))) if steps.size else 0.0

    def copy(self) -> "PhaseSchedule":
        return PhaseSchedule(self.angles.copy(), self.history)


@dataclass(frozen=True)
class PrecoderConfig:
    alpha: float
    max_iterations: int = 5
    rel_tolerance: float = 1e-4
    # "two-sided" keeps every sub-iteration a descent step, "backward" clamps
    # against the previous angle only (see cesim.solver)
    arc: str = "two-sided"

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha out of (0,1]: {self.alpha!r}")
        if self.arc not in ("two-sided", "backward"):
            raise ValueError(f"arc must be 'two-sided' or 'backward', got {self.arc!r}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError("max_iterations must be a positive integer")
        if not self.rel_tolerance >= 0:
            raise ValueError("rel_tolerance must be nonnegative")


@dataclass
class ResidualState:
    """Residuals ``S(k, t)`` (received minus intended) and ``f = sum |S|^2``."""

    residuals: np.ndarray
    objective: float = field(default=float("nan"))

    def __post_init__(self):
        self.residuals = np.ascontiguousarray(self.residuals, dtype=np.complex128)
        if np.isnan(self.objective):
            self.objective = float(np.sum(np.abs(self.residuals) ** 2))


def _check_consistent(H: ChannelRealization, theta: PhaseSchedule, U: SymbolFrame | None = None):
    d = H.dims
    if theta.angles.shape != (d.N, d.T):
        raise ValueError(f"angles have shape {theta.angles.shape}, expected {(d.N, d.T)}")
    if theta.history.shape != (d.N, d.L - 1):
        raise ValueError(
            f"history has shape {theta.history.shape}, expected {(d.N, d.L - 1)}"
        )
    if U is not None and U.symbols.shape != (d.M, d.T):
        raise ValueError(f"symbols have shape {U.symbols.shape}, expected {(d.M, d.T)}")


def _check_index(H: ChannelRealization, k: int, t: int):
    if not (0 <= k < H.dims.M):
        raise IndexError(f"user index {k} out of range [0, {H.dims.M})")
    if not (0 <= t < H.dims.T):
        raise IndexError(f"time index {t} out of range [0, {H.dims.T})")


def noiseless_rx(H: ChannelRealization, theta: PhaseSchedule, k: int, t: int) -> complex:
    """Noise-free received sample of user ``k`` at time ``t``, without the sqrt(P_T) gain."""
    _check_consistent(H, theta)
    _check_index(H, k, t)
    L = H.dims.L
    # column t + L - 1 - l of the extended array is the angle sent at time t - l
    cols = t + L - 1 - np.arange(L)
    phasors = np.exp(1j * theta.extended()[:, cols])  # (N, L)
    return complex(np.sum(H.taps[k] * phasors) / np.sqrt(H.dims.N))


def received_block(H: ChannelRealization, theta: PhaseSchedule) -> np.ndarray:
    """All noise-free received samples at once, shape ``(M, T)``."""
    _check_consistent(H, theta)
    d = H.dims
    x = np.exp(1j * theta.extended())
    rx = np.zeros((d.M, d.T), dtype=np.complex128)
    for l in range(d.L):
        start = d.L - 1 - l
        rx += H.taps[:, :, l] @ x[:, start : start + d.T]
    return rx / np.sqrt(d.N)


def mui(H: ChannelRealization, theta: PhaseSchedule, U: SymbolFrame, k: int, t: int) -> complex:
    """Multi-user interference seen by user ``k`` at time ``t``."""
    _check_consistent(H, theta, U)
    return noiseless_rx(H, theta, k, t) - np.sqrt(U.energies[k]) * U.symbols[k, t]


def mui_block(H: ChannelRealization, theta: PhaseSchedule, U: SymbolFrame) -> np.ndarray:
    _check_consistent(H, theta, U)
    return received_block(H, theta) - U.targets


def objective(H: ChannelRealization, theta: PhaseSchedule, U: SymbolFrame) -> float:
    return float(np.sum(np.abs(mui_block(H, theta, U)) ** 2))
