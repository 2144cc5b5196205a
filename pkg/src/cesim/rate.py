"""Achievable-rate lower bound and the operating-point searches built on it.

For a fixed channel the interference covariance ``E[I_k I_k^H | H]`` depends on
the common symbol energy and on the precoder, but not on the SNR, which only
adds ``(1/snr) I``. :class:`ErgodicRateEvaluator` therefore caches, per energy,
the eigenvalues of every user's covariance; afterwards the rate at any SNR is a
cheap sum of logs. Energy searches and the SNR bisection reuse that cache.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .channel import SeedSpec, sample_channel, sample_symbol_batch
from .model import ChannelRealization, Dimensions, PrecoderConfig
from .solver import solve_frames

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class RateConfig:
    """Monte-Carlo sizes and search settings for the ergodic rate bound.

    ``snr`` is the linear ``P_T / sigma^2``. ``frames_per_channel`` defaults to
    ``max(200, 4 T)`` once the block length is known.
    """

    snr: float = 1.0
    frames_per_channel: int | None = None
    num_channels: int = 50
    target_rate: float = 1.0
    energy_grid: tuple[float, float, int] = (1e-2, 1e2, 24)
    golden_steps: int = 5
    # golden-section probes are snapped to this many points per decade so that
    # repeated searches share cached covariance spectra
    energy_lattice: int = 48
    snr_bracket_db: tuple[float, float] = (-10.0, 40.0)
    snr_resolution_db: float = 0.1

    def __post_init__(self):
        if not self.snr > 0:
            raise ValueError("snr must be positive")
        if self.frames_per_channel is not None and self.frames_per_channel < 1:
            raise ValueError("frames_per_channel must be >= 1")
        if self.num_channels < 1:
            raise ValueError("num_channels must be >= 1")
        if not self.target_rate >= 0:
            raise ValueError("target_rate must be nonnegative")
        lo, hi, n = self.energy_grid
        if not (0 < lo < hi) or n < 3:
            raise ValueError("energy_grid must be (low, high, points) with 0 < low < high, points >= 3")
        if self.golden_steps < 0 or self.energy_lattice < 1:
            raise ValueError("golden_steps must be >= 0 and energy_lattice >= 1")
        if not self.snr_bracket_db[0] < self.snr_bracket_db[1] or not self.snr_resolution_db > 0:
            raise ValueError("invalid snr bracket or resolution")

    def frames(self, dims: Dimensions) -> int:
        if self.frames_per_channel is not None:
            return self.frames_per_channel
        return max(200, 4 * dims.T)


@dataclass
class MuiCovariance:
    """Per-user sample estimates of ``E[I_k I_k^H | H]``, shape ``(M, T, T)``."""

    per_user: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.per_user, dtype=np.complex128)
        if cov.ndim != 3 or cov.shape[1] != cov.shape[2]:
            raise ValueError("per_user must have shape (M, T, T)")
        cov = 0.5 * (cov + np.conj(np.swapaxes(cov, 1, 2)))
        scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
        if cov.size and np.min(np.linalg.eigvalsh(cov)) < -1e-10 * scale:
            raise ValueError("covariance estimate is not positive semidefinite")
        self.per_user = cov


def covariance_from_residuals(residuals: np.ndarray) -> MuiCovariance:
    """Sample average of ``I I^H`` over frames, residuals shaped ``(F, M, T)``."""
    F = residuals.shape[0]
    # (t, s) entry: mean_f I[f, t] conj(I[f, s])
    cov = np.einsum("fmt,fms->mts", residuals, np.conj(residuals)) / F
    return MuiCovariance(cov)


def estimate_mui_covariance(
    H: ChannelRealization,
    energies,
    config: RateConfig,
    precoder: PrecoderConfig,
    seed: SeedSpec,
    history=None,
) -> MuiCovariance:
    """Draw ``F`` symbol frames, precode each and average the interference outer products."""
    d = H.dims
    energies = np.broadcast_to(np.asarray(energies, dtype=np.float64), (d.M,))
    symbols = sample_symbol_batch(d, seed, config.frames(d))
    targets = np.sqrt(energies)[None, :, None] * symbols
    residuals, _ = solve_frames(H, targets, precoder, history)
    return covariance_from_residuals(residuals)


def rate_lower_bound(energy: float, cov: np.ndarray, snr: float, T: int | None = None) -> float:
    """``[log2 E - log2 det(cov + I/snr) / T]^+`` in bits per channel use.

    Evaluated as ``log2(E snr) - log2 det(I + snr cov) / T``, which is the same
    quantity; the factorized matrix then has unit diagonal scale, and a zero
    covariance gives ``log2(E snr)`` exactly.
    """
    cov = np.asarray(cov, dtype=np.complex128)
    T = cov.shape[0] if T is None else T
    if cov.shape != (T, T):
        raise ValueError(f"covariance has shape {cov.shape}, expected {(T, T)}")
    if not (snr > 0 and energy > 0):
        raise ValueError("snr and energy must be positive")
    if not np.all(np.isfinite(cov)):
        raise ValueError("covariance has non-finite entries")
    reg = np.eye(T) + snr * cov
    try:
        chol = scipy.linalg.cholesky(reg, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError("covariance plus noise is not positive definite") from exc
    logdet = 2.0 * np.sum(np.log2(np.real(np.diag(chol))))
    if not np.isfinite(logdet):
        raise ValueError("non-finite log-determinant, covariance is corrupted")
    return max(0.0, math.log2(energy * snr) - logdet / T)


def rate_from_spectrum(energy: float, eigenvalues: np.ndarray, snr: float) -> np.ndarray:
    """Same bound from covariance eigenvalues ``(..., T)``, one value per leading index."""
    T = eigenvalues.shape[-1]
    logdet = np.sum(np.log2(1.0 + snr * np.maximum(eigenvalues, 0.0)), axis=-1)
    return np.maximum(0.0, math.log2(energy * snr) - logdet / T)


class Infeasible(Exception):
    """Target rate not reached even at the top of the SNR bracket."""

    def __init__(self, message: str, energy: float, rate: float):
        super().__init__(message)
        self.energy = energy
        self.rate = rate


@dataclass
class ErgodicRateEvaluator:
    """Cached per-user ergodic rate bound for one ``(dims, alpha)`` setting.

    Channel ``c`` uses stream ``("channel", c)`` and its frames use stream
    ``("symbols", c)``, so all energies and both arc rules see the same
    randomness (common random numbers across the sweep).
    """

    dims: Dimensions
    precoder: PrecoderConfig
    config: RateConfig
    master_seed: int
    max_floor_extensions: int = 2
    _channels: list = field(default_factory=list, init=False, repr=False)
    _symbols: list = field(default_factory=list, init=False, repr=False)
    _spectra: dict = field(default_factory=dict, init=False, repr=False)

    def _ensure_draws(self):
        if self._channels:
            return
        d = self.dims
        for c in range(self.config.num_channels):
            self._channels.append(sample_channel(d, SeedSpec.for_task(self.master_seed, "channel", c)))
            self._symbols.append(
                sample_symbol_batch(d, SeedSpec.for_task(self.master_seed, "symbols", c), self.config.frames(d))
            )

    @property
    def evaluated_energies(self) -> list[float]:
        return sorted(self._spectra)

    def covariances(self, energy: float, channel: int) -> MuiCovariance:
        self._ensure_draws()
        targets = math.sqrt(energy) * self._symbols[channel]
        residuals, _ = solve_frames(self._channels[channel], targets, self.precoder)
        return covariance_from_residuals(residuals)

    def spectrum(self, energy: float) -> np.ndarray:
        """Eigenvalues of every covariance, shape ``(C, M, T)``; cached by energy."""
        energy = float(energy)
        cached = self._spectra.get(energy)
        if cached is not None:
            return cached
        C = self.config.num_channels
        out = np.empty((C, self.dims.M, self.dims.T))
        for c in range(C):
            out[c] = np.linalg.eigvalsh(self.covariances(energy, c).per_user)
        self._spectra[energy] = out
        log.debug("spectrum for E=%.6g (alpha=%g, N=%d)", energy, self.precoder.alpha, self.dims.N)
        return out

    def rate(self, energy: float, snr: float) -> float:
        """Ergodic bound averaged over channels and (statistically identical) users."""
        if not energy > 0:
            raise ValueError("energy must be positive")
        return float(np.mean(rate_from_spectrum(energy, self.spectrum(energy), snr)))

    def _snap(self, energy: float) -> float:
        steps = self.config.energy_lattice
        return float(10.0 ** (round(math.log10(energy) * steps) / steps))

    def energy_grid(self) -> np.ndarray:
        lo, hi, n = self.config.energy_grid
        return np.logspace(math.log10(lo), math.log10(hi), int(n))

    def _rate_or_zero(self, energy: float, snr: float) -> float:
        # the log-det term is >= 0, so the bound never exceeds log2(E snr); at
        # E snr <= 1 it is exactly 0 and no covariance is needed
        if energy * snr <= 1.0:
            return 0.0
        return self.rate(energy, snr)

    def grid_rates(self, snr: float) -> np.ndarray:
        """Rates at every grid energy, evaluated exhaustively."""
        return np.array([self._rate_or_zero(e, snr) for e in self.energy_grid()])

    def optimize_energy(self, snr: float) -> tuple[float, float]:
        """Grid search over log-spaced energies, then one golden-section pass.

        The grid argmax is found without evaluating points whose upper bound
        ``log2(E snr)`` is already below the best rate seen; the result is the
        same as scanning the whole grid (``np.argmax`` tie-breaking included).
        """
        grid = self.energy_grid()
        n = len(grid)
        best, best_r = n - 1, -math.inf
        # descending energies: the upper bound decreases, so the scan can stop early
        for i in range(n - 1, -1, -1):
            e = float(grid[i])
            if e * snr > 1.0 and math.log2(e * snr) < best_r:
                break
            r = self._rate_or_zero(e, snr)
            if r >= best_r:
                best, best_r = i, r
        best_e = float(grid[best])
        if self.config.golden_steps == 0 or best_r <= 0:
            return best_e, best_r
        a = math.log10(grid[max(best - 1, 0)])
        b = math.log10(grid[min(best + 1, n - 1)])

        def value(x):
            e = self._snap(10.0**x)
            return self._rate_or_zero(e, snr), e

        x1 = b - GOLDEN * (b - a)
        x2 = a + GOLDEN * (b - a)
        (r1, e1), (r2, e2) = value(x1), value(x2)
        for _ in range(self.config.golden_steps - 2):
            if r1 >= r2:
                b, x2, r2, e2 = x2, x1, r1, e1
                x1 = b - GOLDEN * (b - a)
                r1, e1 = value(x1)
            else:
                a, x1, r1, e1 = x1, x2, r2, e2
                x2 = a + GOLDEN * (b - a)
                r2, e2 = value(x2)
        for r, e in ((r1, e1), (r2, e2)):
            if r > best_r:
                best_r, best_e = r, e
        return best_e, best_r

    def reaches(self, snr: float, target_rate: float) -> bool:
        """Whether the optimized rate at ``snr`` meets the target.

        Any grid energy meeting it settles the question, since the optimizer
        never returns less than the grid maximum. Cached grid points are tried
        first, then the rest from the top of the grid down.
        """
        grid = [float(e) for e in self.energy_grid()][::-1]
        grid.sort(key=lambda e: e not in self._spectra)
        for e in grid:
            if e * snr < 2.0**target_rate:
                continue  # bounded by log2(E snr) < target
            if self._rate_or_zero(e, snr) >= target_rate:
                return True
        return self.optimize_energy(snr)[1] >= target_rate

    def _precheck(self, snrs_db) -> None:
        if not self._spectra:
            return
        e = max(self._spectra)
        rates = [self.rate(e, db_to_linear(x)) for x in snrs_db]
        if any(b < a - 1e-12 for a, b in zip(rates, rates[1:])):
            warnings.warn(
                f"rate at E={e:.4g} is not monotone in snr over {list(snrs_db)} dB: {rates}",
                RuntimeWarning,
                stacklevel=3,
            )

    def min_snr_db(self, target_rate: float) -> tuple[float, float, float]:
        """Bisection for the smallest SNR (dB) whose optimized rate reaches ``target_rate``.

        Returns ``(snr_db, energy, rate)`` at the upper end of the final
        interval and raises :class:`Infeasible` when the top of the bracket
        falls short. If the target is already met at the bottom of the bracket,
        the bracket is moved down in steps of its own width, at most
        ``max_floor_extensions`` times.
        """
        if not target_rate > 0:
            raise ValueError("target_rate must be positive")
        lo, hi = self.config.snr_bracket_db
        if not self.reaches(db_to_linear(hi), target_rate):
            e_hi, r_hi = self.optimize_energy(db_to_linear(hi))
            raise Infeasible(
                f"rate {r_hi:.4f} at {hi:g} dB is below the target {target_rate:g}", e_hi, r_hi
            )
        self._precheck((lo, 0.5 * (lo + hi), hi))
        width = hi - lo
        for _ in range(self.max_floor_extensions):
            if not self.reaches(db_to_linear(lo), target_rate):
                break
            log.info("target met at the bracket floor %.1f dB, moving the bracket down", lo)
            lo, hi = lo - width, lo
        else:
            if self.reaches(db_to_linear(lo), target_rate):
                e, r = self.optimize_energy(db_to_linear(lo))
                warnings.warn(f"target met at {lo:g} dB, reporting the floor", RuntimeWarning, stacklevel=2)
                return lo, e, r
        while hi - lo > self.config.snr_resolution_db:
            mid = 0.5 * (lo + hi)
            if self.reaches(db_to_linear(mid), target_rate):
                hi = mid
            else:
                lo = mid
        e_hi, r_hi = self.optimize_energy(db_to_linear(hi))
        return hi, e_hi, r_hi


def per_user_ergodic_rate(
    dims: Dimensions,
    alpha: float,
    snr: float,
    energy: float,
    config: RateConfig,
    seed: int,
    precoder: PrecoderConfig | None = None,
) -> float:
    precoder = precoder or PrecoderConfig(alpha)
    return ErgodicRateEvaluator(dims, precoder, config, seed).rate(energy, snr)


def optimize_symbol_energy(
    dims: Dimensions,
    alpha: float,
    snr: float,
    config: RateConfig,
    seed: int,
    precoder: PrecoderConfig | None = None,
) -> tuple[float, float]:
    precoder = precoder or PrecoderConfig(alpha)
    return ErgodicRateEvaluator(dims, precoder, config, seed).optimize_energy(snr)


def min_power_for_rate(
    dims: Dimensions,
    alpha: float,
    target_rate: float,
    config: RateConfig,
    seed: int,
    precoder: PrecoderConfig | None = None,
) -> tuple[float, float, float]:
    """Minimum ``P_T/sigma^2`` in dB for the target per-user rate; see ``ErgodicRateEvaluator.min_snr_db``."""
    precoder = precoder or PrecoderConfig(alpha)
    return ErgodicRateEvaluator(dims, precoder, config, seed).min_snr_db(target_rate)
