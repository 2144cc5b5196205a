"""Oracle suites behind ``ce-sim selfcheck``.

Every suite draws small random instances, compares a fast path against a
brute-force reference from :mod:`cesim.oracles` and counts the instances that
agree. Sizes are chosen so the whole run stays well under a minute.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import oracles
from .model import PrecoderConfig, ResidualState, mui_block
from .rate import rate_lower_bound
from .solver import apply_update, coordinate_update, solve

ALPHAS = (1.0, 0.5, 0.25, 0.1)


@dataclass
class SuiteResult:
    name: str
    passed: int
    total: int
    worst: float = 0.0
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.passed == self.total


@dataclass
class SelfcheckReport:
    suites: list[SuiteResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.ok for s in self.suites)

    def table(self) -> str:
        width = max(len(s.name) for s in self.suites)
        lines = [f"{'suite':<{width}}  result  passed/total  worst     seconds"]
        for s in self.suites:
            status = "PASS" if s.ok else "FAIL"
            lines.append(
                f"{s.name:<{width}}  {status:<6}  {s.passed:>6}/{s.total:<5}  {s.worst:<8.2e}  {s.seconds:6.2f}"
            )
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def coordinate_oracle(rng, count: int, arc: str = "backward", grid_points: int = 1 << 16, flip: bool = False):
    """Closed-form update versus a dense grid over the admissible arc.

    Returns ``(passed, worst)`` where ``worst`` is the largest excess over the
    grid minimum in units of the local magnitude.
    """
    passed, worst = 0, -math.inf
    for _ in range(count):
        alpha = float(rng.choice(ALPHAS)) if rng.random() < 0.5 else float(rng.uniform(0.01, 1.0))
        H, theta, U = oracles.random_instance(rng, alpha, feasible=arc == "two-sided")
        r = int(rng.integers(H.dims.N))
        q = int(rng.integers(H.dims.T))
        state = ResidualState(mui_block(H, theta, U))
        new = coordinate_update(r, q, H, theta, state, PrecoderConfig(alpha, arc=arc), _flip_branch=flip)
        cost, scale = oracles.local_cost(H, theta, U, r, q, [new])
        if arc == "backward":
            best, _ = oracles.grid_minimum(H, theta, U, r, q, alpha, grid_points)
        else:
            best, _ = oracles.two_sided_grid_minimum(H, theta, U, r, q, alpha, grid_points)
        excess = (cost[0] - best) / max(scale, 1e-300)
        worst = max(worst, excess)
        passed += excess <= 1e-6
    return passed, worst


def term_scale(H, U) -> np.ndarray:
    """Per-entry magnitude of the terms summed into ``S(k, t)``, shape ``(M, T)``.

    A residual recomputed from scratch is itself only accurate to about
    machine epsilon times this, so relative errors are measured against it.
    """
    gain = np.sum(np.abs(H.taps), axis=(1, 2)) / math.sqrt(H.dims.N)
    return gain[:, None] + np.abs(U.targets)


def incremental_oracle(rng, count: int, steps: int = 20, flip: bool = False):
    """Patched residuals and objective versus recomputation after a run of updates."""
    passed, worst = 0, 0.0
    for _ in range(count):
        alpha = float(rng.choice(ALPHAS))
        H, theta, U = oracles.random_instance(rng, alpha)
        state = ResidualState(mui_block(H, theta, U))
        cfg = PrecoderConfig(alpha)
        for _ in range(steps):
            r = int(rng.integers(H.dims.N))
            q = int(rng.integers(H.dims.T))
            apply_update(r, q, coordinate_update(r, q, H, theta, state, cfg, _flip_branch=flip), H, theta, state)
        fresh = mui_block(H, theta, U)
        scale = term_scale(H, U)
        err = max(
            float(np.max(np.abs(state.residuals - fresh) / scale)),
            abs(state.objective - float(np.sum(np.abs(fresh) ** 2))) / float(np.sum(scale**2)),
        )
        worst = max(worst, err)
        passed += err <= 1e-9
    return passed, worst


def descent_oracle(rng, count: int, flip: bool = False, max_dims=(8, 4, 4, 12)):
    """``(monotone_passed, feasible_passed, worst_rise, worst_step_excess)`` over solver runs."""
    mono = feas = 0
    worst_rise = worst_step = -math.inf
    for i in range(count):
        alpha = ALPHAS[i % len(ALPHAS)]
        H, theta, U = oracles.random_instance(rng, alpha, max_dims=max_dims)
        sched, report = solve(H, U, PrecoderConfig(alpha), theta.history, trace=True, _flip_branch=flip)
        path = np.concatenate([[report.initial_objective], report.trace])
        rise = float(np.max(np.diff(path) / (1.0 + path[:-1]))) if path.size > 1 else 0.0
        worst_rise = max(worst_rise, rise)
        mono += rise <= 1e-12 and report.sub_iteration_monotone
        step = sched.max_step() - alpha * np.pi
        worst_step = max(worst_step, step)
        feas += step <= 1e-12 and report.feasible_at_boundaries
    return mono, feas, worst_rise, worst_step


def logdet_oracle(rng, count: int):
    passed, worst = 0, 0.0
    for _ in range(count):
        T = int(rng.integers(1, 6))
        cov = oracles.random_psd(rng, T, int(rng.integers(0, T + 1)))
        energy = float(rng.uniform(0.5, 50.0))
        snr = float(10 ** rng.uniform(-1, 3))
        fast = rate_lower_bound(energy, cov, snr)
        ref = oracles.naive_rate(energy, cov, snr)
        err = abs(fast - ref) / max(abs(ref), 1.0)
        worst = max(worst, err)
        passed += err <= 1e-9
    return passed, worst


def _timed(report: SelfcheckReport, name: str, total: int, fn):
    t0 = time.perf_counter()
    passed, worst = fn()
    report.suites.append(SuiteResult(name, int(passed), total, float(worst), time.perf_counter() - t0))


def run_selfcheck(flip_branch: bool = False, seed: int = 2024, scale: float = 1.0) -> SelfcheckReport:
    """Run every suite; ``flip_branch`` corrupts the update rule as a negative control."""
    rng = np.random.default_rng(seed)
    n = lambda k: max(1, int(k * scale))  # noqa: E731
    report = SelfcheckReport()
    _timed(report, "coordinate update vs grid (backward arc)", n(300),
           lambda: coordinate_oracle(rng, n(300), "backward", flip=flip_branch))
    _timed(report, "coordinate update vs grid (two-sided arc)", n(300),
           lambda: coordinate_oracle(rng, n(300), "two-sided", flip=flip_branch))
    _timed(report, "incremental residuals vs recomputation", n(200),
           lambda: incremental_oracle(rng, n(200), flip=flip_branch))
    t0 = time.perf_counter()
    runs = n(200)
    mono, feas, rise, step = descent_oracle(rng, runs, flip=flip_branch)
    dt = time.perf_counter() - t0
    report.suites.append(SuiteResult("monotone sub-iterations", mono, runs, rise, dt))
    report.suites.append(SuiteResult("phase-step feasibility", feas, runs, step, 0.0))
    _timed(report, "log-det vs cofactor determinant", n(500), lambda: logdet_oracle(rng, n(500)))
    zero_ok = sum(
        rate_lower_bound(e, np.zeros((t, t)), s) == max(0.0, math.log2(e * s))
        for e, s, t in ((2.0, 4.0, 3), (1.0, 1.0, 1), (8.0, 0.5, 5), (0.5, 2.0, 2))
    )
    report.suites.append(SuiteResult("zero-interference closed form", zero_ok, 4))
    return report
