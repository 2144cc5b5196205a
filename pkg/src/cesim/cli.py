"""``ce-sim``: sweep runner, self-check and single-point rate evaluation.

Config files are flat ``key=value`` lines with ``#`` comments; list-valued keys
take comma-separated values. Example::

    M=5
    L=4
    T=64
    N=20,40,80
    alpha=1.0,0.5,0.25
    target_rate=1.0
    seed=42
    out=fig3.csv
"""

from __future__ import annotations

import argparse
import ast
import concurrent.futures
import hashlib
import logging
import math
import os
import subprocess
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .model import Dimensions, PrecoderConfig
from .rate import ErgodicRateEvaluator, Infeasible, RateConfig, db_to_linear

log = logging.getLogger("cesim")

CSV_HEADER = "N,M,L,T,alpha,snr_min_db,energy,rate_bpcu,seed"
THREADS_ENV = "CE_SIM_THREADS"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    N: tuple[int, ...]
    alpha: tuple[float, ...]
    M: int
    L: int
    T: int
    seed: int
    out: str
    target_rate: tuple[float, ...] = ()
    snr_db: tuple[float, ...] = ()
    num_channels: int = 50
    frames_per_channel: int | None = None
    max_iterations: int = 5
    arc: str = "two-sided"
    energy_min: float = 1e-2
    energy_max: float = 1e2
    energy_points: int = 24
    golden_steps: int = 5

    def rate_config(self) -> RateConfig:
        return RateConfig(
            frames_per_channel=self.frames_per_channel,
            num_channels=self.num_channels,
            target_rate=self.target_rate[0] if self.target_rate else 1.0,
            energy_grid=(self.energy_min, self.energy_max, self.energy_points),
            golden_steps=self.golden_steps,
        )

    def points(self) -> list[tuple[int, float]]:
        """Sweep points in output order: N outer, alpha inner."""
        return [(n, a) for n in self.N for a in self.alpha]


_LISTS = {"N": int, "alpha": float, "target_rate": float, "snr_db": float}
_SCALARS = {
    "M": int, "L": int, "T": int, "seed": int, "out": str,
    "num_channels": int, "frames_per_channel": int, "max_iterations": int, "arc": str,
    "energy_min": float, "energy_max": float, "energy_points": int, "golden_steps": int,
}
_REQUIRED = ("N", "alpha", "M", "L", "T", "seed", "out")


def _convert(key: str, raw: str, kind):
    raw = raw.strip()
    if raw == "":
        raise ConfigError(f"{key}: empty value")
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: malformed {kind.__name__} {raw!r}") from None


def parse_config(text: str) -> ExperimentSpec:
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in values:
            raise ConfigError(f"{key}: given twice")
        if key in _LISTS:
            items = [x for x in raw.split(",")]
            if raw.strip() == "" or any(x.strip() == "" for x in items):
                raise ConfigError(f"{key}: empty list")
            values[key] = tuple(_convert(key, x, _LISTS[key]) for x in items)
        elif key in _SCALARS:
            values[key] = _convert(key, raw, _SCALARS[key])
        else:
            raise ConfigError(f"unknown key {key!r}")
        _check_value(key, values[key])
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key {missing[0]}")
    if bool(values.get("target_rate")) == bool(values.get("snr_db")):
        raise ConfigError("target_rate/snr_db: give exactly one of the two")
    if not values.get("energy_min", 1e-2) < values.get("energy_max", 1e2):
        raise ConfigError("energy_min/energy_max: need energy_min < energy_max")
    return ExperimentSpec(**values)


_POSITIVE = ("M", "L", "T", "num_channels", "max_iterations", "frames_per_channel")


def _check_value(key: str, value):
    if key in _POSITIVE and value < 1:
        raise ConfigError(f"{key} must be >= 1, got {value}")
    if key == "N" and any(n < 1 for n in value):
        raise ConfigError("N must be >= 1")
    if key == "alpha":
        for a in value:
            if not 0.0 < a <= 1.0:
                raise ConfigError(f"alpha out of (0,1]: {a}")
    if key == "target_rate" and any(not (r > 0 and math.isfinite(r)) for r in value):
        raise ConfigError("target_rate must be positive and finite")
    if key == "snr_db" and any(not math.isfinite(x) for x in value):
        raise ConfigError("snr_db must be finite")
    if key == "seed" and not 0 <= value < 2**64:
        raise ConfigError("seed must be in [0, 2^64)")
    if key == "golden_steps" and value < 0:
        raise ConfigError("golden_steps must be >= 0")
    if key == "energy_points" and value < 3:
        raise ConfigError("energy_points must be >= 3")
    if key in ("energy_min", "energy_max") and not (value > 0 and math.isfinite(value)):
        raise ConfigError(f"{key} must be positive")
    if key == "arc" and value not in ("two-sided", "backward"):
        raise ConfigError("arc must be two-sided or backward")


def build_id() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=10,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"cesim-{__version__}-{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"cesim-{__version__}"


_NUMERIC_MODULES = ("model", "channel", "solver", "rate")


def source_digest() -> str:
    """Hash of the numerical modules' syntax trees, docstrings and comments excluded.

    Lets a cached sweep be matched to the code that produced it.
    """
    h = hashlib.blake2b(digest_size=8)
    for name in _NUMERIC_MODULES:
        tree = ast.parse((Path(__file__).parent / f"{name}.py").read_text())
        for node in ast.walk(tree):
            body = getattr(node, "body", None)
            if (
                isinstance(body, list) and body and isinstance(body[0], ast.Expr)
                and isinstance(body[0].value, ast.Constant) and isinstance(body[0].value.value, str)
            ):
                node.body = body[1:] or [ast.Pass()]
        h.update(ast.dump(tree).encode())
    return h.hexdigest()


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf"
    return repr(float(x))


def _sweep_point(spec: ExperimentSpec, n: int, alpha: float) -> list[str]:
    """All CSV rows for one (N, alpha) pair; one per target rate or SNR value."""
    # single-threaded BLAS keeps eigenvalues bitwise independent of the worker layout
    with threadpool_limits(1):
        dims = Dimensions(n, spec.M, spec.L, spec.T)
        precoder = PrecoderConfig(alpha, max_iterations=spec.max_iterations, arc=spec.arc)
        ev = ErgodicRateEvaluator(dims, precoder, spec.rate_config(), spec.seed)
        rows = []
        for target in spec.target_rate:
            try:
                snr_db, energy, rate = ev.min_snr_db(target)
            except Infeasible as exc:
                snr_db, energy, rate = math.inf, exc.energy, exc.rate
            rows.append((snr_db, energy, rate))
        for snr_db in spec.snr_db:
            energy, rate = ev.optimize_energy(db_to_linear(snr_db))
            rows.append((snr_db, energy, rate))
    prefix = f"{n},{spec.M},{spec.L},{spec.T},{_fmt(alpha)}"
    return [f"{prefix},{_fmt(s)},{_fmt(e)},{_fmt(r)},{spec.seed}" for s, e, r in rows]


def _point_task(args):
    spec, n, alpha = args
    try:
        return _sweep_point(spec, n, alpha), None
    except Exception as exc:  # reported by the writer, the sweep carries on
        return None, f"{type(exc).__name__}: {exc}"


def resolve_workers(flag: int | None = None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    else:
        value = flag if flag is not None else (os.cpu_count() or 1)
    if value < 1:
        raise ConfigError(f"parallelism must be >= 1, got {value}")
    return value


def config_line(spec: ExperimentSpec) -> str:
    """The ``# config:`` provenance line, every ExperimentSpec field in declaration order."""
    return "# config: " + " ".join(
        f"{f.name}={','.join(map(str, v)) if isinstance(v, tuple) else v}"
        for f in fields(spec)
        for v in [getattr(spec, f.name)]
    )


def _provenance(spec: ExperimentSpec, workers: int) -> list[str]:
    mode = "min snr for target rate" if spec.target_rate else "rate at fixed snr"
    return [
        f"# ce-sim {build_id()}",
        f"# source-digest: {source_digest()}",
        config_line(spec),
        f"# mode: {mode}; snr_min_db holds the snr column in fixed-snr mode",
        f"# frames_per_channel={spec.rate_config().frames(Dimensions(1, 1, spec.L, spec.T))} "
        f"num_channels={spec.num_channels}; rate is the per-user bound averaged over channels and users",
        f"# started: {time.strftime('%Y-%m-%dT%H:%M:%S%z')} workers={workers}",
    ]


def run_sweep(spec: ExperimentSpec, workers: int | None = None, out: str | os.PathLike | None = None) -> int:
    """Write the sweep CSV and return the number of sweep points that failed."""
    workers = resolve_workers(workers)
    path = Path(out if out is not None else spec.out)
    tasks = [(spec, n, a) for n, a in spec.points()]
    failures = 0
    try:
        fh = open(path, "w", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    with fh:
        for line in _provenance(spec, workers):
            fh.write(line + "\n")
        fh.write(CSV_HEADER + "\n")
        fh.flush()
        if workers == 1:
            results = map(_point_task, tasks)
            pool = None
        else:
            pool = concurrent.futures.ProcessPoolExecutor(max_workers=workers)
            results = pool.map(_point_task, tasks)
        try:
            # map yields in submission order, so rows come out in config order
            for (spec_, n, a), (rows, error) in zip(tasks, results):
                if error is not None:
                    failures += 1
                    log.error("sweep point N=%d alpha=%g failed: %s", n, a, error)
                    fh.write(f"# failed N={n} alpha={a!r}: {error}\n")
                    continue
                for row in rows:
                    fh.write(row + "\n")
                fh.flush()
                log.info("finished N=%d alpha=%g", n, a)
        finally:
            if pool is not None:
                pool.shutdown()
        fh.write(f"# finished: {time.strftime('%Y-%m-%dT%H:%M:%S%z')}\n")
    return failures


def csv_body(text: str) -> str:
    """Non-comment lines of a sweep CSV, the part that must be reproducible."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def _cmd_run(args) -> int:
    try:
        spec = parse_config(Path(args.config).read_text())
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        failures = run_sweep(spec, args.workers, args.out)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 1 if failures else 0


def _cmd_selfcheck(args) -> int:
    from .selfcheck import run_selfcheck

    report = run_selfcheck(flip_branch=args.flip_branch, seed=args.seed)
    print(report.table())
    return 0 if report.passed else 1


def _cmd_rate(args) -> int:
    try:
        dims = Dimensions(args.N, args.M, args.L, args.T)
        precoder = PrecoderConfig(args.alpha, arc=args.arc)
        config = RateConfig(
            snr=db_to_linear(args.snr_db),
            num_channels=args.channels,
            frames_per_channel=args.frames,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    with threadpool_limits(1):
        ev = ErgodicRateEvaluator(dims, precoder, config, args.seed)
        if args.energy is None:
            energy, rate = ev.optimize_energy(config.snr)
        else:
            energy, rate = args.energy, ev.rate(args.energy, config.snr)
    print(CSV_HEADER)
    print(f"{args.N},{args.M},{args.L},{args.T},{_fmt(args.alpha)},{_fmt(args.snr_db)},{_fmt(energy)},{_fmt(rate)},{args.seed}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ce-sim", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a sweep described by a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="override the output path from the config")
    run.add_argument("--workers", type=int, default=None, help=f"process count (default: CPUs; {THREADS_ENV} wins)")
    run.set_defaults(func=_cmd_run)

    check = sub.add_parser("selfcheck", help="run the oracle suites")
    check.add_argument("--seed", type=int, default=2024)
    check.add_argument("--flip-branch", action="store_true", help=argparse.SUPPRESS)
    check.set_defaults(func=_cmd_selfcheck)

    rate = sub.add_parser("rate", help="evaluate the rate bound at one point")
    rate.add_argument("--N", type=int, required=True)
    rate.add_argument("--M", type=int, required=True)
    rate.add_argument("--L", type=int, required=True)
    rate.add_argument("--T", type=int, required=True)
    rate.add_argument("--alpha", type=float, required=True)
    rate.add_argument("--snr-db", type=float, required=True)
    rate.add_argument("--energy", type=float, default=None, help="common symbol energy; optimized when omitted")
    rate.add_argument("--seed", type=int, default=0)
    rate.add_argument("--channels", type=int, default=50)
    rate.add_argument("--frames", type=int, default=None)
    rate.add_argument("--arc", choices=("two-sided", "backward"), default="two-sided")
    rate.set_defaults(func=_cmd_rate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
