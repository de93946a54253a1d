"""Sweep harness: grid experiments comparing simulation against bounds.

A sweep is described by a :class:`SweepSpec` (experiment kind, arrival
grid, code triples, service family, simulation budget).  Each grid
point runs one experiment and yields :class:`ComparisonRow` records
whose pass flags are recomputable from the row's own numbers;
:func:`write_csv` renders rows deterministically, so a fixed spec and
seed always produce byte-identical output, serial or parallel.

Experiment kinds and their pass rules (tolerances are one-sided at
3 combined standard errors unless noted):

* ``gain-sweep``      simulated replication-minus-split gain; passes
                      when the gain is positive and at least the
                      analytical prediction minus 3 s.e.
* ``bound-check``     simulated k-split mean; passes when it does not
                      exceed the mean latency bound plus 3 s.e.
* ``tail-check``      empirical P(latency > t); passes when it does
                      not exceed the tail bound plus 3 s.e.
                      (exponential service only).
* ``batch-sampling``  simulated batch-dispatch mean; passes when
                      mean <= tight bound + 3 s.e. <= loose bound and
                      the moment-space bound also dominates the mean.
* ``residual-check``  busy-server residual; passes when it matches the
                      renewal formula within 2 percent.

Config files are flat UTF-8 ``key=value`` lines; ``#`` starts a
comment.  Recognized keys: ``experiment``, ``lambda.grid``,
``code.n``, ``code.k``, ``code.d``, ``dist.family``, ``dist.shape``,
``dist.shift``, ``sim.L``, ``sim.seed``, ``sim.warmup_jobs``,
``sim.measured_jobs``, ``out.path``.  ``code.*`` accept
comma-separated aligned lists (scalars broadcast); omitted ``sim.*``
keys fall back to the simulator defaults (L = max(2000, 200 * splits),
warmup = 20 * L).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import bounds
from . import distributions as dists
from .simulator import (
    BatchSampling,
    ClusterConfig,
    KSplit,
    gain_experiment,
    empirical_residual,
    run,
)

__all__ = [
    "CSV_COLUMNS",
    "ComparisonRow",
    "ConfigError",
    "PRESETS",
    "SweepSpec",
    "load_config",
    "rows_pass",
    "run_sweep",
    "write_csv",
]


class ConfigError(ValueError):
    """Raised for malformed sweep configuration; the CLI maps it to exit 2."""


_KINDS = ("gain-sweep", "bound-check", "tail-check", "batch-sampling", "residual-check")

# tail-check budget: probability that any chunk queue exceeds the
# truncation level.  Fixed rather than configurable; the CSV records
# the resulting thresholds explicitly.
_TAIL_EPSILON = 0.01
_TAIL_POINTS = 11


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: experiment kind, coordinate grids, and budget overrides.

    ``codes`` holds (n, k, d) triples.  For the queue-based kinds the
    fanout satisfies n = d * k; for batch-sampling only (n, k) with
    k < n < 2k matters and d is ignored.  ``L``, ``warmup_jobs`` and
    ``measured_jobs`` of ``None`` defer to the simulator defaults.
    """

    experiment: str
    lam_grid: tuple[float, ...]
    codes: tuple[tuple[int, int, int], ...]
    family: str = "exponential"
    shape: float = 1.0
    shift: float = 0.0
    L: int | None = None
    seed: int = 0
    warmup_jobs: int | None = None
    measured_jobs: int | None = None
    out_path: str | None = None

    def __post_init__(self) -> None:
        if self.experiment not in _KINDS:
            raise ConfigError(
                f"unknown experiment '{self.experiment}' (expected one of {', '.join(_KINDS)})"
            )
        if not self.lam_grid:
            raise ConfigError("lambda grid empty")
        for lam in self.lam_grid:
            if not 0.0 < lam < 1.0:
                raise ConfigError(f"lambda.grid value {lam} outside (0, 1)")
        if not self.codes:
            raise ConfigError("code grid empty (set code.n / code.k)")
        try:
            fam = dists.canonical_family(self.family)
        except ValueError as exc:
            raise ConfigError(f"dist.family: {exc}") from None
        object.__setattr__(self, "family", fam)
        for n, k, d in self.codes:
            self._check_code(n, k, d)
        if self.experiment in ("tail-check", "batch-sampling") and fam != "exponential":
            raise ConfigError(f"dist.family '{fam}' unsupported for {self.experiment}")
        if self.L is not None and self.L < 1:
            raise ConfigError(f"sim.L must be positive, got {self.L}")
        if self.measured_jobs is not None and self.measured_jobs < 1:
            raise ConfigError(f"sim.measured_jobs must be positive, got {self.measured_jobs}")
        if self.warmup_jobs is not None and self.warmup_jobs < 0:
            raise ConfigError(f"sim.warmup_jobs must be nonnegative, got {self.warmup_jobs}")

    def _check_code(self, n: int, k: int, d: int) -> None:
        kind = self.experiment
        if kind == "residual-check":
            return
        if kind == "batch-sampling":
            if not k < n < 2 * k:
                raise ConfigError(f"code ({n},{k}): batch sampling needs k < n < 2k")
            return
        if d < 2:
            raise ConfigError(f"code ({n},{k},{d}): replication degree d must be >= 2")
        if n != d * k:
            raise ConfigError(f"code ({n},{k},{d}): fanout n must equal d*k")
        if k < 2:
            # a one-chunk "split" degenerates and the bounds reject it
            raise ConfigError(f"code ({n},{k},{d}): {kind} needs a split count k >= 2")


@dataclass(frozen=True)
class ComparisonRow:
    """One grid point's simulated value against its analytical reference.

    ``aux_a``/``aux_b`` carry kind-specific extras so every pass flag
    is recomputable from the row alone: the naive and coded arm means
    for gain rows, the loose and moment-space bounds for batch rows,
    the residual-max and queue-level terms for general bound rows.
    """

    experiment: str
    family: str
    shape: float
    shift: float
    n: int
    k: int
    d: float
    lam: float
    t: float | None
    seed: int
    sim_mean: float
    sim_se: float
    theory: float
    branch: str
    passed: bool
    aux_a: float | None = None
    aux_b: float | None = None

    def sort_key(self):
        t = -1.0 if self.t is None else self.t
        return (self.experiment, self.family, self.shape, self.shift,
                self.n, self.k, self.d, self.lam, t, self.seed)


CSV_COLUMNS = (
    "experiment", "family", "shape", "shift", "n", "k", "d", "lam", "t",
    "seed", "sim_mean", "sim_se", "theory", "branch", "passed", "aux_a", "aux_b",
)


# ---------------------------------------------------------------------------
# config parsing

_CONFIG_KEYS = (
    "experiment", "lambda.grid", "code.n", "code.k", "code.d",
    "dist.family", "dist.shape", "dist.shift",
    "sim.L", "sim.seed", "sim.warmup_jobs", "sim.measured_jobs", "out.path",
)


def _parse_scalar(key: str, raw: str, kind: type, line_no: int):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"line {line_no}: key '{key}' expects {kind.__name__}, got '{raw}'"
        ) from None


def _parse_list(key: str, raw: str, kind: type, line_no: int) -> list:
    parts = [p for chunk in raw.split(",") for p in chunk.split()]
    return [_parse_scalar(key, p, kind, line_no) for p in parts]


def load_config(path: str | os.PathLike) -> SweepSpec:
    """Parse a flat key=value sweep config into a validated SweepSpec."""
    seen: dict[str, tuple[int, str]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"line {line_no}: expected key=value, got '{text}'")
            key, _, value = text.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"line {line_no}: unknown key '{key}'")
            if key in seen:
                raise ConfigError(
                    f"line {line_no}: duplicate key '{key}' (first set on line {seen[key][0]})"
                )
            seen[key] = (line_no, value)

    def value_of(key: str) -> tuple[int, str] | None:
        return seen.get(key)

    got = value_of("experiment")
    if got is None:
        raise ConfigError("missing key 'experiment'")
    experiment = got[1]

    got = value_of("lambda.grid")
    lam_grid = tuple(_parse_list("lambda.grid", got[1], float, got[0])) if got else ()

    def int_list(key: str) -> list[int]:
        got = value_of(key)
        return _parse_list(key, got[1], int, got[0]) if got else []

    ns, ks, ds = int_list("code.n"), int_list("code.k"), int_list("code.d")
    codes = _align_codes(experiment, ns, ks, ds)

    def scalar(key: str, kind: type, default):
        got = value_of(key)
        return _parse_scalar(key, got[1], kind, got[0]) if got else default

    return SweepSpec(
        experiment=experiment,
        lam_grid=lam_grid,
        codes=codes,
        family=scalar("dist.family", str, "exponential"),
        shape=scalar("dist.shape", float, 1.0),
        shift=scalar("dist.shift", float, 0.0),
        L=scalar("sim.L", int, None),
        seed=scalar("sim.seed", int, 0),
        warmup_jobs=scalar("sim.warmup_jobs", int, None),
        measured_jobs=scalar("sim.measured_jobs", int, None),
        out_path=scalar("out.path", str, None),
    )


def _align_codes(
    experiment: str, ns: Sequence[int], ks: Sequence[int], ds: Sequence[int]
) -> tuple[tuple[int, int, int], ...]:
    """Zip code.n/code.k/code.d lists, broadcasting scalars and filling gaps."""
    if experiment == "residual-check" and not (ns or ks or ds):
        return ((1, 1, 1),)
    if not ks:
        raise ConfigError("missing key 'code.k'")
    width = max(len(ns), len(ks), len(ds))

    def broadcast(name: str, vals: Sequence[int]) -> list[int | None]:
        if not vals:
            return [None] * width
        if len(vals) == 1:
            return list(vals) * width
        if len(vals) != width:
            raise ConfigError(
                f"key '{name}' has {len(vals)} entries, expected {width} to match the other code lists"
            )
        return list(vals)

    ns_b = broadcast("code.n", ns)
    ks_b = broadcast("code.k", ks)
    ds_b = broadcast("code.d", ds)
    codes = []
    for n, k, d in zip(ns_b, ks_b, ds_b):
        if k is None:
            raise ConfigError("missing key 'code.k'")
        if d is None and n is not None and n % k == 0 and n // k >= 2:
            d = n // k
        if d is None:
            d = 2
        if n is None:
            n = d * k
        codes.append((n, k, d))
    return tuple(codes)


# ---------------------------------------------------------------------------
# execution

def _point_seed(base: int, index: int) -> int:
    seq = np.random.SeedSequence(entropy=int(base), spawn_key=(index,))
    return int(seq.generate_state(1, np.uint64)[0])


def _mean_bound(spec: SweepSpec, k: int, lam: float) -> bounds.BoundReport:
    if spec.family == "exponential":
        return bounds.mean_latency_bound_exp(k, lam, strict=False)
    chunk = dists.chunk_dist(spec.family, k, shift=spec.shift, shape=spec.shape)
    params = dists.subexp_params(chunk)
    return bounds.mean_latency_bound_general(k, lam, params, dist=chunk, strict=False)


def _gain_point(spec: SweepSpec, code, lam: float, seed: int) -> list[ComparisonRow]:
    n, k, d = code
    extra = {} if spec.measured_jobs is None else {"measured_jobs": spec.measured_jobs}
    sim = gain_experiment(
        k, d, lam, spec.family, seed,
        shift=spec.shift, shape=spec.shape,
        L=spec.L, warmup_jobs=spec.warmup_jobs,
        **extra,
    )
    theory = bounds.theoretical_gain(
        d, k, lam, spec.family, shift=spec.shift, shape=spec.shape, seed=seed
    )
    passed = sim.gain > 0.0 and sim.gain >= theory.value - 3.0 * sim.std_err
    return [ComparisonRow(
        spec.experiment, spec.family, spec.shape, spec.shift,
        n, k, float(d), lam, None, seed,
        sim.gain, sim.std_err, theory.value, theory.split_bound.branch, passed,
        aux_a=sim.replicated.mean, aux_b=sim.split.mean,
    )]


def _bound_point(spec: SweepSpec, code, lam: float, seed: int) -> list[ComparisonRow]:
    n, k, d = code
    config = ClusterConfig(
        lam=lam,
        policy=KSplit(k=k, d=d),
        service=dists.chunk_dist(spec.family, k, shift=spec.shift, shape=spec.shape),
        L=spec.L, seed=seed,
        warmup_jobs=spec.warmup_jobs, measured_jobs=spec.measured_jobs,
    )
    stats = run(config)
    report = _mean_bound(spec, k, lam)
    passed = stats.mean <= report.value + 3.0 * stats.std_err
    aux_a = report.auxiliary.get("residual_max")
    aux_b = report.auxiliary.get("phi")
    return [ComparisonRow(
        spec.experiment, spec.family, spec.shape, spec.shift,
        n, k, float(d), lam, None, seed,
        stats.mean, stats.std_err, report.value, report.branch, passed,
        aux_a=aux_a, aux_b=aux_b,
    )]


def _tail_point(spec: SweepSpec, code, lam: float, seed: int) -> list[ComparisonRow]:
    n, k, d = code
    config = ClusterConfig(
        lam=lam,
        policy=KSplit(k=k, d=d),
        service=dists.chunk_dist(spec.family, k),
        L=spec.L, seed=seed,
        warmup_jobs=spec.warmup_jobs, measured_jobs=spec.measured_jobs,
        keep_samples=True,
    )
    stats = run(config)
    samples = stats.samples
    assert samples is not None
    level = math.log2(math.log(_TAIL_EPSILON / k) / math.log(lam / k))
    anchor = level / k
    rows = []
    for t in np.linspace(anchor, 6.0 * anchor, _TAIL_POINTS):
        t = float(t)
        p_hat = float(np.mean(samples > t))
        se = math.sqrt(p_hat * (1.0 - p_hat) / len(samples))
        bound = bounds.tail_latency_bound(k, lam, _TAIL_EPSILON, t)
        regime = "Unit" if t < anchor else ("Gauss" if t <= 2.0 * anchor else "Exp")
        passed = p_hat <= bound + 3.0 * se
        rows.append(ComparisonRow(
            spec.experiment, spec.family, spec.shape, spec.shift,
            n, k, float(d), lam, t, seed,
            p_hat, se, bound, regime, passed,
        ))
    return rows


def _batch_point(spec: SweepSpec, code, lam: float, seed: int) -> list[ComparisonRow]:
    n, k, _ = code
    ratio = n / k
    config = ClusterConfig(
        lam=lam,
        policy=BatchSampling(n=n, k=k),
        service=dists.Exponential(rate=1.0),
        L=spec.L, seed=seed,
        warmup_jobs=spec.warmup_jobs, measured_jobs=spec.measured_jobs,
    )
    stats = run(config)
    tight = bounds.bound_I(lam, ratio, k, variant="tight")
    loose = bounds.bound_I(lam, ratio, k, variant="loose")
    moment = bounds.bound_II(lam, ratio, k)
    tol = 3.0 * stats.std_err
    passed = (stats.mean <= tight.value + tol
              and tight.value + tol <= loose.value
              and stats.mean <= moment.value)
    return [ComparisonRow(
        spec.experiment, spec.family, spec.shape, spec.shift,
        n, k, ratio, lam, None, seed,
        stats.mean, stats.std_err, tight.value, tight.branch, passed,
        aux_a=loose.value, aux_b=moment.value,
    )]


def _residual_point(spec: SweepSpec, code, lam: float, seed: int) -> list[ComparisonRow]:
    n, k, d = code
    service = dists.service_pair(spec.family, max(k, 1), shift=spec.shift, shape=spec.shape)[0]
    sim = empirical_residual(
        service, lam, seed=seed,
        jobs=spec.measured_jobs or 200_000,
        warmup=spec.warmup_jobs,
    )
    theory = bounds.residual_moment(service, 1)
    passed = abs(sim - theory) <= 0.02 * theory
    return [ComparisonRow(
        spec.experiment, spec.family, spec.shape, spec.shift,
        n, k, float(d), lam, None, seed,
        sim, 0.0, theory, "", passed,
    )]


_RUNNERS = {
    "gain-sweep": _gain_point,
    "bound-check": _bound_point,
    "tail-check": _tail_point,
    "batch-sampling": _batch_point,
    "residual-check": _residual_point,
}


def _execute_point(args: tuple[SweepSpec, int, tuple[int, int, int], float]) -> list[ComparisonRow]:
    spec, index, code, lam = args
    seed = _point_seed(spec.seed, index)
    return _RUNNERS[spec.experiment](spec, code, lam, seed)


def _enumerate_points(spec: SweepSpec) -> list[tuple[SweepSpec, int, tuple[int, int, int], float]]:
    points = []
    for code in spec.codes:
        for lam in spec.lam_grid:
            points.append((spec, len(points), code, lam))
    return points


def run_sweep(spec: SweepSpec, *, workers: int | None = None) -> list[ComparisonRow]:
    """Execute every grid point and return rows sorted by coordinates.

    ``workers`` > 1 fans points out to a process pool; each point owns
    a seed derived from (spec.seed, point index), so the result is
    identical to the serial run.
    """
    points = _enumerate_points(spec)
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_execute_point, points))
    else:
        chunks = [_execute_point(p) for p in points]
    rows = [row for chunk in chunks for row in chunk]
    rows.sort(key=ComparisonRow.sort_key)
    return rows


def rows_pass(rows: Iterable[ComparisonRow]) -> bool:
    return all(row.passed for row in rows)


# ---------------------------------------------------------------------------
# CSV emission

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return "%.9g" % value
    return str(value)


def render_csv(rows: Iterable[ComparisonRow]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_cell(getattr(row, col)) for col in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


def write_csv(rows: Iterable[ComparisonRow], path: str | os.PathLike) -> None:
    """Render rows with 9-significant-digit numerics; byte-stable."""
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_csv(rows))


# ---------------------------------------------------------------------------
# figure presets

_GAIN_CODES = ((4, 2, 2), (6, 3, 2), (8, 4, 2), (9, 3, 3))
_GAIN_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))

PRESETS: dict[str, SweepSpec] = {
    "fig3a": SweepSpec(
        "gain-sweep", _GAIN_GRID, _GAIN_CODES, "exponential",
        L=1000, warmup_jobs=30_000, measured_jobs=25_000,
    ),
    "fig3b": SweepSpec(
        "gain-sweep", _GAIN_GRID, _GAIN_CODES, "shifted-exponential", shift=0.1,
        L=1000, warmup_jobs=30_000, measured_jobs=25_000,
    ),
    "fig4": SweepSpec(
        "gain-sweep", _GAIN_GRID, _GAIN_CODES, "weibull", shape=1.5,
        L=1000, warmup_jobs=30_000, measured_jobs=25_000,
    ),
    "fig5": SweepSpec(
        "batch-sampling", (0.8, 0.85, 0.9), ((14, 10, 1),), "exponential",
        L=2000, warmup_jobs=40_000, measured_jobs=30_000,
    ),
}


def preset(name: str, *, seed: int | None = None) -> SweepSpec:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset '{name}' (expected one of {', '.join(sorted(PRESETS))})"
        ) from None
    if seed is not None:
        spec = replace(spec, seed=seed)
    return spec
