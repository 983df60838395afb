"""Seeded Monte Carlo ensembles for the S^3 convergence and observer runs.

Each run draws all of its random numbers from its own stream
(``derive_run_rng(seed, run)``) before any stepping, so a run's trajectory
does not depend on which other runs exist or how they are scheduled. Runs are
stepped in fixed contiguous chunks (about 10% of the runs each); threads only
decide which chunk is computed when, and chunks are merged by run index.
"""
import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Union

import numpy as np

from . import quaternion as qt
from . import rigidbody as rb

log = logging.getLogger(__name__)

CONVERGENCE = "convergence"
OBSERVER = "observer"
KINDS = (CONVERGENCE, OBSERVER)
PER_EPOCH = "per_epoch"
PER_RUN = "per_run"
OMEGA_MODES = (PER_EPOCH, PER_RUN)

MAX_WORK = 10**8
N_CHUNKS = 10

# default per-component bounds on the rotation increment Omega
OMEGA_DEFAULTS = {CONVERGENCE: (0.0, 0.5), OBSERVER: (0.0, 10.0)}

# spawn-key prefixes: run streams and auxiliary streams never collide
_RUN_STREAM = 0
_AUX_STREAM = 1
_AUX_GAIN = 0

GAIN_SAMPLES = 10**6


class ConfigError(ValueError):
    """Invalid experiment configuration; ``key`` names the offending field."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def _rng(master_seed, spawn_key):
    seq = np.random.SeedSequence(int(master_seed) & (2**64 - 1), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(seq))


def derive_run_rng(master_seed, run_index):
    """Independent stream for one run.

    Derivation (stable, part of the output format): a Philox counter-based
    generator keyed by ``SeedSequence(master_seed mod 2**64,
    spawn_key=(0, run_index))``.
    """
    return _rng(master_seed, (_RUN_STREAM, int(run_index)))


def derive_aux_rng(master_seed, tag):
    return _rng(master_seed, (_AUX_STREAM, int(tag)))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = CONVERGENCE
    seed: int = 42
    runs: int = 200
    epochs: int = 100
    alpha: float = 0.01
    epsilon: float = 0.5
    delta: float = 0.059
    omega_low: Optional[float] = None
    omega_high: Optional[float] = None
    noise_std: float = 0.1
    gain: Union[str, tuple] = tuple(rb.DEFAULT_GAIN.tolist())
    omega_mode: str = PER_EPOCH
    burn_in: int = 25

    def __post_init__(self):
        lo, hi = OMEGA_DEFAULTS.get(self.kind, (None, None))
        if self.omega_low is None:
            object.__setattr__(self, "omega_low", lo)
        if self.omega_high is None:
            object.__setattr__(self, "omega_high", hi)
        if not isinstance(self.gain, str):
            object.__setattr__(self, "gain", tuple(float(v) for v in np.ravel(self.gain)))

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
        try:
            config = cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError("gain", str(exc)) from exc
        config.validate()
        return config

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config file must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self):
        out = asdict(self)
        if not isinstance(self.gain, str):
            out["gain"] = list(self.gain)
        return out

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError("kind", f"must be one of {KINDS}")
        if self.omega_mode not in OMEGA_MODES:
            raise ConfigError("omega_mode", f"must be one of {OMEGA_MODES}")
        for key in ("seed", "runs", "epochs", "burn_in"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(key, f"must be an integer, got {value!r}")
        for key in ("alpha", "epsilon", "delta", "omega_low", "omega_high", "noise_std"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(key, f"must be a finite real, got {value!r}")
        if self.runs < 1:
            raise ConfigError("runs", "must be at least 1")
        if self.epochs < 1:
            raise ConfigError("epochs", "must be at least 1")
        if self.runs * self.epochs > MAX_WORK:
            raise ConfigError("runs", f"runs*epochs exceeds {MAX_WORK:g}")
        if self.burn_in < 0:
            raise ConfigError("burn_in", "must be non-negative")
        if self.alpha < 0:
            raise ConfigError("alpha", "must be non-negative")
        if not 0 < self.epsilon < 1:
            raise ConfigError("epsilon", "must lie in (0, 1)")
        if self.delta <= 0:
            raise ConfigError("delta", "must be positive")
        if self.omega_low > self.omega_high:
            raise ConfigError("omega_low", "must not exceed omega_high")
        if self.noise_std < 0:
            raise ConfigError("noise_std", "must be non-negative")
        if isinstance(self.gain, str):
            if self.gain != "auto":
                raise ConfigError("gain", "must be 'auto' or four numbers")
        elif len(self.gain) != 4 or not all(math.isfinite(v) for v in self.gain):
            raise ConfigError("gain", "must be 'auto' or four finite numbers")
        return self


@dataclass
class EnsembleSeries:
    """Per-epoch cross-run statistics of one scalar metric.

    ``summary`` pools every run and every epoch after ``burn_in``; when no
    epoch is past the burn-in it falls back to the final epoch.
    """

    metric_name: str
    epoch: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    min: np.ndarray
    max: np.ndarray
    summary: dict
    samples: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def per_epoch(self):
        return [
            {"epoch": int(e), "mean": float(m), "std": float(s), "min": float(lo), "max": float(hi)}
            for e, m, s, lo, hi in zip(self.epoch, self.mean, self.std, self.min, self.max)
        ]


def summarize(metric_name, samples, burn_in=25):
    """Reduce a ``(runs, epochs + 1)`` sample array to an EnsembleSeries."""
    samples = np.asarray(samples, dtype=float)
    # epoch-major contiguous copy: each per-epoch reduction runs over one row
    by_epoch = np.ascontiguousarray(samples.T)
    pooled = samples[:, burn_in + 1:]
    if pooled.size == 0:
        pooled = samples[:, -1:]
    pooled = np.ascontiguousarray(pooled).ravel()
    return EnsembleSeries(
        metric_name=metric_name,
        epoch=np.arange(samples.shape[1]),
        mean=by_epoch.mean(axis=1),
        std=by_epoch.std(axis=1),
        min=by_epoch.min(axis=1),
        max=by_epoch.max(axis=1),
        summary={
            "mean": float(pooled.mean()),
            "std": float(pooled.std()),
            "max": float(pooled.max()),
            "min": float(pooled.min()),
        },
        samples=samples,
    )


def _chunks(runs):
    size = max(1, math.ceil(runs / N_CHUNKS))
    return [range(start, min(start + size, runs)) for start in range(0, runs, size)]


def _map_chunks(fn, runs, threads):
    chunks = _chunks(runs)
    if threads <= 1:
        results, done = [], 0
        for chunk in chunks:
            results.append(fn(chunk))
            done += len(chunk)
            log.info("runs %d/%d", done, runs)
        return results
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(fn, chunks))
    log.info("runs %d/%d", runs, runs)
    return results


def _draw_omegas(config, rng):
    if config.omega_mode == PER_RUN:
        om = rb.random_omega(rng, config.omega_low, config.omega_high)
        return np.tile(om, (config.epochs, 1))
    return rb.random_omega(rng, config.omega_low, config.omega_high, config.epochs)


def _check(config, kind):
    if config.kind != kind:
        raise ConfigError("kind", f"expected {kind!r}, got {config.kind!r}")
    config.validate()


# -- convergence ----------------------------------------------------------------

def convergence_initial_range(epsilon):
    """Scalar-part range of the initial states ``[w, 0, 0, 0]``: the whole
    sublevel shell along the real axis."""
    root = math.sqrt(epsilon)
    return math.sqrt(1.0 - root), math.sqrt(1.0 + root)


def convergence_distances(config, run_indices):
    """``dist(q, S^3)`` of the stabilized system, shape ``(len(runs), epochs+1)``.

    Per-run draw order: initial scalar part, then the Omega sequence.
    """
    lo, hi = convergence_initial_range(config.epsilon)
    q, omegas = [], []
    for i in run_indices:
        rng = derive_run_rng(config.seed, i)
        q.append(qt.quat(rng.uniform(lo, hi)))
        omegas.append(_draw_omegas(config, rng))
    q = np.array(q)
    omegas = np.array(omegas)
    out = np.empty((len(q), config.epochs + 1))
    out[:, 0] = qt.dist_to_s3(q)
    for k in range(config.epochs):
        q = rb.stabilized_step(q, omegas[:, k], config.alpha)
        out[:, k + 1] = qt.dist_to_s3(q)
    return out


def run_convergence(config, threads=1):
    """Convergence ensemble: distance of the stabilized state to S^3."""
    _check(config, CONVERGENCE)
    parts = _map_chunks(lambda c: convergence_distances(config, c), config.runs, threads)
    return summarize("dist_to_s3", np.concatenate(parts), config.burn_in)


# -- observers --------------------------------------------------------------------

@dataclass(frozen=True)
class TableRow:
    observer: str
    metric: str
    mean: float
    std: float
    max: float
    min: float


@dataclass
class ObserverResult:
    err_w: EnsembleSeries
    err_wo: EnsembleSeries
    dist_w: EnsembleSeries
    dist_wo: EnsembleSeries
    gain: np.ndarray
    table: list
    # run indices whose w-observer left the delta-tube after the burn-in
    tube_exits: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))


def tube_radii(epsilon, delta):
    """Norm range of the delta-tube around ``V(x) = (|x|^2 - 1)^2 <= epsilon``."""
    lo, hi = convergence_initial_range(epsilon)
    return lo - delta, hi + delta


def resolve_gain(config):
    if isinstance(config.gain, str):
        rng = derive_aux_rng(config.seed, _AUX_GAIN)
        return rb.default_gain(rng, config.omega_low, config.omega_high, GAIN_SAMPLES)
    return np.array(config.gain, dtype=float)


def observer_metrics(config, gain, run_indices):
    """Errors for both observers, each of shape ``(len(runs), epochs+1)``.

    Per-run draw order: initial true state, the Omega sequence, then the
    measurement noise sequence. Errors are measured against the true state.
    The fifth array flags runs whose w-observer left the delta-tube around the
    sublevel shell at some epoch after the burn-in.
    """
    q, omegas, noise = [], [], []
    for i in run_indices:
        rng = derive_run_rng(config.seed, i)
        q.append(qt.random_unit(rng))
        omegas.append(_draw_omegas(config, rng))
        noise.append(rb.noise_vector(rng, config.noise_std, config.epochs))
    q = np.array(q)
    omegas = np.array(omegas)
    noise = np.array(noise)
    pair = rb.ObserverPair.start(gain, config.alpha, batch=len(q))

    shape = (len(q), config.epochs + 1)
    err_w, err_wo, dist_w, dist_wo = (np.empty(shape) for _ in range(4))
    lo, hi = tube_radii(config.epsilon, config.delta)
    exits = np.zeros(len(q), dtype=bool)

    def record(k):
        err_w[:, k] = qt.norm(q - pair.q_w)
        err_wo[:, k] = qt.norm(q - pair.q_wo)
        n = qt.norm(pair.q_w)
        dist_w[:, k] = np.abs(n - 1.0)
        dist_wo[:, k] = qt.dist_to_s3(pair.q_wo)
        if k > config.burn_in:
            exits[:] |= (n <= lo) | (n >= hi)

    record(0)
    for k in range(config.epochs):
        q_meas = qt.mul(q, qt.exp_vector(noise[:, k]))
        pair = rb.observer_step(pair, q_meas, omegas[:, k])
        q = rb.raw_step(q, omegas[:, k])
        record(k + 1)
    return err_w, err_wo, dist_w, dist_wo, exits


def table_rows(series_by_key):
    """Max/Min pooled over epochs after burn-in; Mean/Std over final-epoch values."""
    rows = []
    for observer in ("w", "wo"):
        for metric in ("state_error", "manifold_dist"):
            s = series_by_key[observer, metric]
            rows.append(
                TableRow(
                    observer=observer,
                    metric=metric,
                    mean=float(s.mean[-1]),
                    std=float(s.std[-1]),
                    max=s.summary["max"],
                    min=s.summary["min"],
                )
            )
    return rows


def run_observer(config, threads=1):
    """Observer comparison: state error and distance to S^3 for both observers."""
    _check(config, OBSERVER)
    gain = resolve_gain(config)
    parts = _map_chunks(lambda c: observer_metrics(config, gain, c), config.runs, threads)
    err_w, err_wo, dist_w, dist_wo, exits = (np.concatenate(p) for p in zip(*parts))
    if exits.any():
        log.warning(
            "w-observer left the delta-tube after epoch %d in %d of %d runs: %s",
            config.burn_in, exits.sum(), config.runs, np.flatnonzero(exits).tolist(),
        )
    series = {
        ("w", "state_error"): summarize("state_error_w", err_w, config.burn_in),
        ("wo", "state_error"): summarize("state_error_wo", err_wo, config.burn_in),
        ("w", "manifold_dist"): summarize("manifold_dist_w", dist_w, config.burn_in),
        ("wo", "manifold_dist"): summarize("manifold_dist_wo", dist_wo, config.burn_in),
    }
    return ObserverResult(
        err_w=series["w", "state_error"],
        err_wo=series["wo", "state_error"],
        dist_w=series["w", "manifold_dist"],
        dist_wo=series["wo", "manifold_dist"],
        gain=gain,
        table=table_rows(series),
        tube_exits=np.flatnonzero(exits),
    )


# -- CSV ------------------------------------------------------------------------

SERIES_HEADER = ["epoch", "mean", "std", "min", "max"]
TABLE_HEADER = ["observer", "metric", "mean", "std", "max", "min"]


def _real(x):
    # repr of a Python float is the shortest string that round-trips
    return repr(float(x))


def _write_rows(path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_series_csv(series, path):
    rows = (
        [int(e), _real(m), _real(s), _real(lo), _real(hi)]
        for e, m, s, lo, hi in zip(series.epoch, series.mean, series.std, series.min, series.max)
    )
    _write_rows(path, SERIES_HEADER, rows)


def read_series_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return {
        "epoch": np.array([int(r["epoch"]) for r in rows]),
        **{k: np.array([float(r[k]) for r in rows]) for k in SERIES_HEADER[1:]},
    }


def write_table_csv(rows, path):
    _write_rows(
        path,
        TABLE_HEADER,
        ([r.observer, r.metric, _real(r.mean), _real(r.std), _real(r.max), _real(r.min)] for r in rows),
    )
