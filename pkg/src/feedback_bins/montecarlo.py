"""Replication engine, monopoly certificates and ensemble estimators."""

from __future__ import annotations

import csv
import io
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .dynamics import (
    U_OFFSET,
    CountMode,
    Ensemble,
    ModelParams,
    ProcessState,
    SamplerConfig,
)
from .sequences import (
    ConstantSequence,
    GrowthSequence,
    SeriesKind,
    log_series_terms,
    series_tail,
    series_tail_bound,
)

SCHEMA_VERSION = "v1"
DEFAULT_DELTA_GRID = (1e-1, 1e-2, 1e-3, 1e-6)
NOISE_FLOOR = 1e-6
MIN_PARALLEL_STEPS = 200_000


class Winner(str, Enum):
    BIN1 = "bin1"
    BIN2 = "bin2"
    UNDECIDED = "undecided"


class Reference(str, Enum):
    UNIFORM01 = "uniform01"
    TWO_POINT_HALF_HALF = "two_point_half_half"


@dataclass(frozen=True)
class MonopolyCertificate:
    """Union bound on the chance that the trailing bin ever gets another ball.

    The loser's share at step i >= n is L / tau_i while it receives nothing,
    so with psi(x) <= 2^{alpha-1} x^alpha the chance of any further ball is at
    most 2^{alpha-1} L^alpha sum_{i>=n} sigma_{i+1} / tau_i^alpha.
    """

    at_step: int
    loser_bin: int
    loser_count: int | float  # exact integer when issued in exact mode
    epsilon_bound: float
    log_epsilon_bound: float
    tail_horizon: int
    tail_bound: float | None


@dataclass
class TrajectoryRecord:
    replication_id: int
    master_seed: int
    final_n: int
    final_theta: float
    log_theta: float
    log_1m_theta: float
    min_side: float
    log_min_side: float
    min_side_half: float
    winner: Winner
    last_crossing: int
    monopoly_onset: int | None
    certificate: MonopolyCertificate | None
    certificate_violated_at: int | None
    noise_mean: float
    noise_var: float
    noise_count: int
    deviation_count: int
    deviation_count_half: int
    first_deviation: int | None
    last_deviation: int | None
    final_mode: CountMode


@dataclass
class EnsembleSummary:
    reps: int
    horizon: int
    master_seed: int
    p_below: dict[float, float]
    median_min_side: float
    certified_fraction: float
    certificate_violations: int
    winner_split: dict[str, float]
    noise_mean: float
    noise_var: float
    noise_count: int
    deviation_fraction: float
    loser_hit_fraction: list[float]
    float_switch_step: int | None
    partial: bool = False
    schema: str = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out = asdict(self)
        out["p_below"] = {repr(k): v for k, v in self.p_below.items()}
        return out


@dataclass
class RunOptions:
    delta_grid: tuple[float, ...] = DEFAULT_DELTA_GRID
    confidence_eps: float = 1e-3
    tail_horizon: int | None = None  # defaults to the run horizon
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    max_steps: int | None = None  # cap on reps * horizon
    threads: int = 1
    chunk: int = 1024
    dump_trajectories: bool = False


@dataclass
class RunResult:
    records: list[TrajectoryRecord]
    summary: EnsembleSummary
    trajectories: dict[int, list[tuple]] | None = None


# -- random streams -------------------------------------------------------------


def replication_rng(master_seed: int, replication_id: int) -> np.random.Generator:
    """Counter-based (Philox) stream owned by one replication."""
    ss = np.random.SeedSequence([int(master_seed), int(replication_id)])
    return np.random.Generator(np.random.Philox(ss))


class UniformStreams:
    """One uniform per replication per step, drawn in blocks."""

    def __init__(self, master_seed: int, rep_ids: Sequence[int], chunk: int = 1024):
        self.gens = [replication_rng(master_seed, r) for r in rep_ids]
        self.chunk = chunk
        self._block = np.empty((len(self.gens), 0))
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos >= self._block.shape[1]:
            self._block = np.stack([g.random(self.chunk) for g in self.gens]) + U_OFFSET
            self._pos = 0
        col = self._block[:, self._pos]
        self._pos += 1
        return col


# -- certificates -------------------------------------------------------------------


def certificate_log_tails(seq: GrowthSequence, alpha: float, horizon: int,
                          tail_horizon: int | None = None) -> np.ndarray | None:
    """log of a rigorous bound on sum_{i>=n} sigma_{i+1}/tau_i^alpha, n = 0..horizon.

    None when no tail bound is known for the sequence (no certificate can be issued).
    """
    if alpha <= 1:
        return None
    m = max(horizon, tail_horizon or horizon)
    kind = SeriesKind.SIGMA_OVER_TAU_ALPHA
    tail = series_tail_bound(seq, alpha, kind, m)
    if tail is None:
        return None
    logs = log_series_terms(seq, alpha, kind, 0, m)
    suffix = np.logaddexp.accumulate(logs[::-1])[::-1]
    log_tail = math.log(tail) if tail > 0 else -math.inf
    out = np.logaddexp(suffix[: horizon + 1] if len(suffix) > horizon else
                       np.append(suffix, -np.inf)[: horizon + 1], log_tail)
    return out


def monopoly_certificate(state: ProcessState, params: ModelParams, confidence_eps: float,
                         tail_horizon: int) -> MonopolyCertificate | None:
    """Issue a certificate at ``state`` if the union bound is below ``confidence_eps``."""
    alpha = params.alpha
    if alpha <= 1:
        return None
    if min(state.log_T, state.log_U) == -math.inf:
        raise ValueError("a bin is empty, which the dynamics never produce from 0 < T0 < tau0")
    horizon = max(tail_horizon, state.n + 1)
    res = series_tail(params.seq, alpha, SeriesKind.SIGMA_OVER_TAU_ALPHA, state.n, horizon)
    log_sum = res.log_total_bound
    if log_sum is None:
        return None
    loser_bin = 1 if state.log_T < state.log_U else 2
    log_L = min(state.log_T, state.log_U)
    log_eps = (alpha - 1.0) * math.log(2.0) + alpha * log_L + log_sum
    if not log_eps < math.log(confidence_eps):
        return None
    return MonopolyCertificate(
        at_step=state.n,
        loser_bin=loser_bin,
        loser_count=state.loser_count,
        epsilon_bound=math.exp(log_eps),
        log_epsilon_bound=log_eps,
        tail_horizon=horizon,
        tail_bound=res.tail_bound,
    )


# -- deviations -------------------------------------------------------------------


def deviation_thresholds(seq: GrowthSequence, stop: int) -> np.ndarray:
    """delta_n = 1 / log^2 tau_n for n = 0 .. stop - 1."""
    return 1.0 / seq.log_tau_array(stop) ** 2


@dataclass
class DeviationStats:
    count: int
    count_half: int
    positions: list[int]

    @property
    def growing(self) -> bool:
        return self.count > self.count_half


@dataclass
class DeviationSummary:
    per_trajectory: list[DeviationStats]
    fraction_with_deviation: float
    fraction_growing: float


def deviation_tracker(source, seq: GrowthSequence | None = None, horizon: int | None = None
                      ) -> DeviationSummary:
    """Steps where |Theta_n - 1/2| > delta_n = 1/log^2 tau_n.

    ``source`` is either engine records or a list of Theta paths (index n
    from 0), the latter requiring ``seq``.
    """
    source = list(source)
    per = []
    if source and isinstance(source[0], TrajectoryRecord):
        for r in source:
            pos = [p for p in (r.first_deviation, r.last_deviation) if p is not None]
            per.append(DeviationStats(r.deviation_count, r.deviation_count_half, sorted(set(pos))))
    else:
        if seq is None:
            raise ValueError("Theta paths need the growth sequence for delta_n")
        for path in source:
            path = np.asarray(path, dtype=float)
            h = len(path) - 1 if horizon is None else horizon
            delta = deviation_thresholds(seq, len(path))
            hit = np.abs(path - 0.5) > delta
            positions = np.flatnonzero(hit).tolist()
            per.append(DeviationStats(len(positions), int(hit[: h // 2 + 1].sum()), positions))
    n = max(len(per), 1)
    return DeviationSummary(
        per_trajectory=per,
        fraction_with_deviation=sum(s.count > 0 for s in per) / n,
        fraction_growing=sum(s.growing for s in per) / n,
    )


# -- the engine -------------------------------------------------------------------


def _run_block(params: ModelParams, horizon: int, rep_ids: list[int], master_seed: int,
               options: RunOptions, log_tails: np.ndarray | None):
    R = len(rep_ids)
    ens = Ensemble(params, R, options.sampler)
    streams = UniformStreams(master_seed, rep_ids, options.chunk)
    alpha = params.alpha
    half = horizon // 2
    delta = deviation_thresholds(params.seq, horizon + 1)
    log_eps_thr = math.log(options.confidence_eps)
    cert_const = (alpha - 1.0) * math.log(2.0)

    last_got = np.zeros((2, R), dtype=np.int64)
    side = np.zeros(R)  # last nonzero sign of Theta - 1/2
    last_crossing = np.zeros(R, dtype=np.int64)
    dev_count = np.zeros(R, dtype=np.int64)
    dev_half = np.zeros(R, dtype=np.int64)
    first_dev = np.full(R, -1, dtype=np.int64)
    last_dev = np.full(R, -1, dtype=np.int64)
    nsum = np.zeros(R)
    nsq = np.zeros(R)
    ncount = np.zeros(R, dtype=np.int64)
    cert_step = np.full(R, -1, dtype=np.int64)
    cert_bin = np.zeros(R, dtype=np.int64)
    cert_log_eps = np.full(R, np.nan)
    cert_log_L = np.full(R, np.nan)
    cert_L: list = [None] * R  # exact loser count when issued in exact mode
    violated = np.full(R, -1, dtype=np.int64)
    min_side_half = np.full(R, np.nan)
    loser_hits = np.zeros(horizon + 1, dtype=np.int64)
    dumps = {r: [] for r in rep_ids} if options.dump_trajectories else None

    def observe(n: int):
        log_x, log_1mx = ens.log_shares()
        theta = np.exp(log_x)
        dev = np.abs(theta - 0.5) > delta[n]
        dev_count[dev] += 1
        first_dev[dev & (first_dev < 0)] = n
        last_dev[dev] = n
        if n <= half:
            dev_half[:] = dev_count
        if n == half:
            min_side_half[:] = np.exp(np.minimum(log_x, log_1mx))
        sign = np.sign(theta - 0.5)
        crossed = (sign != 0) & (side != 0) & (sign != side)
        last_crossing[crossed] = n
        side[sign != 0] = sign[sign != 0]
        if log_tails is not None:
            log_L = np.minimum(*ens.log_counts())
            log_eps = cert_const + alpha * log_L + log_tails[n]
            new = (cert_step < 0) & (log_eps < log_eps_thr)
            if new.any():
                lt, lu = ens.log_counts()
                cert_step[new] = n
                cert_bin[new] = np.where(lt < lu, 1, 2)[new]
                cert_log_eps[new] = log_eps[new]
                cert_log_L[new] = log_L[new]
                if ens.mode is CountMode.EXACT:
                    for i in np.flatnonzero(new):
                        t = int(ens.T[i])
                        cert_L[i] = min(t, ens.tau - t)

    observe(0)
    for n in range(1, horizon + 1):
        batch = ens.advance(streams.next())
        last_got[0, batch.got1] = n
        last_got[1, batch.got2] = n
        loser_hits[n] = int(batch.loser_hit.sum())
        hit_cert = (cert_step >= 0) & (violated < 0) & np.where(cert_bin == 1, batch.got1, batch.got2)
        violated[hit_cert] = n
        ok = batch.p_min >= NOISE_FLOOR
        nsum[ok] += batch.epsilon[ok]
        nsq[ok] += batch.epsilon[ok] ** 2
        ncount[ok] += 1
        if dumps is not None:
            lt, _ = ens.log_counts()
            for i, r in enumerate(rep_ids):
                T = ens.T[i] if ens.mode is CountMode.EXACT else math.nan
                B = batch.B[i] if ens.mode is CountMode.EXACT else math.nan
                tau = ens.tau if ens.mode is CountMode.EXACT else math.nan
                dumps[r].append((n, T, tau, float(lt[i]), ens.log_tau, B,
                                 float(batch.log_B[i]), float(batch.epsilon[i])))
        observe(n)

    log_x, log_1mx = ens.log_shares()
    records = []
    for i, r in enumerate(rep_ids):
        lx, l1 = float(log_x[i]), float(log_1mx[i])
        loser = 0 if lx < l1 else 1
        onset = int(last_got[loser, i])
        cert = None
        if cert_step[i] >= 0:
            cert = MonopolyCertificate(
                at_step=int(cert_step[i]),
                loser_bin=int(cert_bin[i]),
                loser_count=cert_L[i] if cert_L[i] is not None else math.exp(cert_log_L[i]),
                epsilon_bound=math.exp(cert_log_eps[i]),
                log_epsilon_bound=float(cert_log_eps[i]),
                tail_horizon=max(horizon, options.tail_horizon or horizon),
                tail_bound=None,
            )
        cnt = int(ncount[i])
        mean = float(nsum[i] / cnt) if cnt else math.nan
        var = float(nsq[i] / cnt - mean**2) if cnt else math.nan
        theta = math.exp(lx)
        winner = Winner.BIN1 if lx > l1 else Winner.BIN2 if lx < l1 else Winner.UNDECIDED
        records.append(TrajectoryRecord(
            replication_id=r,
            master_seed=master_seed,
            final_n=horizon,
            final_theta=theta,
            log_theta=lx,
            log_1m_theta=l1,
            min_side=math.exp(min(lx, l1)),
            log_min_side=min(lx, l1),
            min_side_half=float(min_side_half[i]),
            winner=winner,
            last_crossing=int(last_crossing[i]),
            monopoly_onset=None if onset >= horizon else onset,
            certificate=cert,
            certificate_violated_at=None if violated[i] < 0 else int(violated[i]),
            noise_mean=mean,
            noise_var=var,
            noise_count=cnt,
            deviation_count=int(dev_count[i]),
            deviation_count_half=int(dev_half[i]),
            first_deviation=None if first_dev[i] < 0 else int(first_dev[i]),
            last_deviation=None if last_dev[i] < 0 else int(last_dev[i]),
            final_mode=ens.mode,
        ))
    return records, loser_hits, ens.switched_at, dumps


def run_replications(params: ModelParams, horizon: int, reps: int, master_seed: int,
                     options: RunOptions | None = None) -> RunResult:
    """Run ``reps`` independent trajectories to ``horizon``; deterministic in ``master_seed``."""
    if reps < 1 or horizon < 1:
        raise ValueError("need reps >= 1 and horizon >= 1")
    options = options or RunOptions()
    partial = False
    if options.max_steps is not None and reps * horizon > options.max_steps:
        reps = max(options.max_steps // horizon, 0)
        partial = True
        if reps == 0:
            raise ValueError("step budget smaller than a single trajectory")
    log_tails = certificate_log_tails(params.seq, params.alpha, horizon, options.tail_horizon)
    rep_ids = list(range(reps))
    threads = max(1, min(options.threads, reps))
    if reps * horizon < MIN_PARALLEL_STEPS:
        threads = 1  # pool start-up would dominate
    blocks = [rep_ids[i::threads] for i in range(threads)]
    blocks = [sorted(b) for b in blocks if b]
    if threads == 1:
        outs = [_run_block(params, horizon, blocks[0], master_seed, options, log_tails)]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futs = [pool.submit(_run_block, params, horizon, b, master_seed, options, log_tails)
                    for b in blocks]
            outs = [f.result() for f in futs]
    records = sorted((r for out in outs for r in out[0]), key=lambda r: r.replication_id)
    loser_hits = sum(out[1] for out in outs)
    switches = [out[2] for out in outs if out[2] is not None]
    trajectories = None
    if options.dump_trajectories:
        trajectories = {}
        for out in outs:
            trajectories.update(out[3])
    summary = summarize(records, params, horizon, master_seed, options.delta_grid,
                        loser_hits=loser_hits,
                        float_switch_step=min(switches) if switches else None, partial=partial)
    return RunResult(records, summary, trajectories)


def summarize(records: Sequence[TrajectoryRecord], params: ModelParams, horizon: int,
              master_seed: int, delta_grid=DEFAULT_DELTA_GRID, *, loser_hits=None,
              float_switch_step=None, partial=False) -> EnsembleSummary:
    """Deterministic fold over records sorted by replication id."""
    n = len(records)
    dom = dominance_stats(records, delta_grid)
    certified = [r for r in records if r.certificate is not None]
    mean, var, cnt = ensemble_noise(records)
    hits = [] if loser_hits is None else (np.asarray(loser_hits, dtype=float) / n).tolist()
    return EnsembleSummary(
        reps=n,
        horizon=horizon,
        master_seed=master_seed,
        p_below=dom.p_below,
        median_min_side=dom.median_min_side,
        certified_fraction=len(certified) / n,
        certificate_violations=sum(r.certificate_violated_at is not None for r in certified),
        winner_split={w.value: sum(r.winner is w for r in records) / n for w in Winner},
        noise_mean=mean,
        noise_var=var,
        noise_count=cnt,
        deviation_fraction=sum(r.deviation_count > 0 for r in records) / n,
        loser_hit_fraction=hits,
        float_switch_step=float_switch_step,
        partial=partial,
    )


# -- estimators -------------------------------------------------------------------


@dataclass
class DominanceStats:
    p_below: dict[float, float]
    median_min_side: float
    median_min_side_half: float
    trend: bool  # median min_side strictly smaller at the horizon than at horizon/2


def dominance_stats(records: Sequence[TrajectoryRecord],
                    delta_grid: Iterable[float] = DEFAULT_DELTA_GRID) -> DominanceStats:
    if not records:
        raise ValueError("need at least one record")
    sides = np.array([r.min_side for r in records])
    halves = np.array([r.min_side_half for r in records])
    p_below = {float(d): float(np.mean(sides < d)) for d in delta_grid}
    med = float(np.median(sides))
    med_half = float(np.median(halves))
    return DominanceStats(p_below, med, med_half, bool(med < med_half))


@dataclass
class KSResult:
    ks_stat: float
    p_value: float
    warning: str | None = None


def _classical_polya(params: ModelParams | None) -> bool:
    if params is None:
        return True
    seq = params.seq
    return (params.alpha == 1 and isinstance(seq, ConstantSequence) and seq.s == 1
            and params.T0 == 1 and seq.tau0 == 2)


def limit_distribution_test(records: Sequence[TrajectoryRecord], reference: Reference | str,
                            params: ModelParams | None = None) -> KSResult:
    """Kolmogorov-Smirnov distance of the final Theta against a reference law.

    ``TWO_POINT_HALF_HALF`` compares the dominance limit (Theta rounded to the
    nearer of 0 and 1) with a fair coin on {0, 1}.
    """
    reference = Reference(reference)
    thetas = np.array([r.final_theta for r in records])
    if reference is Reference.UNIFORM01:
        warning = None
        if not _classical_polya(params):
            warning = ("uniform limit is exact only for alpha=1, sigma=1, T0=1, tau0=2; "
                       "treat the statistic as descriptive")
        res = stats.kstest(thetas, "uniform")
        return KSResult(float(res.statistic), float(res.pvalue), warning)
    ones = int(np.sum(thetas > 0.5))
    n = len(thetas)
    ks = abs(ones / n - 0.5)
    p = stats.binomtest(ones, n, 0.5).pvalue
    return KSResult(float(ks), float(p), None)


def ensemble_noise(records: Sequence[TrajectoryRecord]) -> tuple[float, float, int]:
    """Pooled (mean, variance, count) of the normalised fluctuations."""
    cnt = sum(r.noise_count for r in records)
    if cnt == 0:
        return math.nan, math.nan, 0
    s1 = sum(r.noise_mean * r.noise_count for r in records if r.noise_count)
    s2 = sum((r.noise_var + r.noise_mean**2) * r.noise_count for r in records if r.noise_count)
    mean = s1 / cnt
    return mean, s2 / cnt - mean**2, cnt


def default_threads() -> int:
    return os.cpu_count() or 1


# -- serialization -------------------------------------------------------------------

RECORD_FIELDS = (
    "replication_id", "master_seed", "final_n", "final_theta", "log_theta", "log_1m_theta",
    "min_side", "log_min_side", "min_side_half", "winner", "last_crossing", "monopoly_onset",
    "cert_at_step", "cert_loser_bin", "cert_loser_count", "cert_epsilon_bound",
    "cert_log_epsilon_bound", "cert_tail_horizon", "certificate_violated_at",
    "noise_mean", "noise_var", "noise_count", "deviation_count", "deviation_count_half",
    "first_deviation", "last_deviation", "final_mode",
)
TRAJECTORY_FIELDS = ("n", "T", "tau", "log_T", "log_tau", "B", "log_B", "epsilon")


# exact counts can run to ~300k digits, past the default int/str conversion cap
_INT_DIGIT_LIMIT = 4300


def int_str(v: int) -> str:
    """Decimal string of an int of any size."""
    v = int(v)
    if v.bit_length() < 3 * _INT_DIGIT_LIMIT or not hasattr(sys, "set_int_max_str_digits"):
        return str(v)
    old = sys.get_int_max_str_digits()
    sys.set_int_max_str_digits(0)
    try:
        return str(v)
    finally:
        sys.set_int_max_str_digits(old)


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, Enum):
        return v.value
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return int_str(v)
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else "%.17g" % float(v)
    return str(v)


def record_row(r: TrajectoryRecord) -> dict:
    row = {k: getattr(r, k) for k in RECORD_FIELDS if hasattr(r, k)}
    c = r.certificate
    row.update({
        "cert_at_step": c and c.at_step,
        "cert_loser_bin": c and c.loser_bin,
        "cert_loser_count": c and c.loser_count,
        "cert_epsilon_bound": c and c.epsilon_bound,
        "cert_log_epsilon_bound": c and c.log_epsilon_bound,
        "cert_tail_horizon": c and c.tail_horizon,
    })
    return {k: row[k] for k in RECORD_FIELDS}


def _table_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def records_csv(records: Sequence[TrajectoryRecord]) -> str:
    return _table_csv(RECORD_FIELDS, (record_row(r).values() for r in records))


def trajectory_csv(rows: Sequence[tuple]) -> str:
    return _table_csv(TRAJECTORY_FIELDS, rows)


def jsonable(obj):
    """Plain JSON types; NaN and infinities become null and "inf"/"-inf".

    Integers too long for a double-precision reader (over 2^53) become decimal strings.
    """
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        v = int(obj)
        return v if abs(v) <= 2**53 else int_str(v)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "__dataclass_fields__"):
        return jsonable(asdict(obj))
    return obj


def records_json(records: Sequence[TrajectoryRecord]) -> list[dict]:
    return [jsonable(asdict(r)) for r in records]
