"""The stochastic kernel of the two-bin process.

One step moves ``T_n -> T_{n+1} = T_n + B_{n+1}`` with
``B_{n+1} ~ Binomial(sigma_{n+1}, psi(Theta_n))`` and ``Theta_n = T_n / tau_n``.

Sampling is driven by one uniform per replication per step (inverse CDF), so a
trajectory is a deterministic function of its uniform stream regardless of how
replications are batched.  Counts are exact integers (int64 while they fit,
Python ints above that) until tau exceeds the sequence's bit budget, after
which both bins are carried as logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy import special, stats

from .sequences import GrowthSequence

INT64_LIMIT = 2**62
LN2 = math.log(2.0)
U_OFFSET = 2.0**-54  # shifts 53-bit uniforms from [0, 1) into (0, 1)


class Kernel(str, Enum):
    INDEPENDENT_BINOMIAL = "independent_binomial"
    BULK_PLACEMENT = "bulk_placement"


class CountMode(str, Enum):
    EXACT = "exact"
    FLOAT = "float"


@dataclass(frozen=True)
class SamplerConfig:
    """Size thresholds for the binomial sampler."""

    exact_cutoff: int = 10**6
    poisson_cutoff: float = 1e3


@dataclass(frozen=True)
class ModelParams:
    alpha: float
    T0: int
    seq: GrowthSequence
    kernel: Kernel = Kernel.INDEPENDENT_BINOMIAL

    def __post_init__(self):
        if not self.alpha >= 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if int(self.T0) != self.T0 or not 0 < self.T0 < self.seq.tau0:
            raise ValueError(f"need 0 < T0 < tau0 = {self.seq.tau0}, got T0={self.T0}")
        object.__setattr__(self, "kernel", Kernel(self.kernel))


@dataclass(frozen=True)
class ProcessState:
    """State (n, T_n, tau_n) of one trajectory.

    In float mode ``T`` and ``tau`` are floats (possibly inf) and the logs of
    both bin counts are authoritative.
    """

    n: int
    T: int | float
    tau: int | float
    log_T: float
    log_U: float  # log of the second bin's count, tau - T
    mode: CountMode = CountMode.EXACT

    @property
    def log_theta(self) -> float:
        return self.log_T - float(np.logaddexp(self.log_T, self.log_U))

    @property
    def log_1m_theta(self) -> float:
        return self.log_U - float(np.logaddexp(self.log_T, self.log_U))

    @property
    def theta(self) -> float:
        if self.mode is CountMode.EXACT:
            return self.T / self.tau
        return math.exp(self.log_theta)

    @property
    def loser_count(self) -> int | float:
        if self.mode is CountMode.EXACT:
            return min(self.T, self.tau - self.T)
        return math.exp(min(self.log_T, self.log_U))


@dataclass(frozen=True)
class StepNoise:
    epsilon: float


class StepResult(NamedTuple):
    next: ProcessState
    B: int | float
    noise: StepNoise


def initial_state(params: ModelParams) -> ProcessState:
    T0, tau0 = int(params.T0), params.seq.tau0
    return ProcessState(0, T0, tau0, math.log(T0), math.log(tau0 - T0), CountMode.EXACT)


# -- psi ---------------------------------------------------------------------


def psi(x, alpha):
    """Probability that one ball joins the bin holding share ``x``.

    Evaluated as 1 / (1 + exp(t)), t = alpha (log(1-x) - log x), in the form
    exp(-log(1 + e^t)) so tiny values reach the subnormal range instead of 0.
    The endpoints map to 0 and 1 exactly and alpha = 1 is the identity.
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(x_arr)):
        raise ValueError("psi of NaN")
    if np.any((x_arr < 0) | (x_arr > 1)):
        raise ValueError("psi needs x in [0, 1]")
    a = np.asarray(alpha, dtype=float)
    if np.all(a == 1):
        out = np.broadcast_to(x_arr, np.broadcast(x_arr, a).shape).copy()
    else:
        with np.errstate(divide="ignore", over="ignore"):
            t = a * (np.log1p(-x_arr) - np.log(x_arr))
            out = np.exp(-np.logaddexp(0.0, t))
        out = np.where(x_arr == 0, 0.0, np.where(x_arr == 1, 1.0, out))
    return float(out) if np.ndim(out) == 0 else out


def log_psi(log_x, log_1mx, alpha: float):
    """log psi(x) from log x and log(1 - x); stays accurate for x far below 1e-300."""
    log_x = np.asarray(log_x, dtype=float)
    log_1mx = np.asarray(log_1mx, dtype=float)
    if alpha == 1:
        out = log_x.copy()
    else:
        with np.errstate(invalid="ignore"):
            out = -np.logaddexp(0.0, alpha * (log_1mx - log_x))
        out = np.where(np.isneginf(log_x), -np.inf, np.where(np.isneginf(log_1mx), 0.0, out))
    return float(out) if out.ndim == 0 else out


# -- binomial sampling ----------------------------------------------------------


def _bernoulli(u, log_p, log_q):
    """1 with probability p, using the smaller of p, q for the comparison."""
    p_small = log_p <= log_q
    return np.where(p_small, u < np.exp(log_p), ~(u < np.exp(log_q)))


def _noise(B, size, p, q):
    sd = np.sqrt(size * p * q)
    with np.errstate(invalid="ignore", divide="ignore"):
        eps = (B - size * p) / sd
    return np.where(sd > 0, eps, 0.0)


def binomial_exact(size: int, log_p, log_q, u, cfg: SamplerConfig = SamplerConfig(),
                   as_object: bool = False):
    """Inverse-CDF binomial draws for an exact integer size.

    Returns (B, epsilon); B is int64 unless ``as_object``.
    """
    log_p = np.atleast_1d(np.asarray(log_p, dtype=float))
    log_q = np.atleast_1d(np.asarray(log_q, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    p, q = np.exp(log_p), np.exp(log_q)
    n = len(u)
    if size == 0:
        B = np.zeros(n, dtype=object if as_object else np.int64)
        return B, np.zeros(n)
    if size <= cfg.exact_cutoff:
        if size == 1:
            B = _bernoulli(u, log_p, log_q).astype(np.int64)
        else:
            p_small = log_p <= log_q
            k = stats.binom.ppf(u, size, np.where(p_small, p, q)).astype(np.int64)
            B = np.where(p_small, k, size - k)
        eps = _noise(B.astype(float), float(size), p, q)
        if as_object:
            B = np.array([int(b) for b in B], dtype=object)
        return B, eps
    return _binomial_large(size, log_p, log_q, u, cfg, as_object)


def _scaled_int(log_mag: float, factor: float = 1.0) -> int:
    """round(factor * exp(log_mag)) as an integer, without float overflow."""
    if log_mag < 600:
        return int(round(factor * math.exp(log_mag)))
    e2 = log_mag / LN2
    k = int(e2) - 60
    return int(round(factor * 2.0 ** (e2 - k))) << k


def _binomial_large(size: int, log_p, log_q, u, cfg: SamplerConfig, as_object: bool):
    log_size = math.log(size)
    p_small = log_p <= log_q
    log_small = np.minimum(log_p, log_q)
    log_big = np.maximum(log_p, log_q)
    with np.errstate(over="ignore"):
        mu = np.exp(log_size + log_small)
    poisson = mu <= cfg.poisson_cutoff
    k = stats.poisson.ppf(u, np.where(poisson, mu, 1.0))
    z = special.ndtri(u)
    eps = np.empty(len(u))
    B = np.empty(len(u), dtype=object)
    for i in range(len(u)):
        if poisson[i]:
            # count on the rare side
            small = int(k[i])
            spread = math.sqrt(mu[i] * math.exp(log_big[i]))
            eps[i] = 0.0 if spread == 0 else (small - mu[i]) / spread
        else:
            small_p = math.exp(log_small[i])
            if small_p > 0 and log_size < 1000:
                num, den = small_p.as_integer_ratio()
                mean = size * num // den
            else:
                mean = _scaled_int(log_size + log_small[i])
            log_sd = 0.5 * (log_size + log_small[i] + log_big[i])
            small = min(max(mean + _scaled_int(log_sd, float(z[i])), 0), size)
            eps[i] = float(z[i])
        if p_small[i]:
            B[i] = small
        else:
            B[i] = size - small
            eps[i] = -eps[i]
    if not as_object:
        B = B.astype(np.int64)
    return B, eps


def binomial_log(log_size: float, log_p, log_q, u, cfg: SamplerConfig = SamplerConfig()):
    """Binomial draws for a size known only through its log.

    Returns (log B, log(size - B), epsilon).
    """
    log_p = np.atleast_1d(np.asarray(log_p, dtype=float))
    log_q = np.atleast_1d(np.asarray(log_q, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if log_size <= math.log(cfg.exact_cutoff):
        size = int(round(math.exp(log_size)))
        B, eps = binomial_exact(size, log_p, log_q, u, cfg)
        with np.errstate(divide="ignore"):
            return np.log(B.astype(float)), np.log((size - B).astype(float)), eps
    p_small = log_p <= log_q
    log_small = np.minimum(log_p, log_q)
    log_big = np.maximum(log_p, log_q)
    with np.errstate(over="ignore"):
        mu = np.exp(log_size + log_small)
    poisson = mu <= cfg.poisson_cutoff
    k = stats.poisson.ppf(u, np.where(poisson, mu, 1.0))
    z = special.ndtri(u)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        log_k = np.log(k)
        # Poisson branch: the small side got k balls, the big side the rest
        pois_small = log_k
        pois_big = log_size + np.log1p(-np.exp(log_k - log_size))
        spread = np.sqrt(mu * np.exp(log_big))
        pois_eps = np.where(spread > 0, (k - mu) / spread, 0.0)
        # Gaussian branch: relative fluctuations z * sqrt(q / (size p))
        gauss_p = log_size + log_p + np.log1p(z * np.exp(0.5 * (log_q - log_size - log_p)))
        gauss_q = log_size + log_q + np.log1p(-z * np.exp(0.5 * (log_p - log_size - log_q)))
    log_B = np.where(poisson, np.where(p_small, pois_small, pois_big), gauss_p)
    log_rest = np.where(poisson, np.where(p_small, pois_big, pois_small), gauss_q)
    eps = np.where(poisson, np.where(p_small, pois_eps, -pois_eps), z)
    return log_B, log_rest, eps


def sample_binomial(size, p: float | None = None, rng: np.random.Generator | None = None, *,
                    log_p: float | None = None, log_q: float | None = None,
                    cfg: SamplerConfig = SamplerConfig()):
    """Draw one Binomial(size, p) variate.

    ``size`` may be an int (exact result) or a float (float-mode count; the
    result is a float).  Either ``p`` or ``log_p`` must be given.
    """
    if rng is None:
        rng = np.random.default_rng()
    if log_p is None:
        if p is None:
            raise ValueError("need p or log_p")
        if not -1e-12 <= p <= 1 + 1e-12:
            raise ValueError(f"p = {p} outside [0, 1]")
        p = min(max(p, 0.0), 1.0)
        with np.errstate(divide="ignore"):
            log_p = math.log(p) if p > 0 else -math.inf
            log_q = math.log1p(-p) if p < 1 else -math.inf
    else:
        if log_p > 1e-12:
            raise ValueError(f"log_p = {log_p} > 0")
        log_p = min(log_p, 0.0)
        if log_q is None:
            log_q = math.log(-math.expm1(log_p)) if log_p < 0 else -math.inf
    u = rng.random() + U_OFFSET
    if isinstance(size, (int, np.integer)):
        if size < 0:
            raise ValueError("size must be nonnegative")
        B, _ = binomial_exact(int(size), log_p, log_q, u, cfg, as_object=True)
        return int(B[0])
    if size <= 0:
        return 0.0
    log_B, _, _ = binomial_log(math.log(size), log_p, log_q, u, cfg)
    return float(np.exp(log_B[0]))


# -- the process -----------------------------------------------------------------


@dataclass
class StepBatch:
    """Per-replication outcome of one step of an ensemble."""

    n: int  # step index of the new state
    got1: np.ndarray  # bin 1 received >= 1 ball
    got2: np.ndarray
    loser_hit: np.ndarray  # the bin that trailed before the step received a ball
    epsilon: np.ndarray
    p_min: np.ndarray  # min(P_n, 1 - P_n)
    B: np.ndarray  # exact counts (int64 / object) or nan in float mode
    log_B: np.ndarray


@dataclass
class Ensemble:
    """A batch of independent trajectories advanced in lockstep.

    ``T`` holds bin-1 counts in exact mode (int64 or Python ints); in float
    mode ``log_T``/``log_U`` hold the logs of both bins.
    """

    params: ModelParams
    reps: int
    cfg: SamplerConfig = field(default_factory=SamplerConfig)
    n: int = 0
    mode: CountMode = CountMode.EXACT
    switched_at: int | None = None

    def __post_init__(self):
        seq = self.params.seq
        self.tau = seq.tau0
        self.log_tau = math.log(seq.tau0)
        self.T = np.full(self.reps, int(self.params.T0), dtype=np.int64)
        self.log_T = None
        self.log_U = None

    @classmethod
    def from_state(cls, params: ModelParams, state: ProcessState, cfg: SamplerConfig = SamplerConfig()):
        ens = cls(params, 1, cfg, n=state.n, mode=state.mode)
        if state.mode is CountMode.EXACT:
            ens.tau = int(state.tau)
            ens.log_tau = math.log(ens.tau)
            ens.T = np.array([int(state.T)], dtype=np.int64 if ens.tau < INT64_LIMIT else object)
        else:
            ens.tau = state.tau
            ens.log_tau = float(np.logaddexp(state.log_T, state.log_U))
            ens.T = None
            ens.log_T = np.array([state.log_T])
            ens.log_U = np.array([state.log_U])
        return ens

    # -- views --

    def log_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """(log T, log(tau - T)) per replication."""
        if self.mode is CountMode.FLOAT:
            return self.log_T, self.log_U
        if self.T.dtype == object:
            lt = np.array([math.log(t) if t > 0 else -math.inf for t in self.T])
            lu = np.array([math.log(self.tau - t) if t < self.tau else -math.inf for t in self.T])
            return lt, lu
        with np.errstate(divide="ignore"):
            return np.log(self.T.astype(float)), np.log((self.tau - self.T).astype(float))

    def log_shares(self) -> tuple[np.ndarray, np.ndarray]:
        """(log Theta, log(1 - Theta)) per replication."""
        lt, lu = self.log_counts()
        if self.mode is CountMode.EXACT:
            return lt - self.log_tau, lu - self.log_tau
        total = np.logaddexp(lt, lu)
        return lt - total, lu - total

    def theta(self) -> np.ndarray:
        if self.mode is CountMode.EXACT and self.T.dtype != object:
            return self.T / self.tau
        return np.exp(self.log_shares()[0])

    def state(self, i: int) -> ProcessState:
        lt, lu = self.log_counts()
        if self.mode is CountMode.EXACT:
            return ProcessState(self.n, int(self.T[i]), self.tau, float(lt[i]), float(lu[i]), self.mode)
        T = math.exp(lt[i]) if lt[i] < 709 else math.inf
        tau = math.exp(self.log_tau) if self.log_tau < 709 else math.inf
        return ProcessState(self.n, T, tau, float(lt[i]), float(lu[i]), self.mode)

    # -- dynamics --

    def _to_float(self) -> None:
        self.log_T, self.log_U = self.log_counts()
        self.T = None
        self.mode = CountMode.FLOAT
        self.switched_at = self.n

    def advance(self, u: np.ndarray) -> StepBatch:
        """Advance every replication by one step using uniforms ``u`` in (0, 1)."""
        seq = self.params.seq
        alpha = self.params.alpha
        nxt = self.n + 1
        if self.mode is CountMode.EXACT and not seq.is_exact(nxt):
            self._to_float()
        log_x, log_1mx = self.log_shares()
        log_p = log_psi(log_x, log_1mx, alpha)
        log_q = log_psi(log_1mx, log_x, alpha)
        loser_is_1 = log_x < log_1mx
        bulk = self.params.kernel is Kernel.BULK_PLACEMENT

        if self.mode is CountMode.EXACT:
            size = seq.sigma(nxt)
            new_tau = seq.tau(nxt)
            big = new_tau >= INT64_LIMIT
            if big and self.T.dtype != object:
                self.T = np.array([int(t) for t in self.T], dtype=object)
            if bulk:
                ind = _bernoulli(u, log_p, log_q)
                if big:
                    B = np.array([size if i else 0 for i in ind], dtype=object)
                else:
                    B = np.where(ind, size, 0).astype(np.int64)
                eps = _noise(ind.astype(float), 1.0, np.exp(log_p), np.exp(log_q))
            else:
                B, eps = binomial_exact(size, log_p, log_q, u, self.cfg, as_object=big)
            self.T = self.T + B
            self.tau = new_tau
            self.log_tau = math.log(new_tau)
            got1 = B > 0
            got2 = B < size
            if B.dtype == object:
                got1 = got1.astype(bool)
                got2 = got2.astype(bool)
            log_B = _log_ints(B)
            B_out = B
        else:
            log_size = seq.log_sigma(nxt)
            if bulk:
                ind = _bernoulli(u, log_p, log_q)
                log_B = np.where(ind, log_size, -np.inf)
                log_rest = np.where(ind, -np.inf, log_size)
                eps = _noise(ind.astype(float), 1.0, np.exp(log_p), np.exp(log_q))
            else:
                log_B, log_rest, eps = binomial_log(log_size, log_p, log_q, u, self.cfg)
            self.log_T = np.logaddexp(self.log_T, log_B)
            self.log_U = np.logaddexp(self.log_U, log_rest)
            self.log_tau = seq.log_tau(nxt)
            self.tau = math.exp(self.log_tau) if self.log_tau < 709 else math.inf
            got1 = log_B > -np.inf
            got2 = log_rest > -np.inf
            B_out = np.full(self.reps, np.nan)
        self.n = nxt
        p_min = np.exp(np.minimum(log_p, log_q))
        loser_hit = np.where(loser_is_1, got1, got2)
        return StepBatch(nxt, got1, got2, loser_hit, eps, p_min, B_out, log_B)


def _log_ints(values: np.ndarray) -> np.ndarray:
    if values.dtype == object:
        return np.array([math.log(v) if v > 0 else -math.inf for v in values])
    with np.errstate(divide="ignore"):
        return np.log(values.astype(float))


def step(state: ProcessState, params: ModelParams, rng: np.random.Generator,
         cfg: SamplerConfig = SamplerConfig()) -> StepResult:
    """One step of a single trajectory."""
    ens = Ensemble.from_state(params, state, cfg)
    batch = ens.advance(np.array([rng.random() + U_OFFSET]))
    if ens.mode is CountMode.EXACT:
        B = int(batch.B[0])
    else:
        B = float(np.exp(batch.log_B[0]))
    return StepResult(ens.state(0), B, StepNoise(float(batch.epsilon[0])))
