"""Growth sequences: how many balls arrive at each step.

A sequence is described by its arrival counts ``sigma_n`` (n >= 1) and an
initial total ``tau_0``.  Totals ``tau_n = tau_0 + sigma_1 + ... + sigma_n``
are exact Python integers while they fit inside the sequence's bit budget;
beyond it only ``log tau_n`` is available and values are flagged approximate.

Every built-in family also knows its asymptotics for a given feedback
exponent (growth parameter theta, the lambda functional, the behaviour of
rho_n = sigma_{n+1}/tau_n and the verdicts of the two series tests), which
is what the regime classifier consumes.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import mpmath
import numpy as np
from scipy import special

DEFAULT_BIT_BUDGET = 1_000_000
LN2 = math.log(2.0)
INF = math.inf


class ExactRangeError(ValueError):
    """Raised when an exact value is requested beyond the bit budget or list."""


class Family(str, Enum):
    CONSTANT = "constant"
    POLYNOMIAL = "polynomial"
    GEOMETRIC = "geometric"
    FACTORIAL = "factorial"
    DOUBLY_EXPONENTIAL_TAU = "doubly_exponential_tau"
    CUSTOM = "custom"


class SeriesVerdict(str, Enum):
    CONVERGES = "converges"
    DIVERGES = "diverges"
    UNKNOWN = "unknown"


class RhoKind(str, Enum):
    BOUNDED = "bounded"
    TENDS_TO_INFINITY = "tends_to_infinity"
    IRREGULAR = "irregular"


class Confidence(str, Enum):
    ANALYTIC = "analytic"
    NUMERIC_STABLE = "numeric_stable"
    INCONCLUSIVE = "inconclusive"


class SeriesKind(str, Enum):
    SIGMA_OVER_TAU_ALPHA = "sigma_over_tau_alpha"  # sum sigma_{n+1} / tau_n^alpha
    TAU_OVER_TAU_ALPHA = "tau_over_tau_alpha"  # sum tau_{n+1} / tau_n^alpha


@dataclass(frozen=True)
class AnalyticAsymptotics:
    """Closed-form asymptotics of a sequence for one feedback exponent.

    ``rho_bar`` is a rigorous upper bound on sup_n rho_n and is only
    meaningful when ``rho_class`` is ``BOUNDED``.
    """

    alpha: float
    theta: float
    lam: float
    rho_class: RhoKind
    series_sigma_tau_alpha: SeriesVerdict
    series_tau_tau_alpha: SeriesVerdict
    condition_S: bool
    condition_R: bool
    rho_bar: float | None = None

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "theta": _ext(self.theta),
            "lambda": _ext(self.lam),
            "rho_class": self.rho_class.value,
            "rho_bar": self.rho_bar,
            "series_sigma_tau_alpha": self.series_sigma_tau_alpha.value,
            "series_tau_tau_alpha": self.series_tau_tau_alpha.value,
            "condition_S": self.condition_S,
            "condition_R": self.condition_R,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnalyticAsymptotics":
        known = {
            "alpha", "theta", "lambda", "rho_class", "rho_bar",
            "series_sigma_tau_alpha", "series_tau_tau_alpha",
            "condition_S", "condition_R",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown analytic keys: {sorted(unknown)}")
        return cls(
            alpha=float(data["alpha"]),
            theta=_parse_ext(data["theta"]),
            lam=_parse_ext(data.get("lambda", "nan")),
            rho_class=RhoKind(data["rho_class"]),
            rho_bar=None if data.get("rho_bar") is None else float(data["rho_bar"]),
            series_sigma_tau_alpha=SeriesVerdict(data.get("series_sigma_tau_alpha", "unknown")),
            series_tau_tau_alpha=SeriesVerdict(data.get("series_tau_tau_alpha", "unknown")),
            condition_S=bool(data.get("condition_S", False)),
            condition_R=bool(data.get("condition_R", False)),
        )


def _ext(x: float):
    if math.isinf(x):
        return "inf"
    if math.isnan(x):
        return None
    return x


def _parse_ext(x) -> float:
    if x is None:
        return math.nan
    return float(x)


class Estimate(NamedTuple):
    value: float
    confidence: Confidence


@dataclass(frozen=True)
class SeriesResult:
    partial_sum: float
    log_partial_sum: float
    tail_bound: float | None
    verdict: SeriesVerdict

    @property
    def log_total_bound(self) -> float | None:
        """log of partial_sum + tail_bound, or None without a tail bound."""
        if self.tail_bound is None:
            return None
        if self.tail_bound == 0.0:
            return self.log_partial_sum
        return float(np.logaddexp(self.log_partial_sum, math.log(self.tail_bound)))


class GrowthSequence:
    """Base class for arrival sequences.

    Subclasses provide ``_sigma_exact``, ``_log2_tau_estimate`` (used to decide
    the exact range) and ``_log_sigma_approx`` (used beyond it).  Instances are
    immutable; caches are filled under a lock.
    """

    family: Family

    def __init__(self, tau0: int, *, bit_budget: int = DEFAULT_BIT_BUDGET):
        # a simulation further needs 0 < T0 < tau0, i.e. tau0 >= 2
        if int(tau0) != tau0 or tau0 < 1:
            raise ValueError(f"tau0 must be a positive integer, got {tau0!r}")
        if bit_budget < 64:
            raise ValueError("bit_budget must be at least 64")
        self.tau0 = int(tau0)
        self.bit_budget = int(bit_budget)
        self._lock = threading.Lock()
        # checkpoints of exact tau every _CP steps plus a sequential cursor
        self._checkpoints: dict[int, int] = {0: self.tau0}
        self._cursor: tuple[int, int] = (0, self.tau0)
        self._log_tau_cache: dict[int, float] = {}

    _CP = 64

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    # -- hooks -------------------------------------------------------------

    def _sigma_exact(self, n: int) -> int:
        raise NotImplementedError

    def _log2_tau_estimate(self, n: int) -> float:
        raise NotImplementedError

    def _log_sigma_approx(self, n: int) -> float:
        return math.log(self._sigma_exact(n))

    def _tau_closed(self, n: int) -> int | None:
        return None

    def analytic(self, alpha: float) -> AnalyticAsymptotics | None:
        return None

    def params(self) -> dict:
        raise NotImplementedError

    # -- exact evaluation ----------------------------------------------------

    def is_exact(self, n: int) -> bool:
        """Whether tau_n (and sigma_n) are available as exact integers."""
        return self._log2_tau_estimate(n) <= self.bit_budget

    def _check_exact(self, n: int) -> None:
        if not self.is_exact(n):
            raise ExactRangeError(
                f"tau_{n} exceeds the {self.bit_budget}-bit exact budget; use log_tau"
            )

    def sigma(self, n: int) -> int:
        """Exact number of balls added at step ``n`` (n >= 1)."""
        if n < 1:
            raise ValueError("sigma is defined for n >= 1")
        self._check_exact(n)
        return self._sigma_exact(n)

    def tau(self, n: int) -> int:
        """Exact total number of balls after step ``n``."""
        if n < 0:
            raise ValueError("tau is defined for n >= 0")
        if n == 0:
            return self.tau0
        self._check_exact(n)
        closed = self._tau_closed(n)
        if closed is not None:
            return closed
        with self._lock:
            cn, ct = self._cursor
            if cn <= n and n - cn <= self._CP:
                start, value = cn, ct
            else:
                start = (n // self._CP) * self._CP
                if start not in self._checkpoints:
                    last = max(k for k in self._checkpoints if k <= start)
                    value = self._checkpoints[last]
                    for k in range(last + 1, start + 1):
                        value += self._sigma_exact(k)
                        if k % self._CP == 0:
                            self._checkpoints[k] = value
                value = self._checkpoints[start]
            for k in range(start + 1, n + 1):
                value += self._sigma_exact(k)
                if k % self._CP == 0:
                    self._checkpoints.setdefault(k, value)
            self._cursor = (n, value)
            return value

    # -- log evaluation ------------------------------------------------------

    def log_tau(self, n: int) -> float:
        if n == 0:
            return math.log(self.tau0)
        if self.is_exact(n):
            return math.log(self.tau(n))
        cached = self._log_tau_cache.get(n)
        if cached is not None:
            return cached
        value = self._log_tau_approx(n)
        with self._lock:
            self._log_tau_cache[n] = value
        return value

    def _log_tau_approx(self, n: int) -> float:
        # walk back to the last exact index, then accumulate in log space
        k = n
        while k > 0 and not self.is_exact(k) and k not in self._log_tau_cache:
            k -= 1
        value = self.log_tau(k)
        for j in range(k + 1, n + 1):
            value = float(np.logaddexp(value, self._log_sigma_approx(j)))
            with self._lock:
                self._log_tau_cache[j] = value
        return value

    def log_sigma(self, n: int) -> float:
        if n < 1:
            raise ValueError("sigma is defined for n >= 1")
        if self.is_exact(n):
            return math.log(self._sigma_exact(n))
        return self._log_sigma_approx(n)

    def log_tau_array(self, stop: int) -> np.ndarray:
        """``log tau_n`` for n = 0 .. stop - 1."""
        return np.array([self.log_tau(n) for n in range(stop)], dtype=float)

    def log_sigma_array(self, stop: int) -> np.ndarray:
        """``log sigma_n`` for n = 0 .. stop - 1 (entry 0 is nan)."""
        out = np.empty(stop, dtype=float)
        if stop:
            out[0] = math.nan
        for n in range(1, stop):
            out[n] = self.log_sigma(n)
        return out

    def rho(self, n: int) -> float:
        """rho_n = sigma_{n+1} / tau_n as a float (may be inf)."""
        if self.is_exact(n + 1):
            return _ratio(self.sigma(n + 1), self.tau(n))
        return math.exp(min(self.log_sigma(n + 1) - self.log_tau(n), 709.0))

    def describe(self) -> dict:
        return {"family": self.family.value, "tau0": self.tau0, **self.params()}

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args}, tau0={self.tau0})"


def _ratio(a: int, b: int) -> float:
    try:
        return a / b
    except OverflowError:
        return math.inf


def _series_verdict_power(exponent: float) -> SeriesVerdict:
    """Verdict for sum n^{-exponent}."""
    return SeriesVerdict.CONVERGES if exponent > 1 else SeriesVerdict.DIVERGES


def _alpha_one_asymptotics(alpha: float, rho_class: RhoKind, rho_bar, lam, cond_s, cond_r):
    # for alpha = 1, alpha^-n log tau_n = log tau_n -> inf and both series diverge
    return AnalyticAsymptotics(
        alpha=alpha,
        theta=INF,
        lam=lam,
        rho_class=rho_class,
        rho_bar=rho_bar,
        series_sigma_tau_alpha=SeriesVerdict.DIVERGES,
        series_tau_tau_alpha=SeriesVerdict.DIVERGES,
        condition_S=cond_s,
        condition_R=cond_r,
    )


class ConstantSequence(GrowthSequence):
    family = Family.CONSTANT

    def __init__(self, sigma: int = 1, tau0: int = 2, **kw):
        super().__init__(tau0, **kw)
        if int(sigma) != sigma or sigma < 1:
            raise ValueError("constant sigma must be a positive integer")
        self.s = int(sigma)

    def params(self) -> dict:
        return {"sigma": self.s}

    def _sigma_exact(self, n: int) -> int:
        return self.s

    def _tau_closed(self, n: int) -> int:
        return self.tau0 + self.s * n

    def _log2_tau_estimate(self, n: int) -> float:
        return math.log2(self.tau0 + self.s * float(n))

    def log_tau(self, n: int) -> float:
        return math.log(self.tau0 + self.s * n)

    def log_tau_array(self, stop: int) -> np.ndarray:
        return np.log(self.tau0 + self.s * np.arange(stop, dtype=float))

    def log_sigma_array(self, stop: int) -> np.ndarray:
        out = np.full(stop, math.log(self.s))
        if stop:
            out[0] = math.nan
        return out

    def rho_bar(self) -> float:
        return self.s / self.tau0

    def exact_tail(self, alpha: float, m: int) -> float:
        """sum_{n >= m} sigma_{n+1} / tau_n^alpha in closed form (alpha > 1)."""
        return self.s ** (1.0 - alpha) * float(special.zeta(alpha, self.tau0 / self.s + m))

    def analytic(self, alpha: float) -> AnalyticAsymptotics:
        if alpha == 1:
            return _alpha_one_asymptotics(alpha, RhoKind.BOUNDED, self.rho_bar(), 1.0, True, True)
        return AnalyticAsymptotics(
            alpha=alpha,
            theta=0.0,
            lam=1.0,
            rho_class=RhoKind.BOUNDED,
            rho_bar=self.rho_bar(),
            series_sigma_tau_alpha=_series_verdict_power(alpha),
            # tau_{n+1}/tau_n^alpha ~ n^{1-alpha}
            series_tau_tau_alpha=_series_verdict_power(alpha - 1.0),
            condition_S=True,
            condition_R=True,
        )


class PolynomialSequence(GrowthSequence):
    """sigma_n = c * n^d."""

    family = Family.POLYNOMIAL

    def __init__(self, c: int = 1, degree: int = 1, tau0: int = 2, **kw):
        super().__init__(tau0, **kw)
        if int(c) != c or c < 1 or int(degree) != degree or degree < 0:
            raise ValueError("polynomial needs integer c >= 1 and degree >= 0")
        self.c, self.d = int(c), int(degree)

    def params(self) -> dict:
        return {"c": self.c, "degree": self.d}

    def _sigma_exact(self, n: int) -> int:
        return self.c * n**self.d

    def _log2_tau_estimate(self, n: int) -> float:
        return math.log2(self.tau0 + self.c * (float(n) + 1.0) ** (self.d + 1))

    def _log_sigma_approx(self, n: int) -> float:
        return math.log(self.c) + self.d * math.log(n)

    def rho_bar(self) -> float:
        # rho_n <= (d+1) 2^d / n for n >= 1 since tau_n >= c n^{d+1}/(d+1)
        cutoff = 1000
        head = max(self.rho(n) for n in range(cutoff))
        return max(head, (self.d + 1) * 2.0**self.d / cutoff)

    def analytic(self, alpha: float) -> AnalyticAsymptotics:
        rho_bar = self.rho_bar()
        if alpha == 1:
            return _alpha_one_asymptotics(alpha, RhoKind.BOUNDED, rho_bar, 1.0, True, True)
        d = self.d
        return AnalyticAsymptotics(
            alpha=alpha,
            theta=0.0,
            lam=1.0,
            rho_class=RhoKind.BOUNDED,
            rho_bar=rho_bar,
            # sigma/tau^alpha ~ n^{d - alpha(d+1)}
            series_sigma_tau_alpha=_series_verdict_power(alpha * (d + 1) - d),
            # tau_{n+1}/tau_n^alpha ~ n^{(d+1)(1-alpha)}
            series_tau_tau_alpha=_series_verdict_power((d + 1) * (alpha - 1)),
            condition_S=True,
            condition_R=True,
        )


class GeometricSequence(GrowthSequence):
    """sigma_n = c * r^n."""

    family = Family.GEOMETRIC

    def __init__(self, c: int = 1, r: int = 2, tau0: int = 2, **kw):
        super().__init__(tau0, **kw)
        if int(c) != c or c < 1 or int(r) != r or r < 2:
            raise ValueError("geometric needs integer c >= 1 and ratio r >= 2")
        self.c, self.r = int(c), int(r)

    def params(self) -> dict:
        return {"c": self.c, "r": self.r}

    def _sigma_exact(self, n: int) -> int:
        return self.c * self.r**n

    def _tau_closed(self, n: int) -> int:
        return self.tau0 + self.c * self.r * (self.r**n - 1) // (self.r - 1)

    def _log2_tau_estimate(self, n: int) -> float:
        return math.log2(self.c * self.r / (self.r - 1)) + n * math.log2(self.r) + 1.0

    def _log_sigma_approx(self, n: int) -> float:
        return math.log(self.c) + n * math.log(self.r)

    def rho_bar(self) -> float:
        # rho_n is a monotone function of r^n with limit r - 1
        return max(self.c * self.r / self.tau0, float(self.r - 1))

    def analytic(self, alpha: float) -> AnalyticAsymptotics:
        if alpha == 1:
            return _alpha_one_asymptotics(alpha, RhoKind.BOUNDED, self.rho_bar(), 1.0, True, True)
        return AnalyticAsymptotics(
            alpha=alpha,
            theta=0.0,
            lam=float(self.r) ** (1.0 - alpha),
            rho_class=RhoKind.BOUNDED,
            rho_bar=self.rho_bar(),
            series_sigma_tau_alpha=SeriesVerdict.CONVERGES,
            series_tau_tau_alpha=SeriesVerdict.CONVERGES,
            condition_S=True,
            condition_R=True,
        )


class FactorialSequence(GrowthSequence):
    """sigma_n = n!."""

    family = Family.FACTORIAL

    def __init__(self, tau0: int = 2, **kw):
        super().__init__(tau0, **kw)

    def params(self) -> dict:
        return {}

    def _sigma_exact(self, n: int) -> int:
        return math.factorial(n)

    def _log2_tau_estimate(self, n: int) -> float:
        # tau_n <= tau0 + 2 n!
        return max(math.lgamma(n + 1.0) / LN2 + 1.0, math.log2(self.tau0) + 1.0)

    def _log_sigma_approx(self, n: int) -> float:
        return math.lgamma(n + 1.0)

    def analytic(self, alpha: float) -> AnalyticAsymptotics:
        if alpha == 1:
            return _alpha_one_asymptotics(alpha, RhoKind.TENDS_TO_INFINITY, None, 0.0, True, True)
        return AnalyticAsymptotics(
            alpha=alpha,
            theta=0.0,
            # lambda_n = (n+1) / n^alpha
            lam=0.0,
            rho_class=RhoKind.TENDS_TO_INFINITY,
            series_sigma_tau_alpha=SeriesVerdict.CONVERGES,
            series_tau_tau_alpha=SeriesVerdict.CONVERGES,
            condition_S=True,
            condition_R=True,
        )


class DoublyExponentialTau(GrowthSequence):
    """tau_n = floor(b^n * exp(theta0 * base^n)), base defaulting to alpha.

    The floor is evaluated with enough working precision that the integer part
    is certain; ``tau0`` is implied by the formula.
    """

    family = Family.DOUBLY_EXPONENTIAL_TAU

    def __init__(self, b: float, theta0: float, alpha: float, *, base: float | None = None,
                 horizon: int = 64, bit_budget: int = DEFAULT_BIT_BUDGET):
        if b <= 0 or theta0 <= 0:
            raise ValueError("b and theta0 must be positive")
        self.b = float(b)
        self.theta0 = float(theta0)
        self.alpha = float(alpha)
        self.base = float(alpha if base is None else base)
        if self.base <= 1:
            raise ValueError("base must exceed 1")
        self._tau_exact_cache: dict[int, int] = {}
        self.bit_budget = int(bit_budget)
        tau0 = self._floor_value(0)
        super().__init__(tau0, bit_budget=bit_budget)
        self._tau_exact_cache[0] = tau0
        self.horizon = int(horizon)
        self._validate(self.horizon)

    def params(self) -> dict:
        out = {"b": self.b, "theta0": self.theta0, "alpha": self.alpha}
        if self.base != self.alpha:
            out["base"] = self.base
        return out

    def _log_x(self, n: int) -> float:
        try:
            return n * math.log(self.b) + self.theta0 * self.base**n
        except OverflowError:
            return INF

    def _floor_value(self, n: int) -> int:
        bits = int(max(self._log_x(n), 0.0) / LN2) + 64
        guard = 64
        for _ in range(8):
            with mpmath.workprec(bits + guard):
                x = mpmath.mpf(self.b) ** n * mpmath.exp(mpmath.mpf(self.theta0) * mpmath.mpf(self.base) ** n)
                fl = mpmath.floor(x)
                frac = x - fl
                # relative error of x is ~2^-(bits+guard-8); ulp of the integer part is 1
                slack = mpmath.ldexp(x, -(bits + guard - 16))
                if frac > slack and 1 - frac > slack:
                    return int(fl)
            guard *= 4
        raise ArithmeticError(f"could not resolve floor of tau_{n}")

    def _tau_closed(self, n: int) -> int:
        value = self._tau_exact_cache.get(n)
        if value is None:
            value = self._floor_value(n)
            with self._lock:
                self._tau_exact_cache[n] = value
        return value

    def _sigma_exact(self, n: int) -> int:
        return self._tau_closed(n) - self._tau_closed(n - 1)

    def _log2_tau_estimate(self, n: int) -> float:
        return self._log_x(n) / LN2 + 1.0

    def _log_tau_approx(self, n: int) -> float:
        # floor correction is below 1/tau_n relative
        return self._log_x(n)

    def _log_sigma_approx(self, n: int) -> float:
        a, b = self.log_tau(n - 1), self.log_tau(n)
        return b + math.log(-math.expm1(a - b))

    def _validate(self, horizon: int) -> None:
        for n in range(1, horizon + 1):
            gap = self._log_x(n) - self._log_x(n - 1)
            if gap > LN2 + 1e-6 and self._log_x(n - 1) > 1e-6:
                # X_n >= 2 X_{n-1} with X_{n-1} > 1 gives floor(X_n) > X_{n-1} >= floor(X_{n-1})
                ok = True
            elif self.is_exact(n):
                ok = self.sigma(n) >= 1
            else:
                ok = self.log_tau(n) - self.log_tau(n - 1) > 1e-9
            if not ok:
                raise ValueError(
                    f"tau_n = floor({self.b}^n exp({self.theta0} {self.base}^n)) is not "
                    f"strictly increasing at n={n}"
                )

    def log_series_terms(self, alpha: float, kind: SeriesKind, start: int, stop: int) -> np.ndarray:
        """Series terms with the base^n parts cancelled in closed form.

        Beyond the exact range log tau_n is of size base^n, so subtracting two
        such floats loses every digit; the floor is dropped there, a relative
        change below 2^-bit_budget.
        """
        split = start
        while split < stop and self.is_exact(split + 1):
            split += 1
        head = _generic_log_series_terms(self, alpha, kind, start, split)
        lb = math.log(self.b)
        tail = np.empty(stop - split)
        for i, n in enumerate(range(split, stop)):
            try:
                power = self.theta0 * self.base**n
            except OverflowError:
                power = INF
            growth = 0.0 if self.base == alpha else power * (self.base - alpha)
            term = (n + 1) * lb - alpha * n * lb + growth
            if kind is SeriesKind.SIGMA_OVER_TAU_ALPHA:
                # sigma_{n+1} = tau_{n+1} (1 - tau_n / tau_{n+1})
                term += math.log1p(-math.exp(-lb - power * (self.base - 1.0)))
            tail[i] = term
        return np.concatenate([head, tail])

    def geometric_tail(self, m: int) -> float | None:
        """Rigorous bound on sum_{n>=m} tau_{n+1}/tau_n^alpha (>= the sigma series).

        Uses tau_n >= X_n - 1 with X_n = b^n e^{theta0 alpha^n}, giving terms
        at most b^{(1-alpha)n+1} (1 - 1/X_m)^{-alpha}.  Only for base == alpha, b > 1.
        """
        a = self.alpha
        if self.base != a or self.b <= 1 or a <= 1:
            return None
        log_xm = self._log_x(m)
        if log_xm <= 0:
            return None
        ratio = self.b ** (1.0 - a)
        log_head = ((1.0 - a) * m + 1.0) * math.log(self.b) - math.log1p(-ratio)
        log_corr = -a * math.log(-math.expm1(-log_xm)) if log_xm < 700 else 0.0
        return math.exp(log_head + log_corr)

    def analytic(self, alpha: float) -> AnalyticAsymptotics:
        if alpha == 1:
            return _alpha_one_asymptotics(alpha, RhoKind.TENDS_TO_INFINITY, None, math.nan, True, True)
        beta = self.base
        if beta > alpha:
            theta, lam = INF, INF
            s_sig = s_tau = SeriesVerdict.DIVERGES
        elif beta < alpha:
            # lambda_n exponent theta0 beta^{n-1} (beta-1)(beta-alpha) -> -inf
            theta, lam = 0.0, 0.0
            s_sig = s_tau = SeriesVerdict.CONVERGES
        else:
            theta = self.theta0
            lam = self.b ** (1.0 - alpha)
            # terms ~ b^{(1-alpha) n + 1}
            s_sig = s_tau = SeriesVerdict.CONVERGES if self.b > 1 else SeriesVerdict.DIVERGES
        return AnalyticAsymptotics(
            alpha=alpha,
            theta=theta,
            lam=lam,
            rho_class=RhoKind.TENDS_TO_INFINITY,
            series_sigma_tau_alpha=s_sig,
            series_tau_tau_alpha=s_tau,
            condition_S=True,
            condition_R=True,
        )


class CustomSequence(GrowthSequence):
    """Explicit list of arrival counts sigma_1 .. sigma_N with optional asymptotics."""

    family = Family.CUSTOM

    def __init__(self, sigmas: Sequence[int], tau0: int = 2, *,
                 analytic: Sequence[AnalyticAsymptotics] = (), name: str | None = None, **kw):
        super().__init__(tau0, **kw)
        values = [int(s) for s in sigmas]
        if not values:
            raise ValueError("custom sequence needs at least one sigma value")
        if any(s < 1 for s in values):
            raise ValueError("custom sigma values must be >= 1")
        self._sigmas = values
        self._analytic = {float(a.alpha): a for a in analytic}
        self.name = name
        taus = [self.tau0]
        for s in values:
            taus.append(taus[-1] + s)
        self._taus = taus

    @classmethod
    def from_file(cls, path, tau0: int = 2, **kw) -> "CustomSequence":
        with open(path) as fh:
            values = [int(line) for line in (ln.strip() for ln in fh) if line and not line.startswith("#")]
        return cls(values, tau0, **kw)

    @property
    def max_n(self) -> int:
        return len(self._sigmas)

    def params(self) -> dict:
        out = {"sigmas": list(self._sigmas)}
        if self.name:
            out["name"] = self.name
        return out

    def _range(self, n: int) -> None:
        if n > self.max_n:
            raise ExactRangeError(f"custom sequence only defines sigma_1..sigma_{self.max_n}")

    def is_exact(self, n: int) -> bool:
        self._range(n)
        return True

    def _sigma_exact(self, n: int) -> int:
        self._range(n)
        return self._sigmas[n - 1]

    def _tau_closed(self, n: int) -> int:
        self._range(n)
        return self._taus[n]

    def _log2_tau_estimate(self, n: int) -> float:
        return 0.0

    def analytic(self, alpha: float) -> AnalyticAsymptotics | None:
        return self._analytic.get(float(alpha))

    def with_analytic(self, *asym: AnalyticAsymptotics) -> "CustomSequence":
        return CustomSequence(self._sigmas, self.tau0, analytic=asym, name=self.name,
                              bit_budget=self.bit_budget)


# -- functionals ------------------------------------------------------------


def sigma(seq: GrowthSequence, n: int) -> int:
    return seq.sigma(n)


def tau(seq: GrowthSequence, n: int) -> int:
    return seq.tau(n)


def rho_bound(seq: GrowthSequence, alpha: float) -> float | None:
    asym = seq.analytic(alpha)
    if asym is not None and asym.rho_class is RhoKind.BOUNDED:
        return asym.rho_bar
    return None


def estimate_theta(seq: GrowthSequence, alpha: float, n_max: int = 40, *,
                   use_analytic: bool = True) -> Estimate:
    """Growth parameter theta = lim alpha^{-n} log tau_n."""
    if alpha <= 1:
        raise ValueError("theta is only defined for alpha > 1")
    if n_max < 8:
        raise ValueError("n_max must be at least 8")
    if use_analytic:
        asym = seq.analytic(alpha)
        if asym is not None and not math.isnan(asym.theta):
            return Estimate(asym.theta, Confidence.ANALYTIC)
    if seq.family is Family.CUSTOM:
        n_max = min(n_max, seq.max_n)
    g_last = seq.log_tau(n_max) / alpha**n_max
    g_prev = seq.log_tau(n_max - 1) / alpha ** (n_max - 1)
    tol = 1e-4 * max(1.0, g_last)
    if abs(g_last - g_prev) < tol:
        return Estimate(g_last, Confidence.NUMERIC_STABLE)
    return Estimate(g_last, Confidence.INCONCLUSIVE)


def log_lambda_n(seq: GrowthSequence, alpha: float, n: int) -> float:
    """log of lambda_n = sigma_{n+1} sigma_{n-1}^alpha / sigma_n^{alpha+1}."""
    if n < 2:
        raise ValueError("lambda_n needs n >= 2")
    return seq.log_sigma(n + 1) + alpha * seq.log_sigma(n - 1) - (alpha + 1.0) * seq.log_sigma(n)


def estimate_lambda(seq: GrowthSequence, alpha: float, n_max: int = 40, *,
                    use_analytic: bool = True) -> Estimate:
    """limsup of lambda_n, read from the tail window [n_max/2, n_max]."""
    if n_max < 4:
        raise ValueError("n_max must be at least 4")
    if use_analytic:
        asym = seq.analytic(alpha)
        if asym is not None and not math.isnan(asym.lam):
            return Estimate(asym.lam, Confidence.ANALYTIC)
    if seq.family is Family.CUSTOM:
        n_max = min(n_max, seq.max_n - 1)
    lo = max(2, n_max // 2)
    logs = np.array([log_lambda_n(seq, alpha, n) for n in range(lo, n_max + 1)])
    running = np.maximum.accumulate(logs)
    half = max(0, len(running) // 2 - 1)
    value = math.exp(running[-1]) if running[-1] < 709 else INF
    earlier = math.exp(running[half]) if running[half] < 709 else INF
    if math.isinf(value):
        return Estimate(value, Confidence.INCONCLUSIVE)
    moving = abs(value - earlier) > 0.01 * max(abs(value), 1e-300)
    return Estimate(value, Confidence.INCONCLUSIVE if moving else Confidence.NUMERIC_STABLE)


def log_series_terms(seq: GrowthSequence, alpha: float, kind: SeriesKind,
                     start: int, stop: int) -> np.ndarray:
    """log of the series terms with index n in [start, stop)."""
    if isinstance(seq, DoublyExponentialTau):
        return seq.log_series_terms(alpha, kind, start, stop)
    return _generic_log_series_terms(seq, alpha, kind, start, stop)


def _generic_log_series_terms(seq: GrowthSequence, alpha: float, kind: SeriesKind,
                              start: int, stop: int) -> np.ndarray:
    if stop <= start:
        return np.empty(0)
    log_tau = seq.log_tau_array(stop + 1)
    idx = np.arange(start, stop)
    if kind is SeriesKind.SIGMA_OVER_TAU_ALPHA:
        log_sigma = seq.log_sigma_array(stop + 1)
        return log_sigma[idx + 1] - alpha * log_tau[idx]
    return log_tau[idx + 1] - alpha * log_tau[idx]


def series_tail_bound(seq: GrowthSequence, alpha: float, kind: SeriesKind, m: int) -> float | None:
    """Rigorous bound on the sum of terms with index >= m, when one is known."""
    if alpha <= 1:
        return None
    if isinstance(seq, DoublyExponentialTau):
        return seq.geometric_tail(m)
    if kind is not SeriesKind.SIGMA_OVER_TAU_ALPHA:
        return None
    if isinstance(seq, ConstantSequence):
        return seq.exact_tail(alpha, m)
    rho_bar = rho_bound(seq, alpha)
    if rho_bar is None:
        return None
    # sum_{n>=m} sigma_{n+1}/tau_n^alpha <= (1+rho)^alpha/(alpha-1) / tau_m^{alpha-1}
    return math.exp(alpha * math.log1p(rho_bar) - math.log(alpha - 1.0)
                    - (alpha - 1.0) * seq.log_tau(m))


def _ratio_test(log_terms: np.ndarray) -> SeriesVerdict:
    if len(log_terms) < 8:
        return SeriesVerdict.UNKNOWN
    tail = log_terms[-(len(log_terms) // 4):]
    ratios = np.diff(tail)
    if np.all(ratios < math.log(0.99)):
        return SeriesVerdict.CONVERGES
    if np.all(ratios >= 0.0):
        return SeriesVerdict.DIVERGES
    return SeriesVerdict.UNKNOWN


def series_tail(seq: GrowthSequence, alpha: float, kind: SeriesKind, start: int, horizon: int,
                *, heuristic: bool = False) -> SeriesResult:
    """Partial sum of one of the two series over [start, horizon) plus a tail bound.

    The verdict comes from analytic metadata; the ratio-test heuristic is only
    consulted when ``heuristic`` is set, otherwise unknown series stay unknown.
    """
    if start < 0 or horizon <= start:
        raise ValueError("need 0 <= start < horizon")
    logs = log_series_terms(seq, alpha, kind, start, horizon)
    log_sum = float(special.logsumexp(logs))
    partial = math.exp(log_sum) if log_sum < 709 else INF
    verdict = SeriesVerdict.UNKNOWN
    asym = seq.analytic(alpha)
    if asym is not None:
        verdict = (asym.series_sigma_tau_alpha if kind is SeriesKind.SIGMA_OVER_TAU_ALPHA
                   else asym.series_tau_tau_alpha)
    elif heuristic:
        verdict = _ratio_test(logs)
    tail = series_tail_bound(seq, alpha, kind, horizon)
    return SeriesResult(partial, log_sum, tail, verdict)


def check_identity_1101(seq: GrowthSequence, n: int) -> float:
    """|sum_{k<=n} -log(1 - sigma_k/tau_k) - log(tau_n/tau_0)| in floating point."""
    if n < 1:
        raise ValueError("n must be >= 1")
    terms = []
    for k in range(1, n + 1):
        s, t = seq.sigma(k), seq.tau(k)
        if 2 * s <= t:
            terms.append(-math.log1p(-(s / t)))
        else:
            # complement 1 - s/t = (t - s)/t taken from the exact integers
            terms.append(math.log(t) - math.log(t - s))
    lhs = math.fsum(terms)
    rhs = math.log(seq.tau(n)) - math.log(seq.tau0)
    return abs(lhs - rhs)


def largest_exact_n(seq: GrowthSequence, cap: int) -> int:
    """Largest n <= cap with tau_n in exact range."""
    if isinstance(seq, CustomSequence):
        return min(cap, seq.max_n)
    lo, hi = 0, cap
    if seq.is_exact(cap):
        return cap
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if seq.is_exact(mid):
            lo = mid
        else:
            hi = mid
    return lo


# -- construction from plain data ---------------------------------------------


def make_sequence(spec: dict, alpha: float | None = None, *, bit_budget: int = DEFAULT_BIT_BUDGET,
                  horizon: int = 64) -> GrowthSequence:
    """Build a sequence from a ``{"name": family, ...params}`` mapping."""
    spec = dict(spec)
    name = Family(spec.pop("name"))
    tau0 = spec.pop("tau0", 2)
    kw = {"bit_budget": bit_budget}
    if name is Family.CONSTANT:
        seq = ConstantSequence(spec.pop("sigma", 1), tau0, **kw)
    elif name is Family.POLYNOMIAL:
        seq = PolynomialSequence(spec.pop("c", 1), spec.pop("degree", 1), tau0, **kw)
    elif name is Family.GEOMETRIC:
        seq = GeometricSequence(spec.pop("c", 1), spec.pop("r", 2), tau0, **kw)
    elif name is Family.FACTORIAL:
        seq = FactorialSequence(tau0, **kw)
    elif name is Family.DOUBLY_EXPONENTIAL_TAU:
        if alpha is None and "base" not in spec:
            raise ValueError("doubly_exponential_tau needs alpha or base")
        base = spec.pop("base", None)
        seq = DoublyExponentialTau(spec.pop("b"), spec.pop("theta0"), alpha if alpha else base,
                                   base=base, horizon=horizon, **kw)
    else:
        analytic = [AnalyticAsymptotics.from_dict(a) for a in spec.pop("analytic", [])]
        label = spec.pop("label", None)
        if "file" in spec:
            seq = CustomSequence.from_file(spec.pop("file"), tau0, analytic=analytic, name=label, **kw)
        else:
            seq = CustomSequence(spec.pop("sigmas"), tau0, analytic=analytic, name=label, **kw)
    if spec:
        raise ValueError(f"unknown sequence parameters: {sorted(spec)}")
    return seq
