"""Regime classification: from a growth sequence's asymptotics to predicted P(D), P(M)."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

from .sequences import (
    AnalyticAsymptotics,
    Confidence,
    Family,
    GrowthSequence,
    RhoKind,
    SeriesVerdict,
    estimate_lambda,
    estimate_theta,
)


class Regime(str, Enum):
    NO_FEEDBACK = "no_feedback"
    SUPERCRITICAL = "supercritical"
    SUBCRITICAL_BOUNDED_RHO = "subcritical_bounded_rho"
    SUBCRITICAL_FAST_RHO = "subcritical_fast_rho"
    CRITICAL = "critical"
    UNCLASSIFIABLE = "unclassifiable"


class Dominance(str, Enum):
    ALMOST_SURE = "almost_sure"
    NEVER = "never"
    UNKNOWN = "unknown"


class Monopoly(str, Enum):
    ALMOST_SURE = "almost_sure"
    NEVER = "never"
    STRICTLY_BETWEEN = "strictly_between"
    UNKNOWN = "unknown"


class ContradictoryInputs(ValueError):
    """Asymptotic metadata that no sequence can have."""


class ClassifierInternalError(RuntimeError):
    """The series cross-check disagrees with the main table."""


NUMERIC_THETA_TOL = 1e-4  # a stable numeric theta below this reads as 0

THEOREMS = {
    1: "Theorem 1 (alpha = 1: P(D) = 0)",
    2: "Theorem 2 ((S) and (R): P(D) = 1)",
    3: "Theorem 3 (theta = inf: P(M) = 0)",
    4: "Theorem 4 (theta = 0, rho bounded: P(M) = 1)",
    5: "Theorem 4 (theta = 0, rho -> inf: lambda < 1 gives P(M) = 1, lambda > 1 gives P(M) = 0)",
    6: "Theorem 5 (0 < theta < inf: P(M) = 0 or P(M) in (0, 1) by sum tau_{n+1}/tau_n^alpha)",
    7: "Lemma (sum sigma_{n+1}/tau_n^alpha = inf implies P(M) = 0)",
}


@dataclass(frozen=True)
class ClassifierInputs:
    """What the table needs, each value tagged with how it was obtained.

    ``rho_class`` is None when the behaviour of rho_n is not known.
    """

    alpha: float
    theta: float
    lam: float
    rho_class: RhoKind | None
    series_sigma: SeriesVerdict
    series_tau: SeriesVerdict
    condition_S: bool | None
    condition_R: bool | None
    theta_confidence: Confidence = Confidence.ANALYTIC
    lam_confidence: Confidence = Confidence.ANALYTIC
    other_confidence: Confidence = Confidence.ANALYTIC

    @classmethod
    def from_analytic(cls, asym: AnalyticAsymptotics) -> "ClassifierInputs":
        return cls(
            alpha=asym.alpha,
            theta=asym.theta,
            lam=asym.lam,
            rho_class=asym.rho_class,
            series_sigma=asym.series_sigma_tau_alpha,
            series_tau=asym.series_tau_tau_alpha,
            condition_S=asym.condition_S,
            condition_R=asym.condition_R,
        )

    @property
    def confidence(self) -> Confidence:
        order = [Confidence.ANALYTIC, Confidence.NUMERIC_STABLE, Confidence.INCONCLUSIVE]
        return max(self.theta_confidence, self.lam_confidence, self.other_confidence,
                   key=order.index)

    def to_dict(self) -> dict:
        def ext(x):
            if x is None or (isinstance(x, float) and math.isnan(x)):
                return None
            return "inf" if x == math.inf else x

        return {
            "alpha": self.alpha,
            "theta": ext(self.theta),
            "lambda": ext(self.lam),
            "rho_class": None if self.rho_class is None else self.rho_class.value,
            "series_sigma_tau_alpha": self.series_sigma.value,
            "series_tau_tau_alpha": self.series_tau.value,
            "condition_S": self.condition_S,
            "condition_R": self.condition_R,
            "confidence": self.confidence.value,
        }


@dataclass(frozen=True)
class Provenance:
    rules: tuple[int, ...]
    inputs: dict = field(default_factory=dict)

    @property
    def theorems(self) -> list[str]:
        return [THEOREMS[r] for r in self.rules if r in THEOREMS]

    def to_dict(self) -> dict:
        return {"rule": list(self.rules), "theorem": self.theorems, "inputs": self.inputs}


@dataclass(frozen=True)
class RegimeVerdict:
    regime: Regime
    dominance: Dominance
    monopoly: Monopoly
    provenance: Provenance
    confidence: Confidence = Confidence.ANALYTIC

    @property
    def definite(self) -> bool:
        return (self.regime is not Regime.UNCLASSIFIABLE
                and self.monopoly is not Monopoly.UNKNOWN)

    def to_dict(self) -> dict:
        return {
            "regime": self.regime.value,
            "dominance": self.dominance.value,
            "monopoly": self.monopoly.value,
            "confidence": self.confidence.value,
            "provenance": self.provenance.to_dict(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def classify(alpha: float, asym: AnalyticAsymptotics | ClassifierInputs, *,
             strict: bool = False) -> RegimeVerdict:
    """Apply the theorem table to one set of asymptotics.

    Rules are tried in order; the divergence lemma (rule 7) is applied last as
    an independent cross-check.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    inp = asym if isinstance(asym, ClassifierInputs) else ClassifierInputs.from_analytic(asym)
    if not math.isclose(inp.alpha, alpha):
        raise ValueError(f"asymptotics were computed for alpha={inp.alpha}, not {alpha}")
    if strict and inp.confidence is not Confidence.ANALYTIC:
        raise ValueError("strict mode requires analytic inputs")
    info = inp.to_dict()

    if alpha == 1:
        return RegimeVerdict(Regime.NO_FEEDBACK, Dominance.NEVER, Monopoly.NEVER,
                             Provenance((1,), info), inp.confidence)

    theta = inp.theta
    if inp.theta_confidence is Confidence.NUMERIC_STABLE and 0 <= theta < NUMERIC_THETA_TOL:
        theta = 0.0
    if inp.rho_class is RhoKind.BOUNDED and theta > 0 and not math.isnan(theta):
        raise ContradictoryInputs(
            "rho_n bounded forces theta = 0 (bounded-rho tail lemma), got theta="
            f"{theta}")

    rules: list[int] = []
    if inp.condition_S and inp.condition_R:
        dominance = Dominance.ALMOST_SURE
        rules.append(2)
    else:
        dominance = Dominance.UNKNOWN

    regime = Regime.UNCLASSIFIABLE
    monopoly = Monopoly.UNKNOWN
    theta_known = inp.theta_confidence is not Confidence.INCONCLUSIVE and not math.isnan(theta)
    if theta_known and theta == math.inf:
        regime, monopoly = Regime.SUPERCRITICAL, Monopoly.NEVER
        rules.append(3)
    elif theta_known and theta == 0:
        if inp.rho_class is RhoKind.BOUNDED:
            regime = Regime.SUBCRITICAL_BOUNDED_RHO
            if inp.condition_S:
                monopoly = Monopoly.ALMOST_SURE
                rules.append(4)
        elif inp.rho_class is RhoKind.TENDS_TO_INFINITY:
            regime = Regime.SUBCRITICAL_FAST_RHO
            lam_known = (inp.lam_confidence is not Confidence.INCONCLUSIVE
                         and not math.isnan(inp.lam))
            if inp.condition_S and lam_known and inp.lam != 1:
                monopoly = Monopoly.ALMOST_SURE if inp.lam < 1 else Monopoly.NEVER
                rules.append(5)
    elif theta_known and 0 < theta < math.inf:
        regime = Regime.CRITICAL
        if inp.series_tau is SeriesVerdict.DIVERGES:
            monopoly = Monopoly.NEVER
            rules.append(6)
        elif inp.series_tau is SeriesVerdict.CONVERGES:
            monopoly = Monopoly.STRICTLY_BETWEEN
            rules.append(6)

    if inp.series_sigma is SeriesVerdict.DIVERGES:
        if monopoly in (Monopoly.ALMOST_SURE, Monopoly.STRICTLY_BETWEEN):
            raise ClassifierInternalError(
                f"rule {rules[-1]} gives monopoly {monopoly.value} but "
                "sum sigma_{n+1}/tau_n^alpha diverges")
        monopoly = Monopoly.NEVER
        rules.append(7)

    if monopoly is Monopoly.ALMOST_SURE:
        dominance = Dominance.ALMOST_SURE  # M is contained in D
    return RegimeVerdict(regime, dominance, monopoly, Provenance(tuple(rules), info),
                         inp.confidence)


def numeric_inputs(seq: GrowthSequence, alpha: float, n_max: int = 40) -> ClassifierInputs:
    """Inputs from finite data only.

    Convergence cannot be decided from finitely many terms, so both series
    verdicts stay Unknown, as do the rho class and conditions (S), (R).
    """
    if seq.family is Family.CUSTOM:
        n_max = min(n_max, seq.max_n)
    theta = estimate_theta(seq, alpha, n_max, use_analytic=False)
    lam = estimate_lambda(seq, alpha, n_max, use_analytic=False)
    return ClassifierInputs(
        alpha=alpha,
        theta=theta.value,
        lam=lam.value,
        rho_class=None,
        series_sigma=SeriesVerdict.UNKNOWN,
        series_tau=SeriesVerdict.UNKNOWN,
        condition_S=None,
        condition_R=None,
        theta_confidence=theta.confidence,
        lam_confidence=lam.confidence,
        other_confidence=Confidence.INCONCLUSIVE,
    )


def classify_sequence(seq: GrowthSequence, alpha: float, *, strict: bool = False,
                      n_max: int = 40) -> RegimeVerdict:
    """Classify using the sequence's analytic metadata, falling back to numerics."""
    if alpha == 1:
        asym = seq.analytic(alpha)
        inp = (ClassifierInputs.from_analytic(asym) if asym is not None else
               ClassifierInputs(1.0, math.nan, math.nan, None, SeriesVerdict.UNKNOWN,
                                SeriesVerdict.UNKNOWN, None, None))
        return classify(alpha, inp, strict=False)
    asym = seq.analytic(alpha)
    if asym is not None:
        return classify(alpha, asym, strict=strict)
    if strict:
        raise ValueError("strict mode requires analytic asymptotics for this sequence")
    return classify(alpha, numeric_inputs(seq, alpha, n_max))
