"""Propensity vectors, epsilon-matching, and the matched treatment effect.

For a treatment event T with outcome O and covariates X_1..X_N, the
estimate is

    delta = f(T, O) - mean over matched interventions A of f(A, O)

where the matched set keeps interventions whose temporal propensity
vector lies within scaled L2 distance epsilon of the treatment's:

    dist(A) = ||q(A) - q(T)||_2 / N          (note: 1/N, not 1/sqrt(N))
    q(subject)[l] = f(X_l, subject) / f(X_l, T)

The denominator always conditions on the treatment event, which stands
in for the covariate's marginal probability (the covariates were sampled
as predecessors of T, so that conditioning is implicit). Optional
normalizations: D replaces q with raw f(subject, X_l) scores; Q
normalizes numerator and denominator scores over the covariate set
first; C and E renormalize the outcome-facing scores at the estimand
level. Scores themselves come from the temporal predictor, whose S
variant is enabled when "S" is requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .backend import Backend
from .covariates import (
    MODE_INTERSECTION,
    CovariateSet,
    SamplerConfig,
    merge_union,
    sample_before,
    sample_intersection,
)
from .errors import (
    InvalidArgument,
    LengthMismatch,
    PipelineStageError,
)
from .events import Event, EventPair, EventSequence
from .interventions import InterventionConfig, InterventionSet, generate_interventions
from .temporal import TemporalPredictor

NORM_DIRECT = "D"
NORM_SIMPLIFY = "S"
NORM_PROPENSITY = "Q"
NORM_COOCCURRENCE = "C"
NORM_ESTIMAND = "E"
NORMALIZATIONS = (NORM_DIRECT, NORM_SIMPLIFY, NORM_PROPENSITY, NORM_COOCCURRENCE, NORM_ESTIMAND)

EMPTY_MATCHED_TREATMENT_ONLY = "treatment_only"


@dataclass(frozen=True)
class PropensityVector:
    """Per-covariate conditional scores, aligned to the covariate order."""

    values: tuple[float, ...]
    subject: Event


@dataclass(frozen=True)
class MatchConfig:
    epsilon: float = 0.006
    normalizations: frozenset[str] = frozenset()
    keep_all: bool = False
    empty_matched_policy: str = EMPTY_MATCHED_TREATMENT_ONLY

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise InvalidArgument(f"epsilon must be >= 0, got {self.epsilon}")
        unknown = set(self.normalizations) - set(NORMALIZATIONS)
        if unknown:
            raise InvalidArgument(f"unknown normalizations {sorted(unknown)}")
        if NORM_DIRECT in self.normalizations and NORM_PROPENSITY in self.normalizations:
            raise InvalidArgument(
                "D replaces the propensity construction Q would normalize; "
                "they are mutually exclusive"
            )
        if self.empty_matched_policy != EMPTY_MATCHED_TREATMENT_ONLY:
            raise InvalidArgument(
                f"unknown empty-matched policy {self.empty_matched_policy!r}"
            )
        object.__setattr__(self, "normalizations", frozenset(self.normalizations))


@dataclass(frozen=True)
class MatchedIntervention:
    intervention: Event
    outcome_score: float
    distance: float


@dataclass(frozen=True)
class CausalEstimate:
    delta: float
    treatment_score: float
    matched: tuple[MatchedIntervention, ...]
    rejected: int
    config: MatchConfig
    zero_denominators: int = 0

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "treatment_score": self.treatment_score,
            "matched": [
                {
                    "intervention": m.intervention.text,
                    "outcome_score": m.outcome_score,
                    "distance": m.distance,
                }
                for m in self.matched
            ],
            "rejected": self.rejected,
            "zero_denominators": self.zero_denominators,
            "config": {
                "epsilon": self.config.epsilon,
                "normalizations": sorted(self.config.normalizations),
                "keep_all": self.config.keep_all,
                "empty_matched_policy": self.config.empty_matched_policy,
            },
        }


@dataclass
class EstimateDiagnostics:
    zero_denominators: int = 0


def propensity(
    predictor: TemporalPredictor,
    subject: Event,
    covariates: CovariateSet,
    anchor: Event,
    *,
    normalizations: frozenset[str] = frozenset(),
    diagnostics: EstimateDiagnostics | None = None,
) -> PropensityVector:
    """Temporal propensity vector of ``subject`` over the covariate set.

    ``anchor`` is the treatment event; its scores approximate the
    covariate marginals in the denominator even when the subject is an
    intervention. Zero denominators zero the component (a degenerate
    covariate must not poison the whole match) and are counted.
    """
    if NORM_DIRECT in normalizations:
        values = tuple(predictor.score(subject, x) for x in covariates.covariates)
        return PropensityVector(values, subject)

    numerators = [predictor.score(x, subject) for x in covariates.covariates]
    denominators = [predictor.score(x, anchor) for x in covariates.covariates]

    if NORM_PROPENSITY in normalizations:
        num_total = sum(numerators)
        den_total = sum(denominators)
        numerators = [v / num_total if num_total else 0.0 for v in numerators]
        denominators = [v / den_total if den_total else 0.0 for v in denominators]

    values = []
    for num, den in zip(numerators, denominators):
        if den == 0.0:
            if diagnostics is not None:
                diagnostics.zero_denominators += 1
            values.append(0.0)
        else:
            values.append(num / den)
    return PropensityVector(tuple(values), subject)


def propensity_distance(a: PropensityVector, b: PropensityVector) -> float:
    """Scaled L2 distance ||a - b||_2 / N between propensity vectors."""
    if len(a.values) != len(b.values):
        raise LengthMismatch(len(b.values), len(a.values))
    if not a.values:
        raise InvalidArgument("propensity vectors must be non-empty")
    total = 0.0
    for x, y in zip(a.values, b.values):
        diff = x - y
        total += diff * diff
    return math.sqrt(total) / len(a.values)


def matched_set(
    treatment_q: PropensityVector,
    candidates: Sequence[tuple[Event, PropensityVector]],
    epsilon: float,
) -> list[tuple[Event, float]]:
    """Candidates within epsilon of the treatment vector, in input order,
    with their distances attached."""
    matched = []
    for intervention, q in candidates:
        distance = propensity_distance(q, treatment_q)
        if distance <= epsilon:
            matched.append((intervention, distance))
    return matched


def outcome_score(
    predictor: TemporalPredictor,
    subject: Event,
    outcome: Event,
    normalizations: frozenset[str],
) -> float:
    """f(subject, outcome) with the estimand-level C/E normalizations."""
    forward = predictor.score(subject, outcome)
    if NORM_COOCCURRENCE not in normalizations and NORM_ESTIMAND not in normalizations:
        return forward
    reverse = predictor.score(outcome, subject)
    if NORM_COOCCURRENCE in normalizations:
        forward, reverse = 0.5 * (forward + reverse), 0.5 * (forward + reverse)
    if NORM_ESTIMAND in normalizations:
        total = forward + reverse
        if total == 0.0:
            predictor.zero_denominators += 1
            return 0.5
        return forward / total
    return forward


def ate(
    predictor: TemporalPredictor,
    treatment: Event,
    outcome: Event,
    matched: Sequence[tuple[Event, float]],
    config: MatchConfig,
    *,
    rejected: int = 0,
    diagnostics: EstimateDiagnostics | None = None,
) -> CausalEstimate:
    """delta = treatment score minus the mean matched intervention score.

    An empty matched set falls back to the treatment score alone
    (temporal precedence as causation).
    """
    norms = config.normalizations
    treatment_score = outcome_score(predictor, treatment, outcome, norms)
    scored = tuple(
        MatchedIntervention(a, outcome_score(predictor, a, outcome, norms), dist)
        for a, dist in matched
    )
    if scored:
        delta = treatment_score - sum(m.outcome_score for m in scored) / len(scored)
    else:
        delta = treatment_score
    return CausalEstimate(
        delta=delta,
        treatment_score=treatment_score,
        matched=scored,
        rejected=rejected,
        config=config,
        zero_denominators=diagnostics.zero_denominators if diagnostics else 0,
    )


# --- full pipeline ---------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    sampler: SamplerConfig = SamplerConfig()
    interventions: InterventionConfig = InterventionConfig()
    match: MatchConfig = MatchConfig()
    use_interventions: bool = True
    generate_model: str = "generator"
    infill_model: str = "infill"
    mask_model: str = "mlm"


@dataclass(frozen=True)
class PairResult:
    """One pair's estimate plus the artifacts that produced it."""

    pair: EventPair
    estimate: CausalEstimate
    covariates: tuple[str, ...]
    interventions: tuple[str, ...]

    def to_dict(self) -> dict:
        doc = {
            "sequence_id": self.pair.sequence_id,
            "cause_index": self.pair.cause_index,
            "effect_index": self.pair.effect_index,
            "gold": self.pair.gold,
            "covariates": list(self.covariates),
            "interventions": list(self.interventions),
        }
        doc.update(self.estimate.to_dict())
        return doc


class Pipeline:
    """Binds a backend and configuration into a per-pair estimator."""

    def __init__(self, backend: Backend, config: PipelineConfig):
        self.backend = backend
        self.config = config
        self.predictor = TemporalPredictor(
            backend,
            config.mask_model,
            simplify=NORM_SIMPLIFY in config.match.normalizations,
        )

    def covariates_for(self, sequence: EventSequence, cause_index: int) -> CovariateSet:
        cfg = self.config.sampler
        if cfg.mode == MODE_INTERSECTION:
            return sample_intersection(
                self.backend,
                sequence.events[cause_index - 1 :],
                cfg.n,
                cfg.seed,
                model=self.config.generate_model,
                max_new_tokens=cfg.max_new_tokens,
                temperature=cfg.temperature,
            )
        timestamps = range(1, cause_index + 1) if cfg.multistamp else [cause_index]
        sets = [
            sample_before(
                self.backend,
                sequence.events[t - 1],
                cfg.per_timestamp_samples,
                cfg.seed,
                model=self.config.generate_model,
                max_new_tokens=cfg.max_new_tokens,
                temperature=cfg.temperature,
            )
            for t in timestamps
        ]
        return merge_union(sets, cfg.n)

    def interventions_for(self, treatment: Event) -> InterventionSet:
        return generate_interventions(
            self.backend,
            treatment,
            self.config.interventions,
            model=self.config.infill_model,
        )

    def estimate_pair(self, sequence: EventSequence, pair: EventPair) -> PairResult:
        """Run sampler -> interventions -> matching -> effect for one pair."""
        treatment = sequence.candidate(pair.cause_index)
        outcome = sequence.final_event
        match_cfg = self.config.match
        diagnostics = EstimateDiagnostics()

        if not self.config.use_interventions:
            estimate = ate(
                self.predictor, treatment, outcome, [], match_cfg,
                diagnostics=diagnostics,
            )
            return PairResult(pair, estimate, (), ())

        covariates = self._stage(
            "covariate-sampler", lambda: self.covariates_for(sequence, pair.cause_index)
        )
        interventions = self._stage(
            "intervention-generator", lambda: self.interventions_for(treatment)
        )

        def build_vectors():
            treatment_q = propensity(
                self.predictor,
                treatment,
                covariates,
                treatment,
                normalizations=match_cfg.normalizations,
                diagnostics=diagnostics,
            )
            candidates = [
                (
                    a,
                    propensity(
                        self.predictor,
                        a,
                        covariates,
                        treatment,
                        normalizations=match_cfg.normalizations,
                        diagnostics=diagnostics,
                    ),
                )
                for a in interventions.interventions
            ]
            return treatment_q, candidates

        treatment_q, candidates = self._stage("propensity", build_vectors)
        if match_cfg.keep_all:
            matched = [
                (a, propensity_distance(q, treatment_q)) for a, q in candidates
            ]
        else:
            matched = self._stage(
                "matching",
                lambda: matched_set(treatment_q, candidates, match_cfg.epsilon),
            )
        estimate = self._stage(
            "effect",
            lambda: ate(
                self.predictor,
                treatment,
                outcome,
                matched,
                match_cfg,
                rejected=len(candidates) - len(matched),
                diagnostics=diagnostics,
            ),
        )
        return PairResult(
            pair,
            estimate,
            tuple(covariates.texts()),
            tuple(interventions.texts()),
        )

    @staticmethod
    def _stage(name: str, thunk):
        try:
            return thunk()
        except PipelineStageError:
            raise
        except Exception as exc:
            raise PipelineStageError(name, exc) from exc
