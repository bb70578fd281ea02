"""Bayesian attribution over candidate actors and callbacks-to-detect.

Two confidence quantities are tracked per trace:

* the cross-actor posterior P(H|E) of the true actor among N candidates,
  updated with likelihood ratio ``1 + gamma * cas`` for the true actor and an
  evidence-hashed ratio in ``[decoy_low, decoy_high]`` for every decoy;
* an operational confidence ``1 - prod(1 - min(1, rho * cas_i))`` whose first
  crossing of the threshold defines callbacks-to-detect (CTD).

The likelihood model is a modelling choice, not a derived result.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .adversary import AdversaryConfig, AttackerProfile, CallbackEvent, beacon_stream
from .errors import InsufficientDataError, UndefinedStatisticError
from .scoring import CasBreakdown
from .taxonomy import BeaconInstance

NOT_REACHED = "not reached"


@dataclass(frozen=True)
class AttributionParams:
    gamma: float = 0.9
    decoy_low: float = 0.9
    decoy_high: float = 1.1
    rho: float = 0.55
    n_candidates: int = 10
    threshold: float = 0.85
    trace_length: int = 5
    ctd_budget: int = 40

    def __post_init__(self) -> None:
        if self.n_candidates < 2:
            raise ValueError("need at least two candidate actors")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if not 0.0 < self.decoy_low <= self.decoy_high:
            raise ValueError("decoy band must be positive and ordered")


@dataclass(frozen=True)
class PosteriorState:
    candidates: tuple[str, ...]
    probabilities: tuple[float, ...]
    true_actor: str
    callbacks_consumed: int = 0

    def __post_init__(self) -> None:
        if len(self.candidates) != len(self.probabilities):
            raise ValueError("candidates and probabilities differ in length")
        if self.true_actor not in self.candidates:
            raise ValueError("true actor must be one of the candidates")
        if any(p < 0 for p in self.probabilities) or abs(math.fsum(self.probabilities) - 1.0) > 1e-9:
            raise ValueError("probabilities must form a simplex point")

    @property
    def true_posterior(self) -> float:
        return self.probabilities[self.candidates.index(self.true_actor)]

    def map_estimate(self) -> str:
        """Arg-max candidate, ties broken by lowest identifier."""
        best = max(self.probabilities)
        return min(c for c, p in zip(self.candidates, self.probabilities) if p == best)


def uniform_prior(n: int = 10, true_index: int = 0) -> PosteriorState:
    candidates = tuple(f"actor-{i:02d}" for i in range(n))
    return PosteriorState(candidates, tuple([1.0 / n] * n), candidates[true_index])


def decoy_ratio(evidence_key: str, candidate: str, low: float, high: float) -> float:
    digest = hashlib.sha256(f"{evidence_key}#{candidate}".encode()).digest()
    u = int.from_bytes(digest[:8], "big") / 2.0**64
    return low + (high - low) * u


def apply_likelihoods(state: PosteriorState, ratios: Sequence[float]) -> PosteriorState:
    weighted = [p * lr for p, lr in zip(state.probabilities, ratios)]
    total = math.fsum(weighted)
    probs = [w / total for w in weighted]
    # absorb the last ulp of rounding so the simplex check is exact-ish
    drift = 1.0 - math.fsum(probs)
    i = max(range(len(probs)), key=probs.__getitem__)
    probs[i] += drift
    return PosteriorState(state.candidates, tuple(probs), state.true_actor, state.callbacks_consumed + 1)


def update_posterior(
    state: PosteriorState,
    callback: CallbackEvent,
    cas: CasBreakdown,
    params: AttributionParams = AttributionParams(),
) -> PosteriorState:
    key = callback.evidence_key()
    ratios = [
        1.0 + params.gamma * cas.cas
        if c == state.true_actor
        else decoy_ratio(key, c, params.decoy_low, params.decoy_high)
        for c in state.candidates
    ]
    return apply_likelihoods(state, ratios)


def confidence_series(cas_values: Sequence[float], rho: float) -> list[float]:
    out = []
    miss = 1.0
    for c in cas_values:
        miss *= 1.0 - min(1.0, max(0.0, rho * c))
        out.append(1.0 - miss)
    return out


def first_crossing(confidence: Sequence[float], threshold: float) -> int | str:
    for i, conf in enumerate(confidence, start=1):
        if conf >= threshold:
            return i
    return NOT_REACHED


@dataclass
class AttributionTrace:
    posterior_series: list[float] = field(default_factory=list)
    cas_series: list[CasBreakdown] = field(default_factory=list)
    confidence_series: list[float] = field(default_factory=list)
    ctd: int | str = NOT_REACHED

    @property
    def final_posterior(self) -> float:
        return self.posterior_series[-1] if self.posterior_series else 0.0

    @property
    def mean_cas(self) -> float:
        return math.fsum(b.cas for b in self.cas_series) / len(self.cas_series)


Scorer = Callable[[CallbackEvent], CasBreakdown]


def trace_from_events(
    events: Sequence[CallbackEvent], scorer: Scorer, params: AttributionParams
) -> AttributionTrace:
    state = uniform_prior(params.n_candidates)
    trace = AttributionTrace()
    for event in events:
        b = scorer(event)
        state = update_posterior(state, event, b, params)
        trace.cas_series.append(b)
        trace.posterior_series.append(state.true_posterior)
    trace.confidence_series = confidence_series([b.cas for b in trace.cas_series], params.rho)
    trace.ctd = first_crossing(trace.confidence_series, params.threshold)
    return trace


def build_trace(
    beacon: BeaconInstance,
    profile: AttackerProfile,
    seed: int,
    adversary: AdversaryConfig,
    scorer: Scorer,
    params: AttributionParams,
    length: int,
) -> AttributionTrace:
    """Trace over the first ``length`` callbacks of an open-horizon stream."""
    events = list(beacon_stream(beacon, profile, adversary, seed, max_callbacks=length))
    return trace_from_events(events, scorer, params)


def measure_ctd(
    beacon: BeaconInstance,
    profile: AttackerProfile,
    seed: int,
    adversary: AdversaryConfig,
    scorer: Scorer,
    params: AttributionParams,
    threshold: float | None = None,
) -> int | str:
    if threshold is not None and not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    threshold = params.threshold if threshold is None else threshold
    miss = 1.0
    for i, event in enumerate(
        beacon_stream(beacon, profile, adversary, seed, max_callbacks=params.ctd_budget), start=1
    ):
        miss *= 1.0 - min(1.0, max(0.0, params.rho * scorer(event).cas))
        if 1.0 - miss >= threshold:
            return i
    return NOT_REACHED


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) != len(ys):
        raise ValueError("series differ in length")
    if len(xs) < 3:
        raise InsufficientDataError("need at least 3 (CAS, posterior) pairs")
    n = len(xs)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    syy = math.fsum((y - my) ** 2 for y in ys)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedStatisticError("correlation undefined for a constant series")
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return max(-1.0, min(1.0, sxy / math.sqrt(sxx * syy)))


def cas_posterior_correlation(pairs: Sequence[tuple[float, float]]) -> float:
    """Pearson r between mean CAS and final posterior across combinations."""
    return pearson([p[0] for p in pairs], [p[1] for p in pairs])
