"""Degree-constraint distributions and the scalar functionals derived from them.

A degree-constraint law puts mass p_k on the constraint values k = 2..delta.
This module validates raw weight vectors, computes tail sums, converts to and
from the hub representation p_k = 1{k=2} + eps * r_k, and evaluates the
closed-form critical-time predictions (first-order asymptotics in both time
parametrizations and the configuration-model percolation threshold).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRegular, DeltaTooSmall, NegativeWeight, SumNotOne

#: Hard cap on the maximum degree; keeps every lambda^k / k! accumulation
#: representable in double precision.
MAX_DELTA = 64

#: Absolute tolerance on sum(probs) == 1.
SUM_TOL = 1e-12

#: p_2 >= 1 - REGULAR_TOL is treated as the pure 2-regular law chi_2.
REGULAR_TOL = 1e-15


@dataclass(frozen=True)
class DegreeDistribution:
    """Validated law of the degree constraints on {2, .., delta}.

    Immutable after construction; safe to share across threads.
    """

    delta: int
    probs: tuple  # p_2 .. p_delta

    def p(self, k: int) -> float:
        """Mass at constraint k; zero outside {2, .., delta}."""
        if k < 2 or k > self.delta:
            return 0.0
        return self.probs[k - 2]

    @property
    def support(self) -> np.ndarray:
        return np.arange(2, self.delta + 1)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    @property
    def is_two_regular(self) -> bool:
        return self.probs[0] >= 1.0 - REGULAR_TOL

    def moment(self, power: int) -> float:
        k = self.support.astype(float)
        return float(np.sum(k**power * self.as_array()))

    @property
    def mean(self) -> float:
        return self.moment(1)

    def expect(self, f) -> float:
        """E[f(D)] for a vectorized callable f."""
        k = self.support.astype(float)
        return float(np.sum(f(k) * self.as_array()))

    def to_json(self) -> str:
        return json.dumps({"delta": self.delta, "probs": list(self.probs)})


@dataclass(frozen=True)
class TailVector:
    """Tail sums q_k = sum_{d >= k} p_d for k = 1..delta (q_1 = q_2 = 1)."""

    delta: int
    q: tuple  # q_1 .. q_delta

    def q_at(self, k: int) -> float:
        """q_k with the off-support conventions q_k = 0 for k > delta."""
        if k < 1:
            raise ValueError(f"tail index must be >= 1, got {k}")
        if k > self.delta:
            return 0.0
        return self.q[k - 1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.q, dtype=float)


@dataclass(frozen=True)
class EpsilonDirection:
    """Hub representation of a non-regular law: p_k = 1{k=2} + eps * r_k.

    r_2 = -1 and (r_3, .., r_delta) is a probability vector over hub
    constraints; s_k = sum_{d >= k} r_d are its tails (s_2 = 0, s_3 = 1).
    """

    delta: int
    epsilon: float
    r: tuple  # r_2 .. r_delta
    s: tuple  # s_2 .. s_delta

    def r_at(self, k: int) -> float:
        if k < 2 or k > self.delta:
            return 0.0
        return self.r[k - 2]

    def s_at(self, k: int) -> float:
        if k <= 1 or k > self.delta:
            return 0.0
        return self.s[k - 2]

    def with_epsilon(self, epsilon: float) -> "EpsilonDirection":
        """Same hub direction at a different perturbation size."""
        if not 0.0 < epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
        return EpsilonDirection(self.delta, float(epsilon), self.r, self.s)


def validate(probs, delta: int) -> DegreeDistribution:
    """Check a raw weight vector and wrap it; never renormalizes.

    Raises DeltaTooSmall, NegativeWeight or SumNotOne on bad input.
    """
    if delta < 2:
        raise DeltaTooSmall(f"delta must be >= 2, got {delta}")
    if delta > MAX_DELTA:
        raise ValueError(f"delta exceeds the configured cap {MAX_DELTA}")
    probs = [float(x) for x in probs]
    if len(probs) != delta - 1:
        raise ValueError(
            f"expected {delta - 1} weights for delta={delta}, got {len(probs)}"
        )
    for k, pk in enumerate(probs, start=2):
        if pk < 0.0:
            raise NegativeWeight(f"p_{k} = {pk} is negative")
    total = float(np.sum(probs))
    if abs(total - 1.0) > SUM_TOL:
        raise SumNotOne(f"weights sum to {total!r}, off by {total - 1.0:.3e}")
    return DegreeDistribution(delta=int(delta), probs=tuple(probs))


def two_regular(delta: int = 2) -> DegreeDistribution:
    """The pure 2-regular law chi_2 (all constraints equal 2)."""
    return validate([1.0] + [0.0] * (delta - 2), delta)


def pure_degree(k: int) -> DegreeDistribution:
    """The law chi_k putting all mass on constraint k."""
    return validate([0.0] * (k - 2) + [1.0], k)


def tails(dist: DegreeDistribution) -> TailVector:
    """Tail vector q_k = sum_{d >= k} p_d, with q_1 = q_2 by construction."""
    p = dist.as_array()
    q = np.cumsum(p[::-1])[::-1]  # q_2 .. q_delta
    return TailVector(delta=dist.delta, q=(float(q[0]),) + tuple(float(x) for x in q))


def to_epsilon_direction(dist: DegreeDistribution) -> EpsilonDirection:
    """Split off the hub part: eps = 1 - p_2, r_k = p_k / eps (r_2 = -1).

    Raises DegenerateRegular for chi_2, where no hub direction exists.
    """
    if dist.is_two_regular:
        raise DegenerateRegular("p_2 = 1: the hub representation is undefined")
    eps = 1.0 - dist.probs[0]
    r = [-1.0] + [pk / eps for pk in dist.probs[1:]]
    s = np.cumsum(np.asarray(r)[::-1])[::-1]
    return EpsilonDirection(
        delta=dist.delta,
        epsilon=eps,
        r=tuple(r),
        s=tuple(float(x) for x in s),
    )


def from_epsilon_direction(direction: EpsilonDirection) -> DegreeDistribution:
    """Rebuild the full law p_k = 1{k=2} + eps * r_k."""
    eps = direction.epsilon
    probs = [1.0 + eps * direction.r[0]]
    probs += [eps * rk for rk in direction.r[1:]]
    return validate(probs, direction.delta)


def make_direction(hubs, delta: int | None = None, epsilon: float = 1.0) -> EpsilonDirection:
    """Build a hub direction from {constraint: weight} over constraints >= 3.

    The hub weights must form a probability vector; epsilon fixes the scale
    at which from_epsilon_direction materializes the full law.
    """
    hubs = {int(k): float(v) for k, v in dict(hubs).items()}
    if not hubs:
        raise ValueError("at least one hub constraint (k >= 3) is required")
    if min(hubs) < 3:
        raise ValueError("hub constraints must be >= 3")
    if delta is None:
        delta = max(hubs)
    if delta < max(hubs):
        raise ValueError(f"delta={delta} below largest hub constraint {max(hubs)}")
    if delta > MAX_DELTA:
        raise ValueError(f"delta exceeds the configured cap {MAX_DELTA}")
    r = [-1.0] + [hubs.get(k, 0.0) for k in range(3, delta + 1)]
    if any(x < 0.0 for x in r[1:]):
        raise NegativeWeight("hub weights must be non-negative")
    total = sum(r[1:])
    if abs(total - 1.0) > SUM_TOL:
        raise SumNotOne(f"hub weights sum to {total!r}")
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    s = np.cumsum(np.asarray(r)[::-1])[::-1]
    return EpsilonDirection(
        delta=int(delta),
        epsilon=float(epsilon),
        r=tuple(r),
        s=tuple(float(x) for x in s),
    )


def molloy_reed_constant(direction: EpsilonDirection) -> float:
    """Sum of k(k-2) r_k over hubs; always >= 3, the leading-order rate
    at which hubs advance the critical time."""
    k = np.arange(3, direction.delta + 1, dtype=float)
    r = np.asarray(direction.r[1:], dtype=float)
    return float(np.sum(k * (k - 2.0) * r))


def asymptotic_tc_hat(dist: DegreeDistribution) -> float:
    """First-order prediction 1 / sum_k k(k-2) p_k of the continuous-time
    critical time; diverges for chi_2."""
    if dist.is_two_regular:
        raise DegenerateRegular("continuous-time critical time diverges for chi_2")
    denom = dist.expect(lambda k: k * (k - 2.0))
    return 1.0 / denom


def asymptotic_tc_disc(dist: DegreeDistribution) -> float:
    """First-order prediction 1 - (1/2) sum_k (k^2 - 3k + 2) p_k of the
    discrete-time critical time (equals 1 at chi_2)."""
    return 1.0 - 0.5 * dist.expect(lambda k: (k - 1.0) * (k - 2.0))


def heuristic_percolation_threshold(dist: DegreeDistribution) -> float:
    """Configuration-model threshold (E D)^2 / (2 E[D(D-1)]).

    This is the critical edge density of the percolated configuration model
    with the same constraint law, not of the degree-constrained process; the
    two differ away from the 2-regular corner (e.g. 0.75 vs ~0.577 at chi_3).
    """
    ed = dist.mean
    edd1 = dist.expect(lambda k: k * (k - 1.0))
    if edd1 <= 0.0:
        raise ValueError("E[D(D-1)] must be positive")
    return ed * ed / (2.0 * edd1)


def from_json(text) -> DegreeDistribution:
    """Parse `{"delta": 3, "probs": [0.99, 0.01]}` (dict or JSON string)."""
    obj = json.loads(text) if isinstance(text, (str, bytes)) else dict(text)
    return validate(obj["probs"], int(obj["delta"]))


def from_shorthand(text: str) -> DegreeDistribution:
    """Parse CLI shorthand like `2:0.99,3:0.01`; omitted constraints get 0."""
    entries = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            k_str, w_str = part.split(":")
            k, w = int(k_str), float(w_str)
        except ValueError as exc:
            raise ValueError(f"malformed distribution entry {part!r}") from exc
        if k in entries:
            raise ValueError(f"duplicate constraint {k} in {text!r}")
        entries[k] = w
    if not entries:
        raise ValueError("empty distribution shorthand")
    if min(entries) < 2:
        raise DeltaTooSmall(f"constraints must be >= 2 in {text!r}")
    delta = max(entries)
    probs = [entries.get(k, 0.0) for k in range(2, delta + 1)]
    return validate(probs, delta)


def direction_from_shorthand(text: str, epsilon: float = 1.0) -> EpsilonDirection:
    """Parse hub-direction shorthand like `3:1.0` or `3:0.5,5:0.5`."""
    entries = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            k_str, w_str = part.split(":")
            entries[int(k_str)] = float(w_str)
        except ValueError as exc:
            raise ValueError(f"malformed direction entry {part!r}") from exc
    return make_direction(entries, epsilon=epsilon)
