"""Certified search for the most probable joint-genotype configurations.

Candidates are generated in nonincreasing product-of-per-marker-marginals
order (a lazy best-first Cartesian-product enumeration), then each candidate
is rescored exactly in the full model. Ranks are certified by comparing the
best stored scores against the unexplored remainder mass: once a stored
score exceeds everything that could still be out there, its rank is proven.
The product ordering is only a generation heuristic; returned posteriors
are always exact.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import InputError
from .inference import (
    _require_evidence,
    genotype_pair_posterior,
    score_pair_indices,
)
from .network import NEG_INF, CompiledNetwork, JointGenotype

# Certification slack relative to P(E), guarding against floating-point
# false certificates.
CERT_EPSILON = 1e-12


@dataclass(frozen=True)
class MapQuery:
    """Search request: how many ranks to certify, and the candidate budget
    used by the batch variant."""

    k: int = 1
    batch_n: int = 5000

    def __post_init__(self):
        if self.k < 1:
            raise InputError("map search needs k >= 1")
        if self.batch_n < self.k:
            raise InputError("candidate budget must be at least k")


@dataclass
class MapSearchState:
    """Loop bookkeeping, in units of P(E): remainder mass, best score seen
    and its candidate index, and all stored scores in candidate order."""

    remainder: float = 1.0
    best_score: float = 0.0
    best_index: int = -1
    scores: list = field(default_factory=list)
    # Kahan compensation for the running sum of processed scores.
    _processed_sum: float = 0.0
    _compensation: float = 0.0

    def record(self, score: float) -> None:
        index = len(self.scores)
        self.scores.append(score)
        y = score - self._compensation
        t = self._processed_sum + y
        self._compensation = (t - self._processed_sum) - y
        self._processed_sum = t
        self.remainder = 1.0 - self._processed_sum
        if score > self.best_score:
            self.best_score = score
            self.best_index = index

    def certified_count(self, limit: int) -> int:
        """Largest r <= limit such that the r-th best stored score exceeds
        the unexplored remainder (plus slack)."""
        if not self.scores:
            return 0
        top = heapq.nlargest(limit, self.scores)
        certified = 0
        for score in top:
            if score > self.remainder + CERT_EPSILON:
                certified += 1
            else:
                break
        return certified


@dataclass(frozen=True)
class RankedConfiguration:
    """One certified-or-best-effort configuration: a genotype pair per
    marker with its exact posterior probability."""

    assignment: tuple  # JointGenotype per marker, in network order
    posterior: float

    def pair(self, marker: str):
        for joint in self.assignment:
            if joint.marker == marker:
                return (joint.gt1, joint.gt2)
        raise InputError(f"unknown marker {marker!r}")


@dataclass(frozen=True)
class MapResult:
    """Ranked configurations with exact posteriors and the termination
    certificate."""

    configurations: tuple
    certified_count: int
    candidates_examined: int
    exhausted: bool
    budget_exhausted: bool
    log_evidence: float
    final_state: MapSearchState

    @property
    def residual_mass(self) -> float:
        return 1.0 - math.fsum(c.posterior for c in self.configurations)


def kbest_product(
    marginals: Sequence[Sequence[float]], n: Optional[int] = None
) -> Iterator[tuple]:
    """Yield index tuples over the product of the given marginal
    distributions, in nonincreasing product probability, ties broken
    lexicographically by state indices. At most ``n`` items when given,
    otherwise the stream runs until the whole space is exhausted.
    """
    if n is not None and n < 1:
        raise InputError("kbest_product needs n >= 1")
    dists = [np.asarray(m, dtype=float) for m in marginals]
    if not dists or any(d.size == 0 for d in dists):
        return
    # Per variable: state indices sorted by (probability desc, index asc).
    orders = [np.lexsort((np.arange(d.size), -d)) for d in dists]
    sorted_probs = [d[order] for d, order in zip(dists, orders)]

    def original(ranks: tuple) -> tuple:
        return tuple(int(order[r]) for order, r in zip(orders, ranks))

    def product(ranks: tuple) -> float:
        p = 1.0
        for probs, r in zip(sorted_probs, ranks):
            p *= float(probs[r])
        return p

    start = (0,) * len(dists)
    heap = [(-product(start), original(start), start)]
    visited = {start}
    emitted = 0
    while heap:
        neg_p, config, ranks = heapq.heappop(heap)
        yield config
        emitted += 1
        if n is not None and emitted >= n:
            return
        for i, probs in enumerate(sorted_probs):
            if ranks[i] + 1 >= probs.size:
                continue
            child = ranks[:i] + (ranks[i] + 1,) + ranks[i + 1 :]
            if child not in visited:
                visited.add(child)
                heapq.heappush(heap, (-product(child), original(child), child))


def _assignment(net: CompiledNetwork, indices: Sequence[int]) -> tuple:
    out = []
    for marker, index in zip(net.markers, indices):
        gt1, gt2 = marker.pair_state(int(index))
        out.append(JointGenotype(marker.marker, gt1, gt2))
    return tuple(out)


def _search(
    net: CompiledNetwork,
    query: MapQuery,
    budget: Optional[int],
    history: Optional[list] = None,
) -> MapResult:
    log_pe = _require_evidence(net)
    space = net.configuration_count()
    if query.k > space:
        raise InputError(
            f"requested k={query.k} exceeds the {space}-configuration state space"
        )

    marginals = [genotype_pair_posterior(net, m.marker) for m in net.markers]
    stream = kbest_product(marginals, n=None)
    state = MapSearchState()
    candidates: list = []

    exhausted = False
    while state.certified_count(query.k) < query.k:
        if budget is not None and len(candidates) >= budget:
            break
        indices = next(stream, None)
        if indices is None:
            exhausted = True
            break
        candidates.append(indices)
        log_score = score_pair_indices(net, indices)
        relative = 0.0 if log_score == NEG_INF else math.exp(log_score - log_pe)
        state.record(relative)
        if history is not None:
            history.append((state.best_score, state.remainder))

    order = sorted(range(len(candidates)), key=lambda i: (-state.scores[i], i))
    top = order[: query.k]
    configurations = tuple(
        RankedConfiguration(
            assignment=_assignment(net, candidates[i]), posterior=state.scores[i]
        )
        for i in top
    )
    certified = min(query.k, len(candidates)) if exhausted else state.certified_count(query.k)
    return MapResult(
        configurations=configurations,
        certified_count=certified,
        candidates_examined=len(candidates),
        exhausted=exhausted,
        budget_exhausted=certified < query.k and not exhausted,
        log_evidence=log_pe,
        final_state=state,
    )


def map_search_sequential(
    net: CompiledNetwork, query: MapQuery, history: Optional[list] = None
) -> MapResult:
    """Generate candidates one at a time and stop as soon as the requested
    ranks are certified (or the space is exhausted, which certifies
    everything)."""
    return _search(net, query, budget=None, history=history)


def map_search_batch(
    net: CompiledNetwork, query: MapQuery, history: Optional[list] = None
) -> MapResult:
    """Like the sequential variant but never examines more than the
    query's candidate budget; when the budget runs out first, the best
    configurations found are returned with budget_exhausted set."""
    return _search(net, query, budget=query.batch_n, history=history)
