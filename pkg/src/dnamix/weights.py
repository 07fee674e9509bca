"""Peak-weight model for two-person mixtures.

Peak areas are scaled by repeat number into peak weights, normalized per
marker into relative weights (which sum to one), and modelled as
independent Gaussians whose mean is the allele's expected pre-amplification
share {theta*n1 + (1-theta)*n2}/2 and whose variance is
sigma2*mean + omega2. The pooled allele always contributes a term with an
observed relative weight of zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import InputError
from .genetics import POOLED_ALLELE, Allele, Genotype, ModelParams, PeakRecord

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class RelativeWeightVector:
    """Normalized per-marker peak weights, keyed by allele; includes the
    pooled allele with weight zero."""

    marker: str
    weights: Mapping[Allele, float]

    def __post_init__(self):
        total = 0.0
        for allele, value in self.weights.items():
            if value < 0:
                raise InputError(f"{self.marker}: negative relative weight for {allele}")
            total += value
        if abs(total - 1.0) > 1e-9:
            raise InputError(f"{self.marker}: relative weights sum to {total!r}, not 1")
        if POOLED_ALLELE not in self.weights:
            raise InputError(f"{self.marker}: pooled allele missing from weight vector")

    @property
    def alleles(self) -> tuple:
        return tuple(self.weights)


@dataclass(frozen=True)
class LikelihoodTerm:
    """Gaussian mean/variance for one allele's observed relative weight."""

    mu: float
    tau2: float

    def log_density(self, observed: float) -> float:
        return -0.5 * (_LOG_2PI + math.log(self.tau2) + (observed - self.mu) ** 2 / self.tau2)


def peak_weight(allele: Allele, area: float) -> float:
    """Repeat-number-scaled peak area; symbolic alleles (X, Y) scale by one.

    The scaling corrects for longer alleles amplifying less efficiently.
    """
    if area < 0:
        raise InputError(f"negative area {area!r}")
    scale = allele.repeat_value if allele.repeat_value is not None else 1.0
    return scale * area


def relative_weights(peaks: Sequence[PeakRecord]) -> RelativeWeightVector:
    """Normalize one marker's peak weights to sum to one and append the
    pooled allele with weight zero."""
    if not peaks:
        raise InputError("relative_weights: no peaks given")
    marker = peaks[0].marker
    if any(p.marker != marker for p in peaks):
        raise InputError("relative_weights: peaks span multiple markers")
    raw = [(p.allele, peak_weight(p.allele, p.area)) for p in peaks]
    total = sum(w for _, w in raw)
    if total <= 0:
        raise InputError(f"degenerate marker {marker!r}: total peak weight is zero")
    weights = {allele: w / total for allele, w in raw}
    weights[POOLED_ALLELE] = 0.0
    return RelativeWeightVector(marker, weights)


def mean_weight(n1: int, n2: int, theta: float) -> float:
    """Expected relative weight of an allele carried n1 times by the first
    contributor and n2 times by the second, at mixture proportion theta."""
    return (theta * n1 + (1.0 - theta) * n2) / 2.0


def weight_variance(mu: float, params: ModelParams) -> float:
    """Observed-weight variance sigma2*mu + omega2 (linear form; the
    amplification term vanishes for absent alleles)."""
    return params.sigma2 * mu + params.omega2


def weight_variance_quadratic(mu: float, params: ModelParams) -> float:
    """Diagnostic-only variance sigma2*mu*(1-mu) + omega2. Kept for
    numerical comparison against the production linear form; degenerate at
    mu in {0, 1} when omega2 is removed, so never the default."""
    return params.sigma2 * mu * (1.0 - mu) + params.omega2


def likelihood_term(
    n1: int, n2: int, theta: float, params: ModelParams, quadratic_variance: bool = False
) -> LikelihoodTerm:
    mu = mean_weight(n1, n2, theta)
    variance = weight_variance_quadratic if quadratic_variance else weight_variance
    return LikelihoodTerm(mu, variance(mu, params))


def marker_log_likelihood(
    weights: RelativeWeightVector,
    gt1: Genotype,
    gt2: Genotype,
    theta: float,
    params: ModelParams,
    *,
    quadratic_variance: bool = False,
) -> float:
    """Log-density of one marker's relative weights (observed alleles plus
    the pooled allele) given both contributors' genotypes and the mixture
    proportion. Genotype alleles must come from the weight vector's support.
    """
    support = weights.weights
    for allele in (*gt1.alleles, *gt2.alleles):
        if allele not in support:
            raise InputError(
                f"{weights.marker}: genotype allele {allele.label!r} outside the "
                "observed-plus-pooled support"
            )
    total = 0.0
    for allele, observed in support.items():
        term = likelihood_term(
            gt1.count(allele), gt2.count(allele), theta, params, quadratic_variance
        )
        total += term.log_density(observed)
    return total
