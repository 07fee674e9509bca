"""Compilation of a case into a discrete probabilistic model.

The model has four shared variables — the two contributor-identity
selectors (is the first contributor the suspect? is the second the
victim?) and the discretized mixture proportion — plus one genotype-pair
variable per marker. Founder genes, genotype gating, allele-count and
in-mixture indicator nodes, and the continuous weight observations are all
folded into per-marker factors over (selector state, theta, genotype pair):
the eliminated nodes are deterministic given the pair, or independent
founders, so the posterior over the retained variables is unchanged.

Markers are conditionally independent given the selectors and theta, which
is what makes the exact inference in `inference` a pair of nested sums.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import InputError
from .genetics import (
    POOLED_ALLELE,
    Allele,
    CaseData,
    FrequencyTable,
    Genotype,
    Profile,
    is_amelogenin,
    pooled_frequency,
)
from .weights import relative_weights

NEG_INF = float("-inf")


class TargetState(enum.Enum):
    """The four contributor hypotheses, ordered as (p1-is-suspect,
    p2-is-victim) = (no,no), (no,yes), (yes,no), (yes,yes)."""

    TWO_UNKNOWNS = "u1+u2"
    VICTIM_AND_UNKNOWN = "v+u"
    SUSPECT_AND_UNKNOWN = "s+u"
    SUSPECT_AND_VICTIM = "s+v"


@dataclass(frozen=True)
class SelectorState:
    p1_is_s: bool
    p2_is_v: bool

    @property
    def target(self) -> TargetState:
        if self.p1_is_s:
            return TargetState.SUSPECT_AND_VICTIM if self.p2_is_v else TargetState.SUSPECT_AND_UNKNOWN
        return TargetState.VICTIM_AND_UNKNOWN if self.p2_is_v else TargetState.TWO_UNKNOWNS


SELECTOR_STATES = (
    SelectorState(False, False),
    SelectorState(False, True),
    SelectorState(True, False),
    SelectorState(True, True),
)

TARGET_STATES = tuple(s.target for s in SELECTOR_STATES)


class Scenario(enum.Enum):
    """Which profiles are entered as evidence and how symmetry is handled."""

    SUSPECT_AND_VICTIM = "suspect-and-victim"
    SUSPECT_ONLY = "suspect-only"
    VICTIM_KNOWN = "victim-known"
    BOTH_UNKNOWN = "both-unknown"

    @classmethod
    def parse(cls, value) -> "Scenario":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value))
        except ValueError:
            choices = ", ".join(s.value for s in cls)
            raise InputError(f"unknown scenario {value!r} (choices: {choices})") from None


# Per scenario: (enter suspect, enter victim, clamp p2=v, restrict theta >= 1/2)
_SCENARIO_RULES = {
    Scenario.SUSPECT_AND_VICTIM: (True, True, False, False),
    Scenario.SUSPECT_ONLY: (True, False, False, False),
    Scenario.VICTIM_KNOWN: (False, True, True, False),
    Scenario.BOTH_UNKNOWN: (False, False, False, True),
}


@dataclass(frozen=True)
class JointGenotype:
    """One marker's genotype pair, ordered as (first contributor, second
    contributor)."""

    marker: str
    gt1: Genotype
    gt2: Genotype


def allele_counts(gt: Genotype) -> dict:
    """Copies of each allele in the genotype; values sum to two."""
    counts: dict = {}
    for allele in gt.alleles:
        counts[allele] = counts.get(allele, 0) + 1
    return counts


def in_mixture_indicator(gt1: Genotype, gt2: Genotype, observed: Iterable[Allele]) -> bool:
    """True iff the pair explains the mixture: every observed allele is
    carried by at least one contributor and neither carries the pooled
    allele (which is entered as absent from the mixture)."""
    carried = allele_counts(gt1)
    for allele, n in allele_counts(gt2).items():
        carried[allele] = carried.get(allele, 0) + n
    if carried.get(POOLED_ALLELE, 0) > 0:
        return False
    return all(carried.get(allele, 0) >= 1 for allele in observed)


def enumerate_genotypes(alleles: Sequence[Allele]) -> tuple:
    """All unordered pairs over ``alleles`` in deterministic index order."""
    out = []
    for i, a in enumerate(alleles):
        for b in alleles[i:]:
            out.append(Genotype(a, b))
    return tuple(out)


def genotype_prior(marker: str, observed: Iterable[Allele], freqs: FrequencyTable) -> dict:
    """Hardy-Weinberg genotype prior over the observed alleles plus the
    pooled allele: f_a^2 for homozygotes, 2*f_a*f_b otherwise."""
    observed = [a for a in observed if not a.is_pooled]
    f = {a: freqs.frequency(marker, a.label) for a in observed}
    f[POOLED_ALLELE] = pooled_frequency(marker, observed, freqs)
    alleles = sorted(f, key=lambda a: a.sort_key)
    prior = {}
    for gt in enumerate_genotypes(alleles):
        fa, fb = f[gt.first], f[gt.second]
        prior[gt] = fa * fb if gt.homozygous else 2.0 * fa * fb
    return prior


def _amelogenin_prior(marker: str, alleles: Sequence[Allele], weights: Mapping[str, float]) -> dict:
    """Sex prior over genotypes XX and XY, mapped into the marker's state
    space (an unobserved sex allele folds into the pooled allele)."""
    by_label = {a.label: a for a in alleles}

    def resolve(label: str) -> Allele:
        return by_label.get(label, POOLED_ALLELE)

    prior = {gt: 0.0 for gt in enumerate_genotypes(tuple(alleles))}
    for name, weight in weights.items():
        gt = Genotype(resolve(name[0]), resolve(name[1]))
        prior[gt] = prior.get(gt, 0.0) + weight
    return prior


def _clamped_prior(profile_gt: Genotype, alleles: Sequence[Allele]) -> dict:
    """Degenerate prior at the profile's genotype; profile alleles absent
    from the observed set fold into the pooled allele."""
    by_label = {a.label: a for a in alleles}

    def resolve(allele: Allele) -> Allele:
        return by_label.get(allele.label, POOLED_ALLELE)

    target = Genotype(resolve(profile_gt.first), resolve(profile_gt.second))
    return {gt: (1.0 if gt == target else 0.0) for gt in enumerate_genotypes(tuple(alleles))}


def _log(values: np.ndarray) -> np.ndarray:
    out = np.full(values.shape, NEG_INF)
    positive = values > 0
    out[positive] = np.log(values[positive])
    return out


@dataclass(frozen=True)
class MarkerNetwork:
    """Compiled per-marker block: state spaces, priors, the in-mixture
    indicator and the weight log-likelihood, plus the pair-summed factor.

    Genotype pairs are indexed as pair = i1 * len(genotypes) + i2.
    """

    marker: str
    alleles: tuple
    genotypes: tuple
    observed_weights: np.ndarray      # (A,) relative weights, pooled last = 0
    counts: np.ndarray                # (G, A) allele copies per genotype
    log_prior_p1: np.ndarray          # (2, G) by p1-is-suspect in {no, yes}
    log_prior_p2: np.ndarray          # (2, G) by p2-is-victim in {no, yes}
    consistent: np.ndarray            # (G*G,) in-mixture indicator
    log_pair_prior: np.ndarray        # (4, G*G) prior1+prior2+indicator per selector
    log_lik: np.ndarray               # (T, G*G) weight log-likelihood per theta
    log_cell_sum: np.ndarray          # (4, T) logsumexp over pairs

    @property
    def pair_count(self) -> int:
        return len(self.genotypes) ** 2

    def genotype_index(self, gt: Genotype) -> int:
        try:
            return self.genotypes.index(gt)
        except ValueError:
            raise InputError(f"{self.marker}: genotype {gt} outside the state space") from None

    def pair_index(self, gt1: Genotype, gt2: Genotype) -> int:
        return self.genotype_index(gt1) * len(self.genotypes) + self.genotype_index(gt2)

    def pair_state(self, pair: int) -> tuple:
        g = len(self.genotypes)
        return (self.genotypes[pair // g], self.genotypes[pair % g])

    def pair_states(self) -> tuple:
        return tuple(self.pair_state(p) for p in range(self.pair_count))


@dataclass(frozen=True)
class CompiledNetwork:
    """Immutable compiled model; shareable read-only across analyses."""

    scenario: Scenario
    markers: tuple
    theta: np.ndarray
    log_theta_prior: np.ndarray
    log_selector_prior: np.ndarray
    params: object
    use_peak_weights: bool
    use_mixture_indicator: bool

    @property
    def marker_names(self) -> tuple:
        return tuple(m.marker for m in self.markers)

    def marker(self, name: str) -> MarkerNetwork:
        for m in self.markers:
            if m.marker == name:
                return m
        raise InputError(f"unknown marker {name!r}")

    def configuration_count(self) -> int:
        total = 1
        for m in self.markers:
            total *= m.pair_count
        return total


def _marker_log_lik(
    r: np.ndarray, counts: np.ndarray, theta: np.ndarray, sigma2: float, omega2: float
) -> np.ndarray:
    """Vectorized weight log-likelihood: (T, G*G) over all genotype pairs."""
    g = counts.shape[0]
    n1 = np.repeat(counts, g, axis=0)           # (G*G, A)
    n2 = np.tile(counts, (g, 1))                # (G*G, A)
    th = theta[:, None, None]
    mu = (th * n1[None, :, :] + (1.0 - th) * n2[None, :, :]) / 2.0
    tau2 = sigma2 * mu + omega2
    dev = r[None, None, :] - mu
    log_terms = -0.5 * (math.log(2.0 * math.pi) + np.log(tau2) + dev * dev / tau2)
    return log_terms.sum(axis=2)


def _entered_genotype(profile: Optional[Profile], marker: str, role: str) -> Genotype:
    if profile is None:
        raise InputError(f"scenario requires a {role} profile")
    try:
        return profile.genotypes[marker]
    except KeyError:
        raise InputError(f"{role} profile is missing marker {marker!r}") from None


def compile_network(
    case: CaseData,
    scenario,
    *,
    use_peak_weights: bool = True,
    use_mixture_indicator: bool = True,
) -> CompiledNetwork:
    """Compile a case under a scenario into per-marker factors plus shared
    selector and mixture-proportion priors.

    The evidence-folding flags exist for diagnostics: with both disabled the
    model reduces to its priors.
    """
    scenario = Scenario.parse(scenario)
    enter_suspect, enter_victim, clamp_p2v, restrict_theta = _SCENARIO_RULES[scenario]
    params = case.params

    if enter_suspect and case.suspect is None:
        raise InputError("scenario requires a suspect profile")
    if enter_victim and case.victim is None:
        raise InputError("scenario requires a victim profile")

    theta = np.asarray(params.theta_grid, dtype=float)
    theta_prior = np.asarray(params.theta_prior, dtype=float)
    if restrict_theta:
        keep = theta >= 0.5 - 1e-12
        if not keep.any():
            raise InputError("theta grid has no points >= 0.5 for the symmetry constraint")
        theta = theta[keep]
        theta_prior = theta_prior[keep]
        theta_prior = theta_prior / theta_prior.sum()
    log_theta_prior = _log(theta_prior)

    selector_prior = np.full(4, 0.25)
    if clamp_p2v:
        selector_prior = np.array([0.0, 0.5, 0.0, 0.5])
    log_selector_prior = _log(selector_prior)

    markers = []
    for name in case.markers:
        observed = case.observed_alleles(name)
        alleles = (*observed, POOLED_ALLELE)
        genotypes = enumerate_genotypes(alleles)
        g = len(genotypes)

        weight_vector = relative_weights(case.peaks(name))
        r = np.array([weight_vector.weights[a] for a in alleles])

        counts = np.zeros((g, len(alleles)), dtype=np.int8)
        for gi, gt in enumerate(genotypes):
            for ai, allele in enumerate(alleles):
                counts[gi, ai] = gt.count(allele)

        if is_amelogenin(name):
            unknown = _amelogenin_prior(name, alleles, params.amelogenin_prior)
        else:
            unknown = genotype_prior(name, observed, case.frequencies)
        unknown_vec = np.array([unknown[gt] for gt in genotypes])

        def prior_pair(enter: bool, profile: Optional[Profile], role: str) -> np.ndarray:
            rows = np.empty((2, g))
            rows[0] = _log(unknown_vec)
            if enter:
                clamped = _clamped_prior(_entered_genotype(profile, name, role), alleles)
                rows[1] = _log(np.array([clamped[gt] for gt in genotypes]))
            else:
                rows[1] = rows[0]
            return rows

        log_prior_p1 = prior_pair(enter_suspect, case.suspect, "suspect")
        log_prior_p2 = prior_pair(enter_victim, case.victim, "victim")

        if use_mixture_indicator:
            consistent = np.array(
                [
                    in_mixture_indicator(genotypes[p // g], genotypes[p % g], observed)
                    for p in range(g * g)
                ]
            )
        else:
            consistent = np.ones(g * g, dtype=bool)

        log_pair_prior = np.empty((4, g * g))
        for si, state in enumerate(SELECTOR_STATES):
            pair = (
                log_prior_p1[int(state.p1_is_s)][:, None]
                + log_prior_p2[int(state.p2_is_v)][None, :]
            ).reshape(g * g)
            log_pair_prior[si] = np.where(consistent, pair, NEG_INF)

        if use_peak_weights:
            log_lik = _marker_log_lik(r, counts, theta, params.sigma2, params.omega2)
        else:
            log_lik = np.zeros((len(theta), g * g))

        # logsumexp over pairs for every (selector, theta) cell
        scores = log_pair_prior[:, None, :] + log_lik[None, :, :]
        log_cell_sum = logsumexp(scores, axis=2)

        markers.append(
            MarkerNetwork(
                marker=name,
                alleles=alleles,
                genotypes=genotypes,
                observed_weights=r,
                counts=counts,
                log_prior_p1=log_prior_p1,
                log_prior_p2=log_prior_p2,
                consistent=consistent,
                log_pair_prior=log_pair_prior,
                log_lik=log_lik,
                log_cell_sum=log_cell_sum,
            )
        )

    return CompiledNetwork(
        scenario=scenario,
        markers=tuple(markers),
        theta=theta,
        log_theta_prior=log_theta_prior,
        log_selector_prior=log_selector_prior,
        params=params,
        use_peak_weights=use_peak_weights,
        use_mixture_indicator=use_mixture_indicator,
    )
