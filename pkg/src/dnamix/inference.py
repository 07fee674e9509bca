"""Exact inference over the compiled model.

Because markers are conditionally independent given the selector state and
the mixture proportion, the evidence probability is a double sum over the
few shared states of a product of per-marker pair sums; this structured
sum is the junction-tree computation for this topology. Everything is
accumulated in log space (evidence probabilities reach the 1e-21 scale),
and exact zeros are kept as -inf rather than tiny log values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .errors import InputError, ZeroEvidenceError
from .genetics import Genotype
from .network import (
    NEG_INF,
    CompiledNetwork,
    JointGenotype,
    TargetState,
    TARGET_STATES,
)

PairLike = Union[JointGenotype, "tuple[Genotype, Genotype]", int]


@dataclass(frozen=True)
class EvidenceResult:
    """Evidence probability plus requested posterior marginals."""

    log_evidence: float
    target: "dict[TargetState, float]"
    theta: np.ndarray

    @property
    def zero_evidence(self) -> bool:
        return self.log_evidence == NEG_INF


def _cell_scores(net: CompiledNetwork) -> np.ndarray:
    """Joint log-score of every (selector, theta) cell with all markers'
    pair variables summed out: shape (4, T)."""
    cells = net.log_selector_prior[:, None] + net.log_theta_prior[None, :]
    for marker in net.markers:
        cells = cells + marker.log_cell_sum
    return cells


def evidence_probability(net: CompiledNetwork) -> float:
    """log P(E); -inf is the exact-zero sentinel."""
    return float(logsumexp(_cell_scores(net)))


def diagnose_zero_evidence(net: CompiledNetwork) -> "tuple[str, str | None]":
    """Explain a zero evidence probability: (message, offending marker or
    None when no single marker is responsible)."""
    active = np.isfinite(net.log_selector_prior)[:, None] & np.isfinite(
        net.log_theta_prior
    )[None, :]
    dead_everywhere = [
        m.marker for m in net.markers if not np.isfinite(m.log_cell_sum[active]).any()
    ]
    if dead_everywhere:
        name = dead_everywhere[0]
        return (
            f"marker {name}: no genotype pair with positive prior explains "
            "the observed alleles",
            name,
        )
    blockers = sorted(
        {
            m.marker
            for m in net.markers
            if not np.isfinite(m.log_cell_sum[active]).all()
        }
    )
    return ("conflicting evidence across markers: " + ", ".join(blockers), None)


def _require_evidence(net: CompiledNetwork) -> float:
    log_pe = evidence_probability(net)
    if log_pe == NEG_INF:
        message, marker = diagnose_zero_evidence(net)
        raise ZeroEvidenceError(
            f"evidence probability is zero ({message})", marker=marker
        )
    return log_pe


def target_posterior(net: CompiledNetwork) -> "dict[TargetState, float]":
    """Posterior over the four contributor hypotheses. With uniform selector
    priors, ratios of these values are likelihood ratios."""
    log_pe = _require_evidence(net)
    per_selector = logsumexp(_cell_scores(net), axis=1)
    posterior = np.exp(per_selector - log_pe)
    return dict(zip(TARGET_STATES, posterior.tolist()))


def theta_posterior(net: CompiledNetwork) -> np.ndarray:
    """Posterior over the mixture-proportion grid, aligned with net.theta."""
    log_pe = _require_evidence(net)
    per_theta = logsumexp(_cell_scores(net), axis=0)
    return np.exp(per_theta - log_pe)


def genotype_pair_posterior(net: CompiledNetwork, marker: str) -> np.ndarray:
    """Posterior over one marker's genotype-pair states (indexed as in
    MarkerNetwork.pair_states)."""
    log_pe = _require_evidence(net)
    target = net.marker(marker)
    cells = _cell_scores(net)
    # Remove this marker's pair sum from each cell, then reattach the
    # per-pair scores; dead cells stay dead rather than producing inf-inf.
    with np.errstate(invalid="ignore"):
        rest = np.where(
            np.isfinite(target.log_cell_sum), cells - target.log_cell_sum, NEG_INF
        )
    scores = (
        rest[:, :, None]
        + target.log_pair_prior[:, None, :]
        + target.log_lik[None, :, :]
    )
    per_pair = logsumexp(scores, axis=(0, 1))
    return np.exp(per_pair - log_pe)


def posterior_marginal(net: CompiledNetwork, query: str, marker: "str | None" = None):
    """Dispatcher over the three marginal queries: "target", "theta", or
    "joint_genotype" (with a marker name)."""
    if query == "target":
        return target_posterior(net)
    if query == "theta":
        return theta_posterior(net)
    if query == "joint_genotype":
        if marker is None:
            raise InputError("joint_genotype query needs a marker name")
        return genotype_pair_posterior(net, marker)
    raise InputError(f"unknown marginal query {query!r}")


def run_inference(net: CompiledNetwork) -> EvidenceResult:
    log_pe = _require_evidence(net)
    return EvidenceResult(
        log_evidence=log_pe,
        target=target_posterior(net),
        theta=theta_posterior(net),
    )


def _pair_index(marker_net, assignment: PairLike) -> int:
    if isinstance(assignment, (int, np.integer)):
        index = int(assignment)
        if not 0 <= index < marker_net.pair_count:
            raise InputError(
                f"{marker_net.marker}: pair index {index} out of range"
            )
        return index
    if isinstance(assignment, JointGenotype):
        return marker_net.pair_index(assignment.gt1, assignment.gt2)
    gt1, gt2 = assignment
    return marker_net.pair_index(gt1, gt2)


def config_pair_indices(net: CompiledNetwork, config: Mapping[str, PairLike]) -> np.ndarray:
    missing = [m.marker for m in net.markers if m.marker not in config]
    if missing:
        raise InputError(f"configuration does not assign markers: {', '.join(missing)}")
    return np.array(
        [_pair_index(m, config[m.marker]) for m in net.markers], dtype=np.intp
    )


def score_pair_indices(net: CompiledNetwork, indices: Sequence[int]) -> float:
    """log P(config, E) for a configuration given as one pair index per
    marker, in net.markers order."""
    cells = net.log_selector_prior[:, None] + net.log_theta_prior[None, :]
    for marker, index in zip(net.markers, indices):
        cells = cells + (
            marker.log_pair_prior[:, None, int(index)]
            + marker.log_lik[None, :, int(index)]
        )
    return float(logsumexp(cells))


def clamp_and_score(net: CompiledNetwork, config: Mapping[str, PairLike]) -> float:
    """log P(config, E): the evidence probability with every marker's
    genotype-pair variable clamped to the configured state. -inf marks an
    exactly impossible configuration."""
    return score_pair_indices(net, config_pair_indices(net, config))
