"""Domain types for STR mixture casework.

Alleles, genotypes, peak records, typed profiles, population frequency
tables and the validated per-case bundle (`CaseData`), plus CSV parsing
and re-serialization of all input files.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from .errors import InputError

# Reserved label for the synthetic allele pooling everything not observed in
# the mixture. It is created per marker at case-build time and must never
# appear in input files.
POOLED_LABEL = "x"

_AMELOGENIN_NAMES = frozenset({"amelogenin", "amel"})
_SEX_ALLELE_LABELS = frozenset({"X", "Y"})

PROFILE_ROLES = ("suspect", "victim")


def is_amelogenin(marker: str) -> bool:
    """True for the sex-typing marker, which carries X/Y alleles instead of
    numeric repeat counts and is priced by a sex prior, not the frequency
    table."""
    return marker.strip().lower() in _AMELOGENIN_NAMES


@dataclass(frozen=True)
class Allele:
    """A marker variant, identified by its verbatim label.

    Numeric labels carry their repeat number (fractional labels such as
    "32.2" denote partial repeats); the sex alleles X/Y and the pooled
    allele "x" have no repeat number.
    """

    label: str
    repeat_value: Optional[float] = None

    def __post_init__(self):
        if not self.label:
            raise InputError("allele label must be non-empty")
        if self.repeat_value is not None and not self.repeat_value > 0:
            raise InputError(f"allele {self.label!r}: repeat number must be positive")

    @classmethod
    def parse(cls, label: str) -> "Allele":
        label = label.strip()
        if not label:
            raise InputError("allele label must be non-empty")
        if label == POOLED_LABEL:
            return cls(POOLED_LABEL, None)
        try:
            repeat = float(label)
        except ValueError:
            return cls(label, None)
        if not repeat > 0:
            raise InputError(f"allele {label!r}: repeat number must be positive")
        return cls(label, repeat)

    @property
    def is_pooled(self) -> bool:
        return self.label == POOLED_LABEL

    @property
    def sort_key(self):
        # Numeric alleles ascending by repeat number, then X/Y and other
        # symbolic labels, with the pooled allele always last.
        if self.repeat_value is not None:
            return (0, self.repeat_value, self.label)
        if self.is_pooled:
            return (2, 0.0, self.label)
        return (1, 0.0, self.label)

    def __str__(self) -> str:
        return self.label


POOLED_ALLELE = Allele(POOLED_LABEL, None)


@dataclass(frozen=True)
class Genotype:
    """An unordered pair of alleles at one marker; construction normalizes
    the order, so Genotype(a, b) == Genotype(b, a)."""

    first: Allele
    second: Allele

    def __post_init__(self):
        if self.second.sort_key < self.first.sort_key:
            a, b = self.second, self.first
            object.__setattr__(self, "first", a)
            object.__setattr__(self, "second", b)

    @classmethod
    def from_labels(cls, label1: str, label2: str) -> "Genotype":
        return cls(Allele.parse(label1), Allele.parse(label2))

    @property
    def homozygous(self) -> bool:
        return self.first.label == self.second.label

    @property
    def alleles(self) -> tuple:
        return (self.first, self.second)

    def count(self, allele: Allele) -> int:
        """Number of copies of ``allele`` in this genotype (0, 1 or 2)."""
        return (self.first == allele) + (self.second == allele)

    def __str__(self) -> str:
        return f"{self.first.label}/{self.second.label}"


@dataclass(frozen=True)
class PeakRecord:
    """One called peak: marker, allele and its (RFU-derived) area."""

    marker: str
    allele: Allele
    area: float

    def __post_init__(self):
        if not self.marker:
            raise InputError("peak record: marker name must be non-empty")
        if self.area < 0:
            raise InputError(
                f"negative area {self.area!r} for {self.marker}/{self.allele.label}"
            )


@dataclass(frozen=True)
class Profile:
    """A typed person: role plus one genotype per marker."""

    person_role: str
    genotypes: Mapping[str, Genotype]

    def __post_init__(self):
        if self.person_role not in PROFILE_ROLES:
            raise InputError(f"unknown profile role {self.person_role!r}")

    def markers(self) -> tuple:
        return tuple(self.genotypes)


class FrequencyTable:
    """Population allele frequencies: marker -> allele label -> frequency.

    Per marker, listed frequencies must each lie in (0, 1] and sum to at
    most 1 (+1e-9 slack); the pooled allele's frequency is derived per case
    as the complement of the observed alleles' frequencies.
    """

    def __init__(self, entries: Mapping[str, Mapping[str, float]]):
        table: dict = {}
        for marker, alleles in entries.items():
            row: dict = {}
            total = 0.0
            for label, freq in alleles.items():
                if label == POOLED_LABEL:
                    raise InputError(
                        f"frequency table {marker}: label {POOLED_LABEL!r} is reserved"
                    )
                if not 0.0 < freq <= 1.0:
                    raise InputError(
                        f"frequency table {marker}/{label}: {freq!r} not in (0, 1]"
                    )
                row[label] = float(freq)
                total += freq
            if total > 1.0 + 1e-9:
                raise InputError(
                    f"frequency table {marker}: frequencies sum to {total:.6f} > 1"
                )
            table[marker] = row
        self._table = table

    def markers(self) -> tuple:
        return tuple(self._table)

    def has(self, marker: str, label: str) -> bool:
        return label in self._table.get(marker, ())

    def frequency(self, marker: str, label: str) -> float:
        try:
            return self._table[marker][label]
        except KeyError:
            raise InputError(f"no frequency entry for {marker}/{label}") from None

    def labels(self, marker: str) -> tuple:
        return tuple(self._table.get(marker, ()))

    def items(self):
        return self._table.items()

    def __eq__(self, other) -> bool:
        return isinstance(other, FrequencyTable) and self._table == other._table


def pooled_frequency(marker: str, observed: Iterable[Allele], freqs: FrequencyTable) -> float:
    """Prior frequency of the pooled allele: the complement of the observed
    alleles' frequencies, clamped at zero."""
    total = 0.0
    for allele in observed:
        if allele.is_pooled:
            continue
        total += freqs.frequency(marker, allele.label)
    return max(0.0, 1.0 - total)


def default_theta_grid(steps: int = 99) -> tuple:
    """Equally spaced mixture-proportion grid i/(steps+1), i=1..steps; the
    endpoints 0 and 1 are excluded so both contributors are genuinely
    present."""
    if steps < 1:
        raise InputError("theta grid needs at least one point")
    return tuple(i / (steps + 1) for i in range(1, steps + 1))


@dataclass(frozen=True)
class ModelParams:
    """Peak-weight model parameters and discrete priors.

    sigma2 is the amplification variance factor, omega2 the measurement
    variance; the mixture proportion is discretized on theta_grid with the
    given prior weights (uniform when omitted). amelogenin_prior is the
    unknown-contributor sex prior over genotypes XX and XY.
    """

    sigma2: float = 0.01
    omega2: float = 0.001
    theta_grid: Sequence[float] = field(default_factory=default_theta_grid)
    theta_prior: Optional[Sequence[float]] = None
    amelogenin_prior: Mapping[str, float] = field(
        default_factory=lambda: {"XX": 0.5, "XY": 0.5}
    )

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise InputError("sigma2 must be positive")
        if not self.omega2 > 0:
            raise InputError("omega2 must be positive")
        grid = tuple(float(t) for t in self.theta_grid)
        if not grid:
            raise InputError("theta grid must be non-empty")
        for t in grid:
            if not 0.0 < t < 1.0:
                raise InputError(f"theta grid value {t!r} not in (0, 1)")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise InputError("theta grid values must be strictly increasing")
        if self.theta_prior is None:
            prior = tuple(1.0 / len(grid) for _ in grid)
        else:
            prior = tuple(float(w) for w in self.theta_prior)
            if len(prior) != len(grid):
                raise InputError("theta prior length must match the grid")
            if any(w <= 0 for w in prior):
                raise InputError("theta prior weights must be positive")
            total = sum(prior)
            prior = tuple(w / total for w in prior)
        amel = dict(self.amelogenin_prior)
        if set(amel) - {"XX", "XY"}:
            raise InputError("amelogenin prior supports only XX and XY")
        if not amel or any(w <= 0 for w in amel.values()):
            raise InputError("amelogenin prior weights must be positive")
        amel_total = sum(amel.values())
        amel = {k: v / amel_total for k, v in amel.items()}
        object.__setattr__(self, "theta_grid", grid)
        object.__setattr__(self, "theta_prior", prior)
        object.__setattr__(self, "amelogenin_prior", amel)


@dataclass(frozen=True)
class CaseData:
    """A validated case: per-marker peaks, optional typed profiles, model
    parameters and the frequency table. Immutable after construction."""

    markers: tuple
    peaks_by_marker: Mapping[str, tuple]
    suspect: Optional[Profile]
    victim: Optional[Profile]
    params: ModelParams
    frequencies: FrequencyTable

    @classmethod
    def build(
        cls,
        peaks: Sequence[PeakRecord],
        suspect: Optional[Profile],
        victim: Optional[Profile],
        params: ModelParams,
        frequencies: FrequencyTable,
    ) -> "CaseData":
        if not peaks:
            raise InputError("case has no peaks")
        markers: list = []
        grouped: dict = {}
        seen: set = set()
        for peak in peaks:
            key = (peak.marker, peak.allele.label)
            if key in seen:
                raise InputError(f"duplicate peak for {peak.marker}/{peak.allele.label}")
            seen.add(key)
            if peak.allele.is_pooled:
                raise InputError(
                    f"{peak.marker}: allele label {POOLED_LABEL!r} is reserved for the pooled allele"
                )
            if peak.marker not in grouped:
                markers.append(peak.marker)
                grouped[peak.marker] = []
            grouped[peak.marker].append(peak)
        for marker, marker_peaks in grouped.items():
            if is_amelogenin(marker):
                bad = [p.allele.label for p in marker_peaks if p.allele.label not in _SEX_ALLELE_LABELS]
                if bad:
                    raise InputError(f"{marker}: sex-marker alleles must be X or Y, got {bad}")
            else:
                for p in marker_peaks:
                    if not frequencies.has(marker, p.allele.label):
                        raise InputError(
                            f"missing frequency for observed allele {marker}/{p.allele.label}"
                        )
        for profile in (suspect, victim):
            if profile is None:
                continue
            for marker in profile.genotypes:
                if marker not in grouped:
                    raise InputError(
                        f"{profile.person_role} profile references marker {marker!r} absent from the peak set"
                    )
        return cls(
            markers=tuple(markers),
            peaks_by_marker={m: tuple(ps) for m, ps in grouped.items()},
            suspect=suspect,
            victim=victim,
            params=params,
            frequencies=frequencies,
        )

    def peaks(self, marker: str) -> tuple:
        return self.peaks_by_marker[marker]

    def observed_alleles(self, marker: str) -> tuple:
        """The marker's observed alleles, sorted; the pooled allele is not
        included."""
        return tuple(sorted((p.allele for p in self.peaks_by_marker[marker]),
                            key=lambda a: a.sort_key))

    def profile(self, role: str) -> Optional[Profile]:
        if role == "suspect":
            return self.suspect
        if role == "victim":
            return self.victim
        raise InputError(f"unknown profile role {role!r}")


# ---------------------------------------------------------------------------
# CSV ingestion. All formats: UTF-8, header row required, comma separator,
# "." decimal point, allele labels verbatim.
# ---------------------------------------------------------------------------

_PEAKS_HEADER = ("marker", "allele", "area")
_PROFILE_HEADER = ("marker", "allele1", "allele2")
_FREQ_HEADER = ("marker", "allele", "frequency")


def _read_rows(text: str, header: tuple, what: str):
    reader = csv.reader(io.StringIO(text))
    rows = []
    for lineno, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        rows.append((lineno, [cell.strip() for cell in row]))
    if not rows:
        raise InputError(f"{what}: empty file (expected header {','.join(header)})")
    first_line, first = rows[0]
    if tuple(h.lower() for h in first) != header:
        raise InputError(
            f"{what}: expected header {','.join(header)!r}, got {','.join(first)!r}",
            line=first_line,
        )
    for lineno, row in rows[1:]:
        if len(row) != len(header):
            raise InputError(
                f"{what}: expected {len(header)} columns, got {len(row)}", line=lineno
            )
        yield lineno, row


def _parse_decimal(value: str, what: str, lineno: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise InputError(f"{what}: not a number: {value!r}", line=lineno) from None


def parse_peaks_csv(text: str) -> list:
    peaks = []
    for lineno, (marker, allele, area) in _read_rows(text, _PEAKS_HEADER, "peaks"):
        value = _parse_decimal(area, "peaks: area", lineno)
        if value < 0:
            raise InputError(f"negative area for {marker}/{allele}", line=lineno)
        try:
            peaks.append(PeakRecord(marker, Allele.parse(allele), value))
        except InputError as exc:
            raise InputError(f"peaks: {exc}", line=lineno) from None
    if not peaks:
        raise InputError("peaks: no data rows")
    return peaks


def parse_profile_csv(text: str, role: str) -> Profile:
    genotypes: dict = {}
    for lineno, (marker, a1, a2) in _read_rows(text, _PROFILE_HEADER, f"{role} profile"):
        if marker in genotypes:
            raise InputError(f"{role} profile: duplicate marker {marker!r}", line=lineno)
        if POOLED_LABEL in (a1, a2):
            raise InputError(
                f"{role} profile: allele label {POOLED_LABEL!r} is reserved", line=lineno
            )
        try:
            genotypes[marker] = Genotype.from_labels(a1, a2)
        except InputError as exc:
            raise InputError(f"{role} profile: {exc}", line=lineno) from None
    if not genotypes:
        raise InputError(f"{role} profile: no data rows")
    return Profile(role, genotypes)


def parse_frequencies_csv(text: str) -> FrequencyTable:
    entries: dict = {}
    for lineno, (marker, allele, freq) in _read_rows(text, _FREQ_HEADER, "frequencies"):
        value = _parse_decimal(freq, "frequencies", lineno)
        row = entries.setdefault(marker, {})
        if allele in row:
            raise InputError(f"frequencies: duplicate entry {marker}/{allele}", line=lineno)
        if allele == POOLED_LABEL:
            raise InputError(
                f"frequencies: label {POOLED_LABEL!r} is reserved", line=lineno
            )
        if not 0.0 < value <= 1.0:
            raise InputError(
                f"frequencies: {marker}/{allele} value {freq} not in (0, 1]", line=lineno
            )
        row[allele] = value
    return FrequencyTable(entries)


def parse_case(
    peaks_text: str,
    suspect_text: Optional[str],
    victim_text: Optional[str],
    freq_text: str,
    params: ModelParams,
) -> CaseData:
    """Parse and validate the full set of case input files."""
    peaks = parse_peaks_csv(peaks_text)
    suspect = parse_profile_csv(suspect_text, "suspect") if suspect_text else None
    victim = parse_profile_csv(victim_text, "victim") if victim_text else None
    frequencies = parse_frequencies_csv(freq_text)
    return CaseData.build(peaks, suspect, victim, params, frequencies)


# ---------------------------------------------------------------------------
# Re-serialization (round-trips with the parsers above).
# ---------------------------------------------------------------------------

def peaks_to_csv(case: CaseData) -> str:
    lines = [",".join(_PEAKS_HEADER)]
    for marker in case.markers:
        for peak in case.peaks_by_marker[marker]:
            lines.append(f"{marker},{peak.allele.label},{peak.area!r}")
    return "\n".join(lines) + "\n"


def profile_to_csv(profile: Profile) -> str:
    lines = [",".join(_PROFILE_HEADER)]
    for marker, gt in profile.genotypes.items():
        lines.append(f"{marker},{gt.first.label},{gt.second.label}")
    return "\n".join(lines) + "\n"


def frequencies_to_csv(freqs: FrequencyTable) -> str:
    lines = [",".join(_FREQ_HEADER)]
    for marker, row in freqs.items():
        for label, value in row.items():
            lines.append(f"{marker},{label},{value!r}")
    return "\n".join(lines) + "\n"
