"""Petition ingestion, log-space targets, ordinal labels, chronological splits.

A petition record has three text parts (title, body, optional additional
details) and a final signature count.  The regression target is the log of
that count; the ordinal labels mark which signature milestones the petition
reached.
"""

from __future__ import annotations

import datetime
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import FormatError, ValidationError

# Milestone ladders.  UK petitions trigger a government response at 10k
# signatures and a parliamentary debate at 100k; the US site only publishes
# petitions that clear 150 signatures, hence the shorter ladder.
UK_THRESHOLDS = (10, 100, 1000, 10000, 100000)
US_THRESHOLDS = (1000, 10000, 100000)
US_MIN_SIGNATURES = 150  # records with count <= this are dropped for the US corpus

DEFAULT_SPLIT_RATIOS = (0.8, 0.1, 0.1)


@dataclass(frozen=True)
class Petition:
    """One raw petition record."""

    id: str
    title: str
    body: str
    signature_count: int
    start_date: datetime.date
    additional_details: Optional[str] = None

    def __post_init__(self):
        if not self.title.strip():
            raise ValidationError(f"petition {self.id!r}: empty title")
        if self.signature_count < 1:
            raise ValidationError(
                f"petition {self.id!r}: signature_count must be >= 1, "
                f"got {self.signature_count}"
            )

    @property
    def text(self) -> str:
        """Title, body, and additional details joined into one document."""
        parts = [self.title, self.body]
        if self.additional_details:
            parts.append(self.additional_details)
        return "\n".join(p for p in parts if p)


@dataclass(frozen=True)
class OrdinalScheme:
    """Strictly increasing ladder of signature thresholds.

    ``report_edges`` is the coarser ladder used only for the binned F-score
    in evaluation reports; it must be a subset of ``thresholds``.
    """

    thresholds: tuple[int, ...]
    report_edges: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.thresholds:
            raise ValidationError("ordinal scheme needs at least one threshold")
        if any(t < 1 for t in self.thresholds):
            raise ValidationError("thresholds must be positive")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValidationError("thresholds must be strictly increasing")
        if not self.report_edges:
            object.__setattr__(self, "report_edges", self.thresholds)
        if any(e not in self.thresholds for e in self.report_edges):
            raise ValidationError("report edges must come from the threshold ladder")

    def __len__(self) -> int:
        return len(self.thresholds)


UK_SCHEME = OrdinalScheme(UK_THRESHOLDS, report_edges=(10000, 100000))
US_SCHEME = OrdinalScheme(US_THRESHOLDS, report_edges=(100000,))


@dataclass(frozen=True)
class LabeledExample:
    """A petition prepared for training: text, log target, ordinal bits."""

    petition_id: str
    text: str
    log_count: float
    ordinal_bits: tuple[int, ...]
    signature_count: int = 0
    start_date: Optional[datetime.date] = None

    def __post_init__(self):
        bits = self.ordinal_bits
        if any(b not in (0, 1) for b in bits):
            raise ValidationError("ordinal bits must be 0/1")
        # a 1 may never follow a 0 going up the threshold ladder
        if any(b > a for a, b in zip(bits, bits[1:])):
            raise ValidationError(f"ordinal bits not monotone: {bits}")


@dataclass
class SplitDataset:
    """Chronological train/dev/test partition."""

    train: list
    dev: list
    test: list
    ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS

    def __iter__(self):
        yield from (self.train, self.dev, self.test)


def load_petitions(path) -> list[Petition]:
    """Read one-petition-per-line JSON records, preserving file order.

    Raises FormatError naming the offending line for unparseable records and
    ValidationError for records violating the Petition invariants.
    """
    petitions = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON ({exc.msg})", lineno) from exc
            try:
                petitions.append(_petition_from_record(record))
            except (KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"bad petition record: {exc}", lineno) from exc
    return petitions


def petition_to_record(petition: Petition) -> dict:
    record = {
        "id": petition.id,
        "title": petition.title,
        "body": petition.body,
        "signature_count": petition.signature_count,
        "start_date": petition.start_date.isoformat(),
    }
    if petition.additional_details is not None:
        record["additional_details"] = petition.additional_details
    return record


def save_petitions(path, petitions: Sequence[Petition]) -> None:
    """Inverse of load_petitions; key order is fixed so output is stable."""
    with open(path, "w", encoding="utf-8") as fh:
        for petition in petitions:
            fh.write(json.dumps(petition_to_record(petition), sort_keys=True))
            fh.write("\n")


def _petition_from_record(record: dict) -> Petition:
    start = datetime.date.fromisoformat(str(record["start_date"]))
    count = record["signature_count"]
    if not isinstance(count, int) or isinstance(count, bool):
        raise ValueError(f"signature_count must be an integer, got {count!r}")
    return Petition(
        id=str(record["id"]),
        title=str(record["title"]),
        body=str(record.get("body", "")),
        signature_count=count,
        start_date=start,
        additional_details=(
            None
            if record.get("additional_details") in (None, "")
            else str(record["additional_details"])
        ),
    )


def drop_low_counts(
    petitions: Sequence[Petition], max_dropped_count: int
) -> tuple[list[Petition], int]:
    """Drop petitions with signature_count <= max_dropped_count.

    Returns the surviving petitions (in order) and the number removed.  Used
    for the US corpus, where only petitions above 150 signatures are published.
    """
    kept = [p for p in petitions if p.signature_count > max_dropped_count]
    return kept, len(petitions) - len(kept)


def log_target(count: int, base: float = math.e) -> float:
    """Log-space regression target; exactly 0.0 for a single signature."""
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    if count == 1:
        return 0.0
    return math.log(count, base) if base != math.e else math.log(count)


def encode_ordinal(scheme: OrdinalScheme, count: int) -> tuple[int, ...]:
    """Cumulative 0/1 encoding: bit k is set iff count reaches threshold k.

    Reaching a threshold implies reaching every lower one, so the bit vector
    is always monotone non-increasing.
    """
    return tuple(1 if count >= t else 0 for t in scheme.thresholds)


def ordinal_level(scheme: OrdinalScheme, count: int) -> int:
    """Index of the highest threshold reached; 0 when below all of them."""
    return sum(encode_ordinal(scheme, count))


def make_example(
    petition: Petition, scheme: OrdinalScheme, base: float = math.e
) -> LabeledExample:
    return LabeledExample(
        petition_id=petition.id,
        text=petition.text,
        log_count=log_target(petition.signature_count, base),
        ordinal_bits=encode_ordinal(scheme, petition.signature_count),
        signature_count=petition.signature_count,
        start_date=petition.start_date,
    )


def chronological_split(
    petitions: Sequence[Petition],
    ratios: tuple[float, float, float] = DEFAULT_SPLIT_RATIOS,
) -> SplitDataset:
    """Sort by start date (stable in input order for ties) and cut by ratio.

    Cut points are floor(r1*n) and floor((r1+r2)*n), so a 10950-petition
    corpus under the default ratios yields 8760/1095/1095.
    """
    if not petitions:
        raise ValidationError("cannot split an empty petition list")
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValidationError(f"ratios must be three positive reals: {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"ratios must sum to 1: {ratios}")
    ordered = sorted(petitions, key=lambda p: p.start_date)
    n = len(ordered)
    # the 1e-9 nudge keeps e.g. 10 * 0.7 = 6.999... from flooring one short
    cut1 = int(math.floor(n * ratios[0] + 1e-9))
    cut2 = int(math.floor(n * (ratios[0] + ratios[1]) + 1e-9))
    return SplitDataset(
        train=ordered[:cut1],
        dev=ordered[cut1:cut2],
        test=ordered[cut2:],
        ratios=tuple(ratios),
    )


def label_split(
    split: SplitDataset, scheme: OrdinalScheme, base: float = math.e
) -> SplitDataset:
    """Map a petition split onto labeled examples, preserving the partition."""
    return SplitDataset(
        train=[make_example(p, scheme, base) for p in split.train],
        dev=[make_example(p, scheme, base) for p in split.dev],
        test=[make_example(p, scheme, base) for p in split.test],
        ratios=split.ratios,
    )
