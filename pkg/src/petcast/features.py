"""Hand-engineered petition features: wording ratios, polarity, syntax
counts, freshness against earlier petitions, and pass-through external
scores.

Syntactic counts come from sidecar annotation files (Penn-Treebank-style
tags plus entity spans); the action/policy/political-bias scores come from a
sidecar score file.  Neither tagger nor scorer lives in this package.
"""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, StateError, ValidationError
from .text import SparseVector, cosine, tokenize

# word classes used by the ratio features; fixed, documented constants
INDEFINITE_ARTICLES = frozenset({"a", "an"})
DEFINITE_ARTICLES = frozenset({"the"})
FIRST_SINGULAR = frozenset({"i", "me", "my", "mine", "myself"})
FIRST_PLURAL = frozenset({"we", "us", "our", "ours", "ourselves"})
SECOND_PERSON = frozenset({"you", "your", "yours", "yourself", "yourselves"})
THIRD_SINGULAR = frozenset(
    {"he", "she", "him", "her", "his", "hers", "himself", "herself", "it", "its", "itself"}
)
THIRD_PLURAL = frozenset({"they", "them", "their", "theirs", "themselves"})

FEATURE_NAMES = (
    "Add", "Ind", "Def", "Fsp", "Fpp", "Spp", "Tsp", "Tpp", "Subj", "Pol",
    "Bias", "NNC", "VBC", "ADC", "RBC", "NEC", "Fre", "Act", "Csc", "Pbias",
    "L_R",
)


@dataclass(frozen=True)
class LexiconSet:
    """Word sets backing the lexical ratio and polarity features."""

    indefinite_articles: frozenset = INDEFINITE_ARTICLES
    definite_articles: frozenset = DEFINITE_ARTICLES
    fsp: frozenset = FIRST_SINGULAR
    fpp: frozenset = FIRST_PLURAL
    spp: frozenset = SECOND_PERSON
    tsp: frozenset = THIRD_SINGULAR
    tpp: frozenset = THIRD_PLURAL
    gi_subjective: frozenset = frozenset()
    gi_positive: frozenset = frozenset()
    gi_negative: frozenset = frozenset()
    bias_words: frozenset = frozenset()

    @classmethod
    def from_files(cls, gi_path=None, bias_path=None) -> "LexiconSet":
        """Built-in article/pronoun classes plus file-backed GI and bias sets.

        The GI file maps words to categories; the "subjective", "positive"
        and "negative" categories feed Subj and Pol.
        """
        subjective = positive = negative = frozenset()
        if gi_path is not None:
            categories = load_gi_categories(gi_path)
            subjective = frozenset(categories.get("subjective", ()))
            positive = frozenset(categories.get("positive", ()))
            negative = frozenset(categories.get("negative", ()))
        bias = frozenset(load_wordlist(bias_path)) if bias_path is not None else frozenset()
        return cls(
            gi_subjective=subjective,
            gi_positive=positive,
            gi_negative=negative,
            bias_words=bias,
        )


def load_wordlist(path) -> set[str]:
    """One lowercase word per line; blank lines ignored."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            word = line.strip()
            if not word:
                continue
            if word != word.lower():
                raise FormatError(f"lexicon word not lowercase: {word!r}", lineno)
            words.add(word)
    return words


def load_gi_categories(path) -> dict[str, set[str]]:
    """Tab-separated "word<TAB>category" pairs -> category word sets."""
    categories: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError("expected word<TAB>category", lineno)
            word, category = parts[0].strip().lower(), parts[1].strip().lower()
            categories.setdefault(category, set()).add(word)
    return categories


@dataclass(frozen=True)
class AnnotatedPetition:
    """Sidecar linguistic annotation: tokens, POS tags, entity spans."""

    petition_id: str
    tokens: tuple[str, ...]
    pos_tags: tuple[str, ...]
    entity_spans: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if len(self.pos_tags) != len(self.tokens):
            raise ValidationError(
                f"annotation {self.petition_id!r}: {len(self.tokens)} tokens "
                f"vs {len(self.pos_tags)} tags"
            )
        last_end = 0
        for start, end in sorted(self.entity_spans):
            if start < 0 or end > len(self.tokens) or start >= end:
                raise ValidationError(
                    f"annotation {self.petition_id!r}: span ({start}, {end}) out of bounds"
                )
            if start < last_end:
                raise ValidationError(
                    f"annotation {self.petition_id!r}: overlapping entity spans"
                )
            last_end = end


def load_annotations(path) -> dict[str, AnnotatedPetition]:
    """JSONL with petition_id, tokens, pos_tags, entity_spans per line."""
    annotations = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                ann = AnnotatedPetition(
                    petition_id=str(record["petition_id"]),
                    tokens=tuple(record["tokens"]),
                    pos_tags=tuple(record["pos_tags"]),
                    entity_spans=tuple(
                        (int(s), int(e)) for s, e in record.get("entity_spans", [])
                    ),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"bad annotation record: {exc}", lineno) from exc
            annotations[ann.petition_id] = ann
    return annotations


@dataclass(frozen=True)
class ExternalScores:
    """Precomputed per-petition scores read from a sidecar file.

    act: probability the title conveys the requested action, in [0, 1].
    csc: commonality of the policy issue (unbounded real).
    pbias: share of politically loaded sentences, in [0, 1].
    l_r: left-right leaning in [-1, 1].
    """

    act: float = 0.0
    csc: float = 0.0
    pbias: float = 0.0
    l_r: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.act <= 1.0:
            raise ValidationError(f"act must be in [0,1], got {self.act}")
        if not 0.0 <= self.pbias <= 1.0:
            raise ValidationError(f"pbias must be in [0,1], got {self.pbias}")
        if not -1.0 <= self.l_r <= 1.0:
            raise ValidationError(f"l_r must be in [-1,1], got {self.l_r}")


def load_external_scores(path) -> dict[str, ExternalScores]:
    """JSONL with petition_id and any subset of act/csc/pbias/l_r per line."""
    scores = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                pid = str(record["petition_id"])
                scores[pid] = ExternalScores(
                    act=float(record.get("act", 0.0)),
                    csc=float(record.get("csc", 0.0)),
                    pbias=float(record.get("pbias", 0.0)),
                    l_r=float(record.get("l_r", 0.0)),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"bad score record: {exc}", lineno) from exc
    return scores


@dataclass(frozen=True)
class FeatureVector:
    """The named per-petition scalars fed to the fusion layer.

    Ratio features live in [0, 1]; Pol is a signed count; the syntactic
    fields are non-negative counts stored as reals.
    """

    Add: float = 0.0
    Ind: float = 0.0
    Def: float = 0.0
    Fsp: float = 0.0
    Fpp: float = 0.0
    Spp: float = 0.0
    Tsp: float = 0.0
    Tpp: float = 0.0
    Subj: float = 0.0
    Pol: float = 0.0
    Bias: float = 0.0
    NNC: float = 0.0
    VBC: float = 0.0
    ADC: float = 0.0
    RBC: float = 0.0
    NEC: float = 0.0
    Fre: float = 0.0
    Act: float = 0.0
    Csc: float = 0.0
    Pbias: float = 0.0
    L_R: float = 0.0

    def __post_init__(self):
        values = self.as_array()
        if not np.all(np.isfinite(values)):
            raise ValidationError("feature vector contains non-finite values")
        for name in ("Ind", "Def", "Fsp", "Fpp", "Spp", "Tsp", "Tpp", "Subj", "Bias"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"ratio feature {name} out of [0,1]: {v}")
        for name in ("NNC", "VBC", "ADC", "RBC", "NEC"):
            if getattr(self, name) < 0:
                raise ValidationError(f"count feature {name} negative")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=np.float64)


FEATURE_DIM = len(FEATURE_NAMES)
assert tuple(f.name for f in fields(FeatureVector)) == FEATURE_NAMES


def _ratio(tokens: Sequence[str], words: frozenset) -> float:
    if not tokens:
        return 0.0
    return sum(1 for t in tokens if t in words) / len(tokens)


def lexical_ratios(tokens: Sequence[str], lexicons: LexiconSet) -> dict[str, float]:
    """Share of tokens falling in each article/pronoun/GI/bias word class."""
    return {
        "Ind": _ratio(tokens, lexicons.indefinite_articles),
        "Def": _ratio(tokens, lexicons.definite_articles),
        "Fsp": _ratio(tokens, lexicons.fsp),
        "Fpp": _ratio(tokens, lexicons.fpp),
        "Spp": _ratio(tokens, lexicons.spp),
        "Tsp": _ratio(tokens, lexicons.tsp),
        "Tpp": _ratio(tokens, lexicons.tpp),
        "Subj": _ratio(tokens, lexicons.gi_subjective),
        "Bias": _ratio(tokens, lexicons.bias_words),
    }


def polarity(tokens: Sequence[str], lexicons: LexiconSet) -> float:
    """Positive-word count minus negative-word count (a signed integer)."""
    pos = sum(1 for t in tokens if t in lexicons.gi_positive)
    neg = sum(1 for t in tokens if t in lexicons.gi_negative)
    return float(pos - neg)


def syntactic_counts(annotation: AnnotatedPetition) -> dict[str, float]:
    """POS-prefix counts (NN/VB/JJ/RB) and the number of entity spans."""
    counts = {"NNC": 0, "VBC": 0, "ADC": 0, "RBC": 0}
    for tag in annotation.pos_tags:
        if tag.startswith("NN"):
            counts["NNC"] += 1
        elif tag.startswith("VB"):
            counts["VBC"] += 1
        elif tag.startswith("JJ"):
            counts["ADC"] += 1
        elif tag.startswith("RB"):
            counts["RBC"] += 1
    out = {k: float(v) for k, v in counts.items()}
    out["NEC"] = float(len(annotation.entity_spans))
    return out


def freshness(
    target: SparseVector,
    target_date: datetime.date,
    history: Sequence[tuple[SparseVector, datetime.date]],
) -> float:
    """Similarity to earlier petitions, discounted by age gap in weeks.

    Sum over history of cosine / (1 + floor(day_gap / 7)); same-week
    petitions get full weight.  Empty history gives 0.
    """
    total = 0.0
    for vec, date in history:
        day_gap = (target_date - date).days
        if day_gap < 0:
            raise ValidationError(
                f"history petition dated {date} is after target date {target_date}"
            )
        total += cosine(target, vec) / (1.0 + day_gap // 7)
    return total


def assemble(
    petition,
    annotation: Optional[AnnotatedPetition],
    lexicons: LexiconSet,
    history: Sequence[tuple[SparseVector, datetime.date]] = (),
    external: Optional[ExternalScores] = None,
    *,
    tokens: Optional[Sequence[str]] = None,
    target_vector: Optional[SparseVector] = None,
    fre: Optional[float] = None,
) -> FeatureVector:
    """Fill every feature field for one petition.

    The freshness term comes either from ``fre`` directly (when the caller
    has precomputed it in bulk) or from ``target_vector`` plus ``history``.
    A missing annotation zeroes the syntactic counts; missing external
    scores zero their four fields.
    """
    if annotation is not None and annotation.petition_id != petition.id:
        raise ValidationError(
            f"annotation id {annotation.petition_id!r} != petition id {petition.id!r}"
        )
    if tokens is None:
        tokens = tokenize(petition.text)
    if fre is None:
        if history and target_vector is None:
            raise ValidationError("history given without a target vector")
        if target_vector is not None:
            fre = freshness(target_vector, petition.start_date, history)
        else:
            fre = 0.0
    values: dict[str, float] = {
        "Add": 1.0 if petition.additional_details else 0.0,
        "Fre": fre,
        "Pol": polarity(tokens, lexicons),
    }
    values.update(lexical_ratios(tokens, lexicons))
    if annotation is not None:
        values.update(syntactic_counts(annotation))
    ext = external or ExternalScores()
    values.update({"Act": ext.act, "Csc": ext.csc, "Pbias": ext.pbias, "L_R": ext.l_r})
    return FeatureVector(**values)


class Standardizer:
    """Per-column z-scoring fit on the training matrix only.

    Uses the population standard deviation with a 1e-8 floor, so constant
    columns map to exact zeros.
    """

    def __init__(self, mean: np.ndarray | None = None, std: np.ndarray | None = None):
        self.mean_ = None if mean is None else np.asarray(mean, dtype=np.float64)
        self.std_ = None if std is None else np.asarray(std, dtype=np.float64)

    @property
    def fitted(self) -> bool:
        return self.mean_ is not None

    def fit(self, matrix: np.ndarray) -> "Standardizer":
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] == 0:
            raise ValidationError("standardizer needs a non-empty 2-D matrix")
        self.mean_ = matrix.mean(axis=0)
        self.std_ = np.maximum(matrix.std(axis=0), 1e-8)
        return self

    def apply(self, x: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise StateError("Standardizer.fit must run before apply")
        return (np.asarray(x, dtype=np.float64) - self.mean_) / self.std_
