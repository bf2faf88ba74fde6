"""Evaluation utilities: question dedup, Likert summaries, rater agreement.

Mirrors a two-rater expert-panel workflow: semantically near-duplicate
questions are removed before rating, rating rows are summarized as
mean/SD tables per criterion or per question category, and inter-rater
agreement is Cohen's kappa over acceptable/unacceptable binarized scores.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .embedding import cosine_similarity
from .errors import EmptyGroup, EmptyRatings, LengthMismatch, UnmappedQuestion

CATEGORIES = (
    "classifications_scheduling",
    "regulatory_policy",
    "health_effects",
    "prevention",
    "treatment_recovery",
)
CRITERIA = (
    "factual_accuracy",
    "citation_quality",
    "contextual_coherence",
    "regulatory_appropriateness",
)

# which knowledge source chiefly serves each category, for report rows
DEFAULT_CATEGORY_SOURCES = {
    "classifications_scheduling": "local corpus",
    "regulatory_policy": "local corpus",
    "health_effects": "dual-source",
    "prevention": "dual-source",
    "treatment_recovery": "literature (primary)",
}

DEDUP_THRESHOLD = 0.90


@dataclass
class RatedInteraction:
    interaction_id: str
    question_id: str
    category: str
    criterion: str
    rater_id: str
    score: int

    def __post_init__(self):
        if self.score not in (1, 2, 3, 4, 5):
            raise ValueError(f"score must be 1..5, got {self.score}")
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category: {self.category}")
        if self.criterion not in CRITERIA:
            raise ValueError(f"unknown criterion: {self.criterion}")


@dataclass
class SummaryRow:
    label: str
    mean: float
    sd: float
    min: int
    max: int
    n: int
    source: str | None = None

    def formatted(self) -> str:
        return f"{self.mean:.2f} ({self.sd:.2f})"

    def to_dict(self) -> dict:
        rec = {
            "label": self.label,
            "mean": self.mean,
            "sd": self.sd,
            "min": self.min,
            "max": self.max,
            "n": self.n,
            "mean_sd": self.formatted(),
        }
        if self.source is not None:
            rec["source"] = self.source
        return rec


def load_ratings_csv(path: Path) -> list[RatedInteraction]:
    """Reads rating rows; header must be
    interaction_id,question_id,category,criterion,rater_id,score."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = {"interaction_id", "question_id", "category",
                    "criterion", "rater_id", "score"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise ValueError(f"ratings CSV must have columns {sorted(expected)}")
        for rec in reader:
            rows.append(RatedInteraction(
                interaction_id=rec["interaction_id"],
                question_id=rec["question_id"],
                category=rec["category"],
                criterion=rec["criterion"],
                rater_id=rec["rater_id"],
                score=int(rec["score"]),
            ))
    return rows


def dedup_questions(questions: list[str], embed_one,
                    threshold: float = DEDUP_THRESHOLD
                    ) -> tuple[list[str], list[tuple[int, int, float]]]:
    """Greedy first-wins dedup by embedding cosine similarity.

    A question is dropped when it scores >= threshold against any earlier
    kept question; removed_pairs records (kept_index, removed_index, sim)
    in original input indices.
    """
    if not questions:
        raise ValueError("questions must be non-empty")
    if not (0.0 < threshold <= 1.0):
        raise ValueError("threshold must be in (0, 1]")
    vectors = [embed_one(q) for q in questions]
    kept_indices: list[int] = []
    removed_pairs: list[tuple[int, int, float]] = []
    for j, vec in enumerate(vectors):
        duplicate_of = None
        best_sim = 0.0
        for i in kept_indices:
            sim = cosine_similarity(vectors[i], vec)
            if sim >= threshold:
                duplicate_of = i
                best_sim = sim
                break
        if duplicate_of is None:
            kept_indices.append(j)
        else:
            removed_pairs.append((duplicate_of, j, best_sim))
    return [questions[i] for i in kept_indices], removed_pairs


def _mean_sd(scores: list[int]) -> tuple[float, float]:
    n = len(scores)
    mean = sum(scores) / n
    if n < 2:
        return mean, 0.0
    var = sum((s - mean) ** 2 for s in scores) / (n - 1)
    return mean, math.sqrt(var)


def _summarize(label: str, scores: list[int], source: str | None = None) -> SummaryRow:
    if not scores:
        raise EmptyGroup(f"group {label!r} has no ratings")
    mean, sd = _mean_sd(scores)
    return SummaryRow(
        label=label, mean=mean, sd=sd,
        min=min(scores), max=max(scores), n=len(scores), source=source,
    )


def likert_summary(ratings: list[RatedInteraction],
                   group_by: str = "criterion") -> list[SummaryRow]:
    """Mean / sample SD / min / max / n per group, rows sorted by label.

    group_by is one of "criterion", "category", "overall". All rating
    rows are pooled within a group (both raters together).
    """
    if not ratings:
        raise EmptyGroup("no ratings to summarize")
    if group_by == "overall":
        return [_summarize("overall", [r.score for r in ratings])]
    if group_by not in ("criterion", "category"):
        raise ValueError(f"group_by must be criterion|category|overall, got {group_by!r}")
    groups: dict[str, list[int]] = {}
    for r in ratings:
        groups.setdefault(getattr(r, group_by), []).append(r.score)
    return [_summarize(label, groups[label]) for label in sorted(groups)]


def category_summary(ratings: list[RatedInteraction],
                     question_categories: dict[str, str],
                     category_sources: dict[str, str] | None = None
                     ) -> list[SummaryRow]:
    """Per-category mean across all criteria and raters, in canonical order.

    Every question_id must appear in question_categories; each row carries
    the configured primary-source tag for its category.
    """
    if not ratings:
        raise EmptyGroup("no ratings to summarize")
    sources = {**DEFAULT_CATEGORY_SOURCES, **(category_sources or {})}
    groups: dict[str, list[int]] = {}
    for r in ratings:
        if r.question_id not in question_categories:
            raise UnmappedQuestion(f"question {r.question_id!r} has no category mapping")
        groups.setdefault(question_categories[r.question_id], []).append(r.score)
    return [
        _summarize(cat, groups[cat], source=sources.get(cat))
        for cat in CATEGORIES if cat in groups
    ]


def cohen_kappa(ratings_a: list[int], ratings_b: list[int],
                binarize_at: int = 3) -> float:
    """Chance-corrected two-rater agreement on binarized scores.

    Scores >= binarize_at count as acceptable. With degenerate marginals
    (chance agreement is exactly 1) the formula is 0/0; by convention the
    result is 1.0 under perfect observed agreement and 0.0 otherwise.
    """
    if len(ratings_a) != len(ratings_b):
        raise LengthMismatch(f"{len(ratings_a)} vs {len(ratings_b)} ratings")
    if not ratings_a:
        raise EmptyRatings("need at least one rating pair")
    for score in list(ratings_a) + list(ratings_b):
        if score not in (1, 2, 3, 4, 5):
            raise ValueError(f"score must be 1..5, got {score}")

    n = len(ratings_a)
    a_bin = [s >= binarize_at for s in ratings_a]
    b_bin = [s >= binarize_at for s in ratings_b]
    p_o = sum(1 for x, y in zip(a_bin, b_bin) if x == y) / n
    pa = sum(a_bin) / n
    pb = sum(b_bin) / n
    p_e = pa * pb + (1 - pa) * (1 - pb)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1 - p_e)


def paired_scores(ratings: list[RatedInteraction]) -> tuple[list[int], list[int]]:
    """Aligns the two raters' scores by (interaction_id, criterion).

    Only pairs rated by both raters are kept; requires exactly two
    distinct rater ids in the data.
    """
    raters = sorted({r.rater_id for r in ratings})
    if len(raters) != 2:
        raise ValueError(f"expected exactly 2 raters, found {len(raters)}")
    by_key: dict[tuple[str, str], dict[str, int]] = {}
    for r in ratings:
        by_key.setdefault((r.interaction_id, r.criterion), {})[r.rater_id] = r.score
    a, b = [], []
    for key in sorted(by_key):
        scores = by_key[key]
        if raters[0] in scores and raters[1] in scores:
            a.append(scores[raters[0]])
            b.append(scores[raters[1]])
    return a, b
