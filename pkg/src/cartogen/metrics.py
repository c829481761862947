"""Quantitative evaluation: mean IoU between label rasters, detection-study
precision/recall/F1 scoring, and the 10-item usability questionnaire score.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass
from pathlib import Path

import numpy as np

REAL = "real"
SYNTHETIC = "synthetic"


class MetricsError(ValueError):
    pass


def miou(pred: np.ndarray, ref: np.ndarray, classes) -> float:
    """Mean over `classes` of per-class intersection-over-union.

    Classes absent from both rasters are skipped; if every class is absent
    that is an error (the mean would be undefined).
    """
    if pred.shape != ref.shape:
        raise MetricsError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    ious = []
    for c in sorted(set(classes)):
        p = pred == c
        r = ref == c
        union = int(np.count_nonzero(p | r))
        if union == 0:
            continue
        ious.append(int(np.count_nonzero(p & r)) / union)
    if not ious:
        raise MetricsError("all classes absent from both rasters; mIoU undefined")
    return float(sum(ious) / len(ious))


@dataclass(frozen=True)
class AssessmentRecord:
    item_id: str
    truth: str  # real | synthetic
    response: str  # real | synthetic
    task: int  # 1 | 2 | 3
    style_id: str
    participant_id: str

    def __post_init__(self) -> None:
        if self.truth not in (REAL, SYNTHETIC) or self.response not in (REAL, SYNTHETIC):
            raise MetricsError(f"truth/response must be '{REAL}' or '{SYNTHETIC}': {self}")
        if self.task not in (1, 2, 3):
            raise MetricsError(f"task must be 1, 2, or 3: {self}")


@dataclass(frozen=True)
class ScoreRow:
    precision: float
    recall: float
    f1: float
    zero_division: bool = False  # some participant had an empty denominator


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float, bool]:
    flag = (tp + fp == 0) or (tp + fn == 0)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1, flag


def score_assessment(
    records: list[AssessmentRecord], per_participant: bool = True
) -> dict[tuple[str, int], ScoreRow]:
    """Precision/recall/F1 per (style, task).

    "Real" is the positive class: TP = real identified as real, FP = synthetic
    called real, FN = real called synthetic. By default scores are computed
    per participant and averaged; `per_participant=False` pools all counts.
    """
    groups: dict[tuple[str, int], list[AssessmentRecord]] = {}
    for rec in records:
        groups.setdefault((rec.style_id, rec.task), []).append(rec)
    out: dict[tuple[str, int], ScoreRow] = {}
    for key, recs in sorted(groups.items()):
        units = {}
        for rec in recs:
            units.setdefault(rec.participant_id if per_participant else "_all", []).append(rec)
        ps, rs, f1s, flag = [], [], [], False
        for unit_recs in units.values():
            tp = sum(1 for r in unit_recs if r.truth == REAL and r.response == REAL)
            fp = sum(1 for r in unit_recs if r.truth == SYNTHETIC and r.response == REAL)
            fn = sum(1 for r in unit_recs if r.truth == REAL and r.response == SYNTHETIC)
            p, r, f1, unit_flag = _prf(tp, fp, fn)
            ps.append(p)
            rs.append(r)
            f1s.append(f1)
            flag |= unit_flag
        out[key] = ScoreRow(
            precision=sum(ps) / len(ps), recall=sum(rs) / len(rs), f1=sum(f1s) / len(f1s), zero_division=flag
        )
    return out


def load_assessment_csv(path: str | Path) -> list[AssessmentRecord]:
    """Columns: item_id, truth, response, task, style_id, participant_id."""
    records = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(
                AssessmentRecord(
                    item_id=row["item_id"],
                    truth=row["truth"].strip().lower(),
                    response=row["response"].strip().lower(),
                    task=int(row["task"]),
                    style_id=row["style_id"],
                    participant_id=row["participant_id"],
                )
            )
    return records


@dataclass(frozen=True)
class SimilarityRating:
    style_id: str
    participant_id: str
    rating: float  # 0 (dissimilar) .. 5 (identical)

    def __post_init__(self) -> None:
        if not 0 <= self.rating <= 5:
            raise MetricsError(f"similarity rating out of range: {self.rating}")


def mean_similarity(ratings: list[SimilarityRating]) -> dict[str, float]:
    by_style: dict[str, list[float]] = {}
    for r in ratings:
        by_style.setdefault(r.style_id, []).append(r.rating)
    return {s: sum(v) / len(v) for s, v in sorted(by_style.items())}


@dataclass(frozen=True)
class SusResponse:
    items: tuple[int, ...]  # exactly 10 answers, each 1..5

    def __post_init__(self) -> None:
        if len(self.items) != 10:
            raise MetricsError(f"a response has exactly 10 items, got {len(self.items)}")
        if any(not 1 <= v <= 5 for v in self.items):
            raise MetricsError(f"items must be in [1, 5]: {self.items}")

    def score(self) -> float:
        # odd items (1-based) contribute item-1, even items contribute 5-item
        total = 0
        for i, v in enumerate(self.items, start=1):
            total += (v - 1) if i % 2 else (5 - v)
        return total * 2.5


def sus_score(responses: list[SusResponse]) -> tuple[float, float]:
    """Mean and population standard deviation of per-response scores."""
    if not responses:
        raise MetricsError("no responses")
    scores = [r.score() for r in responses]
    mean = sum(scores) / len(scores)
    std = statistics.pstdev(scores)
    return mean, std


def load_sus_csv(path: str | Path) -> list[SusResponse]:
    """Columns: participant_id, q1..q10."""
    responses = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            responses.append(SusResponse(tuple(int(row[f"q{i}"]) for i in range(1, 11))))
    return responses


def format_assessment_table(
    scores: dict[tuple[str, int], ScoreRow], similarity: dict[str, float] | None = None
) -> str:
    """Text table: one column group of three tasks per style."""
    styles = sorted({s for s, _ in scores})
    tasks = (1, 2, 3)
    header = ["Metric"] + [f"{s}/T{t}" for s in styles for t in tasks]
    rows = []
    for metric in ("precision", "recall", "f1"):
        row = [metric.capitalize() if metric != "f1" else "F1"]
        for s in styles:
            for t in tasks:
                cell = scores.get((s, t))
                row.append(f"{getattr(cell, metric):.2f}" if cell else "-")
        rows.append(row)
    if similarity:
        row = ["Similarity"]
        for s in styles:
            for t in tasks:
                row.append(f"{similarity[s]:.2f}" if t == 1 and s in similarity else "")
        rows.append(row)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in [header] + rows]
    return "\n".join(lines)
