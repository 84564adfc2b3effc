"""Evaluation of predicted explanations against references.

Covers answer accuracy, the region-union grounding score, per-family
attribute recall, corpus BLEU-4, and mean sentence-level ROUGE-L F1.
Region tokens (#i) count as ordinary tokens for the language metrics.

Averaging choices baked into this implementation: the grounding score
is macro-averaged over questions (questions whose reference carries no
grounding are excluded); attribute recall counts each eligible
(question, value) instance in the denominator.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import EmptyEvalSet, RegionIndexOutOfRange
from .explain import GroundedExplanation
from .scene import RegionSet

RECALL_FAMILIES = ("color", "material", "sport", "shape", "pose", "size",
                   "activity", "relation")

BLEU_SMOOTH_EPS = 1e-9


@dataclass(frozen=True)
class EvalPair:
    question_id: str
    predicted: GroundedExplanation
    reference: GroundedExplanation
    question: str = ""
    image_id: str = ""

    @property
    def predicted_answer(self) -> str:
        return self.predicted.answer

    @property
    def reference_answer(self) -> str:
        return self.reference.answer


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    grounding: float | None
    attribute_recall: Mapping[str, float | None]
    bleu4: float
    rouge_l: float
    counts: Mapping[str, int]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "grounding": self.grounding,
            "grounding_averaging": "macro over questions",
            "attribute_recall": dict(self.attribute_recall),
            "bleu4": self.bleu4,
            "rouge_l": self.rouge_l,
            "counts": dict(self.counts),
        }

    def format_table(self) -> str:
        lines = [
            f"pairs evaluated:  {self.counts['pairs']}",
            f"answer accuracy:  {self.accuracy:.4f}",
        ]
        if self.grounding is None:
            lines.append("grounding score:  n/a (no reference grounding)")
        else:
            lines.append(f"grounding score:  {self.grounding:.4f} "
                         f"(macro over {self.counts['grounding_questions']} questions)")
        lines.append(f"BLEU-4:           {self.bleu4:.4f}")
        lines.append(f"ROUGE-L:          {self.rouge_l:.4f}")
        lines.append("attribute recall (8 families):")
        for family in RECALL_FAMILIES:
            value = self.attribute_recall.get(family)
            eligible = self.counts.get(f"recall_eligible_{family}", 0)
            if value is None:
                lines.append(f"  {family:<9} n/a (0 eligible)")
            else:
                lines.append(f"  {family:<9} {value:.4f} ({eligible} eligible)")
        return "\n".join(lines)


def _norm_answer(answer: str) -> str:
    return answer.strip().lower()


def answer_accuracy(pairs: Sequence[EvalPair]) -> float:
    """Exact-match fraction after lowercase/trim normalization."""
    if not pairs:
        raise EmptyEvalSet("no pairs to score")
    hits = sum(1 for p in pairs
               if _norm_answer(p.predicted_answer) == _norm_answer(p.reference_answer))
    return hits / len(pairs)


def _region_boxes(expl: GroundedExplanation, regions: RegionSet) -> np.ndarray:
    indices = sorted(set(expl.grounding.values()))
    for idx in indices:
        if idx >= len(regions):
            raise RegionIndexOutOfRange(idx, len(regions))
    if not indices:
        return np.empty((0, 4), dtype=np.float64)
    return np.ascontiguousarray(regions.as_array()[indices])


def grounding_score(pairs: Sequence[EvalPair],
                    regions_by_image: Mapping[str, RegionSet]) -> tuple[float | None, int]:
    """Mean IoU between predicted and reference grounded-region unions.

    Returns (score, questions counted); questions whose reference has no
    grounding are excluded, and the score is None when none remain.
    """
    scores = []
    for pair in pairs:
        regions = regions_by_image[pair.image_id]
        ref_boxes = _region_boxes(pair.reference, regions)
        if ref_boxes.shape[0] == 0:
            continue
        pred_boxes = _region_boxes(pair.predicted, regions)
        scores.append(_kernels.union_iou(pred_boxes, ref_boxes))
    if not scores:
        return None, 0
    return sum(scores) / len(scores), len(scores)


def _tokens(expl: GroundedExplanation) -> list[str]:
    return [t.lower() for t in expl.tokens]


def _contains_span(tokens: Sequence[str], span: Sequence[str]) -> bool:
    if not span:
        return False
    n = len(span)
    return any(list(tokens[i:i + n]) == list(span)
               for i in range(len(tokens) - n + 1))


def attribute_recall(pairs: Sequence[EvalPair], family: str) -> tuple[float | None, int]:
    """Recall of reference attribute values absent from the question.

    Each eligible (question, value) instance counts once; eligibility
    requires the value not to appear in the question (else the sample
    would leak the answer). Returns (recall, eligible count); recall is
    None when nothing is eligible.
    """
    eligible = 0
    hits = 0
    for pair in pairs:
        question_tokens = pair.question.lower().split()
        pred_tokens = _tokens(pair.predicted)
        for fam, value in pair.reference.attributes:
            if fam != family:
                continue
            span = value.lower().split()
            if _contains_span(question_tokens, span):
                continue
            eligible += 1
            if _contains_span(pred_tokens, span):
                hits += 1
    if eligible == 0:
        return None, 0
    return hits / eligible, eligible


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(pairs: Sequence[EvalPair]) -> float:
    """Corpus BLEU-4, uniform weights, with add-epsilon smoothing.

    Zero matched (or possible) n-gram counts are floored at 1e-9, so
    disjoint corpora score approximately 0 instead of exactly 0; exact
    matches are unaffected and score exactly 1.
    """
    if not pairs:
        raise EmptyEvalSet("no pairs to score")
    matched = [0] * 4
    total = [0] * 4
    cand_len = 0
    ref_len = 0
    for pair in pairs:
        cand = _tokens(pair.predicted)
        ref = _tokens(pair.reference)
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, 5):
            cand_counts = _ngram_counts(cand, n)
            ref_counts = _ngram_counts(ref, n)
            matched[n - 1] += sum(min(count, ref_counts[gram])
                                  for gram, count in cand_counts.items())
            total[n - 1] += max(len(cand) - n + 1, 0)
    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(4):
        num = matched[n] if matched[n] > 0 else BLEU_SMOOTH_EPS
        den = total[n] if total[n] > 0 else 1
        log_sum += math.log(num / den)
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_sum / 4.0)


def _lcs(cand: Sequence[str], ref: Sequence[str]) -> int:
    ids: dict[str, int] = {}
    enc_c = np.fromiter((ids.setdefault(t, len(ids)) for t in cand),
                        dtype=np.intc, count=len(cand))
    enc_r = np.fromiter((ids.setdefault(t, len(ids)) for t in ref),
                        dtype=np.intc, count=len(ref))
    return int(_kernels.lcs_length(enc_c, enc_r))


def rouge_l(pairs: Sequence[EvalPair]) -> float:
    """Mean sentence-level ROUGE-L F1 (LCS-based, beta = 1)."""
    if not pairs:
        raise EmptyEvalSet("no pairs to score")
    scores = []
    for pair in pairs:
        cand = _tokens(pair.predicted)
        ref = _tokens(pair.reference)
        if not cand or not ref:
            scores.append(0.0)
            continue
        lcs = _lcs(cand, ref)
        if lcs == 0:
            scores.append(0.0)
            continue
        precision = lcs / len(cand)
        recall = lcs / len(ref)
        scores.append(2.0 * precision * recall / (precision + recall))
    return sum(scores) / len(scores)


def evaluate(pairs: Sequence[EvalPair],
             regions_by_image: Mapping[str, RegionSet]) -> EvalReport:
    """Full report over a pair list; permutation-invariant."""
    if not pairs:
        raise EmptyEvalSet("no pairs to score")
    grounding, grounding_questions = grounding_score(pairs, regions_by_image)
    counts: dict[str, int] = {"pairs": len(pairs),
                              "grounding_questions": grounding_questions}
    recall: dict[str, float | None] = {}
    for family in RECALL_FAMILIES:
        value, eligible = attribute_recall(pairs, family)
        recall[family] = value
        counts[f"recall_eligible_{family}"] = eligible
    return EvalReport(
        accuracy=answer_accuracy(pairs),
        grounding=grounding,
        attribute_recall=recall,
        bleu4=bleu4(pairs),
        rouge_l=rouge_l(pairs),
        counts=counts,
    )
