"""Metrics: accuracy, grounding score, attribute recall, BLEU-4, ROUGE-L."""

import math
import random

import pytest

from rexforge.errors import EmptyEvalSet
from rexforge.explain import GroundedExplanation, parse_explanation
from rexforge.metrics import (EvalPair, answer_accuracy, attribute_recall,
                              bleu4, evaluate, grounding_score, rouge_l)
from rexforge.scene import parse_regions


def expl(text, answer="", n_regions=50, attributes=()):
    parsed = parse_explanation(text, n_regions)
    return GroundedExplanation(question_id="", tokens=parsed.tokens,
                               answer=answer, grounding=parsed.grounding,
                               grounded_objects={},
                               attributes=tuple(attributes))


def pair(qid, pred_text, ref_text, pred_answer="", ref_answer="",
         question="", image_id="img", attributes=()):
    return EvalPair(question_id=qid,
                    predicted=expl(pred_text, pred_answer),
                    reference=expl(ref_text, ref_answer, attributes=attributes),
                    question=question, image_id=image_id)


REGIONS = {"img": parse_regions({
    "image_id": "img",
    "regions": [[0, 0, 10, 10], [10, 0, 20, 10], [5, 5, 25, 25]]})}


class TestAccuracy:
    def test_all_correct(self):
        pairs = [pair(f"q{i}", "x", "x", "yes", "  YES ") for i in range(4)]
        assert answer_accuracy(pairs) == 1.0

    def test_none_correct(self):
        pairs = [pair(f"q{i}", "x", "x", "yes", "no") for i in range(4)]
        assert answer_accuracy(pairs) == 0.0

    def test_three_of_four(self):
        pairs = [pair(f"q{i}", "x", "x", "yes", "yes") for i in range(3)]
        pairs.append(pair("q3", "x", "x", "yes", "no"))
        assert answer_accuracy(pairs) == 0.75

    def test_empty_set_rejected(self):
        with pytest.raises(EmptyEvalSet):
            answer_accuracy([])


class TestGroundingScore:
    def test_identical_token_sets(self):
        pairs = [pair("q0", "the dog #0 and #1", "a dog #0 plus #1")]
        score, counted = grounding_score(pairs, REGIONS)
        assert score == 1.0 and counted == 1

    def test_empty_prediction_scores_zero(self):
        pairs = [pair("q0", "no tokens here", "the dog #0")]
        assert grounding_score(pairs, REGIONS) == (0.0, 1)

    def test_empty_reference_excluded(self):
        pairs = [pair("q0", "the dog #0", "no tokens"),
                 pair("q1", "the dog #0", "the dog #0")]
        assert grounding_score(pairs, REGIONS) == (1.0, 1)
        assert grounding_score(pairs[:1], REGIONS) == (None, 0)

    def test_half_overlap_fixture(self):
        # predicted {#0} vs reference {#0, #1}: areas 100 vs 200
        pairs = [pair("q0", "the dog #0", "the dog #0 near #1")]
        score, _ = grounding_score(pairs, REGIONS)
        assert score == pytest.approx(0.5, abs=1e-9)


class TestAttributeRecall:
    def test_hit_when_value_absent_from_question(self):
        pairs = [pair("q0", "the red apple #0", "ref", question="what color is it",
                      attributes=[("color", "red")])]
        assert attribute_recall(pairs, "color") == (1.0, 1)

    def test_question_leak_excluded(self):
        pairs = [pair("q0", "the red apple", "ref", question="is the red apple shiny",
                      attributes=[("color", "red")])]
        assert attribute_recall(pairs, "color") == (None, 0)

    def test_six_hits_of_eight_eligible(self):
        pairs = []
        for i in range(6):  # hits
            pairs.append(pair(f"h{i}", "it looks red to me", "ref",
                              question="what color", attributes=[("color", "red")]))
        for i in range(2):  # misses
            pairs.append(pair(f"m{i}", "it looks blue to me", "ref",
                              question="what color", attributes=[("color", "red")]))
        for i in range(2):  # leaked: excluded from the denominator
            pairs.append(pair(f"l{i}", "red", "ref", question="is it red",
                              attributes=[("color", "red")]))
        assert attribute_recall(pairs, "color") == (0.75, 8)

    def test_multiword_values_match_as_spans(self):
        pairs = [pair("q0", "made of stainless steel", "ref", question="what",
                      attributes=[("material", "stainless steel")])]
        assert attribute_recall(pairs, "material") == (1.0, 1)
        pairs = [pair("q0", "stainless and steel apart", "ref", question="what",
                      attributes=[("material", "stainless steel")])]
        assert attribute_recall(pairs, "material") == (0.0, 1)

    def test_monotone_in_predictions(self):
        base = pair("q0", "a plain thing", "ref", question="what",
                    attributes=[("color", "red")])
        better = pair("q0", "a plain red thing", "ref", question="what",
                      attributes=[("color", "red")])
        worse_score, _ = attribute_recall([base], "color")
        better_score, _ = attribute_recall([better], "color")
        assert better_score >= worse_score


class TestBleu:
    def test_identical_corpus_is_exactly_one(self):
        pairs = [pair("q0", "the dog #1 sat on the mat", "the dog #1 sat on the mat"),
                 pair("q1", "a red apple near a green pear",
                      "a red apple near a green pear")]
        assert bleu4(pairs) == 1.0

    def test_disjoint_vocabulary_is_near_zero(self):
        pairs = [pair("q0", "alpha beta gamma delta", "one two three four")]
        assert bleu4(pairs) < 1e-2

    def test_brevity_penalty_hand_value(self):
        # candidate "the cat sat" vs reference "the cat sat down":
        # p1=p2=p3=1, p4 smoothed to 1e-9, BP=e^(1-4/3)
        pairs = [pair("q0", "the cat sat", "the cat sat down")]
        expected = math.exp(1 - 4 / 3) * math.exp(math.log(1e-9) / 4)
        assert bleu4(pairs) == pytest.approx(expected, rel=1e-12)

    def test_case_insensitive(self):
        pairs = [pair("q0", "The Dog Sat Here", "the dog sat here")]
        assert bleu4(pairs) == 1.0


class TestRouge:
    def test_identical_is_one(self):
        pairs = [pair("q0", "the dog #1 sat", "the dog #1 sat")]
        assert rouge_l(pairs) == 1.0

    def test_disjoint_is_zero(self):
        pairs = [pair("q0", "alpha beta", "gamma delta")]
        assert rouge_l(pairs) == 0.0

    def test_lcs_f1_hand_value(self):
        # LCS=3, P=1, R=3/4 -> F1 = 6/7
        pairs = [pair("q0", "the cat sat", "the cat sat down")]
        assert rouge_l(pairs) == pytest.approx(6 / 7)

    def test_mean_over_sentences(self):
        pairs = [pair("q0", "a b", "a b"), pair("q1", "x y", "p q")]
        assert rouge_l(pairs) == pytest.approx(0.5)


class TestEvaluate:
    def corpus(self):
        return [
            pair("q0", "the red dog #0 is here", "the red dog #0 is here",
                 "yes", "yes", question="what color",
                 attributes=[("color", "red")]),
            pair("q1", "the blue cat #1 sits", "the blue cat #1 sits",
                 "blue", "blue", question="what color",
                 attributes=[("color", "blue")]),
        ]

    def test_self_evaluation_is_perfect(self):
        report = evaluate(self.corpus(), REGIONS)
        assert report.accuracy == 1.0
        assert report.grounding == 1.0
        assert report.bleu4 == 1.0
        assert report.rouge_l == 1.0
        assert report.attribute_recall["color"] == 1.0
        assert report.attribute_recall["sport"] is None

    def test_permutation_invariance(self):
        pairs = self.corpus() + [
            pair("q2", "something else entirely", "the dog #2", "no", "yes")]
        forward = evaluate(pairs, REGIONS)
        rng = random.Random(1)
        for _ in range(3):
            shuffled = pairs[:]
            rng.shuffle(shuffled)
            assert evaluate(shuffled, REGIONS) == forward

    def test_report_serializes(self):
        report = evaluate(self.corpus(), REGIONS)
        doc = report.to_dict()
        assert doc["accuracy"] == 1.0
        assert "macro" in doc["grounding_averaging"]
        assert "color" in doc["attribute_recall"]
        table = report.format_table()
        assert "answer accuracy" in table
        assert "BLEU-4" in table
