"""Reference numerics for the grounding-gated decoding head.

One decoding step mixes a region-grounding distribution (softmax over
region/text similarity, routed into the vocabulary through a binary
region-to-token matrix) with an ordinary vocabulary softmax, weighted by
a sigmoid gate. Training combines answer and explanation cross-entropies
with a class-balanced BCE on the gate.

This module trains nothing: it is a verifiable, framework-free
implementation of the math on small tensors, with analytic gradients
checked against central finite differences. Conventions:

  - softmaxes use max-subtraction; probabilities are clamped at 1e-12
    before any log;
  - if every word is grounded (or none is), the balanced BCE weight of
    the other class is zero, so the gate loss is exactly 0 by the
    formula;
  - the answer head reuses the vocabulary projection on a dedicated
    answer-step state, keeping every term of the total loss inside the
    (T, W_g, W_f) parameter set that the gradient check perturbs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DimMismatch, NonFinite

EPS = 1e-12


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / np.sum(e)


def _check_vector(name: str, v: np.ndarray, dim: int) -> None:
    if v.ndim != 1 or v.shape[0] != dim:
        raise DimMismatch(f"{name} must have shape ({dim},), got {v.shape}")


@dataclass(frozen=True)
class DecoderInstance:
    """Tensors for one decoding step.

    T: (D,) textual feature; V: (N, D) region features; M: (N, K) binary
    region-to-token routing; W_f: (K, D) vocabulary projection; W_g: (D,)
    gate weights. Every region names exactly one vocabulary token and
    every region-token column is hit exactly once; K > N so the
    vocabulary also contains ordinary words.
    """

    T: np.ndarray
    V: np.ndarray
    M: np.ndarray
    W_f: np.ndarray
    W_g: np.ndarray

    def __post_init__(self):
        n, k, d = self.n_regions, self.vocab_size, self.dim
        if n < 1 or d < 1:
            raise DimMismatch(f"need N >= 1 and D >= 1, got N={n}, D={d}")
        if k <= n:
            raise DimMismatch(f"vocabulary must exceed region count, K={k} N={n}")
        _check_vector("T", self.T, d)
        _check_vector("W_g", self.W_g, d)
        if self.V.shape != (n, d):
            raise DimMismatch(f"V shape {self.V.shape} != ({n}, {d})")
        if self.W_f.shape != (k, d):
            raise DimMismatch(f"W_f shape {self.W_f.shape} != ({k}, {d})")
        if not np.isin(self.M, (0, 1)).all():
            raise DimMismatch("M must be binary")
        if not (self.M.sum(axis=1) == 1).all():
            raise DimMismatch("every row of M must route to exactly one token")
        col = self.M.sum(axis=0)
        if not np.isin(col, (0, 1)).all():
            raise DimMismatch("region-token columns of M must be hit exactly once")

    @property
    def n_regions(self) -> int:
        return self.M.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.M.shape[1]

    @property
    def dim(self) -> int:
        return self.V.shape[1] if self.V.ndim == 2 else -1


@dataclass(frozen=True)
class StepOutput:
    """Distributions produced by one decoding step; each sums to 1."""

    S: np.ndarray       # (N,) grounding distribution
    g_hat: float        # gate probability
    y_g: np.ndarray     # (K,) grounding routed into the vocabulary
    y_f: np.ndarray     # (K,) vocabulary softmax
    y_hat: np.ndarray   # (K,) gated mixture


def grounding_distribution(T: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Softmax over region/text dot products (max-subtracted)."""
    if V.ndim != 2 or T.ndim != 1 or V.shape[1] != T.shape[0]:
        raise DimMismatch(f"V {V.shape} incompatible with T {T.shape}")
    return _softmax(V @ T)


def grounding_to_vocab(S: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Route the grounding distribution onto region-token vocabulary entries."""
    if M.ndim != 2 or S.ndim != 1 or M.shape[0] != S.shape[0]:
        raise DimMismatch(f"M {M.shape} incompatible with S {S.shape}")
    return S @ M


def gate(T: np.ndarray, W_g: np.ndarray) -> float:
    """Sigmoid grounding gate, computed on the stable branch."""
    if T.shape != W_g.shape or T.ndim != 1:
        raise DimMismatch(f"W_g {W_g.shape} incompatible with T {T.shape}")
    a = float(W_g @ T)
    if a >= 0.0:
        return 1.0 / (1.0 + np.exp(-a))
    e = np.exp(a)
    return e / (1.0 + e)


def vocab_distribution(T: np.ndarray, W_f: np.ndarray) -> np.ndarray:
    if W_f.ndim != 2 or W_f.shape[1] != T.shape[0]:
        raise DimMismatch(f"W_f {W_f.shape} incompatible with T {T.shape}")
    return _softmax(W_f @ T)


def mix(g_hat: float, y_g: np.ndarray, y_f: np.ndarray) -> np.ndarray:
    """Convex combination of the grounded and textual word distributions."""
    return g_hat * y_g + (1.0 - g_hat) * y_f


def run_step(instance: DecoderInstance) -> StepOutput:
    S = grounding_distribution(instance.T, instance.V)
    y_g = grounding_to_vocab(S, instance.M)
    g_hat = gate(instance.T, instance.W_g)
    y_f = vocab_distribution(instance.T, instance.W_f)
    return StepOutput(S=S, g_hat=g_hat, y_g=y_g, y_f=y_f,
                      y_hat=mix(g_hat, y_g, y_f))


def gate_loss(g: np.ndarray, g_hat: np.ndarray) -> float:
    """Class-balanced binary cross-entropy over the gate predictions.

    Weights are C-/C on the grounded terms and C+/C on the non-grounded
    terms; when one class is absent its opposite weight is zero, so the
    loss degenerates to 0 rather than erroring.
    """
    g = np.asarray(g, dtype=np.float64)
    g_hat = np.clip(np.asarray(g_hat, dtype=np.float64), EPS, 1.0 - EPS)
    if g.shape != g_hat.shape:
        raise DimMismatch(f"gate targets {g.shape} vs predictions {g_hat.shape}")
    c = g.size
    c_plus = float(np.sum(g))
    c_minus = c - c_plus
    pos = (c_minus / c) * g * np.log(g_hat)
    neg = (c_plus / c) * (1.0 - g) * np.log(1.0 - g_hat)
    return float(-np.sum(pos + neg))


def cross_entropy(dist: np.ndarray, target: int) -> float:
    return float(-np.log(max(dist[target], EPS)))


def total_loss(l_ans: float, l_exp: float, l_g: float) -> float:
    """Unit-weight sum of the three training terms."""
    total = l_ans + l_exp + l_g
    if not np.isfinite(total):
        raise NonFinite(f"loss components ({l_ans}, {l_exp}, {l_g})")
    return total


# --- gradient verification on a short decoding sequence ---

@dataclass(frozen=True)
class LossInputs:
    """Targets and predictions entering the total loss for one sequence."""

    gate_truth: np.ndarray       # (S,) binary
    gate_pred: np.ndarray        # (S,)
    word_targets: np.ndarray     # (S,) vocabulary indices
    word_dists: np.ndarray       # (S, K) mixed distributions
    answer_target: int
    answer_dist: np.ndarray      # (K,)

    @property
    def c_plus(self) -> float:
        return float(np.sum(self.gate_truth))

    @property
    def c_minus(self) -> float:
        return float(self.gate_truth.size - self.c_plus)

    @property
    def c(self) -> float:
        return float(self.gate_truth.size)


@dataclass(frozen=True)
class GradCheckCase:
    """Shared weights plus a short sequence of decoding steps to check."""

    V: np.ndarray            # (N, D)
    M: np.ndarray            # (N, K)
    W_f: np.ndarray          # (K, D)
    W_g: np.ndarray          # (D,)
    T_steps: np.ndarray      # (S, D) per-step decoder states
    word_targets: np.ndarray  # (S,)
    gate_targets: np.ndarray  # (S,) binary
    T_answer: np.ndarray     # (D,) answer-step decoder state
    answer_target: int

    def step(self, i: int) -> DecoderInstance:
        return DecoderInstance(T=self.T_steps[i], V=self.V, M=self.M,
                               W_f=self.W_f, W_g=self.W_g)


def forward_sequence(case: GradCheckCase) -> LossInputs:
    outs = [run_step(case.step(i)) for i in range(case.T_steps.shape[0])]
    return LossInputs(
        gate_truth=np.asarray(case.gate_targets, dtype=np.float64),
        gate_pred=np.array([o.g_hat for o in outs]),
        word_targets=np.asarray(case.word_targets),
        word_dists=np.stack([o.y_hat for o in outs]),
        answer_target=case.answer_target,
        answer_dist=vocab_distribution(case.T_answer, case.W_f),
    )


def sequence_loss(case: GradCheckCase) -> float:
    li = forward_sequence(case)
    l_exp = sum(cross_entropy(li.word_dists[i], int(li.word_targets[i]))
                for i in range(li.word_targets.size))
    l_ans = cross_entropy(li.answer_dist, li.answer_target)
    l_g = gate_loss(li.gate_truth, li.gate_pred)
    return total_loss(l_ans, l_exp, l_g)


def analytic_gradients(case: GradCheckCase) -> dict[str, np.ndarray]:
    """Closed-form gradients of the total loss w.r.t. T_steps, T_answer, W_f, W_g."""
    n_steps, d = case.T_steps.shape
    k = case.M.shape[1]
    g_truth = np.asarray(case.gate_targets, dtype=np.float64)
    c = float(g_truth.size)
    c_plus = float(np.sum(g_truth))
    c_minus = c - c_plus

    grad_T = np.zeros_like(case.T_steps)
    grad_Wf = np.zeros_like(case.W_f)
    grad_Wg = np.zeros_like(case.W_g)

    for i in range(n_steps):
        T = case.T_steps[i]
        out = run_step(case.step(i))
        t = int(case.word_targets[i])
        p_t = max(out.y_hat[t], EPS)

        # explanation CE through the mixture
        dL_dyg_t = -out.g_hat / p_t
        dL_dyf_t = -(1.0 - out.g_hat) / p_t
        dL_dghat = -(out.y_g[t] - out.y_f[t]) / p_t

        # gate BCE term for this step
        gh = min(max(out.g_hat, EPS), 1.0 - EPS)
        dL_dghat += -((c_minus / c) * g_truth[i] / gh
                      - (c_plus / c) * (1.0 - g_truth[i]) / (1.0 - gh))

        # grounding softmax backprop (only entry t of y_g receives gradient)
        dL_dS = dL_dyg_t * case.M[:, t].astype(np.float64)
        dL_dz = out.S * (dL_dS - float(out.S @ dL_dS))
        grad_T[i] += case.V.T @ dL_dz

        # vocabulary softmax backprop
        dL_dyf = np.zeros(k)
        dL_dyf[t] = dL_dyf_t
        dL_dzf = out.y_f * (dL_dyf - float(out.y_f @ dL_dyf))
        grad_Wf += np.outer(dL_dzf, T)
        grad_T[i] += case.W_f.T @ dL_dzf

        # gate sigmoid backprop
        da = dL_dghat * out.g_hat * (1.0 - out.g_hat)
        grad_Wg += da * T
        grad_T[i] += da * case.W_g

    # answer CE: plain softmax cross-entropy on the answer-step state
    p_ans = vocab_distribution(case.T_answer, case.W_f)
    dL_dza = p_ans.copy()
    dL_dza[case.answer_target] -= 1.0
    grad_Wf += np.outer(dL_dza, case.T_answer)
    grad_Tans = case.W_f.T @ dL_dza

    return {"T_steps": grad_T, "T_answer": grad_Tans,
            "W_f": grad_Wf, "W_g": grad_Wg}


def finite_difference_gradients(case: GradCheckCase,
                                h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central differences of the total loss, perturbing one entry at a time."""
    grads: dict[str, np.ndarray] = {}
    for name in ("T_steps", "T_answer", "W_f", "W_g"):
        base = getattr(case, name)
        grad = np.zeros_like(base)
        flat = base.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            up = sequence_loss(case)
            flat[idx] = orig - h
            down = sequence_loss(case)
            flat[idx] = orig
            grad.reshape(-1)[idx] = (up - down) / (2.0 * h)
        grads[name] = grad
    return grads


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    per_param: Mapping[str, float]
    h: float = field(default=1e-5)


def _rel_error(a: np.ndarray, f: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-6)
    return float(np.max(np.abs(a - f) / denom)) if a.size else 0.0


def check_gradients(case: GradCheckCase, h: float = 1e-5) -> GradCheckReport:
    """Max relative error between analytic and finite-difference gradients.

    Relative error uses max(|analytic|, |numeric|, 1e-6) as denominator,
    so near-zero gradients are compared on an absolute scale.
    """
    analytic = analytic_gradients(case)
    numeric = finite_difference_gradients(case, h=h)
    per_param = {name: _rel_error(analytic[name], numeric[name])
                 for name in analytic}
    return GradCheckReport(max_rel_error=max(per_param.values()),
                           per_param=per_param, h=h)


def random_routing(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """A valid binary N x K routing matrix over random distinct token columns."""
    m = np.zeros((n, k), dtype=np.int64)
    cols = rng.choice(k, size=n, replace=False)
    m[np.arange(n), cols] = 1
    return m


def random_case(rng: np.random.Generator, n: int = 4, k: int = 10, d: int = 6,
                steps: int = 3) -> GradCheckCase:
    return GradCheckCase(
        V=rng.normal(size=(n, d)),
        M=random_routing(rng, n, k),
        W_f=rng.normal(size=(k, d)),
        W_g=rng.normal(size=d),
        T_steps=rng.normal(size=(steps, d)),
        word_targets=rng.integers(0, k, size=steps),
        gate_targets=rng.integers(0, 2, size=steps),
        T_answer=rng.normal(size=d),
        answer_target=int(rng.integers(0, k)),
    )
