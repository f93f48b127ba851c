"""Textual-guidance alignment core.

Pipeline: the visual CLS row attends over the prompt-token embeddings to
produce a guidance vector; a linear router softmaxes that vector into a
distribution over language experts; visual tokens pass through the expert
mixture; the result is added back residually with coefficient alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import DimensionError, Parameter, Tensor

INIT_STD = 0.02


@dataclass
class AlignmentConfig:
    num_experts: int = 6
    channels: int = 32
    hidden: int | None = None  # expert hidden width, defaults to channels
    alpha: float = 1.0
    top_k: int | None = None  # None = dense (all experts)
    seed: int = 0

    def __post_init__(self):
        if self.hidden is None:
            self.hidden = self.channels
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        k = self.num_experts if self.top_k is None else self.top_k
        if not 1 <= k <= self.num_experts:
            raise ValueError(f"top_k must be in [1, {self.num_experts}], got {self.top_k}")


def cls_cross_attention(hv: Tensor, ht: Tensor) -> Tensor:
    """Attention-pool the text rows with the visual CLS row as sole query.

    Returns Softmax(cls . Ht^T / sqrt(C)) . Ht, a 1xC convex combination of
    the rows of Ht. No learned projections: Q/K/V are the raw embeddings.
    """
    c = hv.shape[1]
    if ht.shape[1] != c:
        raise DimensionError(f"channel mismatch: visual {hv.shape} vs text {ht.shape}")
    q = T.row(hv, 0)
    scores = T.scale(T.matmul(q, T.transpose(ht)), 1.0 / math.sqrt(c))
    attn = T.softmax_row(scores)
    return T.matmul(attn, ht)


class AlignmentModule:
    """Router + expert bank with residual reweighting."""

    def __init__(self, cfg: AlignmentConfig, name_prefix: str = "moe"):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        c, h, e = cfg.channels, cfg.hidden, cfg.num_experts
        pfx = name_prefix

        def p(name, shape):
            return Parameter(rng.normal(0.0, INIT_STD, size=shape), name=f"{pfx}.{name}")

        def zeros(name, width):
            return Parameter(np.zeros((1, width)), name=f"{pfx}.{name}")

        self.router_w = p("router.w", (c, e))
        self.router_b = zeros("router.b", e)
        self.experts = []
        for i in range(e):
            self.experts.append(
                {
                    "w1": p(f"expert{i}.w1", (c, h)),
                    "b1": zeros(f"expert{i}.b1", h),
                    "w2": p(f"expert{i}.w2", (h, c)),
                    "b2": zeros(f"expert{i}.b2", c),
                }
            )

    def parameters(self) -> list[Parameter]:
        out = [self.router_w, self.router_b]
        for ex in self.experts:
            out.extend([ex["w1"], ex["b1"], ex["w2"], ex["b2"]])
        return out

    def route(self, g: Tensor) -> Tensor:
        """Softmax router probabilities; top-k keeps the k largest entries
        and renormalizes them to sum 1."""
        logits = T.add(T.matmul(g, self.router_w), self.router_b)
        probs = T.softmax_row(logits)
        k = self.cfg.top_k
        if k is None or k >= self.cfg.num_experts:
            return probs
        keep = np.argsort(probs.data[0])[::-1][:k]
        mask = np.zeros_like(probs.data)
        mask[0, keep] = 1.0
        masked = T.mul_const(probs, mask)
        return T.div_scalar(masked, T.sum_all(masked))

    def apply_expert(self, i: int, hv: Tensor) -> Tensor:
        ex = self.experts[i]
        h = T.silu(T.add(T.matmul(hv, ex["w1"]), ex["b1"]))
        return T.add(T.matmul(h, ex["w2"]), ex["b2"])

    def moe_transform(self, hv: Tensor, p: Tensor) -> Tensor:
        """Probability-weighted sum of expert outputs over all token rows.
        Exactly-zero mixture weights are skipped."""
        out = None
        for i in range(self.cfg.num_experts):
            if p.data[0, i] == 0.0:
                continue
            term = T.mul_scalar(self.apply_expert(i, hv), T.elem(p, 0, i))
            out = term if out is None else T.add(out, term)
        if out is None:
            return T.scale(hv, 0.0)
        return out

    def forward(self, hv: Tensor, ht: Tensor, bypass: bool = False):
        """Full pass: returns (reweighted visual tokens, router probs).

        bypass=True reproduces stage-1 behavior: tokens pass through
        untouched and no routing is computed (probs is None).
        """
        if bypass:
            return hv, None
        guidance = cls_cross_attention(hv, ht)
        p = self.route(guidance)
        delta = self.moe_transform(hv, p)
        return reweight(hv, delta, self.cfg.alpha), p


def reweight(hv: Tensor, delta: Tensor, alpha: float) -> Tensor:
    """Residual combination hv + alpha * delta."""
    if hv.shape != delta.shape:
        raise DimensionError(f"reweight shape mismatch: {hv.shape} vs {delta.shape}")
    if alpha == 0.0:
        return hv
    return T.add(hv, T.scale(delta, alpha))
