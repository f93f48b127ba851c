"""Miniature multimodal pipeline around the alignment core.

Frozen random vision stub -> 2-layer GeLU projector -> visual tokens with a
CLS row; word-embedding table for prompts; alignment module (stage 2 only);
linear head over pooled visual+text features predicting a single answer
token out of the language-blocked vocabulary.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .alignment import AlignmentConfig, AlignmentModule
from .data import SyntheticSample
from .tensor import Parameter, Tensor


class StageError(RuntimeError):
    """Stage protocol violation (e.g. stage-2 forward before MoE init)."""


@dataclass
class ModelConfig:
    feature_dim: int = 16  # raw image-feature width
    num_patches: int = 4  # visual tokens beside CLS
    vision_channels: int = 16
    channels: int = 32  # shared embedding width
    vocab_per_lang: int = 24
    num_langs: int = 6
    num_experts: int = 6
    expert_hidden: int | None = None
    alpha: float = 1.0
    top_k: int | None = None
    use_moe: bool = True
    seed: int = 0

    @property
    def vocab_total(self) -> int:
        return self.num_langs * self.vocab_per_lang

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


class ToyMultilingualModel:
    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.stage = 1
        self.moe: AlignmentModule | None = None
        rng = np.random.default_rng(cfg.seed)
        d, m, cv, c = cfg.feature_dim, cfg.num_patches, cfg.vision_channels, cfg.channels
        v = cfg.vocab_total

        self.vision_w = Parameter(
            rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, (m + 1) * cv)),
            name="vision.w", trainable=False, frozen=True,
        )
        self.vision_b = Parameter(np.zeros((1, (m + 1) * cv)), name="vision.b",
                                  trainable=False, frozen=True)
        self.proj_w1 = Parameter(rng.normal(0.0, 1.0 / np.sqrt(cv), size=(cv, c)), name="proj.w1")
        self.proj_b1 = Parameter(np.zeros((1, c)), name="proj.b1")
        self.proj_w2 = Parameter(rng.normal(0.0, 1.0 / np.sqrt(c), size=(c, c)), name="proj.w2")
        self.proj_b2 = Parameter(np.zeros((1, c)), name="proj.b2")
        self.embedding = Parameter(rng.normal(0.0, 1.0, size=(v, c)), name="llm.embedding")
        self.head_w = Parameter(rng.normal(0.0, 0.02, size=(2 * c, v)), name="llm.head.w")
        self.head_b = Parameter(np.zeros((1, v)), name="llm.head.b")
        self.set_stage(1)

    # ------------------------------------------------------------- parameters

    def param_groups(self) -> dict[str, list[Parameter]]:
        groups = {
            "vision": [self.vision_w, self.vision_b],
            "projector": [self.proj_w1, self.proj_b1, self.proj_w2, self.proj_b2],
            "llm": [self.embedding, self.head_w, self.head_b],
            "moe": self.moe.parameters() if self.moe is not None else [],
        }
        return groups

    def parameters(self) -> list[Parameter]:
        out = []
        for ps in self.param_groups().values():
            out.extend(ps)
        return out

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self.parameters() if p.trainable and not p.frozen]

    def set_stage(self, stage: int) -> None:
        if stage not in (1, 2):
            raise StageError(f"stage must be 1 or 2, got {stage}")
        self.stage = stage
        groups = self.param_groups()
        trainable = {"projector"} if stage == 1 else {"projector", "llm", "moe"}
        for name, params in groups.items():
            for p in params:
                p.trainable = name in trainable and not p.frozen

    def init_moe(self, seed: int) -> None:
        """Fresh random router/expert parameters (stage-2 precondition)."""
        if not self.cfg.use_moe:
            raise StageError("model was built without the MoE module (--no-moe)")
        self.moe = AlignmentModule(
            AlignmentConfig(
                num_experts=self.cfg.num_experts,
                channels=self.cfg.channels,
                hidden=self.cfg.expert_hidden,
                alpha=self.cfg.alpha,
                top_k=self.cfg.top_k,
                seed=seed,
            )
        )
        self.set_stage(self.stage)  # refresh trainable flags over new params

    # ---------------------------------------------------------------- forward

    def encode_image(self, features) -> Tensor:
        x = Tensor(np.asarray(features, dtype=np.float64))
        if x.shape != (1, self.cfg.feature_dim):
            raise T.DimensionError(
                f"expected feature row of width {self.cfg.feature_dim}, got {x.shape}")
        z = T.add(T.matmul(x, self.vision_w), self.vision_b)
        z = T.reshape(z, (self.cfg.num_patches + 1, self.cfg.vision_channels))
        h = T.gelu(T.add(T.matmul(z, self.proj_w1), self.proj_b1))
        return T.add(T.matmul(h, self.proj_w2), self.proj_b2)

    def embed_prompt(self, tokens) -> Tensor:
        return T.embed(self.embedding, tokens)

    def forward_logits(self, sample: SyntheticSample):
        """Returns (1 x vocab_total logits, router probs or None)."""
        hv = self.encode_image(sample.features)
        ht = self.embed_prompt(sample.prompt)
        if self.stage == 1 or not self.cfg.use_moe:
            gv, probs = hv, None
        else:
            if self.moe is None:
                raise StageError("stage-2 forward requires init_moe first")
            gv, probs = self.moe.forward(hv, ht)
        pooled = T.concat_cols(T.mean_rows(gv), T.mean_rows(ht))
        logits = T.add(T.matmul(pooled, self.head_w), self.head_b)
        return logits, probs

    def loss(self, sample: SyntheticSample):
        logits, probs = self.forward_logits(sample)
        return T.cross_entropy(logits, sample.answer), probs

    def predict(self, sample: SyntheticSample) -> int:
        logits, _ = self.forward_logits(sample)
        return int(np.argmax(logits.data[0]))
