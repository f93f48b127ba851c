"""Two-stage training: projector-only alignment, then joint tuning with a
freshly initialized expert mixture. AdamW with cosine decay, per-stage
freeze masks, and a bit-exact checkpoint container.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .model import ModelConfig, StageError, ToyMultilingualModel
from .tensor import Tape, record


class ConfigError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class StageConfig:
    stage: int
    lr: float = 1e-3
    steps: int = 200
    batch_size: int = 16
    weight_decay: float = 0.0
    cosine: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.stage not in (1, 2):
            raise ConfigError(f"stage must be 1 or 2, got {self.stage}")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")


def cosine_lr(step: int, total: int, lr0: float) -> float:
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total))


class AdamW:
    """Decoupled-weight-decay Adam. Moments exist only for trainable,
    unfrozen parameters; frozen parameters are never touched."""

    def __init__(self, params, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = [p for p in params if p.trainable and not p.frozen]
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = {p.name: np.zeros_like(p.data) for p in self.params}
        self._v = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self._m[p.name]
            v = self._v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay != 0.0:
                update = update + self.weight_decay * p.data
            p.data -= lr * update


def _run_stage(model: ToyMultilingualModel, corpus, cfg: StageConfig, log_routing: bool):
    if not corpus:
        raise ConfigError("training corpus is empty")
    model.set_stage(cfg.stage)
    opt = AdamW(model.trainable_parameters(), weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(corpus))
    pos = 0
    trace = []
    routing = []
    all_params = model.parameters()
    for step in range(cfg.steps):
        lr_t = cosine_lr(step, cfg.steps, cfg.lr) if cfg.cosine else cfg.lr
        batch = []
        for _ in range(min(cfg.batch_size, len(corpus))):
            if pos == len(order):
                order = rng.permutation(len(corpus))
                pos = 0
            batch.append(corpus[order[pos]])
            pos += 1
        for p in all_params:
            p.grad = None
        with record(Tape()) as tape:
            total = None
            for s in batch:
                item_loss, probs = model.loss(s)
                total = item_loss if total is None else T.add(total, item_loss)
                if log_routing and probs is not None:
                    routing.append((step, s.lang_id, tuple(float(x) for x in probs.data[0])))
            mean_loss = T.scale(total, 1.0 / len(batch))
            tape.backward(mean_loss)
        opt.step(lr_t)
        trace.append((step, mean_loss.item(), lr_t))
    return trace, routing, rng


def train_stage1(model: ToyMultilingualModel, corpus, cfg: StageConfig):
    """Projector-only pass; vision, LLM, and MoE are untouched and the MoE
    path is bypassed entirely."""
    if cfg.stage != 1:
        raise ConfigError(f"train_stage1 got a stage-{cfg.stage} config")
    trace, _, _ = _run_stage(model, corpus, cfg, log_routing=False)
    return trace


def init_moe(model: ToyMultilingualModel, seed: int) -> None:
    model.init_moe(seed)


def train_stage2(model: ToyMultilingualModel, corpus, cfg: StageConfig):
    """Joint pass over projector + LLM + MoE (vision stays frozen), with
    per-sample router probabilities logged by language. Requires init_moe
    first unless the model was built without the MoE (ablation arm)."""
    if cfg.stage != 2:
        raise ConfigError(f"train_stage2 got a stage-{cfg.stage} config")
    if model.cfg.use_moe and model.moe is None:
        raise StageError("stage 2 requires init_moe before training")
    trace, routing, _ = _run_stage(model, corpus, cfg, log_routing=True)
    return trace, routing


# ------------------------------------------------------------- checkpointing

_CKPT_MAGIC = b"LINGUALIGN-CKPT v1\n"


def save_checkpoint(model: ToyMultilingualModel, path, step: int = 0,
                    rng_state: dict | None = None) -> None:
    params = model.parameters()
    header = {
        "stage": model.stage,
        "step": step,
        "model_config": model.cfg.to_dict(),
        "moe_initialized": model.moe is not None,
        "rng_state": rng_state,
        "arrays": [{"name": p.name, "shape": list(p.shape)} for p in params],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n"
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(blob)
        for p in params:
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Rebuild the model from the config echo and restore exact values.
    Returns (model, header dict)."""
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != _CKPT_MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        header = json.loads(fh.readline())
        model = ToyMultilingualModel(ModelConfig.from_dict(header["model_config"]))
        if header["moe_initialized"]:
            model.init_moe(seed=0)  # values overwritten below
        model.set_stage(header["stage"])
        expected = {p.name: p for p in model.parameters()}
        stored = [(a["name"], tuple(a["shape"])) for a in header["arrays"]]
        bad = [n for n, shp in stored if n not in expected or expected[n].shape != shp]
        missing = sorted(set(expected) - {n for n, _ in stored})
        if bad or missing:
            raise CheckpointError(
                f"{path}: mismatched keys {sorted(bad)}, missing keys {missing}")
        for name, shp in stored:
            n = int(np.prod(shp))
            buf = fh.read(8 * n)
            if len(buf) != 8 * n:
                raise CheckpointError(f"{path}: truncated array {name!r}")
            expected[name].data[...] = np.frombuffer(buf, dtype="<f8").reshape(shp)
    return model, header
