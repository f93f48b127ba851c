"""Deterministic English-heavy multilingual toy corpus.

Each language owns a disjoint block of the vocabulary. A sample is an image
feature (class prototype + Gaussian noise), a prompt drawn from its
language's block, and a single answer token whose position inside the block
encodes the class. Answering the right class in the wrong language block is
therefore measurable, which is the failure mode the whole artifact probes.

Block layout (width V per language): ids [0, K) are the class answer
tokens, the last two ids are reserved Yes/No verdict tokens, and prompts
are drawn from the ids in between.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LANGUAGES = ("en", "zh", "pt", "ar", "tr", "ru")


class CapacityError(ValueError):
    pass


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSample:
    features: tuple[float, ...]
    class_id: int
    lang_id: int
    prompt: tuple[int, ...]
    answer: int


@dataclass
class DatasetSpec:
    num_classes: int = 8
    feature_dim: int = 16
    vocab_per_lang: int = 24
    num_langs: int = len(LANGUAGES)
    # ~10:1 English-centric imbalance
    train_counts: tuple[int, ...] = field(default=None)  # type: ignore[assignment]
    eval_per_lang: int = 40
    noise: float = 0.25
    # longer prompts tighten per-language guidance clusters, which the
    # router needs for clean specialization
    prompt_len: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.train_counts is None:
            self.train_counts = tuple([600] + [60] * (self.num_langs - 1))
        self.train_counts = tuple(int(c) for c in self.train_counts)
        if len(self.train_counts) != self.num_langs:
            raise ValueError(f"need {self.num_langs} per-language counts, got {len(self.train_counts)}")
        if any(c < 0 for c in self.train_counts) or self.eval_per_lang < 0:
            raise ValueError("sample counts must be >= 0")

    @property
    def vocab_total(self) -> int:
        return self.num_langs * self.vocab_per_lang

    def answer_token(self, lang_id: int, class_id: int) -> int:
        return lang_id * self.vocab_per_lang + class_id

    def yes_token(self, lang_id: int) -> int:
        return lang_id * self.vocab_per_lang + self.vocab_per_lang - 2

    def no_token(self, lang_id: int) -> int:
        return lang_id * self.vocab_per_lang + self.vocab_per_lang - 1

    def lang_of_token(self, token: int) -> int:
        return token // self.vocab_per_lang


def _draw_sample(spec: DatasetSpec, rng, protos, lang_id: int) -> SyntheticSample:
    cls = int(rng.integers(spec.num_classes))
    feat = protos[cls] + spec.noise * rng.standard_normal(spec.feature_dim)
    lo = lang_id * spec.vocab_per_lang + spec.num_classes
    hi = (lang_id + 1) * spec.vocab_per_lang - 2
    prompt = tuple(int(t) for t in rng.integers(lo, hi, size=spec.prompt_len))
    return SyntheticSample(
        features=tuple(float(v) for v in feat),
        class_id=cls,
        lang_id=lang_id,
        prompt=prompt,
        answer=spec.answer_token(lang_id, cls),
    )


def generate(spec: DatasetSpec):
    """Build (train, eval) lists; eval is language-balanced regardless of
    the training imbalance. Fully determined by spec.seed."""
    # each block needs K class slots, 2 reserved verdict slots, and at least
    # one id left over for prompts
    if spec.num_classes + 2 >= spec.vocab_per_lang:
        raise CapacityError(
            f"language block of width {spec.vocab_per_lang} cannot hold "
            f"{spec.num_classes} classes, 2 verdict tokens, and prompt ids"
        )
    rng = np.random.default_rng(spec.seed)
    protos = rng.standard_normal((spec.num_classes, spec.feature_dim))

    train = []
    for lang_id, count in enumerate(spec.train_counts):
        for _ in range(count):
            train.append(_draw_sample(spec, rng, protos, lang_id))
    evals = []
    for lang_id in range(spec.num_langs):
        for _ in range(spec.eval_per_lang):
            evals.append(_draw_sample(spec, rng, protos, lang_id))
    return train, evals


def write_corpus(samples, path) -> None:
    with open(path, "w") as fh:
        for s in samples:
            fh.write(
                "class={} lang={} answer={} prompt={} feat={}\n".format(
                    s.class_id,
                    s.lang_id,
                    s.answer,
                    ",".join(str(t) for t in s.prompt),
                    ",".join(repr(v) for v in s.features),
                )
            )


def read_corpus(path):
    samples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                fields = dict(tok.split("=", 1) for tok in line.split())
                samples.append(
                    SyntheticSample(
                        features=tuple(float(v) for v in fields["feat"].split(",")),
                        class_id=int(fields["class"]),
                        lang_id=int(fields["lang"]),
                        prompt=tuple(int(t) for t in fields["prompt"].split(",")),
                        answer=int(fields["answer"]),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: malformed record ({exc})") from exc
    return samples
