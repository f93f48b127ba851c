"""Metrics: per-language accuracy, wrong-language-block rate, circular
Yes/No scoring, and expert-routing statistics with assignment-based purity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data import LANGUAGES, SyntheticSample


@dataclass(frozen=True)
class EvalItem:
    sample: SyntheticSample
    prediction: int


@dataclass
class MetricsReport:
    overall_accuracy: float
    per_lang_accuracy: dict[int, float]
    wrong_block_rate: dict[int, float]
    circular_accuracy: float | None = None
    naive_accuracy: float | None = None
    items: list[EvalItem] = field(default_factory=list)


def evaluate(model, eval_set) -> MetricsReport:
    """Argmax-token accuracy per language plus the erosion metric: fraction
    of predictions landing outside the prompt's language block."""
    vpl = model.cfg.vocab_per_lang
    items = [EvalItem(s, model.predict(s)) for s in eval_set]
    by_lang: dict[int, list[EvalItem]] = {}
    for it in items:
        by_lang.setdefault(it.sample.lang_id, []).append(it)
    per_lang = {}
    wrong_block = {}
    for lang, group in sorted(by_lang.items()):
        per_lang[lang] = sum(it.prediction == it.sample.answer for it in group) / len(group)
        wrong_block[lang] = sum(it.prediction // vpl != lang for it in group) / len(group)
    overall = sum(it.prediction == it.sample.answer for it in items) / len(items)
    return MetricsReport(overall, per_lang, wrong_block, items=items)


# --------------------------------------------------------- circular protocol


@dataclass(frozen=True)
class CircularPair:
    """One image asked twice: once about its true class (ground truth Yes)
    and once about a different class (ground truth No)."""

    sample: SyntheticSample
    pos_class: int
    neg_class: int
    verdict_pos: bool  # model said Yes to the positive question
    verdict_neg: bool  # model said Yes to the negative question


def _yes_no_verdict(model, sample: SyntheticSample, queried_class: int) -> bool:
    """Ask 'is this class X?' by appending X's answer token to the prompt
    and comparing the language's reserved Yes/No token logits."""
    vpl = model.cfg.vocab_per_lang
    base = sample.lang_id * vpl
    question = SyntheticSample(
        features=sample.features,
        class_id=sample.class_id,
        lang_id=sample.lang_id,
        prompt=sample.prompt + (base + queried_class,),
        answer=sample.answer,
    )
    logits, _ = model.forward_logits(question)
    yes_tok = base + vpl - 2
    no_tok = base + vpl - 1
    return bool(logits.data[0, yes_tok] > logits.data[0, no_tok])


def make_circular_pairs(model, eval_set, num_classes: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    pairs = []
    for s in eval_set:
        neg = int(rng.integers(num_classes - 1))
        if neg >= s.class_id:
            neg += 1
        pairs.append(
            CircularPair(
                sample=s,
                pos_class=s.class_id,
                neg_class=neg,
                verdict_pos=_yes_no_verdict(model, s, s.class_id),
                verdict_neg=_yes_no_verdict(model, s, neg),
            )
        )
    return pairs


def circular_evaluate(pairs):
    """(circular, naive): an instance counts only if the Yes question got
    Yes and the No question got No; naive scores the two independently."""
    if not pairs:
        raise ValueError("no circular pairs to score")
    circular = sum(p.verdict_pos and not p.verdict_neg for p in pairs) / len(pairs)
    naive = sum((1 if p.verdict_pos else 0) + (0 if p.verdict_neg else 1) for p in pairs) / (
        2 * len(pairs)
    )
    return circular, naive


# ------------------------------------------------------------- expert routing


@dataclass
class ExpertHistogram:
    mean_probs: np.ndarray  # L x E, each row sums to 1
    argmax_counts: np.ndarray  # L x E integer counts
    purity: float
    assignment: dict[int, int]  # language -> matched expert


def expert_distribution(routing_log, num_langs: int, num_experts: int) -> ExpertHistogram:
    """Aggregate (step, lang, probs) records; purity is the matched-argmax
    fraction under the optimal language<->expert assignment."""
    sums = np.zeros((num_langs, num_experts))
    counts = np.zeros((num_langs, num_experts), dtype=np.int64)
    n_per_lang = np.zeros(num_langs, dtype=np.int64)
    for _step, lang, probs in routing_log:
        p = np.asarray(probs, dtype=np.float64)
        sums[lang] += p
        counts[lang, int(np.argmax(p))] += 1
        n_per_lang[lang] += 1
    if n_per_lang.min() == 0:
        missing = [LANGUAGES[i] if i < len(LANGUAGES) else str(i)
                   for i in np.flatnonzero(n_per_lang == 0)]
        raise ValueError(f"no routing records for languages: {missing}")
    mean_probs = sums / n_per_lang[:, None]
    rows, cols = linear_sum_assignment(counts, maximize=True)
    purity = counts[rows, cols].sum() / counts.sum()
    return ExpertHistogram(mean_probs, counts, float(purity),
                           {int(r): int(c) for r, c in zip(rows, cols)})


def ablation_compare(report_with: MetricsReport, report_without: MetricsReport):
    """Per-language accuracy deltas (with-MoE minus without), plot-ready."""
    rows = []
    for lang in sorted(report_with.per_lang_accuracy):
        a = report_with.per_lang_accuracy[lang]
        b = report_without.per_lang_accuracy.get(lang, float("nan"))
        label = LANGUAGES[lang] if lang < len(LANGUAGES) else str(lang)
        rows.append((label, a, b, a - b))
    return rows


# ------------------------------------------------------------------ reporting


def write_report(report: MetricsReport, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"overall_accuracy={report.overall_accuracy!r}\n")
        for lang in sorted(report.per_lang_accuracy):
            label = LANGUAGES[lang] if lang < len(LANGUAGES) else str(lang)
            fh.write(
                f"lang={label} accuracy={report.per_lang_accuracy[lang]!r} "
                f"wrong_block_rate={report.wrong_block_rate[lang]!r}\n"
            )
        if report.circular_accuracy is not None:
            fh.write(f"circular_accuracy={report.circular_accuracy!r}\n")
            fh.write(f"naive_accuracy={report.naive_accuracy!r}\n")


def write_items(items, path) -> None:
    with open(path, "w") as fh:
        for it in items:
            fh.write(
                f"lang={it.sample.lang_id} class={it.sample.class_id} "
                f"answer={it.sample.answer} prediction={it.prediction}\n"
            )
