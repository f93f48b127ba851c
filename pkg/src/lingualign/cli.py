"""Command-line surface: gen-data, train, eval, analyze, gradcheck.

Configuration is a flat INI file with sections [experiment], [data],
[model], [stage1], [stage2], [eval]; unknown sections or keys are rejected.
Every command echoes the fully-resolved config, the seed, and versions into
its output directory so a run can be reproduced from the directory alone.

Exit codes: 0 success, 2 config error, 3 data error, 4 state error,
1 any other failure (including a failed gradient check).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import __version__, data, evaluate, train
from .backend import BACKEND_NAME
from .checks import stage2_gradient_check
from .data import DatasetSpec
from .model import ModelConfig, StageError, ToyMultilingualModel
from .train import CheckpointError, ConfigError, StageConfig

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_STATE = 4


@dataclasses.dataclass
class EvalOptions:
    circular: bool = True
    circular_seed: int = 0


@dataclasses.dataclass
class ExperimentConfig:
    seed: int = 0
    moe_seed: int | None = None  # overrides the derived MoE init seed
    data: DatasetSpec = None  # type: ignore[assignment]
    model: ModelConfig = None  # type: ignore[assignment]
    stage1: StageConfig = None  # type: ignore[assignment]
    stage2: StageConfig = None  # type: ignore[assignment]
    eval: EvalOptions = None  # type: ignore[assignment]

    def __post_init__(self):
        # sub-seeds derive from the global seed unless a section overrides
        if self.data is None:
            self.data = DatasetSpec(seed=self.seed)
        if self.model is None:
            self.model = ModelConfig(seed=self.seed + 1)
        if self.stage1 is None:
            self.stage1 = StageConfig(stage=1, lr=1e-3, steps=200, seed=self.seed + 2)
        if self.stage2 is None:
            self.stage2 = StageConfig(stage=2, lr=1e-3, steps=400, seed=self.seed + 3)
        if self.eval is None:
            self.eval = EvalOptions(circular_seed=self.seed + 4)

    @property
    def moe_init_seed(self) -> int:
        return self.seed + 5 if self.moe_seed is None else self.moe_seed


_SECTIONS = {
    "experiment": None,
    "data": DatasetSpec,
    "model": ModelConfig,
    "stage1": StageConfig,
    "stage2": StageConfig,
    "eval": EvalOptions,
}


def _coerce(value: str, target_type):
    if target_type is bool:
        if value.lower() in ("1", "true", "yes"):
            return True
        if value.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if target_type is int:
        return int(value)
    if target_type is float:
        return float(value)
    return value


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    unknown = set(parser.sections()) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    seed = 0
    moe_seed = None
    if parser.has_section("experiment"):
        extra = set(parser["experiment"]) - {"seed", "moe_seed"}
        if extra:
            raise ConfigError(f"unknown keys in [experiment]: {sorted(extra)}")
        seed = parser["experiment"].getint("seed", 0)
        raw = parser["experiment"].get("moe_seed", "")
        moe_seed = None if raw.lower() in ("", "none") else int(raw)
    cfg = ExperimentConfig(seed=seed, moe_seed=moe_seed)

    for section, target in (("data", cfg.data), ("model", cfg.model),
                            ("stage1", cfg.stage1), ("stage2", cfg.stage2),
                            ("eval", cfg.eval)):
        if not parser.has_section(section):
            continue
        fields = {f.name: f for f in dataclasses.fields(target)}
        for key, raw in parser[section].items():
            if key not in fields:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            ftype = fields[key].type
            base = {"int": int, "float": float, "bool": bool, "str": str}.get(
                str(ftype).replace("builtins.", "").split("|")[0].strip(), None)
            if key == "train_counts":
                value = tuple(int(x) for x in raw.split(","))
            elif key in ("top_k", "expert_hidden"):
                value = None if raw.lower() in ("none", "") else int(raw)
            elif base is not None:
                value = _coerce(raw, base)
            else:
                value = raw
            try:
                setattr(target, key, value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {exc}") from exc
        if hasattr(target, "__post_init__"):
            target.__post_init__()
    if parser.has_section("stage1"):
        cfg.stage1.stage = 1
    if parser.has_section("stage2"):
        cfg.stage2.stage = 2
    return cfg


def dump_config(cfg: ExperimentConfig, path: Path) -> None:
    parser = configparser.ConfigParser()
    parser["experiment"] = {"seed": str(cfg.seed), "moe_seed": str(cfg.moe_seed)}
    for name, obj in (("data", cfg.data), ("model", cfg.model),
                      ("stage1", cfg.stage1), ("stage2", cfg.stage2), ("eval", cfg.eval)):
        section = {}
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            section[f.name] = str(v)
        parser[name] = section
    with open(path, "w") as fh:
        parser.write(fh)


def _prepare_out_dir(out_dir: str, cfg: ExperimentConfig) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "resolved.cfg")
    with open(out / "versions.txt", "w") as fh:
        fh.write(f"lingualign={__version__}\n")
        fh.write(f"backend={BACKEND_NAME}\n")
        fh.write(f"numpy={np.__version__}\n")
        fh.write(f"python={sys.version.split()[0]}\n")
    return out


def _write_trace(trace, path: Path) -> None:
    with open(path, "w") as fh:
        for step, loss, lr in trace:
            fh.write(f"step={step} loss={loss!r} lr={lr!r}\n")


def _write_routing(routing, path: Path) -> None:
    with open(path, "w") as fh:
        for step, lang, probs in routing:
            fh.write(f"step={step} lang={lang} p={','.join(repr(v) for v in probs)}\n")


def read_routing_log(path):
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                fields = dict(tok.split("=", 1) for tok in line.split())
                records.append((int(fields["step"]), int(fields["lang"]),
                                tuple(float(v) for v in fields["p"].split(","))))
            except (KeyError, ValueError) as exc:
                raise data.CorpusFormatError(f"{path}:{lineno}: malformed record ({exc})") from exc
    return records


# ------------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config)
    out = _prepare_out_dir(args.out, cfg)
    train_set, eval_set = data.generate(cfg.data)
    data.write_corpus(train_set, out / "train.corpus")
    data.write_corpus(eval_set, out / "eval.corpus")
    print(f"wrote {len(train_set)} train / {len(eval_set)} eval samples to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.no_moe:
        cfg.model.use_moe = False
    if args.alpha is not None:
        cfg.model.alpha = args.alpha
    if args.topk is not None:
        cfg.model.top_k = args.topk
    out = _prepare_out_dir(args.out, cfg)
    corpus = data.read_corpus(args.corpus)

    if args.stage in ("1", "both"):
        model = ToyMultilingualModel(cfg.model)
    else:
        if args.init_from is None:
            raise StageError("--stage 2 requires --init-from with a stage-1 checkpoint")
        model, header = train.load_checkpoint(args.init_from)
        if header["stage"] != 1:
            raise StageError(
                f"--stage 2 expects a stage-1 checkpoint, got stage {header['stage']}")
        model.cfg.use_moe = cfg.model.use_moe
        model.cfg.alpha = cfg.model.alpha
        model.cfg.top_k = cfg.model.top_k

    if args.stage in ("1", "both"):
        trace1 = train.train_stage1(model, corpus, cfg.stage1)
        _write_trace(trace1, out / "stage1_loss.txt")
        train.save_checkpoint(model, out / "stage1.ckpt", step=cfg.stage1.steps)
    if args.stage in ("2", "both"):
        if model.cfg.use_moe:
            train.init_moe(model, cfg.moe_init_seed)
        model.set_stage(2)
        trace2, routing = train.train_stage2(model, corpus, cfg.stage2)
        _write_trace(trace2, out / "stage2_loss.txt")
        _write_routing(routing, out / "routing_log.txt")
        train.save_checkpoint(model, out / "stage2.ckpt", step=cfg.stage2.steps)
    print(f"training done; outputs in {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    out = _prepare_out_dir(args.out, cfg)
    model, _header = train.load_checkpoint(args.checkpoint)
    eval_set = data.read_corpus(args.corpus)
    report = evaluate.evaluate(model, eval_set)
    if cfg.eval.circular and model.stage != 1:
        pairs = evaluate.make_circular_pairs(
            model, eval_set, cfg.data.num_classes, seed=cfg.eval.circular_seed)
        report.circular_accuracy, report.naive_accuracy = evaluate.circular_evaluate(pairs)
    evaluate.write_report(report, out / "report.txt")
    evaluate.write_items(report.items, out / "items.txt")
    print(f"overall accuracy {report.overall_accuracy:.3f}; report in {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    out = _prepare_out_dir(args.out, cfg)
    records = read_routing_log(args.routing_log)
    hist = evaluate.expert_distribution(records, cfg.model.num_langs, cfg.model.num_experts)
    with open(out / "expert_hist.txt", "w") as fh:
        fh.write(f"purity={hist.purity!r}\n")
        for lang in range(cfg.model.num_langs):
            label = data.LANGUAGES[lang] if lang < len(data.LANGUAGES) else str(lang)
            fh.write(f"lang={label} mean_p={','.join(repr(v) for v in hist.mean_probs[lang])} "
                     f"argmax_counts={','.join(str(c) for c in hist.argmax_counts[lang])} "
                     f"matched_expert={hist.assignment[lang]}\n")
    print(f"routing purity {hist.purity:.3f}; analysis in {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = load_config(args.config)
    worst, report = stage2_gradient_check(model_cfg=cfg.model, data_spec=cfg.data)
    for name, err in sorted(report.items()):
        print(f"{name}: {err}" if isinstance(err, str) else f"{name}: {err:.3e}")
    print(f"max relative error: {worst:.3e} (tolerance 1e-4)")
    return EXIT_OK if worst < 1e-4 else EXIT_OTHER


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lingualign",
        description="Multilingual visual-token alignment experiments at desk scale")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic multilingual corpus")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="run stage 1, stage 2, or both")
    p.add_argument("--config")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stage", choices=["1", "2", "both"], default="both")
    p.add_argument("--init-from", help="checkpoint to continue from (stage 2)")
    p.add_argument("--no-moe", action="store_true", help="ablation arm without the MoE")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--topk", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("analyze", help="expert histograms and routing purity")
    p.add_argument("--config")
    p.add_argument("--routing-log", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--config")
    p.set_defaults(fn=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (data.CorpusFormatError, data.CapacityError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (StageError, CheckpointError) as exc:
        print(f"state error: {exc}", file=sys.stderr)
        return EXIT_STATE


if __name__ == "__main__":
    sys.exit(main())
