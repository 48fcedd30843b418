"""Command line entry point: ``bidigen <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

from . import data as data_mod
from .analysis import analyze_traces, export_heatmap
from .checkpoint import load_checkpoint
from .decoding import GenerationStrategy, generate, save_trace
from .errors import BidigenError
from .evaluation import EvalReport, evaluate
from .model import EncoderConfig, EncoderModel
from .placeholder import PlaceholderPolicy
from .tokenizer import Vocabulary, build_vocab
from .training import TrainConfig, train

log = logging.getLogger("bidigen")


class ConfigError(Exception):
    pass


DEFAULT_CONFIG = {
    "model": {"max_seq_len": 128, "num_layers": 2, "num_heads": 4, "hidden_dim": 128,
              "ffn_dim": 256, "dropout_rate": 0.1},
    "train": {"batch_size": 15, "epochs": 20, "peak_lr": 1e-4, "warmup_fraction": 0.1,
              "weight_decay": 0.01, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
              "loss_scope": "all_output", "max_gen_len": 50, "seed": 0, "max_steps": None},
    "placeholder": {"kind": "gaussian", "mu": 0.5, "sigma": 0.6, "rng_seed": 0},
    "strategy": "left_to_right",
    "data": {"train": None, "dev": None, "vocab": None, "min_count": 1},
    "output_dir": "run",
}


def _merge(base, override, path=""):
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be an object")
            _merge(base[key], value, where + ".")
        else:
            base[key] = value


def _apply_override(cfg, assignment):
    if "=" not in assignment:
        raise ConfigError(f"override '{assignment}' is not key=value")
    dotted, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    nested = value
    for part in reversed(dotted.split(".")):
        nested = {part: nested}
    _merge(cfg, nested)


def resolve_config(path=None, overrides=()):
    """Defaults <- config file <- ``section.key=value`` overrides, then validate."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            user = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc.msg})") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{p}: top level must be an object")
        _merge(cfg, user)
    for o in overrides:
        _apply_override(cfg, o)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    try:
        EncoderConfig(vocab_size=5, **cfg["model"])
        TrainConfig(**cfg["train"])
        PlaceholderPolicy(**cfg["placeholder"])
        GenerationStrategy(cfg["strategy"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    if not cfg["data"]["train"]:
        raise ConfigError("data.train is required")
    for key in ("train", "dev", "vocab"):
        p = cfg["data"][key]
        if p and not Path(p).is_file():
            raise ConfigError(f"data.{key} file not found: {p}")


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------

def cmd_train(args):
    overrides = list(args.set or [])
    for flag, key in (("seed", "train.seed"), ("epochs", "train.epochs"),
                      ("max_steps", "train.max_steps")):
        if getattr(args, flag) is not None:
            overrides.append(f"{key}={getattr(args, flag)}")
    if args.output_dir is not None:
        overrides.append(f"output_dir={json.dumps(args.output_dir)}")
    cfg = resolve_config(args.config, overrides)

    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    train_set = data_mod.load_jsonl(cfg["data"]["train"])
    dev_set = data_mod.load_jsonl(cfg["data"]["dev"]) if cfg["data"]["dev"] else None
    if cfg["data"]["vocab"]:
        vocab = Vocabulary.load(cfg["data"]["vocab"])
    else:
        vocab = build_vocab((t for ex in train_set for t in (ex.source, ex.target)),
                            min_count=cfg["data"]["min_count"])
    vocab.save(out / "vocab.txt")
    tc = TrainConfig(**cfg["train"])
    model = EncoderModel(EncoderConfig(vocab_size=len(vocab), **cfg["model"]), seed=tc.seed)
    result = train(model, train_set, vocab, PlaceholderPolicy(**cfg["placeholder"]), tc,
                   checkpoint_dir=out, dev_set=dev_set, dev_strategy=cfg["strategy"])
    print(f"trained {result.steps} steps; best checkpoint: {result.best_checkpoint}")
    return 0


def _load(checkpoint):
    model, vocab, meta = load_checkpoint(checkpoint)
    if vocab is None:
        raise ConfigError(f"{checkpoint} carries no vocabulary")
    return model, vocab, meta


def _echo_args(directory, args, name="run_config.json"):
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    Path(directory).mkdir(parents=True, exist_ok=True)
    (Path(directory) / name).write_text(json.dumps(resolved, indent=2, sort_keys=True) + "\n")


def _gen_len(args, meta):
    return args.max_gen_len or meta.get("max_gen_len") or 50


def cmd_generate(args):
    model, vocab, meta = _load(args.checkpoint)
    if args.input is not None:
        sources = [args.input]
    else:
        path = Path(args.input_file)
        if path.suffix == ".jsonl":
            sources = [ex.source for ex in data_mod.load_jsonl(path)]
        else:
            sources = [line.rstrip("\n") for line in path.read_text(encoding="utf-8").splitlines()]
    trace_dir = Path(args.trace_dir) if args.trace_dir else None
    if trace_dir:
        _echo_args(trace_dir, args)
    for i, src in enumerate(sources):
        text, trace = generate(model, vocab, src, args.strategy, _gen_len(args, meta),
                               keep_attention=False)
        print(text)
        if trace_dir:
            save_trace(trace, trace_dir / f"trace_{i:05d}.jsonl", vocab)
    return 0


def cmd_evaluate(args):
    model, vocab, meta = _load(args.checkpoint)
    dev = data_mod.load_jsonl(args.data)
    report = evaluate(model, vocab, dev, args.strategy, _gen_len(args, meta))
    text = report.to_text()
    print(text)
    if args.out:
        out = Path(args.out)
        _echo_args(out.parent, args, out.stem + ".config.json")
        out.write_text(text + "\n", encoding="utf-8")
        out.with_suffix(".csv").write_text(
            ",".join(EvalReport.CSV_COLUMNS) + "\n" + report.csv_row() + "\n", encoding="utf-8")
    return 0


def cmd_analyze(args):
    model, vocab, meta = _load(args.checkpoint)
    examples = data_mod.load_jsonl(args.data)[:args.limit]
    if not examples:
        raise ConfigError(f"{args.data} holds no examples")
    traces = [generate(model, vocab, ex.source, "left_to_right", _gen_len(args, meta),
                       keep_attention=False)[1] for ex in examples]
    report = analyze_traces(traces, layer=args.layer)
    out = Path(args.out_dir)
    _echo_args(out, args)
    text = report.to_text(label=Path(args.data).stem)
    (out / "attention_report.txt").write_text(text, encoding="utf-8")
    per_head = report.per_head_csv()
    if args.head is not None:
        if not 0 <= args.head < report.num_heads:
            raise ConfigError(f"head {args.head} out of range for {report.num_heads} heads")
        lines = per_head.splitlines()
        per_head = "\n".join([lines[0], lines[1 + args.head]]) + "\n"
    (out / "attention_per_head.csv").write_text(per_head, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_heatmap(args):
    model, vocab, meta = _load(args.checkpoint)
    _, trace = generate(model, vocab, args.input, args.strategy, _gen_len(args, meta))
    if not 0 <= args.head < model.config.num_heads:
        raise ConfigError(f"head {args.head} out of range for {model.config.num_heads} heads")
    csv_path, svg_path = export_heatmap(trace, args.head, args.out, vocab, layer=args.layer)
    _echo_args(csv_path.parent, args, csv_path.stem + ".config.json")
    print(csv_path)
    print(svg_path)
    return 0


def cmd_gen_data(args):
    if args.task == "xor":
        examples = data_mod.gen_xor_template(args.n, seed=args.seed)
    else:
        examples = data_mod.TASKS[args.task](args.n, args.max_len, args.digits, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    data_mod.save_jsonl(examples, out)
    print(f"wrote {len(examples)} examples to {out}")
    return 0


def cmd_build_vocab(args):
    examples = data_mod.load_jsonl(args.data)
    vocab = build_vocab((t for ex in examples for t in (ex.source, ex.target)), args.min_count)
    vocab.save(args.out)
    print(f"{len(vocab)} tokens written to {args.out}")
    return 0


# ----------------------------------------------------------------------------

def build_parser():
    strategies = [s.value for s in GenerationStrategy]
    p = argparse.ArgumentParser(prog="bidigen", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a JSON run config")
    t.add_argument("config")
    t.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config entry (repeatable)")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--max-steps", type=int)
    t.add_argument("--output-dir")
    t.set_defaults(func=cmd_train)

    def add_gen_opts(sp, strategy=True):
        sp.add_argument("--checkpoint", required=True)
        if strategy:
            sp.add_argument("--strategy", choices=strategies, default="left_to_right")
        sp.add_argument("--max-gen-len", type=int)

    g = sub.add_parser("generate", help="generate responses")
    add_gen_opts(g)
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--input")
    src.add_argument("--input-file")
    g.add_argument("--trace-dir")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="BLEU and classification accuracy on a dataset")
    add_gen_opts(e)
    e.add_argument("--data", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("analyze", help="attention split over input / past / future")
    add_gen_opts(a, strategy=False)
    a.add_argument("--data", required=True)
    a.add_argument("--limit", type=int, default=100)
    a.add_argument("--head", type=int, help="restrict the per-head CSV to one head")
    a.add_argument("--layer", type=int, default=-1)
    a.add_argument("--out-dir", required=True)
    a.set_defaults(func=cmd_analyze)

    h = sub.add_parser("heatmap", help="CSV + SVG heat map of one generation")
    add_gen_opts(h)
    h.add_argument("--input", required=True)
    h.add_argument("--head", type=int, required=True)
    h.add_argument("--layer", type=int, default=-1)
    h.add_argument("--out", required=True)
    h.set_defaults(func=cmd_heatmap)

    d = sub.add_parser("gen-data", help="write a synthetic task as JSONL")
    d.add_argument("task", choices=sorted(data_mod.TASKS))
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--max-len", type=int, default=8)
    d.add_argument("--digits", type=int, default=10)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_gen_data)

    v = sub.add_parser("build-vocab", help="build a vocabulary file from a JSONL dataset")
    v.add_argument("--data", required=True)
    v.add_argument("--min-count", type=int, default=1)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_build_vocab)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"bidigen: error: {exc}", file=sys.stderr)
        return 2
    except (BidigenError, OSError) as exc:
        print(f"bidigen: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
