"""Command-line entry point wiring every pipeline step into reproducible runs.

One subcommand per step: build-corpus, train-tokenizer, build-interlinear,
build-sft, train (stages 1-3), ablate-direct-sft, evaluate, demo-synthetic.
All knobs live in a JSON config overridable with ``--set key.path=value``;
each run writes its artifacts plus a manifest into the output directory, and
a lock file keeps two runs from writing to the same directory at once.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

from . import corpus as _corpus
from . import evaluation as _evaluation
from . import interlinear as _interlinear
from . import model as _model
from . import pipeline as _pipeline
from . import synthetic as _synthetic
from .instruction import (
    InstructionMode,
    build_sft_dataset,
    load_sft_jsonl,
    load_templates,
    render_prompt,
    write_sft_jsonl,
)
from .lora import LoraConfig
from .pipeline import TrainHyper, _sha256_file
from .tokenizer import Tokenizer, train_bpe

LOCK_FILE = ".translm.lock"

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "out_dir": "runs",
    "langs": {"src": "en", "tgt": "zh"},
    "paths": {
        "corpus": None,
        "pairs": None,
        "mono": None,
        "dev": None,
        "test": None,
        "tokenizer": None,
        "base_checkpoint": None,
        "interlinear": None,
        "sft": None,
        "templates": None,
    },
    "corpus": {
        "format": "tsv",
        "max_len_ratio": _corpus.DEFAULT_MAX_LEN_RATIO,
        "max_tokens_per_side": _corpus.DEFAULT_MAX_TOKENS_PER_SIDE,
        "dev_fraction": 0.0,
        "test_fraction": 0.0,
    },
    "tokenizer": {"vocab_size": 1024},
    "interlinear": {"max_tokens": 320, "both_directions": True},
    "instruction": {"mode": "source_consistent", "fixed_literal": False},
    "model": {
        "n_layers": 2,
        "d_model": 64,
        "n_heads": 4,
        "d_ff": 256,
        "vocab_size": 1024,
        "max_seq_len": 384,
    },
    "stage1": {
        "epochs": 2, "lr": 1e-3, "batch_size": 16, "seq_len": 256, "weight_decay": 0.0,
        "lora": {"rank": 64, "alpha": 64.0, "targets": ["wq", "wk", "wv", "wo"]},
    },
    "stage2": {
        "epochs": _pipeline.DEFAULT_STAGE2_EPOCHS, "lr": 3e-4, "batch_size": 16,
        "seq_len": 322, "weight_decay": 0.0,
        "lora": {"rank": 64, "alpha": 64.0, "targets": ["wq", "wk", "wv", "wo"]},
    },
    "stage3": {
        "epochs": _pipeline.DEFAULT_STAGE3_EPOCHS, "lr": 3e-4, "batch_size": 16,
        "seq_len": 256, "weight_decay": 0.0,
        "lora": {"rank": 16, "alpha": 32.0, "targets": ["wq", "wk", "wv", "wo"]},
    },
    "evaluate": {"mode": "instruction", "n": 5, "max_new": 48, "smooth": False},
    "ablation": {"multipliers": [1, 4, 16], "max_new": 48, "smooth": True},
    "demo": {},
}


class CliError(Exception):
    """Fatal; its message becomes the single stderr error line."""


def _deep_merge(base: dict, override: dict, prefix: str = "") -> list[str]:
    """Overlay ``override`` onto ``base`` in place; unknown keys are problems."""
    problems = []
    for key, value in override.items():
        where = f"{prefix}{key}"
        if key not in base:
            problems.append(f"unknown config key {where!r}")
            continue
        if isinstance(base[key], dict) and isinstance(value, dict):
            problems.extend(_deep_merge(base[key], value, prefix=where + "."))
        else:
            base[key] = value
    return problems


def _parse_set(expr: str) -> tuple[list[str], object]:
    if "=" not in expr:
        raise CliError(f"--set expects key.path=value, got {expr!r}")
    key, raw = expr.split("=", 1)
    keys = [k for k in key.strip().split(".") if k]
    if not keys:
        raise CliError(f"--set expects key.path=value, got {expr!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return keys, value


class RunConfig:
    """Resolved configuration: defaults, then the config file, then --set."""

    def __init__(self, data: dict, source: str | None = None):
        self.data = data
        self.source = source

    @classmethod
    def load(cls, path: str | None, sets: list[str]) -> "RunConfig":
        data = copy.deepcopy(DEFAULT_CONFIG)
        problems = []
        if path is not None:
            try:
                with open(path, encoding="utf-8") as fh:
                    file_cfg = json.load(fh)
            except FileNotFoundError:
                raise CliError(f"config file not found: {path}") from None
            except json.JSONDecodeError as exc:
                raise CliError(f"config file {path} is not valid JSON: {exc}") from None
            if not isinstance(file_cfg, dict):
                raise CliError(f"config file {path} must hold a JSON object")
            problems.extend(_deep_merge(data, file_cfg))
        for expr in sets:
            keys, value = _parse_set(expr)
            node = data
            for k in keys[:-1]:
                if not isinstance(node.get(k), dict):
                    problems.append(f"--set {expr!r}: no config section {'.'.join(keys[:-1])!r}")
                    node = None
                    break
                node = node[k]
            if node is None:
                continue
            if keys[-1] not in node:
                problems.append(f"--set {expr!r}: unknown config key {'.'.join(keys)!r}")
            else:
                node[keys[-1]] = value
        if problems:
            raise CliError("config: " + "; ".join(problems))
        return cls(data, source=path)

    def get(self, *keys, default=None):
        node = self.data
        for k in keys:
            if not isinstance(node, dict) or k not in node:
                return default
            node = node[k]
        return node

    def path(self, name: str) -> Path | None:
        value = self.get("paths", name)
        return Path(value) if value else None

    def require_paths(self, *names: str) -> list[Path]:
        """All named paths, after validating every one of them at once."""
        problems = []
        resolved = []
        for name in names:
            p = self.path(name)
            if p is None:
                problems.append(f"paths.{name} is not set")
            elif not p.exists():
                problems.append(f"paths.{name}: no such file or directory: {p}")
            resolved.append(p)
        if problems:
            raise CliError("config: " + "; ".join(problems))
        return resolved

    def as_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")


@contextmanager
def _output_lock(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / LOCK_FILE
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        holder = lock.read_text(encoding="utf-8").strip() or "unknown"
        raise CliError(
            f"output dir {out_dir} is locked by pid {holder}; remove {lock} if stale"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _write_manifest(out_dir: Path, name: str, payload: dict) -> Path:
    path = out_dir / f"{name}.manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _hyper_from(cfg: RunConfig, stage: str) -> TrainHyper:
    block = cfg.get(stage, default={})
    lora_block = block.get("lora", {})
    lora = LoraConfig(
        rank=lora_block.get("rank", 8),
        alpha=lora_block.get("alpha", 16.0),
        targets=tuple(lora_block.get("targets", ("wq", "wk", "wv", "wo"))),
        seed=lora_block.get("seed", cfg.get("seed", default=0)),
    )
    return TrainHyper(
        epochs=block.get("epochs", 1),
        lr=block.get("lr", 3e-4),
        batch_size=block.get("batch_size", 16),
        seq_len=block.get("seq_len", 256),
        seed=block.get("seed", cfg.get("seed", default=0)),
        weight_decay=block.get("weight_decay", 0.0),
        lora=lora,
    )


def _instruction_mode(cfg: RunConfig) -> InstructionMode:
    raw = cfg.get("instruction", "mode", default="source_consistent")
    try:
        return InstructionMode(raw)
    except ValueError:
        valid = ", ".join(m.value for m in InstructionMode)
        raise CliError(f"instruction.mode must be one of {valid}, got {raw!r}") from None


def _templates_from(cfg: RunConfig):
    path = cfg.path("templates")
    if path is None:
        return None
    if not path.exists():
        raise CliError(f"config: paths.templates: no such file: {path}")
    return load_templates(path)


def _load_pairs(path: Path, cfg: RunConfig) -> list[_corpus.SentencePair]:
    src = cfg.get("langs", "src", default="en")
    tgt = cfg.get("langs", "tgt", default="zh")
    fmt = "tsv" if path.suffix == ".tsv" else "jsonl"
    pairs = _corpus.ingest(path, fmt, src, tgt)
    if not pairs:
        raise CliError(f"no sentence pairs in {path}")
    return pairs


# ---------------------------------------------------------------------------
# subcommands

def cmd_build_corpus(cfg: RunConfig, args, out: Path) -> int:
    (raw_path,) = cfg.require_paths("corpus")
    block = cfg.get("corpus", default={})
    rejects: list[_corpus.RejectRecord] = []
    pairs = _corpus.ingest(
        raw_path, block.get("format", "tsv"),
        cfg.get("langs", "src", default="en"), cfg.get("langs", "tgt", default="zh"),
        rejects=rejects,
    )
    cleaned = _corpus.clean(
        pairs,
        max_len_ratio=block.get("max_len_ratio", _corpus.DEFAULT_MAX_LEN_RATIO),
        max_tokens_per_side=block.get("max_tokens_per_side", _corpus.DEFAULT_MAX_TOKENS_PER_SIDE),
    )
    if not cleaned:
        raise CliError(f"all {len(pairs)} ingested pairs were dropped by cleaning")
    dev_f, test_f = block.get("dev_fraction", 0.0), block.get("test_fraction", 0.0)
    outputs = {}
    if dev_f or test_f:
        train, dev, test = _corpus.split(cleaned, dev_f, test_f, cfg.get("seed", default=0))
        for name, subset in (("train", train), ("dev", dev), ("test", test)):
            p = out / f"{name}.jsonl"
            _corpus.write_pairs_jsonl(subset, p)
            outputs[name] = {"path": str(p), "pairs": len(subset), "sha256": _sha256_file(p)}
    else:
        p = out / "pairs.jsonl"
        _corpus.write_pairs_jsonl(cleaned, p)
        outputs["pairs"] = {"path": str(p), "pairs": len(cleaned), "sha256": _sha256_file(p)}
    rej_path = out / "rejects.jsonl"
    _corpus.write_rejects_report(rejects, rej_path)
    _write_manifest(out, "build-corpus", {
        "subcommand": "build-corpus",
        "input": {"path": str(raw_path), "sha256": _sha256_file(raw_path)},
        "ingested": len(pairs),
        "kept": len(cleaned),
        "rejected_rows": len(rejects),
        "outputs": outputs,
        "config": cfg.as_dict(),
    })
    print(f"kept {len(cleaned)}/{len(pairs)} pairs ({len(rejects)} malformed rows) -> {out}")
    return 0


def cmd_train_tokenizer(cfg: RunConfig, args, out: Path) -> int:
    problems = []
    texts: list[str] = []
    inputs = []
    for name in ("pairs", "mono"):
        p = cfg.path(name)
        if p is None:
            continue
        if not p.exists():
            problems.append(f"paths.{name}: no such file: {p}")
            continue
        inputs.append({"path": str(p), "sha256": _sha256_file(p)})
        if name == "pairs":
            for pair in _load_pairs(p, cfg):
                texts.append(pair.source_text)
                texts.append(pair.target_text)
        else:
            raw = p.read_text(encoding="utf-8")
            texts.extend(part for part in raw.split("\n\n") if part.strip())
    if problems:
        raise CliError("config: " + "; ".join(problems))
    if not texts:
        raise CliError("config: set paths.pairs and/or paths.mono to tokenizer training text")
    vocab_size = cfg.get("tokenizer", "vocab_size", default=1024)
    t0 = time.perf_counter()
    tokenizer = train_bpe(texts, vocab_size)
    tok_path = out / "tokenizer.json"
    tokenizer.save(tok_path)
    _write_manifest(out, "train-tokenizer", {
        "subcommand": "train-tokenizer",
        "inputs": inputs,
        "vocab_size": vocab_size,
        "output": {"path": str(tok_path), "sha256": _sha256_file(tok_path)},
        "wall_time_s": time.perf_counter() - t0,
        "config": cfg.as_dict(),
    })
    print(f"tokenizer: vocab {vocab_size} from {len(texts)} texts -> {tok_path}")
    return 0


def cmd_build_interlinear(cfg: RunConfig, args, out: Path) -> int:
    pairs_path, tok_path = cfg.require_paths("pairs", "tokenizer")
    tokenizer = Tokenizer.load(tok_path)
    pairs = _load_pairs(pairs_path, cfg)
    if cfg.get("interlinear", "both_directions", default=True):
        pairs = _interlinear.expand_directions(pairs)
    max_tokens = cfg.get("interlinear", "max_tokens", default=320)
    packed = _interlinear.pack_documents(
        pairs, max_tokens=max_tokens, tokenizer=tokenizer, seed=cfg.get("seed", default=0)
    )
    docs_path = out / "interlinear.jsonl"
    _interlinear.serialize(packed.documents, docs_path)
    n_blocks = sum(len(d.blocks) for d in packed.documents)
    _write_manifest(out, "build-interlinear", {
        "subcommand": "build-interlinear",
        "input": {"path": str(pairs_path), "sha256": _sha256_file(pairs_path)},
        "max_tokens": max_tokens,
        "documents": len(packed.documents),
        "blocks_packed": n_blocks,
        "blocks_dropped": len(packed.dropped),
        "output": {"path": str(docs_path), "sha256": _sha256_file(docs_path)},
        "config": cfg.as_dict(),
    })
    print(f"packed {n_blocks} blocks into {len(packed.documents)} documents "
          f"({len(packed.dropped)} dropped) -> {docs_path}")
    return 0


def cmd_build_sft(cfg: RunConfig, args, out: Path) -> int:
    (pairs_path,) = cfg.require_paths("pairs")
    pairs = _load_pairs(pairs_path, cfg)
    mode = _instruction_mode(cfg)
    records = build_sft_dataset(
        pairs, mode,
        templates=_templates_from(cfg),
        fixed_literal=cfg.get("instruction", "fixed_literal", default=False),
    )
    sft_path = out / "sft.jsonl"
    write_sft_jsonl(records, sft_path)
    _write_manifest(out, "build-sft", {
        "subcommand": "build-sft",
        "input": {"path": str(pairs_path), "sha256": _sha256_file(pairs_path)},
        "instruction_mode": mode.value,
        "records": len(records),
        "output": {"path": str(sft_path), "sha256": _sha256_file(sft_path)},
        "config": cfg.as_dict(),
    })
    print(f"{len(records)} instruction records ({mode.value}) -> {sft_path}")
    return 0


def cmd_train(cfg: RunConfig, args, out: Path) -> int:
    stage = args.stage
    hyper = _hyper_from(cfg, f"stage{stage}")
    (tok_path,) = cfg.require_paths("tokenizer")
    tokenizer = Tokenizer.load(tok_path)

    base_path = cfg.path("base_checkpoint")
    if base_path is not None and not base_path.exists():
        raise CliError(f"config: paths.base_checkpoint: no such directory: {base_path}")
    if base_path is not None:
        base = str(base_path)
    elif stage == 1:
        mb = cfg.get("model", default={})
        base = _model.init(_model.ModelConfig(
            n_layers=mb.get("n_layers", 2), d_model=mb.get("d_model", 64),
            n_heads=mb.get("n_heads", 4), d_ff=mb.get("d_ff", 256),
            vocab_size=mb.get("vocab_size", tokenizer.vocab_size),
            max_seq_len=mb.get("max_seq_len", 384), init_seed=cfg.get("seed", default=0),
        ))
    else:
        raise CliError(f"config: stage {stage} needs paths.base_checkpoint")

    run_name = args.run_name or f"stage{stage}"
    common = dict(out_dir=out, run_name=run_name, resume_from=args.resume_from,
                  stop_after_steps=args.stop_after_steps)
    if stage == 1:
        (mono_path,) = cfg.require_paths("mono")
        result = _pipeline.run_stage1(base, str(mono_path), hyper, tokenizer, **common)
    elif stage == 2:
        (docs_path,) = cfg.require_paths("interlinear")
        result = _pipeline.run_stage2(base, str(docs_path), hyper, tokenizer, **common)
    else:
        (sft_path,) = cfg.require_paths("sft")
        result = _pipeline.run_stage3(base, str(sft_path), hyper, tokenizer,
                                      mode=_instruction_mode(cfg), **common)
    curve = result.manifest.loss_curve
    print(f"stage{stage}: {len(curve)} steps, final loss {curve[-1][1]:.4f}, "
          f"checkpoint {result.checkpoint_path}")
    return 0


def cmd_ablate_direct_sft(cfg: RunConfig, args, out: Path) -> int:
    base_path, sft_path, pairs_path, test_path, tok_path = cfg.require_paths(
        "base_checkpoint", "sft", "pairs", "test", "tokenizer"
    )
    tokenizer = Tokenizer.load(tok_path)
    sft_records = load_sft_jsonl(sft_path)
    pool = _load_pairs(pairs_path, cfg)
    test_pairs = _load_pairs(test_path, cfg)
    block = cfg.get("ablation", default={})
    multipliers = block.get("multipliers", [1, 4, 16])
    sizes = [m * len(sft_records) for m in multipliers]
    hyper = _hyper_from(cfg, "stage3")
    report = _pipeline.run_ablation_direct_sft(
        str(base_path), sft_records, pool, sizes, hyper, tokenizer, test_pairs,
        mode=_instruction_mode(cfg), templates=_templates_from(cfg),
        max_new=block.get("max_new", 48), smooth_bleu=block.get("smooth", True),
        out_dir=out, run_name=args.run_name or "ablation",
    )
    print(report.format_table())
    return 0


def _oracle_generate_fn(testset, mode):
    """Reference-echoing stub: rebuilds the evaluator's prompts and answers
    each with its reference translation. Scores BLEU 100 by construction."""
    table = {}
    for direction in sorted({p.direction for p in testset}):
        pairs = [p for p in testset if p.direction == direction]
        if isinstance(mode, _evaluation.NShotEval):
            pool = [d for d in mode.dev_pairs if d.direction == direction]
            exemplars = _corpus.sample_seeded(pool, mode.n, mode.seed)
            for p in pairs:
                prompt = _evaluation.build_nshot_prompt(exemplars, p, mode.n).rendered
                table[prompt] = p.target_text
        else:
            records = build_sft_dataset(pairs, mode.mode, templates=mode.templates,
                                        fixed_literal=mode.fixed_literal)
            for record, p in zip(records, pairs):
                table[render_prompt(record)] = p.target_text

    def gen(prompts: list[str]) -> list[str]:
        return [prompt + table[prompt] + "\n" for prompt in prompts]

    return gen


def cmd_evaluate(cfg: RunConfig, args, out: Path) -> int:
    (test_path,) = cfg.require_paths("test")
    testset = _load_pairs(test_path, cfg)
    block = cfg.get("evaluate", default={})
    smooth = block.get("smooth", False)
    if args.mode == "nshot":
        (dev_path,) = cfg.require_paths("dev")
        dev_pairs = _load_pairs(dev_path, cfg)
        n = args.n if args.n is not None else block.get("n", 5)
        mode = _evaluation.NShotEval(n=n, dev_pairs=tuple(dev_pairs),
                                     seed=cfg.get("seed", default=0), smooth=smooth)
    else:
        mode = _evaluation.InstructionEval(
            mode=_instruction_mode(cfg), templates=_templates_from(cfg),
            fixed_literal=cfg.get("instruction", "fixed_literal", default=False),
            smooth=smooth,
        )
    if args.oracle_stub:
        gen = _oracle_generate_fn(testset, mode)
    else:
        ckpt_path, tok_path = cfg.require_paths("base_checkpoint", "tokenizer")
        tokenizer = Tokenizer.load(tok_path)
        params = _model.load_checkpoint(ckpt_path).params
        gen = _evaluation.model_generate_fn(params, tokenizer, max_new=block.get("max_new", 48))
    reports = _evaluation.evaluate(gen, testset, mode)
    report_path = out / "evaluation.json"
    report_path.write_text(_evaluation.reports_to_json(reports), encoding="utf-8")
    _write_manifest(out, "evaluate", {
        "subcommand": "evaluate",
        "mode": args.mode,
        "oracle_stub": bool(args.oracle_stub),
        "input": {"path": str(test_path), "sha256": _sha256_file(test_path)},
        "bleu": {r.direction: r.bleu.score for r in reports},
        "output": {"path": str(report_path)},
        "config": cfg.as_dict(),
    })
    print(_evaluation.format_report_table(reports))
    return 0


def cmd_demo_synthetic(cfg: RunConfig, args, out: Path) -> int:
    overrides = dict(cfg.get("demo", default={}) or {})
    for key in ("stage2_targets", "stage3_targets"):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    try:
        demo_cfg = (_synthetic.quick_config(**overrides) if args.quick
                    else _synthetic.DemoConfig(**overrides))
    except TypeError as exc:
        raise CliError(f"config: demo: {exc}") from None
    summary = _synthetic.run_demo(demo_cfg, out, log=lambda msg: print(msg, flush=True))
    print()
    print(_synthetic.format_demo_summary(summary))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="translm",
        description="Three-stage translation training recipe for small causal LMs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry (dotted path, JSON value)")
        p.add_argument("--out", help="output directory (default: config out_dir)")
        return p

    add("build-corpus", cmd_build_corpus, "ingest, clean, and split a parallel corpus")
    add("train-tokenizer", cmd_train_tokenizer, "train the byte-level BPE tokenizer")
    add("build-interlinear", cmd_build_interlinear, "pack pairs into interlinear documents")
    add("build-sft", cmd_build_sft, "build the instruction-tuning dataset")

    p = add("train", cmd_train, "run one training stage")
    p.add_argument("--stage", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--run-name", help="run directory name (default: stage<N>)")
    p.add_argument("--resume-from", help="training-state directory to resume")
    p.add_argument("--stop-after-steps", type=int, help="halt mid-run (for resume tests)")

    p = add("ablate-direct-sft", cmd_ablate_direct_sft,
            "scale direct SFT data in place of stage 2")
    p.add_argument("--run-name", help="run directory name (default: ablation)")

    p = add("evaluate", cmd_evaluate, "score a checkpoint (or the oracle stub)")
    p.add_argument("--mode", choices=("nshot", "instruction"), default=None)
    p.add_argument("--n", type=int, help="exemplar count for nshot mode")
    p.add_argument("--oracle-stub", action="store_true",
                   help="score reference-echoing outputs instead of a model")

    p = add("demo-synthetic", cmd_demo_synthetic,
            "build the synthetic cipher pair and run the full recipe")
    p.add_argument("--quick", action="store_true", help="small fast variant")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = RunConfig.load(args.config, args.set)
        if getattr(args, "mode", None) is None and args.command == "evaluate":
            args.mode = cfg.get("evaluate", "mode", default="instruction")
            if args.mode not in ("nshot", "instruction"):
                raise CliError(f"evaluate.mode must be nshot or instruction, got {args.mode!r}")
        out = Path(args.out) if args.out else Path(cfg.get("out_dir", default="runs"))
        with _output_lock(out):
            return args.func(cfg, args, out)
    except CliError as exc:
        print(f"translm: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as exc:
        message = " ".join(str(exc).split())
        print(f"translm: error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
