"""Built-in synthetic language pair for end-to-end demonstrations.

"Xenese" is a cipher of a tiny templated English: roughly a hundred lowercase
words, sentences of four to ten words ending in ".", and a seeded word-level
bijection English <-> Xenese that preserves word order. Translating is
exactly learning the word mapping, so a small model shows the same trend the
recipe targets at scale: bilingual continual pre-training plus instruction
tuning beats instruction tuning alone.

The demo builds the world, trains a tokenizer, pretrains a base model on both
monolingual sides (full-parameter; the recipe proper starts from an already
pretrained checkpoint), then runs stage 2, stage 3, and the stage-3-only
baseline, and scores everything with BLEU.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import corpus as _corpus
from . import evaluation as _evaluation
from . import interlinear as _interlinear
from . import model as _model
from . import pipeline as _pipeline
from .instruction import InstructionMode, build_sft_dataset, load_templates, write_sft_jsonl
from .langs import register_language
from .lora import LoraConfig
from .tokenizer import BOS_ID, EOS_ID, Tokenizer, train_bpe

register_language("xx", "Xenese", "Xenese")

# 100 words across seven classes
_WORD_CLASSES: dict[str, list[str]] = {
    "det": ["the", "a", "one", "this", "that"],
    "noun": [
        "cat", "dog", "bird", "fish", "horse", "mouse", "wolf", "bear",
        "house", "garden", "river", "forest", "road", "field",
        "teacher", "farmer", "child", "doctor", "apple", "stone",
        "king", "boat", "tree", "mountain", "bridge", "market",
        "song", "letter", "cloud", "winter", "baker", "lamp",
    ],
    "verb": [
        "sees", "finds", "likes", "carries", "follows", "watches", "holds", "builds",
        "opens", "breaks", "moves", "takes", "reads", "hears",
        "keeps", "paints", "lifts", "counts", "cleans", "guards", "crosses", "visits",
    ],
    "adj": [
        "big", "small", "old", "young", "red", "green", "dark", "quiet", "loud", "soft",
        "blue", "tall", "warm", "cold", "bright", "heavy",
    ],
    "adv": [
        "quickly", "slowly", "quietly", "loudly", "carefully", "gladly", "rarely", "often",
        "boldly", "calmly", "gently", "warmly", "seldom",
    ],
    "prep": ["in", "on", "under", "near", "behind", "beside", "through", "across", "above", "below"],
    "conj": ["and", "or"],
}

END_MARK = "."

# every template is exactly five words so all sentences share one token
# length; a word on the target line then always sits at a fixed offset from
# its source word, which a small model with learned positions can exploit
_TEMPLATES: tuple[tuple[str, ...], ...] = (
    ("det", "noun", "verb", "det", "noun"),
    ("det", "adj", "noun", "verb", "adv"),
    ("det", "noun", "verb", "prep", "noun"),
    ("noun", "conj", "noun", "verb", "adv"),
    ("det", "noun", "adv", "verb", "noun"),
    ("adj", "noun", "verb", "det", "noun"),
    ("noun", "verb", "adv", "prep", "noun"),
    ("det", "noun", "verb", "adj", "noun"),
    ("noun", "prep", "noun", "verb", "adv"),
    ("det", "adj", "noun", "verb", "noun"),
)

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def english_vocabulary() -> list[str]:
    words: list[str] = []
    for cls in sorted(_WORD_CLASSES):
        words.extend(_WORD_CLASSES[cls])
    return words


def _pseudoword(rng: random.Random) -> str:
    n_syll = rng.choice((2, 2, 3))
    out = []
    for _ in range(n_syll):
        out.append(rng.choice(_CONSONANTS))
        out.append(rng.choice(_VOWELS))
    if rng.random() < 0.3:
        out.append(rng.choice(_CONSONANTS))
    return "".join(out)


def build_word_map(seed: int) -> dict[str, str]:
    """Seeded bijection English word -> Xenese pseudoword; '.' maps to itself."""
    rng = random.Random(seed)
    english = english_vocabulary()
    taken = set(english)
    mapping: dict[str, str] = {}
    for word in english:
        while True:
            xx = _pseudoword(rng)
            if xx not in taken:
                break
        taken.add(xx)
        mapping[word] = xx
    mapping[END_MARK] = END_MARK
    return mapping


def _generate_sentences(count: int, rng: random.Random) -> list[list[str]]:
    seen: set[tuple[str, ...]] = set()
    out: list[list[str]] = []
    # cap attempts so an impossible request fails loudly instead of spinning
    attempts = 0
    limit = count * 200
    while len(out) < count:
        attempts += 1
        if attempts > limit:
            raise ValueError(f"could not generate {count} unique sentences (got {len(out)})")
        template = rng.choice(_TEMPLATES)
        words = [rng.choice(_WORD_CLASSES[cls]) for cls in template]
        words.append(END_MARK)
        key = tuple(words)
        if key in seen:
            continue
        seen.add(key)
        out.append(words)
    return out


def translate_words(words: list[str], word_map: dict[str, str]) -> list[str]:
    return [word_map[w] for w in words]


@dataclass
class SyntheticWorld:
    word_map: dict[str, str]
    train: list[_corpus.SentencePair]
    dev: list[_corpus.SentencePair]
    test: list[_corpus.SentencePair]
    sft: list[_corpus.SentencePair]
    dictionary: list[_corpus.SentencePair]
    mono_en: list[str]
    mono_xx: list[str]
    seed: int


def build_world(
    n_train: int = 5000,
    n_dev: int = 200,
    n_test: int = 500,
    n_sft: int = 160,
    seed: int = 0,
    lines_per_doc: int = 8,
) -> SyntheticWorld:
    """Disjoint train/dev/test/SFT pairs plus monolingual document corpora.

    The monolingual corpora are the two sides of the training pairs, packed
    into multi-line documents, so stage 2's only new information relative to
    base pretraining is the cross-lingual alignment itself.
    """
    rng = random.Random(seed)
    word_map = build_word_map(seed)
    total = n_train + n_dev + n_test + n_sft
    sentences = _generate_sentences(total, rng)

    pairs = []
    for i, words in enumerate(sentences):
        en_text = " ".join(words)
        xx_text = " ".join(translate_words(words, word_map))
        pairs.append(_corpus.SentencePair(f"syn:{i}", "en", "xx", en_text, xx_text))

    train = pairs[:n_train]
    dev = pairs[n_train : n_train + n_dev]
    test = pairs[n_train + n_dev : n_train + n_dev + n_test]
    sft = pairs[n_train + n_dev + n_test :]

    def as_docs(lines: list[str]) -> list[str]:
        return ["\n".join(lines[i : i + lines_per_doc]) for i in range(0, len(lines), lines_per_doc)]

    def echo_docs(lines: list[str]) -> list[str]:
        # documents that repeat one line over and over; pretraining on these
        # builds the in-context copy circuit that a large pretrained model
        # would already have, which later stages retarget into translation
        return ["\n".join([line] * lines_per_doc) for line in lines]

    def lexicon_docs(words: list[str]) -> list[str]:
        # one-word sentences give the language model direct exposure to every
        # vocabulary item, including ones rare in the sampled templates
        lines = [f"{w} {END_MARK}" for w in words for _ in range(2)]
        rng.shuffle(lines)
        return as_docs(lines)

    en_words = english_vocabulary()
    xx_words = [word_map[w] for w in en_words]
    # one echo document per plain document keeps the two kinds balanced
    n_echo = max(1, (n_train + lines_per_doc - 1) // lines_per_doc)
    mono_en = (
        as_docs([p.source_text for p in train])
        + echo_docs([p.source_text for p in train[:n_echo]])
        + lexicon_docs(en_words)
    )
    mono_xx = (
        as_docs([p.target_text for p in train])
        + echo_docs([p.target_text for p in train[:n_echo]])
        + lexicon_docs(xx_words)
    )
    # the same one-word sentences as aligned pairs: a bilingual dictionary
    # that supervises the token mapping directly during stage 2
    dictionary = [
        _corpus.SentencePair(f"dict:{i}", "en", "xx", f"{w} {END_MARK}", f"{word_map[w]} {END_MARK}")
        for i, w in enumerate(en_words)
    ]
    return SyntheticWorld(word_map, train, dev, test, sft, dictionary, mono_en, mono_xx, seed)


TEMPLATE_OVERRIDES = {
    "source_consistent": {
        "en-xx": "Translate this sentence from English to Xenese:",
        "xx-en": "Tuvasi nekor patilo Xenese medu English:",
    },
    "english_fixed": {
        "en-xx": "Translate this sentence from English to Xenese:",
        "xx-en": "Translate this sentence from Xenese to English:",
    },
}


def write_template_overrides(path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(TEMPLATE_OVERRIDES, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def pretrain_base(
    params: _model.ParamSet,
    texts: list[str],
    tokenizer: Tokenizer,
    epochs: int,
    lr: float,
    batch_size: int = 16,
    seed: int = 0,
    weight_decay: float = 0.01,
    log=None,
) -> list[tuple[int, float]]:
    """Full-parameter causal LM pretraining, in place. Returns the loss curve.

    This stands in for the externally pretrained checkpoint the recipe
    assumes; the three stages themselves always train adapters.
    """
    sequences = [[BOS_ID] + tokenizer.encode(t) + [EOS_ID] for t in texts]
    for i, s in enumerate(sequences):
        if len(s) > params.config.max_seq_len:
            raise ValueError(f"document {i} has {len(s)} tokens > max_seq_len {params.config.max_seq_len}")
    masks = [[1.0] * len(s) for s in sequences]
    batches = _pipeline._bucket_batches([len(s) for s in sequences], batch_size)
    optimizer = _model.AdamWState(params.tensors)
    curve: list[tuple[int, float]] = []
    step = 0
    for epoch in range(epochs):
        order = np.random.default_rng([seed, epoch]).permutation(len(batches))
        for pos in order:
            inputs, targets, loss_mask, _ = _pipeline._pad_batch(batches[pos], sequences, masks)
            loss, grads = _model.grad(params, inputs, targets, loss_mask)
            _model.step_adamw(params.tensors, grads, optimizer, lr=lr, weight_decay=weight_decay)
            step += 1
            curve.append((step, loss))
        if log:
            recent = [l for _, l in curve[-len(batches) :]]
            log(f"  pretrain epoch {epoch + 1}/{epochs}: mean loss {sum(recent) / len(recent):.4f}")
    return curve


@dataclass(frozen=True)
class DemoConfig:
    """Everything the synthetic demo needs; one seed drives the whole run."""

    n_train: int = 3000
    n_dev: int = 200
    n_test: int = 300
    n_sft: int = 160
    seed: int = 0
    vocab_size: int = 896
    # long documents so positional embeddings are trained out to the lengths
    # a 5-shot prompt actually reaches
    lines_per_doc: int = 18
    pack_max_tokens: int = 320

    n_layers: int = 2
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 256
    max_seq_len: int = 384

    pretrain_epochs: int = 20
    pretrain_lr: float = 8e-3
    pretrain_batch: int = 16

    stage2_epochs: int = 10
    stage2_lr: float = 8e-3
    stage2_rank: int = 64
    stage2_alpha: float = 64.0
    stage2_targets: tuple[str, ...] = ("wq", "wk", "wv", "wo", "w1", "w2", "head", "tok_emb")

    stage3_epochs: int = 6
    stage3_lr: float = 6e-3
    stage3_rank: int = 16
    stage3_alpha: float = 32.0
    stage3_targets: tuple[str, ...] = ("wq", "wk", "wv", "wo", "w1", "w2", "head")

    dictionary_reps: int = 4

    batch_size: int = 16
    nshot_n: int = 5
    nshot_segments: int = 150
    max_new: int = 24
    smooth_bleu: bool = False

    def as_dict(self) -> dict:
        d = asdict(self)
        d["stage2_targets"] = list(self.stage2_targets)
        d["stage3_targets"] = list(self.stage3_targets)
        return d


def quick_config(**overrides) -> DemoConfig:
    """Small variant of the demo for smoke tests and reproducibility checks."""
    base = DemoConfig(
        n_train=800,
        n_dev=64,
        n_test=120,
        n_sft=48,
        vocab_size=1280,
        pretrain_epochs=3,
        nshot_segments=40,
    )
    return replace(base, **overrides)


def run_demo(cfg: DemoConfig, out_dir: str | Path, log=None) -> dict:
    """The full synthetic pipeline; returns (and writes) the demo manifest."""

    def say(msg: str) -> None:
        if log:
            log(msg)

    t_start = time.perf_counter()
    timings: dict[str, float] = {}
    out = Path(out_dir)
    data_dir = out / "data"
    runs_dir = out / "runs"
    data_dir.mkdir(parents=True, exist_ok=True)

    # 1. world
    t0 = time.perf_counter()
    world = build_world(cfg.n_train, cfg.n_dev, cfg.n_test, cfg.n_sft, seed=cfg.seed, lines_per_doc=cfg.lines_per_doc)
    _corpus.write_pairs_jsonl(world.train, data_dir / "train.jsonl")
    _corpus.write_pairs_jsonl(world.dev, data_dir / "dev.jsonl")
    _corpus.write_pairs_jsonl(world.test, data_dir / "test.jsonl")
    (data_dir / "mono_en.txt").write_text("\n\n".join(world.mono_en) + "\n", encoding="utf-8")
    (data_dir / "mono_xx.txt").write_text("\n\n".join(world.mono_xx) + "\n", encoding="utf-8")
    templates_path = write_template_overrides(data_dir / "templates_override.json")
    templates = load_templates(templates_path)
    timings["world"] = time.perf_counter() - t0
    say(f"world: {len(world.train)} train / {len(world.dev)} dev / {len(world.test)} test / {len(world.sft)} sft pairs")

    # 2. tokeniser: trained on the lexicon alone, one word per document, so
    #    merges never cross a word boundary.  Every vocabulary word becomes a
    #    single token while spaces, periods, colons and newlines stay bare
    #    bytes; prompts therefore tokenize exactly as the same text does
    #    inside training documents, including the "<Label>: " generation cue.
    t0 = time.perf_counter()
    lexicon = english_vocabulary()
    lexicon = lexicon + [world.word_map[w] for w in lexicon]
    (data_dir / "lexicon.txt").write_text("\n".join(lexicon) + "\n", encoding="utf-8")
    tokenizer = train_bpe([w for w in lexicon for _ in range(2)], cfg.vocab_size)
    fragmented = [w for w in lexicon if len(tokenizer.encode(w)) != 1]
    if fragmented:
        raise ValueError(
            f"vocab_size={cfg.vocab_size} leaves {len(fragmented)} lexicon words "
            f"split across tokens (e.g. {fragmented[:3]}); raise vocab_size"
        )
    tokenizer.save(out / "tokenizer.json")
    timings["tokenizer"] = time.perf_counter() - t0
    say(f"tokenizer: vocab {cfg.vocab_size} trained in {timings['tokenizer']:.1f}s")

    # 3. base model: full-parameter pretraining on both monolingual corpora
    t0 = time.perf_counter()
    model_cfg = _model.ModelConfig(
        n_layers=cfg.n_layers, d_model=cfg.d_model, n_heads=cfg.n_heads, d_ff=cfg.d_ff,
        vocab_size=cfg.vocab_size, max_seq_len=cfg.max_seq_len, init_seed=cfg.seed,
    )
    base = _model.init(model_cfg)
    curve = pretrain_base(
        base, world.mono_en + world.mono_xx, tokenizer,
        epochs=cfg.pretrain_epochs, lr=cfg.pretrain_lr, batch_size=cfg.pretrain_batch, seed=cfg.seed, log=log,
    )
    base_dir = runs_dir / "pretrain"
    _model.save_checkpoint(base_dir / "checkpoint", base, trainer_meta={"stage": "pretrain", "global_step": len(curve)})
    _pipeline.RunManifest(
        stage="pretrain",
        dataset_hashes={"monolingual": _pipeline._hash_texts(world.mono_en + world.mono_xx)},
        config={"epochs": cfg.pretrain_epochs, "lr": cfg.pretrain_lr, "batch_size": cfg.pretrain_batch, "seed": cfg.seed},
        loss_curve=curve,
        checkpoint_path=str(base_dir / "checkpoint"),
        wall_time_s=time.perf_counter() - t0,
        extra={"kind": "full-parameter pretraining"},
    ).save(base_dir)
    timings["pretrain"] = time.perf_counter() - t0
    say(f"pretrain: {len(curve)} steps, final loss {curve[-1][1]:.3f}, {timings['pretrain']:.1f}s")

    # shared evaluation pieces
    nshot_subset = _corpus.sample_seeded(world.test, min(cfg.nshot_segments, len(world.test)), cfg.seed)
    nshot_mode = _evaluation.NShotEval(n=cfg.nshot_n, dev_pairs=tuple(world.dev), seed=cfg.seed, smooth=cfg.smooth_bleu)
    instr_mode = _evaluation.InstructionEval(
        mode=InstructionMode.SOURCE_CONSISTENT, templates=templates, smooth=cfg.smooth_bleu
    )

    def nshot_bleu(params) -> float:
        gen = _evaluation.model_generate_fn(params, tokenizer, max_new=cfg.max_new)
        reports = _evaluation.evaluate(gen, nshot_subset, nshot_mode)
        return reports[0].bleu.score

    def instruction_reports(params):
        gen = _evaluation.model_generate_fn(params, tokenizer, max_new=cfg.max_new)
        return _evaluation.evaluate(gen, world.test, instr_mode)

    t0 = time.perf_counter()
    bleu_base_5shot = nshot_bleu(base)
    timings["eval_base_5shot"] = time.perf_counter() - t0
    say(f"base 5-shot BLEU: {bleu_base_5shot:.2f} ({timings['eval_base_5shot']:.1f}s)")

    # 4. stage 2: interlinear continual pre-training on both directions,
    #    sentence pairs plus repeated dictionary entries
    t0 = time.perf_counter()
    stage2_pairs = world.train + world.dictionary * cfg.dictionary_reps
    expanded = _interlinear.expand_directions(stage2_pairs)
    packed = _interlinear.pack_documents(expanded, max_tokens=cfg.pack_max_tokens, tokenizer=tokenizer, seed=cfg.seed)
    docs_path = data_dir / "interlinear.jsonl"
    _interlinear.serialize(packed.documents, docs_path)
    hyper2 = _pipeline.TrainHyper(
        epochs=cfg.stage2_epochs, lr=cfg.stage2_lr, batch_size=cfg.batch_size,
        seq_len=cfg.pack_max_tokens + 2, seed=cfg.seed,
        lora=LoraConfig(rank=cfg.stage2_rank, alpha=cfg.stage2_alpha, targets=cfg.stage2_targets, seed=cfg.seed),
    )
    r2 = _pipeline.run_stage2(base, docs_path, hyper2, tokenizer, out_dir=runs_dir, run_name="stage2")
    timings["stage2"] = time.perf_counter() - t0
    say(f"stage2: {len(packed.documents)} docs, final loss {r2.manifest.loss_curve[-1][1]:.3f}, {timings['stage2']:.1f}s")

    t0 = time.perf_counter()
    bleu_stage2_5shot = nshot_bleu(r2.params)
    timings["eval_stage2_5shot"] = time.perf_counter() - t0
    say(f"stage2 5-shot BLEU: {bleu_stage2_5shot:.2f} ({timings['eval_stage2_5shot']:.1f}s)")

    # 5. stage 3 from stage 2, and stage 3 directly from the base model
    t0 = time.perf_counter()
    sft_records = build_sft_dataset(world.sft, InstructionMode.SOURCE_CONSISTENT, templates=templates)
    sft_path = data_dir / "sft.jsonl"
    write_sft_jsonl(sft_records, sft_path)
    hyper3 = _pipeline.TrainHyper(
        epochs=cfg.stage3_epochs, lr=cfg.stage3_lr, batch_size=cfg.batch_size,
        seq_len=cfg.max_seq_len, seed=cfg.seed,
        lora=LoraConfig(rank=cfg.stage3_rank, alpha=cfg.stage3_alpha, targets=cfg.stage3_targets, seed=cfg.seed),
    )
    r23 = _pipeline.run_stage3(r2.params, sft_path, hyper3, tokenizer, out_dir=runs_dir, run_name="stage3-from-stage2")
    r3 = _pipeline.run_stage3(base, sft_path, hyper3, tokenizer, out_dir=runs_dir, run_name="stage3-only")
    timings["stage3"] = time.perf_counter() - t0
    say(f"stage3 both branches trained in {timings['stage3']:.1f}s")

    t0 = time.perf_counter()
    rep23 = instruction_reports(r23.params)
    rep3 = instruction_reports(r3.params)
    bleu_stage23 = rep23[0].bleu.score
    bleu_stage3_only = rep3[0].bleu.score
    timings["eval_instruction"] = time.perf_counter() - t0
    say(f"stage2,3 BLEU: {bleu_stage23:.2f} | stage3-only BLEU: {bleu_stage3_only:.2f} ({timings['eval_instruction']:.1f}s)")

    total = time.perf_counter() - t_start
    summary = {
        "config": cfg.as_dict(),
        "bleu": {
            "base_5shot": bleu_base_5shot,
            "stage2_5shot": bleu_stage2_5shot,
            "stage3_only": bleu_stage3_only,
            "stage2_3": bleu_stage23,
        },
        "margins": {
            "stage23_minus_stage3only": bleu_stage23 - bleu_stage3_only,
            "stage2_minus_base_5shot": bleu_stage2_5shot - bleu_base_5shot,
        },
        "paths": {
            "tokenizer": str(out / "tokenizer.json"),
            "base_checkpoint": str(base_dir / "checkpoint"),
            "stage2_checkpoint": r2.checkpoint_path,
            "stage3_from_stage2_checkpoint": r23.checkpoint_path,
            "stage3_only_checkpoint": r3.checkpoint_path,
            "interlinear": str(docs_path),
            "sft": str(sft_path),
            "templates": str(templates_path),
        },
        "flags": {
            "stage2_3_hallucinations": rep23[0].flags.get("hallucination", []),
            "stage3_only_hallucinations": rep3[0].flags.get("hallucination", []),
        },
        "timings": timings,
        "wall_time_s": total,
    }
    with open(out / "demo_manifest.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    say(f"total wall time {total:.1f}s; manifest at {out / 'demo_manifest.json'}")
    return summary


def format_demo_summary(summary: dict) -> str:
    b = summary["bleu"]
    lines = [
        "synthetic cipher demo (En=>Xx)",
        f"{'model':<28} {'BLEU':>8}",
        "-" * 37,
        f"{'base, 5-shot':<28} {b['base_5shot']:>8.2f}",
        f"{'stage2, 5-shot':<28} {b['stage2_5shot']:>8.2f}",
        f"{'stage3-only, instruction':<28} {b['stage3_only']:>8.2f}",
        f"{'stage2+3, instruction':<28} {b['stage2_3']:>8.2f}",
        "-" * 37,
        f"stage2+3 vs stage3-only: {summary['margins']['stage23_minus_stage3only']:+.2f} BLEU",
        f"stage2 vs base (5-shot): {summary['margins']['stage2_minus_base_5shot']:+.2f} BLEU",
        f"wall time: {summary['wall_time_s']:.1f}s",
    ]
    return "\n".join(lines)
