"""Corpus BLEU, n-shot prompt construction, translation extraction, and
per-direction evaluation reports.

BLEU is corpus-level BLEU-4 with clipped n-gram counts and the usual brevity
penalty, unsmoothed by default; an add-one smoothing flag exists for tiny
test sets where higher-order n-grams are sparse. Generation is abstracted
behind ``generate_fn(prompts) -> completions`` so the harness runs against
oracle stubs in tests and against batched model decoding in the pipeline.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import corpus as _corpus
from . import model as _model
from .instruction import InstructionMode, build_sft_dataset, render_prompt
from .interlinear import format_block
from .langs import LangCode, get_language, is_cjk_char

# words or single non-space punctuation marks, case preserved
_WORD_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


@dataclass(frozen=True)
class BleuScore:
    score: float
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int

    def as_dict(self) -> dict:
        return {
            "score": self.score,
            "precisions": list(self.precisions),
            "bp": self.brevity_penalty,
            "hyp_len": self.hyp_len,
            "ref_len": self.ref_len,
        }


def tokenize_for_bleu(text: str, lang: LangCode) -> list[str]:
    """Language-aware tokenization for scoring.

    Chinese: every CJK character is its own token and remaining spans are
    whitespace-split. Other languages: punctuation is separated from words,
    then tokens split on whitespace. No lowercasing anywhere.
    """
    if lang.code == "zh":
        tokens: list[str] = []
        buf: list[str] = []
        for ch in text:
            if is_cjk_char(ch):
                if buf:
                    tokens.extend("".join(buf).split())
                    buf = []
                tokens.append(ch)
            else:
                buf.append(ch)
        if buf:
            tokens.extend("".join(buf).split())
        return tokens
    return _WORD_RE.findall(text)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses: list[list[str]], references: list[list[str]], smooth: bool = False) -> BleuScore:
    """Corpus BLEU-4 over tokenized segments, one reference per hypothesis.

    With ``smooth`` set, add-one smoothing applies to orders n >= 2 only;
    unigram precision is never smoothed, so an all-miss output still scores 0.
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"hypothesis/reference count mismatch: {len(hypotheses)} vs {len(references)}")
    if not hypotheses:
        raise ValueError("empty corpus")
    hyp_len = sum(len(h) for h in hypotheses)
    ref_len = sum(len(r) for r in references)
    num = [0, 0, 0, 0]
    den = [0, 0, 0, 0]
    for hyp, ref in zip(hypotheses, references):
        for n in range(1, 5):
            hc = _ngrams(hyp, n)
            if hc:
                rc = _ngrams(ref, n)
                num[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            den[n - 1] += max(len(hyp) - n + 1, 0)

    precisions = []
    for n in range(1, 5):
        nu, de = num[n - 1], den[n - 1]
        if smooth and n >= 2:
            nu, de = nu + 1, de + 1
        precisions.append(nu / de if de > 0 else 0.0)

    if hyp_len == 0:
        bp = 0.0
    elif hyp_len >= ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / hyp_len)

    if all(p > 0 for p in precisions):
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in precisions) / 4.0)
    else:
        score = 0.0
    return BleuScore(score, tuple(precisions), bp, hyp_len, ref_len)


@dataclass(frozen=True)
class NShotPrompt:
    exemplars: tuple[_corpus.SentencePair, ...]
    query: str
    rendered: str
    source_lang: str
    target_lang: str


def build_nshot_prompt(exemplars: list[_corpus.SentencePair], query_pair: _corpus.SentencePair, n: int) -> NShotPrompt:
    """n exemplar blocks, then the query source line with the target label
    left open as the generation cue. n = 0 yields the cue-only prompt."""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if len(exemplars) < n:
        raise ValueError(f"need {n} exemplars, got {len(exemplars)}")
    chosen = tuple(exemplars[:n])
    for ex in chosen:
        if ex.direction != query_pair.direction:
            raise ValueError(f"exemplar direction {ex.direction} does not match query direction {query_pair.direction}")
    src = get_language(query_pair.source_lang)
    tgt = get_language(query_pair.target_lang)
    query_part = f"{src.display_name}: {query_pair.source_text}\n{tgt.display_name}: "
    parts = [format_block(ex) for ex in chosen]
    parts.append(query_part)
    rendered = "\n".join(parts)
    return NShotPrompt(chosen, query_pair.source_text, rendered, query_pair.source_lang, query_pair.target_lang)


def extract_translation(generated: str, prompt: str) -> str:
    """The model's answer: text after the prompt, cut at the first newline."""
    if not generated.startswith(prompt):
        raise ValueError("generated text does not begin with the prompt (generation cue not found)")
    tail = generated[len(prompt) :]
    line = tail.split("\n", 1)[0]
    return line.strip()


@dataclass(frozen=True)
class NShotEval:
    """Few-shot evaluation: exemplars are drawn (seeded) from the dev pool."""

    n: int
    dev_pairs: tuple = ()
    seed: int = 0
    smooth: bool = False


@dataclass(frozen=True)
class InstructionEval:
    """Instruction-following evaluation against an SFT-style prompt."""

    mode: InstructionMode = InstructionMode.SOURCE_CONSISTENT
    templates: dict | None = None
    fixed_literal: bool = False
    smooth: bool = False


@dataclass
class DirectionReport:
    direction: str
    n_segments: int
    bleu: BleuScore
    flags: dict = field(default_factory=dict)
    transcripts: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "direction": self.direction,
            "n_segments": self.n_segments,
            "bleu": self.bleu.as_dict(),
            "flags": self.flags,
            "transcripts": self.transcripts,
        }


# a hypothesis this much longer than its source is reported as a hallucination
HALLUCINATION_RATIO = 3.0


def evaluate(generate_fn, testset: list[_corpus.SentencePair], mode, max_transcripts: int = 3) -> list[DirectionReport]:
    """Score a test set, one report per translation direction.

    ``generate_fn`` maps a list of prompt strings to full generated texts,
    each beginning with its prompt. A perfect oracle (prompt + reference)
    scores 100; an echo stub that adds nothing scores 0.
    """
    if not testset:
        raise ValueError("empty test set")
    reports = []
    for direction in sorted({p.direction for p in testset}):
        pairs = [p for p in testset if p.direction == direction]
        if isinstance(mode, NShotEval):
            pool = [d for d in mode.dev_pairs if d.direction == direction]
            if len(pool) < mode.n:
                raise ValueError(f"direction {direction}: need {mode.n} dev exemplars, have {len(pool)}")
            exemplars = _corpus.sample_seeded(pool, mode.n, mode.seed)
            prompts = [build_nshot_prompt(exemplars, p, mode.n).rendered for p in pairs]
        elif isinstance(mode, InstructionEval):
            records = build_sft_dataset(pairs, mode.mode, templates=mode.templates, fixed_literal=mode.fixed_literal)
            prompts = [render_prompt(r) for r in records]
        else:
            raise TypeError(f"unknown evaluation mode {type(mode).__name__}")

        outputs = generate_fn(prompts)
        if len(outputs) != len(prompts):
            raise ValueError(f"generate_fn returned {len(outputs)} outputs for {len(prompts)} prompts")
        hyp_texts = [extract_translation(out, pr) for out, pr in zip(outputs, prompts)]

        src_lang = get_language(pairs[0].source_lang)
        tgt_lang = get_language(pairs[0].target_lang)
        hyp_tokens = [tokenize_for_bleu(h, tgt_lang) for h in hyp_texts]
        ref_tokens = [tokenize_for_bleu(p.target_text, tgt_lang) for p in pairs]
        score = bleu(hyp_tokens, ref_tokens, smooth=mode.smooth)

        hallucinated = [
            i
            for i, (p, h) in enumerate(zip(pairs, hyp_tokens))
            if len(h) > HALLUCINATION_RATIO * len(tokenize_for_bleu(p.source_text, src_lang))
        ]
        transcripts = [
            {"source": p.source_text, "reference": p.target_text, "hypothesis": h}
            for p, h in list(zip(pairs, hyp_texts))[:max_transcripts]
        ]
        reports.append(
            DirectionReport(
                direction=direction,
                n_segments=len(pairs),
                bleu=score,
                flags={"hallucination": hallucinated},
                transcripts=transcripts,
            )
        )
    return reports


def reports_to_json(reports: list[DirectionReport]) -> str:
    return json.dumps([r.as_dict() for r in reports], ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def format_report_table(reports: list[DirectionReport]) -> str:
    """Fixed-width summary table, one row per direction."""
    header = f"{'direction':<10} {'segs':>5} {'BLEU':>7} {'p1':>6} {'p2':>6} {'p3':>6} {'p4':>6} {'BP':>5} {'halluc':>6}"
    lines = [header, "-" * len(header)]
    for r in reports:
        b = r.bleu
        p1, p2, p3, p4 = b.precisions
        lines.append(
            f"{r.direction:<10} {r.n_segments:>5} {b.score:>7.2f} "
            f"{p1:>6.3f} {p2:>6.3f} {p3:>6.3f} {p4:>6.3f} {b.brevity_penalty:>5.3f} "
            f"{len(r.flags.get('hallucination', [])):>6}"
        )
    return "\n".join(lines)


def model_generate_fn(params: _model.ParamSet, tokenizer, max_new: int = 64, batch_size: int = 32):
    """Greedy batched decoding behind the ``generate_fn`` interface.

    Prompts are grouped by exact token length so each group decodes in
    lockstep as one batch (large matmuls, one core). A sequence is finished
    once it emits EOS or any token containing a newline; extraction cuts at
    the first newline, so later tokens in a still-running batch are harmless.
    """
    from .tokenizer import BOS_ID, EOS_ID

    cfg = params.config

    def gen(prompts: list[str]) -> list[str]:
        encoded = [[BOS_ID] + tokenizer.encode(p) for p in prompts]
        for i, ids in enumerate(encoded):
            if len(ids) + max_new > cfg.max_seq_len:
                raise ValueError(
                    f"prompt {i} needs {len(ids)} tokens + {max_new} new > max_seq_len {cfg.max_seq_len}"
                )
        outputs: list[str | None] = [None] * len(prompts)
        groups: dict[int, list[int]] = {}
        for i, ids in enumerate(encoded):
            groups.setdefault(len(ids), []).append(i)
        for length in sorted(groups):
            idxs = groups[length]
            for start in range(0, len(idxs), batch_size):
                chunk = idxs[start : start + batch_size]
                arr = np.array([encoded[i] for i in chunk], dtype=np.int64)
                nb = len(chunk)
                new_tokens: list[list[int]] = [[] for _ in range(nb)]
                done = [False] * nb
                for _ in range(max_new):
                    logits, _ = _model.forward_with_cache(params, arr)
                    nxt = np.argmax(logits[:, -1, :], axis=-1)
                    arr = np.concatenate([arr, nxt[:, None]], axis=1)
                    for b in range(nb):
                        tid = int(nxt[b])
                        if done[b]:
                            continue
                        new_tokens[b].append(tid)
                        if tid == EOS_ID or b"\n" in tokenizer.id_to_bytes[tid]:
                            done[b] = True
                    if all(done):
                        break
                for b, i in enumerate(chunk):
                    outputs[i] = prompts[i] + tokenizer.decode(new_tokens[b])
        return outputs

    return gen
