"""Small decoder-only causal LM on numpy: training with exact reverse-mode
gradients, AdamW, greedy/sampled generation, and versioned checkpoints.

Pre-norm transformer with learned positional embeddings. All compute runs in
the dtype of the parameters (float32 for training; tests use float64 for
finite-difference checks). Single-threaded and deterministic apart from BLAS
internals, which are reproducible run-to-run on one machine.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = "translm-checkpoint"
CHECKPOINT_VERSION = 1

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    d_model: int
    n_heads: int
    d_ff: int
    vocab_size: int
    max_seq_len: int
    dropout: float = 0.0
    init_seed: int = 0

    def __post_init__(self):
        if min(self.n_layers, self.d_model, self.n_heads, self.d_ff, self.vocab_size, self.max_seq_len) < 1:
            raise ValueError("all model dimensions must be positive")
        if self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")


class ParamSet:
    """Named parameter tensors plus the config that fixes their shapes."""

    def __init__(self, config: ModelConfig, tensors: dict[str, np.ndarray]):
        self.config = config
        self.tensors = tensors

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list[str]:
        return list(self.tensors)

    @property
    def dtype(self):
        return self["tok_emb"].dtype

    def copy(self) -> "ParamSet":
        return ParamSet(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "ParamSet":
        return ParamSet(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})

    def n_params(self) -> int:
        return sum(v.size for v in self.tensors.values())


def init(config: ModelConfig, dtype=np.float32) -> ParamSet:
    """Seeded initialization: scaled normal matrices, zero biases, unit norm gains."""
    rng = np.random.default_rng(config.init_seed)
    d, f, v = config.d_model, config.d_ff, config.vocab_size
    std = 0.02
    # residual-branch projections get shrunk so depth does not blow up activations
    res_std = std / math.sqrt(2.0 * config.n_layers)

    def normal(shape, scale):
        return rng.normal(0.0, scale, size=shape)

    # positions start as scaled sinusoids: a constant-offset attention pattern
    # is then a single linear map of the embedding, the same at every position,
    # instead of a fact to memorise per position. Training reshapes them freely.
    pos = np.arange(config.max_seq_len, dtype=np.float64)[:, None]
    wave = pos / (10000.0 ** (np.arange(d // 2, dtype=np.float64)[None, :] * 2.0 / d))
    pos_emb = np.empty((config.max_seq_len, d))
    pos_emb[:, 0::2] = np.sin(wave)
    pos_emb[:, 1::2] = np.cos(wave)

    tensors: dict[str, np.ndarray] = {
        "tok_emb": normal((v, d), std),
        "pos_emb": std * pos_emb,
    }
    for i in range(config.n_layers):
        tensors[f"ln1_g.{i}"] = np.ones(d)
        tensors[f"ln1_b.{i}"] = np.zeros(d)
        tensors[f"wq.{i}"] = normal((d, d), std)
        tensors[f"wk.{i}"] = normal((d, d), std)
        tensors[f"wv.{i}"] = normal((d, d), std)
        tensors[f"wo.{i}"] = normal((d, d), res_std)
        tensors[f"ln2_g.{i}"] = np.ones(d)
        tensors[f"ln2_b.{i}"] = np.zeros(d)
        tensors[f"w1.{i}"] = normal((d, f), std)
        tensors[f"b1.{i}"] = np.zeros(f)
        tensors[f"w2.{i}"] = normal((f, d), res_std)
        tensors[f"b2.{i}"] = np.zeros(d)
    tensors["lnf_g"] = np.ones(d)
    tensors["lnf_b"] = np.zeros(d)
    tensors["head"] = normal((d, v), std)
    return ParamSet(config, {k: t.astype(dtype) for k, t in tensors.items()})


def _as_batch(ids) -> np.ndarray:
    arr = np.asarray(ids, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"token ids must be 1-D or 2-D, got shape {arr.shape}")
    return arr


def _layernorm_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _layernorm_bwd(dy, g, cache):
    xhat, inv = cache
    d = dy.shape[-1]
    dg = (dy * xhat).reshape(-1, d).sum(axis=0)
    db = dy.reshape(-1, d).sum(axis=0)
    dxhat = dy * g
    mean1 = dxhat.mean(axis=-1, keepdims=True)
    mean2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - mean1 - xhat * mean2)
    return dx, dg, db


def _gelu_fwd(a):
    # a*a*a: integer-exponent power takes a slow generic ufunc path
    u = _GELU_C * (a + 0.044715 * (a * a * a))
    t = np.tanh(u)
    return 0.5 * a * (1.0 + t), t


def _gelu_bwd(da_out, a, t):
    du = _GELU_C * (1.0 + 3 * 0.044715 * a * a)
    return da_out * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * du)


def _split_heads(x, n_heads):
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, hd = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * hd)


def forward_with_cache(params: ParamSet, ids, dropout_rng: np.random.Generator | None = None):
    """Batched causal forward pass; the cache feeds :func:`backward`."""
    cfg = params.config
    batch = _as_batch(ids)
    b, t = batch.shape
    if t > cfg.max_seq_len:
        raise ValueError(f"sequence length {t} exceeds max_seq_len {cfg.max_seq_len}")
    if t == 0:
        raise ValueError("empty sequence")
    dtype = params.dtype

    use_dropout = cfg.dropout > 0.0 and dropout_rng is not None
    keep = 1.0 - cfg.dropout

    x = (params["tok_emb"][batch] + params["pos_emb"][:t]).astype(dtype)
    causal = np.triu(np.ones((t, t), dtype=bool), k=1)
    cache: dict = {"ids": batch, "x0": x, "layers": [], "dropout": use_dropout}

    for i in range(cfg.n_layers):
        lc: dict = {}
        lc["x_in"] = x
        h, lc["ln1"] = _layernorm_fwd(x, params[f"ln1_g.{i}"], params[f"ln1_b.{i}"])
        lc["h"] = h
        q = h @ params[f"wq.{i}"]
        k = h @ params[f"wk.{i}"]
        v = h @ params[f"wv.{i}"]
        qh, kh, vh = (_split_heads(z, cfg.n_heads) for z in (q, k, v))
        scale = 1.0 / math.sqrt(cfg.d_model // cfg.n_heads)
        scores = np.matmul(qh, kh.swapaxes(-1, -2)) * scale
        scores = np.where(causal, -np.inf, scores)
        scores -= scores.max(axis=-1, keepdims=True)
        att = np.exp(scores)
        att /= att.sum(axis=-1, keepdims=True)
        ctx = _merge_heads(np.matmul(att, vh))
        proj = ctx @ params[f"wo.{i}"]
        if use_dropout:
            m = (dropout_rng.random(proj.shape) < keep).astype(dtype) / keep
            proj = proj * m
            lc["drop_att"] = m
        lc.update(qh=qh, kh=kh, vh=vh, att=att, ctx=ctx, scale=scale)
        x = x + proj

        lc["x_mid"] = x
        h2, lc["ln2"] = _layernorm_fwd(x, params[f"ln2_g.{i}"], params[f"ln2_b.{i}"])
        a = h2 @ params[f"w1.{i}"] + params[f"b1.{i}"]
        m_act, tanh_cache = _gelu_fwd(a)
        mlp = m_act @ params[f"w2.{i}"] + params[f"b2.{i}"]
        if use_dropout:
            m = (dropout_rng.random(mlp.shape) < keep).astype(dtype) / keep
            mlp = mlp * m
            lc["drop_mlp"] = m
        lc.update(h2=h2, a=a, tanh=tanh_cache, m_act=m_act)
        x = x + mlp
        cache["layers"].append(lc)

    xf, lnf_cache = _layernorm_fwd(x, params["lnf_g"], params["lnf_b"])
    cache["x_final"] = x
    cache["lnf"] = lnf_cache
    cache["xf"] = xf
    logits = xf @ params["head"]
    return logits, cache


def forward(params: ParamSet, ids) -> np.ndarray:
    """Logits for one sequence, shape (seq_len, vocab_size)."""
    logits, _ = forward_with_cache(params, ids)
    return logits[0] if np.asarray(ids).ndim == 1 else logits


def _log_softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def nll_loss(logits, targets, mask) -> float:
    """Mean negative log-likelihood over positions where mask == 1."""
    logits = np.asarray(logits)
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask)
    if logits.shape[:-1] != targets.shape or targets.shape != mask.shape:
        raise ValueError(f"shape mismatch: logits {logits.shape}, targets {targets.shape}, mask {mask.shape}")
    n = float(mask.sum())
    if n == 0:
        raise ValueError("loss mask selects no positions")
    logp = _log_softmax(logits)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    return float(-(picked * mask).sum() / n)


def backward(params: ParamSet, cache: dict, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients for every parameter tensor given d(loss)/d(logits)."""
    cfg = params.config
    grads: dict[str, np.ndarray] = {}
    xf = cache["xf"]
    dmodel = cfg.d_model

    flat_xf = xf.reshape(-1, dmodel)
    flat_dlogits = dlogits.reshape(-1, cfg.vocab_size)
    grads["head"] = flat_xf.T @ flat_dlogits
    dxf = dlogits @ params["head"].T
    dx, grads["lnf_g"], grads["lnf_b"] = _layernorm_bwd(dxf, params["lnf_g"], cache["lnf"])

    for i in reversed(range(cfg.n_layers)):
        lc = cache["layers"][i]
        dmlp = dx
        if "drop_mlp" in lc:
            dmlp = dmlp * lc["drop_mlp"]
        flat_m = lc["m_act"].reshape(-1, cfg.d_ff)
        flat_dmlp = dmlp.reshape(-1, dmodel)
        grads[f"w2.{i}"] = flat_m.T @ flat_dmlp
        grads[f"b2.{i}"] = flat_dmlp.sum(axis=0)
        dm = dmlp @ params[f"w2.{i}"].T
        da = _gelu_bwd(dm, lc["a"], lc["tanh"])
        flat_h2 = lc["h2"].reshape(-1, dmodel)
        flat_da = da.reshape(-1, cfg.d_ff)
        grads[f"w1.{i}"] = flat_h2.T @ flat_da
        grads[f"b1.{i}"] = flat_da.sum(axis=0)
        dh2 = da @ params[f"w1.{i}"].T
        dx_mid, grads[f"ln2_g.{i}"], grads[f"ln2_b.{i}"] = _layernorm_bwd(dh2, params[f"ln2_g.{i}"], lc["ln2"])
        dx = dx + dx_mid

        dproj = dx
        if "drop_att" in lc:
            dproj = dproj * lc["drop_att"]
        flat_ctx = lc["ctx"].reshape(-1, dmodel)
        flat_dproj = dproj.reshape(-1, dmodel)
        grads[f"wo.{i}"] = flat_ctx.T @ flat_dproj
        dctx = _split_heads(dproj @ params[f"wo.{i}"].T, cfg.n_heads)
        att, vh = lc["att"], lc["vh"]
        dvh = np.matmul(att.swapaxes(-1, -2), dctx)
        datt = np.matmul(dctx, vh.swapaxes(-1, -2))
        dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
        qh, kh = lc["qh"], lc["kh"]
        dqh = np.matmul(dscores, kh) * lc["scale"]
        dkh = np.matmul(dscores.swapaxes(-1, -2), qh) * lc["scale"]
        dq, dk, dv = (_merge_heads(z) for z in (dqh, dkh, dvh))
        h = lc["h"]
        flat_h = h.reshape(-1, dmodel)
        grads[f"wq.{i}"] = flat_h.T @ dq.reshape(-1, dmodel)
        grads[f"wk.{i}"] = flat_h.T @ dk.reshape(-1, dmodel)
        grads[f"wv.{i}"] = flat_h.T @ dv.reshape(-1, dmodel)
        dh = dq @ params[f"wq.{i}"].T + dk @ params[f"wk.{i}"].T + dv @ params[f"wv.{i}"].T
        dx_in, grads[f"ln1_g.{i}"], grads[f"ln1_b.{i}"] = _layernorm_bwd(dh, params[f"ln1_g.{i}"], lc["ln1"])
        dx = dx + dx_in

    ids = cache["ids"]
    t = ids.shape[1]
    grads["tok_emb"] = np.zeros_like(params["tok_emb"])
    np.add.at(grads["tok_emb"], ids, dx)
    grads["pos_emb"] = np.zeros_like(params["pos_emb"])
    grads["pos_emb"][:t] = dx.sum(axis=0)
    return grads


def loss_grad_logits(logits, targets, mask):
    """(masked mean NLL, d loss / d logits) in one pass."""
    targets = np.asarray(targets, dtype=np.int64)
    mask = np.asarray(mask)
    n = float(mask.sum())
    if n == 0:
        raise ValueError("loss mask selects no positions")
    logp = _log_softmax(logits)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    loss = float(-(picked * mask).sum() / n)
    dlogits = np.exp(logp)
    np.subtract.at(dlogits, (*np.indices(targets.shape), targets), 1.0)
    dlogits *= (mask / n)[..., None]
    return loss, dlogits.astype(logits.dtype)


def grad(params: ParamSet, inputs, targets, mask, dropout_rng=None) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients for a batch of (inputs, shifted targets, mask)."""
    logits, cache = forward_with_cache(params, inputs, dropout_rng=dropout_rng)
    loss, dlogits = loss_grad_logits(logits, targets, mask)
    grads = backward(params, cache, dlogits)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in tensor {name!r}")
    return loss, grads


class AdamWState:
    """First/second moment estimates plus the shared step counter."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.t = 0


def step_adamw(
    tensors: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    lr: float = 3e-4,
    betas: tuple[float, float] = (0.9, 0.95),
    eps: float = 1e-8,
    weight_decay: float = 0.1,
) -> None:
    """One AdamW update in place, with decoupled weight decay on every tensor."""
    b1, b2 = betas
    state.t += 1
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, g in grads.items():
        p = tensors[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        p *= 1.0 - lr * weight_decay
        p -= lr * update


def generate(
    params: ParamSet,
    prompt_ids: list[int],
    max_new: int,
    mode: str = "greedy",
    temperature: float = 1.0,
    seed: int | None = None,
    eos_id: int | None = None,
    stop_strings: list[str] | None = None,
    tokenizer=None,
) -> list[int]:
    """Continue a prompt; greedy is deterministic argmax, sampling is seeded.

    Stops at ``eos_id``, at any of ``stop_strings`` (decoded continuation,
    requires ``tokenizer``), or after ``max_new`` tokens.
    """
    cfg = params.config
    prompt_ids = list(prompt_ids)
    if len(prompt_ids) > cfg.max_seq_len - max_new:
        raise ValueError(f"prompt of {len(prompt_ids)} tokens exceeds max_seq_len - max_new = {cfg.max_seq_len - max_new}")
    if stop_strings and tokenizer is None:
        raise ValueError("stop_strings requires a tokenizer")
    rng = np.random.default_rng(seed) if mode == "sample" else None
    out = list(prompt_ids)
    new: list[int] = []
    for _ in range(max_new):
        logits = forward(params, out)[-1]
        if mode == "greedy":
            nxt = int(np.argmax(logits))
        elif mode == "sample":
            z = logits.astype(np.float64) / max(temperature, 1e-8)
            z -= z.max()
            p = np.exp(z)
            p /= p.sum()
            nxt = int(rng.choice(len(p), p=p))
        else:
            raise ValueError(f"unknown generation mode {mode!r}")
        out.append(nxt)
        new.append(nxt)
        if eos_id is not None and nxt == eos_id:
            break
        if stop_strings:
            text = tokenizer.decode(new)
            if any(s in text for s in stop_strings):
                break
    return out


def save_checkpoint(
    path: str | Path,
    params: ParamSet,
    optimizer: AdamWState | None = None,
    trainer_meta: dict | None = None,
) -> None:
    """Checkpoint directory: header.json (magic, version, config, meta) + tensors.npz."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    header = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "dtype": str(np.dtype(params.dtype)),
        "trainer_meta": trainer_meta or {},
        "has_optimizer": optimizer is not None,
    }
    arrays = {f"param/{k}": v for k, v in params.tensors.items()}
    if optimizer is not None:
        arrays.update({f"optim_m/{k}": v for k, v in optimizer.m.items()})
        arrays.update({f"optim_v/{k}": v for k, v in optimizer.v.items()})
        header["optimizer_step"] = optimizer.t
    with open(path / "header.json", "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    np.savez(path / "tensors.npz", **arrays)


class Checkpoint:
    def __init__(self, params: ParamSet, optimizer: AdamWState | None, trainer_meta: dict):
        self.params = params
        self.optimizer = optimizer
        self.trainer_meta = trainer_meta


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    with open(path / "header.json", encoding="utf-8") as fh:
        header = json.load(fh)
    if header.get("magic") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')!r}")
    config = ModelConfig(**header["config"])
    with np.load(path / "tensors.npz") as npz:
        tensors = {k[len("param/") :]: npz[k].copy() for k in npz.files if k.startswith("param/")}
        params = ParamSet(config, tensors)
        optimizer = None
        if header.get("has_optimizer"):
            optimizer = AdamWState(params.tensors)
            optimizer.m = {k[len("optim_m/") :]: npz[k].copy() for k in npz.files if k.startswith("optim_m/")}
            optimizer.v = {k[len("optim_v/") :]: npz[k].copy() for k in npz.files if k.startswith("optim_v/")}
            optimizer.t = int(header["optimizer_step"])
    return Checkpoint(params, optimizer, header.get("trainer_meta", {}))
