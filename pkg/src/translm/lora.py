"""Low-rank adapters for the numpy LM.

An adapter holds a pair (A, B) per targeted weight matrix. The effective
weight is W + (alpha / rank) * A @ B with A drawn from a seeded normal and B
zero, so a fresh adapter leaves the model's function unchanged. Training
updates only A and B; the base weights are never written. Between stages an
adapter can be merged into the base weights, which is exact (same floating
point result as running attached).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import model as _model
from .model import ModelConfig, ParamSet

ADAPTER_MAGIC = "translm-adapter"
ADAPTER_VERSION = 1

DEFAULT_TARGETS = ("wq", "wk", "wv", "wo")
_INIT_STD = 0.02


@dataclass(frozen=True)
class LoraConfig:
    rank: int = 8
    alpha: float = 16.0
    targets: tuple[str, ...] = DEFAULT_TARGETS
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError(f"rank must be >= 1, got {self.rank}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.targets:
            raise ValueError("targets must name at least one weight matrix")

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank


def expand_targets(params: ParamSet, targets: tuple[str, ...]) -> list[str]:
    """Resolve target names to concrete tensor names.

    A bare family name like ``wq`` selects that matrix in every layer; an
    exact tensor name like ``wq.0`` or ``head`` selects just that one.
    """
    resolved: list[str] = []
    for t in targets:
        if t in params:
            matches = [t]
        else:
            matches = [n for n in params.names() if n.split(".")[0] == t]
        if not matches:
            raise ValueError(f"target {t!r} matches no parameter tensor")
        for name in matches:
            if params[name].ndim != 2:
                raise ValueError(f"target {name!r} is not a weight matrix")
            resolved.append(name)
    out = sorted(set(resolved))
    return out


class LoraAdapter:
    """A/B factor pairs, stored flat as ``<tensor>.A`` / ``<tensor>.B``."""

    def __init__(self, config: LoraConfig, tensors: dict[str, np.ndarray]):
        self.config = config
        self.tensors = tensors

    def base_names(self) -> list[str]:
        return sorted({k[: -len(".A")] for k in self.tensors if k.endswith(".A")})

    def pair(self, base_name: str) -> tuple[np.ndarray, np.ndarray]:
        return self.tensors[base_name + ".A"], self.tensors[base_name + ".B"]

    def n_params(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def copy(self) -> "LoraAdapter":
        return LoraAdapter(self.config, {k: v.copy() for k, v in self.tensors.items()})


def init_adapter(params: ParamSet, config: LoraConfig, dtype=None) -> LoraAdapter:
    """Fresh adapter: A seeded normal, B zero, so the delta starts at zero."""
    dtype = dtype or params.dtype
    names = expand_targets(params, config.targets)
    rng = np.random.default_rng(config.seed)
    tensors: dict[str, np.ndarray] = {}
    for name in names:
        d_in, d_out = params[name].shape
        if config.rank > min(d_in, d_out):
            raise ValueError(f"rank {config.rank} exceeds min dimension of {name!r} with shape {params[name].shape}")
        tensors[name + ".A"] = rng.normal(0.0, _INIT_STD, size=(d_in, config.rank)).astype(dtype)
        tensors[name + ".B"] = np.zeros((config.rank, d_out), dtype=dtype)
    return LoraAdapter(config, tensors)


def effective_params(params: ParamSet, adapter: LoraAdapter) -> ParamSet:
    """Base weights with the low-rank deltas applied; base tensors untouched."""
    s = adapter.config.scaling
    tensors = dict(params.tensors)
    for name in adapter.base_names():
        a, b = adapter.pair(name)
        tensors[name] = params[name] + s * (a @ b)
    return ParamSet(params.config, tensors)


def grad_adapter(
    params: ParamSet,
    adapter: LoraAdapter,
    inputs,
    targets,
    mask,
    dropout_rng=None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients on the adapter factors only.

    Runs the full backward pass at the effective weights, then projects each
    d loss / d W_eff onto the factors: dA = s * dW @ B^T, dB = s * A^T @ dW.
    """
    eff = effective_params(params, adapter)
    loss, full = _model.grad(eff, inputs, targets, mask, dropout_rng=dropout_rng)
    s = adapter.config.scaling
    grads: dict[str, np.ndarray] = {}
    for name in adapter.base_names():
        a, b = adapter.pair(name)
        dw = full[name]
        grads[name + ".A"] = s * (dw @ b.T)
        grads[name + ".B"] = s * (a.T @ dw)
    return loss, grads


def merge(params: ParamSet, adapter: LoraAdapter) -> ParamSet:
    """Fold the adapter into a new ParamSet; the inputs are left unchanged."""
    merged = params.copy()
    s = adapter.config.scaling
    for name in adapter.base_names():
        a, b = adapter.pair(name)
        merged.tensors[name] = params[name] + s * (a @ b)
    return merged


def save_adapter(path: str | Path, adapter: LoraAdapter, base_config: ModelConfig | None = None) -> None:
    """Adapter checkpoint: header.json + tensors.npz, like model checkpoints."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    header = {
        "magic": ADAPTER_MAGIC,
        "version": ADAPTER_VERSION,
        "config": {
            "rank": adapter.config.rank,
            "alpha": adapter.config.alpha,
            "targets": list(adapter.config.targets),
            "seed": adapter.config.seed,
        },
    }
    if base_config is not None:
        from dataclasses import asdict

        header["base_config"] = asdict(base_config)
    with open(path / "header.json", "w", encoding="utf-8") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    np.savez(path / "tensors.npz", **adapter.tensors)


def load_adapter(path: str | Path) -> LoraAdapter:
    path = Path(path)
    with open(path / "header.json", encoding="utf-8") as fh:
        header = json.load(fh)
    if header.get("magic") != ADAPTER_MAGIC:
        raise ValueError(f"{path}: not an adapter checkpoint (bad magic)")
    if header.get("version") != ADAPTER_VERSION:
        raise ValueError(f"{path}: unsupported adapter version {header.get('version')!r}")
    cfg_d = header["config"]
    config = LoraConfig(
        rank=cfg_d["rank"],
        alpha=cfg_d["alpha"],
        targets=tuple(cfg_d["targets"]),
        seed=cfg_d["seed"],
    )
    with np.load(path / "tensors.npz") as npz:
        tensors = {k: npz[k].copy() for k in npz.files}
    return LoraAdapter(config, tensors)
