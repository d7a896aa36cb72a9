"""Masked GPT-like decoder with ALiBi attention and SwiGLU FFN.

Architecture: byte-level tied embedding/unembedding, pre-norm residual blocks
(norm -> attention -> add, norm -> FFN -> add), no projection biases, ALiBi
causal position bias with slopes 2^(-8i/n_heads), SwiGLU FFN with hidden size
round(8/3 * d_model) rounded up to a multiple of 32. All seven projection
weights per block (Q, K, V, output, FFN gate/up/down) carry independent random
static masks; embedding and norm gains stay dense.

Every trainable tensor records the init std, learning rate and forward
multiplier assigned by the parameterization module for its role, so optimizer
and diagnostics code never re-derive scheme rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import DomainError
from .masks import SparsityMask, mask_seed_for, sample_random_mask
from .parameterization import (BaseHyperparams, LayerRole, ParamScheme,
                               attn_logit_scale, forward_multiplier, init_std,
                               layer_lr)

_INIT_DOMAIN = 0x696E6974  # "init"

# stable tensor tags for mask/init sub-seed derivation
_TAGS = {"wq": 0, "wk": 1, "wv": 2, "wo": 3, "w_gate": 4, "w_up": 5, "w_down": 6}

_EMBED_LAYER = -1  # layer index used for non-block tensors in seed derivation


def ffn_hidden_size(d_model: int) -> int:
    """round(8/3 * d_model), rounded up to a multiple of 32."""
    raw = int(round(d_model * 8.0 / 3.0))
    return ((raw + 31) // 32) * 32


def alibi_slopes(n_heads: int) -> np.ndarray:
    return np.array([2.0 ** (-8.0 * i / n_heads) for i in range(1, n_heads + 1)])


@dataclass(frozen=True)
class ModelConfig:
    d_model: int
    n_layers: int = 2
    d_head: int = 64
    vocab_size: int = 256
    seq_len: int = 128
    density: float = 1.0
    scheme: ParamScheme = ParamScheme.SUPAR
    base: BaseHyperparams = field(default_factory=BaseHyperparams)
    seed: int = 0
    dtype: str = "float64"
    # density the scheme scales for, when it differs from the starting mask
    # density (gradual pruning starts dense but trains toward a target)
    scale_density: float | None = None

    def __post_init__(self):
        if self.d_model < 1 or self.d_model % self.d_head != 0:
            raise DomainError(
                f"d_model {self.d_model} must be a positive multiple of d_head {self.d_head}")
        if self.n_layers < 1:
            raise DomainError("n_layers must be >= 1")
        if self.vocab_size < 2:
            raise DomainError("vocab_size must be >= 2")
        if self.seq_len < 2:
            raise DomainError("seq_len must be >= 2")
        if not (0.0 < self.density <= 1.0):
            raise DomainError(f"density must be in (0, 1], got {self.density}")
        if self.scale_density is not None and not (0.0 < self.scale_density <= 1.0):
            raise DomainError(
                f"scale_density must be in (0, 1], got {self.scale_density}")
        if self.seed < 0:
            raise DomainError("seed must be nonnegative")
        if self.dtype not in ("float32", "float64"):
            raise DomainError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def n_heads(self) -> int:
        return self.d_model // self.d_head

    @property
    def ffn_hidden(self) -> int:
        return ffn_hidden_size(self.d_model)

    @property
    def m_d(self) -> float:
        return self.d_model / self.base.d_base

    @property
    def m_rho(self) -> float:
        rho = self.density if self.scale_density is None else self.scale_density
        return rho / self.base.rho_base


@dataclass
class Param:
    """One trainable tensor plus its scheme-assigned scaling metadata."""

    name: str
    tensor: T.Tensor
    role: LayerRole
    lr: float        # Adam-family rule
    lr_sgd: float    # SGD rule (1/d_in folded in for muP-family hidden tensors)
    init_std: float
    mask: SparsityMask | None = None
    mask_tensor: T.Tensor | None = None
    layer: int | None = None
    tag: int | None = None

    def set_mask(self, mask: SparsityMask) -> None:
        """Swap in a new mask (dynamic sparsity); zeroes newly pruned weights."""
        if mask.shape != self.tensor.shape:
            raise DomainError(f"mask shape {mask.shape} != weight shape {self.tensor.shape}")
        self.mask = mask
        arr = mask.as_array(self.tensor.data.dtype)
        self.mask_tensor = T.Tensor(arr, requires_grad=False, name=self.name + ".mask")
        self.tensor.data *= arr


@dataclass
class ForwardResult:
    loss: T.Tensor
    stats: dict | None
    trace: dict | None


def _mean_abs(*arrays: np.ndarray) -> float:
    total = sum(float(np.abs(a).sum()) for a in arrays)
    count = sum(a.size for a in arrays)
    return total / count


class TransformerModel:
    """Built by build_model; owns parameters and the forward graph builder."""

    def __init__(self, config: ModelConfig):
        self.config = config
        cfg = config
        base = cfg.base
        np_dtype = np.float32 if cfg.dtype == "float32" else np.float64
        self._np_dtype = np_dtype

        self.slopes = alibi_slopes(cfg.n_heads)
        self.attn_scale = attn_logit_scale(cfg.scheme, cfg.d_head)
        self.emb_multiplier = forward_multiplier(LayerRole.EMBEDDING, cfg.scheme, base, cfg.m_d)
        self.unemb_multiplier = forward_multiplier(LayerRole.UNEMBEDDING, cfg.scheme, base, cfg.m_d)

        def draw(shape, std, layer, tag):
            # layer+1 keeps the entropy tuple nonnegative (embedding uses -1)
            ss = np.random.SeedSequence((_INIT_DOMAIN, cfg.seed, layer + 1, tag))
            w = np.random.default_rng(ss).standard_normal(shape) * std
            return w.astype(np_dtype)

        def make_param(name, data, role, layer=None, tag=None, std=0.0):
            lr = layer_lr(role, cfg.scheme, "adam", base, cfg.m_d, cfg.m_rho)
            lr_sgd = layer_lr(role, cfg.scheme, "sgd", base, cfg.m_d, cfg.m_rho)
            return Param(name=name, tensor=T.Tensor(data, requires_grad=True, name=name),
                         role=role, lr=lr, lr_sgd=lr_sgd, init_std=std, layer=layer, tag=tag)

        emb_std = init_std(LayerRole.EMBEDDING, cfg.scheme, base, cfg.m_d, cfg.m_rho)
        hid_std = init_std(LayerRole.HIDDEN, cfg.scheme, base, cfg.m_d, cfg.m_rho)

        self.embedding = make_param(
            "embedding", draw((cfg.vocab_size, cfg.d_model), emb_std, _EMBED_LAYER, 0),
            LayerRole.EMBEDDING, std=emb_std)

        self.layers: list[dict] = []
        d, f = cfg.d_model, cfg.ffn_hidden
        proj_shapes = {"wq": (d, d), "wk": (d, d), "wv": (d, d), "wo": (d, d),
                       "w_gate": (d, f), "w_up": (d, f), "w_down": (f, d)}
        for li in range(cfg.n_layers):
            layer = {
                "attn_gain": make_param(f"layer{li}.attn_gain", np.ones(d, dtype=np_dtype),
                                        LayerRole.VECTOR, layer=li),
                "ffn_gain": make_param(f"layer{li}.ffn_gain", np.ones(d, dtype=np_dtype),
                                       LayerRole.VECTOR, layer=li),
            }
            for name, shape in proj_shapes.items():
                tag = _TAGS[name]
                p = make_param(f"layer{li}.{name}", draw(shape, hid_std, li, tag),
                               LayerRole.HIDDEN, layer=li, tag=tag, std=hid_std)
                mseed = mask_seed_for(cfg.seed, li, tag)
                p.set_mask(sample_random_mask(shape[0], shape[1], cfg.density, mseed))
                layer[name] = p
            self.layers.append(layer)

        self.final_gain = make_param("final_gain", np.ones(d, dtype=np_dtype),
                                     LayerRole.VECTOR)

    # -- parameter iteration ------------------------------------------------

    def params(self) -> list[Param]:
        out = [self.embedding]
        for layer in self.layers:
            out.extend(layer.values())
        out.append(self.final_gain)
        return out

    def hidden_params(self) -> list[Param]:
        return [p for p in self.params() if p.role is LayerRole.HIDDEN]

    # -- forward ------------------------------------------------------------

    def _masked(self, p: Param) -> T.Tensor:
        return T.mul(p.tensor, p.mask_tensor)

    def forward_loss(self, tokens: np.ndarray, targets: np.ndarray,
                     collect_stats: bool = True, want_trace: bool = False) -> ForwardResult:
        cfg = self.config
        tokens = np.asarray(tokens)
        targets = np.asarray(targets)
        if tokens.ndim != 2 or tokens.shape != targets.shape:
            raise DomainError(f"tokens/targets must be matching B x T, got "
                              f"{tokens.shape} vs {targets.shape}")
        if tokens.shape[1] > cfg.seq_len:
            raise DomainError(f"sequence length {tokens.shape[1]} exceeds config {cfg.seq_len}")
        for name, ids in (("tokens", tokens), ("targets", targets)):
            if ids.min() < 0 or ids.max() >= cfg.vocab_size:
                raise DomainError(f"{name} contain ids outside [0, {cfg.vocab_size})")

        b, t = tokens.shape
        nh, dh = cfg.n_heads, cfg.d_head
        stats: list | None = [] if collect_stats else None
        trace: dict | None = {} if want_trace else None

        x = T.embedding_gather(self.embedding.tensor, tokens)
        if self.emb_multiplier != 1.0:
            x = T.smul(x, self.emb_multiplier)

        for li, layer in enumerate(self.layers):
            wm = {name: self._masked(layer[name]) for name in _TAGS}
            if want_trace:
                trace[f"layer{li}.block_in"] = x

            h = T.layernorm(x, layer["attn_gain"].tensor)
            q = T.matmul(h, wm["wq"])
            k = T.matmul(h, wm["wk"])
            v = T.matmul(h, wm["wv"])

            def heads(z):
                z = T.reshape(z, (b, t, nh, dh))
                return T.transpose(z, axes=(1, 2))  # (B, nh, T, dh)

            qh, kh, vh = heads(q), heads(k), heads(v)
            scores = T.smul(T.matmul(qh, T.transpose(kh)), self.attn_scale)
            scores = T.alibi_causal(scores, self.slopes)
            probs = T.softmax(scores)
            ctx = T.matmul(probs, vh)  # (B, nh, T, dh)
            ctx = T.reshape(T.transpose(ctx, axes=(1, 2)), (b, t, cfg.d_model))
            attn_out = T.matmul(ctx, wm["wo"])
            x = T.add(x, attn_out)
            attn_res = x

            h2 = T.layernorm(x, layer["ffn_gain"].tensor)
            gate = T.matmul(h2, wm["w_gate"])
            up = T.matmul(h2, wm["w_up"])
            act = T.mul(T.silu(gate), up)
            ffn_out = T.matmul(act, wm["w_down"])
            x = T.add(x, ffn_out)

            if collect_stats:
                stats.append({
                    "attn_first": _mean_abs(q.data, k.data, v.data),
                    "attn_out": _mean_abs(attn_out.data),
                    "attn_res": _mean_abs(attn_res.data),
                    "ffn_first": _mean_abs(gate.data, up.data),
                    "ffn_out": _mean_abs(ffn_out.data),
                    "ffn_res": _mean_abs(x.data),
                })
            if want_trace:
                trace[f"layer{li}.attn_in"] = h
                trace[f"layer{li}.attn_ctx"] = ctx
                trace[f"layer{li}.ffn_in"] = h2
                trace[f"layer{li}.ffn_act"] = act
                for pname, wmt in wm.items():
                    trace[f"layer{li}.{pname}.masked"] = wmt
                trace[f"layer{li}.block_out"] = x

        stack_out = x
        h = T.layernorm(stack_out, self.final_gain.tensor)
        logits = T.matmul(h, T.transpose(self.embedding.tensor))
        if self.unemb_multiplier != 1.0:
            logits = T.smul(logits, self.unemb_multiplier)
        loss = T.cross_entropy(logits, targets)

        if want_trace:
            trace["stack_out"] = stack_out
        return ForwardResult(loss=loss, stats=stats, trace=trace)

    def stack_output(self, tokens: np.ndarray) -> T.Tensor:
        """Forward through the block stack only (no readout); for probes."""
        dummy = np.zeros_like(np.asarray(tokens))
        res = self.forward_loss(tokens, dummy, collect_stats=False, want_trace=True)
        return res.trace["stack_out"]

    # -- bookkeeping ----------------------------------------------------------

    def count_params(self) -> dict:
        total = 0
        nonzero = 0
        per_layer_wpn = []
        for p in self.params():
            total += p.tensor.data.size
            if p.mask is not None:
                nonzero += p.mask.n_ones
            else:
                nonzero += p.tensor.data.size
        for layer in self.layers:
            wpns = [layer[n].mask.n_ones / layer[n].tensor.shape[1]
                    for n in _TAGS if layer[n].mask is not None]
            per_layer_wpn.append(float(np.mean(wpns)) if wpns else float(self.config.d_model))
        return {"total": total, "nonzero": nonzero, "wpn_per_layer": per_layer_wpn}

    def check_pruned_zero(self) -> bool:
        """True iff every masked weight is exactly zero at pruned positions."""
        for p in self.hidden_params():
            if p.mask is None:
                continue
            off = p.tensor.data[p.mask.bits == 0]
            if off.size and np.any(off != 0.0):
                return False
        return True


def build_model(config: ModelConfig) -> TransformerModel:
    return TransformerModel(config)
