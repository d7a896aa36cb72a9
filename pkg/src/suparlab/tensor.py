"""Reverse-mode automatic differentiation on dense numpy arrays.

Just enough machinery to express a masked decoder-only transformer and its
training loss: a Tensor wrapper, a define-by-run tape, a fixed registry of
primitives with hand-written backward rules, and a central-finite-difference
gradient checker that serves as the independent oracle for all of it.

Double precision is the default; float32 can be selected per tensor (training
runs use it for speed, gradient checks must stay in float64). Broadcasting is
deliberately limited: `add` and `mul` accept equal shapes or one operand whose
shape equals the trailing suffix of the other's; everything else is rejected
loudly. Sparsity is expressed by multiplying a weight with a constant 0/1 mask
tensor, so masked positions get exactly-zero gradients with no special casing.
"""

from __future__ import annotations

import weakref

import numpy as np

from .errors import ContractViolation, ShapeError, UnsupportedPrimitive

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """Dense n-d array with an optional gradient buffer.

    Tensors produced by primitives are treated as immutable; leaf tensors
    (parameters) may have their .data rewritten between tapes, which is how
    optimizer updates and finite-difference perturbations work.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._tape: "weakref.ref[Tape] | None" = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractViolation("item() on non-scalar tensor of shape %r" % (self.shape,))
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class Node:
    """One recorded primitive application."""

    __slots__ = ("kind", "inputs", "output", "attrs", "ctx")

    def __init__(self, kind, inputs, output, attrs, ctx):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.attrs = attrs
        self.ctx = ctx


class Tape:
    """Ordered record of primitive applications (define-by-run).

    Used as a context manager; primitives applied while a tape is active are
    recorded if any input requires grad. Tapes are rebuilt every forward pass
    and discarded after backward.
    """

    _stack: list["Tape"] = []

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        Tape._stack.pop()
        return False

    @classmethod
    def current(cls) -> "Tape | None":
        return cls._stack[-1] if cls._stack else None


# ---------------------------------------------------------------------------
# primitive registry


def _require(cond: bool, kind: str, msg: str):
    if not cond:
        raise ShapeError(f"{kind}: {msg}")


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape` (leading axes only)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    return grad


def _suffix_compatible(a_shape, b_shape) -> bool:
    small, big = (a_shape, b_shape) if len(a_shape) <= len(b_shape) else (b_shape, a_shape)
    return small == big[len(big) - len(small):]


def _fwd_matmul(inputs, attrs):
    a, b = inputs
    _require(a.ndim >= 2 and b.ndim >= 2, "matmul", f"operands must be >= 2-d, got {a.shape} @ {b.shape}")
    _require(a.shape[-1] == b.shape[-2], "matmul", f"inner dims differ: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: leading dims not broadcastable: {a.shape} @ {b.shape}")
    return np.matmul(a, b), (a, b)


def _bwd_matmul(ctx, attrs, g):
    a, b = ctx
    ga = _reduce_to(np.matmul(g, np.swapaxes(b, -1, -2)), a.shape)
    if b.ndim == 2 and a.ndim > 2:
        a2 = a.reshape(-1, a.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        gb = a2.T @ g2
    else:
        gb = _reduce_to(np.matmul(np.swapaxes(a, -1, -2), g), b.shape)
    return ga, gb


def _fwd_add(inputs, attrs):
    a, b = inputs
    _require(_suffix_compatible(a.shape, b.shape), "add",
             f"shapes must match or suffix-align: {a.shape} + {b.shape}")
    return a + b, (a.shape, b.shape)


def _bwd_add(ctx, attrs, g):
    a_shape, b_shape = ctx
    return _reduce_to(g, a_shape), _reduce_to(g, b_shape)


def _fwd_mul(inputs, attrs):
    a, b = inputs
    _require(_suffix_compatible(a.shape, b.shape), "mul",
             f"shapes must match or suffix-align: {a.shape} * {b.shape}")
    return a * b, (a, b)


def _bwd_mul(ctx, attrs, g):
    a, b = ctx
    return _reduce_to(g * b, a.shape), _reduce_to(g * a, b.shape)


def _fwd_smul(inputs, attrs):
    (x,) = inputs
    c = attrs["c"]
    return x * x.dtype.type(c), None


def _bwd_smul(ctx, attrs, g):
    return (g * g.dtype.type(attrs["c"]),)


def _sigmoid(x):
    # exp(-|x|) never overflows; the where picks the stable branch per sign
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0, t) / (1.0 + t)


def _fwd_silu(inputs, attrs):
    (x,) = inputs
    sig = _sigmoid(x)
    return x * sig, (x, sig)


def _bwd_silu(ctx, attrs, g):
    x, sig = ctx
    return (g * sig * (1.0 + x * (1.0 - sig)),)


def _fwd_softmax(inputs, attrs):
    (x,) = inputs
    m = np.max(x, axis=-1, keepdims=True)
    # rows that are entirely -inf would produce 0/0; reject them loudly
    e = np.exp(x - np.where(np.isfinite(m), m, 0.0))
    denom = e.sum(axis=-1, keepdims=True)
    if not np.all(denom > 0):
        raise ContractViolation("softmax: a row has no finite entries")
    s = e / denom
    return s, (s,)


def _bwd_softmax(ctx, attrs, g):
    (s,) = ctx
    dot = (g * s).sum(axis=-1, keepdims=True)
    return (s * (g - dot),)


def _fwd_layernorm(inputs, attrs):
    x, gain = inputs
    _require(gain.ndim == 1 and gain.shape[0] == x.shape[-1], "layernorm",
             f"gain shape {gain.shape} must be ({x.shape[-1]},)")
    eps = attrs.get("eps", 1e-12)
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * gain, (xhat, inv, gain)


def _bwd_layernorm(ctx, attrs, g):
    xhat, inv, gain = ctx
    dxhat = g * gain
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    dgain = (g * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0)
    return dx, dgain


def _fwd_embed(inputs, attrs):
    (w,) = inputs
    ids = attrs["ids"]
    _require(w.ndim == 2, "embedding-gather", f"weight must be 2-d, got {w.shape}")
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ContractViolation("embedding-gather: ids must be integers")
    if ids.min() < 0 or ids.max() >= w.shape[0]:
        raise ContractViolation(
            f"embedding-gather: ids out of range [0, {w.shape[0]}), got [{ids.min()}, {ids.max()}]")
    return w[ids], (w.shape, ids)


def _bwd_embed(ctx, attrs, g):
    w_shape, ids = ctx
    gw = np.zeros(w_shape, dtype=g.dtype)
    np.add.at(gw, ids, g)
    return (gw,)


def _fwd_transpose(inputs, attrs):
    (x,) = inputs
    ax0, ax1 = attrs.get("axes", (-2, -1))
    _require(x.ndim >= 2, "transpose", f"needs >= 2-d, got {x.shape}")
    return np.swapaxes(x, ax0, ax1), (ax0, ax1)


def _bwd_transpose(ctx, attrs, g):
    ax0, ax1 = ctx
    return (np.swapaxes(g, ax0, ax1),)


def _fwd_reshape(inputs, attrs):
    (x,) = inputs
    shape = tuple(attrs["shape"])
    _require(int(np.prod(shape)) == x.size, "reshape",
             f"cannot reshape {x.shape} to {shape}")
    return x.reshape(shape), (x.shape,)


def _bwd_reshape(ctx, attrs, g):
    (orig,) = ctx
    return (g.reshape(orig),)


def _fwd_sum(inputs, attrs):
    (x,) = inputs
    return np.asarray(x.sum(), dtype=x.dtype), (x.shape,)


def _bwd_sum(ctx, attrs, g):
    (shape,) = ctx
    return (np.broadcast_to(g, shape).astype(g.dtype, copy=True),)


def _fwd_xent(inputs, attrs):
    (logits,) = inputs
    targets = np.asarray(attrs["targets"])
    _require(targets.shape == logits.shape[:-1], "cross-entropy",
             f"targets shape {targets.shape} must be {logits.shape[:-1]}")
    if not np.issubdtype(targets.dtype, np.integer):
        raise ContractViolation("cross-entropy: targets must be integers")
    if targets.min() < 0 or targets.max() >= logits.shape[-1]:
        raise ContractViolation("cross-entropy: target id out of range")
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    n_tokens = targets.size
    loss = np.asarray(-picked.sum() / n_tokens, dtype=logits.dtype)
    return loss, (logp, targets, n_tokens)


def _bwd_xent(ctx, attrs, g):
    logp, targets, n_tokens = ctx
    gl = np.exp(logp)
    np.subtract.at(gl.reshape(-1, gl.shape[-1]),
                   (np.arange(targets.size), targets.reshape(-1)), 1.0)
    gl *= g / n_tokens
    return (gl,)


_ALIBI_CACHE: dict = {}


def _alibi_bias(t: int, slopes: np.ndarray, dtype) -> np.ndarray:
    key = (t, slopes.tobytes(), np.dtype(dtype).str)
    bias = _ALIBI_CACHE.get(key)
    if bias is None:
        pos = np.arange(t)
        rel = pos[None, :] - pos[:, None]  # j - i, <= 0 on and below diagonal
        bias = slopes[:, None, None] * rel[None, :, :]
        bias = np.where(rel[None, :, :] > 0, -np.inf, bias).astype(dtype)
        if len(_ALIBI_CACHE) > 64:
            _ALIBI_CACHE.clear()
        _ALIBI_CACHE[key] = bias
    return bias


def _fwd_alibi(inputs, attrs):
    (scores,) = inputs
    slopes = np.asarray(attrs["slopes"], dtype=np.float64)
    _require(scores.ndim == 4, "causal-additive-bias", f"scores must be 4-d, got {scores.shape}")
    _require(scores.shape[-1] == scores.shape[-2], "causal-additive-bias",
             f"last two dims must match, got {scores.shape}")
    _require(slopes.shape == (scores.shape[1],), "causal-additive-bias",
             f"slopes shape {slopes.shape} must be ({scores.shape[1]},)")
    t = scores.shape[-1]
    # the cached bias is shared across calls and must never be written to
    return scores + _alibi_bias(t, slopes, scores.dtype)[None], None


def _bwd_alibi(ctx, attrs, g):
    # additive bias is constant; -inf positions carry zero downstream grad
    return (g,)


_PRIMITIVES = {
    "matmul": (_fwd_matmul, _bwd_matmul),
    "add": (_fwd_add, _bwd_add),
    "mul": (_fwd_mul, _bwd_mul),
    "smul": (_fwd_smul, _bwd_smul),
    "silu": (_fwd_silu, _bwd_silu),
    "softmax": (_fwd_softmax, _bwd_softmax),
    "layernorm": (_fwd_layernorm, _bwd_layernorm),
    "embed": (_fwd_embed, _bwd_embed),
    "transpose": (_fwd_transpose, _bwd_transpose),
    "reshape": (_fwd_reshape, _bwd_reshape),
    "sum": (_fwd_sum, _bwd_sum),
    "xent": (_fwd_xent, _bwd_xent),
    "alibi_causal": (_fwd_alibi, _bwd_alibi),
}


def apply_primitive(kind: str, inputs: list[Tensor], attrs: dict | None = None) -> Tensor:
    """Run one primitive, recording it on the active tape if needed."""
    if kind not in _PRIMITIVES:
        raise UnsupportedPrimitive(f"unknown primitive kind {kind!r}")
    attrs = attrs or {}
    datas = [t.data for t in inputs]
    dtypes = {d.dtype for d in datas}
    if len(dtypes) > 1:
        raise ContractViolation(f"{kind}: mixed dtypes {sorted(map(str, dtypes))}")
    fwd, _ = _PRIMITIVES[kind]
    out_data, ctx = fwd(datas, attrs)
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    tape = Tape.current()
    if tape is not None and requires:
        tape.nodes.append(Node(kind, tuple(inputs), out, attrs, ctx))
        # weak backref: a strong one would make tape <-> tensor cycles that
        # only the gc can break, stranding whole graphs between collections
        out._tape = weakref.ref(tape)
    return out


# convenience wrappers, used throughout the model code

def matmul(a, b):
    return apply_primitive("matmul", [a, b])

def add(a, b):
    return apply_primitive("add", [a, b])

def mul(a, b):
    return apply_primitive("mul", [a, b])

def smul(x, c: float):
    return apply_primitive("smul", [x], {"c": float(c)})

def silu(x):
    return apply_primitive("silu", [x])

def softmax(x):
    return apply_primitive("softmax", [x])

def layernorm(x, gain, eps: float = 1e-12):
    return apply_primitive("layernorm", [x, gain], {"eps": eps})

def embedding_gather(w, ids):
    return apply_primitive("embed", [w], {"ids": ids})

def transpose(x, axes=(-2, -1)):
    return apply_primitive("transpose", [x], {"axes": tuple(axes)})

def reshape(x, shape):
    return apply_primitive("reshape", [x], {"shape": tuple(shape)})

def tsum(x):
    return apply_primitive("sum", [x])

def cross_entropy(logits, targets):
    return apply_primitive("xent", [logits], {"targets": targets})

def alibi_causal(scores, slopes):
    return apply_primitive("alibi_causal", [scores], {"slopes": np.asarray(slopes)})


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Populate .grad on every tape tensor with requires_grad.

    Leaves unreachable from the loss get zero grads. Intermediate tensors get
    grads too (the dynamic-sparsity code reads dense gradients off the
    pre-mask product node).
    """
    if loss.data.size != 1:
        raise ContractViolation(f"backward: loss must be scalar, got shape {loss.shape}")
    if tape is None and loss._tape is not None:
        tape = loss._tape()
    if tape is None:
        raise ContractViolation("backward: loss was not produced on any tape")
    if not any(n.output is loss for n in tape.nodes):
        raise ContractViolation("backward: loss is not on the given tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if node.output.requires_grad:
            node.output.grad = g if g is not None else np.zeros_like(node.output.data)
        if g is None:
            continue
        _, bwd = _PRIMITIVES[node.kind]
        in_grads = bwd(node.ctx, node.attrs, g)
        for tin, gin in zip(node.inputs, in_grads):
            if gin is None or not tin.requires_grad:
                continue
            acc = grads.get(id(tin))
            if acc is None:
                if gin.dtype != tin.data.dtype:
                    gin = gin.astype(tin.data.dtype)
                elif np.may_share_memory(gin, g):
                    # rules may return g itself or views of it (add, transpose,
                    # reshape, alibi); copy so in-place accumulation into one
                    # stored grad cannot corrupt another or the parent's .grad
                    gin = gin.copy()
                grads[id(tin)] = gin
            else:
                acc += gin

    # assign accumulated grads to leaves; zero-fill unreached ones
    produced = {id(n.output) for n in tape.nodes}
    for node in tape.nodes:
        for tin in node.inputs:
            if not tin.requires_grad or id(tin) in produced:
                continue
            g = grads.get(id(tin))
            tin.grad = g if g is not None else np.zeros_like(tin.data)


def grad_check(builder, inputs: list[Tensor], step: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    builder(inputs) must return a scalar loss rebuilt from the inputs' current
    data. Inputs must be float64; float32 finite differences drown in rounding
    noise. Relative error uses max(|analytic|, |numeric|, 1e-12) as the scale.
    """
    if step <= 0:
        raise ContractViolation("grad_check: step must be > 0")
    for t in inputs:
        if t.data.dtype != np.float64:
            raise ContractViolation("grad_check: inputs must be float64")

    with Tape() as tape:
        loss = builder(inputs)
    if loss.data.size != 1:
        raise ContractViolation("grad_check: builder must produce a scalar loss")
    if tape.nodes:
        backward(loss, tape)
    analytic = []
    for t in inputs:
        if t.requires_grad:
            analytic.append(np.zeros_like(t.data) if t.grad is None else t.grad.copy())
        else:
            analytic.append(None)

    worst = 0.0
    for t, an in zip(inputs, analytic):
        if an is None:
            continue
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = builder(inputs).item()
            flat[i] = orig - step
            dn = builder(inputs).item()
            flat[i] = orig
            num = (up - dn) / (2.0 * step)
            a = an.reshape(-1)[i]
            err = abs(a - num) / max(abs(a), abs(num), 1e-12)
            worst = max(worst, err)
    return worst
