"""Four-layer MLP with hand-written backprop and exact per-sample gradients.

Architecture: three blocks of ``Linear -> GELU -> LayerNorm -> Dropout``
followed by a ``Linear`` layer producing a single logit. The hidden
representation used by the consistency regularizer is the output of the third
block, i.e. the input of the final linear layer.

Parameters live in one flat float64 vector. Flattening order, block by block::

    W1 (h1 x d_in, row-major), b1, ln1_scale, ln1_shift,
    W2, b2, ln2_scale, ln2_shift,
    W3, b3, ln3_scale, ln3_shift,
    W4 (1 x h3), b4
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .rng import stream

LOSS_VARIANTS = ("naive", "calibrated", "fusiondp")
CHECKPOINT_FORMAT = "fusiondp-mlp"
CHECKPOINT_VERSION = 1

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + special.erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + special.erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def bce_logit_loss(logit, label):
    """Binary cross-entropy on a logit: max(z, 0) - z*y + log(1 + exp(-|z|))."""
    z = np.asarray(logit, dtype=float)
    y = np.asarray(label, dtype=float)
    out = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(out) if out.ndim == 0 else out


def bce_logit_grad(logit, label):
    return special.expit(logit) - label


@dataclass(frozen=True)
class Architecture:
    widths: tuple[int, ...]
    dropout: float = 0.15
    ln_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) != 5 or self.widths[-1] != 1:
            raise ValueError("widths must be (d_in, h1, h2, h3, 1)")
        if min(self.widths) < 1:
            raise ValueError("layer widths must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @classmethod
    def default(cls, d_in: int, hidden=(64, 32, 16), dropout: float = 0.15) -> "Architecture":
        return cls((d_in, *hidden, 1), dropout)

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        w = self.widths
        out = []
        for k in range(3):
            out += [
                (f"W{k + 1}", (w[k + 1], w[k])),
                (f"b{k + 1}", (w[k + 1],)),
                (f"ln{k + 1}_scale", (w[k + 1],)),
                (f"ln{k + 1}_shift", (w[k + 1],)),
            ]
        out += [("W4", (1, w[3])), ("b4", (1,))]
        return out

    def slices(self) -> dict[str, tuple[slice, tuple[int, ...]]]:
        index, start = {}, 0
        for name, shape in self.layout():
            size = int(np.prod(shape))
            index[name] = (slice(start, start + size), shape)
            start += size
        return index

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.layout())


@dataclass(frozen=True)
class MlpModel:
    arch: Architecture
    params: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.params, dtype=float)
        if p.shape != (self.arch.n_params,):
            raise ValueError(f"expected {self.arch.n_params} parameters, got {p.shape}")
        p.setflags(write=False)
        object.__setattr__(self, "params", p)

    @property
    def d_in(self) -> int:
        return self.arch.widths[0]

    def unpack(self) -> dict[str, np.ndarray]:
        return {name: self.params[sl].reshape(shape) for name, (sl, shape) in self.arch.slices().items()}

    def with_params(self, params: np.ndarray) -> "MlpModel":
        return MlpModel(self.arch, params)


def init_model(arch: Architecture, seed: int) -> MlpModel:
    """Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)); LayerNorm scale 1, shift 0."""
    rng = stream(seed, 0, "init")
    parts = []
    for name, shape in arch.layout():
        if name.startswith("ln"):
            parts.append(np.ones(shape) if name.endswith("scale") else np.zeros(shape))
            continue
        k = int(name[1])
        bound = 1.0 / np.sqrt(arch.widths[k - 1])
        parts.append(rng.uniform(-bound, bound, size=shape))
    return MlpModel(arch, np.concatenate([p.ravel() for p in parts]))


@dataclass
class BlockCache:
    inp: np.ndarray
    z: np.ndarray
    xhat: np.ndarray
    inv_std: np.ndarray
    mask: np.ndarray | None
    cdf: np.ndarray  # standard normal CDF at z, reused by the GELU derivative


@dataclass
class ForwardTrace:
    """Batched forward record: logits, hidden representation and backprop cache."""

    logit: np.ndarray
    hidden: np.ndarray
    blocks: list[BlockCache] = field(repr=False)

    @property
    def masks(self) -> list[np.ndarray | None]:
        return [b.mask for b in self.blocks]


def draw_masks(arch: Architecture, batch: int, rng: np.random.Generator) -> list[np.ndarray] | None:
    """Inverted-dropout multipliers (0 or 1/(1-p)) for the three hidden blocks."""
    if arch.dropout == 0.0:
        return None
    keep = 1.0 - arch.dropout
    return [(rng.random((batch, w)) < keep) / keep for w in arch.widths[1:4]]


def forward_batch(model: MlpModel, X: np.ndarray, masks: list[np.ndarray] | None = None) -> ForwardTrace:
    """Forward pass over rows of ``X``; ``masks=None`` is eval mode (no dropout)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.d_in:
        raise ValueError(f"input width {X.shape[1]} does not match model input {model.d_in}")
    p = model.unpack()
    eps = model.arch.ln_eps
    a = X
    blocks = []
    for k in range(3):
        z = a @ p[f"W{k + 1}"].T + p[f"b{k + 1}"]
        cdf = 0.5 * (1.0 + special.erf(z / _SQRT2))
        g = z * cdf
        mu = g.mean(axis=1, keepdims=True)
        c = g - mu
        inv_std = 1.0 / np.sqrt((c * c).mean(axis=1, keepdims=True) + eps)
        xhat = c * inv_std
        out = xhat * p[f"ln{k + 1}_scale"] + p[f"ln{k + 1}_shift"]
        m = None if masks is None else masks[k]
        if m is not None:
            out = out * m
        blocks.append(BlockCache(a, z, xhat, inv_std, m, cdf))
        a = out
    logit = a @ p["W4"][0] + p["b4"][0]
    return ForwardTrace(logit, a, blocks)


def forward(model: MlpModel, x: np.ndarray, mode: str = "eval", rng: np.random.Generator | None = None,
            masks: list[np.ndarray] | None = None) -> ForwardTrace:
    """Single-sample forward. Train mode draws dropout masks from ``rng`` unless
    ``masks`` (e.g. from an earlier trace) are supplied."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("forward takes one feature vector; use forward_batch for matrices")
    if mode == "eval":
        return forward_batch(model, x[None, :], None)
    if mode != "train":
        raise ValueError(f"unknown mode {mode!r}")
    if masks is None:
        if rng is None and model.arch.dropout > 0:
            raise ValueError("train mode needs a random stream for dropout")
        masks = draw_masks(model.arch, 1, rng) if rng is not None else None
    return forward_batch(model, x[None, :], masks)


@dataclass
class GradFactors:
    """Per-row gradient pieces: weight blocks as (upstream, input) pairs, vector blocks as rows.

    A row's gradient for weight block W is ``outer(upstream[r], input[r])``.
    ``groups`` stacked copies of a B-row batch belong to the same B samples.
    """

    weights: dict[str, tuple[np.ndarray, np.ndarray]]
    vectors: dict[str, np.ndarray]
    groups: int

    @property
    def batch(self) -> int:
        return next(iter(self.vectors.values())).shape[0] // self.groups

    def per_sample(self, arch: Architecture) -> np.ndarray:
        B, k = self.batch, self.groups
        index = arch.slices()
        G = np.zeros((B, arch.n_params))
        for name, (dz, inp) in self.weights.items():
            view = G[:, index[name][0]].reshape(B, dz.shape[1], inp.shape[1])  # a view into G
            np.multiply(dz[:B, :, None], inp[:B, None, :], out=view)
            for g in range(1, k):
                rows = slice(g * B, (g + 1) * B)
                view += dz[rows, :, None] * inp[rows, None, :]
        for name, rows in self.vectors.items():
            G[:, index[name][0]] = rows.reshape(k, B, -1).sum(axis=0)
        return G

    def weighted_sum(self, arch: Architecture, w: np.ndarray | None = None) -> np.ndarray:
        """sum_i w_i * g_i without forming the per-sample matrix."""
        index = arch.slices()
        B, k = self.batch, self.groups
        wr = None if w is None else np.asarray(w, dtype=float)[:, None]
        g = np.zeros(arch.n_params)
        # reduce each group with identically shaped operations, then add the
        # groups: mirrored copies (x~ = x) then cancel exactly
        for name, (dz, inp) in self.weights.items():
            acc = 0.0
            for h in range(k):
                rows = slice(h * B, (h + 1) * B)
                acc = acc + (dz[rows] if wr is None else dz[rows] * wr).T @ inp[rows]
            g[index[name][0]] = np.ravel(acc)
        for name, vec in self.vectors.items():
            acc = 0.0
            for h in range(k):
                part = vec[h * B : (h + 1) * B]
                acc = acc + (part if wr is None else part * wr).sum(axis=0)
            g[index[name][0]] = np.ravel(acc)
        return g

    def norms(self) -> np.ndarray:
        """Per-sample gradient norms from the factors alone."""
        B, k = self.batch, self.groups
        sq = np.zeros(B)
        for dz, inp in self.weights.values():
            dz3, in3 = dz.reshape(k, B, -1), inp.reshape(k, B, -1)
            for g in range(k):
                for h in range(k):
                    sq += np.einsum("bo,bo->b", dz3[g], dz3[h]) * np.einsum("bi,bi->b", in3[g], in3[h])
        for rows in self.vectors.values():
            tot = rows.reshape(k, B, -1).sum(axis=0)
            sq += np.einsum("bj,bj->b", tot, tot)
        return np.sqrt(np.maximum(sq, 0.0))


def grad_factors(model: MlpModel, trace: ForwardTrace, dlogit: np.ndarray, dhidden: np.ndarray | None = None,
                 groups: int = 1) -> GradFactors:
    """Reverse pass for upstream gradients on the logits (and optionally the hidden layer)."""
    p = model.unpack()
    dlogit = np.asarray(dlogit, dtype=float).reshape(-1)
    if dlogit.shape[0] % groups:
        raise ValueError("trace rows are not a multiple of groups")
    weights: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    vectors: dict[str, np.ndarray] = {}
    weights["W4"] = (dlogit[:, None], trace.hidden)
    vectors["b4"] = dlogit[:, None]
    da = dlogit[:, None] * p["W4"][0][None, :]
    if dhidden is not None:
        da = da + dhidden
    for k in (2, 1, 0):
        c = trace.blocks[k]
        dn = da if c.mask is None else da * c.mask
        vectors[f"ln{k + 1}_scale"] = dn * c.xhat
        vectors[f"ln{k + 1}_shift"] = dn
        dxhat = dn * p[f"ln{k + 1}_scale"]
        dg = c.inv_std * (
            dxhat - dxhat.mean(axis=1, keepdims=True) - c.xhat * (dxhat * c.xhat).mean(axis=1, keepdims=True)
        )
        dz = dg * (c.cdf + c.z * _INV_SQRT_2PI * np.exp(-0.5 * c.z * c.z))
        weights[f"W{k + 1}"] = (dz, c.inp)
        vectors[f"b{k + 1}"] = dz
        if k > 0:
            W = p[f"W{k + 1}"]
            if groups == 1:
                da = dz @ W
            else:
                B = dz.shape[0] // groups
                da = np.concatenate([dz[h * B : (h + 1) * B] @ W for h in range(groups)])
    return GradFactors(weights, vectors, groups)


def backward(model: MlpModel, trace: ForwardTrace, dlogit: np.ndarray, dhidden: np.ndarray | None = None,
             per_sample: bool = True, groups: int = 1) -> np.ndarray:
    """Per-sample gradients ``(B, n_params)``, or with ``per_sample=False`` their sum.

    With ``groups=g`` the trace holds g stacked copies of a B-row batch and
    sample i's gradient sums rows i, i+B, ... of the trace.
    """
    f = grad_factors(model, trace, dlogit, dhidden, groups)
    return f.per_sample(model.arch) if per_sample else f.weighted_sum(model.arch)


# ---------------------------------------------------------------- losses


@dataclass
class LossTrace:
    loss: np.ndarray
    original: ForwardTrace
    hybrid: ForwardTrace | None


def _split_pair(tr: ForwardTrace, B: int) -> tuple[ForwardTrace, ForwardTrace]:
    def half(sl):
        blocks = [
            BlockCache(b.inp[sl], b.z[sl], b.xhat[sl], b.inv_std[sl], None if b.mask is None else b.mask[sl],
                       b.cdf[sl])
            for b in tr.blocks
        ]
        return ForwardTrace(tr.logit[sl], tr.hidden[sl], blocks)

    return half(slice(0, B)), half(slice(B, 2 * B))


def _paired_forward(model: MlpModel, X: np.ndarray, X_tilde: np.ndarray,
                    masks: list[np.ndarray] | None) -> ForwardTrace:
    # one pass over [x; x~] with each row's dropout mask repeated for its x~ copy
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X_tilde = np.atleast_2d(np.asarray(X_tilde, dtype=float))
    if X.shape != X_tilde.shape:
        raise ValueError("x and x~ batches must have the same shape")
    # separate same-shape passes keep x~ = x rows bitwise identical to x rows
    a, b = forward_batch(model, X, masks), forward_batch(model, X_tilde, masks)
    blocks = [
        BlockCache(*(np.concatenate([getattr(u, f), getattr(v, f)]) for f in ("inp", "z", "xhat", "inv_std")),
                   None if u.mask is None else np.concatenate([u.mask, v.mask]),
                   np.concatenate([u.cdf, v.cdf]))
        for u, v in zip(a.blocks, b.blocks)
    ]
    return ForwardTrace(np.concatenate([a.logit, b.logit]), np.concatenate([a.hidden, b.hidden]), blocks)


def _pair_losses(variant: str, tr: ForwardTrace, y: np.ndarray, beta: float) -> np.ndarray:
    B = y.size
    loss = bce_logit_loss(tr.logit[:B], y) - bce_logit_loss(tr.logit[B:], y)
    if variant == "fusiondp":
        diff = tr.hidden[:B] - tr.hidden[B:]
        loss = loss + beta * (diff * diff).sum(axis=1)
    return np.atleast_1d(loss)


def _check_variant(variant: str, beta: float, X_tilde) -> None:
    if variant not in LOSS_VARIANTS:
        raise ValueError(f"unknown private loss variant {variant!r}")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if variant != "naive" and X_tilde is None:
        raise ValueError(f"{variant} loss needs the hybrid input x~")


def private_loss(variant: str, model: MlpModel, X: np.ndarray, y: np.ndarray, X_tilde: np.ndarray | None = None,
                 beta: float = 0.0, masks: list[np.ndarray] | None = None) -> LossTrace:
    """Per-row private losses.

    naive       l(f(x), y)
    calibrated  l(f(x), y) - l(f(x~), y)
    fusiondp    calibrated + beta * ||h(x) - h(x~)||^2

    The same dropout masks are applied to the x and x~ passes of a row.
    """
    _check_variant(variant, beta, X_tilde)
    y = np.asarray(y, dtype=float).reshape(-1)
    if variant == "naive":
        tr = forward_batch(model, X, masks)
        return LossTrace(np.atleast_1d(bce_logit_loss(tr.logit, y)), tr, None)
    tr = _paired_forward(model, X, X_tilde, masks)
    original, hybrid = _split_pair(tr, y.size)
    return LossTrace(_pair_losses(variant, tr, y, beta), original, hybrid)


def private_loss_factors(variant: str, model: MlpModel, X: np.ndarray, y: np.ndarray,
                         X_tilde: np.ndarray | None = None, beta: float = 0.0,
                         masks: list[np.ndarray] | None = None) -> tuple[np.ndarray, GradFactors]:
    """Per-row private losses and the gradient factors of each row's loss."""
    _check_variant(variant, beta, X_tilde)
    y = np.asarray(y, dtype=float).reshape(-1)
    if variant == "naive":
        tr = forward_batch(model, X, masks)
        return np.atleast_1d(bce_logit_loss(tr.logit, y)), grad_factors(model, tr, bce_logit_grad(tr.logit, y))
    B = y.size
    tr = _paired_forward(model, X, X_tilde, masks)
    dlogit = np.concatenate([bce_logit_grad(tr.logit[:B], y), -bce_logit_grad(tr.logit[B:], y)])
    dh = None
    if variant == "fusiondp" and beta != 0.0:
        d = 2.0 * beta * (tr.hidden[:B] - tr.hidden[B:])
        dh = np.concatenate([d, -d])
    return _pair_losses(variant, tr, y, beta), grad_factors(model, tr, dlogit, dh, groups=2)


def private_loss_grads(variant: str, model: MlpModel, X: np.ndarray, y: np.ndarray,
                       X_tilde: np.ndarray | None = None, beta: float = 0.0,
                       masks: list[np.ndarray] | None = None, per_sample: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Losses and their exact gradients, per row (``(B, P)``) or summed."""
    losses, f = private_loss_factors(variant, model, X, y, X_tilde, beta, masks)
    return losses, f.per_sample(model.arch) if per_sample else f.weighted_sum(model.arch)


def clipped_grad_sum(variant: str, model: MlpModel, X: np.ndarray, y: np.ndarray, C: float,
                     X_tilde: np.ndarray | None = None, beta: float = 0.0,
                     masks: list[np.ndarray] | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(losses, sum_i g_i / max(1, ||g_i|| / C), norms) without materializing per-sample gradients.

    Each sample is a single row (or an x/x~ pair), so its weight-gradient norm
    follows from inner products of the layer inputs and upstream gradients.
    """
    if not C > 0:
        raise ValueError("clip norm must be positive")
    losses, f = private_loss_factors(variant, model, X, y, X_tilde, beta, masks)
    norms = f.norms()
    return losses, f.weighted_sum(model.arch, 1.0 / np.maximum(1.0, norms / C)), norms


def per_sample_grad(model: MlpModel, variant: str, x: np.ndarray, y: float, x_tilde: np.ndarray | None = None,
                    beta: float = 0.0, masks: list[np.ndarray] | None = None) -> np.ndarray:
    """Gradient of one sample's private loss as a flat vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("per_sample_grad takes one feature vector")
    xt = None if x_tilde is None else np.asarray(x_tilde, dtype=float)[None, :]
    _, G = private_loss_grads(variant, model, x[None, :], np.array([y]), xt, beta, masks)
    return G[0]


def batch_loss_grad(model: MlpModel, X: np.ndarray, y: np.ndarray,
                    masks: list[np.ndarray] | None = None) -> tuple[float, np.ndarray]:
    """Mean BCE over the batch and its gradient (the clean, unclipped branch)."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size == 0:
        return 0.0, np.zeros(model.arch.n_params)
    tr = forward_batch(model, X, masks)
    g = backward(model, tr, bce_logit_grad(tr.logit, y), per_sample=False)
    return float(np.mean(bce_logit_loss(tr.logit, y))), g / y.size


def predict_logits(model: MlpModel, X: np.ndarray, chunk: int = 4096) -> np.ndarray:
    X = np.atleast_2d(X)
    return np.concatenate([forward_batch(model, X[i : i + chunk]).logit for i in range(0, X.shape[0], chunk)]) \
        if X.shape[0] else np.zeros(0)


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(model: MlpModel, path: str | Path) -> None:
    """Text checkpoint: architecture header plus parameters as exact hex floats."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "widths": list(model.arch.widths),
        "dropout": model.arch.dropout,
        "ln_eps": model.arch.ln_eps,
        "params": [float(v).hex() for v in model.params],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_checkpoint(path: str | Path) -> MlpModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a model checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    arch = Architecture(tuple(doc["widths"]), doc["dropout"], doc["ln_eps"])
    return MlpModel(arch, np.array([float.fromhex(v) for v in doc["params"]]))
