"""Encoder, classification heads, losses and score ensembling.

The encoder stacks blocks of attention-diffusion spatial aggregation and
multi-scale temporal convolution over a ``T x V x C`` feature tensor.  A main
head pools globally and classifies; an auxiliary head multiplies tapped
features with per-class similarity templates and classifies them again,
adding a weighted term to the training loss.  The auxiliary branch reads the
tapped features only, so removing it never changes main-branch outputs.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from . import topology
from .errors import BudgetExceeded, DimensionMismatch, ShapeMismatch, TooShort
from .priors import ClassTemplateSet

__all__ = [
    "ModelConfig",
    "LossBreakdown",
    "init_params",
    "init_state",
    "param_count",
    "params_checksum",
    "sinusoidal_pe",
    "embed_input",
    "ms_tc_forward",
    "model_forward",
    "pcac_logits",
    "aux_loss",
    "total_loss",
    "softmax",
    "ensemble_scores",
]


@dataclass
class ModelConfig:
    """Hyperparameters of the encoder/classifier stack."""

    joints: int = 25
    classes: int = 120
    in_dims: int = 3
    frames: int = 64
    channels: tuple[int, ...] = (64, 64, 64, 128, 128, 128, 256, 256, 256)
    strides: tuple[int, ...] = (1, 1, 1, 2, 1, 2, 1, 1, 1)
    beta: float = 0.5
    first_layer_hops: int = 4
    default_hops: int = 1
    mha_first_layer_only: bool = True
    lambda_aux: float = 0.2
    aux_tap: int = 9
    pe_kind: str = "sinusoidal"
    reduce_ratio: int = 4
    tc_kernel: int = 5
    tc_dilations: tuple[int, int] = (1, 2)
    tc_pool: int = 3
    tc_bottleneck: int = 4

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.strides = tuple(self.strides)
        if len(self.channels) != len(self.strides):
            raise DimensionMismatch("channels and strides must have equal length")
        if not self.channels:
            raise DimensionMismatch("need at least one block")
        if self.lambda_aux < 0:
            raise DimensionMismatch("lambda_aux must be >= 0")
        if not 1 <= self.aux_tap <= len(self.channels):
            raise DimensionMismatch(
                f"aux_tap {self.aux_tap} outside 1..{len(self.channels)}"
            )
        if len(self.channels) == 9 and self.aux_tap not in (3, 6, 9):
            raise DimensionMismatch("aux_tap must be a stage boundary (3, 6 or 9)")
        if self.pe_kind != "sinusoidal":
            raise DimensionMismatch(f"unsupported pe_kind {self.pe_kind!r}")
        if not 0.0 < self.beta <= 1.0:
            raise DimensionMismatch("beta must be in (0, 1]")

    @property
    def n_blocks(self) -> int:
        return len(self.channels)

    def block_hops(self, block: int) -> int:
        if self.mha_first_layer_only:
            return self.first_layer_hops if block == 0 else self.default_hops
        return self.first_layer_hops

    def block_channels(self, block: int) -> tuple[int, int]:
        cin = self.channels[block - 1] if block > 0 else self.channels[0]
        return cin, self.channels[block]

    def reduce_dim(self, c_in: int) -> int:
        return max(1, c_in // self.reduce_ratio)

    def bottleneck(self, c: int) -> int:
        return max(1, c // self.tc_bottleneck)

    def out_frames(self) -> int:
        t = self.frames
        for s in self.strides:
            t = -(-t // s)
        return t


# --- parameters -------------------------------------------------------------


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(max(1, fan_in))
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg: ModelConfig, seed: int) -> dict[str, np.ndarray]:
    """Deterministic parameter set: same seed, bitwise-identical arrays.

    Weights are uniform with fan-in scaling, biases zero, normalization
    scales one.  Shared topologies start from the degree-normalized physical
    adjacency with self loops.
    """
    rng = np.random.default_rng(seed)
    v = cfg.joints
    adj = topology.adjacency_from_pairs(topology.physical_pairs(v), v)
    topo0 = topology.normalized_adjacency(adj)
    p: dict[str, np.ndarray] = {}
    c0 = cfg.channels[0]
    p["embed.w"] = _uniform(rng, (cfg.in_dims, c0), cfg.in_dims)
    p["embed.b"] = np.zeros(c0)
    for l in range(cfg.n_blocks):
        cin, cout = cfg.block_channels(l)
        r = cfg.reduce_dim(cin)
        cb = cfg.bottleneck(cout)
        k = cfg.tc_kernel
        pre = f"b{l}."
        p[pre + "att.topo"] = topo0.copy()
        p[pre + "att.wq"] = _uniform(rng, (cin, r), cin)
        p[pre + "att.wk"] = _uniform(rng, (cin, r), cin)
        p[pre + "att.w3"] = _uniform(rng, (r,), r)
        p[pre + "att.gamma"] = np.array([0.1])
        p[pre + "spat.w"] = _uniform(rng, (cin, cout), cin)
        p[pre + "spat.b"] = np.zeros(cout)
        if cin != cout:
            p[pre + "spat.res.w"] = _uniform(rng, (cin, cout), cin)
        p[pre + "spat.bn.scale"] = np.ones(cout)
        p[pre + "spat.bn.shift"] = np.zeros(cout)
        for br, _dil in zip(("d1", "d2"), cfg.tc_dilations):
            p[pre + f"tc.{br}.red.w"] = _uniform(rng, (cout, cb), cout)
            p[pre + f"tc.{br}.red.b"] = np.zeros(cb)
            p[pre + f"tc.{br}.conv.w"] = _uniform(rng, (k, cb, cb), k * cb)
            p[pre + f"tc.{br}.conv.b"] = np.zeros(cb)
            p[pre + f"tc.{br}.exp.w"] = _uniform(rng, (cb, cout), cb)
            p[pre + f"tc.{br}.exp.b"] = np.zeros(cout)
        p[pre + "tc.mp.w"] = _uniform(rng, (cout, cout), cout)
        p[pre + "tc.mp.b"] = np.zeros(cout)
        p[pre + "tc.skip.w"] = _uniform(rng, (cout, cout), cout)
        p[pre + "tc.skip.b"] = np.zeros(cout)
        p[pre + "tc.bn.scale"] = np.ones(cout)
        p[pre + "tc.bn.shift"] = np.zeros(cout)
    c_last = cfg.channels[-1]
    p["head.w"] = _uniform(rng, (c_last, cfg.classes), c_last)
    p["head.b"] = np.zeros(cfg.classes)
    p["aux.w"] = _uniform(rng, (c_last,), c_last)
    p["aux.b"] = np.zeros(1)
    return p


def init_state(cfg: ModelConfig) -> dict[str, np.ndarray]:
    """Fresh normalization running statistics (mean 0, variance 1)."""
    state: dict[str, np.ndarray] = {}
    for l in range(cfg.n_blocks):
        _, cout = cfg.block_channels(l)
        for tag in ("spat.bn", "tc.bn"):
            state[f"b{l}.{tag}.mean"] = np.zeros(cout)
            state[f"b{l}.{tag}.var"] = np.ones(cout)
    return state


def param_count(params: dict[str, np.ndarray]) -> int:
    return int(sum(a.size for a in params.values()))


def params_checksum(params: dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    for key in sorted(params):
        h.update(key.encode())
        h.update(np.ascontiguousarray(params[key], dtype=float).tobytes())
    return h.hexdigest()


# --- building blocks --------------------------------------------------------


def sinusoidal_pe(joints: int, channels: int) -> np.ndarray:
    """Fixed sinusoidal position table over the joint index, V x C."""
    pe = np.zeros((joints, channels))
    pos = np.arange(joints)[:, None].astype(float)
    idx = np.arange(0, channels, 2).astype(float)
    div = np.exp(-math.log(10000.0) * idx / channels)
    pe[:, 0::2] = np.sin(pos * div)
    pe[:, 1::2] = np.cos(pos * div[: pe[:, 1::2].shape[1]])
    return pe


def embed_input(seq_or_data, w0: np.ndarray, pe: np.ndarray) -> np.ndarray:
    """Linear joint embedding plus position table: X W0 + PE, per frame."""
    data = getattr(seq_or_data, "data", seq_or_data)
    data = np.asarray(data, dtype=float)
    if data.shape[-1] != w0.shape[0]:
        raise DimensionMismatch("coordinate dims must match embedding rows")
    if pe.shape != (data.shape[-2], w0.shape[1]):
        raise DimensionMismatch("position table must be V x C1")
    return data @ w0 + pe


def _batchnorm(x: np.ndarray, scale: np.ndarray, shift: np.ndarray,
               mean: np.ndarray | None, var: np.ndarray | None,
               training: bool, eps: float = 1e-5) -> np.ndarray:
    if training or mean is None:
        mean = x.mean(axis=(0, 1, 2))
        var = x.var(axis=(0, 1, 2))
    xhat = (x - mean) / np.sqrt(var + eps)
    return scale * xhat + shift


def _temporal_conv(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                   dilation: int, stride: int) -> np.ndarray:
    """Same-padded dilated convolution along the frame axis.

    x: (B, T, V, Cin); w: (k, Cin, Cout).  Output frames: ceil(T / stride).
    """
    k = w.shape[0]
    t = x.shape[1]
    extent = (k - 1) * dilation + 1
    if t < extent:
        raise TooShort(f"T={t} below receptive extent {extent}")
    pad_left = (extent - 1) // 2
    pad_right = extent - 1 - pad_left
    xp = np.pad(x, ((0, 0), (pad_left, pad_right), (0, 0), (0, 0)))
    t_out = -(-t // stride)
    out = np.zeros(x.shape[:1] + (t_out,) + x.shape[2:3] + (w.shape[2],))
    for dt in range(k):
        start = dt * dilation
        seg = xp[:, start: start + (t_out - 1) * stride + 1: stride]
        out += seg @ w[dt]
    return out + b


def _temporal_maxpool(x: np.ndarray, window: int, stride: int) -> np.ndarray:
    t = x.shape[1]
    if t < window:
        raise TooShort(f"T={t} below pool window {window}")
    if window == 1:
        return x[:, ::stride]
    pad_left = (window - 1) // 2
    pad_right = window - 1 - pad_left
    xp = np.pad(x, ((0, 0), (pad_left, pad_right), (0, 0), (0, 0)),
                constant_values=-np.inf)
    t_out = -(-t // stride)
    out = np.full(x.shape[:1] + (t_out,) + x.shape[2:], -np.inf)
    for dt in range(window):
        seg = xp[:, dt: dt + (t_out - 1) * stride + 1: stride]
        out = np.maximum(out, seg)
    return out


def ms_tc_forward(feats: np.ndarray, tc: dict[str, np.ndarray],
                  dilations: tuple[int, int],
                  pool_window: int, stride: int) -> np.ndarray:
    """Multi-scale temporal block: two dilated branches, pooling, skip.

    Branch outputs are summed; a stride > 1 halves the frame axis in every
    branch.  ``feats`` may be (T, V, C) or batched (B, T, V, C).
    """
    squeeze = feats.ndim == 3
    x = feats[None] if squeeze else feats
    out = None
    for br, dil in zip(("d1", "d2"), dilations):
        y = x @ tc[f"{br}.red.w"] + tc[f"{br}.red.b"]
        y = _temporal_conv(y, tc[f"{br}.conv.w"], tc[f"{br}.conv.b"], dil, stride)
        y = y @ tc[f"{br}.exp.w"] + tc[f"{br}.exp.b"]
        out = y if out is None else out + y
    y = _temporal_maxpool(x, pool_window, stride)
    out = out + (y @ tc["mp.w"] + tc["mp.b"])
    y = x[:, ::stride]
    out = out + (y @ tc["skip.w"] + tc["skip.b"])
    return out[0] if squeeze else out


def _block_attention(pooled: np.ndarray, params: dict[str, np.ndarray],
                     prefix: str) -> np.ndarray:
    """Batched refined attention from time-pooled features (B, V, C)."""
    q = pooled @ params[prefix + "att.wq"]  # (B, V, R)
    k = pooled @ params[prefix + "att.wk"]
    a_tilde = np.tanh(q.transpose(0, 2, 1)[:, :, :, None]
                      - k.transpose(0, 2, 1)[:, :, None, :])
    refined = np.einsum("r,brij->bij", params[prefix + "att.w3"], a_tilde)
    gamma = float(params[prefix + "att.gamma"][0])
    return params[prefix + "att.topo"][None] + gamma * refined


def _power_sum_batch(a_bar: np.ndarray, beta: float, hops: int) -> np.ndarray:
    b, v, _ = a_bar.shape
    acc = np.broadcast_to(beta * np.eye(v), (b, v, v)).copy()
    power = np.broadcast_to(np.eye(v), (b, v, v)).copy()
    w = beta
    for _ in range(hops):
        power = power @ a_bar
        w *= 1.0 - beta
        acc += w * power
    return acc


def model_forward(inputs, params: dict[str, np.ndarray], cfg: ModelConfig,
                  state: dict[str, np.ndarray] | None = None,
                  training: bool = False,
                  pe: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Run the encoder and main head.

    ``inputs`` is a sequence, a (T, V, d) array, or a batched (B, T, V, d)
    array.  Returns (logits, tapped features): logits (B, M) and the
    configured block's output pooled over frames, (B, V, C).  Single inputs
    get the batch axis squeezed away.  ``pe`` overrides the fixed sinusoidal
    position table (shape V x C1).
    """
    data = getattr(inputs, "data", inputs)
    data = np.asarray(data, dtype=float)
    squeeze = data.ndim == 3
    if squeeze:
        data = data[None]
    if data.ndim != 4:
        raise DimensionMismatch(f"expected (B, T, V, d) input, got ndim={data.ndim}")
    if data.shape[1] != cfg.frames or data.shape[2] != cfg.joints:
        raise DimensionMismatch(
            f"input is T={data.shape[1]}, V={data.shape[2]}; "
            f"config wants T={cfg.frames}, V={cfg.joints}"
        )
    if data.shape[3] != cfg.in_dims:
        raise DimensionMismatch("coordinate dims mismatch")
    if state is None:
        state = init_state(cfg)

    if pe is None:
        pe = sinusoidal_pe(cfg.joints, cfg.channels[0])
    f = data @ params["embed.w"] + params["embed.b"] + pe
    theta = None
    for l in range(cfg.n_blocks):
        cin, cout = cfg.block_channels(l)
        stride = cfg.strides[l]
        pre = f"b{l}."
        a_bar = _block_attention(f.mean(axis=1), params, pre)
        a_script = _power_sum_batch(a_bar, cfg.beta, cfg.block_hops(l))
        g = np.einsum("bij,btjc->btic", a_script, f) @ params[pre + "spat.w"]
        g = g + params[pre + "spat.b"]
        g = _batchnorm(g, params[pre + "spat.bn.scale"], params[pre + "spat.bn.shift"],
                       state.get(pre + "spat.bn.mean"), state.get(pre + "spat.bn.var"),
                       training)
        res = f @ params[pre + "spat.res.w"] if cin != cout else f
        s = np.maximum(g + res, 0.0)

        tc = {k[len(pre) + 3:]: v for k, v in params.items()
              if k.startswith(pre + "tc.") and ".bn." not in k}
        y = ms_tc_forward(s, tc, cfg.tc_dilations, cfg.tc_pool, stride)
        y = _batchnorm(y, params[pre + "tc.bn.scale"], params[pre + "tc.bn.shift"],
                       state.get(pre + "tc.bn.mean"), state.get(pre + "tc.bn.var"),
                       training)
        f = np.maximum(y + s[:, ::stride], 0.0)
        if l + 1 == cfg.aux_tap:
            theta = f.mean(axis=1)
    logits = f.mean(axis=(1, 2)) @ params["head.w"] + params["head.b"]
    assert theta is not None
    if squeeze:
        return logits[0], theta[0]
    return logits, theta


def update_running_state(inputs, params: dict[str, np.ndarray], cfg: ModelConfig,
                         state: dict[str, np.ndarray], momentum: float = 0.1) -> None:
    """Refresh normalization running statistics from one training batch."""
    data = getattr(inputs, "data", inputs)
    data = np.asarray(data, dtype=float)
    if data.ndim == 3:
        data = data[None]
    pe = sinusoidal_pe(cfg.joints, cfg.channels[0])
    f = data @ params["embed.w"] + params["embed.b"] + pe
    for l in range(cfg.n_blocks):
        cin, cout = cfg.block_channels(l)
        stride = cfg.strides[l]
        pre = f"b{l}."
        a_bar = _block_attention(f.mean(axis=1), params, pre)
        a_script = _power_sum_batch(a_bar, cfg.beta, cfg.block_hops(l))
        g = np.einsum("bij,btjc->btic", a_script, f) @ params[pre + "spat.w"]
        g = g + params[pre + "spat.b"]
        for tag, x in ((pre + "spat.bn", g),):
            state[tag + ".mean"] = (1 - momentum) * state[tag + ".mean"] \
                + momentum * x.mean(axis=(0, 1, 2))
            state[tag + ".var"] = (1 - momentum) * state[tag + ".var"] \
                + momentum * x.var(axis=(0, 1, 2))
        g = _batchnorm(g, params[pre + "spat.bn.scale"], params[pre + "spat.bn.shift"],
                       None, None, True)
        res = f @ params[pre + "spat.res.w"] if cin != cout else f
        s = np.maximum(g + res, 0.0)
        tc = {k[len(pre) + 3:]: v for k, v in params.items()
              if k.startswith(pre + "tc.") and ".bn." not in k}
        y = ms_tc_forward(s, tc, cfg.tc_dilations, cfg.tc_pool, stride)
        state[pre + "tc.bn.mean"] = (1 - momentum) * state[pre + "tc.bn.mean"] \
            + momentum * y.mean(axis=(0, 1, 2))
        state[pre + "tc.bn.var"] = (1 - momentum) * state[pre + "tc.bn.var"] \
            + momentum * y.var(axis=(0, 1, 2))
        y = _batchnorm(y, params[pre + "tc.bn.scale"], params[pre + "tc.bn.shift"],
                       None, None, True)
        f = np.maximum(y + s[:, ::stride], 0.0)


# --- heads and losses -------------------------------------------------------


def pcac_logits(theta_n: np.ndarray, templates: ClassTemplateSet,
                head_w: np.ndarray, head_b: float) -> np.ndarray:
    """Template-conditioned class logits from tapped features.

    Each class template mixes the V x C tapped features across joints; a
    C -> 1 map plus averaging over joints yields one logit per class.
    """
    theta_n = np.asarray(theta_n, dtype=float)
    if theta_n.ndim != 2:
        raise DimensionMismatch("tapped features must be V x C")
    if templates.joints != theta_n.shape[0]:
        raise DimensionMismatch(
            f"templates cover V={templates.joints}, features have V={theta_n.shape[0]}"
        )
    head_w = np.asarray(head_w, dtype=float).reshape(-1)
    if head_w.shape[0] != theta_n.shape[1]:
        raise DimensionMismatch("head weight length must match feature channels")
    mixed = np.einsum("kij,jc->kic", templates.templates, theta_n)
    vals = mixed @ head_w + float(head_b)  # (M, V)
    return vals.mean(axis=1)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def aux_loss(logits: np.ndarray, label: int) -> float:
    """Softmax cross-entropy, max-shift stabilized."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max()
    return float(np.log(np.exp(z).sum()) - z[label])


@dataclass
class LossBreakdown:
    primary: float
    aux: float
    lam: float
    total: float = field(init=False)

    def __post_init__(self):
        self.total = self.primary + self.lam * self.aux


def total_loss(primary: float, aux: float, lam: float) -> LossBreakdown:
    if not (math.isfinite(primary) and math.isfinite(aux)):
        raise DimensionMismatch("losses must be finite")
    return LossBreakdown(primary=primary, aux=aux, lam=lam)


def ensemble_scores(streams: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Sum per-stream softmax scores; argmax with lowest-index tie-break.

    Each stream is an (S, M) logit array over the same samples.  Returns
    (fused scores (S, M), predictions (S,)).
    """
    if not streams:
        raise ShapeMismatch("need at least one stream")
    arrs = [np.atleast_2d(np.asarray(s, dtype=float)) for s in streams]
    shape = arrs[0].shape
    for k, a in enumerate(arrs):
        if a.shape != shape:
            raise ShapeMismatch(f"stream {k} has shape {a.shape}, expected {shape}")
    fused = np.zeros(shape)
    for a in arrs:
        fused += softmax(a)
    return fused, fused.argmax(axis=1)
