"""Finite-difference micro-trainer and its synthetic dataset.

Desk-scale training for verifying the loss wiring, not performance: the
model is kept under a 2,000-parameter budget and optimized by plain gradient
descent with central finite differences on the multi-task loss.  The loss
evaluation is the hot kernel; the backend supplies either the compiled or
the numpy implementation, both operating on a flat parameter vector with a
precomputed layout plan.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import _backend, model
from .errors import BudgetExceeded, DimensionMismatch
from .priors import ClassTemplateSet, EmbeddingTable, build_templates

__all__ = [
    "MicroDataset",
    "TrainingTrace",
    "micro_config",
    "make_micro_dataset",
    "flatten_params",
    "unflatten_params",
    "build_plan",
    "micro_loss_reference",
    "fd_gradient",
    "micro_train",
    "evaluate_accuracy",
]

FD_STEP = 1e-4
PARAM_BUDGET = 2000


@dataclass
class MicroDataset:
    """Labeled sequences plus the class templates used by the aux branch."""

    data: np.ndarray  # (B, T, V, d)
    labels: np.ndarray  # (B,)
    templates: ClassTemplateSet
    seed: int = 0


@dataclass
class TrainingTrace:
    losses: list[float]
    params: dict[str, np.ndarray]
    steps: int
    lr: float
    seed: int
    backend: str
    wall_time_s: float = 0.0
    checksum: str = field(default="")

    def __post_init__(self):
        if not self.checksum:
            self.checksum = model.params_checksum(self.params)


def micro_config(joints: int = 6, frames: int = 8, classes: int = 3) -> model.ModelConfig:
    """Two-block configuration that fits the finite-difference budget."""
    return model.ModelConfig(
        joints=joints,
        classes=classes,
        in_dims=3,
        frames=frames,
        channels=(3, 6),
        strides=(1, 1),
        beta=0.5,
        first_layer_hops=2,
        default_hops=1,
        aux_tap=2,
        reduce_ratio=4,
        tc_kernel=3,
        tc_dilations=(1, 2),
        tc_pool=3,
        tc_bottleneck=4,
    )


def make_micro_dataset(seed: int = 0, per_class: int = 3, joints: int = 6,
                       frames: int = 8, classes: int = 3) -> MicroDataset:
    """Separable synthetic motions: one moving joint pattern per class.

    Class 0 swings joint 1 along x, class 1 ramps joint 3 along z, class 2
    counter-oscillates joints 4 and 5 along y; all on a fixed chain pose with
    small seeded noise.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(frames) / frames
    base = np.zeros((joints, 3))
    base[:, 0] = 0.3 * np.arange(joints)
    samples = []
    labels = []
    for c in range(classes):
        for _ in range(per_class):
            x = np.tile(base, (frames, 1, 1))
            if c % 3 == 0:
                x[:, 1 % joints, 0] += 0.8 * np.sin(2 * np.pi * t)
            elif c % 3 == 1:
                x[:, 3 % joints, 2] += 1.2 * t
            else:
                x[:, 4 % joints, 1] += 0.8 * np.cos(2 * np.pi * t)
                x[:, 5 % joints, 1] -= 0.8 * np.cos(2 * np.pi * t)
            x += rng.normal(0.0, 0.02, size=x.shape)
            samples.append(x)
            labels.append(c)
    vectors = rng.normal(size=(classes, joints, 8))
    table = EmbeddingTable(vectors=vectors, prompt_id="p3", encoder="synthetic")
    return MicroDataset(
        data=np.stack(samples),
        labels=np.asarray(labels, dtype=np.int64),
        templates=build_templates(table),
        seed=seed,
    )


# --- flat parameter vector ---------------------------------------------------


def flatten_params(params: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(params[k], dtype=float).ravel() for k in params])


def unflatten_params(theta: np.ndarray, reference: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    pos = 0
    for k, arr in reference.items():
        n = arr.size
        out[k] = theta[pos: pos + n].reshape(arr.shape).copy()
        pos += n
    if pos != theta.size:
        raise DimensionMismatch(f"flat vector has {theta.size} entries, layout needs {pos}")
    return out


def build_plan(cfg: model.ModelConfig, params: dict[str, np.ndarray],
               templates: ClassTemplateSet) -> dict:
    """Layout plan consumed by the loss kernels: offsets, dims, constants."""
    slots: dict[str, tuple[int, tuple[int, ...]]] = {}
    pos = 0
    for k, arr in params.items():
        slots[k] = (pos, arr.shape)
        pos += arr.size
    blocks = []
    for l in range(cfg.n_blocks):
        cin, cout = cfg.block_channels(l)
        blocks.append({
            "cin": cin,
            "cout": cout,
            "stride": cfg.strides[l],
            "hops": cfg.block_hops(l),
            "r": cfg.reduce_dim(cin),
            "cb": cfg.bottleneck(cout),
            "has_res": cin != cout,
        })
    return {
        "size": pos,
        "slots": slots,
        "blocks": blocks,
        "pe": model.sinusoidal_pe(cfg.joints, cfg.channels[0]),
        "templates": np.ascontiguousarray(templates.templates),
        "lambda_aux": cfg.lambda_aux,
        "beta": cfg.beta,
        "aux_tap": cfg.aux_tap,
        "tc_kernel": cfg.tc_kernel,
        "tc_dilations": tuple(cfg.tc_dilations),
        "tc_pool": cfg.tc_pool,
        "joints": cfg.joints,
        "frames": cfg.frames,
        "in_dims": cfg.in_dims,
        "classes": cfg.classes,
        "c0": cfg.channels[0],
    }


def _view(theta: np.ndarray, plan: dict, key: str) -> np.ndarray:
    start, shape = plan["slots"][key]
    n = int(np.prod(shape)) if shape else 1
    return theta[start: start + n].reshape(shape)


def micro_loss_reference(theta: np.ndarray, data: np.ndarray,
                         labels: np.ndarray, plan: dict) -> float:
    """Numpy reference for the multi-task loss at a flat parameter vector.

    Whole-dataset batch, batch-statistics normalization; must stay
    semantically identical to the compiled kernel and to
    ``model.model_forward(training=True)`` plus the loss composition.
    """
    beta = plan["beta"]
    eps = 1e-5
    f = data @ _view(theta, plan, "embed.w") + _view(theta, plan, "embed.b") + plan["pe"]
    theta_feats = None
    for l, blk in enumerate(plan["blocks"]):
        pre = f"b{l}."
        stride = blk["stride"]
        pooled = f.mean(axis=1)
        q = pooled @ _view(theta, plan, pre + "att.wq")
        k = pooled @ _view(theta, plan, pre + "att.wk")
        diff = q[:, :, None, :] - k[:, None, :, :]  # (B, V, V, R)
        refined = np.tanh(diff) @ _view(theta, plan, pre + "att.w3")
        gamma = _view(theta, plan, pre + "att.gamma")[0]
        a_bar = _view(theta, plan, pre + "att.topo") + gamma * refined
        v = a_bar.shape[1]
        eye = np.eye(v)
        acc = beta * np.broadcast_to(eye, a_bar.shape).copy()
        power = np.broadcast_to(eye, a_bar.shape).copy()
        w = beta
        for _ in range(blk["hops"]):
            power = power @ a_bar
            w *= 1.0 - beta
            acc += w * power
        g = (acc[:, None] @ f) @ _view(theta, plan, pre + "spat.w")
        g = g + _view(theta, plan, pre + "spat.b")
        mean = g.mean(axis=(0, 1, 2))
        var = g.var(axis=(0, 1, 2))
        g = _view(theta, plan, pre + "spat.bn.scale") * (g - mean) / np.sqrt(var + eps) \
            + _view(theta, plan, pre + "spat.bn.shift")
        res = f @ _view(theta, plan, pre + "spat.res.w") if blk["has_res"] else f
        s = np.maximum(g + res, 0.0)

        out = None
        for br, dil in zip(("d1", "d2"), plan["tc_dilations"]):
            y = s @ _view(theta, plan, pre + f"tc.{br}.red.w") \
                + _view(theta, plan, pre + f"tc.{br}.red.b")
            y = model._temporal_conv(y, _view(theta, plan, pre + f"tc.{br}.conv.w"),
                                     _view(theta, plan, pre + f"tc.{br}.conv.b"),
                                     dil, stride)
            y = y @ _view(theta, plan, pre + f"tc.{br}.exp.w") \
                + _view(theta, plan, pre + f"tc.{br}.exp.b")
            out = y if out is None else out + y
        y = model._temporal_maxpool(s, plan["tc_pool"], stride)
        out = out + (y @ _view(theta, plan, pre + "tc.mp.w") + _view(theta, plan, pre + "tc.mp.b"))
        out = out + (s[:, ::stride] @ _view(theta, plan, pre + "tc.skip.w")
                     + _view(theta, plan, pre + "tc.skip.b"))
        mean = out.mean(axis=(0, 1, 2))
        var = out.var(axis=(0, 1, 2))
        out = _view(theta, plan, pre + "tc.bn.scale") * (out - mean) / np.sqrt(var + eps) \
            + _view(theta, plan, pre + "tc.bn.shift")
        f = np.maximum(out + s[:, ::stride], 0.0)
        if l + 1 == plan["aux_tap"]:
            theta_feats = f.mean(axis=1)

    logits = f.mean(axis=(1, 2)) @ _view(theta, plan, "head.w") + _view(theta, plan, "head.b")
    mixed = np.einsum("kij,bjc->bkic", plan["templates"], theta_feats)
    aux_logits = mixed @ _view(theta, plan, "aux.w") + _view(theta, plan, "aux.b")[0]
    aux_logits = aux_logits.mean(axis=2)  # (B, M)

    idx = np.arange(labels.shape[0])
    zm = logits - logits.max(axis=1, keepdims=True)
    main = float(np.mean(np.log(np.exp(zm).sum(axis=1)) - zm[idx, labels]))
    za = aux_logits - aux_logits.max(axis=1, keepdims=True)
    aux = float(np.mean(np.log(np.exp(za).sum(axis=1)) - za[idx, labels]))
    return main + plan["lambda_aux"] * aux


def fd_gradient(loss_fn, theta: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar loss over a flat vector."""
    g = np.empty_like(theta)
    for i in range(theta.size):
        old = theta[i]
        theta[i] = old + h
        lp = loss_fn(theta)
        theta[i] = old - h
        lm = loss_fn(theta)
        theta[i] = old
        g[i] = (lp - lm) / (2.0 * h)
    return g


def micro_train(dataset: MicroDataset, cfg: model.ModelConfig, steps: int,
                lr: float, seed: int, h: float = FD_STEP) -> TrainingTrace:
    """Gradient descent with central finite differences on the total loss.

    The auxiliary branch is active throughout training.  The trace holds the
    loss before each step plus the final loss (steps + 1 entries); identical
    seeds give identical traces.
    """
    params = init = model.init_params(cfg, seed)
    n = model.param_count(init)
    if n > PARAM_BUDGET:
        raise BudgetExceeded(f"{n} parameters exceed the budget of {PARAM_BUDGET}")
    if dataset.data.shape[1:] != (cfg.frames, cfg.joints, cfg.in_dims):
        raise DimensionMismatch("dataset tensor does not match the config")
    if dataset.templates.classes != cfg.classes:
        raise DimensionMismatch("template class count does not match the config")
    plan = build_plan(cfg, params, dataset.templates)
    data = np.ascontiguousarray(dataset.data, dtype=float)
    labels = np.ascontiguousarray(dataset.labels, dtype=np.int64)
    loss_fn = _backend.make_micro_loss(plan, data, labels)
    theta = flatten_params(params)

    t0 = time.perf_counter()
    losses: list[float] = []
    for _ in range(steps):
        losses.append(float(loss_fn(theta)))
        grad = fd_gradient(loss_fn, theta, h)
        theta -= lr * grad
    losses.append(float(loss_fn(theta)))
    trained = unflatten_params(theta, init)
    return TrainingTrace(
        losses=losses,
        params=trained,
        steps=steps,
        lr=lr,
        seed=seed,
        backend=_backend.backend_name(),
        wall_time_s=time.perf_counter() - t0,
    )


def evaluate_accuracy(params: dict[str, np.ndarray], cfg: model.ModelConfig,
                      dataset: MicroDataset) -> float:
    """Main-branch accuracy; the auxiliary branch plays no part here."""
    state = model.init_state(cfg)
    model.update_running_state(dataset.data, params, cfg, state, momentum=1.0)
    logits, _ = model.model_forward(dataset.data, params, cfg, state=state)
    return float((logits.argmax(axis=1) == dataset.labels).mean())
