"""Stacks of implicit blocks with affine lift/projection, losses, training.

A model is ``output_act(proj(block_L(...block_1(lift(x))...)))`` where every
block shares one width, one theta, and one step size ``h = horizon / depth``
so that different depths discretize the same underlying flow. Training is
plain mini-batch gradient descent with a seeded shuffle, deterministic down
to the bit for a fixed seed.

The smoothness regularizer penalizes differences between consecutive
layers' parameter vectors,

    R = (reg_coeff / L) * sum_{k=2..L} ||w_k - w_{k-1}||^2,

with ``w_k`` the concatenation of layer k's matrix and bias entries. Lift
and projection parameters stay outside both the regularizer and the
block-parameter counts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import implicitblock as ib
from . import numkit
from .errors import (
    DimensionMismatchError,
    NonFiniteLossError,
    SingularMatrixError,
    SolverDivergedError,
)
from .implicitblock import ActivationKind, BlockParams, ImplicitBlockConfig, WeightMode

CHECKPOINT_FORMAT = "implicitnet-checkpoint"
CHECKPOINT_VERSION = 1

# Probability clamp for the cross-entropy loss.
P_EPS = 1e-12


class LossKind(Enum):
    SQUARED_ERROR = "squared_error"
    BINARY_CROSS_ENTROPY = "binary_cross_entropy"


@dataclass
class ModelSpec:
    """Architecture hyperparameters; ``h = horizon / depth``."""

    input_dim: int
    hidden_dim: int
    output_dim: int
    depth: int
    theta: float
    horizon: float = 1.0
    activation: ActivationKind = ActivationKind.TANH
    output_activation: ActivationKind = ActivationKind.IDENTITY
    weight_mode: WeightMode = WeightMode.RAW
    reg_coeff: float = 0.1
    paper_param_grad: bool = field(default=False)

    def __post_init__(self):
        for name in ("input_dim", "hidden_dim", "output_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.reg_coeff < 0:
            raise ValueError(f"reg_coeff must be nonnegative, got {self.reg_coeff}")

    @property
    def h(self) -> float:
        if self.depth == 0:
            raise ValueError("h is undefined for depth-0 models")
        return self.horizon / self.depth

    def block_config(self, solver_tol: float = 1e-10, solver_max_iter: int = 100) -> ImplicitBlockConfig:
        return ImplicitBlockConfig(
            theta=self.theta,
            h=self.h,
            activation=self.activation,
            solver_tol=solver_tol,
            solver_max_iter=solver_max_iter,
            paper_param_grad=self.paper_param_grad,
        )


@dataclass
class Affine:
    w: np.ndarray
    b: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.w @ v + (self.b if v.ndim == 1 else self.b[:, None])


@dataclass
class Model:
    lift: Affine
    blocks: list[BlockParams]
    proj: Affine
    spec: ModelSpec


@dataclass
class TrainConfig:
    learning_rate: float
    batch_size: int
    epochs: int
    seed: int = 0
    loss: LossKind = LossKind.SQUARED_ERROR
    reversible: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class TrainRecord:
    """Per-epoch history; lengths equal the number of completed epochs."""

    train_loss: list[float]
    val_loss: list[float]
    val_accuracy: list[float] | None
    diverged: bool


@dataclass
class ModelGrads:
    """Gradients mirroring the model's parameter layout."""

    lift_w: np.ndarray
    lift_b: np.ndarray
    block_a: list[np.ndarray]
    block_b: list[np.ndarray]
    proj_w: np.ndarray
    proj_b: np.ndarray


def init_model(spec: ModelSpec, seed) -> Model:
    """Glorot-uniform matrices, zero biases; draw order lift, blocks, proj."""
    rng = seed if isinstance(seed, np.random.Generator) else numkit.make_rng(seed)
    lift = Affine(
        numkit.glorot_uniform(rng, spec.input_dim, spec.hidden_dim),
        np.zeros(spec.hidden_dim),
    )
    blocks = [
        BlockParams(
            numkit.glorot_uniform(rng, spec.hidden_dim, spec.hidden_dim),
            np.zeros(spec.hidden_dim),
            spec.weight_mode,
        )
        for _ in range(spec.depth)
    ]
    proj = Affine(
        numkit.glorot_uniform(rng, spec.hidden_dim, spec.output_dim),
        np.zeros(spec.output_dim),
    )
    return Model(lift, blocks, proj, spec)


def _forward_arrays(m: Model, x: np.ndarray, keep_tapes: bool = True):
    """Run the whole stack; returns (out, proj_preact, last_hidden, tapes)."""
    hid = m.lift.apply(x)
    tapes: list[ib.TapeEntry] = []
    if m.blocks:
        cfg = m.spec.block_config()
        for i, blk in enumerate(m.blocks):
            try:
                hid, tape = ib.forward(cfg, blk, hid)
            except SolverDivergedError as exc:
                exc.layer = i
                raise
            if keep_tapes:
                tapes.append(tape)
    o = m.proj.apply(hid)
    out = m.spec.output_activation.apply(o)
    return out, o, hid, tapes


def model_forward(m: Model, x) -> tuple[np.ndarray, list[ib.TapeEntry]]:
    """Evaluate the model on one state ``(input_dim,)`` or a batch ``(input_dim, B)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != m.spec.input_dim:
        raise DimensionMismatchError(
            f"input shape {x.shape} does not match input_dim {m.spec.input_dim}"
        )
    out, _, _, tapes = _forward_arrays(m, x)
    return out, tapes


def _data_loss(kind: LossKind, out: np.ndarray, targets: np.ndarray) -> float:
    batch = 1 if out.ndim == 1 else out.shape[1]
    if kind is LossKind.SQUARED_ERROR:
        d = out - targets
        return 0.5 * float((d * d).sum()) / batch
    p = np.clip(out, P_EPS, 1.0 - P_EPS)
    t = targets
    return -float((t * np.log(p) + (1.0 - t) * np.log1p(-p)).sum()) / batch


def _data_loss_grad(kind: LossKind, out: np.ndarray, targets: np.ndarray) -> np.ndarray:
    batch = 1 if out.ndim == 1 else out.shape[1]
    if kind is LossKind.SQUARED_ERROR:
        return (out - targets) / batch
    p = np.clip(out, P_EPS, 1.0 - P_EPS)
    t = targets
    return (-t / p + (1.0 - t) / (1.0 - p)) / batch


def regularizer(m: Model) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Layer-smoothness penalty and its exact per-block gradients."""
    depth = len(m.blocks)
    if depth < 2 or m.spec.reg_coeff == 0.0:
        zeros = [(np.zeros_like(b.a), np.zeros_like(b.b)) for b in m.blocks]
        return 0.0, zeros
    n = m.spec.hidden_dim
    stacked = np.stack([np.concatenate([b.a.ravel(), b.b]) for b in m.blocks])
    c = m.spec.reg_coeff / depth
    diffs = stacked[1:] - stacked[:-1]
    value = c * float((diffs * diffs).sum())
    grad = np.zeros_like(stacked)
    grad[1:] += 2.0 * c * diffs
    grad[:-1] -= 2.0 * c * diffs
    per_block = [(grad[k, : n * n].reshape(n, n), grad[k, n * n :]) for k in range(depth)]
    return value, per_block


def _loss_and_grad_arrays(
    m: Model,
    x: np.ndarray,
    targets: np.ndarray,
    kind: LossKind,
    reversible: bool = False,
):
    """Full objective (mean data loss + regularizer) and all gradients.

    Returns ``(total, data_loss, grads, input_grad)``. With ``reversible``
    and ``theta > 0`` no tapes are kept: hidden states are rebuilt backward
    by inverting each block, so peak storage stays at one layer.
    """
    reversible = reversible and m.spec.theta > 0.0 and bool(m.blocks)
    out, o, hid, tapes = _forward_arrays(m, x, keep_tapes=not reversible)

    data = _data_loss(kind, out, targets)
    reg_value, reg_grads = regularizer(m)
    total = data + reg_value
    if not np.isfinite(total):
        raise NonFiniteLossError(f"loss is {total}")

    d_out = _data_loss_grad(kind, out, targets)
    d_o = m.spec.output_activation.deriv(o) * d_out
    if d_o.ndim == 1:
        proj_w = np.outer(d_o, hid)
        proj_b = d_o.copy()
    else:
        proj_w = d_o @ hid.T
        proj_b = d_o.sum(axis=1)
    d_hid = m.proj.w.T @ d_o

    block_a: list[np.ndarray] = [None] * len(m.blocks)
    block_b: list[np.ndarray] = [None] * len(m.blocks)
    if m.blocks:
        cfg = m.spec.block_config()
        if reversible:
            y = hid
            for i in range(len(m.blocks) - 1, -1, -1):
                blk = m.blocks[i]
                x_rec = ib.reconstruct_input(cfg, blk, y)
                tape = ib.make_tape(cfg, blk, x_rec, y)
                d_hid, ga, gb = ib.backward(cfg, blk, tape, d_hid)
                block_a[i], block_b[i] = ga, gb
                y = x_rec
        else:
            for i in range(len(m.blocks) - 1, -1, -1):
                d_hid, ga, gb = ib.backward(cfg, m.blocks[i], tapes[i], d_hid)
                block_a[i], block_b[i] = ga, gb
        for i, (rga, rgb) in enumerate(reg_grads):
            block_a[i] = block_a[i] + rga
            block_b[i] = block_b[i] + rgb

    if d_hid.ndim == 1:
        lift_w = np.outer(d_hid, x)
        lift_b = d_hid.copy()
    else:
        lift_w = d_hid @ x.T
        lift_b = d_hid.sum(axis=1)
    input_grad = m.lift.w.T @ d_hid

    grads = ModelGrads(lift_w, lift_b, block_a, block_b, proj_w, proj_b)
    return total, data, grads, input_grad


def loss_and_grad(m: Model, batch, cfg: TrainConfig) -> tuple[float, ModelGrads]:
    """Mean loss plus regularizer over a batch of ``(x, target)`` pairs."""
    if not batch:
        raise ValueError("batch must be nonempty")
    x = np.stack([np.asarray(p[0], dtype=float) for p in batch], axis=1)
    t = np.stack([np.asarray(p[1], dtype=float) for p in batch], axis=1)
    total, _, grads, _ = _loss_and_grad_arrays(m, x, t, cfg.loss, cfg.reversible)
    return total, grads


def _apply_update(m: Model, grads: ModelGrads, lr: float) -> None:
    m.lift.w -= lr * grads.lift_w
    m.lift.b -= lr * grads.lift_b
    for blk, ga, gb in zip(m.blocks, grads.block_a, grads.block_b):
        blk.a -= lr * ga
        blk.b -= lr * gb
    m.proj.w -= lr * grads.proj_w
    m.proj.b -= lr * grads.proj_b


def evaluate(m: Model, inputs: np.ndarray, targets: np.ndarray, kind: LossKind):
    """Mean data loss over a whole set; accuracy too for binary targets."""
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    out, _, _, _ = _forward_arrays(m, inputs.T, keep_tapes=False)
    loss = _data_loss(kind, out, targets.T)
    accuracy = None
    if kind is LossKind.BINARY_CROSS_ENTROPY:
        pred = (out >= 0.5).astype(float)
        accuracy = float((pred == targets.T).mean())
    return loss, accuracy


def train(m: Model, train_set, val_set, cfg: TrainConfig) -> TrainRecord:
    """Mini-batch gradient descent; mutates ``m`` in place.

    Batches are drawn by a seeded shuffle each epoch (the trailing short
    batch is kept). A non-finite loss or a failed block solve stops
    training early with ``diverged=True``; the record then holds the
    epochs completed before the failure.
    """
    rng = numkit.make_rng(cfg.seed)
    x_train = np.asarray(train_set.inputs, dtype=float)
    t_train = np.asarray(train_set.targets, dtype=float)
    n = x_train.shape[0]
    want_acc = cfg.loss is LossKind.BINARY_CROSS_ENTROPY

    train_hist: list[float] = []
    val_hist: list[float] = []
    acc_hist: list[float] = []
    diverged = False

    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        batch_losses = []
        try:
            for start in range(0, n, cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                _, data, grads, _ = _loss_and_grad_arrays(
                    m, x_train[idx].T, t_train[idx].T, cfg.loss, cfg.reversible
                )
                _apply_update(m, grads, cfg.learning_rate)
                batch_losses.append(data)
            val_loss, val_acc = evaluate(m, val_set.inputs, val_set.targets, cfg.loss)
        except (NonFiniteLossError, SolverDivergedError, SingularMatrixError):
            diverged = True
            break
        if not np.isfinite(val_loss):
            diverged = True
            break
        train_hist.append(float(np.mean(batch_losses)))
        val_hist.append(float(val_loss))
        if want_acc:
            acc_hist.append(float(val_acc))

    return TrainRecord(train_hist, val_hist, acc_hist if want_acc else None, diverged)


def param_count(m: Model, blocks_only: bool = False) -> int:
    """Number of trainable scalars; ``blocks_only`` skips lift and proj."""
    blocks = sum(b.a.size + b.b.size for b in m.blocks)
    if blocks_only:
        return blocks
    return blocks + m.lift.w.size + m.lift.b.size + m.proj.w.size + m.proj.b.size


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_coord: str
    passed: bool
    coords_checked: int
    # per parameter group: (max relative error, offending coordinate)
    group_errors: dict[str, tuple[float, str]]

    def failing_groups(self, tol: float):
        bad = [(g, e, c) for g, (e, c) in self.group_errors.items() if e > tol]
        return sorted(bad, key=lambda item: -item[1])


def _loss_only(m: Model, x: np.ndarray, targets: np.ndarray, kind: LossKind) -> float:
    out, _, _, _ = _forward_arrays(m, x, keep_tapes=False)
    value, _ = regularizer(m)
    return _data_loss(kind, out, targets) + value


def gradcheck(
    m: Model,
    sample,
    tol: float = 1e-5,
    loss: LossKind = LossKind.SQUARED_ERROR,
    fd_step: float = 1e-6,
) -> GradCheckReport:
    """Central finite differences over every parameter and the input.

    Relative error uses denominator ``1 + |numeric value|``. The report
    names the worst coordinate, e.g. ``blocks[3].a[2,1]``.
    """
    x_vec = np.asarray(sample[0], dtype=float)
    t_vec = np.asarray(sample[1], dtype=float)
    x = x_vec[:, None].copy()
    t = t_vec[:, None]

    _, _, grads, input_grad = _loss_and_grad_arrays(m, x, t, loss)

    groups = [
        ("lift.w", m.lift.w, grads.lift_w),
        ("lift.b", m.lift.b, grads.lift_b),
    ]
    for i, blk in enumerate(m.blocks):
        groups.append((f"blocks[{i}].a", blk.a, grads.block_a[i]))
        groups.append((f"blocks[{i}].b", blk.b, grads.block_b[i]))
    groups.append(("proj.w", m.proj.w, grads.proj_w))
    groups.append(("proj.b", m.proj.b, grads.proj_b))
    groups.append(("input", x, input_grad))

    worst = 0.0
    worst_coord = "none"
    checked = 0
    group_errors: dict[str, tuple[float, str]] = {}
    for name, arr, analytic in groups:
        group_worst, group_coord = 0.0, "none"
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            saved = arr[idx]
            arr[idx] = saved + fd_step
            up = _loss_only(m, x, t, loss)
            arr[idx] = saved - fd_step
            down = _loss_only(m, x, t, loss)
            arr[idx] = saved
            numeric = (up - down) / (2.0 * fd_step)
            rel = abs(float(np.asarray(analytic)[idx]) - numeric) / (1.0 + abs(numeric))
            checked += 1
            coord = f"{name}[{','.join(map(str, idx))}]"
            if rel > group_worst:
                group_worst, group_coord = rel, coord
            if rel > worst:
                worst, worst_coord = rel, coord
        group_errors[name] = (group_worst, group_coord)
    return GradCheckReport(worst, worst_coord, worst <= tol, checked, group_errors)


def save_model(m: Model, path) -> None:
    """Write a version-1 JSON checkpoint (exact float round-trip)."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": {
            "input_dim": m.spec.input_dim,
            "hidden_dim": m.spec.hidden_dim,
            "output_dim": m.spec.output_dim,
            "depth": m.spec.depth,
            "theta": m.spec.theta,
            "horizon": m.spec.horizon,
            "activation": m.spec.activation.value,
            "output_activation": m.spec.output_activation.value,
            "weight_mode": m.spec.weight_mode.value,
            "reg_coeff": m.spec.reg_coeff,
            "paper_param_grad": m.spec.paper_param_grad,
        },
        "lift": {"w": m.lift.w.tolist(), "b": m.lift.b.tolist()},
        "blocks": [{"a": b.a.tolist(), "b": b.b.tolist()} for b in m.blocks],
        "proj": {"w": m.proj.w.tolist(), "b": m.proj.b.tolist()},
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path) -> Model:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"not a {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} file: {path}")
    s = doc["spec"]
    spec = ModelSpec(
        input_dim=s["input_dim"],
        hidden_dim=s["hidden_dim"],
        output_dim=s["output_dim"],
        depth=s["depth"],
        theta=s["theta"],
        horizon=s["horizon"],
        activation=ActivationKind(s["activation"]),
        output_activation=ActivationKind(s["output_activation"]),
        weight_mode=WeightMode(s["weight_mode"]),
        reg_coeff=s["reg_coeff"],
        paper_param_grad=s["paper_param_grad"],
    )
    lift = Affine(np.array(doc["lift"]["w"], dtype=float), np.array(doc["lift"]["b"], dtype=float))
    blocks = [
        BlockParams(np.array(b["a"], dtype=float), np.array(b["b"], dtype=float), spec.weight_mode)
        for b in doc["blocks"]
    ]
    proj = Affine(np.array(doc["proj"]["w"], dtype=float), np.array(doc["proj"]["b"], dtype=float))
    return Model(lift, blocks, proj, spec)
