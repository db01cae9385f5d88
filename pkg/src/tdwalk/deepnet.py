"""Fully connected ReLU network trained jointly by batch-1 SGD.

Reproduces the experimental setup at desk scale: a small MLP, TD or square
loss, data from a lazy hypercube walk or i.i.d. uniform draws, and a run
record tracking train loss, uniform test MSE/sign-accuracy, and selected
Fourier coefficients of the predictor against fresh samples consumed.

Sample accounting: one walk step or one i.i.d. draw is one fresh sample, so
with overlapping pairs the iteration count equals the fresh-sample count
(the initial point is free).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .boolfn import BooleanFunction
from .loss import TdParams, td_loss, td_loss_output_grads
from .records import RunRecord
from .rng import substream
from .walk import PairSample, WalkConfig, init_walk, iid_stream, pair_stream, step


@dataclass
class MlpNet:
    """Affine-ReLU chain with a linear final layer; weights[l] is (fan_out, fan_in)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]


def mlp_init(layer_dims: list[int], seed: int) -> MlpNet:
    """Init every weight and bias i.i.d. uniform on [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    if len(layer_dims) < 2 or layer_dims[-1] != 1:
        raise ValueError("layer_dims needs at least input and a final output of 1")
    if any(d < 1 for d in layer_dims):
        raise ValueError("all layer dims must be positive")
    rng = substream(seed, "net_init")
    weights = []
    biases = []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpNet(weights, biases)


def _forward_cache(net: MlpNet, x: np.ndarray):
    h = x.astype(float)
    acts = [h]
    masks = []
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = w @ h + b
        mask = z >= 0.0
        h = z * mask
        acts.append(h)
        masks.append(mask)
    y = float(net.weights[-1] @ h + net.biases[-1])
    return y, acts, masks


def mlp_forward(net: MlpNet, x: np.ndarray) -> float:
    x = np.asarray(x)
    if x.shape != (net.weights[0].shape[1],):
        raise ValueError(f"point has shape {x.shape}, expected ({net.weights[0].shape[1]},)")
    return _forward_cache(net, x)[0]


def mlp_forward_many(net: MlpNet, xs: np.ndarray) -> np.ndarray:
    h = np.asarray(xs, dtype=float)
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        h = np.maximum(h @ w.T + b, 0.0)
    return (h @ net.weights[-1].T + net.biases[-1]).ravel()


def batch_predictor(net: MlpNet):
    """Read-only callable (n, d) -> (n,) over a snapshot of the net."""
    snapshot = MlpNet([w.copy() for w in net.weights], [b.copy() for b in net.biases])
    return lambda xs: mlp_forward_many(snapshot, xs)


def _deltas(net: MlpNet, masks, g: float):
    """Per-layer dLoss/dz for upstream output gradient g (ReLU subgradient 1 at 0)."""
    n_layers = len(net.weights)
    out = [None] * n_layers
    delta = np.array([g])
    out[-1] = delta
    for layer in range(n_layers - 2, -1, -1):
        delta = (net.weights[layer + 1].T @ delta) * masks[layer]
        out[layer] = delta
    return out


def _accumulate(net: MlpNet, acts, deltas, grads_w, grads_b) -> None:
    for layer, (delta, h) in enumerate(zip(deltas, acts)):
        grads_w[layer] += np.outer(delta, h)
        grads_b[layer] += delta


def mlp_backward_td(
    net: MlpNet, pair: PairSample, params: TdParams
) -> tuple[list[np.ndarray], list[np.ndarray], float]:
    """Exact reverse-mode gradient of the per-pair TD loss for all parameters.

    Runs both endpoint forward passes and chains the loss output gradients
    into backprop; returns (grads_w, grads_b, loss).
    """
    yhat_prev, acts_p, masks_p = _forward_cache(net, pair.prev)
    yhat_next, acts_n, masks_n = _forward_cache(net, pair.next)
    g_prev, g_next = td_loss_output_grads(
        params, pair.y_prev, pair.y_next, yhat_prev, yhat_next
    )
    value = td_loss(params, pair.y_prev, pair.y_next, yhat_prev, yhat_next)
    grads_w = [np.zeros_like(w) for w in net.weights]
    grads_b = [np.zeros_like(b) for b in net.biases]
    if g_prev != 0.0:
        _accumulate(net, acts_p, _deltas(net, masks_p, g_prev), grads_w, grads_b)
    if g_next != 0.0:
        _accumulate(net, acts_n, _deltas(net, masks_n, g_next), grads_w, grads_b)
    return grads_w, grads_b, value


def mlp_backward_square(
    net: MlpNet, x: np.ndarray, y: float
) -> tuple[list[np.ndarray], list[np.ndarray], float]:
    """Gradient of the pointwise loss 0.5 (y - NN(x))^2."""
    yhat, acts, masks = _forward_cache(net, x)
    g = yhat - y
    grads_w = [np.zeros_like(w) for w in net.weights]
    grads_b = [np.zeros_like(b) for b in net.biases]
    if g != 0.0:
        _accumulate(net, acts, _deltas(net, masks, g), grads_w, grads_b)
    return grads_w, grads_b, 0.5 * g * g


def _batched_forward(net: MlpNet, xs: np.ndarray):
    """Forward a small row batch keeping activations and masks for backprop."""
    h = xs
    acts = [h]
    masks = []
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = h @ w.T
        z += b
        mask = z >= 0.0
        h = z * mask
        acts.append(h)
        masks.append(mask)
    out = h @ net.weights[-1].T + net.biases[-1]
    return out[:, 0], acts, masks


def _apply_batched(net: MlpNet, acts, masks, out_grads: np.ndarray, lr: float) -> None:
    """In-place SGD update from per-row output gradients (rows share the step)."""
    delta = out_grads[:, None]
    for layer in range(len(net.weights) - 1, -1, -1):
        grad_w = delta.T @ acts[layer]
        grad_b = delta.sum(axis=0)
        if layer:
            delta = (delta @ net.weights[layer]) * masks[layer - 1]
        net.weights[layer] -= lr * grad_w
        net.biases[layer] -= lr * grad_b


def _sgd_td_step(net: MlpNet, pair: PairSample, params: TdParams, lr: float) -> float:
    xs = np.empty((2, pair.prev.shape[0]))
    xs[0] = pair.prev
    xs[1] = pair.next
    outs, acts, masks = _batched_forward(net, xs)
    g_prev, g_next = td_loss_output_grads(
        params, pair.y_prev, pair.y_next, outs[0], outs[1]
    )
    value = td_loss(params, pair.y_prev, pair.y_next, outs[0], outs[1])
    _apply_batched(net, acts, masks, np.array([g_prev, g_next]), lr)
    return value


def _sgd_square_step(net: MlpNet, x: np.ndarray, y: float, lr: float) -> float:
    outs, acts, masks = _batched_forward(net, x.astype(float)[None, :])
    g = outs[0] - y
    if g != 0.0:
        _apply_batched(net, acts, masks, np.array([g]), lr)
    return 0.5 * g * g


@dataclass(frozen=True)
class TrainConfig:
    loss: str  # "td" | "square"
    data: str  # "walk" | "iid"
    lr: float
    max_iters: int
    seed: int
    alpha: float = 0.9
    flip_prob: float = 0.9
    hidden: tuple[int, ...] = (64, 64, 32)
    batch: int = 1
    stop_loss: float = 0.0  # 0 disables early stopping
    stop_window: int = 200

    def __post_init__(self) -> None:
        if self.loss not in ("td", "square"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.data not in ("walk", "iid"):
            raise ValueError(f"unknown data mode {self.data!r}")
        if self.lr <= 0 or self.max_iters < 1:
            raise ValueError("lr must be positive and max_iters >= 1")
        if self.batch != 1:
            raise ValueError("only batch size 1 is supported")
        if self.stop_loss < 0:
            raise ValueError("stop_loss must be >= 0")

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "data": self.data,
            "lr": self.lr,
            "max_iters": self.max_iters,
            "seed": self.seed,
            "alpha": self.alpha,
            "flip_prob": self.flip_prob,
            "hidden": list(self.hidden),
            "batch": self.batch,
            "stop_loss": self.stop_loss,
            "stop_window": self.stop_window,
        }


@dataclass(frozen=True)
class EvalConfig:
    every: int
    test_size: int = 8192
    test_seed: int = 20240901
    track: tuple[tuple[int, ...], ...] = ()

    def to_dict(self) -> dict:
        return {
            "every": self.every,
            "test_size": self.test_size,
            "test_seed": self.test_seed,
            "track": [list(t) for t in self.track],
        }


def _iid_pairs(f: BooleanFunction, seed: int, n: int) -> Iterator[PairSample]:
    it = iid_stream(f.dim, seed, f, n + 1)
    prev, y_prev = next(it)
    for x, y in it:
        yield PairSample(prev, x, y_prev, y)
        prev, y_prev = x, y


def _walk_points(f: BooleanFunction, cfg: WalkConfig, n: int):
    state = init_walk(cfg)
    for _ in range(n):
        step(state)
        x = state.current.copy()
        yield x, f.eval(x)


def make_data_stream(f: BooleanFunction, cfg: TrainConfig):
    """Build the data iterator matching (loss, data) of the config.

    TD losses consume overlapping consecutive pairs; the square loss consumes
    single points (one fresh walk step or draw per iteration either way).
    """
    if cfg.loss == "td":
        if cfg.data == "walk":
            walk_cfg = WalkConfig(f.dim, cfg.flip_prob, cfg.seed)
            return pair_stream(init_walk(walk_cfg), f, cfg.max_iters)
        return _iid_pairs(f, cfg.seed, cfg.max_iters)
    if cfg.data == "walk":
        return _walk_points(f, WalkConfig(f.dim, cfg.flip_prob, cfg.seed), cfg.max_iters)
    return iid_stream(f.dim, cfg.seed, f, cfg.max_iters)


def _coeff_column(subset: tuple[int, ...]) -> str:
    return "coeff_" + "-".join(str(i) for i in subset)


def train_mlp(
    f: BooleanFunction,
    data,
    cfg: TrainConfig,
    evalcfg: EvalConfig,
) -> tuple[MlpNet, RunRecord]:
    """Batch-1 SGD loop with periodic uniform-test evaluation.

    Stops when the running window mean of the train loss drops below
    cfg.stop_loss (if nonzero) or after max_iters iterations. The record's
    train_loss column is that window mean.
    """
    net = mlp_init([f.dim, *cfg.hidden, 1], cfg.seed)
    params = TdParams(alpha=cfg.alpha if cfg.loss == "td" else 0.0)

    test_rng = substream(evalcfg.test_seed, "test_set")
    x_test = (2 * test_rng.integers(0, 2, size=(evalcfg.test_size, f.dim)) - 1).astype(
        np.int8
    )
    y_test = f.eval_many(x_test)
    boolean_target = bool(np.all(np.abs(np.abs(y_test) - 1.0) < 1e-9))
    chis = [np.prod(x_test[:, np.asarray(s, dtype=np.intp) - 1], axis=1) for s in evalcfg.track]

    columns = ["samples", "train_loss", "test_mse", "test_acc"]
    columns += [_coeff_column(s) for s in evalcfg.track]
    record = RunRecord(
        columns=columns,
        config={"learner": "mlp", "train": cfg.to_dict(), "eval": evalcfg.to_dict()},
        seed=cfg.seed,
    )

    window = np.zeros(cfg.stop_window)
    filled = 0
    pos = 0
    running_sum = 0.0

    def evaluate(samples: int) -> None:
        pred = mlp_forward_many(net, x_test)
        diff = pred - y_test
        mse = float(np.mean(diff * diff))
        if boolean_target:
            acc = float(np.mean(np.where(pred >= 0.0, 1.0, -1.0) == y_test))
        else:
            acc = math.nan
        mean_loss = running_sum / filled if filled else math.nan
        row = [samples, mean_loss, mse, acc]
        row += [float(np.mean(pred * chi)) for chi in chis]
        record.append(row)

    stopped = False
    t = 0
    for item in data:
        t += 1
        if cfg.loss == "td":
            value = _sgd_td_step(net, item, params, cfg.lr)
        else:
            x, y = item
            value = _sgd_square_step(net, x, y, cfg.lr)
        if filled == cfg.stop_window:
            running_sum -= window[pos]
        window[pos] = value
        running_sum += value
        pos = (pos + 1) % cfg.stop_window
        filled = min(filled + 1, cfg.stop_window)
        at_eval = t % evalcfg.every == 0 or t == cfg.max_iters
        if at_eval:
            evaluate(t)
        if (
            cfg.stop_loss > 0.0
            and filled == cfg.stop_window
            and running_sum / filled < cfg.stop_loss
        ):
            if not at_eval:
                evaluate(t)
            stopped = True
            break
    if t == 0:
        raise ValueError("data stream was empty")
    record.config["stopped_early"] = stopped
    record.config["iterations"] = t
    return net, record


def run_training(
    f: BooleanFunction, cfg: TrainConfig, evalcfg: EvalConfig
) -> tuple[MlpNet, RunRecord]:
    """Convenience wrapper: build the data stream from the config and train."""
    return train_mlp(f, make_data_stream(f, cfg), cfg, evalcfg)
