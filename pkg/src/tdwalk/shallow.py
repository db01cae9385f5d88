"""Two-layer ReLU network and the layerwise TD-SGD training procedure.

Phase I trains only the first layer on one large batch of consecutive walk
pairs with the increment-only (alpha = 1) TD loss. From the all-zero weight
init the update has a closed form proportional to sum_t dy_t (x_t - x_{t-1}),
so it is exactly zero outside the target's support. Phase II redraws the
biases, freezes the first layer, and fits the output weights by
ridge-regularized square-loss SGD on fresh single walk samples.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .boolfn import BooleanFunction, support_patterns
from .loss import TdParams, td_loss_output_grads
from .records import RunRecord
from .rng import substream
from .walk import PairSample, WalkConfig, init_walk, pair_stream, step


@dataclass
class TwoLayerNet:
    """N hidden ReLU units: first_layer (N, d), output (N,), biases (N,)."""

    first_layer: np.ndarray
    output: np.ndarray
    biases: np.ndarray

    @property
    def n_hidden(self) -> int:
        return self.first_layer.shape[0]

    @property
    def dim(self) -> int:
        return self.first_layer.shape[1]


@dataclass(frozen=True)
class Phase1Config:
    batch_size: int
    lr: float
    init_scale: float
    steps: int = 1

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.steps < 1:
            raise ValueError("batch_size and steps must be >= 1")
        if self.lr <= 0 or self.init_scale <= 0:
            raise ValueError("lr and init_scale must be positive")


@dataclass(frozen=True)
class Phase2Config:
    lr: float | None  # None: min{1/M_lambda, log rule} (see phase2_step_size)
    ridge: float
    steps: int
    bias_range: float | None = None  # None: ||w||_1 + bias_margin
    # Margin scale entering the default bias range. Must sit at the target
    # non-degeneracy margin, not at the reporting threshold: biases above
    # ||w||_1 exist only inside this extra width, and without them the
    # minimum-projection pattern has all-zero features and cannot be fit.
    bias_margin: float = 1.0

    def __post_init__(self) -> None:
        if self.lr is not None and self.lr <= 0:
            raise ValueError("lr must be positive when given")
        if self.ridge < 0 or self.steps < 1:
            raise ValueError("ridge must be >= 0 and steps >= 1")
        if self.bias_range is not None and self.bias_range <= 0:
            raise ValueError("bias_range must be positive when given")
        if self.bias_margin <= 0:
            raise ValueError("bias_margin must be positive")


@dataclass
class NondegeneracyReport:
    min_margin: float
    violating_pair: tuple[np.ndarray, np.ndarray] | None
    epsilon: float


def init_algorithm1(n_hidden: int, dim: int, kappa: float) -> TwoLayerNet:
    """Algorithm start: weights 0, output weights kappa, biases 1/N, exactly."""
    if n_hidden < 1:
        raise ValueError("n_hidden must be >= 1")
    return TwoLayerNet(
        first_layer=np.zeros((n_hidden, dim)),
        output=np.full(n_hidden, float(kappa)),
        biases=np.full(n_hidden, 1.0 / n_hidden),
    )


def forward(net: TwoLayerNet, x: np.ndarray) -> float:
    x = np.asarray(x)
    if x.shape != (net.dim,):
        raise ValueError(f"point has shape {x.shape}, expected ({net.dim},)")
    pre = net.first_layer @ x.astype(float) + net.biases
    return float(net.output @ np.maximum(pre, 0.0))


def forward_many(net: TwoLayerNet, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    pre = xs @ net.first_layer.T + net.biases
    return np.maximum(pre, 0.0) @ net.output


def batch_predictor(net: TwoLayerNet):
    """Read-only callable (n, d) -> (n,) over a snapshot of the net."""
    snapshot = TwoLayerNet(
        net.first_layer.copy(), net.output.copy(), net.biases.copy()
    )
    return lambda xs: forward_many(snapshot, xs)


def phase1_closed_form_update(
    f: BooleanFunction, pairs: Iterable[PairSample], cfg: Phase1Config
) -> np.ndarray:
    """First-layer update from one batch, via the init-point closed form.

    Returns G with G_j = (kappa * lr / B) * sum_t dy_t (x_t - x_{t-1})_j; the
    same vector is added to every hidden unit's row. G_j is exactly 0 for
    every j outside the target support: an off-support flip leaves the label
    bit-identical, and a support flip only touches the flipped coordinate.
    """
    g = None
    prev_next = None
    count = 0
    for pair in pairs:
        if g is None:
            g = np.zeros(pair.prev.shape[0])
        if prev_next is not None and not np.array_equal(prev_next, pair.prev):
            raise ValueError("pairs are not consecutive samples of one trajectory")
        dy = pair.y_next - pair.y_prev
        if dy != 0.0:
            g += dy * (pair.next.astype(float) - pair.prev.astype(float))
        prev_next = pair.next
        count += 1
    if count != cfg.batch_size:
        raise ValueError(f"expected {cfg.batch_size} pairs, got {count}")
    return (cfg.init_scale * cfg.lr / cfg.batch_size) * g


def phase1_autograd_update(
    net: TwoLayerNet,
    f: BooleanFunction,
    pairs: Iterable[PairSample],
    cfg: Phase1Config,
    params: TdParams = TdParams(alpha=1.0),
) -> np.ndarray:
    """First-layer update by differentiating the TD loss through the network.

    Uses the subgradient 1{pre >= 0} for ReLU. Valid at the Algorithm-1 init,
    where the update is identical across hidden units; returns that common
    row. Cross-checks the closed form to 1e-10 in the test suite.
    """
    grad = np.zeros((net.n_hidden, net.dim))
    prev_next = None
    count = 0
    for pair in pairs:
        if prev_next is not None and not np.array_equal(prev_next, pair.prev):
            raise ValueError("pairs are not consecutive samples of one trajectory")
        xp = pair.prev.astype(float)
        xn = pair.next.astype(float)
        yhat_prev = forward(net, xp)
        yhat_next = forward(net, xn)
        g_prev, g_next = td_loss_output_grads(
            params, pair.y_prev, pair.y_next, yhat_prev, yhat_next
        )
        ind_prev = (net.first_layer @ xp + net.biases >= 0.0).astype(float)
        ind_next = (net.first_layer @ xn + net.biases >= 0.0).astype(float)
        a = net.output
        grad += np.outer(g_prev * a * ind_prev, xp)
        grad += np.outer(g_next * a * ind_next, xn)
        prev_next = pair.next
        count += 1
    if count != cfg.batch_size:
        raise ValueError(f"expected {cfg.batch_size} pairs, got {count}")
    update = -(cfg.lr / cfg.batch_size) * grad
    if not all(np.array_equal(update[0], row) for row in update[1:]):
        raise ValueError("update differs across hidden units; net is not at init")
    return update[0]


def _support_projections(w_row: np.ndarray, f: BooleanFunction):
    cols = np.asarray(f.support, dtype=np.intp) - 1
    pats = support_patterns(len(cols))
    return pats, pats.astype(float) @ w_row[cols], f.support_table()


def check_nondegeneracy(
    w_row: np.ndarray, f: BooleanFunction, epsilon: float
) -> NondegeneracyReport:
    """Minimum projection margin over support patterns with distinct values.

    Enumerates s, r in {-1,+1}^k with ftilde(s) != ftilde(r) and reports
    min |<w, s - r>|; patterns with equal target values are excluded.
    Diagnostic only: it consumes the true support, which the learner never
    sees.
    """
    if f.support_size > 12:
        raise ValueError(f"support size {f.support_size} exceeds enumeration cap 12")
    if not f.support:
        return NondegeneracyReport(math.inf, None, epsilon)
    pats, proj, vals = _support_projections(np.asarray(w_row, dtype=float), f)
    order = np.argsort(proj, kind="stable")
    # The minimizing distinct-value pair is adjacent in projection order once
    # runs of equal-value patterns are skipped.
    best = math.inf
    best_pair = None
    for a, b in zip(order[:-1], order[1:]):
        if vals[a] != vals[b]:
            gap = abs(proj[b] - proj[a])
            if gap < best:
                best = gap
                best_pair = (pats[a].copy(), pats[b].copy())
    if best_pair is None:
        return NondegeneracyReport(math.inf, None, epsilon)
    violating = best_pair if best <= epsilon else None
    return NondegeneracyReport(float(best), violating, epsilon)


def redraw_biases(net: TwoLayerNet, bias_range: float, seed: int) -> TwoLayerNet:
    """Redraw biases i.i.d. uniform on [-A, A]; weights untouched. Mutates net."""
    if bias_range <= 0:
        raise ValueError("bias_range must be positive")
    rng = substream(seed, "bias_redraw")
    net.biases = rng.uniform(-bias_range, bias_range, size=net.n_hidden)
    return net


def _feature_columns(net: TwoLayerNet) -> np.ndarray:
    """Coordinates the frozen first layer actually reads (1-indexed)."""
    return np.nonzero(np.any(net.first_layer != 0.0, axis=0))[0] + 1


def certificate_solve(
    net: TwoLayerNet, f: BooleanFunction
) -> tuple[np.ndarray, float]:
    """Least-squares output weights fitting f over all support patterns.

    Solves Phi a = ftilde for the minimal-norm a, where Phi(s)_i =
    ReLU(<w_i, s> + b_i), and returns (a, max-abs residual). A large
    residual certifies that the frozen features cannot represent f.
    """
    w_cols = set(_feature_columns(net).tolist())
    if not w_cols <= set(f.support):
        raise ValueError("first layer reads coordinates outside the target support")
    if f.support_size > 12:
        raise ValueError(f"support size {f.support_size} exceeds enumeration cap 12")
    cols = np.asarray(f.support, dtype=np.intp) - 1
    pats = support_patterns(len(cols)).astype(float)
    proj = pats @ net.first_layer[:, cols].T  # (2^k, N)
    phi = np.maximum(proj + net.biases, 0.0)
    vals = f.support_table()
    a_star, *_ = np.linalg.lstsq(phi, vals, rcond=None)
    residual = float(np.max(np.abs(phi @ a_star - vals))) if vals.size else 0.0
    return a_star, residual


def phase2_features(net: TwoLayerNet, x: np.ndarray) -> np.ndarray:
    return np.maximum(net.first_layer @ x.astype(float) + net.biases, 0.0)


def phase2_sgd_step(
    net: TwoLayerNet, sample: tuple[np.ndarray, float], cfg: Phase2Config
) -> TwoLayerNet:
    """One ridge-SGD step on the output weights; first layer and biases frozen.

    a <- a - lr ((a^T Phi(x) - y) Phi(x) + ridge * a). Mutates and returns net.
    """
    if cfg.lr is None:
        raise ValueError("Phase2Config.lr must be resolved before stepping")
    x, y = sample
    phi = phase2_features(net, x)
    resid = float(net.output @ phi) - y
    net.output -= cfg.lr * (resid * phi + cfg.ridge * net.output)
    return net


def default_margin_epsilon(cfg: Phase1Config) -> float:
    """Scale-free margin threshold: 0.1 of a single flip's full contribution 4*kappa*lr/B."""
    return 0.4 * cfg.init_scale * cfg.lr / cfg.batch_size


def phase2_step_size(
    net: TwoLayerNet, f: BooleanFunction, ridge: float, steps: int, flip_prob: float
) -> float:
    """Step size min{1/M_lambda, log rule} for the ridge SGD of Phase II.

    M_lambda = max_s ||Phi(s)||^2 + ridge over the support patterns. The
    second branch is log(arg) / (ridge * T2) with arg =
    ridge^2 T2 ||a0 - a*||^2 / (M_lambda tau_mix sigma*^2); when arg <= 1
    (typical early on) it is clamped away and 1/M_lambda is used.
    """
    cols = np.asarray(f.support, dtype=np.intp) - 1
    if len(cols) > 12:
        raise ValueError("support too large for exact step-size rule; set lr explicitly")
    pats = support_patterns(len(cols)).astype(float)
    proj = pats @ net.first_layer[:, cols].T
    phi = np.maximum(proj + net.biases, 0.0)
    vals = f.support_table()
    m_lambda = float(np.max(np.sum(phi * phi, axis=1))) + ridge
    base = 1.0 / m_lambda
    if ridge <= 0:
        return base
    n_pat = phi.shape[0]
    gram = phi.T @ phi / n_pat + ridge * np.eye(net.n_hidden)
    a_opt = np.linalg.solve(gram, phi.T @ vals / n_pat)
    grads = (phi @ a_opt - vals)[:, None] * phi + ridge * a_opt[None, :]
    sigma_star_sq = float(np.max(np.sum(grads * grads, axis=1)))
    k = len(cols)
    tau_mix = net.dim / (2.0 * flip_prob) * math.log(2.0 ** (2 * k + 1))
    dist_sq = float(np.sum((net.output - a_opt) ** 2))
    if sigma_star_sq <= 0 or dist_sq <= 0:
        return base
    arg = ridge**2 * steps * dist_sq / (m_lambda * tau_mix * sigma_star_sq)
    if arg <= 1.0:
        return base
    return min(base, math.log(arg) / (ridge * steps))


def _exact_support_mse(net: TwoLayerNet, f: BooleanFunction) -> float:
    """Uniform MSE by enumeration; valid because the net reads only support coords."""
    cols = np.asarray(f.support, dtype=np.intp) - 1
    pats = support_patterns(len(cols)).astype(float)
    proj = pats @ net.first_layer[:, cols].T
    pred = np.maximum(proj + net.biases, 0.0) @ net.output
    diff = pred - f.support_table()
    return float(np.mean(diff * diff))


def run_algorithm1(
    f: BooleanFunction,
    walk_cfg: WalkConfig,
    phase1: Phase1Config,
    phase2: Phase2Config,
    n_hidden: int,
    seed: int,
    record_every: int | None = None,
    risk_window: int = 500,
) -> tuple[TwoLayerNet, RunRecord]:
    """Run the full layerwise procedure on a single walk trajectory.

    Phase I accumulates `steps` closed-form batch updates at the init-point
    gradient (the analysis covers only that gradient; see module docstring),
    then biases are redrawn and Phase II consumes fresh single walk samples.
    The record tracks exact uniform test MSE and a sliding-window estimate
    of the regularized empirical risk against fresh samples consumed.
    """
    net = init_algorithm1(n_hidden, walk_cfg.dim, phase1.init_scale)
    state = init_walk(walk_cfg)
    samples = 0
    for _ in range(phase1.steps):
        g = phase1_closed_form_update(f, pair_stream(state, f, phase1.batch_size), phase1)
        net.first_layer += g
        samples += phase1.batch_size

    row = net.first_layer[0]
    margin_eps = default_margin_epsilon(phase1)
    bias_range = phase2.bias_range
    if bias_range is None:
        bias_range = float(np.sum(np.abs(row))) + phase2.bias_margin
    redraw_biases(net, bias_range, seed)

    lr = phase2.lr
    if lr is None:
        lr = phase2_step_size(net, f, phase2.ridge, phase2.steps, walk_cfg.flip_prob)
    resolved = Phase2Config(lr=lr, ridge=phase2.ridge, steps=phase2.steps, bias_range=bias_range)

    margin = check_nondegeneracy(row, f, margin_eps)
    record = RunRecord(
        columns=["samples", "test_mse", "window_risk"],
        config={
            "learner": "algorithm1",
            "dim": walk_cfg.dim,
            "flip_prob": walk_cfg.flip_prob,
            "walk_seed": walk_cfg.seed,
            "n_hidden": n_hidden,
            "phase1": {
                "batch_size": phase1.batch_size,
                "lr": phase1.lr,
                "init_scale": phase1.init_scale,
                "steps": phase1.steps,
            },
            "phase2": {
                "lr": lr,
                "ridge": phase2.ridge,
                "steps": phase2.steps,
                "bias_range": bias_range,
            },
            "margin": margin.min_margin if math.isfinite(margin.min_margin) else None,
            "margin_epsilon": margin_eps,
        },
        seed=seed,
    )
    if record_every is None:
        record_every = max(1, phase2.steps // 400)

    # The features take only 2^k distinct values: rows of w are identical and
    # supported on S, so Phi(x) = ReLU(<w, x_S> + b) is a table lookup over
    # the support pattern of the current point.
    cols = np.asarray(f.support, dtype=np.intp) - 1
    k = len(cols)
    pats = support_patterns(k).astype(float)
    phi_table = np.maximum(pats @ net.first_layer[:, cols].T + net.biases, 0.0)
    vals_table = f.support_table()
    coord_to_bit = {int(c) + 1: 1 << (k - 1 - pos) for pos, c in enumerate(cols)}
    bits = 0
    for pos, c in enumerate(cols):
        if state.current[c] > 0:
            bits |= 1 << (k - 1 - pos)

    a = net.output
    ridge = resolved.ridge
    losses = np.zeros(risk_window)
    filled = 0
    pos = 0
    record.append([samples, _exact_support_mse(net, f), math.nan])
    for t in range(phase2.steps):
        step(state)
        j, flipped = state.last_move
        if flipped:
            bit = coord_to_bit.get(j)
            if bit is not None:
                bits ^= bit
        phi = phi_table[bits]
        resid = float(a @ phi) - vals_table[bits]
        a -= lr * (resid * phi + ridge * a)
        losses[pos] = 0.5 * resid * resid + 0.5 * ridge * float(a @ a)
        pos = (pos + 1) % risk_window
        filled = min(filled + 1, risk_window)
        samples += 1
        if (t + 1) % record_every == 0 or t + 1 == phase2.steps:
            diff = phi_table @ a - vals_table
            record.append(
                [samples, float(np.mean(diff * diff)), float(np.mean(losses[:filled]))]
            )
    return net, record


def theorem_shaped_configs(
    dim: int,
    k: int,
    eps: float,
    delta: float,
    kappa: float = 0.01,
    batch_scale: float = 4000.0,
    phase2_steps: int | None = None,
) -> tuple[Phase1Config, Phase2Config]:
    """Desk-scale parameter recipe following the published shapes.

    B grows like d/eps^2, the Phase-I step is sqrt(2 B d)/(kappa sqrt(k)),
    the ridge like delta * eps^2, the bias margin is eps, and T2 grows
    linearly in d. Absolute constants are tuned empirically; the asymptotic
    ones are not reproducible. The batch constant is large because the
    update is lattice-valued: exact projection collisions (margin 0) only
    become rare once each support coordinate sees thousands of effective
    flips. kappa only sets the scale of the Phase-II starting point (the
    first-layer update is kappa-free), so a small value shortens Phase II.
    """
    batch = int(math.ceil(batch_scale * dim / eps**2))
    gamma1 = math.sqrt(2.0 * batch * dim) / (kappa * math.sqrt(k))
    ridge = 0.02 * delta * eps**2
    if phase2_steps is None:
        phase2_steps = int(math.ceil(150.0 * dim / delta**2))
    return (
        Phase1Config(batch_size=batch, lr=gamma1, init_scale=kappa, steps=1),
        Phase2Config(
            lr=None, ridge=ridge, steps=phase2_steps, bias_range=None, bias_margin=eps
        ),
    )


def save_checkpoint(
    net: TwoLayerNet, path, phase: str = "done", step_count: int = 0, seed_chain: dict | None = None
) -> None:
    """Write a JSON checkpoint; floats are hexfloats so round-trips are bit-exact."""
    payload = {
        "n_hidden": net.n_hidden,
        "dim": net.dim,
        "phase": phase,
        "step": step_count,
        "seed_chain": seed_chain or {},
        "first_layer": [[v.hex() for v in row] for row in net.first_layer.tolist()],
        "output": [v.hex() for v in net.output.tolist()],
        "biases": [v.hex() for v in net.biases.tolist()],
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[TwoLayerNet, dict]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    net = TwoLayerNet(
        first_layer=np.array(
            [[float.fromhex(v) for v in row] for row in payload["first_layer"]]
        ),
        output=np.array([float.fromhex(v) for v in payload["output"]]),
        biases=np.array([float.fromhex(v) for v in payload["biases"]]),
    )
    meta = {key: payload[key] for key in ("phase", "step", "seed_chain")}
    if net.first_layer.shape != (payload["n_hidden"], payload["dim"]):
        raise ValueError("checkpoint dimensions are inconsistent")
    return net, meta
