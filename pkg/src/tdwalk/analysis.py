"""Measurements and bounds: test metrics, the coupon-collector baseline,
cross-predictability estimators, the large-batch lower-bound formula, and
the edge-chain observable with its moment identities and CLT check.

Estimators are embarrassingly parallel over replicas with per-replica
substreams; reductions are order-fixed so results are deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .boolfn import BooleanFunction, make_parity, support_patterns
from .rng import substream
from .walk import WalkState, step


# ---------------------------------------------------------------------------
# Uniform-distribution metrics


def uniform_mse(
    predict: Callable[[np.ndarray], np.ndarray],
    f: BooleanFunction,
    mode: str = "exact",
    n_samples: int = 8192,
    seed: int = 0,
) -> tuple[float, float]:
    """Uniform test MSE of a predictor, as (estimate, std_error).

    "exact" enumerates the 2^k support patterns (k <= 12) and is valid only
    when the predictor provably depends on support coordinates alone, e.g.
    the layerwise learner's output. "mc" is Monte Carlo over fresh uniform
    points with the usual standard error.
    """
    if mode == "exact":
        k = f.support_size
        if k > 12:
            raise ValueError(f"support size {k} exceeds enumeration cap 12")
        xs = np.ones((2**k, f.dim), dtype=np.int8)
        if k:
            xs[:, np.asarray(f.support, dtype=np.intp) - 1] = support_patterns(k)
        diff = np.asarray(predict(xs)) - f.support_table()
        return float(np.mean(diff * diff)), 0.0
    if mode != "mc":
        raise ValueError(f"unknown mode {mode!r}")
    rng = substream(seed, "mc")
    xs = (2 * rng.integers(0, 2, size=(n_samples, f.dim)) - 1).astype(np.int8)
    sq = (np.asarray(predict(xs)) - f.eval_many(xs)) ** 2
    return float(np.mean(sq)), float(np.std(sq, ddof=1) / math.sqrt(n_samples))


def sign_accuracy(
    predict: Callable[[np.ndarray], np.ndarray],
    f: BooleanFunction,
    test_points: np.ndarray,
) -> float:
    """Fraction of test points where sign(predictor) matches the +-1 target."""
    labels = f.eval_many(test_points)
    if not np.all(np.abs(np.abs(labels) - 1.0) < 1e-9):
        raise ValueError("sign accuracy needs a +-1-valued target")
    pred_signs = np.where(np.asarray(predict(test_points)) >= 0.0, 1.0, -1.0)
    return float(np.mean(pred_signs == np.sign(labels)))


def net_fourier_coeff(
    predict: Callable[[np.ndarray], np.ndarray],
    subset: Sequence[int],
    dim: int,
    n_samples: int,
    seed: int,
) -> tuple[float, float]:
    """Monte-Carlo estimate of E_x[predictor(x) * prod_{i in subset} x_i]."""
    rng = substream(seed, "mc")
    xs = (2 * rng.integers(0, 2, size=(n_samples, dim)) - 1).astype(np.int8)
    chi = np.prod(xs[:, np.asarray(subset, dtype=np.intp) - 1], axis=1) if len(subset) else np.ones(n_samples)
    vals = np.asarray(predict(xs)) * chi
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(n_samples))


# ---------------------------------------------------------------------------
# Coupon-collector baseline


@dataclass
class BaselineResult:
    support: tuple[int, ...]
    steps_used: int  # walk step at which the estimate last grew
    steps_run: int
    complete: bool  # stable for the patience window before the step cap


def baseline_support_recovery(
    f: BooleanFunction,
    state: WalkState,
    patience: int | None = None,
    max_steps: int | None = None,
) -> BaselineResult:
    """Record which coordinate flips change the label; their set is the support.

    Sound by construction for noiseless labels: off-support flips leave the
    label bit-identical, so no coordinate outside the true support is ever
    reported. Runs until the estimate is stable for `patience` steps or the
    step cap is reached (then the partial result is flagged incomplete).
    """
    d, p = state.cfg.dim, state.cfg.flip_prob
    if patience is None:
        patience = int(math.ceil(10.0 * d / p))
    if max_steps is None:
        max_steps = int(math.ceil(100.0 * d / p * math.log(f.support_size + 2)))
    found: set[int] = set()
    last_new = 0
    y_prev = f.eval(state.current)
    t = 0
    while t < max_steps:
        step(state)
        t += 1
        y = f.eval(state.current)
        if y != y_prev:
            j = state.last_move[0]
            if j not in found:
                found.add(j)
                last_new = t
        y_prev = y
        if t - last_new >= patience:
            return BaselineResult(tuple(sorted(found)), last_new, t, True)
    return BaselineResult(tuple(sorted(found)), last_new, t, False)


# ---------------------------------------------------------------------------
# Cross-predictability


@dataclass
class CpEstimate:
    value: float
    std_error: float
    method: str  # "exact" | "mc" | "rw_batch"


def cp_exact_parity_orbit(dim: int, k: int) -> float:
    """CP of the k-parity orbit under the uniform distribution: 1 / C(d, k)."""
    if not 1 <= k <= dim:
        raise ValueError(f"need 1 <= k <= dim, got k={k}, dim={dim}")
    return 1.0 / comb(dim, k)


def cp_bruteforce_parity_orbit(dim: int, k: int) -> float:
    """Exhaustive CP over all parity pairs and all 2^d points (oracle, d <= 12)."""
    if dim > 12:
        raise ValueError("brute force capped at dim 12")
    xs = support_patterns(dim).astype(float)
    supports = list(combinations(range(1, dim + 1), k))
    values = np.array(
        [make_parity(dim, s).eval_many(xs) for s in supports]
    )  # (n_orbit, 2^d)
    inner = values @ values.T / xs.shape[0]
    return float(np.mean(inner**2))


def orbit_kernel_parity(x: np.ndarray, x_other: np.ndarray, k: int) -> float:
    """Orbit-averaged kernel E_F[F(x) F(x')] for the k-parity orbit.

    Equals e_k(z) / C(d, k) with z_i = x_i x'_i, via the stable elementary
    symmetric polynomial recurrence in O(d k).
    """
    x = np.asarray(x, dtype=float)
    x_other = np.asarray(x_other, dtype=float)
    if x.shape != x_other.shape:
        raise ValueError("points have mismatched shapes")
    z = x * x_other
    d = z.shape[0]
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}, d={d}")
    esp = np.zeros(k + 1)
    esp[0] = 1.0
    for i in range(d):
        top = min(i + 1, k)
        for j in range(top, 0, -1):
            esp[j] += z[i] * esp[j - 1]
    return float(esp[k] / comb(d, k))


def parity_orbit_gram(xs: np.ndarray, k: int) -> np.ndarray:
    """Pairwise orbit kernel matrix K(x_i, x_j) for a batch, shape (B, B)."""
    xs = np.asarray(xs, dtype=float)
    b, d = xs.shape
    z = xs[:, None, :] * xs[None, :, :]
    esp = np.zeros((b, b, k + 1))
    esp[..., 0] = 1.0
    for i in range(d):
        top = min(i + 1, k)
        for j in range(top, 0, -1):
            esp[..., j] += z[..., i] * esp[..., j - 1]
    return esp[..., k] / comb(d, k)


def cp_rw_batch(
    gram: Callable[[np.ndarray], np.ndarray],
    dim: int,
    flip_prob: float,
    batch_size: int,
    n_outer: int,
    seed: int,
) -> CpEstimate:
    """Random-walk-batch cross-predictability E[(1/B^2) sum_{i,j} K(x_i,x_j)^2].

    Each outer replica draws a fresh uniform start (the stationary law) and
    runs the walk for B points; `gram` maps the (B, d) batch to its kernel
    matrix. Exceeds plain CP by at most d/(pB).
    """
    if batch_size < 1 or n_outer < 1:
        raise ValueError("batch_size and n_outer must be >= 1")
    values = np.zeros(n_outer)
    for rep in range(n_outer):
        x = (
            2 * substream(seed, "walk_init", rep).integers(0, 2, size=dim) - 1
        ).astype(np.int8)
        coords = substream(seed, "walk_coord", rep).integers(0, dim, size=batch_size - 1)
        flips = substream(seed, "walk_flip", rep).random(batch_size - 1) < flip_prob
        batch = np.empty((batch_size, dim), dtype=np.int8)
        batch[0] = x
        for t in range(1, batch_size):
            if flips[t - 1]:
                x[coords[t - 1]] = -x[coords[t - 1]]
            batch[t] = x
        kmat = gram(batch)
        values[rep] = float(np.mean(kmat**2))
    se = float(np.std(values, ddof=1) / math.sqrt(n_outer)) if n_outer > 1 else 0.0
    return CpEstimate(float(np.mean(values)), se, "rw_batch")


def lower_bound_rhs(
    T: float,
    M: float,
    A: float,
    tau_noise: float,
    cp: float,
    d: float,
    p: float,
    B: float,
) -> float:
    """Upper bound on sign agreement of noisy large-batch SGD:

    1/2 + (T sqrt(M) A / (2 tau)) * (cp + d/(pB))^{1/4}.
    """
    if min(M, A, d, p, B) <= 0 or T < 0 or cp < 0:
        raise ValueError("arguments must be positive (T, cp may be 0)")
    if tau_noise <= 0:
        raise ValueError("tau_noise must be positive")
    return 0.5 + (T * math.sqrt(M) * A / (2.0 * tau_noise)) * (cp + d / (p * B)) ** 0.25


# ---------------------------------------------------------------------------
# Edge-chain observable phi_v and its moments

# The observable phi_v(x, y) = (f(y) - f(x)) * sum_j (y_j - x_j) v_j is an
# additive functional of the edge chain on the support cube; its first two
# moments have closed forms in the Fourier coefficients and influences.


@dataclass
class PhiObservable:
    v: np.ndarray  # entries in {-2, 0, +2}, indexed by support position
    mean_formula: float  # (4p/k) sum_j v_j fhat_j
    mean_exact: float | None  # edge enumeration, k <= 12
    mean_mc: float
    mean_mc_se: float
    second_moment_exact: float | None
    var_exact: float | None
    sigma2_batch_means: float  # dynamical variance estimate


def _support_values(f: BooleanFunction) -> np.ndarray:
    return f.support_table()


def _validate_direction(f: BooleanFunction, v: np.ndarray) -> None:
    k = f.support_size
    v = np.asarray(v)
    if v.shape != (k,):
        raise ValueError(f"direction has shape {v.shape}, expected ({k},)")
    if not np.all(np.isin(v, (-2, 0, 2))):
        raise ValueError("direction entries must be in {-2, 0, +2}")
    # v = s - r for patterns with distinct restricted values must exist
    pats = support_patterns(k).astype(np.int64)
    vals = _support_values(f)
    fixed = v != 0
    s_mask = np.all(pats[:, fixed] == (v[fixed] // 2), axis=1) if fixed.any() else np.ones(len(pats), bool)
    idx = np.nonzero(s_mask)[0]
    free_bits = np.asarray([1 << (k - 1 - j) for j in range(k) if v[j] != 0], dtype=np.int64)
    flip_mask = int(free_bits.sum()) if len(free_bits) else 0
    for m in idx:
        if vals[m] != vals[m ^ flip_mask]:
            return
    raise ValueError("no pattern pair s, r with s - r = v has distinct target values")


def phi_values_table(f: BooleanFunction, v: np.ndarray) -> np.ndarray:
    """phi on every flip edge: entry [m, j] is phi(s_m, s_m^(j)); self-loops are 0."""
    k = f.support_size
    pats = support_patterns(k)
    vals = _support_values(f)
    out = np.zeros((2**k, k))
    for j in range(k):
        bit = 1 << (k - 1 - j)
        flipped = vals[np.arange(2**k) ^ bit]
        # (f(s^j) - f(s)) * (s^j_j - s_j) * v_j ; s^j_j - s_j = -2 s_j
        out[:, j] = (flipped - vals) * (-2.0 * pats[:, j]) * v[j]
    return out


def phi_mean_formula(f: BooleanFunction, v: np.ndarray, p: float) -> float:
    """(4p/k) sum_j v_j fhat_j over the support, fhat_j the linear coefficients."""
    k = f.support_size
    total = 0.0
    for j, coord in enumerate(f.support):
        total += float(v[j]) * f.terms.get((coord,), 0.0)
    return 4.0 * p / k * total


def phi_second_moment_formula(f: BooleanFunction, v: np.ndarray, p: float) -> float:
    """(64 p / k) sum_{v_j != 0} Inf_j(f) over the support."""
    k = f.support_size
    total = 0.0
    for j, coord in enumerate(f.support):
        if v[j] != 0:
            total += f.influence(coord)
    return 64.0 * p / k * total


def phi_edge_enumeration(
    f: BooleanFunction, v: np.ndarray, p: float
) -> tuple[float, float]:
    """Exact (mean, second moment) of phi under the stationary edge measure.

    The measure puts mass (1-p)/2^k on each self-loop and p/(k 2^k) on each
    flip edge; phi vanishes on self-loops. Capped at k <= 12.
    """
    k = f.support_size
    if k > 12:
        raise ValueError(f"support size {k} exceeds enumeration cap 12")
    table = phi_values_table(f, v)
    w = p / (k * 2**k)
    return float(w * table.sum()), float(w * (table**2).sum())


def _edge_stream_phi(
    f: BooleanFunction, v: np.ndarray, k: int, p: float, n_steps: int, seed: int
) -> np.ndarray:
    """phi values along a single stationary edge-chain trajectory (fast index walk)."""
    vals = _support_values(f)
    u_bits = int(
        sum(
            1 << (k - 1 - j)
            for j, s in enumerate(substream(seed, "edge_init").integers(0, 2, size=k))
            if s == 1
        )
    )
    coord = substream(seed, "edge_coord").integers(0, k, size=n_steps)
    flip = substream(seed, "edge_flip").random(n_steps) < p
    out = np.zeros(n_steps)
    pats = support_patterns(k)
    for t in range(n_steps):
        if flip[t]:
            j = int(coord[t])
            bit = 1 << (k - 1 - j)
            new_bits = u_bits ^ bit
            # (f(v) - f(u)) * (v_j - u_j) * v_j with v_j - u_j = -2 u_j
            out[t] = (vals[new_bits] - vals[u_bits]) * (-2.0 * pats[u_bits, j]) * v[j]
            u_bits = new_bits
    return out


def batch_means_variance(series: np.ndarray, batch_len: int) -> float:
    """Dynamical-variance estimate: batch_len * Var(batch means)."""
    n_batches = len(series) // batch_len
    if n_batches < 2:
        raise ValueError("series too short for batch means")
    means = series[: n_batches * batch_len].reshape(n_batches, batch_len).mean(axis=1)
    return float(batch_len * np.var(means, ddof=1))


def default_batch_len(k: int, p: float) -> int:
    return int(math.ceil(10.0 * k * k / p))


def phi_moments(
    f: BooleanFunction,
    v: np.ndarray,
    k: int,
    p: float,
    n_steps: int,
    seed: int,
    batch_len: int | None = None,
) -> PhiObservable:
    """Moments of phi_v: closed forms, exact enumeration, and stream estimates.

    The empirical mean carries a batch-means standard error (valid under the
    chain's correlations); sigma2_batch_means estimates the dynamical
    variance that normalizes the CLT.
    """
    v = np.asarray(v, dtype=float)
    if k != f.support_size:
        raise ValueError(f"k={k} does not match support size {f.support_size}")
    _validate_direction(f, v)
    if batch_len is None:
        batch_len = default_batch_len(k, p)
    series = _edge_stream_phi(f, v, k, p, n_steps, seed)
    sigma2 = batch_means_variance(series, batch_len)
    n_used = (len(series) // batch_len) * batch_len
    mean_mc = float(series[:n_used].mean())
    mean_se = math.sqrt(max(sigma2, 0.0) / n_used)
    if k <= 12:
        mean_exact, second_exact = phi_edge_enumeration(f, v, p)
        var_exact = second_exact - mean_exact**2
    else:
        mean_exact = second_exact = var_exact = None
    return PhiObservable(
        v=v,
        mean_formula=phi_mean_formula(f, v, p),
        mean_exact=mean_exact,
        mean_mc=mean_mc,
        mean_mc_se=mean_se,
        second_moment_exact=second_exact,
        var_exact=var_exact,
        sigma2_batch_means=sigma2,
    )


def phi_dynamical_variance_exact(f: BooleanFunction, v: np.ndarray, p: float) -> float:
    """Exact dynamical variance of phi_v via the edge-chain fundamental system.

    sigma^2 = Var(phi) + 2 <phi0, (I - P)^{-1} P phi0>_pi on the enumerated
    edge chain (k <= 8); used to cross-check the batch-means estimator.
    """
    k = f.support_size
    if k > 8:
        raise ValueError("exact dynamical variance capped at k <= 8")
    n_pat = 2**k
    # states: (m, e) with e = k for the self-loop at m, e = j for edge (m, m^j)
    n_states = n_pat * (k + 1)

    def sid(m: int, e: int) -> int:
        return m * (k + 1) + e

    pats = support_patterns(k)
    vals = _support_values(f)
    phi = np.zeros(n_states)
    pi = np.zeros(n_states)
    for m in range(n_pat):
        pi[sid(m, k)] = (1.0 - p) / n_pat
        for j in range(k):
            bit = 1 << (k - 1 - j)
            phi[sid(m, j)] = (vals[m ^ bit] - vals[m]) * (-2.0 * pats[m, j]) * v[j]
            pi[sid(m, j)] = p / (k * n_pat)
    trans = np.zeros((n_states, n_states))
    for m in range(n_pat):
        for e in range(k + 1):
            target = m if e == k else m ^ (1 << (k - 1 - e))
            trans[sid(m, e), sid(target, k)] = 1.0 - p
            for j in range(k):
                trans[sid(m, e), sid(target, j)] = p / k
    mean = float(pi @ phi)
    phi0 = phi - mean
    rhs = trans @ phi0
    x, *_ = np.linalg.lstsq(np.eye(n_states) - trans, rhs, rcond=None)
    var = float(pi @ (phi0 * phi0))
    return var + 2.0 * float(pi @ (phi0 * x))


# ---------------------------------------------------------------------------
# Quantitative CLT check


@dataclass
class CltReport:
    ks_distance: float
    ks_distance_scaled: float  # at T * t_scale
    passed: bool
    ceiling: float
    t_scale: int
    sigma: float
    mean_per_step: float


def _replica_functionals(
    f: BooleanFunction, v: np.ndarray, k: int, p: float, T: int, n_replicas: int, seed: int, stream_offset: int
) -> np.ndarray:
    """n_replicas independent values of (1/sqrt(T)) sum_t phi(Z'_t), vectorized."""
    vals = _support_values(f)
    init = substream(seed, "edge_init", stream_offset)
    coord_rng = substream(seed, "edge_coord", stream_offset)
    flip_rng = substream(seed, "edge_flip", stream_offset)
    bits_pow = 1 << (k - 1 - np.arange(k))
    u_bits = (init.integers(0, 2, size=(n_replicas, k)) * bits_pow).sum(axis=1)
    totals = np.zeros(n_replicas)
    vcol = np.asarray(v, dtype=float)
    for _ in range(T):
        j = coord_rng.integers(0, k, size=n_replicas)
        flip = flip_rng.random(n_replicas) < p
        bit = bits_pow[j]
        new_bits = np.where(flip, u_bits ^ bit, u_bits)
        u_j = 2.0 * ((u_bits >> (k - 1 - j)) & 1) - 1.0
        totals += (vals[new_bits] - vals[u_bits]) * (-2.0 * u_j) * vcol[j] * flip
        u_bits = new_bits
    return totals / math.sqrt(T)


def clt_check(
    f: BooleanFunction,
    v: np.ndarray,
    k: int,
    p: float,
    T: int,
    n_replicas: int,
    seed: int,
    ceiling: float = 0.05,
    t_scale: int = 16,
    calib_steps: int | None = None,
) -> CltReport:
    """Kolmogorov-Smirnov distance of the standardized additive functional.

    Replicas of (1/sqrt(T)) sum phi are standardized by the exact per-step
    mean and the batch-means dynamical variance from a dedicated calibration
    stream, then compared to a standard Gaussian. Passes iff the distance at
    T is below the ceiling and decreases when T is multiplied by t_scale
    (the square-root error rate).
    """
    v = np.asarray(v, dtype=float)
    if k != f.support_size:
        raise ValueError(f"k={k} does not match support size {f.support_size}")
    _validate_direction(f, v)
    mean_step = phi_mean_formula(f, v, p)
    if calib_steps is None:
        calib_steps = max(400 * default_batch_len(k, p), 200_000)
    calib = _edge_stream_phi(f, v, k, p, calib_steps, seed)
    sigma2 = batch_means_variance(calib, default_batch_len(k, p))
    if sigma2 <= 0:
        raise ValueError("degenerate observable: estimated dynamical variance is 0")
    sigma = math.sqrt(sigma2)

    def ks_at(horizon: int, offset: int) -> float:
        totals = _replica_functionals(f, v, k, p, horizon, n_replicas, seed, offset)
        standardized = (totals - math.sqrt(horizon) * mean_step) / sigma
        return float(stats.kstest(standardized, "norm").statistic)

    ks1 = ks_at(T, 1)
    ks2 = ks_at(T * t_scale, 2)
    return CltReport(
        ks_distance=ks1,
        ks_distance_scaled=ks2,
        passed=bool(ks1 < ceiling and ks2 < ks1),
        ceiling=ceiling,
        t_scale=t_scale,
        sigma=sigma,
        mean_per_step=mean_step,
    )
