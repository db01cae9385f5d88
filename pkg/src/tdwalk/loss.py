"""Temporal-difference loss on consecutive samples, with its output gradients.

For labels (y_prev, y_next) and predictions (yhat_prev, yhat_next),

    L_alpha = alpha/2 * ((y_next - y_prev) - (yhat_next - yhat_prev))^2
            + (1 - alpha)/2 * (y_next - yhat_next)^2.

alpha = 0 is the standard square loss on the newest sample; alpha = 1 only
sees increments and is invariant to adding a constant to the predictor.
Batch aggregation is the arithmetic mean over pairs. Gradient clipping, if
any, belongs to the caller.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class TdParams:
    alpha: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")


def td_loss(
    params: TdParams,
    y_prev: float,
    y_next: float,
    yhat_prev: float,
    yhat_next: float,
) -> float:
    a = params.alpha
    d_err = (y_next - y_prev) - (yhat_next - yhat_prev)
    p_err = y_next - yhat_next
    return 0.5 * a * d_err * d_err + 0.5 * (1.0 - a) * p_err * p_err


def td_loss_output_grads(
    params: TdParams,
    y_prev: float,
    y_next: float,
    yhat_prev: float,
    yhat_next: float,
) -> tuple[float, float]:
    """Partial derivatives of the loss w.r.t. (yhat_prev, yhat_next).

    Chaining these through the predictor reproduces its parameter gradient.
    """
    a = params.alpha
    d_err = (y_next - y_prev) - (yhat_next - yhat_prev)
    g_prev = a * d_err
    g_next = -a * d_err - (1.0 - a) * (y_next - yhat_next)
    return g_prev, g_next
