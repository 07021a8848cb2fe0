"""Quantile-distribution machinery for the critic and the actor objective.

The critic predicts N quantiles theta of the cumulative-return
distribution at midpoint levels tau_hat_i = (2i-1)/(2N). Training
targets come from the distributional Bellman backup r + gamma * theta',
and the regression loss is the asymmetric quantile-Huber loss. The
actor maximizes the risk-return utility: mean of the quantiles minus
zeta times value-at-risk, where VaR at confidence alpha is read off the
quantile vector at (1-based) index N*(1-alpha).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, accumulate, node


@dataclass(frozen=True)
class RiskConfig:
    """Risk/targets configuration shared by critic loss and actor utility."""

    alpha: float = 0.95
    zeta: float = 0.5
    kappa: float = 1.0
    gamma: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0,1), got {self.alpha}")
        if self.zeta < 0.0:
            raise ValueError(f"zeta must be >= 0, got {self.zeta}")
        if self.kappa <= 0.0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0,1], got {self.gamma}")


def quantile_midpoints(n: int) -> np.ndarray:
    """Midpoint quantile levels (2i-1)/(2N) for i = 1..N."""
    return (2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n)


def var_index(n_quantiles: int, alpha: float) -> int:
    """0-based index of the VaR quantile; N*(1-alpha) must be a whole number."""
    raw = n_quantiles * (1.0 - alpha)
    k = round(raw)
    if k < 1 or abs(raw - k) > 1e-9:
        raise ValueError(
            f"N*(1-alpha) must be a positive integer, got {raw} "
            f"(N={n_quantiles}, alpha={alpha})"
        )
    return k - 1


def bellman_target(reward, gamma: float, theta_next: np.ndarray) -> np.ndarray:
    """Distributional Bellman backup r + gamma * theta', elementwise.

    `reward` may be a scalar or a column vector broadcast against a
    (B, N) batch of next-state quantiles. The result is a plain array:
    targets are detached, no gradient flows into theta_next.
    """
    theta_next = np.asarray(theta_next, dtype=np.float64)
    return np.asarray(reward, dtype=np.float64) + gamma * theta_next


def quantile_huber_loss(theta, target, kappa: float) -> Tensor:
    """Quantile-Huber regression loss between predictions and targets.

    For each prediction theta_i at level tau_hat_i and each target
    atom t_j, the residual u = t_j - theta_i contributes
    |tau_hat_i - 1{u<0}| * huber_kappa(u), where huber is quadratic for
    |u| <= kappa and linear beyond. The per-row loss sums over j and i
    and divides by N; batched input (B, N) returns the batch mean.
    Differentiable w.r.t. theta when given as a Tensor.
    """
    if kappa <= 0.0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    theta_t = theta if isinstance(theta, Tensor) else Tensor(theta)
    pred = np.atleast_2d(theta_t.data)
    tgt = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if pred.shape != tgt.shape:
        raise ValueError(f"shape mismatch: theta {pred.shape} vs target {tgt.shape}")
    batch, n = pred.shape
    tau_hat = quantile_midpoints(n)

    u = tgt[:, None, :] - pred[:, :, None]          # (B, N_pred, N_target)
    abs_u = np.abs(u)
    quad = abs_u <= kappa
    huber = np.where(quad, 0.5 * u * u, kappa * (abs_u - 0.5 * kappa))
    weight = np.abs(tau_hat[None, :, None] - (u < 0.0))
    loss = float((weight * huber).sum() / (n * batch))

    def bw(g):
        dhuber = np.where(quad, u, kappa * np.sign(u))
        grad = -(weight * dhuber).sum(axis=2) / (n * batch)
        accumulate(theta_t, (g * grad).reshape(theta_t.data.shape))

    return node(np.float64(loss), (theta_t,), bw)


def mean_return(theta) -> float:
    """Mean of the quantile vector: the distribution's expected value."""
    data = theta.data if isinstance(theta, Tensor) else np.asarray(theta)
    return float(np.mean(data))


def var_alpha(theta, alpha: float) -> float:
    """Value at risk: negated quantile at 1-based index N*(1-alpha)."""
    data = theta.data if isinstance(theta, Tensor) else np.asarray(theta, dtype=np.float64)
    idx = var_index(data.shape[-1], alpha)
    if data.ndim == 1:
        return float(-data[idx])
    return float(-data[..., idx].mean())


def utility(theta, cfg: RiskConfig):
    """Risk-return utility mean(theta) + zeta * theta[VaR index].

    Accepts an (N,) vector or a (B, N) batch (batch mean). With a
    Tensor input the result stays on the tape; the gradient w.r.t.
    theta is 1/N everywhere plus zeta at the VaR index, scaled by 1/B
    for batches.
    """
    is_tensor = isinstance(theta, Tensor)
    data = theta.data if is_tensor else np.asarray(theta, dtype=np.float64)
    rows = np.atleast_2d(data)
    batch, n = rows.shape
    idx = var_index(n, cfg.alpha)
    value = float(rows.mean(axis=1).mean() + cfg.zeta * rows[:, idx].mean())
    if not is_tensor:
        return value

    def bw(g):
        grad = np.full_like(rows, 1.0 / (n * batch))
        grad[:, idx] += cfg.zeta / batch
        accumulate(theta, (g * grad).reshape(theta.data.shape))

    return node(np.float64(value), (theta,), bw)
