"""Brute-force and finite-difference validators.

Everything here deliberately re-derives results through a different
route than the production code: exhaustive grid sweeps for the
rebalancing program and the mean-variance weights, a scalar double-loop
for the quantile regression loss, Monte-Carlo rollouts for return
quantiles, and central finite differences for every gradient. The CLI
exposes them as health checks; the test suite pins tolerances against
them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .actions import action_to_weights
from .autodiff import Tensor, backward
from .distribution import RiskConfig, bellman_target, quantile_huber_loss, utility
from .nn import ActorNetwork, Adam, CriticNetwork


# ---------------------------------------------------------------------------
# Rebalancing program, by exhaustive sweep
# ---------------------------------------------------------------------------

def rebalance_grid_search(
    value: float,
    weights: np.ndarray,
    target: np.ndarray,
    c1: float,
    c2: float,
    step: float = 0.01,
) -> float:
    """Best feasible post-trade value found by sweeping candidates.

    Candidate post-trade values (equivalently, quantized trade-size
    vectors along the one-dimensional feasible set) are enumerated at
    `step` currency resolution; a candidate is feasible when the trade
    costs it implies balance the value equation within grid tolerance.
    """
    weights = np.asarray(weights, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    holdings = value * weights

    diff0 = value * target - holdings
    cost0 = c2 * diff0.clip(min=0.0).sum() + c1 * (-diff0).clip(min=0.0).sum()
    lo = value - 2.5 * cost0 - 1.0
    grid = np.arange(lo, value + step, step)

    diff = grid[:, None] * target[None, :] - holdings[None, :]
    cost = c2 * diff.clip(min=0.0).sum(axis=1) + c1 * (-diff).clip(min=0.0).sum(axis=1)
    residual = np.abs(grid - (value - cost))
    feasible = residual <= 0.75 * step
    if not feasible.any():
        raise RuntimeError("grid search found no feasible rebalancing")
    return float(grid[feasible].max())


# ---------------------------------------------------------------------------
# Mean-variance weights, by sweep along the budget line (2 assets)
# ---------------------------------------------------------------------------

def mean_variance_grid_search(
    mu: np.ndarray,
    cov: np.ndarray,
    zeta: float,
    lo: float = -3.0,
    hi: float = 4.0,
    step: float = 1e-4,
) -> np.ndarray:
    if len(mu) != 2:
        raise ValueError("budget-line sweep supports exactly 2 assets")
    w1 = np.arange(lo, hi + step, step)
    w = np.column_stack([w1, 1.0 - w1])
    util_vals = w @ mu - zeta * np.einsum("ij,jk,ik->i", w, cov, w)
    return w[int(util_vals.argmax())]


# ---------------------------------------------------------------------------
# Quantile-Huber loss, scalar double loop
# ---------------------------------------------------------------------------

def scalar_quantile_huber(theta: np.ndarray, target: np.ndarray, kappa: float):
    """Straight-line re-derivation of the loss and its theta-gradient."""
    n = len(theta)
    loss = 0.0
    grad = np.zeros(n)
    for i in range(n):
        tau = (2 * (i + 1) - 1) / (2.0 * n)
        for j in range(n):
            u = target[j] - theta[i]
            if abs(u) <= kappa:
                huber = 0.5 * u * u
                dhuber = u
            else:
                huber = kappa * (abs(u) - 0.5 * kappa)
                dhuber = kappa * (1.0 if u > 0 else -1.0)
            w = abs(tau - (1.0 if u < 0 else 0.0))
            loss += w * huber
            grad[i] -= w * dhuber
    return loss / n, grad / n


# ---------------------------------------------------------------------------
# Two-state Bernoulli-reward chain: Monte-Carlo oracle + tabular learner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoStateChain:
    """Deterministic 2-cycle over states 0 and 1 with Bernoulli(p_s) rewards."""

    p: tuple[float, float]
    gamma: float

    def rollout_horizon(self, tail: float = 1e-4) -> int:
        # gamma^T / (1 - gamma) < tail
        return max(1, math.ceil(math.log(tail * (1.0 - self.gamma)) / math.log(self.gamma)))


def mc_return_quantiles(chain: TwoStateChain, start_state: int, taus: np.ndarray,
                        n_rollouts: int = 1_000_000, seed: int = 0) -> np.ndarray:
    """Empirical return quantiles from vectorized Monte-Carlo rollouts."""
    rng = np.random.default_rng(seed)
    horizon = chain.rollout_horizon()
    returns = np.zeros(n_rollouts)
    discount = 1.0
    state = start_state
    for _ in range(horizon):
        returns += discount * (rng.random(n_rollouts) < chain.p[state])
        discount *= chain.gamma
        state = 1 - state
    return np.quantile(returns, taus)


def tabular_quantile_evaluation(
    chain: TwoStateChain,
    n_quantiles: int,
    kappa: float = 0.005,
    sweeps: int = 150,
    inner_steps: int = 500,
    lr: float = 0.01,
) -> np.ndarray:
    """Learn per-state quantiles by iterated Bellman targets + loss descent.

    Expected loss over both reward outcomes (no sampling noise), target
    values frozen per sweep; uses the production loss and optimizer.
    Returns a (2, N) array of learned quantiles.
    """
    theta = [Tensor(np.zeros(n_quantiles), requires_grad=True) for _ in range(2)]
    adam = Adam(theta, lr)
    for _ in range(sweeps):
        frozen = [t.data.copy() for t in theta]
        targets = {}
        for s in range(2):
            targets[s] = (
                bellman_target(1.0, chain.gamma, frozen[1 - s]),
                bellman_target(0.0, chain.gamma, frozen[1 - s]),
            )
        for _ in range(inner_steps):
            adam.zero_grad()
            total = None
            for s in range(2):
                hit, miss = targets[s]
                piece = (quantile_huber_loss(theta[s], hit, kappa) * chain.p[s]
                         + quantile_huber_loss(theta[s], miss, kappa) * (1.0 - chain.p[s]))
                total = piece if total is None else total + piece
            backward(total)
            adam.step()
    return np.stack([t.data.copy() for t in theta])


# ---------------------------------------------------------------------------
# Gradient checks
# ---------------------------------------------------------------------------

def _scalarize(out: Tensor, rng: np.random.Generator) -> Tensor:
    probe = Tensor(rng.standard_normal(out.data.shape))
    return ad.reduce_sum(out * probe)


def run_gradcheck(seed: int = 0, rtol: float = 1e-4) -> list[tuple[str, float]]:
    """Finite-difference checks for every primitive and the composites.

    Returns (name, worst scaled error) per check; raises AssertionError
    on the first failure. Inputs are drawn away from the kinks of the
    piecewise ops so central differences are valid.
    """
    rng = np.random.default_rng(seed)
    results: list[tuple[str, float]] = []

    def check(name: str, build, params):
        worst = ad.check_gradients(build, params, rtol=rtol)
        results.append((name, worst))

    x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    y = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = Tensor(rng.standard_normal(4), requires_grad=True)
    m = Tensor(rng.standard_normal((4, 5)), requires_grad=True)

    check("add", lambda: _scalarize(ad.add(x, y), np.random.default_rng(2)), [x, y])
    check("add_broadcast", lambda: _scalarize(ad.add(x, b), np.random.default_rng(3)), [x, b])
    check("sub", lambda: _scalarize(ad.sub(x, y), np.random.default_rng(4)), [x, y])
    check("mul", lambda: _scalarize(ad.mul(x, y), np.random.default_rng(5)), [x, y])
    check("matmul", lambda: _scalarize(ad.matmul(x, m), np.random.default_rng(6)), [x, m])
    check("sigmoid", lambda: _scalarize(ad.sigmoid(x), np.random.default_rng(7)), [x])
    check("tanh", lambda: _scalarize(ad.tanh(x), np.random.default_rng(8)), [x])

    # Keep leaky-relu inputs clear of the kink at zero.
    lx = Tensor(rng.standard_normal((3, 4)) + np.where(rng.random((3, 4)) < 0.5, -0.5, 0.5),
                requires_grad=True)
    lx.data[np.abs(lx.data) < 0.05] += 0.1
    check("leaky_relu", lambda: _scalarize(ad.leaky_relu(lx), np.random.default_rng(9)), [lx])

    check("softmax", lambda: _scalarize(ad.softmax(x), np.random.default_rng(10)), [x])
    check("concat", lambda: _scalarize(ad.concat([x, y], axis=-1), np.random.default_rng(11)),
          [x, y])
    check("reduce_sum", lambda: _scalarize(ad.reduce_sum(x, axis=1), np.random.default_rng(12)),
          [x])
    check("reduce_mean", lambda: _scalarize(ad.reduce_mean(x, axis=0), np.random.default_rng(13)),
          [x])

    gx = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
    gh = Tensor(rng.standard_normal((2, 4)), requires_grad=True)
    gates = [Tensor(rng.standard_normal(shape) * 0.5, requires_grad=True)
             for shape in [(3, 4), (4, 4), (4,)] * 3]
    check("gru_cell",
          lambda: _scalarize(ad.gru_cell(gx, gh, *gates), np.random.default_rng(14)),
          [gx, gh, *gates])

    # Quantile-Huber: tight theta spread plus moderate offsets keeps every
    # pairwise residual clear of the kinks at 0 and +-kappa.
    kappa = 1.0
    theta0 = rng.uniform(-0.02, 0.02, 6)
    offsets = rng.uniform(0.3, 0.6, 6) * rng.choice([-1.0, 1.0], 6)
    qh_theta = Tensor(theta0, requires_grad=True)
    qh_target = theta0 + offsets
    check("quantile_huber_loss",
          lambda: quantile_huber_loss(qh_theta, qh_target, kappa), [qh_theta])

    rcfg = RiskConfig(alpha=0.75, zeta=0.5, kappa=1.0, gamma=0.9)
    ut = Tensor(rng.standard_normal((3, 8)), requires_grad=True)
    check("utility", lambda: utility(ut, rcfg), [ut])

    # Composite actor and critic graphs over a tiny window.
    n_assets, feat, window, hidden, nq = 2, 5, 3, 4, 8
    actor = ActorNetwork.create(rng, n_assets * feat, hidden, 2, n_assets)
    critic = CriticNetwork.create(rng, n_assets * feat + n_assets + 1, hidden, 2, n_assets, nq)
    actor_in = rng.standard_normal((2, window, n_assets * feat))
    critic_in = rng.standard_normal((2, window, n_assets * feat + n_assets + 1))
    actions = action_to_weights(rng.standard_normal((2, n_assets)), 3.0)

    check("actor_forward",
          lambda: _scalarize(actor.forward(actor_in), np.random.default_rng(15)),
          actor.param_tensors())

    with ad.no_grad():
        critic_targets = critic.forward(critic_in, actions).data + 0.3

    def critic_loss():
        theta = critic.forward(critic_in, actions)
        return quantile_huber_loss(theta, critic_targets, kappa)

    check("critic_quantile_loss", critic_loss, critic.param_tensors())

    def actor_through_critic():
        raw = actor.forward(actor_in)
        weights = ad.softmax(raw) * 3.0 + (-(3.0 - 1.0) / n_assets)
        theta = critic.forward(critic_in, weights)
        return utility(theta, RiskConfig(alpha=0.875, zeta=0.5, kappa=1.0, gamma=0.9))

    critic.set_requires_grad(False)
    try:
        check("actor_utility_chain", actor_through_critic, actor.param_tensors())
    finally:
        critic.set_requires_grad(True)

    return results


def run_all_oracles(seed: int = 0) -> list[str]:
    """Run the brute-force validators; returns human-readable report lines.

    Raises AssertionError if any validator disagrees with the
    production implementation beyond tolerance.
    """
    from .backtest import mean_variance_weights
    from .portfolio import PortfolioState, rebalance

    rng = np.random.default_rng(seed)
    lines = []

    worst_rel = 0.0
    for case in range(20):
        n = int(rng.integers(2, 4))
        value = float(rng.uniform(1_000.0, 20_000.0))
        weights = action_to_weights(rng.standard_normal(n), 2.0)
        target = action_to_weights(rng.standard_normal(n), 2.0)
        c1, c2 = rng.uniform(0.0, 0.05, 2)
        prices = rng.uniform(10.0, 200.0, n)
        state = PortfolioState(value, weights, prices, 0)
        solved, plan = rebalance(state, target, c1, c2)
        grid = rebalance_grid_search(value, weights, target, c1, c2)
        rel = abs(solved.value - grid) / grid
        worst_rel = max(worst_rel, rel)
        assert rel <= 1e-4, f"rebalance case {case}: fixed point {solved.value} vs grid {grid}"
        assert np.all(plan.buy_flag * plan.sell_flag == 0)
    lines.append(f"rebalance fixed point vs grid sweep: 20 cases, worst rel err {worst_rel:.2e}")

    worst = 0.0
    cases = 0
    while cases < 10:
        mu = rng.normal(0.002, 0.01, 2)
        a = rng.normal(0.0, 0.02, (2, 2))
        cov = a @ a.T + 1e-4 * np.eye(2)
        zeta = float(rng.uniform(0.2, 4.0))
        closed = mean_variance_weights(mu, cov, zeta, ridge=0.0)
        if not -2.9 <= closed[0] <= 3.9:
            continue  # optimum outside the sweep's fixed range; redraw
        swept = mean_variance_grid_search(mu, cov, zeta)
        worst = max(worst, float(np.abs(closed - swept).max()))
        assert np.abs(closed - swept).max() <= 1e-4, f"mean-variance case {cases}"
        cases += 1
    lines.append(f"mean-variance closed form vs budget-line sweep: 10 cases, worst |dw| {worst:.2e}")

    worst = 0.0
    for case in range(50):
        n = int(rng.integers(1, 9))
        theta = rng.standard_normal(n)
        target = rng.standard_normal(n)
        kappa = float(rng.uniform(0.2, 2.0))
        t = Tensor(theta, requires_grad=True)
        loss = quantile_huber_loss(t, target, kappa)
        backward(loss)
        ref_loss, ref_grad = scalar_quantile_huber(theta, target, kappa)
        worst = max(worst, abs(loss.item() - ref_loss), float(np.abs(t.grad - ref_grad).max()))
        assert abs(loss.item() - ref_loss) <= 1e-10
        assert np.abs(t.grad - ref_grad).max() <= 1e-10
    lines.append(f"quantile loss vs scalar double loop: 50 cases, worst err {worst:.2e}")

    chain = TwoStateChain(p=(0.48, 0.52), gamma=0.5)
    n_quantiles = 32
    learned = tabular_quantile_evaluation(chain, n_quantiles)
    taus = (2.0 * np.arange(1, n_quantiles + 1) - 1.0) / (2.0 * n_quantiles)
    worst = 0.0
    for s in range(2):
        mc = mc_return_quantiles(chain, s, taus, n_rollouts=200_000, seed=seed + s)
        worst = max(worst, float(np.abs(learned[s] - mc).max()))
    lines.append(f"tabular quantile evaluation vs Monte-Carlo: worst abs err {worst:.3f}")
    assert worst <= 0.02, "tabular quantile evaluation drifted from Monte-Carlo quantiles"

    return lines
