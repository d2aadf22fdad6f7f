"""Clipped PPO losses with hand-derived gradients, GAE, and Adam.

Both loss variants return (scalar loss, parameter gradients, metrics); the
gradients are assembled from the categorical-distribution derivatives in
``policy`` and are checked against central finite differences in the tests.
"""

from __future__ import annotations

import numpy as np

from . import policy as pol
from .config import PPOConfig
from .validation import ValidationError


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient stops being finite."""


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    bootstrap_values: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over a (n_steps, n_envs) rollout.

    ``dones[t]`` marks transitions into a terminal state; bootstrapping stops
    there. Returns (advantages, returns) with returns = advantages + values.
    """
    if rewards.shape != values.shape or rewards.shape != dones.shape:
        raise ValidationError("rewards/values/dones shapes differ")
    n_steps = rewards.shape[0]
    adv = np.zeros_like(values)
    lastgae = np.zeros_like(bootstrap_values)
    for t in range(n_steps - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        next_values = bootstrap_values if t == n_steps - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_values * nonterminal - values[t]
        lastgae = delta + gamma * lam * nonterminal * lastgae
        adv[t] = lastgae
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def _clipped_pg(ratio: np.ndarray, adv: np.ndarray, clip_eps: float):
    """Clipped surrogate term and d(term)/d(log-prob) per sample (pre-mean)."""
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    unclipped_obj = ratio * adv
    clipped_obj = clipped * adv
    obj = np.minimum(unclipped_obj, clipped_obj)
    # gradient flows through the ratio only where the unclipped branch is active
    active = unclipped_obj <= clipped_obj
    dlogp = np.where(active, -ratio * adv, 0.0)
    clip_frac = float(np.mean(~active))
    return -obj, dlogp, clip_frac


def _value_loss(values: np.ndarray, values_old: np.ndarray, returns: np.ndarray, clip_eps: float):
    """Clipped squared error; returns per-sample loss and d(loss)/d(value)."""
    v_clipped = values_old + np.clip(values - values_old, -clip_eps, clip_eps)
    err = values - returns
    err_clipped = v_clipped - returns
    use_plain = err**2 >= err_clipped**2
    loss = 0.5 * np.maximum(err**2, err_clipped**2)
    inside = np.abs(values - values_old) < clip_eps
    dv = np.where(use_plain, err, np.where(inside, err_clipped, 0.0))
    return loss, dv


def global_norm_clip(grads: dict, max_norm: float) -> tuple[dict, float]:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm and total > 0:
        scale = max_norm / total
        grads = {k: g * scale for k, g in grads.items()}
    return grads, total


def _check_finite(loss: float, grads: dict, context: str) -> None:
    if not np.isfinite(loss):
        raise TrainingDiverged(f"{context}: non-finite loss {loss}")
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"{context}: non-finite gradient in {k}")


def ppo_loss_flat(params: dict, batch: dict, cfg: PPOConfig) -> tuple[float, dict, dict]:
    """Clipped surrogate + clipped value loss - entropy bonus, flat head.

    ``batch`` holds minibatch arrays: inputs, actions, behaviour log-probs,
    behaviour values, raw advantages, returns, and the flat action mask.
    Advantages are normalized here, per minibatch.
    """
    x = batch["inputs"]
    n = x.shape[0]
    adv = normalize_advantages(batch["advantages"])
    dist, values, cache = pol.forward_flat(params, x, batch["mask"])
    logp = dist.log_prob(batch["actions"])
    ratio = np.exp(logp - batch["log_probs"])

    pg, dlogp, clip_frac = _clipped_pg(ratio, adv, cfg.clip_eps)
    vloss, dv = _value_loss(values, batch["values"], batch["returns"], cfg.clip_eps)
    entropy = dist.entropy()

    loss = float(pg.mean() + cfg.value_coef * vloss.mean() - cfg.entropy_coef * entropy.mean())

    d_logits = dist.dlogits_log_prob(batch["actions"]) * (dlogp / n)[:, None]
    d_logits -= (cfg.entropy_coef / n) * dist.dlogits_entropy()
    d_value = cfg.value_coef * dv / n
    grads = pol.backward_flat(params, cache, d_logits, d_value)
    _check_finite(loss, grads, "flat loss")
    metrics = {
        "policy_loss": float(pg.mean()),
        "value_loss": float(vloss.mean()),
        "entropy": float(entropy.mean()),
        "clip_frac": clip_frac,
        "approx_kl": float(np.mean(batch["log_probs"] - logp)),
    }
    return loss, grads, metrics


def ppo_loss_2sas(params: dict, batch: dict, cfg: PPOConfig) -> tuple[float, dict, dict]:
    """Two clipped surrogates (host and action heads) over a shared advantage.

    Each head keeps its own importance ratio against its stored behaviour
    log-prob and its own entropy bonus; the two policy terms are summed.
    """
    x = batch["inputs"]
    n = x.shape[0]
    adv = normalize_advantages(batch["advantages"])
    host_dist, act_dist, cache = pol.evaluate_2sas(
        params, x, batch["host_mask"], batch["action_mask"], batch["hosts"], batch["actions"]
    )
    logp_h = host_dist.log_prob(batch["hosts"])
    logp_a = act_dist.log_prob(batch["actions"])
    ratio_h = np.exp(logp_h - batch["host_log_probs"])
    ratio_a = np.exp(logp_a - batch["action_log_probs"])

    pg_h, dlogp_h, clip_h = _clipped_pg(ratio_h, adv, cfg.clip_eps)
    pg_a, dlogp_a, clip_a = _clipped_pg(ratio_a, adv, cfg.clip_eps)
    vloss, dv = _value_loss(cache["value"], batch["values"], batch["returns"], cfg.clip_eps)
    ent_h = host_dist.entropy()
    ent_a = act_dist.entropy()

    loss = float(
        pg_h.mean() + pg_a.mean() + cfg.value_coef * vloss.mean()
        - cfg.host_entropy_coef * ent_h.mean() - cfg.action_entropy_coef * ent_a.mean()
    )

    d_host = host_dist.dlogits_log_prob(batch["hosts"]) * (dlogp_h / n)[:, None]
    d_host -= (cfg.host_entropy_coef / n) * host_dist.dlogits_entropy()
    d_act = act_dist.dlogits_log_prob(batch["actions"]) * (dlogp_a / n)[:, None]
    d_act -= (cfg.action_entropy_coef / n) * act_dist.dlogits_entropy()
    d_value = cfg.value_coef * dv / n
    grads = pol.backward_2sas(params, cache, d_host, d_act, d_value)
    _check_finite(loss, grads, "2sas loss")
    metrics = {
        "policy_loss": float(pg_h.mean() + pg_a.mean()),
        "value_loss": float(vloss.mean()),
        "entropy": float(ent_h.mean() + ent_a.mean()),
        "host_entropy": float(ent_h.mean()),
        "action_entropy": float(ent_a.mean()),
        "clip_frac": 0.5 * (clip_h + clip_a),
        "approx_kl": float(np.mean(batch["host_log_probs"] - logp_h + batch["action_log_probs"] - logp_a)),
    }
    return loss, grads, metrics


class Adam:
    """Standard Adam with bias correction, operating on parameter dicts."""

    def __init__(self, params: dict, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[k] -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
