"""Estimator-style wrapper so the training stack composes with sklearn-like
tooling: constructor parameters, ``get_params``/``set_params``, ``fit``,
``predict``, ``score``.

The environment itself keeps its reset/step surface (it is a simulator, not a
transformer); this wrapper covers the learning component, which does have a
natural fit/predict shape.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .config import ExperimentConfig, load_train_preset
from .evaluate import evaluate_policy, greedy_actions_2sas, greedy_actions_flat
from .actions import ActionSpaceSpec
from .trainer import TrainOutcome, train
from .validation import ValidationError


class PentestPPO:
    """Masked-PPO attack policy with an estimator interface.

    Parameters mirror the preset system: ``preset`` picks the environment
    scale, ``algorithm``/``head`` the training variant; keyword overrides are
    applied to the PPO section of the preset config.
    """

    def __init__(
        self,
        preset: str = "smoke",
        algorithm: str = "dr",
        head: str = "flat",
        seed: int = 0,
        total_steps: int | None = None,
        train_td: float | None = None,
    ):
        self.preset = preset
        self.algorithm = algorithm
        self.head = head
        self.seed = seed
        self.total_steps = total_steps
        self.train_td = train_td

    # -- sklearn-style plumbing

    def get_params(self, deep: bool = True) -> dict:
        return {
            "preset": self.preset,
            "algorithm": self.algorithm,
            "head": self.head,
            "seed": self.seed,
            "total_steps": self.total_steps,
            "train_td": self.train_td,
        }

    def set_params(self, **params) -> "PentestPPO":
        for k, v in params.items():
            if k not in self.get_params():
                raise ValidationError(f"unknown parameter {k!r}")
            setattr(self, k, v)
        return self

    def _config(self) -> ExperimentConfig:
        cfg = load_train_preset(self.preset, self.algorithm, self.head)
        if self.total_steps is not None:
            cfg = dataclasses.replace(cfg, ppo=dataclasses.replace(cfg.ppo, total_steps=self.total_steps))
        if self.train_td is not None:
            cfg = dataclasses.replace(cfg, train_td=self.train_td)
        return cfg.validate()

    # -- estimator surface

    def fit(self, X=None, y=None, stop_solve_rate: float | None = None) -> "PentestPPO":
        """Train the policy. X and y are ignored; experience comes from the
        simulator configured by the constructor parameters."""
        cfg = self._config()
        outcome: TrainOutcome = train(cfg, run_seed=self.seed, stop_solve_rate=stop_solve_rate)
        self.cfg_ = cfg
        self.arch_ = outcome.arch
        self.params_ = outcome.params
        self.outcome_ = outcome
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise ValidationError("estimator is not fitted; call fit() first")

    def predict(self, agent_inputs: np.ndarray, masks: np.ndarray) -> np.ndarray:
        """Greedy actions for a batch of agent inputs under validity masks.

        ``masks`` is the flat (n, |A|) mask; for the two-stage head it is
        reinterpreted through the factored layout.
        """
        self._check_fitted()
        x = np.asarray(agent_inputs, dtype=np.float32)
        m = np.asarray(masks, dtype=np.float32)
        if x.ndim != 2 or m.shape != (x.shape[0], self.arch_.n_actions):
            raise ValidationError("agent_inputs/masks shapes are inconsistent")
        if self.head == "flat":
            return greedy_actions_flat(self.params_, x, m)
        spec = ActionSpaceSpec.from_params(self.cfg_.training_generation)
        per_host = m.reshape(x.shape[0], spec.n_hosts_total, spec.per_host_actions)
        host_mask = per_host.max(axis=2)
        return greedy_actions_2sas(self.params_, x, host_mask, per_host, spec.per_host_actions)

    def score(self, X=None, y=None) -> float:
        """Greedy solve rate on the preset's in-distribution evaluation set."""
        self._check_fitted()
        td = self.cfg_.training_generation.topology_density
        set_id = list(self.cfg_.eval_tds).index(td) if td in self.cfg_.eval_tds else 0
        return evaluate_policy(self.params_, self.head, self.cfg_, td, set_id).solve_rate
