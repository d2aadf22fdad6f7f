"""Configuration types, JSON (de)serialization, and shipped presets.

Config files are versioned JSON documents; ``load_config``/``dump_config``
round-trip exactly. Presets live in ``pensim/presets`` and are addressed by
name (``16h``, ``26h``, ``40h``, ``smoke`` for environments, and
``{dr,plr,rplr}-{flat,2sas}-<size>`` for training).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources

from .validation import ValidationError, check_count, check_positive, check_probability

CONFIG_SCHEMA_VERSION = 1

SUBNET_INTERNET = 0
SUBNET_DMZ = 1

ACCESS_NONE = 0
ACCESS_USER = 1
ACCESS_ROOT = 2


@dataclass(frozen=True)
class GenerationParams:
    """Knobs of the procedural network generator.

    ``n_hosts`` counts generated hosts; the attacker machine is appended on
    top of these, so the full host table has ``n_hosts + 1`` rows.
    """

    n_hosts: int
    n_subnets: int
    topology_density: float
    service_density: float = 0.7
    process_density: float = 0.7
    sensitive_density: float = 0.15
    n_os: int = 2
    n_services: int = 3
    n_processes: int = 3
    homogeneous_subnets: bool = False
    beta_concentration: float = 10.0

    def validate(self) -> "GenerationParams":
        check_count(self.n_subnets, "n_subnets", minimum=3)
        check_count(self.n_hosts, "n_hosts", minimum=1)
        if self.n_hosts < self.n_subnets - 1:
            raise ValidationError(
                f"n_hosts={self.n_hosts} cannot fill {self.n_subnets - 1} non-internet subnets"
            )
        check_probability(self.topology_density, "topology_density")
        check_probability(self.service_density, "service_density")
        check_probability(self.process_density, "process_density")
        check_probability(self.sensitive_density, "sensitive_density")
        check_count(self.n_os, "n_os")
        check_count(self.n_services, "n_services")
        check_count(self.n_processes, "n_processes")
        check_positive(self.beta_concentration, "beta_concentration")
        return self

    @property
    def n_hosts_total(self) -> int:
        return self.n_hosts + 1


@dataclass(frozen=True)
class EnvConfig:
    """Episode limits and the reward constants."""

    max_steps: int
    scan_cost: float = 1.0
    exploit_cost: float = 3.0
    privesc_cost: float = 3.0
    host_value: float = 50.0
    discovery_value: float = 1.0
    reward_scaling: bool = True

    def validate(self) -> "EnvConfig":
        check_count(self.max_steps, "max_steps")
        for name in ("scan_cost", "exploit_cost", "privesc_cost", "host_value", "discovery_value"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        return self


@dataclass(frozen=True)
class PPOConfig:
    learning_rate: float = 3e-4
    n_envs: int = 1024
    n_steps: int = 32
    update_epochs: int = 4
    n_minibatches: int = 4
    gamma: float = 0.995
    gae_lambda: float = 0.8
    clip_eps: float = 0.2
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    entropy_coef: float = 0.005
    host_entropy_coef: float = 0.01
    action_entropy_coef: float = 0.01
    layer_size: int = 256
    embed_dim: int = 32
    total_steps: int = 5_000_000

    def validate(self) -> "PPOConfig":
        check_positive(self.learning_rate, "learning_rate")
        check_count(self.n_envs, "n_envs")
        check_count(self.n_steps, "n_steps")
        check_count(self.update_epochs, "update_epochs")
        check_count(self.n_minibatches, "n_minibatches")
        check_probability(self.gamma, "gamma")
        check_probability(self.gae_lambda, "gae_lambda")
        check_positive(self.clip_eps, "clip_eps")
        check_positive(self.max_grad_norm, "max_grad_norm")
        check_count(self.layer_size, "layer_size")
        check_count(self.embed_dim, "embed_dim")
        check_count(self.total_steps, "total_steps")
        return self


@dataclass(frozen=True)
class PLRConfig:
    replay_prob: float = 0.5
    staleness_coef: float = 0.3
    temperature: float = 1.0
    buffer_capacity: int = 10_000
    min_fill_ratio: float = 0.5
    score_fn: str = "maxmc"  # "maxmc" | "pvl"
    prioritization: str = "rank"  # "rank" | "topk"
    top_k: int = 25
    robust: bool = False

    def validate(self) -> "PLRConfig":
        check_probability(self.replay_prob, "replay_prob")
        check_probability(self.staleness_coef, "staleness_coef")
        check_positive(self.temperature, "temperature")
        check_count(self.buffer_capacity, "buffer_capacity")
        check_probability(self.min_fill_ratio, "min_fill_ratio")
        if self.score_fn not in ("maxmc", "pvl"):
            raise ValidationError(f"unknown score_fn {self.score_fn!r}")
        if self.prioritization not in ("rank", "topk"):
            raise ValidationError(f"unknown prioritization {self.prioritization!r}")
        check_count(self.top_k, "top_k")
        return self


ALGORITHMS = ("dr", "plr", "rplr")
HEADS = ("flat", "2sas")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one training experiment."""

    generation: GenerationParams
    env: EnvConfig
    ppo: PPOConfig
    plr: PLRConfig = field(default_factory=PLRConfig)
    algorithm: str = "dr"
    head: str = "flat"
    train_td: float | None = None  # None: use generation.topology_density
    eval_tds: tuple[float, ...] = ()
    eval_set_size: int = 50
    eval_seed_base: int = 0
    n_eval_every: int | None = None  # None: total_steps // 50

    def validate(self) -> "ExperimentConfig":
        self.generation.validate()
        self.env.validate()
        self.ppo.validate()
        self.plr.validate()
        if self.algorithm not in ALGORITHMS:
            raise ValidationError(f"algorithm must be one of {ALGORITHMS}")
        if self.head not in HEADS:
            raise ValidationError(f"head must be one of {HEADS}")
        for td in self.eval_tds:
            check_probability(td, "eval_tds entry")
        check_count(self.eval_set_size, "eval_set_size")
        return self

    @property
    def training_generation(self) -> GenerationParams:
        td = self.generation.topology_density if self.train_td is None else self.train_td
        return dataclasses.replace(self.generation, topology_density=td)

    def eval_interval(self) -> int:
        if self.n_eval_every is not None:
            return self.n_eval_every
        return max(1, self.ppo.total_steps // 50)


_FIELD_TYPES = {
    "generation": GenerationParams,
    "env": EnvConfig,
    "ppo": PPOConfig,
    "plr": PLRConfig,
}


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = {"version": CONFIG_SCHEMA_VERSION}
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if dataclasses.is_dataclass(value):
            value = dataclasses.asdict(value)
        elif isinstance(value, tuple):
            value = list(value)
        doc[f.name] = value
    return doc


def config_from_dict(doc: dict) -> ExperimentConfig:
    version = doc.get("version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ValidationError(f"unsupported config version {version!r}")
    kwargs = {}
    for f in dataclasses.fields(ExperimentConfig):
        if f.name not in doc:
            continue
        value = doc[f.name]
        if f.name in _FIELD_TYPES:
            value = _FIELD_TYPES[f.name](**value)
        elif f.name == "eval_tds":
            value = tuple(value)
        kwargs[f.name] = value
    return ExperimentConfig(**kwargs).validate()


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


def load_config(text: str) -> ExperimentConfig:
    return config_from_dict(json.loads(text))


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_config(cfg))


def read_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return load_config(fh.read())


ENV_PRESETS = ("16h", "26h", "40h", "smoke")


def _preset_text(relpath: str) -> str:
    return resources.files("pensim.presets").joinpath(relpath).read_text()


def load_env_preset(name: str) -> ExperimentConfig:
    """Environment preset: generation + env config + the five densities."""
    if name not in ENV_PRESETS:
        raise ValidationError(f"unknown preset {name!r}; expected one of {ENV_PRESETS}")
    return load_config(_preset_text(f"env/{name}.json"))


def load_train_preset(name: str, algo: str, head: str) -> ExperimentConfig:
    """Training preset for (environment size, algorithm, head)."""
    if name not in ENV_PRESETS:
        raise ValidationError(f"unknown preset {name!r}; expected one of {ENV_PRESETS}")
    if algo not in ALGORITHMS or head not in HEADS:
        raise ValidationError(f"unknown algo/head {algo!r}/{head!r}")
    return load_config(_preset_text(f"train/{algo}_{head}_{name}.json"))
