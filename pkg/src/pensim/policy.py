"""Feed-forward actor-critic with explicit forward and backward passes.

Two interchangeable heads share a two-layer tanh trunk:

* flat: one masked categorical over the whole action space;
* two-stage: a masked host head, then an action head conditioned on the
  sampled host through a learned host embedding concatenated to the trunk
  features.

The architecture is small and fixed, so differentiation is written out by
hand per layer; the PPO losses supply the logit/value gradients and this
module propagates them to the parameters. Gradients are verified against
central finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .validation import ValidationError

MASK_OFFSET = -1e9  # added to masked logits before the softmax

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PolicyArchitecture:
    input_dim: int
    layer_size: int
    n_actions: int  # flat head width
    n_hosts: int  # host head width
    per_host_actions: int  # action head width
    embed_dim: int = 32
    head: str = "flat"  # "flat" | "2sas"
    dtype: str = "float64"

    def np_dtype(self):
        return np.dtype(self.dtype)


_TRUNK_KEYS = ("W1", "b1", "W2", "b2", "Wv", "bv")
_FLAT_KEYS = ("Wf", "bf")
_2SAS_KEYS = ("Wh", "bh", "E", "Wa", "ba")


def param_keys(arch: PolicyArchitecture) -> tuple[str, ...]:
    return _TRUNK_KEYS + (_FLAT_KEYS if arch.head == "flat" else _2SAS_KEYS)


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float, dtype) -> np.ndarray:
    a = rng.standard_normal(shape)
    q, r = np.linalg.qr(a if shape[0] >= shape[1] else a.T)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return np.ascontiguousarray((gain * q[: shape[0], : shape[1]]).astype(dtype))


def init_params(arch: PolicyArchitecture, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Orthogonal trunk, small-gain policy heads, unit-gain value head."""
    dt = arch.np_dtype()
    ls = arch.layer_size
    p = {
        "W1": _orthogonal(rng, (arch.input_dim, ls), np.sqrt(2.0), dt),
        "b1": np.zeros(ls, dtype=dt),
        "W2": _orthogonal(rng, (ls, ls), np.sqrt(2.0), dt),
        "b2": np.zeros(ls, dtype=dt),
        "Wv": _orthogonal(rng, (ls, 1), 1.0, dt),
        "bv": np.zeros(1, dtype=dt),
    }
    if arch.head == "flat":
        p["Wf"] = _orthogonal(rng, (ls, arch.n_actions), 0.01, dt)
        p["bf"] = np.zeros(arch.n_actions, dtype=dt)
    elif arch.head == "2sas":
        p["Wh"] = _orthogonal(rng, (ls, arch.n_hosts), 0.01, dt)
        p["bh"] = np.zeros(arch.n_hosts, dtype=dt)
        p["E"] = (rng.standard_normal((arch.n_hosts, arch.embed_dim)) * 0.1).astype(dt)
        p["Wa"] = _orthogonal(rng, (ls + arch.embed_dim, arch.per_host_actions), 0.01, dt)
        p["ba"] = np.zeros(arch.per_host_actions, dtype=dt)
    else:
        raise ValidationError(f"unknown head {arch.head!r}")
    return p


# ----- masked categorical ----------------------------------------------------


class MaskedCategorical:
    """Categorical distribution with invalid entries pushed to -1e9 logits.

    Masked probabilities underflow to exactly zero, so sampling, log-probs
    and entropy are invariant to whatever the network emits at masked slots.
    """

    def __init__(self, logits: np.ndarray, mask: np.ndarray):
        if not mask.any(axis=-1).all():
            raise ValidationError("mask must leave at least one valid entry per row")
        ml = logits + (1.0 - mask) * MASK_OFFSET
        z = ml - ml.max(axis=-1, keepdims=True)
        e = np.exp(z)
        s = e.sum(axis=-1, keepdims=True)
        self.p = e / s
        self.logp = z - np.log(s)
        self.mask = mask

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(self.p.shape[0])
        cdf = np.cumsum(self.p, axis=-1)
        return np.argmax(cdf > u[:, None], axis=-1)

    def log_prob(self, actions: np.ndarray) -> np.ndarray:
        rows = np.arange(self.p.shape[0])
        if not self.mask[rows, actions].all():
            raise ValidationError("log_prob queried for a masked action")
        return self.logp[rows, actions]

    def entropy(self) -> np.ndarray:
        plogp = np.where(self.p > 0, self.p * self.logp, 0.0)
        return -plogp.sum(axis=-1)

    def dlogits_log_prob(self, actions: np.ndarray) -> np.ndarray:
        """d log p(a) / d logits = onehot(a) - p."""
        g = -self.p.copy()
        g[np.arange(g.shape[0]), actions] += 1.0
        return g

    def dlogits_entropy(self) -> np.ndarray:
        """d H / d logits = -p * (log p + H)."""
        h = self.entropy()
        return np.where(self.p > 0, -self.p * (self.logp + h[:, None]), 0.0)


@dataclass
class PolicySample:
    action: np.ndarray  # flat action index, or per-host action index for 2sas
    log_prob: np.ndarray
    entropy: np.ndarray
    value: np.ndarray
    host: np.ndarray | None = None
    host_log_prob: np.ndarray | None = None
    host_entropy: np.ndarray | None = None


# ----- forward ---------------------------------------------------------------


def trunk_forward(params: dict, x: np.ndarray) -> dict:
    z1 = x @ params["W1"] + params["b1"]
    h1 = np.tanh(z1)
    z2 = h1 @ params["W2"] + params["b2"]
    h2 = np.tanh(z2)
    value = (h2 @ params["Wv"]).reshape(-1) + params["bv"][0]
    return {"x": x, "h1": h1, "h2": h2, "value": value}


def forward_flat(params: dict, x: np.ndarray, mask: np.ndarray) -> tuple[MaskedCategorical, np.ndarray, dict]:
    cache = trunk_forward(params, x)
    logits = cache["h2"] @ params["Wf"] + params["bf"]
    dist = MaskedCategorical(logits, mask.astype(x.dtype))
    return dist, cache["value"], cache


def sample_flat(params: dict, x: np.ndarray, mask: np.ndarray, rng: np.random.Generator) -> PolicySample:
    dist, value, _ = forward_flat(params, x, mask)
    action = dist.sample(rng)
    return PolicySample(
        action=action,
        log_prob=dist.log_prob(action),
        entropy=dist.entropy(),
        value=value,
    )


def action_head_forward(params: dict, h2: np.ndarray, hosts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate the trunk features with the chosen hosts' embeddings."""
    a_in = np.concatenate([h2, params["E"][hosts]], axis=1)
    return a_in @ params["Wa"] + params["ba"], a_in


def forward_2sas(
    params: dict,
    x: np.ndarray,
    host_mask: np.ndarray,
    per_host_masks: np.ndarray,
    rng: np.random.Generator,
) -> PolicySample:
    """Sample (host, per-host action) through the two heads.

    ``per_host_masks`` has shape (batch, n_hosts, per_host_actions); the
    action head is masked by the row of the sampled host.
    """
    cache = trunk_forward(params, x)
    host_logits = cache["h2"] @ params["Wh"] + params["bh"]
    host_dist = MaskedCategorical(host_logits, host_mask.astype(x.dtype))
    hosts = host_dist.sample(rng)
    act_logits, _ = action_head_forward(params, cache["h2"], hosts)
    act_mask = per_host_masks[np.arange(len(hosts)), hosts]
    act_dist = MaskedCategorical(act_logits, act_mask.astype(x.dtype))
    actions = act_dist.sample(rng)
    return PolicySample(
        action=actions,
        log_prob=act_dist.log_prob(actions),
        entropy=act_dist.entropy(),
        value=cache["value"],
        host=hosts,
        host_log_prob=host_dist.log_prob(hosts),
        host_entropy=host_dist.entropy(),
    )


def evaluate_flat(params: dict, x: np.ndarray, mask: np.ndarray, actions: np.ndarray):
    """Log-prob, entropy and value of stored actions under current params."""
    dist, value, cache = forward_flat(params, x, mask)
    return dist.log_prob(actions), dist.entropy(), value, dist, cache


def evaluate_2sas(
    params: dict,
    x: np.ndarray,
    host_mask: np.ndarray,
    act_mask: np.ndarray,
    hosts: np.ndarray,
    actions: np.ndarray,
):
    """Per-head log-probs for stored (host, action) pairs.

    The action head is conditioned on the host sampled at rollout time, which
    keeps the importance ratios well-defined during updates.
    """
    cache = trunk_forward(params, x)
    host_logits = cache["h2"] @ params["Wh"] + params["bh"]
    host_dist = MaskedCategorical(host_logits, host_mask.astype(x.dtype))
    act_logits, a_in = action_head_forward(params, cache["h2"], hosts)
    act_dist = MaskedCategorical(act_logits, act_mask.astype(x.dtype))
    cache["a_in"] = a_in
    cache["hosts"] = hosts
    return host_dist, act_dist, cache


# ----- backward --------------------------------------------------------------


def _trunk_backward(params: dict, cache: dict, d_h2: np.ndarray, d_value: np.ndarray, grads: dict) -> None:
    h2, h1, x = cache["h2"], cache["h1"], cache["x"]
    d_h2 = d_h2 + d_value[:, None] * params["Wv"][:, 0][None, :]
    grads["Wv"] = h2.T @ d_value[:, None]
    grads["bv"] = np.array([d_value.sum()], dtype=h2.dtype)
    d_z2 = d_h2 * (1.0 - h2 * h2)
    grads["W2"] = h1.T @ d_z2
    grads["b2"] = d_z2.sum(axis=0)
    d_h1 = d_z2 @ params["W2"].T
    d_z1 = d_h1 * (1.0 - h1 * h1)
    grads["W1"] = x.T @ d_z1
    grads["b1"] = d_z1.sum(axis=0)


def backward_flat(params: dict, cache: dict, d_logits: np.ndarray, d_value: np.ndarray) -> dict:
    grads = {}
    grads["Wf"] = cache["h2"].T @ d_logits
    grads["bf"] = d_logits.sum(axis=0)
    d_h2 = d_logits @ params["Wf"].T
    _trunk_backward(params, cache, d_h2, d_value, grads)
    return grads


def backward_2sas(
    params: dict,
    cache: dict,
    d_host_logits: np.ndarray,
    d_act_logits: np.ndarray,
    d_value: np.ndarray,
) -> dict:
    grads = {}
    ls = params["W2"].shape[1]
    grads["Wh"] = cache["h2"].T @ d_host_logits
    grads["bh"] = d_host_logits.sum(axis=0)
    grads["Wa"] = cache["a_in"].T @ d_act_logits
    grads["ba"] = d_act_logits.sum(axis=0)
    d_a_in = d_act_logits @ params["Wa"].T
    d_h2 = d_host_logits @ params["Wh"].T + d_a_in[:, :ls]
    grads["E"] = np.zeros_like(params["E"])
    np.add.at(grads["E"], cache["hosts"], d_a_in[:, ls:])
    _trunk_backward(params, cache, d_h2, d_value, grads)
    return grads


# ----- parameter vector and checkpoints --------------------------------------


def flatten_params(arch: PolicyArchitecture, params: dict) -> np.ndarray:
    return np.concatenate([params[k].reshape(-1) for k in param_keys(arch)])


def unflatten_params(arch: PolicyArchitecture, flat: np.ndarray) -> dict:
    shapes = param_shapes(arch)
    out = {}
    off = 0
    for k in param_keys(arch):
        n = int(np.prod(shapes[k]))
        out[k] = flat[off : off + n].reshape(shapes[k]).astype(arch.np_dtype())
        off += n
    if off != flat.size:
        raise ValidationError("parameter vector length mismatch")
    return out


def param_shapes(arch: PolicyArchitecture) -> dict[str, tuple[int, ...]]:
    ls = arch.layer_size
    shapes = {
        "W1": (arch.input_dim, ls), "b1": (ls,),
        "W2": (ls, ls), "b2": (ls,),
        "Wv": (ls, 1), "bv": (1,),
    }
    if arch.head == "flat":
        shapes.update({"Wf": (ls, arch.n_actions), "bf": (arch.n_actions,)})
    else:
        shapes.update({
            "Wh": (ls, arch.n_hosts), "bh": (arch.n_hosts,),
            "E": (arch.n_hosts, arch.embed_dim),
            "Wa": (ls + arch.embed_dim, arch.per_host_actions),
            "ba": (arch.per_host_actions,),
        })
    return shapes


def _jsonable(obj):
    """Bit-generator states mix ints, dicts and uint64 arrays."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.dtype.name, "values": obj.tolist()}
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _from_jsonable(obj):
    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.array(obj["values"], dtype=obj["__ndarray__"])
        return {k: _from_jsonable(v) for k, v in obj.items()}
    return obj


def save_checkpoint(path, arch: PolicyArchitecture, params: dict, rng_state: dict, step_count: int) -> None:
    np.savez(
        path,
        version=np.int64(CHECKPOINT_VERSION),
        arch=json.dumps(asdict(arch), sort_keys=True),
        flat_params=flatten_params(arch, params),
        rng_state=json.dumps(_jsonable(rng_state), sort_keys=True),
        step_count=np.int64(step_count),
    )


def load_checkpoint(path) -> tuple[PolicyArchitecture, dict, dict, int]:
    with np.load(path, allow_pickle=False) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ValidationError(f"unsupported checkpoint version {version}")
        arch = PolicyArchitecture(**json.loads(str(z["arch"])))
        params = unflatten_params(arch, z["flat_params"])
        rng_state = _from_jsonable(json.loads(str(z["rng_state"])))
        step_count = int(z["step_count"])
    return arch, params, rng_state, step_count
