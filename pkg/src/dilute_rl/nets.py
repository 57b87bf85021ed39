"""Minimal feed-forward network engine.

Fixed topology: a trunk of fully-connected ReLU layers (default 128, 64)
followed by task heads, either a dueling value/advantage pair or an
actor-critic policy/Q pair. Forward passes cache activations so that
exact reverse-mode gradients can be computed for arbitrary cotangents on
the head outputs. Everything is float64 numpy; no autodiff framework.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

HEAD_DUELING = "dueling_q"
HEAD_ACTOR_CRITIC = "actor_critic"


@dataclass(frozen=True)
class NetworkSpec:
    input_dim: int
    n_actions: int
    head_kind: str
    hidden_dims: tuple = (128, 64)
    dropout_rate: float = 0.1
    # Fixed multiplier on the policy logits (actor-critic heads only). A
    # gain > 1 lets the same parameter movement produce a proportionally
    # sharper softmax, which matters when the optimizer budget is small.
    logit_gain: float = 1.0

    def __post_init__(self):
        if self.head_kind not in (HEAD_DUELING, HEAD_ACTOR_CRITIC):
            raise ValueError(f"unknown head_kind: {self.head_kind!r}")
        if self.input_dim < 1 or self.n_actions < 1:
            raise ValueError("input_dim and n_actions must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.logit_gain <= 0.0:
            raise ValueError("logit_gain must be positive")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))

    def param_shapes(self):
        """Ordered (name, shape) pairs; also the checkpoint layout order."""
        shapes = []
        prev = self.input_dim
        for i, h in enumerate(self.hidden_dims):
            shapes.append((f"w{i}", (prev, h)))
            shapes.append((f"b{i}", (h,)))
            prev = h
        if self.head_kind == HEAD_DUELING:
            shapes += [("wv", (prev, 1)), ("bv", (1,)),
                       ("wa", (prev, self.n_actions)), ("ba", (self.n_actions,))]
        else:
            shapes += [("wp", (prev, self.n_actions)), ("bp", (self.n_actions,)),
                       ("wq", (prev, self.n_actions)), ("bq", (self.n_actions,))]
        return shapes


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> dict:
    """Xavier-uniform weights, zero biases."""
    params = {}
    for name, shape in spec.param_shapes():
        if name.startswith("b"):
            params[name] = np.zeros(shape)
        else:
            fan_in, fan_out = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-limit, limit, size=shape)
    return params


def copy_params(params: dict) -> dict:
    return {k: v.copy() for k, v in params.items()}


def zeros_like_params(params: dict) -> dict:
    return {k: np.zeros_like(v) for k, v in params.items()}


def check_finite(params: dict, what: str = "parameters") -> None:
    for name, arr in params.items():
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError(f"non-finite entries in {what} ({name})")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for stability."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


class Network:
    """A parameterised network instance.

    ``forward`` caches activations and dropout masks; ``backward`` consumes
    the cache, so each backward call must be paired with the forward pass
    that produced the outputs being differentiated.
    """

    def __init__(self, spec: NetworkSpec, params: dict | None = None,
                 rng: np.random.Generator | None = None):
        self.spec = spec
        if params is None:
            if rng is None:
                raise ValueError("need params or an rng to initialize them")
            params = init_params(spec, rng)
        self._check_shapes(params)
        self.params = params
        self._cache = None

    def _check_shapes(self, params):
        for name, shape in self.spec.param_shapes():
            if name not in params or params[name].shape != shape:
                raise ValueError(f"parameter {name} missing or wrong shape "
                                 f"(want {shape})")

    def forward(self, x: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None) -> dict:
        """Run the network on a batch (or a single vector).

        Returns a dict of head outputs: for dueling heads ``v``, ``adv`` and
        the combined ``q`` (mean-centred advantages); for actor-critic heads
        ``logits``, ``policy`` (softmax) and ``q``. In train mode, inverted
        dropout is applied to both hidden activations.
        """
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.spec.input_dim:
            raise ValueError(f"input dim {x.shape[1]} != spec "
                             f"{self.spec.input_dim}")
        p = self.spec.dropout_rate
        if train and p > 0.0 and rng is None:
            raise ValueError("train-mode dropout needs an rng")

        acts, masks = [], []
        h = x
        n_hidden = len(self.spec.hidden_dims)
        for i in range(n_hidden):
            z = h @ self.params[f"w{i}"] + self.params[f"b{i}"]
            a = np.maximum(z, 0.0)
            if train and p > 0.0:
                mask = (rng.random(a.shape) >= p) / (1.0 - p)
            else:
                mask = None
            h = a * mask if mask is not None else a
            acts.append((z, h))
            masks.append(mask)

        out = {}
        if self.spec.head_kind == HEAD_DUELING:
            v = (h @ self.params["wv"] + self.params["bv"])[:, 0]
            adv = h @ self.params["wa"] + self.params["ba"]
            q = v[:, None] + adv - adv.mean(axis=1, keepdims=True)
            out = {"v": v, "adv": adv, "q": q}
        else:
            logits = self.spec.logit_gain * (h @ self.params["wp"] + self.params["bp"])
            q = h @ self.params["wq"] + self.params["bq"]
            out = {"logits": logits, "policy": softmax(logits), "q": q}

        self._cache = {"x": x, "acts": acts, "masks": masks, "out": out}
        if squeeze:
            out = {k: val[0] for k, val in out.items()}
        return out

    def backward(self, cotangents: dict) -> dict:
        """Exact gradient of <outputs, cotangents> w.r.t. every parameter.

        Cotangent keys mirror the forward outputs. For dueling heads a
        cotangent on ``q`` is folded into ``v``/``adv`` through the
        mean-centring; for actor-critic heads use ``logits`` (pre-softmax)
        and/or ``q``. Reuses the dropout masks of the paired forward pass.
        """
        if self._cache is None:
            raise RuntimeError("backward called without a paired forward pass")
        cache = self._cache
        x, acts, masks = cache["x"], cache["acts"], cache["masks"]
        batch = x.shape[0]
        n_act = self.spec.n_actions
        grads = {}

        def cot(key, shape):
            c = cotangents.get(key)
            if c is None:
                return np.zeros(shape)
            c = np.asarray(c, dtype=np.float64)
            if c.ndim == len(shape) - 1:
                c = c[None, ...]
            if c.shape != shape:
                raise ValueError(f"cotangent {key} has shape {c.shape}, "
                                 f"want {shape}")
            return c

        h_top = acts[-1][1]
        if self.spec.head_kind == HEAD_DUELING:
            dq = cot("q", (batch, n_act))
            dv = cot("v", (batch,)) + dq.sum(axis=1)
            dadv = cot("adv", (batch, n_act)) + dq - dq.mean(axis=1, keepdims=True)
            grads["wv"] = h_top.T @ dv[:, None]
            grads["bv"] = np.array([dv.sum()])
            grads["wa"] = h_top.T @ dadv
            grads["ba"] = dadv.sum(axis=0)
            dh = dv[:, None] @ self.params["wv"].T + dadv @ self.params["wa"].T
        else:
            dlogits = self.spec.logit_gain * cot("logits", (batch, n_act))
            dq = cot("q", (batch, n_act))
            grads["wp"] = h_top.T @ dlogits
            grads["bp"] = dlogits.sum(axis=0)
            grads["wq"] = h_top.T @ dq
            grads["bq"] = dq.sum(axis=0)
            dh = dlogits @ self.params["wp"].T + dq @ self.params["wq"].T

        for i in reversed(range(len(self.spec.hidden_dims))):
            z, _ = acts[i]
            if masks[i] is not None:
                dh = dh * masks[i]
            dz = dh * (z > 0.0)
            below = x if i == 0 else acts[i - 1][1]
            grads[f"w{i}"] = below.T @ dz
            grads[f"b{i}"] = dz.sum(axis=0)
            dh = dz @ self.params[f"w{i}"].T

        return grads


# ---------------------------------------------------------------------------
# Adam and target-network updates

@dataclass
class AdamState:
    first_moment: dict
    second_moment: dict
    step_count: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: dict, learning_rate: float = 1e-4) -> AdamState:
    return AdamState(first_moment=zeros_like_params(params),
                     second_moment=zeros_like_params(params),
                     learning_rate=learning_rate)


def adam_step(params: dict, state: AdamState, grads: dict) -> None:
    """One Adam update in place. Non-finite gradients reject the whole
    update (state untouched) rather than being clipped."""
    check_finite(grads, "gradients")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name in params:
        g = grads[name]
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[name] -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    check_finite(params)


def soft_update_params(target: dict, online: dict, rate: float) -> None:
    """target <- rate * target + (1 - rate) * online, in place."""
    if set(target) != set(online):
        raise ValueError("parameter sets do not match")
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must be in [0, 1]")
    for name in target:
        if target[name].shape != online[name].shape:
            raise ValueError(f"shape mismatch for {name}")
        target[name] *= rate
        target[name] += (1.0 - rate) * online[name]


# ---------------------------------------------------------------------------
# Checkpoint serialization
#
# Layout: one JSON header line (spec fields, parameter order and shapes,
# optional extra metadata) terminated by '\n', then the raw little-endian
# float64 bytes of each parameter array in header order, row-major.
# Round-trips bit-exactly.

def save_checkpoint(path, spec: NetworkSpec, params: dict, extra: dict | None = None):
    header = {
        "format": "dilute-rl-ckpt-v1",
        "spec": {
            "input_dim": spec.input_dim,
            "n_actions": spec.n_actions,
            "head_kind": spec.head_kind,
            "hidden_dims": list(spec.hidden_dims),
            "dropout_rate": spec.dropout_rate,
            "logit_gain": spec.logit_gain,
        },
        "arrays": [[name, list(shape)] for name, shape in spec.param_shapes()],
        "extra": extra or {},
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for name, _ in spec.param_shapes():
            f.write(np.ascontiguousarray(params[name], dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (spec, params, extra)."""
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode())
        if header.get("format") != "dilute-rl-ckpt-v1":
            raise ValueError(f"not a checkpoint file: {path}")
        s = header["spec"]
        spec = NetworkSpec(input_dim=s["input_dim"], n_actions=s["n_actions"],
                           head_kind=s["head_kind"],
                           hidden_dims=tuple(s["hidden_dims"]),
                           dropout_rate=s["dropout_rate"],
                           logit_gain=s.get("logit_gain", 1.0))
        params = {}
        for name, shape in header["arrays"]:
            n = int(np.prod(shape))
            buf = f.read(n * 8)
            if len(buf) != n * 8:
                raise ValueError("truncated checkpoint file")
            params[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return spec, params, header["extra"]
