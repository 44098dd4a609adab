"""Hand-rolled differentiable kernels: linear maps, activations, a gated
recurrent cell, a per-neighbor scoring MLP, a 2-layer classifier, softmax
cross-entropy, an adaptive-moment optimizer, and a finite-difference
gradient checker.

Everything is float64. Each cell exposes forward(...) -> (out, cache) and
backward(cache, d_out) -> input gradients; parameter gradients accumulate
into the owning ParamGroup (they are never overwritten). A cache is tied to
the parameter version it was computed under; advancing the parameters via
adam_step invalidates outstanding caches.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError, NumericError, RangeError


def glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Uniform init in +-sqrt(6/(fan_in+fan_out)); biases should use zeros."""
    if len(shape) == 1:
        fan_in, fan_out = shape[0], 1
    else:
        fan_out, fan_in = shape[0], int(np.prod(shape[1:]))
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class ParamGroup:
    """Named float64 parameter arrays with parallel gradient accumulators
    and per-parameter optimizer moments.

    ``version`` counts optimizer steps; forward caches record the version
    they saw so a backward pass against moved parameters can be rejected.
    """

    def __init__(self, name: str, params: dict[str, np.ndarray]):
        self.name = name
        self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.adam_t = 0
        self.version = 0

    def zero_grads(self):
        for g in self.grads.values():
            g.fill(0.0)

    def num_values(self) -> int:
        return sum(p.size for p in self.params.values())

    def state_copy(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        if set(state) != set(self.params):
            raise DimensionError(
                f"param group {self.name}: state names {sorted(state)} "
                f"do not match {sorted(self.params)}"
            )
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise DimensionError(
                    f"param {self.name}.{k}: shape {v.shape} != {self.params[k].shape}"
                )
            self.params[k][...] = v
        self.version += 1

    def sq_norm(self) -> float:
        return float(sum(np.sum(p * p) for p in self.params.values()))


def adam_step(group: ParamGroup, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """One adaptive-moment update from the accumulated gradients, which are
    then zeroed. Raises NumericError (leaving gradients zeroed) on non-finite
    gradient input."""
    for k, g in group.grads.items():
        if not np.all(np.isfinite(g)):
            group.zero_grads()
            raise NumericError(f"non-finite gradient in {group.name}.{k}")
    group.adam_t += 1
    t = group.adam_t
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for k, p in group.params.items():
        g = group.grads[k]
        m = group.adam_m[k]
        v = group.adam_v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    group.zero_grads()
    group.version += 1


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Overflow-safe logistic; exp only ever sees non-positive arguments."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_grad(y: np.ndarray) -> np.ndarray:
    """Derivative in terms of the forward output y = sigmoid(x)."""
    return y * (1.0 - y)


def tanh_grad(y: np.ndarray) -> np.ndarray:
    """Derivative in terms of the forward output y = tanh(x)."""
    return 1.0 - y * y


def linear_forward(w: np.ndarray, b: np.ndarray, x: np.ndarray):
    if w.shape[1] != x.shape[-1]:
        raise DimensionError(f"linear: weight {w.shape} vs input {x.shape}")
    return x @ w.T + b, x


def linear_backward(w: np.ndarray, cache_x: np.ndarray, dy: np.ndarray):
    """Returns (dx, dw, db); the caller owns accumulation."""
    if dy.ndim == 1:
        dw = dy[:, None] * cache_x
        db = dy.copy()
    else:
        dw = dy.T @ cache_x
        db = dy.sum(axis=0)
    return dy @ w, dw, db


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_cross_entropy(logits: np.ndarray, label: int):
    """Return (loss, dL/dlogits) for -log softmax(logits)[label], computed
    with max-subtraction."""
    k = logits.shape[0]
    if not 0 <= label < k:
        raise RangeError(f"label {label} out of range for {k} classes")
    z = logits - logits.max()
    lse = np.log(np.sum(np.exp(z)))
    loss = float(lse - z[label])
    grad = np.exp(z - lse)
    grad[label] -= 1.0
    return loss, grad


class GruCell:
    """Gated recurrent cell folding [node attr || neighbor aggregate] into
    the walk history vector.

    update gate   z = sigmoid(w_update x + u_update h + b_update)
    reset gate    r = sigmoid(w_reset x + u_reset h + b_reset)
    candidate     hbar = tanh(w_cand x + r * (u_cand h) + b_cand)
    new history   h' = z * hbar + (1 - z) * h
    """

    PARAM_NAMES = (
        "w_update", "u_update", "b_update",
        "w_reset", "u_reset", "b_reset",
        "w_cand", "u_cand", "b_cand",
    )

    def __init__(self, group: ParamGroup):
        self.g = group

    @staticmethod
    def init_params(input_dim: int, hidden_dim: int,
                    rng: np.random.Generator, name: str = "core") -> ParamGroup:
        p = {}
        for gate in ("update", "reset", "cand"):
            p[f"w_{gate}"] = glorot(rng, (hidden_dim, input_dim))
            p[f"u_{gate}"] = glorot(rng, (hidden_dim, hidden_dim))
            p[f"b_{gate}"] = np.zeros(hidden_dim)
        return ParamGroup(name, p)

    @property
    def hidden_dim(self) -> int:
        return self.g.params["u_update"].shape[0]

    @property
    def input_dim(self) -> int:
        return self.g.params["w_update"].shape[1]

    def forward(self, x: np.ndarray, h_prev: np.ndarray):
        if x.shape != (self.input_dim,) or h_prev.shape != (self.hidden_dim,):
            raise DimensionError(
                f"gru: x {x.shape} h {h_prev.shape}, expected "
                f"({self.input_dim},) ({self.hidden_dim},)"
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(h_prev))):
            raise NumericError("non-finite input to gru cell")
        p = self.g.params
        z = sigmoid(p["w_update"] @ x + p["u_update"] @ h_prev + p["b_update"])
        r = sigmoid(p["w_reset"] @ x + p["u_reset"] @ h_prev + p["b_reset"])
        uh = p["u_cand"] @ h_prev
        hbar = np.tanh(p["w_cand"] @ x + r * uh + p["b_cand"])
        h = z * hbar + (1.0 - z) * h_prev
        cache = (x, h_prev, z, r, uh, hbar, self.g.version)
        return h, cache

    def backward(self, cache, dh: np.ndarray):
        """Accumulate parameter gradients; return (dx, dh_prev)."""
        x, h_prev, z, r, uh, hbar, version = cache
        if version != self.g.version:
            raise ContractError(
                f"gru cache from parameter version {version}, "
                f"group now at {self.g.version}"
            )
        p, g = self.g.params, self.g.grads
        dz = dh * (hbar - h_prev)
        dhbar = dh * z
        dh_prev = dh * (1.0 - z)

        da_c = dhbar * tanh_grad(hbar)
        g["w_cand"] += da_c[:, None] * x
        g["b_cand"] += da_c
        dx = p["w_cand"].T @ da_c
        dr = da_c * uh
        duh = da_c * r
        g["u_cand"] += duh[:, None] * h_prev
        dh_prev = dh_prev + p["u_cand"].T @ duh

        da_z = dz * sigmoid_grad(z)
        g["w_update"] += da_z[:, None] * x
        g["u_update"] += da_z[:, None] * h_prev
        g["b_update"] += da_z
        dx += p["w_update"].T @ da_z
        dh_prev += p["u_update"].T @ da_z

        da_r = dr * sigmoid_grad(r)
        g["w_reset"] += da_r[:, None] * x
        g["u_reset"] += da_r[:, None] * h_prev
        g["b_reset"] += da_r
        dx += p["w_reset"].T @ da_r
        dh_prev += p["u_reset"].T @ da_r
        return dx, dh_prev


class ScoreNet:
    """Per-neighbor relevance scorer: one tanh hidden layer of the walk
    hidden width, scalar sigmoid output in (0, 1). Applied to a whole
    neighborhood at once as a (K, in_dim) matrix."""

    PARAM_NAMES = ("w_hidden", "b_hidden", "w_out", "b_out")

    def __init__(self, group: ParamGroup):
        self.g = group

    @staticmethod
    def init_params(input_dim: int, hidden_dim: int,
                    rng: np.random.Generator, name: str = "policy") -> ParamGroup:
        return ParamGroup(name, {
            "w_hidden": glorot(rng, (hidden_dim, input_dim)),
            "b_hidden": np.zeros(hidden_dim),
            "w_out": glorot(rng, (hidden_dim,)),
            "b_out": np.zeros(1),
        })

    @property
    def input_dim(self) -> int:
        return self.g.params["w_hidden"].shape[1]

    def forward(self, inputs: np.ndarray):
        """inputs: (K, input_dim) rows of [h_prev || x_v || x_e || x_nbr].
        Returns (phi: (K,) scores in (0,1), cache)."""
        if inputs.ndim != 2 or inputs.shape[1] != self.input_dim:
            raise DimensionError(
                f"score net: inputs {inputs.shape}, expected (K, {self.input_dim})"
            )
        p = self.g.params
        hid = np.tanh(inputs @ p["w_hidden"].T + p["b_hidden"])
        phi = sigmoid(hid @ p["w_out"] + p["b_out"][0])
        cache = (inputs, hid, phi, self.g.version)
        return phi, cache

    def backward(self, cache, dphi: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; return d inputs (K, input_dim)."""
        inputs, hid, phi, version = cache
        if version != self.g.version:
            raise ContractError(
                f"score cache from parameter version {version}, "
                f"group now at {self.g.version}"
            )
        p, g = self.g.params, self.g.grads
        da2 = dphi * sigmoid_grad(phi)
        g["w_out"] += hid.T @ da2
        g["b_out"] += da2.sum()
        dhid = da2[:, None] * p["w_out"]
        da1 = dhid * tanh_grad(hid)
        g["w_hidden"] += da1.T @ inputs
        g["b_hidden"] += da1.sum(axis=0)
        return da1 @ p["w_hidden"]


class Classifier:
    """2-layer head mapping the final history vector to class logits:
    tanh hidden layer of the same width, then a linear output layer."""

    PARAM_NAMES = ("w_hidden", "b_hidden", "w_out", "b_out")

    def __init__(self, group: ParamGroup):
        self.g = group

    @staticmethod
    def init_params(hidden_dim: int, num_classes: int,
                    rng: np.random.Generator, name: str = "classifier") -> ParamGroup:
        return ParamGroup(name, {
            "w_hidden": glorot(rng, (hidden_dim, hidden_dim)),
            "b_hidden": np.zeros(hidden_dim),
            "w_out": glorot(rng, (num_classes, hidden_dim)),
            "b_out": np.zeros(num_classes),
        })

    @property
    def num_classes(self) -> int:
        return self.g.params["w_out"].shape[0]

    def forward(self, h: np.ndarray):
        p = self.g.params
        if h.shape != (p["w_hidden"].shape[1],):
            raise DimensionError(f"classifier: h {h.shape}")
        hid = np.tanh(p["w_hidden"] @ h + p["b_hidden"])
        logits = p["w_out"] @ hid + p["b_out"]
        cache = (h, hid, self.g.version)
        return logits, cache

    def backward(self, cache, dlogits: np.ndarray) -> np.ndarray:
        h, hid, version = cache
        if version != self.g.version:
            raise ContractError(
                f"classifier cache from parameter version {version}, "
                f"group now at {self.g.version}"
            )
        p, g = self.g.params, self.g.grads
        g["w_out"] += dlogits[:, None] * hid
        g["b_out"] += dlogits
        dhid = p["w_out"].T @ dlogits
        da1 = dhid * tanh_grad(hid)
        g["w_hidden"] += da1[:, None] * h
        g["b_hidden"] += da1
        return p["w_hidden"].T @ da1


def grad_check(fn, groups, eps: float = 1e-5, max_coords: int = 1000,
               seed: int = 0) -> float:
    """Compare analytic gradients against central finite differences.

    ``fn()`` must recompute the scalar loss from the groups' current
    parameter values and accumulate fresh gradients into them. Checks every
    coordinate, or a seeded random subset of max_coords per parameter when
    larger. Returns the max relative error, where each coordinate's error is
    |analytic - numeric| normalized by max(|analytic|, |numeric|, floor) with
    floor = 1e-3 * max(1, max|analytic| over that parameter) so exact-zero
    coordinates compare on an absolute scale instead of 0/0.
    """
    if isinstance(groups, ParamGroup):
        groups = [groups]
    for g in groups:
        g.zero_grads()
    fn()
    analytic = {(g.name, k): g.grads[k].copy() for g in groups for k in g.grads}

    def loss_only():
        for g in groups:
            g.zero_grads()
        return float(fn())

    rng = np.random.default_rng(seed)
    worst = 0.0
    for g in groups:
        for k, p in g.params.items():
            a = analytic[(g.name, k)].ravel()
            flat = p.ravel()
            n_coords = flat.size
            idx = (np.arange(n_coords) if n_coords <= max_coords
                   else rng.choice(n_coords, size=max_coords, replace=False))
            floor = 1e-3 * max(1.0, float(np.abs(a).max(initial=0.0)))
            for i in idx:
                orig = flat[i]
                flat[i] = orig + eps
                lp = loss_only()
                flat[i] = orig - eps
                lm = loss_only()
                flat[i] = orig
                numeric = (lp - lm) / (2.0 * eps)
                denom = max(abs(a[i]), abs(numeric), floor)
                worst = max(worst, abs(a[i] - numeric) / denom)
    # leave the groups in a clean state
    for g in groups:
        g.zero_grads()
    return worst
