"""Minimal feed-forward network stack with reverse-mode gradients.

Everything is float64 numpy: a tanh MLP with manual backprop, a diagonal
Gaussian policy head with state-independent log-std, a scalar value network,
and a bias-corrected Adam optimizer. Batched inputs are shape (B, dim).
"""

from __future__ import annotations

import io
import json

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = float(np.log(2.0 * np.pi))


def orthogonal_init(rng: np.random.Generator, n_in: int, n_out: int, gain: float):
    """Orthogonal weight matrix scaled by `gain`."""
    a = rng.standard_normal((n_in, n_out))
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    w = u if u.shape == (n_in, n_out) else vt
    return gain * w


class MLP:
    """Fully-connected net with tanh hidden activations and a linear head.

    forward() caches activations; backward() accumulates parameter gradients
    (call zero_grad() between updates) and returns the gradient w.r.t. the
    input batch.
    """

    def __init__(self, sizes, rng=None, head_gain=1.0):
        self.sizes = list(sizes)
        rng = rng or np.random.default_rng(0)
        self.weights = []
        self.biases = []
        n_layers = len(self.sizes) - 1
        for li in range(n_layers):
            gain = head_gain if li == n_layers - 1 else np.sqrt(2.0)
            self.weights.append(
                orthogonal_init(rng, self.sizes[li], self.sizes[li + 1], gain)
            )
            self.biases.append(np.zeros(self.sizes[li + 1]))
        self.w_grads = [np.zeros_like(w) for w in self.weights]
        self.b_grads = [np.zeros_like(b) for b in self.biases]
        self._cache = None

    def parameters(self):
        return self.weights + self.biases

    def gradients(self):
        return self.w_grads + self.b_grads

    def zero_grad(self):
        for g in self.w_grads + self.b_grads:
            g[...] = 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"expected input dim {self.sizes[0]}, got {x.shape[1]}")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if li != last:
                h = np.tanh(h)
            acts.append(h)
        self._cache = acts
        return h

    def backward(self, upstream: np.ndarray) -> np.ndarray:
        """Accumulate gradients given dL/d(output); returns dL/d(input)."""
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        acts = self._cache
        delta = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
        for li in range(len(self.weights) - 1, -1, -1):
            if li != len(self.weights) - 1:
                delta = delta * (1.0 - acts[li + 1] ** 2)  # tanh'
            self.w_grads[li] += acts[li].T @ delta
            self.b_grads[li] += delta.sum(axis=0)
            delta = delta @ self.weights[li].T
        return delta


class GaussianPolicy:
    """Diagonal Gaussian policy: tanh trunk mean head + learnable log-std.

    Actions are sampled from the unbounded Gaussian and clamped into
    [-1, 1]; log-densities are evaluated at the pre-clamp sample.
    """

    def __init__(self, obs_dim=27, act_dim=6, hidden=(64, 64), rng=None):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.trunk = MLP([obs_dim, *hidden, act_dim], rng=rng, head_gain=0.01)
        self.log_std = np.full(act_dim, -0.5)
        self.log_std_grad = np.zeros(act_dim)

    def parameters(self):
        return self.trunk.parameters() + [self.log_std]

    def gradients(self):
        return self.trunk.gradients() + [self.log_std_grad]

    def zero_grad(self):
        self.trunk.zero_grad()
        self.log_std_grad[...] = 0.0

    def clamp_log_std(self):
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        return np.clip(self.trunk.forward(obs), -1.0, 1.0)

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        """Returns (clamped actions, raw pre-clamp samples, log-probs)."""
        mean = self.trunk.forward(obs)
        std = np.exp(self.log_std)
        raw = mean + std * rng.standard_normal(mean.shape)
        logp = self._log_prob(mean, raw)
        return np.clip(raw, -1.0, 1.0), raw, logp

    def _log_prob(self, mean, action):
        z = (action - mean) / np.exp(self.log_std)
        return -0.5 * np.sum(z * z, axis=-1) - np.sum(self.log_std) \
            - 0.5 * self.act_dim * LOG_2PI

    def log_prob(self, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
        mean = self.trunk.forward(obs)
        return self._log_prob(mean, np.atleast_2d(action))

    def log_prob_grads(self, mean, action):
        """d logp / d mean and d logp / d log_std, elementwise per sample."""
        var = np.exp(2.0 * self.log_std)
        diff = action - mean
        d_mean = diff / var
        d_log_std = diff * diff / var - 1.0
        return d_mean, d_log_std

    def entropy(self) -> float:
        return float(np.sum(self.log_std) + 0.5 * self.act_dim * (1.0 + LOG_2PI))


class ValueNet:
    """Scalar critic with the same trunk architecture as the policy."""

    def __init__(self, obs_dim=27, hidden=(64, 64), rng=None):
        self.net = MLP([obs_dim, *hidden, 1], rng=rng, head_gain=1.0)

    def forward(self, obs: np.ndarray) -> np.ndarray:
        return self.net.forward(obs)[:, 0]

    def backward(self, upstream: np.ndarray):
        self.net.backward(np.asarray(upstream)[:, None])

    def parameters(self):
        return self.net.parameters()

    def gradients(self):
        return self.net.gradients()

    def zero_grad(self):
        self.net.zero_grad()


class Adam:
    """Bias-corrected Adam over a fixed list of parameter arrays (in-place)."""

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads):
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ValueError("gradient shape mismatch")
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def clip_grad_norm(grads, max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most max_norm."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


CHECKPOINT_VERSION = 1


def save_checkpoint(path, policy: GaussianPolicy, value_net: ValueNet, meta: dict):
    """Write policy + critic parameters and metadata; float64 bit-exact."""
    arrays = {"log_std": policy.log_std}
    for i, w in enumerate(policy.trunk.weights):
        arrays[f"policy_w{i}"] = w
    for i, b in enumerate(policy.trunk.biases):
        arrays[f"policy_b{i}"] = b
    for i, w in enumerate(value_net.net.weights):
        arrays[f"value_w{i}"] = w
    for i, b in enumerate(value_net.net.biases):
        arrays[f"value_b{i}"] = b
    meta = dict(meta)
    meta["version"] = CHECKPOINT_VERSION
    meta["policy_sizes"] = policy.trunk.sizes
    meta["value_sizes"] = value_net.net.sizes
    arrays["meta_json"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8
    )
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path):
    """Returns (policy, value_net, meta)."""
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta_json"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version: {meta.get('version')}")
        psizes = meta["policy_sizes"]
        vsizes = meta["value_sizes"]
        policy = GaussianPolicy(psizes[0], psizes[-1], tuple(psizes[1:-1]))
        value_net = ValueNet(vsizes[0], tuple(vsizes[1:-1]))
        policy.log_std = z["log_std"].copy()
        policy.log_std_grad = np.zeros_like(policy.log_std)
        for i in range(len(policy.trunk.weights)):
            policy.trunk.weights[i] = z[f"policy_w{i}"].copy()
            policy.trunk.biases[i] = z[f"policy_b{i}"].copy()
        for i in range(len(value_net.net.weights)):
            value_net.net.weights[i] = z[f"value_w{i}"].copy()
            value_net.net.biases[i] = z[f"value_b{i}"].copy()
    return policy, value_net, meta


def gradient_check(n_nets=20, seed=0, h=1e-5, sizes=(27, 64, 64, 6)):
    """Analytic backprop vs central finite differences on random nets.

    The loss is the dot product of the output batch with a fixed random
    direction. Returns (max relative error, per-net list, per-layer dict of
    max errors keyed "W0"/"b0"/...).
    """
    rng = np.random.default_rng(seed)
    per_net = []
    n_layers = len(sizes) - 1
    per_layer = {f"{kind}{i}": 0.0 for i in range(n_layers) for kind in ("W", "b")}
    for _ in range(n_nets):
        net = MLP(list(sizes), rng=rng)
        x = rng.standard_normal((4, sizes[0]))
        direction = rng.standard_normal((4, sizes[-1]))

        def loss():
            return float(np.sum(net.forward(x) * direction))

        net.zero_grad()
        net.forward(x)
        net.backward(direction)
        names = [f"W{i}" for i in range(n_layers)] + [f"b{i}" for i in range(n_layers)]
        worst = 0.0
        for name, p, g in zip(names, net.parameters(), net.gradients()):
            flat_p = p.ravel()
            flat_g = g.ravel()
            idx = rng.choice(flat_p.size, size=min(20, flat_p.size), replace=False)
            for j in idx:
                orig = flat_p[j]
                flat_p[j] = orig + h
                f_plus = loss()
                flat_p[j] = orig - h
                f_minus = loss()
                flat_p[j] = orig
                fd = (f_plus - f_minus) / (2.0 * h)
                denom = max(abs(fd), abs(flat_g[j]), 1e-8)
                err = abs(fd - flat_g[j]) / denom
                worst = max(worst, err)
                per_layer[name] = max(per_layer[name], err)
        per_net.append(worst)
    return max(per_net), per_net, per_layer
