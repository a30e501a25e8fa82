"""
Small numpy MLPs with hand-written reverse mode, Adam, and the tanh-squashed
Gaussian used by the policy.

Parameters are ``[W0, b0, W1, b1, ...]`` with ``W`` shaped ``(fan_in, fan_out)``,
all stored as views into one contiguous vector ``net.flat`` so optimizers and
target-network updates touch a single array. Inputs are batched along axis 0. ``forward`` returns the
output and a cache; ``backward`` consumes that cache.
"""
import json
import math
import struct
from pathlib import Path

import numpy as np

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
HEADS = ("linear", "gaussian", "sigmoid")
ACTIVATIONS = ("relu", "tanh")

CHECKPOINT_MAGIC = b"SGNN"
CHECKPOINT_VERSION = 1
_HEAD_CODES = {h: i for i, h in enumerate(HEADS)}
_ACT_CODES = {a: i for i, a in enumerate(ACTIVATIONS)}


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    # exp(-softplus(-x)) stays strictly inside (0, 1) until |x| ~ 745
    return np.exp(-softplus(-x))


class MlpNet:
    """Fully connected network.

    ``head`` selects the output transform:

    * ``linear``   -- raw affine output
    * ``gaussian`` -- output is ``[mean, log_std]`` with log_std clamped to
      ``[LOG_STD_MIN, LOG_STD_MAX]``; the last layer width must be even
    * ``sigmoid``  -- probability in (0, 1); the logits are kept in the cache
    """

    def __init__(self, layer_dims, activation="relu", head="linear", rng=None):
        if head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if len(layer_dims) < 2:
            raise ValueError("need at least input and output widths")
        if head == "gaussian" and layer_dims[-1] % 2:
            raise ValueError("gaussian head needs an even output width")
        self.layer_dims = tuple(int(d) for d in layer_dims)
        self.activation = activation
        self.head = head
        rng = rng if rng is not None else np.random.default_rng(0)
        self._bind(np.empty(sum(a * b + b for a, b in self._shapes())))
        # uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
        for i, (fan_in, fan_out) in enumerate(self._shapes()):
            bound = 1.0 / math.sqrt(fan_in)
            self.params[2 * i][...] = rng.uniform(-bound, bound, (fan_in, fan_out))
            self.params[2 * i + 1][...] = rng.uniform(-bound, bound, fan_out)

    def _shapes(self):
        return list(zip(self.layer_dims[:-1], self.layer_dims[1:]))

    def _views(self, flat):
        views, off = [], 0
        for fan_in, fan_out in self._shapes():
            views.append(flat[off:off + fan_in * fan_out].reshape(fan_in, fan_out))
            off += fan_in * fan_out
            views.append(flat[off:off + fan_out])
            off += fan_out
        return views

    def _bind(self, flat):
        # every entry of self.params is a view into the contiguous vector self.flat
        self.flat = flat
        self.params = self._views(flat)

    @property
    def n_layers(self):
        return len(self.layer_dims) - 1

    def copy(self):
        other = object.__new__(MlpNet)
        other.layer_dims = self.layer_dims
        other.activation = self.activation
        other.head = self.head
        other._bind(self.flat.copy())
        return other

    def load_params(self, other):
        self.flat[...] = other.flat

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.layer_dims[0]:
            raise ValueError(f"expected input width {self.layer_dims[0]}, got {x.shape[1]}")
        acts = [x]
        h = x
        last = self.n_layers - 1
        for i in range(self.n_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < last:
                h = np.maximum(z, 0.0) if self.activation == "relu" else np.tanh(z)
                acts.append(h)
            else:
                h = z
        z = h
        if self.head == "gaussian":
            k = z.shape[1] // 2
            out = np.concatenate([z[:, :k], np.clip(z[:, k:], LOG_STD_MIN, LOG_STD_MAX)], axis=1)
        elif self.head == "sigmoid":
            out = sigmoid(z)
        else:
            out = z
        cache = {"acts": acts, "z": z, "out": out, "squeeze": squeeze}
        return (out[0] if squeeze else out), cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad, wrt_logits=False, param_grads=True):
        """Reverse pass from ``grad`` = dL/d(output).

        With ``wrt_logits`` the gradient is taken to be w.r.t. the pre-head
        values (only meaningful for the sigmoid head, where it avoids dividing
        by saturated probabilities). Returns ``(param_grads, input_grad)``;
        ``param_grads`` is None when not requested.
        """
        if cache is None:
            raise RuntimeError("backward() needs the cache from forward()")
        g = np.asarray(grad, dtype=float)
        if cache["squeeze"]:
            g = g[None, :]
        z = cache["z"]
        if not wrt_logits:
            if self.head == "gaussian":
                k = z.shape[1] // 2
                ls = z[:, k:]
                mask = (ls >= LOG_STD_MIN) & (ls <= LOG_STD_MAX)
                g = np.concatenate([g[:, :k], g[:, k:] * mask], axis=1)
            elif self.head == "sigmoid":
                p = cache["out"]
                g = g * p * (1.0 - p)
        acts = cache["acts"]
        grads = None
        if param_grads:
            grads = GradList(np.empty_like(self.flat), self)
        for i in reversed(range(self.n_layers)):
            W = self.params[2 * i]
            h = acts[i]
            if param_grads:
                np.matmul(h.T, g, out=grads[2 * i])
                np.sum(g, axis=0, out=grads[2 * i + 1])
            g = g @ W.T
            if i > 0:
                if self.activation == "relu":
                    g = g * (h > 0.0)
                else:
                    g = g * (1.0 - h * h)
        if cache["squeeze"]:
            g = g[0]
        return grads, g


class GradList(list):
    """Per-tensor gradients that are views into one flat vector ``.flat``."""

    def __init__(self, flat, net):
        super().__init__(net._views(flat))
        self.flat = flat


class Adam:
    """Bias-corrected Adam over a list of arrays, updated in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._tmp = [np.empty_like(p) for p in params]

    def step(self, grads):
        """Apply one update. ``grads`` matches ``params`` one-to-one; pass
        ``[net.flat]`` / ``[grads.flat]`` to update a whole network at once."""
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient passed to Adam")
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for p, g, m, v, tmp in zip(self.params, grads, self.m, self.v, self._tmp):
            # m = b1 m + (1-b1) g ; v = b2 v + (1-b2) g^2 ; p -= lr mhat / (sqrt(vhat) + eps)
            m *= b1
            np.multiply(g, 1.0 - b1, out=tmp)
            m += tmp
            v *= b2
            np.multiply(g, g, out=tmp)
            tmp *= 1.0 - b2
            v += tmp
            np.multiply(v, 1.0 / c2, out=tmp)
            np.sqrt(tmp, out=tmp)
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= self.lr / c1
            p -= tmp

    def state_arrays(self):
        return self.m + self.v


def adam_step(state, params, grads):
    """Functional spelling of :meth:`Adam.step`; returns ``params``."""
    state.params = params
    state.step(grads)
    return params


def linear_schedule(start, end, progress):
    progress = min(max(progress, 0.0), 1.0)
    return start * (1.0 - progress) + end * progress


# ---------------------------------------------------------------- squashed gaussian

def log1m_tanh_sq(u):
    """``log(1 - tanh(u)^2)`` without cancellation for large |u|."""
    return 2.0 * (math.log(2.0) - u - softplus(-2.0 * u))


def gaussian_head_sample(mean, log_std, rng=None, noise=None, scale=1.0):
    """Reparameterized tanh-Gaussian sample.

    Returns ``(u, action, log_prob, noise)`` where ``u = mean + std * noise``,
    ``action = scale * tanh(u)`` and ``log_prob`` is the density of
    ``tanh(u)`` in the normalized [-1, 1] box, summed over the last axis.
    """
    mean = np.asarray(mean, dtype=float)
    log_std = np.asarray(log_std, dtype=float)
    if noise is None:
        noise = rng.standard_normal(mean.shape)
    std = np.exp(log_std)
    u = mean + std * noise
    a = np.tanh(u)
    logp = (-0.5 * noise ** 2 - log_std - 0.5 * math.log(2.0 * math.pi)
            - log1m_tanh_sq(u)).sum(axis=-1)
    return u, scale * a, logp, noise


def gaussian_head_backward(mean, log_std, noise, grad_action, grad_logp):
    """Pathwise gradients of a loss through :func:`gaussian_head_sample`.

    ``grad_action`` is dL/d tanh(u) in normalized units and ``grad_logp`` is
    dL/d log_prob (broadcast over action dims). Returns dL/dmean, dL/dlog_std.
    """
    std = np.exp(log_std)
    u = mean + std * noise
    a = np.tanh(u)
    gl = np.asarray(grad_logp, dtype=float)
    if gl.ndim == mean.ndim - 1:
        gl = gl[..., None]
    g_u = grad_action * (1.0 - a * a) + gl * 2.0 * a
    return g_u, g_u * std * noise - gl


# ---------------------------------------------------------------- checkpoints

def save_net(net, path):
    """Write ``<path>`` (binary parameters) and ``<path>.json`` (architecture).

    Binary layout, little-endian: magic ``SGNN``; uint32 version; uint32 head
    code; uint32 activation code; uint32 number of widths n; n x uint32
    widths; then each ``W`` (row-major) and ``b`` as float64, layer by layer.
    """
    path = Path(path)
    header = struct.pack("<4sIIII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                         _HEAD_CODES[net.head], _ACT_CODES[net.activation], len(net.layer_dims))
    header += struct.pack(f"<{len(net.layer_dims)}I", *net.layer_dims)
    body = np.ascontiguousarray(net.flat, dtype="<f8").tobytes()
    path.write_bytes(header + body)
    meta = {"layer_dims": list(net.layer_dims), "activation": net.activation,
            "head": net.head, "format": "SGNN", "version": CHECKPOINT_VERSION,
            "n_params": int(sum(p.size for p in net.params))}
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2) + "\n")


def load_net(path):
    data = Path(path).read_bytes()
    magic, version, head, act, n = struct.unpack_from("<4sIIII", data, 0)
    if magic != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a network checkpoint")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    off = struct.calcsize("<4sIIII")
    dims = struct.unpack_from(f"<{n}I", data, off)
    off += 4 * n
    net = MlpNet(dims, ACTIVATIONS[act], HEADS[head])
    count = net.flat.size
    if len(data) - off != 8 * count:
        raise ValueError(f"{path}: expected {count} parameters, found {(len(data) - off) / 8}")
    net.flat[...] = np.frombuffer(data, dtype="<f8", count=count, offset=off)
    return net
