"""Small dense/conv network toolkit with hand-written backward passes.

Everything is plain numpy.  Layers cache what their backward pass needs
on forward and accumulate parameter gradients into .d* buffers, so a
shared submodule (e.g. one encoder feeding two heads) just gets
backward() called once with the summed upstream gradient, or twice with
the parts.  Call zero_grad() before each new loss evaluation.
"""

import math

import numpy as np


class Linear:
    """y = x @ W + b with He-scaled normal init."""

    def __init__(self, n_in, n_out, rng, scale=None, dtype=np.float32):
        s = math.sqrt(2.0 / n_in) if scale is None else scale
        self.W = rng.normal(0.0, s, (n_in, n_out)).astype(dtype)
        self.b = np.zeros(n_out, dtype=dtype)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x):
        self._x = x
        return x @ self.W + self.b

    def backward(self, dy):
        self.dW += self._x.T @ dy
        self.db += dy.sum(axis=0)
        return dy @ self.W.T

    def params(self):
        return {"W": self.W, "b": self.b}

    def grads(self):
        return {"W": self.dW, "b": self.db}


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask

    def params(self):
        return {}

    def grads(self):
        return {}


def _im2col(x, k, stride):
    # x: (B, C, H, W) -> (B, Ho, Wo, C*k*k); windows laid out (C, ki, kj)
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride]  # (B, C, Ho, Wo, k, k)
    b, c, ho, wo = windows.shape[:4]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho, wo, c * k * k)
    return np.ascontiguousarray(cols), ho, wo


class Conv2d:
    """Strided valid convolution (no padding), NCHW layout."""

    def __init__(self, c_in, c_out, kernel, stride, rng, dtype=np.float32):
        self.c_in = c_in
        self.c_out = c_out
        self.kernel = kernel
        self.stride = stride
        fan_in = c_in * kernel * kernel
        # weights stored flat (C*k*k, c_out) so forward is one matmul
        self.W = rng.normal(0.0, math.sqrt(2.0 / fan_in), (fan_in, c_out)).astype(dtype)
        self.b = np.zeros(c_out, dtype=dtype)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._cols = None
        self._x_shape = None

    @staticmethod
    def out_size(size, kernel, stride):
        if size < kernel:
            raise ValueError(f"input {size} smaller than kernel {kernel}")
        return (size - kernel) // stride + 1

    def forward(self, x):
        b = x.shape[0]
        cols, ho, wo = _im2col(x, self.kernel, self.stride)
        self._cols = cols
        self._x_shape = x.shape
        y = cols.reshape(b * ho * wo, -1) @ self.W + self.b
        return y.reshape(b, ho, wo, self.c_out).transpose(0, 3, 1, 2)

    def backward(self, dy):
        b, _, ho, wo = dy.shape
        dyr = dy.transpose(0, 2, 3, 1).reshape(b * ho * wo, self.c_out)
        cols_flat = self._cols.reshape(b * ho * wo, -1)
        self.dW += cols_flat.T @ dyr
        self.db += dyr.sum(axis=0)
        dcols = (dyr @ self.W.T).reshape(b, ho, wo, self.c_in, self.kernel, self.kernel)
        dx = np.zeros(self._x_shape, dtype=dy.dtype)
        s, k = self.stride, self.kernel
        for ki in range(k):
            for kj in range(k):
                dx[:, :, ki:ki + s * ho:s, kj:kj + s * wo:s] += (
                    dcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
                )
        return dx

    def params(self):
        return {"W": self.W, "b": self.b}

    def grads(self):
        return {"W": self.dW, "b": self.db}


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.params().items():
                out[f"{i}.{k}"] = v
        return out

    def grads(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.grads().items():
                out[f"{i}.{k}"] = v
        return out


def mlp(sizes, rng, dtype=np.float32):
    """ReLU MLP, linear final layer.  sizes = (in, hidden..., out)."""
    layers = []
    for i in range(len(sizes) - 1):
        last = i == len(sizes) - 2
        scale = None if not last else math.sqrt(1.0 / sizes[i])
        layers.append(Linear(sizes[i], sizes[i + 1], rng, scale=scale, dtype=dtype))
        if not last:
            layers.append(ReLU())
    return Sequential(layers)


def zero_grads(grads):
    for g in grads.values():
        g[...] = 0.0


def masked_log_softmax(logits, valid):
    """Row-wise log-softmax over the slots where valid is True.

    Invalid slots come back as -inf log-probability (probability 0).
    Rows with no valid slot at all return all -inf; callers must not
    sample from such a row.
    """
    neg = np.float64(-np.inf)
    z = np.where(valid, logits.astype(np.float64), neg)
    zmax = np.max(z, axis=-1, keepdims=True)
    zmax = np.where(np.isfinite(zmax), zmax, 0.0)  # all-invalid row guard
    shifted = z - zmax
    expz = np.where(valid, np.exp(shifted), 0.0)
    total = expz.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = shifted - np.log(total)
    return np.where(valid, logp, neg)


def masked_softmax(logits, valid):
    logp = masked_log_softmax(logits, valid)
    p = np.where(valid, np.exp(logp), 0.0)
    return p


class Adam:
    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.params.items()}

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
