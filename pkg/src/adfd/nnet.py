"""Small feed-forward networks with hand-written backpropagation.

Two architectures are provided:

  cnn-baseline   three {conv 3x3 -> relu -> avgpool 2x2 -> dropout 0.2}
                 stages with 32/64/128 channels, then flatten,
                 dense 256 -> relu -> dropout 0.2, dense 2, softmax
  mlp-head:<d>   dense 128 -> relu, dense 2, softmax on d-dim vectors

Image tensors are float arrays of shape (batch, height, width, channels).
All gradients are exact; there is no autodiff anywhere. Training mode is
selected by passing a numpy Generator for the dropout masks; passing
None runs in eval mode with dropout disabled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, UnknownArchError

CNN_BASELINE = "cnn-baseline"
MLP_HEAD_PREFIX = "mlp-head:"
CNN_INPUT_SHAPE = (64, 64, 3)
DROPOUT_RATE = 0.2
N_CLASSES = 2


def _he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv3x3:
    """3x3 convolution, stride 1, same zero padding. kernel is
    (3, 3, c_in, c_out), bias is (c_out,)."""

    def __init__(self, name: str, kernel: np.ndarray, bias: np.ndarray):
        self.name = name
        self.kernel = kernel
        self.bias = bias

    @classmethod
    def initialized(cls, name, c_in, c_out, rng, dtype):
        kernel = _he_uniform(rng, (3, 3, c_in, c_out), fan_in=9 * c_in, dtype=dtype)
        return cls(name, kernel, np.zeros(c_out, dtype=dtype))

    def param_names(self):
        return [f"{self.name}.kernel", f"{self.name}.bias"]

    def param_arrays(self):
        return [self.kernel, self.bias]

    @staticmethod
    def _im2col(x):
        # rows ordered (di, dj, c_in) to match kernel.reshape(9*c_in, c_out)
        b, h, w, c_in = x.shape
        if b * h * w * 9 * c_in < 100_000:
            # slice-fill wins on small inputs where view bookkeeping dominates
            xp = np.zeros((b, h + 2, w + 2, c_in), dtype=x.dtype)
            xp[:, 1:-1, 1:-1, :] = x
            cols = np.empty((b, h, w, 9 * c_in), dtype=x.dtype)
            for di in range(3):
                for dj in range(3):
                    k = (di * 3 + dj) * c_in
                    cols[..., k:k + c_in] = xp[:, di:di + h, dj:dj + w, :]
            return cols.reshape(b * h * w, 9 * c_in)
        padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
        win = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(1, 2))
        return np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(b * h * w, 9 * c_in)

    def forward(self, x, rng=None):
        if x.ndim != 4 or x.shape[3] != self.kernel.shape[2]:
            raise ShapeMismatchError(
                f"{self.name}: expected (B,H,W,{self.kernel.shape[2]}), got {x.shape}")
        b, h, w, c_in = x.shape
        c_out = self.kernel.shape[3]
        cols = self._im2col(x)
        y = cols @ self.kernel.reshape(9 * c_in, c_out) + self.bias
        return y.reshape(b, h, w, c_out), (cols, x.shape)

    def backward(self, dy, cache):
        cols, x_shape = cache
        b, h, w, c_in = x_shape
        c_out = self.kernel.shape[3]
        dy2 = dy.reshape(b * h * w, c_out)
        dkernel = (cols.T @ dy2).reshape(3, 3, c_in, c_out)
        dbias = dy2.sum(axis=0)
        dcols = (dy2 @ self.kernel.reshape(9 * c_in, c_out).T)
        dcols = dcols.reshape(b, h, w, 3, 3, c_in)
        dpadded = np.zeros((b, h + 2, w + 2, c_in), dtype=dy.dtype)
        for di in range(3):
            for dj in range(3):
                dpadded[:, di:di + h, dj:dj + w, :] += dcols[:, :, :, di, dj, :]
        return dpadded[:, 1:-1, 1:-1, :], [dkernel, dbias]


class Dense:
    """Affine layer: y = x @ weight + bias."""

    def __init__(self, name: str, weight: np.ndarray, bias: np.ndarray):
        self.name = name
        self.weight = weight
        self.bias = bias

    @classmethod
    def initialized(cls, name, d_in, d_out, rng, dtype):
        weight = _he_uniform(rng, (d_in, d_out), fan_in=d_in, dtype=dtype)
        return cls(name, weight, np.zeros(d_out, dtype=dtype))

    def param_names(self):
        return [f"{self.name}.weight", f"{self.name}.bias"]

    def param_arrays(self):
        return [self.weight, self.bias]

    def forward(self, x, rng=None):
        if x.ndim != 2 or x.shape[1] != self.weight.shape[0]:
            raise ShapeMismatchError(
                f"{self.name}: expected (B,{self.weight.shape[0]}), got {x.shape}")
        return x @ self.weight + self.bias, x

    def backward(self, dy, cache):
        x = cache
        return dy @ self.weight.T, [x.T @ dy, dy.sum(axis=0)]


class ReLU:
    name = "relu"

    def param_names(self):
        return []

    def param_arrays(self):
        return []

    def forward(self, x, rng=None):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, cache):
        return dy * cache, []


class AvgPool2x2:
    """2x2 average pooling with stride 2; spatial dims must be even."""

    name = "avgpool"

    def param_names(self):
        return []

    def param_arrays(self):
        return []

    def forward(self, x, rng=None):
        b, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ShapeMismatchError(f"avgpool needs even spatial dims, got {x.shape}")
        y = x.reshape(b, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))
        return y, None

    def backward(self, dy, cache):
        dx = np.repeat(np.repeat(dy, 2, axis=1), 2, axis=2) / 4.0
        return dx, []


class Dropout:
    """Inverted dropout. Active only when a Generator is passed to
    forward; the mask is kept for the matching backward pass."""

    name = "dropout"

    def __init__(self, rate: float = DROPOUT_RATE):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def param_names(self):
        return []

    def param_arrays(self):
        return []

    def forward(self, x, rng=None):
        if rng is None:
            return x, None
        keep = (rng.random(x.shape) >= self.rate).astype(x.dtype)
        mask = keep / (1.0 - self.rate)
        return x * mask, mask

    def backward(self, dy, cache):
        if cache is None:
            return dy, []
        return dy * cache, []


class Flatten:
    name = "flatten"

    def param_names(self):
        return []

    def param_arrays(self):
        return []

    def forward(self, x, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), []


class Softmax:
    """Row-wise softmax with max subtraction for stability."""

    name = "softmax"

    def param_names(self):
        return []

    def param_arrays(self):
        return []

    def forward(self, x, rng=None):
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        return p, p

    def backward(self, dy, cache):
        p = cache
        return p * (dy - (dy * p).sum(axis=1, keepdims=True)), []


class Network:
    """An ordered layer stack with named parameters."""

    def __init__(self, arch_id: str, seed: int, layers: list, input_shape: tuple,
                 dtype=np.float32):
        self.arch_id = arch_id
        self.seed = seed
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.dtype = dtype

    def param_names(self) -> list[str]:
        return [n for layer in self.layers for n in layer.param_names()]

    def param_arrays(self) -> list[np.ndarray]:
        return [a for layer in self.layers for a in layer.param_arrays()]

    def params(self) -> list[tuple[str, np.ndarray]]:
        return list(zip(self.param_names(), self.param_arrays()))

    def num_params(self) -> int:
        return sum(a.size for a in self.param_arrays())

    def set_params(self, named: list[tuple[str, np.ndarray]]) -> None:
        """Overwrite parameters in order; names and shapes must match."""
        from .errors import ArchMismatchError

        current = self.params()
        if len(named) != len(current):
            raise ArchMismatchError(
                f"{self.arch_id}: expected {len(current)} parameter tensors, got {len(named)}")
        for (want_name, have), (got_name, arr) in zip(current, named):
            if want_name != got_name or have.shape != tuple(arr.shape):
                raise ArchMismatchError(
                    f"{self.arch_id}: parameter {got_name} {tuple(arr.shape)} does not match "
                    f"{want_name} {have.shape}")
            have[...] = arr.astype(have.dtype)

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatchError(
                f"{self.arch_id}: expected input (B, {', '.join(map(str, self.input_shape))}), "
                f"got {x.shape}")
        return x

    def _forward_cached(self, x, rng):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x, rng)
            caches.append(cache)
        return x, caches

    def forward(self, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        """Class probabilities, shape (B, 2). rng enables dropout."""
        probs, _ = self._forward_cached(self._check_input(x), rng)
        return probs

    def loss_and_grads(self, x, labels, rng=None, class_weights=None):
        """Weighted softmax cross-entropy and exact parameter gradients.

        Returns (loss, grads) with grads aligned with param_arrays().
        The loss is sum(w_i * -ln p_i[label_i]) / sum(w_i); class_weights
        default to ones.
        """
        x = self._check_input(x)
        labels = np.asarray(labels)
        if labels.shape != (x.shape[0],):
            raise ShapeMismatchError(f"labels shape {labels.shape} != ({x.shape[0]},)")
        if not isinstance(self.layers[-1], Softmax):
            raise UnknownArchError(f"{self.arch_id}: loss requires a softmax output layer")

        probs, caches = self._forward_cached(x, rng)
        b = x.shape[0]
        rows = np.arange(b)
        if class_weights is None:
            w = np.ones(b, dtype=np.float64)
        else:
            w = np.asarray(class_weights, dtype=np.float64)[labels]
        w_total = w.sum()
        p_label = np.maximum(probs[rows, labels], np.finfo(self.dtype).tiny)
        loss = float((w * -np.log(p_label)).sum() / w_total)

        # fused softmax + cross-entropy gradient: (p - onehot) * w / sum(w)
        dlogits = probs.astype(np.float64, copy=True)
        dlogits[rows, labels] -= 1.0
        dlogits *= (w / w_total)[:, None]
        dx = dlogits.astype(probs.dtype)

        grads = [None] * len(self.layers)
        for i in range(len(self.layers) - 2, -1, -1):
            dx, layer_grads = self.layers[i].backward(dx, caches[i])
            grads[i] = layer_grads
        flat = []
        for layer, g in zip(self.layers, grads):
            flat.extend(g if g is not None else [])
        return loss, flat


def parse_arch_id(arch_id: str) -> tuple[str, int | None]:
    """Split an architecture id into (family, embedding dim or None)."""
    if arch_id == CNN_BASELINE:
        return CNN_BASELINE, None
    if arch_id.startswith(MLP_HEAD_PREFIX):
        suffix = arch_id[len(MLP_HEAD_PREFIX):]
        if suffix.isdigit() and int(suffix) > 0:
            return "mlp-head", int(suffix)
    raise UnknownArchError(f"unknown architecture {arch_id!r}")


def init_model(arch_id: str, seed: int, input_shape: tuple | None = None,
               dtype=np.float32) -> Network:
    """Build a freshly initialized network.

    Weights are He-uniform (bound sqrt(6 / fan_in)) drawn from a PCG64
    generator seeded with `seed`, in layer order; biases are zero.
    input_shape overrides the cnn-baseline geometry of (64, 64, 3) for
    reduced-size experiments; spatial dims must be divisible by 8.
    """
    family, emb_dim = parse_arch_id(arch_id)
    rng = np.random.default_rng(seed)
    if family == CNN_BASELINE:
        shape = tuple(input_shape) if input_shape is not None else CNN_INPUT_SHAPE
        h, w, c = shape
        if h % 8 or w % 8:
            raise ShapeMismatchError(f"cnn-baseline needs spatial dims divisible by 8: {shape}")
        layers = []
        c_in = c
        for i, c_out in enumerate((32, 64, 128), start=1):
            layers += [
                Conv3x3.initialized(f"conv{i}", c_in, c_out, rng, dtype),
                ReLU(),
                AvgPool2x2(),
                Dropout(DROPOUT_RATE),
            ]
            c_in = c_out
        flat_dim = (h // 8) * (w // 8) * 128
        layers += [
            Flatten(),
            Dense.initialized("dense1", flat_dim, 256, rng, dtype),
            ReLU(),
            Dropout(DROPOUT_RATE),
            Dense.initialized("dense2", 256, N_CLASSES, rng, dtype),
            Softmax(),
        ]
        return Network(arch_id, seed, layers, shape, dtype)

    shape = (emb_dim,) if input_shape is None else tuple(input_shape)
    layers = [
        Dense.initialized("dense1", shape[0], 128, rng, dtype),
        ReLU(),
        Dense.initialized("dense2", 128, N_CLASSES, rng, dtype),
        Softmax(),
    ]
    return Network(arch_id, seed, layers, shape, dtype)


@dataclass
class AdamState:
    """First/second moment estimates plus the shared step counter."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float = 1e-3) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params], lr=lr)


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update. Parameters are updated in place
    and returned together with the advanced state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatchError(
            f"got {len(params)} params, {len(grads)} grads, {len(state.m)} moments")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ShapeMismatchError(f"grad shape {g.shape} != param shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
