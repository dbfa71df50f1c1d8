"""Feed-forward value network in numpy: fingerprint + residual depth -> cost in [0, 500].

Hidden layers are Linear -> BatchNorm -> softplus. The output layer is Linear
followed by ``500 * sigmoid``. Training minimizes mean absolute error with Adam.
"""
from __future__ import annotations

import hashlib
import math
import struct
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import InputError, TrainingError
from .similarity import fingerprint

OUT_SCALE = 500.0
BN_MOMENTUM = 0.99
BN_EPS = 1e-3
BATCH_SIZE = 128
BASE_LR = 0.001
FP_RADIUS = 3
WEIGHTS_MAGIC = b"RPVN"
WEIGHTS_VERSION = 1
GRAD_FLOOR = 1e-3

PROFILES = {
    "full": [16384 + 1, 1024, 300, 300, 300, 300, 300, 1],
    "desk": [1024 + 1, 128, 64, 64, 1],
}


def learning_rate(k: int) -> float:
    return BASE_LR / (1.0 + 2.0 * math.sqrt(k))


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -700.0, 700.0)))


def _softplus(x):
    return np.logaddexp(0.0, x)


class ValueNetwork:
    def __init__(self, dims, d_max: int = 10, seed: int = 0):
        if len(dims) < 3 or dims[-1] != 1:
            raise InputError("need at least one hidden layer and a scalar output")
        self.dims = [int(d) for d in dims]
        self.d_max = d_max
        self.k = 0
        rng = np.random.Generator(np.random.PCG64(seed))
        self.W, self.b = [], []
        for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
            lim = 1.0 / math.sqrt(fan_in)
            self.W.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
            self.b.append(np.zeros(fan_out))
        hidden = self.dims[1:-1]
        self.gamma = [np.ones(h) for h in hidden]
        self.beta = [np.zeros(h) for h in hidden]
        self.run_mean = [np.zeros(h) for h in hidden]
        self.run_var = [np.ones(h) for h in hidden]
        self._adam = None

    @classmethod
    def from_profile(cls, profile: str = "full", d_max: int = 10, seed: int = 0):
        return cls(PROFILES[profile], d_max, seed)

    @property
    def fp_bits(self) -> int:
        return self.dims[0] - 1

    @property
    def layer_shapes(self):
        return [w.shape for w in self.W]

    def parameters(self):
        """Trainable arrays in a fixed order (weights, biases, then batch-norm scale/shift)."""
        out = []
        for i in range(len(self.W)):
            out += [self.W[i], self.b[i]]
            if i < len(self.gamma):
                out += [self.gamma[i], self.beta[i]]
        return out

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    # -- inputs ------------------------------------------------------------

    def depth_feature(self, delta):
        return np.asarray(delta, dtype=np.float64) / self.d_max

    def encode(self, molecules, deltas) -> np.ndarray:
        """Dense input rows for (molecule, depth) pairs."""
        X = np.zeros((len(molecules), self.dims[0]))
        for i, m in enumerate(molecules):
            X[i, fingerprint(m, self.fp_bits, FP_RADIUS).on_bits] = 1.0
        X[:, -1] = self.depth_feature(deltas)
        return X

    # -- forward -----------------------------------------------------------

    def forward(self, X, training: bool = False):
        """Output in [0, 500] for dense inputs; ``training`` uses batch statistics."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dims[0]:
            raise InputError(f"expected inputs of width {self.dims[0]}")
        out, _ = self._forward(X, training)
        return out

    def _forward(self, X, training):
        cache = []
        h = X
        n_hidden = len(self.gamma)
        for i in range(n_hidden):
            a = h @ self.W[i] + self.b[i]
            if training:
                mu = a.mean(axis=0)
                var = a.var(axis=0)
            else:
                mu, var = self.run_mean[i], self.run_var[i]
            inv = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (a - mu) * inv
            y = self.gamma[i] * xhat + self.beta[i]
            cache.append((h, xhat, inv, y, mu, var))
            h = _softplus(y)
        z = (h @ self.W[-1] + self.b[-1])[:, 0]
        s = _sigmoid(z)
        cache.append((h, z, s))
        return OUT_SCALE * s, cache

    def predict(self, on_bits_list, deltas) -> np.ndarray:
        """Inference on sparse fingerprints (lists of set-bit indices)."""
        W0 = self.W[0]
        first = np.empty((len(on_bits_list), W0.shape[1]))
        for i, bits in enumerate(on_bits_list):
            first[i] = W0[bits].sum(axis=0)
        first += np.outer(self.depth_feature(deltas), W0[-1])
        return self.predict_from_first(first)

    def first_layer(self, on_bits) -> np.ndarray:
        """Fingerprint part of the first pre-activation (no bias, no depth term)."""
        return self.W[0][on_bits].sum(axis=0)

    def predict_from_first(self, first) -> np.ndarray:
        h = None
        for i in range(len(self.gamma)):
            a = first + self.b[0] if i == 0 else h @ self.W[i] + self.b[i]
            y = self.gamma[i] * (a - self.run_mean[i]) / np.sqrt(self.run_var[i] + BN_EPS) + self.beta[i]
            h = _softplus(y)
        return OUT_SCALE * _sigmoid((h @ self.W[-1] + self.b[-1])[:, 0])

    # -- training ----------------------------------------------------------

    def loss_and_grads(self, X, y, update_stats: bool = False):
        """MAE loss on a batch (batch-norm in training mode) and its gradients.

        The subgradient of |r| at r == 0 is taken as 0.
        """
        out, cache = self._forward(X, training=True)
        n = X.shape[0]
        resid = out - y
        loss = float(np.mean(np.abs(resid)))
        grads_W = [None] * len(self.W)
        grads_b = [None] * len(self.W)
        grads_g = [None] * len(self.gamma)
        grads_be = [None] * len(self.gamma)
        h, z, s = cache[-1]
        dz = np.sign(resid) / n * OUT_SCALE * s * (1.0 - s)
        grads_W[-1] = h.T @ dz[:, None]
        grads_b[-1] = np.array([dz.sum()])
        dh = dz[:, None] @ self.W[-1].T
        for i in reversed(range(len(self.gamma))):
            h_in, xhat, inv, ypre, _, _ = cache[i]
            dy = dh * _sigmoid(ypre)
            grads_g[i] = (dy * xhat).sum(axis=0)
            grads_be[i] = dy.sum(axis=0)
            dxhat = dy * self.gamma[i]
            da = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
            grads_W[i] = h_in.T @ da
            grads_b[i] = da.sum(axis=0)
            if i > 0:
                dh = da @ self.W[i].T
        if update_stats:
            for i in range(len(self.gamma)):
                _, _, _, _, mu, var = cache[i]
                self.run_mean[i] = BN_MOMENTUM * self.run_mean[i] + (1 - BN_MOMENTUM) * mu
                self.run_var[i] = BN_MOMENTUM * self.run_var[i] + (1 - BN_MOMENTUM) * var
        grads = []
        for i in range(len(self.W)):
            grads += [grads_W[i], grads_b[i]]
            if i < len(self.gamma):
                grads += [grads_g[i], grads_be[i]]
        return loss, grads

    def adam_step(self, grads, lr, beta1=0.9, beta2=0.999, eps=1e-7):
        params = self.parameters()
        if self._adam is None:
            self._adam = {"t": 0, "m": [np.zeros_like(p) for p in params],
                          "v": [np.zeros_like(p) for p in params]}
        st = self._adam
        st["t"] += 1
        t = st["t"]
        c1 = 1.0 - beta1 ** t
        c2 = 1.0 - beta2 ** t
        for p, g, m, v in zip(params, grads, st["m"], st["v"]):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)

    # -- persistence -------------------------------------------------------

    def to_bytes(self) -> bytes:
        """Versioned little-endian dump: header, per-layer W and b, batch-norm arrays."""
        parts = [WEIGHTS_MAGIC, struct.pack("<IIIQ", WEIGHTS_VERSION, len(self.dims), self.d_max, self.k)]
        parts.append(struct.pack(f"<{len(self.dims)}Q", *self.dims))
        for W, b in zip(self.W, self.b):
            parts.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
        for arrs in (self.gamma, self.beta, self.run_mean, self.run_var):
            for a in arrs:
                parts.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ValueNetwork":
        if data[:4] != WEIGHTS_MAGIC:
            raise InputError("not a weights file")
        version, n_dims, d_max, k = struct.unpack_from("<IIIQ", data, 4)
        if version != WEIGHTS_VERSION:
            raise InputError(f"unsupported weights version {version}")
        off = 4 + struct.calcsize("<IIIQ")
        dims = list(struct.unpack_from(f"<{n_dims}Q", data, off))
        off += 8 * n_dims
        net = cls.__new__(cls)
        net.dims, net.d_max, net.k, net._adam = dims, d_max, k, None

        def take(shape):
            nonlocal off
            count = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)
            off += 8 * count
            return arr

        net.W, net.b = [], []
        for fi, fo in zip(dims[:-1], dims[1:]):
            net.W.append(take((fi, fo)))
            net.b.append(take((fo,)))
        hidden = dims[1:-1]
        net.gamma = [take((h,)) for h in hidden]
        net.beta = [take((h,)) for h in hidden]
        net.run_mean = [take((h,)) for h in hidden]
        net.run_var = [take((h,)) for h in hidden]
        if off != len(data):
            raise InputError("trailing bytes in weights file")
        return net

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def nn_init(seed: int, profile: str = "full", d_max: int = 10) -> ValueNetwork:
    return ValueNetwork.from_profile(profile, d_max, seed)


def nn_forward(net: ValueNetwork, fp, delta: int) -> float:
    """Inference-mode value of one (fingerprint, residual depth) input."""
    if fp.length != net.fp_bits:
        raise InputError(f"fingerprint length {fp.length} != network input {net.fp_bits}")
    return float(net.predict([fp.on_bits], [delta])[0])


class ReplayBuffer:
    """FIFO buffer of (molecule, residual depth, target cost) with seeded uniform sampling."""

    def __init__(self, capacity: int = 1_000_000, seed: int = 0):
        self.capacity = capacity
        self.entries = deque(maxlen=capacity)
        self.rng = np.random.Generator(np.random.PCG64(seed))

    def __len__(self):
        return len(self.entries)

    def extend(self, entries):
        self.entries.extend(entries)

    def sample(self, n: int):
        idx = self.rng.integers(0, len(self.entries), size=n)
        return [self.entries[i] for i in idx]


@dataclass
class TrainStats:
    final_mae: float
    samples_seen: int
    learning_rate: float


def nn_train_update(net: ValueNetwork, buffer: ReplayBuffer, new_batch, epochs: int = 100,
                    batch_size: int = BATCH_SIZE) -> TrainStats:
    """Add ``new_batch`` to the buffer and train on uniform buffer samples.

    One epoch passes ``len(new_batch)`` samples (rounded up to whole batches).
    The learning rate is fixed for the whole call at 0.001 / (1 + 2 sqrt(k)),
    with k the number of previous calls; k is incremented afterwards.
    """
    if not new_batch:
        raise InputError("new_batch must not be empty")
    if not 1 <= epochs <= 100:
        raise InputError("epochs must be in [1, 100]")
    buffer.extend(new_batch)
    lr = learning_rate(net.k)
    steps = max(1, math.ceil(len(new_batch) / batch_size))
    seen = 0
    epoch_loss = 0.0
    for _ in range(epochs):
        epoch_loss = 0.0
        for _ in range(steps):
            batch = buffer.sample(batch_size)
            X = net.encode([e[0] for e in batch], [e[1] for e in batch])
            y = np.array([e[2] for e in batch], dtype=np.float64)
            loss, grads = net.loss_and_grads(X, y, update_stats=True)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingError(f"non-finite loss/gradient at update k={net.k}: loss={loss}")
            net.adam_step(grads, lr)
            epoch_loss += loss
            seen += len(batch)
        epoch_loss /= steps
    net.k += 1
    return TrainStats(epoch_loss, seen, lr)


def nn_gradient_check(net: ValueNetwork, X, y, n_params: int = 200, step: float = 1e-5,
                      seed: int = 0) -> float:
    """Max relative deviation between backprop and central differences on sampled parameters.

    Batch-norm runs in training mode (batch statistics); running statistics are
    left untouched. Targets equal to the outputs are nudged by 1 so the loss is
    differentiable at every sampled point. Gradients smaller than ``GRAD_FLOOR``
    are compared absolutely: biases feeding batch-norm have true gradient 0 and
    their finite differences are pure roundoff.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.array(y, dtype=np.float64)
    out = net.forward(X, training=True)
    tie = np.abs(out - y) < 1e-6
    y[tie] += 1.0
    _, grads = net.loss_and_grads(X, y)
    params = net.parameters()
    rng = np.random.Generator(np.random.PCG64(seed))
    sizes = np.array([p.size for p in params])
    worst = 0.0
    for _ in range(n_params):
        pi = int(rng.choice(len(params), p=sizes / sizes.sum()))
        flat = params[pi].reshape(-1)
        j = int(rng.integers(flat.size))
        old = flat[j]
        flat[j] = old + step
        lp = float(np.mean(np.abs(net.forward(X, training=True) - y)))
        flat[j] = old - step
        lm = float(np.mean(np.abs(net.forward(X, training=True) - y)))
        flat[j] = old
        numeric = (lp - lm) / (2 * step)
        analytic = float(grads[pi].reshape(-1)[j])
        denom = max(abs(numeric), abs(analytic), GRAD_FLOOR)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
