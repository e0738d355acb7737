"""Dense feed-forward Q-network in double-precision numpy.

ReLU hidden layers, linear output, optional dueling head
``Q = V + A - mean(A)``. Parameters live in one flat list of arrays
``[W0, b0, W1, b1, ..., head...]`` so the optimizer, target updates and
checkpoints can treat them uniformly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_HIDDEN = (64, 128, 128, 64)
_MAGIC = b"MDQNCKPT1\n"


@dataclass
class NetworkParams:
    sizes: tuple[int, ...]
    dueling: bool
    arrays: list[np.ndarray]
    seed: int = 0

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.sizes[-1]

    @property
    def n_hidden_layers(self) -> int:
        return len(self.sizes) - 2

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.sizes, self.dueling, [a.copy() for a in self.arrays], self.seed)

    def assign_from(self, other: "NetworkParams") -> None:
        for dst, src in zip(self.arrays, other.arrays):
            dst[...] = src

    def soft_update_from(self, other: "NetworkParams", tau: float) -> None:
        """theta' <- tau * theta + (1 - tau) * theta'."""
        for dst, src in zip(self.arrays, other.arrays):
            dst *= 1.0 - tau
            dst += tau * src

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    def load_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        total = sum(a.size for a in self.arrays)
        if vec.size != total:
            raise ValueError(f"flat vector has {vec.size} entries, network needs {total}")
        k = 0
        for a in self.arrays:
            a[...] = vec[k:k + a.size].reshape(a.shape)
            k += a.size

    def equals(self, other: "NetworkParams") -> bool:
        return (self.sizes == other.sizes and self.dueling == other.dueling
                and all(np.array_equal(a, b) for a, b in zip(self.arrays, other.arrays)))


def _shapes(sizes: tuple[int, ...], dueling: bool) -> list[tuple[int, ...]]:
    shapes = []
    for fan_in, fan_out in zip(sizes[:-2], sizes[1:-1]):
        shapes += [(fan_in, fan_out), (fan_out,)]
    last, out = sizes[-2], sizes[-1]
    if dueling:
        shapes += [(last, 1), (1,), (last, out), (out,)]
    else:
        shapes += [(last, out), (out,)]
    return shapes


def init_params(n_inputs: int, n_outputs: int, hidden=DEFAULT_HIDDEN, dueling: bool = False,
                seed: int = 0) -> NetworkParams:
    """Uniform fan-in scaled initialisation; biases start at zero."""
    sizes = (int(n_inputs), *map(int, hidden), int(n_outputs))
    if min(sizes) < 1:
        raise ValueError(f"layer sizes must be positive, got {sizes}")
    rng = np.random.default_rng(seed)
    arrays = []
    shapes = _shapes(sizes, dueling)
    n_hidden_mats = len(sizes) - 2
    mat_index = 0
    for shp in shapes:
        if len(shp) == 1:
            arrays.append(np.zeros(shp))
            continue
        gain = 6.0 if mat_index < n_hidden_mats else 1.0
        limit = np.sqrt(gain / shp[0])
        arrays.append(rng.uniform(-limit, limit, size=shp))
        mat_index += 1
    return NetworkParams(sizes, bool(dueling), arrays, seed)


def _forward(params: NetworkParams, x: np.ndarray):
    arrs = params.arrays
    h = x
    cache = [x]
    k = 0
    for _ in range(params.n_hidden_layers):
        z = h @ arrs[k] + arrs[k + 1]
        h = np.maximum(z, 0.0)
        cache.append(h)
        k += 2
    if params.dueling:
        v = h @ arrs[k] + arrs[k + 1]
        a = h @ arrs[k + 2] + arrs[k + 3]
        q = v + a - a.mean(axis=1, keepdims=True)
    else:
        q = h @ arrs[k] + arrs[k + 1]
    return q, cache


def _as_batch(params: NetworkParams, features) -> tuple[np.ndarray, bool]:
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.n_inputs:
        raise ValueError(f"expected features of length {params.n_inputs}, got shape {np.shape(features)}")
    return x, single


def forward(params: NetworkParams, features) -> np.ndarray:
    """Q-values for one feature vector (1-D) or a batch (2-D)."""
    x, single = _as_batch(params, features)
    q, _ = _forward(params, x)
    return q[0] if single else q


def backward(params: NetworkParams, features, actions, targets, weights=None, huber: float | None = None):
    """Gradients of the weighted squared TD loss on the taken actions.

    L = (1/B) sum_i w_i (Q(s_i, a_i) - y_i)^2, or the Huber variant with
    threshold ``huber``. Returns ``(grads, td_errors, loss)``; td errors are
    signed ``Q - y``.
    """
    x, _ = _as_batch(params, features)
    actions = np.asarray(actions, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.float64)
    b = x.shape[0]
    weights = np.ones(b) if weights is None else np.asarray(weights, dtype=np.float64)
    if b == 0:
        raise ValueError("empty batch")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(targets)) and np.all(np.isfinite(weights))):
        raise ValueError("non-finite values in batch")
    q, cache = _forward(params, x)
    rows = np.arange(b)
    td = q[rows, actions] - targets
    if huber is None:
        loss = float(np.mean(weights * td * td))
        dq_sa = 2.0 * weights * td / b
    else:
        abs_td = np.abs(td)
        quad = np.minimum(abs_td, huber)
        loss = float(np.mean(weights * (0.5 * quad * quad + huber * (abs_td - quad))))
        dq_sa = weights * np.clip(td, -huber, huber) / b
    dq = np.zeros_like(q)
    dq[rows, actions] = dq_sa

    arrs = params.arrays
    grads = [None] * len(arrs)
    h = cache[-1]
    k = 2 * params.n_hidden_layers
    if params.dueling:
        dv = dq.sum(axis=1, keepdims=True)
        da = dq - dv / q.shape[1]
        grads[k], grads[k + 1] = h.T @ dv, dv.sum(axis=0)
        grads[k + 2], grads[k + 3] = h.T @ da, da.sum(axis=0)
        dh = dv @ arrs[k].T + da @ arrs[k + 2].T
    else:
        grads[k], grads[k + 1] = h.T @ dq, dq.sum(axis=0)
        dh = dq @ arrs[k].T
    for layer in range(params.n_hidden_layers - 1, -1, -1):
        k = 2 * layer
        out = cache[layer + 1]
        dz = dh * (out > 0)
        grads[k], grads[k + 1] = cache[layer].T @ dz, dz.sum(axis=0)
        if layer:
            dh = dz @ arrs[k].T
    return grads, td, loss


@dataclass
class Adam:
    """Moment-tracking first-order optimizer with bias correction."""

    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params: NetworkParams, grads: list[np.ndarray], step_size: float | None = None) -> None:
        if not self.m:
            self.m = [np.zeros_like(a) for a in params.arrays]
            self.v = [np.zeros_like(a) for a in params.arrays]
        lr = self.step_size if step_size is None else step_size
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params.arrays, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def optimize_step(params: NetworkParams, grads: list[np.ndarray], step_size: float, optimizer: Adam) -> None:
    optimizer.step(params, grads, step_size)


def save_checkpoint(path: str | Path, params: NetworkParams, *, step: int = 0, extra: dict | None = None) -> None:
    header = {
        "sizes": list(params.sizes),
        "dueling": params.dueling,
        "seed": params.seed,
        "step": int(step),
        "n_params": int(sum(a.size for a in params.arrays)),
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(params.flat().astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[NetworkParams, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if not raw.startswith(_MAGIC):
        raise ValueError(f"{path}: not a checkpoint file")
    rest = raw[len(_MAGIC):]
    nl = rest.index(b"\n")
    header = json.loads(rest[:nl])
    flat = np.frombuffer(rest[nl + 1:], dtype="<f8").astype(np.float64)
    sizes = tuple(header["sizes"])
    params = NetworkParams(sizes, header["dueling"],
                           [np.zeros(s) for s in _shapes(sizes, header["dueling"])], header["seed"])
    params.load_flat(flat)
    return params, header


def params_to_bytes(params: NetworkParams) -> bytes:
    return params.flat().astype("<f8").tobytes()


def params_from_bytes(template: NetworkParams, blob: bytes) -> NetworkParams:
    out = template.copy()
    out.load_flat(np.frombuffer(blob, dtype="<f8"))
    return out
