"""Actor and critic networks, the ADAM optimizer, and checkpoint files.

The actor maps a window of market features to one raw score per asset
(converted to portfolio weights downstream). The critic consumes the
same window augmented with the current weights and the normalized time
index, plus the candidate action at the dense head, and outputs N
quantiles of the cumulative-return distribution.

Both networks are a stack of GRU layers followed by a dense hidden
layer with leaky-ReLU and a linear output head. Parameters initialize
uniformly in +-1/sqrt(fan_in) of the owning matrix.

Checkpoint file layout (binary, little-endian, version tag in the
magic): ``b"R3LCHECKPOINT1\\n"``, then uint32 tensor count, then per
tensor: uint16 name length, UTF-8 name, uint8 rank, int64 dims,
float64 values in C order. No timestamps, so identical parameters
produce byte-identical files.
"""

from __future__ import annotations

import struct
from typing import Sequence

import numpy as np

from .autodiff import Tensor, concat, gru_cell, leaky_relu, matmul, add

LEAKY_SLOPE = 0.01

CHECKPOINT_MAGIC = b"R3LCHECKPOINT1\n"


def _uniform(rng: np.random.Generator, fan_in: int, shape: tuple) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense:
    def __init__(self, w: np.ndarray, b: np.ndarray, name: str, requires_grad: bool = True):
        self.name = name
        self.w = Tensor(w, requires_grad=requires_grad)
        self.b = Tensor(b, requires_grad=requires_grad)

    @classmethod
    def create(cls, rng: np.random.Generator, d_in: int, d_out: int, name: str) -> "Dense":
        return cls(_uniform(rng, d_in, (d_in, d_out)), _uniform(rng, d_in, (d_out,)), name)

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.w), self.b)

    def params(self) -> list[tuple[str, Tensor]]:
        return [(f"{self.name}.w", self.w), (f"{self.name}.b", self.b)]


class GRULayer:
    """One recurrent layer; input-to-hidden matrices use the input fan-in,

    hidden-to-hidden matrices and biases use the hidden fan-in."""

    GATES = ("z", "r", "c")

    def __init__(self, tensors: dict[str, np.ndarray], name: str, requires_grad: bool = True):
        self.name = name
        for key, arr in tensors.items():
            setattr(self, key, Tensor(arr, requires_grad=requires_grad))
        self.hidden = tensors["uz"].shape[0]

    @classmethod
    def create(cls, rng: np.random.Generator, d_in: int, hidden: int, name: str) -> "GRULayer":
        tensors = {}
        for gate in cls.GATES:
            tensors[f"w{gate}"] = _uniform(rng, d_in, (d_in, hidden))
            tensors[f"u{gate}"] = _uniform(rng, hidden, (hidden, hidden))
            tensors[f"b{gate}"] = _uniform(rng, hidden, (hidden,))
        return cls(tensors, name)

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        return gru_cell(
            x, h,
            self.wz, self.uz, self.bz,
            self.wr, self.ur, self.br,
            self.wc, self.uc, self.bc,
        )

    def run(self, xs: Sequence[Tensor]) -> list[Tensor]:
        batch = xs[0].data.shape[0]
        h = Tensor(np.zeros((batch, self.hidden)))
        out = []
        for x in xs:
            h = self.step(x, h)
            out.append(h)
        return out

    def params(self) -> list[tuple[str, Tensor]]:
        out = []
        for gate in self.GATES:
            for kind in ("w", "u", "b"):
                key = f"{kind}{gate}"
                out.append((f"{self.name}.{key}", getattr(self, key)))
        return out


class _Recurrent:
    """Shared GRU-stack plumbing for the actor and critic."""

    def __init__(self, gru_layers: list[GRULayer], head: Dense, out: Dense):
        self.gru_layers = gru_layers
        self.head = head
        self.out = out

    def _encode(self, windows: np.ndarray) -> Tensor:
        """Run (B, T, D) windows through the GRU stack; returns last hidden."""
        windows = np.asarray(windows, dtype=np.float64)
        if windows.ndim == 2:
            windows = windows[None, :, :]
        xs: list[Tensor] = [Tensor(windows[:, t, :]) for t in range(windows.shape[1])]
        for layer in self.gru_layers:
            xs = layer.run(xs)
        return xs[-1]

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = []
        for layer in self.gru_layers:
            out.extend(layer.params())
        out.extend(self.head.params())
        out.extend(self.out.params())
        return out

    def param_tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_params()]

    def export_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_params()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self.named_params():
            src = np.asarray(arrays[name], dtype=np.float64)
            if src.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {t.data.shape}")
            t.data = src.copy()
            t.grad = None

    def set_requires_grad(self, flag: bool) -> None:
        for _, t in self.named_params():
            t.requires_grad = flag

    def zero_grad(self) -> None:
        for _, t in self.named_params():
            t.grad = None


class ActorNetwork(_Recurrent):
    """Window of features -> one raw score per asset."""

    def __init__(self, gru_layers, head, out, n_inputs: int, n_assets: int):
        super().__init__(gru_layers, head, out)
        self.n_inputs = n_inputs
        self.n_assets = n_assets

    @classmethod
    def create(cls, rng: np.random.Generator, n_inputs: int, hidden: int,
               gru_layers: int, n_assets: int) -> "ActorNetwork":
        layers = []
        d = n_inputs
        for i in range(gru_layers):
            layers.append(GRULayer.create(rng, d, hidden, f"actor.gru{i}"))
            d = hidden
        head = Dense.create(rng, hidden, hidden, "actor.head")
        out = Dense.create(rng, hidden, n_assets, "actor.out")
        return cls(layers, head, out, n_inputs, n_assets)

    def forward(self, windows: np.ndarray) -> Tensor:
        if windows.shape[-1] != self.n_inputs:
            raise ValueError(f"actor input dim {windows.shape[-1]}, expected {self.n_inputs}")
        h = self._encode(windows)
        return self.out(leaky_relu(self.head(h), LEAKY_SLOPE))

    def clone(self, requires_grad: bool = True) -> "ActorNetwork":
        dup = ActorNetwork.create(
            np.random.default_rng(0), self.n_inputs, self.gru_layers[0].hidden,
            len(self.gru_layers), self.n_assets)
        dup.load_arrays(self.export_arrays())
        dup.set_requires_grad(requires_grad)
        return dup


class CriticNetwork(_Recurrent):
    """State window (+weights, time) and action -> N return quantiles."""

    def __init__(self, gru_layers, head, out, n_inputs: int, n_assets: int, n_quantiles: int):
        super().__init__(gru_layers, head, out)
        self.n_inputs = n_inputs
        self.n_assets = n_assets
        self.n_quantiles = n_quantiles

    @classmethod
    def create(cls, rng: np.random.Generator, n_inputs: int, hidden: int,
               gru_layers: int, n_assets: int, n_quantiles: int) -> "CriticNetwork":
        layers = []
        d = n_inputs
        for i in range(gru_layers):
            layers.append(GRULayer.create(rng, d, hidden, f"critic.gru{i}"))
            d = hidden
        head = Dense.create(rng, hidden + n_assets, hidden, "critic.head")
        out = Dense.create(rng, hidden, n_quantiles, "critic.out")
        return cls(layers, head, out, n_inputs, n_assets, n_quantiles)

    def forward(self, windows: np.ndarray, action) -> Tensor:
        if windows.shape[-1] != self.n_inputs:
            raise ValueError(f"critic input dim {windows.shape[-1]}, expected {self.n_inputs}")
        h = self._encode(windows)
        act = action if isinstance(action, Tensor) else Tensor(np.atleast_2d(action))
        joined = concat([h, act], axis=-1)
        return self.out(leaky_relu(self.head(joined), LEAKY_SLOPE))

    def clone(self, requires_grad: bool = True) -> "CriticNetwork":
        dup = CriticNetwork.create(
            np.random.default_rng(0), self.n_inputs, self.gru_layers[0].hidden,
            len(self.gru_layers), self.n_assets, self.n_quantiles)
        dup.load_arrays(self.export_arrays())
        dup.set_requires_grad(requires_grad)
        return dup


def soft_update(target: _Recurrent, online: _Recurrent, tau: float) -> None:
    """Blend target parameters toward online: tau*online + (1-tau)*target."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0,1], got {tau}")
    for (tn, tt), (on, ot) in zip(target.named_params(), online.named_params()):
        if tn.split(".", 1)[1] != on.split(".", 1)[1]:
            raise ValueError(f"parameter mismatch: {tn} vs {on}")
        tt.data = tau * ot.data + (1.0 - tau) * tt.data


# ---------------------------------------------------------------------------
# ADAM
# ---------------------------------------------------------------------------

def adam_step(
    value: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    """One ADAM update with bias correction. Mutates m, v and returns the

    updated parameter value; `t` is the 1-based step count."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    return value - lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            p.data = adam_step(p.data, p.grad, m, v, self.t,
                               self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            data = np.ascontiguousarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}q", *data.shape))
            fh.write(data.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        (count,) = struct.unpack("<I", fh.read(4))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{rank}q", fh.read(8 * rank)) if rank else ()
            size = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(shape)
            arrays[name] = data.copy()
    return arrays
