"""Dense and sparse kernels with explicit backward passes, parameters, and AdamW."""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ._validation import FLOAT, check_finite, check_real, check_rows
from .errors import DataError, DimensionError, NumericError


class Param:
    """A trainable tensor with its gradient buffer and AdamW moments."""

    def __init__(self, value, name=""):
        self.name = name
        self.value = np.array(value, dtype=FLOAT)
        if self.value.ndim == 1:
            self.value = self.value.reshape(1, -1)
        self.grad = np.zeros_like(self.value)
        self.adamw_m = np.zeros_like(self.value)
        self.adamw_v = np.zeros_like(self.value)
        self.step_count = 0

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad.fill(0.0)

    def copy(self):
        out = Param(self.value.copy(), self.name)
        out.grad = self.grad.copy()
        out.adamw_m = self.adamw_m.copy()
        out.adamw_v = self.adamw_v.copy()
        out.step_count = self.step_count
        return out

    def __repr__(self):
        return f"Param({self.name!r}, shape={self.shape})"


def init_normal(rng, fan_in, fan_out, name=""):
    """Zero-mean Gaussian weights with std 1/sqrt(fan_in)."""
    w = rng.standard_normal((fan_in, fan_out)) / np.sqrt(max(fan_in, 1))
    return Param(w.astype(FLOAT), name)


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        check_real(self.learning_rate, "learning_rate", low=0.0, low_open=True)
        check_real(self.beta1, "beta1", low=0.0, high=1.0, low_open=True, high_open=True)
        check_real(self.beta2, "beta2", low=0.0, high=1.0, low_open=True, high_open=True)
        check_real(self.epsilon, "epsilon", low=0.0, low_open=True)
        check_real(self.weight_decay, "weight_decay", low=0.0)


def adamw_step(p, cfg):
    """One decoupled-weight-decay Adam update; zeroes ``p.grad`` afterwards."""
    if not np.all(np.isfinite(p.grad)):
        raise NumericError(f"non-finite gradient for {p.name or 'parameter'}")
    lr = FLOAT(cfg.learning_rate)
    b1, b2 = FLOAT(cfg.beta1), FLOAT(cfg.beta2)
    if cfg.weight_decay:
        p.value -= lr * FLOAT(cfg.weight_decay) * p.value
    p.step_count += 1
    p.adamw_m *= b1
    p.adamw_m += (1 - b1) * p.grad
    p.adamw_v *= b2
    p.adamw_v += (1 - b2) * p.grad * p.grad
    m_hat = p.adamw_m / FLOAT(1 - cfg.beta1 ** p.step_count)
    v_hat = p.adamw_v / FLOAT(1 - cfg.beta2 ** p.step_count)
    p.value -= lr * m_hat / (np.sqrt(v_hat) + FLOAT(cfg.epsilon))
    p.zero_grad()
    return p


def _operator(coeffs, g):
    # off-diagonal part of the normalized adjacency, cached on the coeffs object
    op = coeffs.__dict__.get("_csr")
    if op is None or op.shape[0] != g.num_nodes:
        n = g.num_nodes
        op = sp.csr_matrix((coeffs.values, g.col_idx, g.row_ptr), shape=(n, n), dtype=FLOAT)
        object.__setattr__(coeffs, "_csr", op)
    return op


def spmm(coeffs, g, x):
    """Normalized neighbourhood aggregation with implicit self-loop.

    ``out[u] = self_term[u] * x[u] + sum_v a_uv * x[v]``. The operator is
    symmetric, so the same call computes the backward pass.
    """
    x = np.asarray(x, dtype=FLOAT)
    if x.ndim != 2:
        raise DimensionError(f"spmm expects a 2-D matrix, got shape {x.shape}")
    check_rows(x, g.num_nodes, "x")
    check_finite(x, "x")
    out = _operator(coeffs, g) @ x
    out += coeffs.self_term[:, None] * x
    return np.asarray(out, dtype=FLOAT)


spmm_backward = spmm


def linear(x, w, b=None):
    if x.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"cannot multiply {x.shape} by {w.shape}")
    out = x @ w.value
    if b is not None:
        if b.value.size != w.shape[1]:
            raise DimensionError(f"bias length {b.value.size} != {w.shape[1]}")
        out += b.value.reshape(1, -1)
    return out


def linear_backward(x, w, b, dout):
    """Accumulate dW and db into the parameter buffers and return dX."""
    w.grad += x.T @ dout
    if b is not None:
        b.grad += dout.sum(axis=0, keepdims=True)
    return dout @ w.value.T


def relu(x):
    return np.maximum(x, FLOAT(0.0))


def relu_backward(x, dout):
    return dout * (x > 0)


# -- checkpoint container -------------------------------------------------

CKPT_MAGIC = b"SGCL"
CKPT_VERSION = 1


def save_tensors(path, tensors):
    """Write named float32 tensors as ``SGCL`` | version | count | records.

    Each record is ``u16 name length, name, u8 ndim, u32 dims..., f32 data``,
    all little-endian.
    """
    chunks = [CKPT_MAGIC, struct.pack("<BI", CKPT_VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load_tensors(path):
    data = Path(path).read_bytes()
    if data[:4] != CKPT_MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    version, count = struct.unpack_from("<BI", data, 4)
    if version != CKPT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    pos = 9
    out = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos:pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape)
            pos += 4 * size
            out[name] = arr.astype(FLOAT)
    except (struct.error, ValueError) as exc:
        raise DataError(f"{path}: truncated checkpoint") from exc
    return out
