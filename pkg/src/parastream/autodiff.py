"""Reverse-mode automatic differentiation on dense numpy arrays.

The engine is deliberately small: float64 everywhere, graph edges held
by closures, and only the operations the semantic branch actually needs
(elementwise arithmetic, matmul, reductions, reshaping, indexing, 2-D
convolution and its adjoint, and a handful of activations). There is no
GPU path and no broadcasting beyond what the layers in this package use.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _sp

__all__ = [
    "AutodiffError",
    "DimensionError",
    "Tensor",
    "tensor",
    "concat",
    "stack",
    "exp",
    "log",
    "sqrt",
    "tanh",
    "sigmoid",
    "softplus",
    "erf",
    "leaky_relu",
    "conv2d",
    "conv_transpose2d",
    "gdn",
    "softmax_per_pixel",
]


class AutodiffError(RuntimeError):
    """Graph misuse: non-scalar backward, detached loss, repeated backward."""


class DimensionError(ValueError):
    """Operand shapes cannot be reconciled; the message names the axis."""


def _as_array(value):
    return np.asarray(value, dtype=np.float64)


class Tensor:
    """Dense float64 array plus an optional edge into the backward graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fn", "_spent")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._grad_fn = None
        self._spent = False

    # -- construction helpers -------------------------------------------

    @staticmethod
    def _from_op(data, parents, grad_fn):
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._grad_fn = grad_fn
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def detach(self) -> "Tensor":
        """Same values, no graph edge."""
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- backward pass ---------------------------------------------------

    def backward(self):
        """Populate ``grad`` on every reachable tensor that requires it.

        Only valid on scalar outputs of a connected graph. A second call
        on the same graph raises; rebuild the forward pass instead.
        """
        if self.data.size != 1:
            raise AutodiffError(
                f"backward() requires a scalar loss, got shape {self.data.shape}"
            )
        if not self.requires_grad:
            raise AutodiffError("loss is detached from every trainable tensor")
        if self._spent:
            raise AutodiffError(
                "backward() already ran on this graph; rebuild the forward pass"
            )
        order = []
        seen = set()
        stack_ = [(self, False)]
        while stack_:
            node, expanded = stack_.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack_.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack_.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._grad_fn is not None:
                node._grad_fn(node.grad)
        self._spent = True

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = _wrap(other)
        out_data = self.data + other.data

        def grad_fn(g):
            _accumulate(self, _unbroadcast(g, self.data.shape))
            _accumulate(other, _unbroadcast(g, other.data.shape))

        return Tensor._from_op(out_data, (self, other), grad_fn)

    __radd__ = __add__

    def __neg__(self):
        def grad_fn(g):
            _accumulate(self, -g)

        return Tensor._from_op(-self.data, (self,), grad_fn)

    def __sub__(self, other):
        return self + (-_wrap(other))

    def __rsub__(self, other):
        return _wrap(other) + (-self)

    def __mul__(self, other):
        other = _wrap(other)
        out_data = self.data * other.data

        def grad_fn(g):
            _accumulate(self, _unbroadcast(g * other.data, self.data.shape))
            _accumulate(other, _unbroadcast(g * self.data, other.data.shape))

        return Tensor._from_op(out_data, (self, other), grad_fn)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _wrap(other)
        out_data = self.data / other.data

        def grad_fn(g):
            _accumulate(self, _unbroadcast(g / other.data, self.data.shape))
            _accumulate(
                other,
                _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape),
            )

        return Tensor._from_op(out_data, (self, other), grad_fn)

    def __rtruediv__(self, other):
        return _wrap(other) / self

    def __pow__(self, exponent):
        if not np.isscalar(exponent):
            raise TypeError("only scalar exponents are supported")
        out_data = self.data ** exponent

        def grad_fn(g):
            _accumulate(self, g * exponent * self.data ** (exponent - 1))

        return Tensor._from_op(out_data, (self,), grad_fn)

    def __matmul__(self, other):
        other = _wrap(other)
        if self.data.ndim < 2 or other.data.ndim < 2:
            raise DimensionError("matmul operands must have at least 2 dims")
        out_data = np.matmul(self.data, other.data)

        def grad_fn(g):
            ga = np.matmul(g, np.swapaxes(other.data, -1, -2))
            gb = np.matmul(np.swapaxes(self.data, -1, -2), g)
            _accumulate(self, _unbroadcast(ga, self.data.shape))
            _accumulate(other, _unbroadcast(gb, other.data.shape))

        return Tensor._from_op(out_data, (self, other), grad_fn)

    # -- shape manipulation -------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)
        src_shape = self.data.shape

        def grad_fn(g):
            _accumulate(self, g.reshape(src_shape))

        return Tensor._from_op(out_data, (self,), grad_fn)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inverse = np.argsort(axes)

        def grad_fn(g):
            _accumulate(self, g.transpose(inverse))

        return Tensor._from_op(self.data.transpose(axes), (self,), grad_fn)

    def __getitem__(self, index):
        out_data = self.data[index]
        src_shape = self.data.shape

        def grad_fn(g):
            full = np.zeros(src_shape)
            np.add.at(full, index, g)
            _accumulate(self, full)

        return Tensor._from_op(out_data, (self,), grad_fn)

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        src_shape = self.data.shape

        def grad_fn(g):
            if axis is None:
                _accumulate(self, np.broadcast_to(g, src_shape).copy())
                return
            axes = axis if isinstance(axis, tuple) else (axis,)
            if not keepdims:
                g = np.expand_dims(g, axes)
            _accumulate(self, np.broadcast_to(g, src_shape).copy())

        return Tensor._from_op(out_data, (self,), grad_fn)

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = 1
            for a in axes:
                count *= self.data.shape[a]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- joining ------------------------------------------------------------------


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        for t, piece in zip(tensors, np.split(g, offsets, axis=axis)):
            _accumulate(t, piece)

    return Tensor._from_op(out_data, tuple(tensors), grad_fn)


def stack(tensors, axis: int = 0) -> Tensor:
    """Stack along a new axis, built from reshape + concat."""
    expanded = []
    for t in tensors:
        t = _wrap(t)
        shape = list(t.data.shape)
        shape.insert(axis if axis >= 0 else axis + t.data.ndim + 1, 1)
        expanded.append(t.reshape(shape))
    return concat(expanded, axis=axis)


# -- elementwise functions -----------------------------------------------------


def exp(t: Tensor) -> Tensor:
    t = _wrap(t)
    out_data = np.exp(t.data)

    def grad_fn(g):
        _accumulate(t, g * out_data)

    return Tensor._from_op(out_data, (t,), grad_fn)


def log(t: Tensor) -> Tensor:
    t = _wrap(t)

    def grad_fn(g):
        _accumulate(t, g / t.data)

    return Tensor._from_op(np.log(t.data), (t,), grad_fn)


def sqrt(t: Tensor) -> Tensor:
    t = _wrap(t)
    out_data = np.sqrt(t.data)

    def grad_fn(g):
        _accumulate(t, g * 0.5 / out_data)

    return Tensor._from_op(out_data, (t,), grad_fn)


def tanh(t: Tensor) -> Tensor:
    t = _wrap(t)
    out_data = np.tanh(t.data)

    def grad_fn(g):
        _accumulate(t, g * (1.0 - out_data * out_data))

    return Tensor._from_op(out_data, (t,), grad_fn)


def sigmoid(t: Tensor) -> Tensor:
    t = _wrap(t)
    out_data = _sp.expit(t.data)

    def grad_fn(g):
        _accumulate(t, g * out_data * (1.0 - out_data))

    return Tensor._from_op(out_data, (t,), grad_fn)


def softplus(t: Tensor) -> Tensor:
    """log(1 + e^x), evaluated as logaddexp for numerical safety."""
    t = _wrap(t)
    out_data = np.logaddexp(0.0, t.data)

    def grad_fn(g):
        _accumulate(t, g * _sp.expit(t.data))

    return Tensor._from_op(out_data, (t,), grad_fn)


_TWO_OVER_SQRT_PI = 2.0 / np.sqrt(np.pi)


def erf(t: Tensor) -> Tensor:
    t = _wrap(t)

    def grad_fn(g):
        _accumulate(t, g * _TWO_OVER_SQRT_PI * np.exp(-t.data * t.data))

    return Tensor._from_op(_sp.erf(t.data), (t,), grad_fn)


def leaky_relu(t: Tensor, slope: float = 0.01) -> Tensor:
    t = _wrap(t)
    positive = t.data > 0
    out_data = np.where(positive, t.data, slope * t.data)

    def grad_fn(g):
        _accumulate(t, g * np.where(positive, 1.0, slope))

    return Tensor._from_op(out_data, (t,), grad_fn)


# -- 2-D convolution and adjoint -------------------------------------------


def _im2col(padded: np.ndarray, k: int, stride: int, h_out: int, w_out: int):
    """[B,C,Hp,Wp] -> [B, C*k*k, h_out*w_out] patch matrix."""
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride, :, :]
    cols = windows.transpose(0, 1, 4, 5, 2, 3).reshape(
        padded.shape[0], padded.shape[1] * k * k, h_out * w_out
    )
    return np.ascontiguousarray(cols)


def _col2im(cols, batch, channels, h_pad, w_pad, k, stride, h_out, w_out):
    """Adjoint of _im2col: scatter-add patches back onto the padded grid."""
    grid = np.zeros((batch, channels, h_pad, w_pad))
    cols = cols.reshape(batch, channels, k, k, h_out, w_out)
    for i in range(k):
        for j in range(k):
            grid[:, :, i : i + stride * h_out : stride, j : j + stride * w_out : stride] += cols[
                :, :, i, j
            ]
    return grid


def _pad2d(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv2d(x: Tensor, weight: Tensor, bias=None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate [B,C_in,H,W] with [C_out,C_in,k,k] kernels."""
    x, weight = _wrap(x), _wrap(weight)
    if x.data.ndim != 4:
        raise DimensionError(f"conv2d input must be 4-D, got {x.data.ndim}-D")
    if weight.data.ndim != 4:
        raise DimensionError(f"conv2d weight must be 4-D, got {weight.data.ndim}-D")
    c_out, c_in, k, k2 = weight.data.shape
    if k != k2:
        raise DimensionError(f"conv2d kernel must be square, got {k}x{k2}")
    if k % 2 != 1:
        raise DimensionError(f"conv2d kernel size must be odd, got {k}")
    if x.data.shape[1] != c_in:
        raise DimensionError(
            f"conv2d channel axis mismatch: input has {x.data.shape[1]} channels, "
            f"weight expects {c_in}"
        )
    batch, _, h_in, w_in = x.data.shape
    h_out = (h_in + 2 * padding - k) // stride + 1
    w_out = (w_in + 2 * padding - k) // stride + 1
    if h_out < 1 or w_out < 1:
        raise DimensionError(
            f"conv2d output would be empty for spatial input {h_in}x{w_in}"
        )
    cols = _im2col(_pad2d(x.data, padding), k, stride, h_out, w_out)
    w_mat = weight.data.reshape(c_out, c_in * k * k)
    out_data = np.matmul(w_mat, cols).reshape(batch, c_out, h_out, w_out)
    parents = [x, weight]
    if bias is not None:
        bias = _wrap(bias)
        if bias.data.shape != (c_out,):
            raise DimensionError(
                f"conv2d bias axis mismatch: expected ({c_out},), got {bias.data.shape}"
            )
        out_data = out_data + bias.data.reshape(1, c_out, 1, 1)
        parents.append(bias)

    def grad_fn(g):
        g_flat = g.reshape(batch, c_out, h_out * w_out)
        if weight.requires_grad:
            gw = np.einsum("bol,bkl->ok", g_flat, cols)
            _accumulate(weight, gw.reshape(weight.data.shape))
        if x.requires_grad:
            g_cols = np.matmul(w_mat.T, g_flat)
            g_pad = _col2im(
                g_cols, batch, c_in, h_in + 2 * padding, w_in + 2 * padding,
                k, stride, h_out, w_out,
            )
            if padding:
                g_pad = g_pad[:, :, padding:-padding, padding:-padding]
            _accumulate(x, g_pad)
        if bias is not None and bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))

    return Tensor._from_op(out_data, tuple(parents), grad_fn)


def conv_transpose2d(
    x: Tensor, weight: Tensor, bias=None, stride: int = 1, padding: int = 0
) -> Tensor:
    """Adjoint of conv2d. ``weight`` is [C_in, C_out, k, k] with C_in the
    channel count of ``x``; sharing one array between conv2d (as
    [C_out, C_in, k, k]) and this op realizes the transpose pair."""
    x, weight = _wrap(x), _wrap(weight)
    if x.data.ndim != 4:
        raise DimensionError(f"conv_transpose2d input must be 4-D, got {x.data.ndim}-D")
    if weight.data.ndim != 4:
        raise DimensionError(
            f"conv_transpose2d weight must be 4-D, got {weight.data.ndim}-D"
        )
    c_in, c_out, k, k2 = weight.data.shape
    if k != k2:
        raise DimensionError(f"conv_transpose2d kernel must be square, got {k}x{k2}")
    if x.data.shape[1] != c_in:
        raise DimensionError(
            f"conv_transpose2d channel axis mismatch: input has {x.data.shape[1]} "
            f"channels, weight expects {c_in}"
        )
    batch, _, h_in, w_in = x.data.shape
    h_out = (h_in - 1) * stride - 2 * padding + k
    w_out = (w_in - 1) * stride - 2 * padding + k
    if h_out < 1 or w_out < 1:
        raise DimensionError(
            f"conv_transpose2d output would be empty for spatial input {h_in}x{w_in}"
        )
    w_mat = weight.data.reshape(c_in, c_out * k * k)
    x_flat = x.data.reshape(batch, c_in, h_in * w_in)
    out_cols = np.matmul(w_mat.T, x_flat)
    grid = _col2im(
        out_cols, batch, c_out, h_out + 2 * padding, w_out + 2 * padding,
        k, stride, h_in, w_in,
    )
    out_data = grid[:, :, padding : padding + h_out, padding : padding + w_out]
    parents = [x, weight]
    if bias is not None:
        bias = _wrap(bias)
        if bias.data.shape != (c_out,):
            raise DimensionError(
                f"conv_transpose2d bias axis mismatch: expected ({c_out},), "
                f"got {bias.data.shape}"
            )
        out_data = out_data + bias.data.reshape(1, c_out, 1, 1)
        parents.append(bias)

    def grad_fn(g):
        g_cols = _im2col(_pad2d(g, padding), k, stride, h_in, w_in)
        if x.requires_grad:
            gx = np.matmul(w_mat, g_cols).reshape(batch, c_in, h_in, w_in)
            _accumulate(x, gx)
        if weight.requires_grad:
            gw = np.einsum("bcl,bkl->ck", x_flat, g_cols)
            _accumulate(weight, gw.reshape(weight.data.shape))
        if bias is not None and bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))

    return Tensor._from_op(out_data, tuple(parents), grad_fn)


# -- composite ops used across the semantic branch ----------------------------


def gdn(x: Tensor, beta: Tensor, gamma: Tensor, inverse: bool = False) -> Tensor:
    """Generalized divisive normalization over the channel axis.

    y_i = x_i / sqrt(beta_i + sum_j gamma_ij * x_j^2); the inverse flag
    multiplies by the root instead of dividing (IGDN).
    """
    x, beta, gamma = _wrap(x), _wrap(beta), _wrap(gamma)
    channels = x.data.shape[1]
    if beta.data.shape != (channels,):
        raise DimensionError(
            f"gdn beta axis mismatch: expected ({channels},), got {beta.data.shape}"
        )
    if gamma.data.shape != (channels, channels):
        raise DimensionError(
            f"gdn gamma axis mismatch: expected ({channels}, {channels}), "
            f"got {gamma.data.shape}"
        )
    if np.any(beta.data <= 0):
        raise ValueError("gdn beta must be strictly positive after flooring")
    batch, _, height, width = x.data.shape
    x_flat = x.reshape(batch, channels, height * width)
    norm = gamma @ (x_flat * x_flat) + beta.reshape(channels, 1)
    root = sqrt(norm).reshape(batch, channels, height, width)
    if inverse:
        return x * root
    return x / root


def softmax_per_pixel(logits: Tensor) -> Tensor:
    """Softmax over axis 1 (the stream axis) of a [B,S,...] tensor.

    Stabilized by subtracting the detached per-pixel maximum, which
    leaves both the value and the gradient unchanged.
    """
    logits = _wrap(logits)
    if logits.data.shape[1] < 2:
        raise DimensionError(
            f"softmax_per_pixel needs at least 2 streams, got {logits.data.shape[1]}"
        )
    shift = Tensor(logits.data.max(axis=1, keepdims=True))
    exps = exp(logits - shift)
    return exps / exps.sum(axis=1, keepdims=True)
