"""Parameter containers and the layer types used by the semantic branch.

A ``Module`` tracks parameter tensors and child modules by attribute
assignment, enough for optimizers, checkpointing and the freeze logic of
staged training. Initialization follows the package-wide conventions:
Glorot-uniform weights, zero biases, GDN at beta=1 / gamma=0.1*I, PReLU
slopes at 0.25.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LEAKY_SLOPE = 0.01
GDN_FLOOR = 1e-6


class Module:
    """Minimal parameter container with named traversal."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, param in self._params.items():
            yield prefix + name, param
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        seen = set()
        out = []
        for _, param in self.named_parameters():
            if id(param) not in seen:
                seen.add(id(param))
                out.append(param)
        return out

    def zero_grad(self):
        for param in self.parameters():
            param.grad = None

    def state_dict(self):
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"state dict missing parameters: {sorted(missing)[:4]}")
        for name, param in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != param.data.shape:
                raise ValueError(
                    f"shape mismatch for {name}: checkpoint {value.shape} vs "
                    f"model {param.data.shape}"
                )
            param.data = value.copy()


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for m in modules:
            self.append(m)

    def append(self, module: Module):
        name = str(len(self._items))
        self._items.append(module)
        self._children[name] = module

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, idx):
        return self._items[idx]


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=1, padding=None, bias=True):
        super().__init__()
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        fan = kernel * kernel
        self.weight = Tensor(
            glorot_uniform(rng, (c_out, c_in, kernel, kernel), c_in * fan, c_out * fan),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(c_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=1, padding=0, bias=True):
        super().__init__()
        self.stride = stride
        self.padding = padding
        fan = kernel * kernel
        self.weight = Tensor(
            glorot_uniform(rng, (c_in, c_out, kernel, kernel), c_in * fan, c_out * fan),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(c_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv_transpose2d(
            x, self.weight, self.bias, stride=self.stride, padding=self.padding
        )


class Linear(Module):
    """Affine map on the trailing axis."""

    def __init__(self, n_in, n_out, rng, bias=True):
        super().__init__()
        self.weight = Tensor(
            glorot_uniform(rng, (n_in, n_out), n_in, n_out), requires_grad=True
        )
        self.bias = Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = x @ self.weight
        if self.bias is not None:
            out = out + self.bias
        return out


class Embedding(Module):
    """Integer-index lookup table."""

    def __init__(self, count, dim, rng, scale=0.1):
        super().__init__()
        self.table = Tensor(rng.uniform(-scale, scale, size=(count, dim)), requires_grad=True)

    def __call__(self, index) -> Tensor:
        return self.table[np.asarray(index, dtype=np.intp)]


class GDN(Module):
    """(Inverse) generalized divisive normalization with positivity enforced
    by the square-plus-floor reparameterization."""

    def __init__(self, channels, inverse=False):
        super().__init__()
        self.inverse = inverse
        self.beta_raw = Tensor(np.full(channels, np.sqrt(1.0 - GDN_FLOOR)), requires_grad=True)
        gamma0 = 0.1 * np.eye(channels)
        self.gamma_raw = Tensor(np.sqrt(np.maximum(gamma0 - GDN_FLOOR, 0.0)), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        beta = self.beta_raw * self.beta_raw + GDN_FLOOR
        gamma = self.gamma_raw * self.gamma_raw + GDN_FLOOR
        return ad.gdn(x, beta, gamma, inverse=self.inverse)


class PReLU(Module):
    """Per-channel parametric rectifier for [B,C,H,W] tensors."""

    def __init__(self, channels, init=0.25):
        super().__init__()
        self.slope = Tensor(np.full(channels, init), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        positive = ad.leaky_relu(x, 0.0)
        negative = x - positive
        return positive + self.slope.reshape(1, -1, 1, 1) * negative


def leaky_relu(x: Tensor) -> Tensor:
    return ad.leaky_relu(x, LEAKY_SLOPE)
