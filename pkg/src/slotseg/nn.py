"""Neural-network building blocks over the autodiff tape.

Modules register parameters and submodules by attribute assignment, so
``named_parameters`` walks the tree in construction order. All parameters
are float64 and initialized from explicitly passed generators; nothing
touches global RNG state.
"""

from __future__ import annotations

import hashlib

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        lead = prefix + "." if prefix else ""
        for name, p in self._params.items():
            yield lead + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(lead + name)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict):
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            raise ValueError(f"state dict mismatch: missing={missing} extra={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{arr.shape} vs {p.data.shape}")
            np.copyto(p.data, arr)

    def set_requires_grad(self, flag: bool):
        for p in self.parameters():
            p.requires_grad = flag

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items = []
        for m in modules:
            self.append(m)

    def append(self, module: Module):
        self._children[str(len(self._items))] = module
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def params_hash(module: Module) -> str:
    """Order-independent digest of all parameter names, shapes and bytes."""
    h = hashlib.sha256()
    for name, p in sorted(module.named_parameters()):
        h.update(name.encode())
        h.update(str(p.data.shape).encode())
        h.update(np.ascontiguousarray(p.data).tobytes())
    return h.hexdigest()


def copy_params(dst: Module, src: Module):
    """Copy src parameter values into dst in place (architectures must match)."""
    dst_params = dict(dst.named_parameters())
    src_params = dict(src.named_parameters())
    if set(dst_params) != set(src_params):
        raise ValueError("architecture mismatch in copy_params")
    for name, p in dst_params.items():
        s = src_params[name].data
        if s.shape != p.data.shape:
            raise ValueError(f"shape mismatch for {name}")
        np.copyto(p.data, s)


def ema_update(teacher: Module, student: Module, momentum: float):
    """teacher <- momentum * teacher + (1 - momentum) * student, in place."""
    if not 0.0 <= momentum <= 1.0:
        raise ValueError("momentum must lie in [0, 1]")
    t_params = dict(teacher.named_parameters())
    s_params = dict(student.named_parameters())
    if set(t_params) != set(s_params):
        raise ValueError("architecture mismatch in ema_update")
    for name, p in t_params.items():
        np.copyto(p.data, momentum * p.data + (1.0 - momentum) * s_params[name].data)


# layers ---------------------------------------------------------------------

class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 bias: bool = True, zero_init: bool = False):
        super().__init__()
        if zero_init:
            w = np.zeros((d_in, d_out))
        else:
            w = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, d_out))
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        out = ad.matmul(x, self.weight)
        if self.bias is not None:
            out = ad.add(out, self.bias)
        return out


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.gamma = Parameter(np.ones(dim))
        self.beta = Parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        mu = ad.mean(x, axis=-1, keepdims=True)
        centered = ad.sub(x, mu)
        var = ad.mean(ad.mul(centered, centered), axis=-1, keepdims=True)
        norm = ad.div(centered, ad.sqrt(ad.add(var, self.eps)))
        return ad.add(ad.mul(norm, self.gamma), self.beta)


class MLP(Module):
    """Stack of linear layers with ReLU between (none after the last)."""

    def __init__(self, dims, rng: np.random.Generator, zero_init_last: bool = False):
        super().__init__()
        self.layers = ModuleList()
        for i in range(len(dims) - 1):
            last = i == len(dims) - 2
            self.layers.append(Linear(dims[i], dims[i + 1], rng,
                                      zero_init=zero_init_last and last))

    def forward(self, x: Tensor) -> Tensor:
        n = len(self.layers)
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < n - 1:
                x = ad.relu(x)
        return x


class MultiHeadAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.q_proj = Linear(dim, dim, rng)
        self.k_proj = Linear(dim, dim, rng)
        self.v_proj = Linear(dim, dim, rng)
        self.out_proj = Linear(dim, dim, rng)

    def _split(self, x: Tensor, n: int) -> Tensor:
        x = ad.reshape(x, (n, self.heads, self.head_dim))
        return ad.transpose(x, (1, 0, 2))

    def forward(self, queries: Tensor, keys_values: Tensor) -> Tensor:
        nq = queries.shape[0]
        nk = keys_values.shape[0]
        q = self._split(self.q_proj(queries), nq)
        k = self._split(self.k_proj(keys_values), nk)
        v = self._split(self.v_proj(keys_values), nk)
        logits = ad.mul(ad.matmul(q, ad.transpose(k, (0, 2, 1))),
                        1.0 / np.sqrt(self.head_dim))
        attn = ad.softmax(logits, axis=-1)
        out = ad.matmul(attn, v)
        out = ad.reshape(ad.transpose(out, (1, 0, 2)), (nq, self.dim))
        return self.out_proj(out)


class GRUCell(Module):
    """Gated recurrent unit with the usual reset/update/candidate gates."""

    def __init__(self, d_in: int, d_hidden: int, rng: np.random.Generator):
        super().__init__()
        self.d_hidden = d_hidden
        scale_i = 1.0 / np.sqrt(d_in)
        scale_h = 1.0 / np.sqrt(d_hidden)
        self.w_ih = Parameter(rng.normal(0.0, scale_i, size=(d_in, 3 * d_hidden)))
        self.w_hh = Parameter(rng.normal(0.0, scale_h, size=(d_hidden, 3 * d_hidden)))
        self.b_ih = Parameter(np.zeros(3 * d_hidden))
        self.b_hh = Parameter(np.zeros(3 * d_hidden))

    def forward(self, x: Tensor, h: Tensor) -> Tensor:
        hd = self.d_hidden
        gi = ad.add(ad.matmul(x, self.w_ih), self.b_ih)
        gh = ad.add(ad.matmul(h, self.w_hh), self.b_hh)
        r = ad.sigmoid(ad.add(gi[:, :hd], gh[:, :hd]))
        z = ad.sigmoid(ad.add(gi[:, hd:2 * hd], gh[:, hd:2 * hd]))
        n = ad.tanh(ad.add(gi[:, 2 * hd:], ad.mul(r, gh[:, 2 * hd:])))
        one_minus_z = ad.sub(1.0, z)
        return ad.add(ad.mul(one_minus_z, n), ad.mul(z, h))


class ConvTranspose2x2(Module):
    """Stride-2, kernel-2 transposed convolution on (H, W, C) grids."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator,
                 bias: bool = True):
        super().__init__()
        self.c_in = c_in
        self.c_out = c_out
        w = rng.normal(0.0, 1.0 / np.sqrt(c_in), size=(4, c_in, c_out))
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(c_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        h, w, _ = x.shape
        flat = ad.reshape(x, (h * w, self.c_in))
        taps = [ad.matmul(flat, self.weight[i]) for i in range(4)]
        t = ad.stack([ad.reshape(t_, (h, w, self.c_out)) for t_ in taps], axis=2)
        t = ad.reshape(t, (h, w, 2, 2, self.c_out))
        t = ad.transpose(t, (0, 2, 1, 3, 4))
        out = ad.reshape(t, (2 * h, 2 * w, self.c_out))
        if self.bias is not None:
            out = ad.add(out, self.bias)
        return out


class Conv3x3(Module):
    """Same-padding 3x3 convolution on (H, W, C) grids via shifted slices."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator,
                 zero_init: bool = False):
        super().__init__()
        self.c_in = c_in
        self.c_out = c_out
        if zero_init:
            w = np.zeros((9, c_in, c_out))
        else:
            w = rng.normal(0.0, 1.0 / np.sqrt(9 * c_in), size=(9, c_in, c_out))
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(c_out))

    def forward(self, x: Tensor) -> Tensor:
        h, w, _ = x.shape
        padded = ad.pad2d(x, 1, 1, 1, 1)
        out = None
        for dy in range(3):
            for dx in range(3):
                window = padded[dy:dy + h, dx:dx + w]
                flat = ad.reshape(window, (h * w, self.c_in))
                term = ad.matmul(flat, self.weight[3 * dy + dx])
                out = term if out is None else ad.add(out, term)
        out = ad.add(ad.reshape(out, (h, w, self.c_out)), self.bias)
        return out


# positional encodings --------------------------------------------------------

def sinusoidal_grid(grid_h: int, grid_w: int, dim: int) -> np.ndarray:
    """2-D sine/cosine positional table, shape (grid_h * grid_w, dim)."""
    if dim % 4 != 0:
        raise ValueError("positional dim must be divisible by 4")
    half = dim // 2

    def axis_table(positions):
        idx = np.arange(half // 2, dtype=np.float64)
        freqs = 1.0 / (10000.0 ** (2.0 * idx / half))
        ang = positions[:, None] * freqs[None, :]
        return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)

    rows = axis_table(np.arange(grid_h, dtype=np.float64))
    cols = axis_table(np.arange(grid_w, dtype=np.float64))
    out = np.zeros((grid_h, grid_w, dim))
    out[:, :, :half] = rows[:, None, :]
    out[:, :, half:] = cols[None, :, :]
    return out.reshape(grid_h * grid_w, dim)


def sinusoidal_position(y: float, x: float, dim: int) -> np.ndarray:
    """Continuous-coordinate counterpart of `sinusoidal_grid`, shape (dim,)."""
    if dim % 4 != 0:
        raise ValueError("positional dim must be divisible by 4")
    half = dim // 2
    idx = np.arange(half // 2, dtype=np.float64)
    freqs = 1.0 / (10000.0 ** (2.0 * idx / half))
    out = np.empty(dim)
    ang_y = y * freqs
    ang_x = x * freqs
    out[:half // 2] = np.sin(ang_y)
    out[half // 2:half] = np.cos(ang_y)
    out[half:half + half // 2] = np.sin(ang_x)
    out[half + half // 2:] = np.cos(ang_x)
    return out


# optimizer -------------------------------------------------------------------

class Adam:
    """Adam over an explicit (name, Parameter) list; state is serializable.

    `lr_mults` maps a name prefix (dot-separated path head) to a learning
    rate multiplier; each parameter uses the multiplier of its longest
    matching prefix, defaulting to 1. Multipliers are construction-time
    settings and are not part of the serialized state.
    """

    def __init__(self, named_params, lr: float = 1e-3,
                 betas=(0.9, 0.999), eps: float = 1e-8, lr_mults=None):
        self.named_params = list(named_params)
        names = [n for n, _ in self.named_params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names in optimizer")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.named_params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.named_params}
        mults = dict(lr_mults or {})
        self._mult = {}
        for name in names:
            best, best_len = 1.0, -1
            for prefix, mult in mults.items():
                if ((name == prefix or name.startswith(prefix + "."))
                        and len(prefix) > best_len):
                    best, best_len = float(mult), len(prefix)
            self._mult[name] = best

    def zero_grad(self):
        for _, p in self.named_params:
            p.grad = None

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.named_params:
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            np.copyto(m, self.beta1 * m + (1.0 - self.beta1) * g)
            np.copyto(v, self.beta2 * v + (1.0 - self.beta2) * g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            np.copyto(p.data, p.data - self.lr * self._mult[name] * update)

    def state_dict(self) -> dict:
        state = {"step_count": self.step_count}
        for name in self.m:
            state[f"m.{name}"] = self.m[name].copy()
            state[f"v.{name}"] = self.v[name].copy()
        return state

    def load_state_dict(self, state: dict):
        self.step_count = int(state["step_count"])
        for name in self.m:
            np.copyto(self.m[name], state[f"m.{name}"])
            np.copyto(self.v[name], state[f"v.{name}"])
