"""Small neural-network toolkit with hand-written backward passes.

A network is a list of :class:`LayerSpec` run in order by :func:`forward`;
parameters live in a :class:`ParamStore` keyed ``"<layer name>.w"`` and
``"<layer name>.b"``. :func:`backward` walks the recorded cache in reverse and
accumulates into ``ParamStore.grads``. Training runs in float32; the same
code runs in float64 for gradient checks (``ParamStore.astype``).

Tensors are NCHW for the image layers and (N, features) for ``linear``.
"""
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractViolation, ParseError

LAYER_KINDS = ("conv3x3", "conv1x1", "linear", "relu", "sigmoid", "maxpool2",
               "upsample2", "global_avg_pool")
PARAM_KINDS = ("conv3x3", "conv1x1", "linear")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str = ""
    fan_in: int = 0
    fan_out: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ContractViolation(f"unknown layer kind {self.kind!r}")
        if self.kind in PARAM_KINDS and not self.name:
            raise ContractViolation(f"{self.kind} layer needs a parameter name")

    def param_shapes(self):
        if self.kind == "conv3x3":
            return {"w": (self.fan_out, self.fan_in, 3, 3), "b": (self.fan_out,)}
        if self.kind in ("conv1x1", "linear"):
            return {"w": (self.fan_out, self.fan_in), "b": (self.fan_out,)}
        return {}


def conv3x3(name, cin, cout):
    return LayerSpec("conv3x3", name, cin, cout)


def conv1x1(name, cin, cout):
    return LayerSpec("conv1x1", name, cin, cout)


def linear(name, fan_in, fan_out):
    return LayerSpec("linear", name, fan_in, fan_out)


RELU = LayerSpec("relu")
SIGMOID = LayerSpec("sigmoid")
MAXPOOL2 = LayerSpec("maxpool2")
UPSAMPLE2 = LayerSpec("upsample2")
GLOBAL_AVG_POOL = LayerSpec("global_avg_pool")


class ParamStore:
    """Named parameter arrays with matching gradient and Adam moment arrays."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params = {}
        self.grads = {}
        self.m = {}
        self.v = {}
        self.step = 0

    def add(self, name, value):
        value = np.array(value, dtype=self.dtype)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params)

    def count(self):
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0)

    def reset_optimizer(self):
        for name in self.params:
            self.m[name].fill(0)
            self.v[name].fill(0)
        self.step = 0

    def copy(self):
        out = ParamStore(self.dtype)
        for name, p in self.params.items():
            out.add(name, p)
            out.grads[name][...] = self.grads[name]
            out.m[name][...] = self.m[name]
            out.v[name][...] = self.v[name]
        out.step = self.step
        return out

    def astype(self, dtype):
        out = ParamStore(dtype)
        for name, p in self.params.items():
            out.add(name, p)
        return out

    def state(self):
        """Snapshot of parameter values only (a checkpoint in memory)."""
        return {name: p.copy() for name, p in self.params.items()}

    def load_state(self, state, reset_optimizer=True):
        if set(state) != set(self.params):
            raise ContractViolation("checkpoint names do not match the parameter store")
        for name, value in state.items():
            if value.shape != self.params[name].shape:
                raise ContractViolation(
                    f"{name}: checkpoint shape {value.shape} != {self.params[name].shape}")
            self.params[name][...] = value
        self.zero_grad()
        if reset_optimizer:
            self.reset_optimizer()


def init_params(specs, seed, dtype=np.float32, store=None):
    """He-uniform weights (bound sqrt(6 / fan_in)) and zero biases."""
    rng = np.random.default_rng(seed)
    store = ParamStore(dtype) if store is None else store
    for spec in specs:
        shapes = spec.param_shapes()
        if not shapes:
            continue
        fan_in = spec.fan_in * (9 if spec.kind == "conv3x3" else 1)
        bound = np.sqrt(6.0 / fan_in)
        store.add(f"{spec.name}.w", rng.uniform(-bound, bound, shapes["w"]))
        store.add(f"{spec.name}.b", np.zeros(shapes["b"]))
    return store


# -- per-layer kernels ------------------------------------------------------

def _check_input(i, spec, x):
    kind = spec.kind
    if kind in ("conv3x3", "conv1x1"):
        if x.ndim != 4 or x.shape[1] != spec.fan_in:
            raise ContractViolation(
                f"layer {i} ({kind} {spec.name}): expected (N, {spec.fan_in}, H, W), got {x.shape}")
    elif kind == "linear":
        if x.ndim != 2 or x.shape[1] != spec.fan_in:
            raise ContractViolation(
                f"layer {i} (linear {spec.name}): expected (N, {spec.fan_in}), got {x.shape}")
    elif kind in ("maxpool2", "upsample2", "global_avg_pool"):
        if x.ndim != 4:
            raise ContractViolation(f"layer {i} ({kind}): expected NCHW input, got {x.shape}")
        if kind == "maxpool2" and (x.shape[2] % 2 or x.shape[3] % 2):
            raise ContractViolation(f"layer {i} (maxpool2): odd spatial size {x.shape[2:]}")


def _layer_forward(spec, params, x):
    kind = spec.kind
    if kind == "conv3x3":
        w, b = params[spec.name + ".w"], params[spec.name + ".b"]
        return kernels.conv3x3_forward(x, w, b), x
    if kind == "conv1x1":
        w, b = params[spec.name + ".w"], params[spec.name + ".b"]
        y = np.einsum("oi,nihw->nohw", w, x) + b[None, :, None, None]
        return y, x
    if kind == "linear":
        w, b = params[spec.name + ".w"], params[spec.name + ".b"]
        return x @ w.T + b, x
    if kind == "relu":
        return np.maximum(x, 0), x > 0
    if kind == "sigmoid":
        with np.errstate(over="ignore"):
            y = (1.0 / (1.0 + np.exp(-x))).astype(x.dtype, copy=False)
        return y, y
    if kind == "maxpool2":
        n, c, h, w = x.shape
        blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        blocks = blocks.reshape(n, c, h // 2, w // 2, 4)
        idx = blocks.argmax(axis=-1)
        y = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
        return y, (x.shape, idx)
    if kind == "upsample2":
        return x.repeat(2, axis=2).repeat(2, axis=3), None
    # global_avg_pool
    return x.mean(axis=(2, 3)), x.shape


def _layer_backward(spec, params, saved, gy):
    kind = spec.kind
    if kind == "conv3x3":
        w = params[spec.name + ".w"]
        gx, gw, gb = kernels.conv3x3_backward(saved, w, np.ascontiguousarray(gy, dtype=w.dtype))
        params.grads[spec.name + ".w"] += gw
        params.grads[spec.name + ".b"] += gb
        return gx
    if kind == "conv1x1":
        w = params[spec.name + ".w"]
        params.grads[spec.name + ".w"] += np.einsum("nohw,nihw->oi", gy, saved)
        params.grads[spec.name + ".b"] += gy.sum(axis=(0, 2, 3))
        return np.einsum("oi,nohw->nihw", w, gy)
    if kind == "linear":
        w = params[spec.name + ".w"]
        params.grads[spec.name + ".w"] += gy.T @ saved
        params.grads[spec.name + ".b"] += gy.sum(axis=0)
        return gy @ w
    if kind == "relu":
        return gy * saved
    if kind == "sigmoid":
        return gy * saved * (1.0 - saved)
    if kind == "maxpool2":
        shape, idx = saved
        n, c, h, w = shape
        gblocks = np.zeros((n, c, h // 2, w // 2, 4), dtype=gy.dtype)
        np.put_along_axis(gblocks, idx[..., None], gy[..., None], axis=-1)
        gblocks = gblocks.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return gblocks.reshape(shape)
    if kind == "upsample2":
        n, c, h, w = gy.shape
        return gy.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))
    shape = saved
    return np.broadcast_to(gy[:, :, None, None] / (shape[2] * shape[3]), shape).copy()


class Cache:
    """Activation record produced by :func:`forward`, consumed by :func:`backward`."""

    def __init__(self, specs, params):
        self.specs = list(specs)
        self.params = params
        self.saved = []


def forward(specs, params, x, record=True):
    """Run ``x`` through ``specs``. Returns ``(output, cache)``; cache is None unless ``record``."""
    x = np.asarray(x, dtype=params.dtype)
    cache = Cache(specs, params) if record else None
    for i, spec in enumerate(specs):
        _check_input(i, spec, x)
        x, saved = _layer_forward(spec, params, np.ascontiguousarray(x))
        if record:
            cache.saved.append(saved)
    return x, cache


def backward(cache, grad_output):
    """Accumulate parameter gradients and return d(loss)/d(input)."""
    if cache is None or len(cache.saved) != len(cache.specs):
        raise ContractViolation("backward needs the cache of a recorded forward pass")
    g = np.asarray(grad_output, dtype=cache.params.dtype)
    for spec, saved in zip(reversed(cache.specs), reversed(cache.saved)):
        g = _layer_backward(spec, cache.params, saved, g)
    return g


# -- optimisation -----------------------------------------------------------

def adam_step(params, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
    """One bias-corrected Adam update with decoupled weight decay; zeroes the gradients."""
    params.step += 1
    t = params.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, p in params.params.items():
        g = params.grads[name]
        m, v = params.m[name], params.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        if weight_decay:
            update = update + weight_decay * p
        p -= (lr * update).astype(p.dtype, copy=False)
        g.fill(0)
    return params


def poly_lr(base_lr, epoch, epochs):
    """Polynomial decay base_lr * (1 - epoch/epochs) ** 0.9."""
    if epochs <= 0 or not 0 <= epoch <= epochs:
        raise ContractViolation(f"poly_lr needs 0 <= epoch <= epochs, got {epoch}/{epochs}")
    return base_lr * (1.0 - epoch / epochs) ** 0.9


# -- checkpoint file --------------------------------------------------------
#
#   magic    8 bytes  b"RLAGCKPT"
#   version  u32      1
#   count    u32      number of tensors
#   table    count x { u16 name_len, name (utf-8), u8 ndim, ndim x u32 dims }
#   data     each tensor in table order, little-endian float32, C order
#
# All integers little-endian.

CKPT_MAGIC = b"RLAGCKPT"
CKPT_VERSION = 1


def save_checkpoint(path, state):
    """Write ``{name: array}`` (or a ParamStore) to ``path``."""
    if isinstance(state, ParamStore):
        state = state.params
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(state))]
    for name, arr in state.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    for arr in state.values():
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint` into ``{name: float32 array}``."""
    with open(path, "rb") as fh:
        buf = fh.read()
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(buf):
            raise ParseError(path, pos, f"truncated while reading {what}")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(8, "magic") != CKPT_MAGIC:
        raise ParseError(path, 0, "bad magic bytes")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != CKPT_VERSION:
        raise ParseError(path, 8, f"unsupported checkpoint version {version}")
    table = []
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = take(nlen, "name").decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1, "ndim"))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim, "dims"))
        table.append((name, dims))
    state = {}
    for name, dims in table:
        size = int(np.prod(dims, dtype=np.int64))
        data = take(4 * size, f"data of {name}")
        state[name] = np.frombuffer(data, dtype="<f4").astype(np.float32).reshape(dims)
    if pos != len(buf):
        raise ParseError(path, pos, "trailing bytes after tensor data")
    return state
