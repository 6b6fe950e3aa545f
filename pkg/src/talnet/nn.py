"""Parameter containers, layers, initialization, and checkpoint I/O."""

from __future__ import annotations

import hashlib
import json
import zipfile

import numpy as np

from .autograd import Tensor, conv2d, matmul

CHECKPOINT_FORMAT_VERSION = 1


class Parameter:
    """A named trainable tensor with a recorded init recipe."""

    def __init__(self, shape, init="uniform-fan-in", name=""):
        self.shape = tuple(shape)
        self.init_spec = init
        self.name = name
        self.tensor = None  # populated by Module.initialize

    def initialize(self, rng, dtype):
        if self.init_spec == "zeros":
            data = np.zeros(self.shape, dtype=dtype)
        elif self.init_spec.startswith("constant("):
            c = float(self.init_spec[len("constant("):-1])
            data = np.full(self.shape, c, dtype=dtype)
        elif self.init_spec == "uniform-fan-in":
            # He-scaled uniform: keeps activation variance roughly constant
            # through ReLU layers (bound = sqrt(6 / fan_in))
            fan_in = int(np.prod(self.shape[1:])) if len(self.shape) > 1 else self.shape[0]
            bound = np.sqrt(6.0 / max(fan_in, 1))
            data = rng.uniform(-bound, bound, size=self.shape).astype(dtype)
        else:
            raise ValueError(f"unknown init spec {self.init_spec!r}")
        self.tensor = Tensor(data, requires_grad=True)

    @property
    def data(self):
        return self.tensor.data

    @property
    def grad(self):
        return self.tensor.grad


class Module:
    """Base class; submodules and Parameters are discovered via attributes."""

    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            path = f"{prefix}{key}" if not prefix else f"{prefix}.{key}"
            if isinstance(val, Parameter):
                yield path, val
            elif isinstance(val, Module):
                yield from val.named_parameters(path)
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Parameter):
                        yield f"{path}.{i}", item
                    elif isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def initialize(self, seed, dtype=np.float32):
        """Deterministic init: every parameter gets its own seed-derived stream."""
        names = []
        for name, param in self.named_parameters():
            param.name = name
            names.append(name)
        if len(names) != len(set(names)):
            raise ValueError("duplicate parameter names in module tree")
        for name, param in sorted(self.named_parameters()):
            sub = np.random.default_rng([seed, _name_key(name)])
            param.initialize(sub, dtype)
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.tensor.zero_grad()

    def astype(self, dtype):
        for p in self.parameters():
            p.tensor.data = p.tensor.data.astype(dtype)
            p.tensor.grad = None
        return self


def _name_key(name):
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


class Linear(Module):
    def __init__(self, in_dim, out_dim, bias_init="zeros"):
        self.weight = Parameter((out_dim, in_dim))
        self.bias = Parameter((out_dim,), init=bias_init)

    def __call__(self, x):
        return matmul(x, _t(self.weight)) + self.bias.tensor


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, k, pad=0):
        self.weight = Parameter((out_ch, in_ch, k, k))
        self.bias = Parameter((out_ch,), init="zeros")
        self.pad = pad

    def __call__(self, x):
        return conv2d(x, self.weight.tensor, self.bias.tensor, pad=self.pad)


def _t(param):
    # W stored (out,in); matmul wants (in,out) on the right
    from .autograd import transpose

    return transpose(param.tensor, (1, 0))


# --- checkpoints --------------------------------------------------------

def save_checkpoint(path, module, seed, config_hash):
    """Zip container: JSON header + one raw little-endian array per parameter."""
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "seed": seed,
        "model_config_hash": config_hash,
        "params": {},
    }
    blobs = {}
    for name, p in sorted(module.named_parameters()):
        arr = np.ascontiguousarray(p.data)
        header["params"][name] = {"shape": list(arr.shape), "dtype": str(arr.dtype)}
        blobs[name] = arr.astype("<" + arr.dtype.str[1:]).tobytes()
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr("header.json", json.dumps(header, indent=1, sort_keys=True))
        for name, blob in blobs.items():
            zf.writestr(f"params/{name}", blob)


def load_checkpoint(path, module):
    """Load parameters in place; returns the header dict."""
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("header.json"))
        if header["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['format_version']}")
        params = dict(module.named_parameters())
        missing = set(header["params"]) ^ set(params)
        if missing:
            raise ValueError(f"checkpoint/model parameter mismatch: {sorted(missing)}")
        for name, meta in header["params"].items():
            raw = zf.read(f"params/{name}")
            arr = np.frombuffer(raw, dtype=np.dtype(meta["dtype"]).newbyteorder("<"))
            arr = arr.reshape(meta["shape"]).astype(meta["dtype"])
            params[name].tensor = Tensor(arr.copy(), requires_grad=True)
    return header


def config_hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]
