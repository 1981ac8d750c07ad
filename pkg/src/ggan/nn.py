"""Minimal feed-forward network engine with explicit forward/backward passes.

Seven layer kinds: dense, conv1d (stride 1, same padding), upsample1d
(nearest-neighbor x2), flatten, reshape, dropout (inverted), and
softmax_head (affine + softmax). Networks are a trunk of layers plus one
or more named heads branching off the trunk output. Everything is
float64 numpy; parameters and gradients travel as flat dicts keyed by
stable names like ``trunk.0.w`` and ``head.label.0.b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import NumericsError, SpecError

KINDS = ("dense", "conv1d", "upsample1d", "flatten", "reshape", "dropout", "softmax_head")
ACTIVATIONS = ("relu", "none")

CLIP_LO = 1e-7
CLIP_HI = 1.0 - 1e-7


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    units: int | None = None  # dense, softmax_head
    filters: int | None = None  # conv1d
    kernel: int = 3  # conv1d
    rate: float = 0.0  # dropout
    target_shape: tuple[int, ...] | None = None  # reshape
    activation: str = "none"  # dense, conv1d

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("dense", "softmax_head"):
            if self.units is None or self.units < 1:
                raise SpecError(f"{self.kind} needs units >= 1, got {self.units}")
        if self.kind == "conv1d":
            if self.filters is None or self.filters < 1:
                raise SpecError(f"conv1d needs filters >= 1, got {self.filters}")
            if self.kernel < 1 or self.kernel % 2 == 0:
                raise SpecError(f"conv1d kernel must be odd and >= 1, got {self.kernel}")
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise SpecError(f"dropout rate must be in [0, 1), got {self.rate}")
        if self.kind == "reshape":
            if self.target_shape is None or any(d < 1 for d in self.target_shape):
                raise SpecError(f"reshape needs a positive target shape, got {self.target_shape}")
            object.__setattr__(self, "target_shape", tuple(self.target_shape))
        if self.activation not in ACTIVATIONS:
            raise SpecError(f"unknown activation {self.activation!r}")
        if self.activation != "none" and self.kind not in ("dense", "conv1d"):
            raise SpecError(f"{self.kind} does not take an activation")


def dense(units: int, activation: str = "none") -> LayerSpec:
    return LayerSpec(kind="dense", units=units, activation=activation)


def conv1d(filters: int, kernel: int = 3, activation: str = "relu") -> LayerSpec:
    return LayerSpec(kind="conv1d", filters=filters, kernel=kernel, activation=activation)


def upsample1d() -> LayerSpec:
    return LayerSpec(kind="upsample1d")


def flatten() -> LayerSpec:
    return LayerSpec(kind="flatten")


def reshape(target_shape: Sequence[int]) -> LayerSpec:
    return LayerSpec(kind="reshape", target_shape=tuple(target_shape))


def dropout(rate: float) -> LayerSpec:
    return LayerSpec(kind="dropout", rate=rate)


def softmax_head(units: int = 2) -> LayerSpec:
    return LayerSpec(kind="softmax_head", units=units)


@dataclass(frozen=True)
class NetworkSpec:
    """A trunk of layers plus named heads hanging off the trunk output."""

    input_shape: tuple[int, ...]
    trunk: tuple[LayerSpec, ...]
    heads: Mapping[str, tuple[LayerSpec, ...]]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "trunk", tuple(self.trunk))
        object.__setattr__(
            self, "heads", {name: tuple(layers) for name, layers in self.heads.items()}
        )
        if not self.heads:
            raise SpecError("network needs at least one head")
        validate_network(self)

    @property
    def head_names(self) -> tuple[str, ...]:
        return tuple(self.heads)


def layer_output_shape(layer: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Static shape rule for one layer; raises SpecError on mismatch."""
    if layer.kind in ("dense", "softmax_head"):
        if len(in_shape) != 1:
            raise SpecError(f"{layer.kind} expects a vector input, got shape {in_shape}")
        return (layer.units,)
    if layer.kind == "conv1d":
        if len(in_shape) != 2:
            raise SpecError(f"conv1d expects (length, channels) input, got shape {in_shape}")
        return (in_shape[0], layer.filters)
    if layer.kind == "upsample1d":
        if len(in_shape) not in (1, 2):
            raise SpecError(f"upsample1d expects rank 1 or 2 input, got shape {in_shape}")
        return (2 * in_shape[0],) + in_shape[1:]
    if layer.kind == "flatten":
        return (int(np.prod(in_shape)),)
    if layer.kind == "reshape":
        if int(np.prod(in_shape)) != int(np.prod(layer.target_shape)):
            raise SpecError(
                f"reshape cannot map shape {in_shape} to {layer.target_shape}: size differs"
            )
        return layer.target_shape
    if layer.kind == "dropout":
        return in_shape
    raise SpecError(f"unknown layer kind {layer.kind!r}")


def trunk_shapes(spec: NetworkSpec) -> list[tuple[int, ...]]:
    """Output shape after each trunk layer."""
    shapes = []
    shape = spec.input_shape
    for layer in spec.trunk:
        shape = layer_output_shape(layer, shape)
        shapes.append(shape)
    return shapes

def trunk_output_shape(spec: NetworkSpec) -> tuple[int, ...]:
    shapes = trunk_shapes(spec)
    return shapes[-1] if shapes else spec.input_shape


def head_output_shape(spec: NetworkSpec, name: str) -> tuple[int, ...]:
    shape = trunk_output_shape(spec)
    for layer in spec.heads[name]:
        shape = layer_output_shape(layer, shape)
    return shape


def validate_network(spec: NetworkSpec) -> None:
    """Check the whole shape chain from input to every head."""
    if any(d < 1 for d in spec.input_shape):
        raise SpecError(f"invalid input shape {spec.input_shape}")
    shape = spec.input_shape
    for i, layer in enumerate(spec.trunk):
        try:
            shape = layer_output_shape(layer, shape)
        except SpecError as exc:
            raise SpecError(f"trunk layer {i}: {exc}") from None
    for name, layers in spec.heads.items():
        hshape = shape
        for i, layer in enumerate(layers):
            try:
                hshape = layer_output_shape(layer, hshape)
            except SpecError as exc:
                raise SpecError(f"head {name!r} layer {i}: {exc}") from None


def _fmt_shape(shape: tuple[int, ...]) -> str:
    return "(" + ",".join(str(d) for d in shape) + ")"


def _fmt_layer(layer: LayerSpec) -> str:
    if layer.kind == "dense":
        return f"dense(units={layer.units},{layer.activation})"
    if layer.kind == "conv1d":
        return f"conv1d(filters={layer.filters},kernel={layer.kernel},{layer.activation})"
    if layer.kind == "dropout":
        return f"dropout(rate={layer.rate})"
    if layer.kind == "reshape":
        return f"reshape{_fmt_shape(layer.target_shape)}"
    if layer.kind == "softmax_head":
        return f"softmax_head(units={layer.units})"
    return layer.kind


def describe(spec: NetworkSpec) -> str:
    """Canonical text dump of the network: one line per layer with its
    output (activation) shape. Used by the golden-shape tests."""
    lines = [f"input{_fmt_shape(spec.input_shape)}"]
    shape = spec.input_shape
    for layer in spec.trunk:
        shape = layer_output_shape(layer, shape)
        lines.append(f"{_fmt_layer(layer)}->{_fmt_shape(shape)}")
    for name in spec.heads:
        hshape = shape
        parts = []
        for layer in spec.heads[name]:
            hshape = layer_output_shape(layer, hshape)
            parts.append(f"{_fmt_layer(layer)}->{_fmt_shape(hshape)}")
        tail = " ".join(parts) if parts else f"identity->{_fmt_shape(hshape)}"
        lines.append(f"head[{name}]: {tail}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Parameters


def _layer_param_shapes(layer: LayerSpec, in_shape: tuple[int, ...]) -> dict[str, tuple[int, ...]]:
    if layer.kind == "dense" or layer.kind == "softmax_head":
        return {"w": (in_shape[0], layer.units), "b": (layer.units,)}
    if layer.kind == "conv1d":
        return {"w": (layer.kernel, in_shape[1], layer.filters), "b": (layer.filters,)}
    return {}


def _iter_layers(spec: NetworkSpec):
    """Yield (param name prefix, layer, input shape) over trunk then heads.

    Heads are visited in sorted-name order so parameter order does not
    depend on construction order.
    """
    shape = spec.input_shape
    for i, layer in enumerate(spec.trunk):
        yield f"trunk.{i}", layer, shape
        shape = layer_output_shape(layer, shape)
    for name in sorted(spec.heads):
        hshape = shape
        for i, layer in enumerate(spec.heads[name]):
            yield f"head.{name}.{i}", layer, hshape
            hshape = layer_output_shape(layer, hshape)


_PARAM_SHAPE_CACHE: dict[int, tuple["NetworkSpec", dict]] = {}


def param_shapes(spec: NetworkSpec) -> dict[str, tuple[int, ...]]:
    """Stable name -> shape map for every trainable tensor.

    The result is cached per spec instance; treat it as read-only.
    """
    hit = _PARAM_SHAPE_CACHE.get(id(spec))
    if hit is not None and hit[0] is spec:
        return hit[1]
    out: dict[str, tuple[int, ...]] = {}
    for prefix, layer, in_shape in _iter_layers(spec):
        for pname, shape in _layer_param_shapes(layer, in_shape).items():
            out[f"{prefix}.{pname}"] = shape
    if len(_PARAM_SHAPE_CACHE) > 64:
        _PARAM_SHAPE_CACHE.clear()
    _PARAM_SHAPE_CACHE[id(spec)] = (spec, out)
    return out


def init_parameters(spec: NetworkSpec, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(spec).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=np.float64)
            continue
        if len(shape) == 2:  # dense / head weight
            fan_in, fan_out = shape
        else:  # conv weight (kernel, c_in, filters)
            fan_in = shape[0] * shape[1]
            fan_out = shape[0] * shape[2]
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=shape)
    return params


def head_param_names(spec: NetworkSpec, name: str) -> list[str]:
    prefix = f"head.{name}."
    return [p for p in param_shapes(spec) if p.startswith(prefix)]


def trunk_param_names(spec: NetworkSpec) -> list[str]:
    return [p for p in param_shapes(spec) if p.startswith("trunk.")]


# ---------------------------------------------------------------------------
# Forward / backward


def _relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _pad_length(x: np.ndarray, pad: int) -> np.ndarray:
    # zero-pad along the length axis; cheaper than np.pad in this hot path
    b, length, channels = x.shape
    xp = np.zeros((b, length + 2 * pad, channels), dtype=np.float64)
    xp[:, pad : pad + length, :] = x
    return xp


def _im2col(xp: np.ndarray, length: int, kernel: int) -> np.ndarray:
    # (B, L+2p, C) -> (B*L, K*C): row (b, l) holds the kernel window at l,
    # kernel-tap major, matching w.reshape(K*C, F)
    windows = np.lib.stride_tricks.sliding_window_view(xp, kernel, axis=1)
    return windows.transpose(0, 1, 3, 2).reshape(xp.shape[0] * length, -1)


def _layer_forward(layer, w, b, x, mode, rng):
    """Returns (output, cache dict for backward)."""
    if layer.kind == "dense":
        z = x @ w + b
        y = _relu(z) if layer.activation == "relu" else z
        return y, {"x": x, "z": z}
    if layer.kind == "conv1d":
        pad = layer.kernel // 2
        batch, length, _ = x.shape
        col = _im2col(_pad_length(x, pad), length, layer.kernel)
        z = (col @ w.reshape(-1, layer.filters) + b).reshape(batch, length, layer.filters)
        y = _relu(z) if layer.activation == "relu" else z
        return y, {"col": col, "z": z, "in_shape": x.shape}
    if layer.kind == "upsample1d":
        return np.repeat(x, 2, axis=1), {"in_shape": x.shape}
    if layer.kind == "flatten":
        return x.reshape(x.shape[0], -1), {"in_shape": x.shape}
    if layer.kind == "reshape":
        return x.reshape(x.shape[0], *layer.target_shape), {"in_shape": x.shape}
    if layer.kind == "dropout":
        if mode == "train" and layer.rate > 0.0:
            if rng is None:
                raise ValueError("training-mode forward through dropout needs an rng")
            mask = (rng.random(x.shape) >= layer.rate).astype(np.float64)
            return x * mask / (1.0 - layer.rate), {"mask": mask}
        return x, {"mask": None}
    if layer.kind == "softmax_head":
        z = x @ w + b
        y = _softmax(z)
        return y, {"x": x, "y": y}
    raise SpecError(f"unknown layer kind {layer.kind!r}")


def _layer_backward(layer, w, dy, cache):
    """Returns (dx, dw, db); dw/db are None for parameterless layers."""
    if layer.kind == "dense":
        dz = dy * (cache["z"] > 0.0) if layer.activation == "relu" else dy
        dw = cache["x"].T @ dz
        db = dz.sum(axis=0)
        return dz @ w.T, dw, db
    if layer.kind == "conv1d":
        dz = dy * (cache["z"] > 0.0) if layer.activation == "relu" else dy
        batch, length, channels = cache["in_shape"]
        kernel = layer.kernel
        dz_flat = dz.reshape(batch * length, layer.filters)
        dw = (cache["col"].T @ dz_flat).reshape(kernel, channels, layer.filters)
        db = dz_flat.sum(axis=0)
        # fold the column gradient back onto the padded input
        dcol = (dz_flat @ w.reshape(-1, layer.filters).T).reshape(batch, length, kernel, channels)
        pad = kernel // 2
        dxp = np.zeros((batch, length + 2 * pad, channels), dtype=np.float64)
        for k in range(kernel):
            dxp[:, k : k + length, :] += dcol[:, :, k, :]
        return dxp[:, pad : pad + length, :], dw, db
    if layer.kind == "upsample1d":
        shape = cache["in_shape"]
        dx = dy.reshape(shape[0], shape[1], 2, *shape[2:]).sum(axis=2)
        return dx, None, None
    if layer.kind in ("flatten", "reshape"):
        return dy.reshape(cache["in_shape"]), None, None
    if layer.kind == "dropout":
        mask = cache["mask"]
        if mask is None:
            return dy, None, None
        return dy * mask / (1.0 - layer.rate), None, None
    if layer.kind == "softmax_head":
        y = cache["y"]
        dz = y * (dy - (dy * y).sum(axis=-1, keepdims=True))
        dw = cache["x"].T @ dz
        db = dz.sum(axis=0)
        return dz @ w.T, dw, db
    raise SpecError(f"unknown layer kind {layer.kind!r}")


def forward(
    spec: NetworkSpec,
    params: Mapping[str, np.ndarray],
    x: np.ndarray,
    mode: str = "infer",
    rng: np.random.Generator | None = None,
) -> tuple[dict[str, np.ndarray], dict]:
    """Run the network on a batch ``x`` of shape (B, *input_shape).

    Returns (per-head outputs, cache). The cache carries everything
    :func:`backward` needs, including dropout masks drawn here.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != len(spec.input_shape) + 1 or x.shape[1:] != spec.input_shape:
        raise SpecError(
            f"input batch shape {x.shape} does not match network input {spec.input_shape}"
        )
    if not np.all(np.isfinite(x)):
        raise NumericsError("non-finite entries in network input")

    cache: dict = {"mode": mode, "trunk": [], "heads": {}, "batch": x.shape[0]}
    t = x
    for i, layer in enumerate(spec.trunk):
        w = params.get(f"trunk.{i}.w")
        b = params.get(f"trunk.{i}.b")
        t, layer_cache = _layer_forward(layer, w, b, t, mode, rng)
        if not np.all(np.isfinite(t)):
            raise NumericsError(f"non-finite activation after trunk layer {i} ({layer.kind})")
        cache["trunk"].append(layer_cache)
    cache["trunk_out_shape"] = t.shape

    heads: dict[str, np.ndarray] = {}
    for name in spec.heads:
        h = t
        head_caches = []
        for i, layer in enumerate(spec.heads[name]):
            w = params.get(f"head.{name}.{i}.w")
            b = params.get(f"head.{name}.{i}.b")
            h, layer_cache = _layer_forward(layer, w, b, h, mode, rng)
            if not np.all(np.isfinite(h)):
                raise NumericsError(
                    f"non-finite activation after head {name!r} layer {i} ({layer.kind})"
                )
            head_caches.append(layer_cache)
        cache["heads"][name] = head_caches
        heads[name] = h
    return heads, cache


def backward(
    spec: NetworkSpec,
    params: Mapping[str, np.ndarray],
    cache: dict,
    head_grads: Mapping[str, np.ndarray],
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Backpropagate per-head output gradients through the network.

    Heads absent from ``head_grads`` contribute exactly zero. Returns a
    gradient for every parameter (zeros included) plus the gradient with
    respect to the network input.
    """
    unknown = set(head_grads) - set(spec.heads)
    if unknown:
        raise SpecError(f"gradients supplied for unknown heads {sorted(unknown)}")
    if len(cache.get("trunk", ())) != len(spec.trunk) or set(cache.get("heads", ())) != set(
        spec.heads
    ):
        raise SpecError("forward cache does not match network spec")

    grads: dict[str, np.ndarray] = {}
    d_trunk_out = np.zeros(cache["trunk_out_shape"])

    for name, dy in head_grads.items():
        dy = np.asarray(dy, dtype=np.float64)
        d = dy
        for i in range(len(spec.heads[name]) - 1, -1, -1):
            layer = spec.heads[name][i]
            w = params.get(f"head.{name}.{i}.w")
            d, dw, db = _layer_backward(layer, w, d, cache["heads"][name][i])
            if dw is not None:
                grads[f"head.{name}.{i}.w"] = dw
                grads[f"head.{name}.{i}.b"] = db
        d_trunk_out = d_trunk_out + d

    d = d_trunk_out
    for i in range(len(spec.trunk) - 1, -1, -1):
        layer = spec.trunk[i]
        w = params.get(f"trunk.{i}.w")
        d, dw, db = _layer_backward(layer, w, d, cache["trunk"][i])
        if dw is not None:
            grads[f"trunk.{i}.w"] = dw
            grads[f"trunk.{i}.b"] = db
    # heads that received no gradient contribute exactly zero
    for name, shape in param_shapes(spec).items():
        if name not in grads:
            grads[name] = np.zeros(shape)
    return grads, d


# ---------------------------------------------------------------------------
# Loss


def cross_entropy(targets: np.ndarray, probs: np.ndarray) -> float:
    """Mean cross-entropy of one-hot targets against probability rows.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the log, so a
    perfect prediction yields a small positive value rather than 0/inf.
    """
    targets = np.asarray(targets, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if targets.shape != probs.shape:
        raise ValueError(f"target shape {targets.shape} != prediction shape {probs.shape}")
    if targets.ndim != 2 or targets.shape[0] == 0:
        raise ValueError("cross_entropy needs a non-empty batch of probability pairs")
    p = np.clip(probs, CLIP_LO, CLIP_HI)
    return float(-(targets * np.log(p)).sum() / targets.shape[0])


def cross_entropy_grad(targets: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Gradient of :func:`cross_entropy` with respect to ``probs``.

    Zero where the clamp is active, matching the computed loss exactly
    (keeps finite-difference checks honest).
    """
    targets = np.asarray(targets, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if targets.shape != probs.shape or targets.ndim != 2 or targets.shape[0] == 0:
        raise ValueError("cross_entropy_grad needs matching non-empty batches")
    p = np.clip(probs, CLIP_LO, CLIP_HI)
    inside = (probs >= CLIP_LO) & (probs <= CLIP_HI)
    return -(targets / p) * inside / targets.shape[0]


# ---------------------------------------------------------------------------
# Spec (de)serialization, for checkpoints


def layer_to_dict(layer: LayerSpec) -> dict:
    d: dict = {"kind": layer.kind}
    if layer.kind in ("dense", "softmax_head"):
        d["units"] = layer.units
    if layer.kind == "conv1d":
        d["filters"] = layer.filters
        d["kernel"] = layer.kernel
    if layer.kind == "dropout":
        d["rate"] = layer.rate
    if layer.kind == "reshape":
        d["target_shape"] = list(layer.target_shape)
    if layer.kind in ("dense", "conv1d"):
        d["activation"] = layer.activation
    return d


def layer_from_dict(d: Mapping) -> LayerSpec:
    kwargs: dict = {"kind": d["kind"]}
    for key in ("units", "filters", "kernel", "rate", "activation"):
        if key in d:
            kwargs[key] = d[key]
    if "target_shape" in d:
        kwargs["target_shape"] = tuple(d["target_shape"])
    return LayerSpec(**kwargs)


def network_to_dict(spec: NetworkSpec) -> dict:
    return {
        "input_shape": list(spec.input_shape),
        "trunk": [layer_to_dict(l) for l in spec.trunk],
        "heads": {name: [layer_to_dict(l) for l in layers] for name, layers in spec.heads.items()},
    }


def network_from_dict(d: Mapping) -> NetworkSpec:
    return NetworkSpec(
        input_shape=tuple(d["input_shape"]),
        trunk=tuple(layer_from_dict(l) for l in d["trunk"]),
        heads={name: tuple(layer_from_dict(l) for l in layers) for name, layers in d["heads"].items()},
    )


def specs_equal(a: NetworkSpec, b: NetworkSpec) -> bool:
    return network_to_dict(a) == network_to_dict(b)
