"""Layer specifications, the network model and its forward/backward passes."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import layers as L

KINDS = ("conv", "maxpool", "relu", "lrn", "inner_product", "softmax")


@dataclass
class LayerSpec:
    kind: str
    kernel: tuple[int, int] | None = None
    stride: int = 1
    output_channels: int | None = None
    lrn_size: int = 5
    lrn_alpha: float = 1e-4
    lrn_beta: float = 0.75
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.kind in ("conv", "maxpool") and self.kernel is None:
            raise ValueError(f"{self.kind} layer needs a kernel size")
        if self.kernel is not None:
            self.kernel = tuple(int(k) for k in self.kernel)
        if self.kind in ("conv", "inner_product") and not self.output_channels:
            raise ValueError(f"{self.kind} layer needs output_channels")
        if self.kind == "lrn" and (self.lrn_size < 1 or self.lrn_size % 2 == 0):
            raise ValueError("LRN size must be odd and >= 1")


def conv(k, out, stride=1, name=""):
    return LayerSpec("conv", (k, k), stride, out, name=name)


def pool(k, stride, name=""):
    return LayerSpec("maxpool", (k, k), stride, name=name)


def lrn(size=5, alpha=1e-4, beta=0.75, name=""):
    return LayerSpec("lrn", lrn_size=size, lrn_alpha=alpha, lrn_beta=beta, name=name)


@dataclass
class NetworkModel:
    layers: list[LayerSpec]
    params: list[dict[str, np.ndarray]]
    input_shape: tuple[int, int, int]  # (t, t, C)
    meta: dict = field(default_factory=dict)

    @property
    def patch_size(self) -> int:
        return self.input_shape[0]

    @property
    def channels(self) -> int:
        return self.input_shape[2]

    def copy(self) -> "NetworkModel":
        return copy.deepcopy(self)

    def parameter_items(self):
        for i, p in enumerate(self.params):
            for name in sorted(p):
                yield (i, name), p[name]


def infer_shapes(layers: list[LayerSpec], input_shape) -> list[tuple[int, ...]]:
    """Output shape of every layer, (C, H, W) for spatial layers and (K,) afterwards."""
    t_h, t_w, c = input_shape
    shape: tuple[int, ...] = (c, t_h, t_w)
    shapes = []
    for i, spec in enumerate(layers):
        if spec.kind in ("conv", "maxpool"):
            if len(shape) != 3:
                raise ValueError(f"layer {i} ({spec.kind}) after flattening")
            kh, kw = spec.kernel
            if kh > shape[1] or kw > shape[2]:
                raise ValueError(f"layer {i} ({spec.kind}): kernel {kh}x{kw} exceeds input {shape[1]}x{shape[2]}")
            oc = spec.output_channels if spec.kind == "conv" else shape[0]
            shape = (oc, L.out_size(shape[1], kh, spec.stride), L.out_size(shape[2], kw, spec.stride))
        elif spec.kind == "inner_product":
            shape = (spec.output_channels,)
        shapes.append(shape)
    if not layers or layers[-1].kind != "softmax" or shapes[-1] != (2,):
        raise ValueError("network must end in a softmax over 2 outputs")
    return shapes


PATTERN = (
    ["conv", "maxpool", "relu", "lrn"]
    + ["conv", "relu", "conv", "relu", "maxpool", "lrn"]
    + ["conv", "relu", "conv", "relu", "maxpool"]
    + ["inner_product", "softmax"]
)


def validate_architecture(layers: list[LayerSpec], input_shape=None) -> None:
    """Check the three-pattern layout.

    Pattern 1 is conv, pool, relu; patterns 2 and 3 stack two conv+relu pairs
    before the pool; an LRN follows patterns 1 and 2; the classifier is one
    inner product and a softmax.
    """
    kinds = [spec.kind for spec in layers]
    if kinds != PATTERN:
        raise ValueError(f"layer order {kinds} does not follow the expected pattern {PATTERN}")
    if input_shape is not None:
        infer_shapes(layers, input_shape)


def init_model(layers, input_shape, seed=0, weight_std=0.01, filler="gaussian",
               symmetric_output=False, meta=None) -> NetworkModel:
    """Seeded initialization: Gaussian weights, zero biases.

    ``filler="msra"`` scales each layer's standard deviation by sqrt(2 / fan_in)
    instead of using the fixed ``weight_std``. ``symmetric_output`` zeroes the
    classifier weights so an untrained model outputs exactly 0.5.
    """
    shapes = infer_shapes(layers, input_shape)
    rng = np.random.default_rng(seed)
    prev = (input_shape[2], input_shape[0], input_shape[1])
    params = []
    for spec, shape in zip(layers, shapes):
        p = {}
        if spec.kind == "conv":
            kh, kw = spec.kernel
            fan_in = prev[0] * kh * kw
            std = np.sqrt(2.0 / fan_in) if filler == "msra" else weight_std
            p["w"] = rng.normal(0.0, std, size=(spec.output_channels, prev[0], kh, kw))
            p["b"] = np.zeros(spec.output_channels)
        elif spec.kind == "inner_product":
            fan_in = int(np.prod(prev))
            std = np.sqrt(1.0 / fan_in) if filler == "msra" else weight_std
            p["w"] = rng.normal(0.0, std, size=(spec.output_channels, fan_in))
            p["b"] = np.zeros(spec.output_channels)
            if symmetric_output:
                p["w"][:] = 0.0
        params.append(p)
        prev = shape
    return NetworkModel(list(layers), params, tuple(input_shape), dict(meta or {}))


def _check_input(model, x):
    t_h, t_w, c = model.input_shape
    if x.ndim != 4 or x.shape[1:] != (c, t_h, t_w):
        raise ValueError(f"expected batch of shape (N, {c}, {t_h}, {t_w}), got {x.shape}")


def forward(model: NetworkModel, x: np.ndarray):
    """Run the network on an (N, C, t, t) batch; returns (probabilities, logits, cache)."""
    x = np.asarray(x, dtype=np.float64)
    _check_input(model, x)
    cache = []
    h = x
    for spec, p in zip(model.layers, model.params):
        entry = {"x": h}
        if spec.kind == "conv":
            h = L.conv_forward(h, p["w"], p["b"], spec.stride)
        elif spec.kind == "maxpool":
            h, entry["arg"] = L.maxpool_forward(h, spec.kernel[0], spec.stride)
        elif spec.kind == "relu":
            h = L.relu(h)
        elif spec.kind == "lrn":
            h, entry["denom"] = L.lrn_forward(h, spec.lrn_size, spec.lrn_alpha, spec.lrn_beta)
        elif spec.kind == "inner_product":
            h = L.inner_product_forward(h, p["w"], p["b"])
        elif spec.kind == "softmax":
            entry["logits"] = h
            h = L.softmax(h)
        cache.append(entry)
    return h, cache[-1]["logits"], cache


def loss_from_logits(logits, labels):
    z = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(logz - z[np.arange(len(labels)), labels]))


def backward(model: NetworkModel, cache, labels, scale: float = 1.0):
    """Gradients of ``scale`` x mean cross-entropy w.r.t. every parameter and the input.

    ``cache`` must come from :func:`forward` on the same batch.
    Returns ``(loss, grads, dx)`` with ``grads`` mirroring ``model.params``.
    """
    if cache is None:
        raise RuntimeError("backward called without a cached forward pass")
    labels = np.asarray(labels, dtype=np.int64)
    logits = cache[-1]["logits"]
    if logits.shape[0] != labels.shape[0]:
        raise ValueError("label count does not match the cached batch")
    probs = L.softmax(logits)
    loss = scale * loss_from_logits(logits, labels)
    _, d = L.cross_entropy(probs, labels)
    d = d * scale
    grads: list[dict[str, np.ndarray]] = [{} for _ in model.layers]
    for i in range(len(model.layers) - 2, -1, -1):
        spec, p, entry = model.layers[i], model.params[i], cache[i]
        x = entry["x"]
        if spec.kind == "conv":
            d, grads[i]["w"], grads[i]["b"] = L.conv_backward(d, x, p["w"], spec.stride)
        elif spec.kind == "maxpool":
            d = L.maxpool_backward(d, entry["arg"], x.shape, spec.kernel[0], spec.stride)
        elif spec.kind == "relu":
            d = L.relu_backward(d, x)
        elif spec.kind == "lrn":
            d = L.lrn_backward(d, x, entry["denom"], spec.lrn_size, spec.lrn_alpha, spec.lrn_beta)
        elif spec.kind == "inner_product":
            d, grads[i]["w"], grads[i]["b"] = L.inner_product_backward(d, x, p["w"])
    return loss, grads, d


def loss_and_gradients(model, x, labels, scale=1.0):
    _, _, cache = forward(model, x)
    return backward(model, cache, labels, scale)


def predict_proba(model: NetworkModel, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Probability of the salient class for every patch in an (N, C, t, t) batch."""
    out = []
    for start in range(0, len(x), batch_size):
        probs, _, _ = forward(model, x[start:start + batch_size])
        out.append(probs[:, 1])
    return np.concatenate(out) if out else np.empty(0)


def predict_patch(model: NetworkModel, patch: np.ndarray) -> float:
    """Salient-class probability of a single t x t x C patch."""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.shape != tuple(model.input_shape):
        raise ValueError(f"patch shape {patch.shape} does not match model input {model.input_shape}")
    return float(predict_proba(model, patch.transpose(2, 0, 1)[None])[0])


def accuracy(model, x, y, batch_size=256) -> float:
    if len(y) == 0:
        return 0.0
    pred = (predict_proba(model, x, batch_size) > 0.5).astype(np.int64)
    return float(np.mean(pred == y))
