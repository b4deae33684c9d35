import numpy as np

from salnet.cnn.architectures import three_patterns
from salnet.cnn.network import LayerSpec, conv, init_model, loss_from_logits, forward, pool

from . import oracles


def tiny_layers():
    """Two convolutions on 8x8 inputs, with a strong LRN so its gradient matters."""
    return [conv(3, 3), LayerSpec("relu"), conv(3, 4), LayerSpec("maxpool", (2, 2), 2),
            LayerSpec("lrn", lrn_size=3, lrn_alpha=2.0, lrn_beta=0.75),
            LayerSpec("inner_product", output_channels=2), LayerSpec("softmax")]


def pattern_layers():
    """The full three-pattern stack at 12x12 with narrow widths and active LRN."""
    return three_patterns(convs=[(3, 3, 1), (3, 3, 1), (1, 3, 1), (1, 3, 1), (1, 3, 1)],
                          pools=[(2, 2), (2, 1), (1, 1)], lrn_params=(3, 2.0, 0.75))


def randomize_biases(model, seed=0):
    """Zero biases let a dead input region put activations exactly on the ReLU kink."""
    rng = np.random.default_rng(seed)
    for p in model.params:
        if "b" in p:
            p["b"][:] = rng.normal(0, 0.1, p["b"].shape)
    return model


def gradient_errors(model, x, y, h=1e-4):
    """Relative error of every analytic parameter gradient against central differences."""
    from salnet.cnn.network import backward
    _, _, cache = forward(model, x)
    _, grads, dx = backward(model, cache, y)
    errs = {}
    loss = lambda: loss_from_logits(forward(model, x)[1], y)  # noqa: E731
    for i, p in enumerate(model.params):
        for name, arr in p.items():
            errs[(i, name)] = oracles.rel_error(grads[i][name], oracles.numeric_grad(loss, arr, h))
    errs["input"] = oracles.rel_error(dx, oracles.numeric_grad(loss, x, h))
    return errs


def kink_margin(model, x):
    """Smallest distance of any ReLU input from zero or any max-pool winner from its runner-up.

    Central differences are only meaningful when this exceeds the change a step of h can cause.
    Exact zeros and exact ties are structural: they come from units an earlier ReLU cut off
    (or from identical computations on such units) and persist under a small step.
    """
    from numpy.lib.stride_tricks import sliding_window_view
    _, _, cache = forward(model, x)
    margin = np.inf
    for spec, entry in zip(model.layers, cache):
        if spec.kind == "relu":
            v = np.abs(entry["x"])
            margin = min(margin, v[v > 0].min(initial=np.inf))
        elif spec.kind == "maxpool" and spec.kernel[0] > 1:
            k, s = spec.kernel[0], spec.stride
            win = sliding_window_view(entry["x"], (k, k), axis=(2, 3))[:, :, ::s, ::s]
            top2 = np.sort(win.reshape(win.shape[:4] + (-1,)), axis=-1)[..., -2:]
            gap = top2[..., 1] - top2[..., 0]
            margin = min(margin, gap[gap > 0].min(initial=np.inf))
    return margin


def kink_free_batch(model, rng, shape, margin=1e-3, tries=50):
    """Draw normal inputs until no activation sits within ``margin`` of a kink; returns (x, redraws)."""
    for redraws in range(tries):
        x = rng.normal(size=shape)
        if kink_margin(model, x) > margin:
            return x, redraws
    raise RuntimeError("no kink-free batch found")


def separable_patches(n, t=12, c=3, seed=0):
    """Label 1: bright square in the middle; label 0: plain noise."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.1, 0.4, size=(n, c, t, t))
    y = np.arange(n) % 2
    q = t // 4
    x[y == 1, :, q:t - q, q:t - q] += 0.6
    order = rng.permutation(n)
    return x[order], y[order]


def small_model(t=12, c=3, seed=0, filler="msra", **kw):
    from salnet.cnn.architectures import desk_architecture
    return init_model(desk_architecture(c, t, widths=(4, 6, 6, 6, 6)), (t, t, c), seed=seed, filler=filler, **kw)


# lines printed by the acceptance suite, echoed again in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def layer_gradient_error(f_forward, backward, arrays, seed):
    """Worst relative error of analytic gradients of sum(R * f) against central differences."""
    rng = np.random.default_rng(seed)
    R = rng.normal(size=f_forward().shape)
    grads = backward(R)
    return max(oracles.rel_error(g, oracles.numeric_grad(lambda: float((R * f_forward()).sum()), arr))
               for arr, g in zip(arrays, grads))
