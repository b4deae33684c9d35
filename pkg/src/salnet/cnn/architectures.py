"""Preset layer stacks following the three-pattern layout."""
from __future__ import annotations

from .network import LayerSpec, conv, infer_shapes, lrn, pool


def three_patterns(convs, pools, classes=2, lrn_params=(5, 1e-4, 0.75)) -> list[LayerSpec]:
    """Assemble the layout from five ``(kernel, out_channels, stride)`` convs and three ``(window, stride)`` pools."""
    if len(convs) != 5 or len(pools) != 3:
        raise ValueError("need five convolutions and three pools")
    c = [conv(k, o, s, name=f"conv{i + 1}") for i, (k, o, s) in enumerate(convs)]
    p = [pool(k, s, name=f"pool{i + 1}") for i, (k, s) in enumerate(pools)]
    relu = lambda n: LayerSpec("relu", name=n)  # noqa: E731
    norm = lambda n: lrn(*lrn_params, name=n)  # noqa: E731
    return [
        c[0], p[0], relu("relu1"), norm("norm1"),
        c[1], relu("relu2"), c[2], relu("relu22"), p[1], norm("norm2"),
        c[3], relu("relu3"), c[4], relu("relu33"), p[2],
        LayerSpec("inner_product", output_channels=classes, name="ip"),
        LayerSpec("softmax", name="prob"),
    ]


def sd_architecture(channels: int, t: int = 100) -> list[LayerSpec]:
    """CaffeNet-proportioned stack for 100 x 100 patches.

    The last pool is 2x2 (stride 2): after the third pattern's two valid 3x3
    convolutions only a 2x2 map is left.
    """
    layers = three_patterns(
        convs=[(11, 32, 2), (5, 64, 1), (5, 64, 1), (3, 96, 1), (3, 96, 1)],
        pools=[(3, 2), (3, 2), (2, 2)],
    )
    infer_shapes(layers, (t, t, channels))
    return layers


def desk_architecture(channels: int, t: int = 32, widths=(8, 16, 16, 16, 16)) -> list[LayerSpec]:
    """A narrow stack whose kernel sizes are chosen to stay valid for small patches (t >= 12)."""
    if t < 12:
        raise ValueError("desk architecture needs patches of at least 12 pixels")
    size = t
    k1 = 5 if t >= 24 else 3
    size -= k1 - 1
    p1 = (2, 2)
    size = (size - 2) // 2 + 1
    size -= 4  # two 3x3 convs
    p2 = (2, 2) if size >= 4 else ((2, 1) if size >= 2 else (1, 1))
    size = (size - p2[0]) // p2[1] + 1

    def k3(s):
        return 3 if s >= 5 else (2 if s >= 3 else 1)

    ka = k3(size)
    size -= ka - 1
    kb = k3(size)
    size -= kb - 1
    p3 = (2, 2 if size >= 4 else 1) if size >= 2 else (1, 1)
    layers = three_patterns(
        convs=[(k1, widths[0], 1), (3, widths[1], 1), (3, widths[2], 1), (ka, widths[3], 1), (kb, widths[4], 1)],
        pools=[p1, p2, p3],
    )
    infer_shapes(layers, (t, t, channels))
    return layers


def default_architecture(channels: int, t: int) -> list[LayerSpec]:
    return sd_architecture(channels, t) if t >= 96 else desk_architecture(channels, t)
