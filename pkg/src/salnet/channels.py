"""Input-channel configurations and per-frame feature stacks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contrast import contrast_descriptors, hsv_planes, rgb_to_hsi
from .motion import residual_motion_channel

SOURCE_WIDTH = {"rgb": 3, "hsv": 3, "contrast": 7, "motion": 1}


@dataclass(frozen=True)
class ChannelConfig:
    name: str
    sources: tuple[str, ...]

    @property
    def channel_count(self) -> int:
        return sum(SOURCE_WIDTH[s] for s in self.sources)

    @property
    def uses_motion(self) -> bool:
        return "motion" in self.sources


CONFIGS = {
    "3k": ChannelConfig("3k", ("rgb",)),
    "4k": ChannelConfig("4k", ("rgb", "motion")),
    "8k": ChannelConfig("8k", ("contrast", "motion")),
    "rgb8k": ChannelConfig("rgb8k", ("rgb", "contrast", "motion")),
    "hsv8k": ChannelConfig("hsv8k", ("hsv", "contrast", "motion")),
}


def get_channel_config(name: str | ChannelConfig) -> ChannelConfig:
    if isinstance(name, ChannelConfig):
        return name
    try:
        return CONFIGS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown channel configuration {name!r}; choose from {sorted(CONFIGS)}") from None


def frame_features(frame: np.ndarray, prev: np.ndarray | None, config: str | ChannelConfig) -> np.ndarray:
    """H x W x C float32 feature stack for one frame (``prev`` is the preceding frame or None)."""
    config = get_channel_config(config)
    planes = []
    for src in config.sources:
        if src == "rgb":
            planes.append(np.asarray(frame, dtype=np.float64))
        elif src == "hsv":
            planes.append(hsv_planes(frame))
        elif src == "contrast":
            planes.append(contrast_descriptors(rgb_to_hsi(frame)))
        elif src == "motion":
            planes.append(residual_motion_channel(prev, frame)[..., None])
    return np.concatenate(planes, axis=2).astype(np.float32)


def video_features(frames, config) -> list[np.ndarray]:
    return [frame_features(f, frames[k - 1] if k else None, config) for k, f in enumerate(frames)]
