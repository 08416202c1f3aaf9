from __future__ import annotations

import numpy as np
import pytest

from ipseg import FeatureMap, ImageGeometry, PointPromptSet, PromptPoint, SegMask, SourceTag


def make_map(
    rng: np.random.Generator,
    h: int,
    w: int,
    c: int,
    tag: SourceTag = SourceTag.DINO,
    image_scale: int = 4,
) -> FeatureMap:
    data = rng.standard_normal((h, w, c)).astype(np.float32)
    return FeatureMap(data, tag, ImageGeometry(h * image_scale, w * image_scale))


def make_mask(rng: np.random.Generator, h: int, w: int) -> SegMask:
    return SegMask((rng.random((h, w)) > 0.5).astype(np.uint8))


def make_prompt_set(rng: np.random.Generator, k: int, c: int) -> PointPromptSet:
    def points():
        return [
            PromptPoint(int(rng.integers(0, 100)), int(rng.integers(0, 100)), float(rng.normal()))
            for _ in range(c)
        ]

    return PointPromptSet(positives=points(), negatives=points(), k=k, c=c)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
