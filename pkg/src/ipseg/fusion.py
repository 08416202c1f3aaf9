"""Spatial alignment and channel concatenation of two feature maps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Union

import numpy as np

from .errors import GeometryError, ParamError
from .tensor_io import FeatureMap, SourceTag

Interpolation = Literal["bilinear", "nearest"]
# "dino" / "sd" select that source's grid; an (h, w) pair is explicit.
TargetGrid = Union[Literal["dino", "sd"], tuple[int, int]]


@dataclass(frozen=True)
class FusionConfig:
    target_grid: TargetGrid = "dino"
    per_source_l2_normalize: bool = True
    interpolation: Interpolation = "bilinear"

    def __post_init__(self):
        if isinstance(self.target_grid, tuple):
            h, w = self.target_grid
            if h < 1 or w < 1:
                raise ParamError(f"explicit target grid must be >= 1x1, got {h}x{w}")
        elif self.target_grid not in ("dino", "sd"):
            raise ParamError(f"unknown target grid {self.target_grid!r}")
        if self.interpolation not in ("bilinear", "nearest"):
            raise ParamError(f"unknown interpolation {self.interpolation!r}")


def _source_coords(out_n: int, in_n: int) -> np.ndarray:
    # align-corners-false: src = (dst + 0.5) * (in / out) - 0.5, clamped in range
    coords = (np.arange(out_n, dtype=np.float64) + 0.5) * (in_n / out_n) - 0.5
    return np.clip(coords, 0.0, in_n - 1)


def resize_feature_map(
    fm: FeatureMap, out_h: int, out_w: int, mode: Interpolation = "bilinear"
) -> FeatureMap:
    """Resample a feature map to a new grid; geometry and channels are preserved."""
    if out_h < 1 or out_w < 1:
        raise ParamError(f"output grid must be >= 1x1, got {out_h}x{out_w}")
    if mode not in ("bilinear", "nearest"):
        raise ParamError(f"unknown interpolation {mode!r}")
    in_h, in_w = fm.height, fm.width
    if (out_h, out_w) == (in_h, in_w):
        return FeatureMap(fm.data.copy(), fm.source_tag, fm.geometry)

    if mode == "nearest":
        rows = (np.arange(out_h) * in_h) // out_h
        cols = (np.arange(out_w) * in_w) // out_w
        data = fm.data[rows[:, None], cols[None, :], :].copy()
        return FeatureMap(data, fm.source_tag, fm.geometry)

    ys = _source_coords(out_h, in_h)
    xs = _source_coords(out_w, in_w)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    src = fm.data.astype(np.float64)
    top = src[y0[:, None], x0[None, :], :] * (1 - wx) + src[y0[:, None], x1[None, :], :] * wx
    bot = src[y1[:, None], x0[None, :], :] * (1 - wx) + src[y1[:, None], x1[None, :], :] * wx
    data = (top * (1 - wy) + bot * wy).astype(np.float32)
    return FeatureMap(data, fm.source_tag, fm.geometry)


def l2_normalize_channels(fm: FeatureMap, epsilon: float = 1e-12) -> FeatureMap:
    """Scale each cell's channel vector to unit L2 norm (epsilon-guarded)."""
    if epsilon <= 0:
        raise ParamError(f"epsilon must be > 0, got {epsilon}")
    src = fm.data.astype(np.float64)
    norms = np.sqrt((src * src).sum(axis=2, keepdims=True))
    norms = np.maximum(norms, epsilon)
    return FeatureMap((src / norms).astype(np.float32), fm.source_tag, fm.geometry)


def fuse(f_sd: FeatureMap, f_dino: FeatureMap, cfg: FusionConfig = FusionConfig()) -> FeatureMap:
    """Align both maps to one grid and concatenate channels, SD channels first."""
    if f_sd.geometry != f_dino.geometry:
        raise GeometryError(
            f"image geometry mismatch: sd={f_sd.geometry} dino={f_dino.geometry}"
        )
    if f_sd.source_tag != SourceTag.SD or f_dino.source_tag != SourceTag.DINO:
        raise ParamError(
            f"fuse expects (sd, dino) inputs, got "
            f"({f_sd.source_tag.name.lower()}, {f_dino.source_tag.name.lower()})"
        )
    if cfg.target_grid == "dino":
        target = (f_dino.height, f_dino.width)
    elif cfg.target_grid == "sd":
        target = (f_sd.height, f_sd.width)
    else:
        target = cfg.target_grid
    parts = []
    for fm in (f_sd, f_dino):
        fm = resize_feature_map(fm, target[0], target[1], cfg.interpolation)
        if cfg.per_source_l2_normalize:
            fm = l2_normalize_channels(fm)
        parts.append(fm.data)
    fused = np.concatenate(parts, axis=2)
    return FeatureMap(fused, SourceTag.FUSED, f_sd.geometry)
