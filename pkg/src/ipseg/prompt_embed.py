"""Prompt-image embedding: foreground filtering and average pooling."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ParamError
from .tensor_io import FeatureMap, SegMask, SourceTag


class MaskMode(enum.Enum):
    """Where the foreground mask applied before pooling comes from."""

    SALIENCY = "saliency"
    GT = "gt"
    NONE = "none"

    @classmethod
    def from_name(cls, name: str) -> "MaskMode":
        try:
            return cls(name.lower())
        except ValueError:
            raise ParamError(f"unknown mask mode {name!r}") from None


@dataclass
class PromptEmbedding:
    """Channel vector summarizing a prompt image's foreground features."""

    values: np.ndarray  # float64, shape (C,)
    source_tag: SourceTag
    mask_mode: MaskMode | None = None
    fallback_to_global: bool = False

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise ParamError(f"embedding must be a non-empty vector, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ParamError("embedding contains non-finite values")
        self.values = arr

    @property
    def channels(self) -> int:
        return self.values.shape[0]


def downsample_mask_to_grid(mask: SegMask, grid_h: int, grid_w: int) -> np.ndarray:
    """Per-cell foreground coverage in [0, 1] under uniform tiling.

    Each grid cell averages the mask pixels whose centers fall inside it;
    pixel row r belongs to cell floor((r + 0.5) * grid_h / mask_h), computed
    in exact integer arithmetic.
    """
    if grid_h < 1 or grid_w < 1:
        raise ParamError(f"grid dimensions must be >= 1, got {grid_h}x{grid_w}")
    h, w = mask.height, mask.width
    row_cell = ((2 * np.arange(h, dtype=np.int64) + 1) * grid_h) // (2 * h)
    col_cell = ((2 * np.arange(w, dtype=np.int64) + 1) * grid_w) // (2 * w)
    idx = (row_cell[:, None] * grid_w + col_cell[None, :]).ravel()
    counts = np.bincount(idx, minlength=grid_h * grid_w).astype(np.float64)
    sums = np.bincount(idx, weights=mask.data.ravel().astype(np.float64), minlength=grid_h * grid_w)
    coverage = np.zeros(grid_h * grid_w, dtype=np.float64)
    nonzero = counts > 0
    coverage[nonzero] = sums[nonzero] / counts[nonzero]
    return coverage.reshape(grid_h, grid_w)


def masked_average_pool(
    fm: FeatureMap,
    coverage: np.ndarray,
    min_coverage: float = 0.5,
    divide_by: str = "selected",
) -> PromptEmbedding:
    """Average the channel vectors of cells whose coverage clears the threshold.

    Cells are summed in row-major order. With ``divide_by="selected"`` the sum
    is divided by the number of selected cells (weighted mean); ``"total"``
    divides by the full cell count instead, matching a plain average over a
    zero-filled background. If no cell is selected the embedding falls back to
    the unweighted global mean and flags it.
    """
    coverage = np.asarray(coverage, dtype=np.float64)
    if coverage.shape != (fm.height, fm.width):
        raise GeometryError(
            f"coverage grid {coverage.shape} != feature grid {(fm.height, fm.width)}"
        )
    if not 0.0 <= min_coverage < 1.0:
        raise ParamError(f"min_coverage must be in [0, 1), got {min_coverage}")
    if divide_by not in ("selected", "total"):
        raise ParamError(f"divide_by must be 'selected' or 'total', got {divide_by!r}")
    selected = coverage >= min_coverage
    n_selected = int(selected.sum())
    cells = fm.data.astype(np.float64)
    if n_selected == 0:
        values = cells.reshape(-1, fm.channels).sum(axis=0) / (fm.height * fm.width)
        return PromptEmbedding(values, fm.source_tag, fallback_to_global=True)
    total = cells[selected].sum(axis=0)
    denom = n_selected if divide_by == "selected" else fm.height * fm.width
    return PromptEmbedding(total / denom, fm.source_tag)


def build_prompt_embedding(
    prompt_fm: FeatureMap,
    mask: SegMask | None,
    mode: MaskMode,
    min_coverage: float = 0.5,
    divide_by: str = "selected",
) -> PromptEmbedding:
    """Pool a prompt feature map into an embedding under the given mask regime."""
    if mode is MaskMode.NONE:
        coverage = np.ones((prompt_fm.height, prompt_fm.width), dtype=np.float64)
    else:
        if mask is None:
            raise ParamError(f"mask mode {mode.value!r} requires a mask")
        if (mask.height, mask.width) != (
            prompt_fm.geometry.image_height,
            prompt_fm.geometry.image_width,
        ):
            raise GeometryError(
                f"mask {mask.height}x{mask.width} != image geometry "
                f"{prompt_fm.geometry.image_height}x{prompt_fm.geometry.image_width}"
            )
        coverage = downsample_mask_to_grid(mask, prompt_fm.height, prompt_fm.width)
    embedding = masked_average_pool(prompt_fm, coverage, min_coverage, divide_by)
    embedding.mask_mode = mode
    return embedding
