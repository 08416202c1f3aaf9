"""Synthetic planted-recovery datasets for desk-scale end-to-end verification.

Each class gets a unit direction in feature space. Prompt maps plant that
direction in a rectangular foreground region over random background noise;
input maps plant the same direction (plus optional noise of amplitude sigma)
at a random location. Ground-truth masks mark the planted region at pixel
resolution, so a perfect pipeline recovers every instance exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ParamError
from .tensor_io import FeatureMap, ImageGeometry, SegMask, SourceTag, write_feature_map, write_mask


def make_planted_dataset(
    root,
    *,
    images: int = 20,
    grid: int = 16,
    channels: int = 16,
    region: int = 6,
    patch: int = 4,
    sigma: float = 0.0,
    seed: int = 0,
    classes: int = 4,
    folds: int = 4,
    prompt_set_id: str | None = None,
) -> Path:
    """Write feature files, masks and a manifest under root; returns the manifest path."""
    if not 1 <= region <= grid:
        raise ParamError(f"region must be in [1, grid={grid}], got {region}")
    if patch < 1 or channels < 1 or grid < 1:
        raise ParamError("grid, channels and patch must all be >= 1")
    if classes < 1 or folds < 1 or images < classes:
        raise ParamError(f"need images >= classes >= 1 and folds >= 1, got "
                         f"images={images} classes={classes} folds={folds}")
    if sigma < 0:
        raise ParamError(f"sigma must be >= 0, got {sigma}")

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    pixels = grid * patch
    geometry = ImageGeometry(pixels, pixels)

    directions = rng.standard_normal((classes, channels))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)

    def region_mask(r0: int, c0: int) -> SegMask:
        m = np.zeros((pixels, pixels), dtype=np.uint8)
        m[r0 * patch : (r0 + region) * patch, c0 * patch : (c0 + region) * patch] = 1
        return SegMask(m)

    def planted_map(direction: np.ndarray, r0: int, c0: int, noise: float) -> FeatureMap:
        data = rng.standard_normal((grid, grid, channels))
        block = np.broadcast_to(direction, (region, region, channels)).copy()
        if noise > 0:
            block = block + noise * rng.standard_normal(block.shape)
        data[r0 : r0 + region, c0 : c0 + region, :] = block
        return FeatureMap(data.astype(np.float32), SourceTag.FUSED, geometry)

    entries = []
    prompt_files = []
    for ci in range(classes):
        r0, c0 = (int(v) for v in rng.integers(0, grid - region + 1, size=2))
        prompt_fm = planted_map(directions[ci], r0, c0, noise=0.0)
        fm_path = root / f"prompt_c{ci}.ipft"
        mask_path = root / f"prompt_c{ci}_mask.pgm"
        write_feature_map(prompt_fm, fm_path)
        write_mask(region_mask(r0, c0), mask_path)
        prompt_files.append((fm_path.name, mask_path.name))

    for j in range(images):
        ci = j % classes
        r0, c0 = (int(v) for v in rng.integers(0, grid - region + 1, size=2))
        input_fm = planted_map(directions[ci], r0, c0, noise=sigma)
        input_path = root / f"input_{j:03d}.ipft"
        gt_path = root / f"gt_{j:03d}.pgm"
        write_feature_map(input_fm, input_path)
        write_mask(region_mask(r0, c0), gt_path)
        entries.append(
            {
                "input_feature_path": input_path.name,
                "prompt_feature_path": prompt_files[ci][0],
                "prompt_mask_path": prompt_files[ci][1],
                "gt_mask_path": gt_path.name,
                "class_id": f"class{ci}",
                "fold_id": str(ci % folds),
            }
        )

    manifest = {
        "version": 1,
        "prompt_set_id": prompt_set_id or f"synthetic-seed{seed}",
        "folds": [str(f) for f in range(folds)],
        "entries": entries,
    }
    manifest_path = root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path
